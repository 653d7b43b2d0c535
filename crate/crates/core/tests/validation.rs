use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use xpr_core::detect::{detect_mpcs, DetectionConfig, LinkMpcs};
use xpr_core::estimate::{fit_campaign, FitOptions, ModelSelection};
use xpr_core::synthgen::{generate_campaign, GenConfig};
use xpr_core::validate::{error_metric, synthesize_cross_power, total_cross_power, CrossPowerKind};

fn detected(config: &GenConfig) -> Vec<LinkMpcs> {
    generate_campaign(config)
        .unwrap()
        .links
        .iter()
        .map(|l| LinkMpcs {
            meta: l.padp.meta().clone(),
            mpcs: detect_mpcs(&l.padp, &DetectionConfig::for_link(l.padp.meta())).unwrap(),
        })
        .collect()
}

fn exact(kind: CrossPowerKind) -> Option<f64> {
    match kind {
        CrossPowerKind::Exact(c) => Some(c),
        CrossPowerKind::Censored { .. } => None,
    }
}

#[test]
fn measured_total_never_exceeds_planted_total() {
    let g = generate_campaign(&GenConfig {
        n_links: 4,
        seed: 2,
        ..Default::default()
    })
    .unwrap();
    for link in &g.links {
        let truth = link.truth_mpcs().unwrap();
        let planted: f64 = link
            .paths
            .iter()
            .map(|p| 10f64.powf(p.p_cross / 10.0))
            .sum::<f64>();
        if let Some(c) = exact(total_cross_power(&truth).kind) {
            assert!(c <= 10.0 * planted.log10() + 1e-9);
        }
    }
}

#[test]
fn measured_totals_are_calibrated_against_synthesized_ones() {
    // Under the generating model the measured total is one more draw from the
    // synthesized distribution, so its rank among the draws is uniform.
    let config = GenConfig {
        n_links: 30,
        paths_per_link: xpr_core::synthgen::PathCount::Fixed(60),
        seed: 31,
        ..Default::default()
    };
    let g = generate_campaign(&config).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ranks = Vec::new();
    for link in &g.links {
        let truth = link.truth_mpcs().unwrap();
        let Some(measured) = exact(total_cross_power(&truth).kind) else {
            continue;
        };
        let totals: Vec<f64> = (0..100)
            .filter_map(|_| {
                exact(
                    synthesize_cross_power(
                        &truth.meta.link_id,
                        &truth.mpcs,
                        &config.truth_model,
                        truth.meta.noise_threshold_db,
                        &mut rng,
                    )
                    .unwrap()
                    .kind,
                )
            })
            .collect();
        let below = totals.iter().filter(|&&t| t < measured).count();
        ranks.push(below as f64 / totals.len() as f64);
    }
    assert!(ranks.len() >= 25, "{} exact links", ranks.len());
    let mean = ranks.iter().sum::<f64>() / ranks.len() as f64;
    assert!((mean - 0.5).abs() <= 0.15, "mean rank {mean}: {ranks:?}");
}

#[test]
fn generating_model_has_small_error_mean() {
    let config = GenConfig {
        n_links: 10,
        seed: 41,
        ..Default::default()
    };
    let links = detected(&config);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let m = error_metric(&links, &config.truth_model, 100, &mut rng).unwrap();
    assert!(m.mu_eps.abs() <= 1.5, "{m:?}");
    assert_eq!(m.n_links, 10);
}

#[test]
fn model1_overestimates_relative_to_model2() {
    let links = detected(&GenConfig {
        seed: 42,
        ..Default::default()
    });
    let row = fit_campaign(&links, ModelSelection::Both, &FitOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let e1 = error_metric(&links, &row.model1.unwrap().model, 100, &mut rng).unwrap();
    let e2 = error_metric(&links, &row.model2.unwrap().model, 100, &mut rng).unwrap();
    assert!(e1.mu_eps > e2.mu_eps, "{} vs {}", e1.mu_eps, e2.mu_eps);
}
