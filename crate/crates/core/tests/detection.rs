use proptest::prelude::*;

use xpr_core::detect::{delay_profile, detect_mpcs, DetectionConfig, Mpc};
use xpr_core::padp::excess_loss;
use xpr_core::synthgen::{generate_campaign, ExcessLossDist, GenConfig, PathCount};
use xpr_core::XprModel;

fn small(seed: u64, paths: usize) -> GenConfig {
    GenConfig {
        n_links: 1,
        paths_per_link: PathCount::Fixed(paths),
        n_delay: 260,
        n_angle: 90,
        delta_phi: 4.0,
        distance_range: (8.0, 20.0),
        excess_loss: ExcessLossDist::Uniform {
            low: 0.0,
            high: 30.0,
        },
        seed,
        ..Default::default()
    }
}

fn bins(m: &Mpc, dt: f64, dphi: f64) -> (usize, usize) {
    ((m.tau / dt).round() as usize, (m.phi / dphi).round() as usize)
}

#[test]
fn direct_path_has_zero_excess_loss() {
    let g = generate_campaign(&small(3, 0)).unwrap();
    let link = &g.links[0];
    let meta = link.padp.meta();
    let d = &link.direct;
    let measured = link.padp.main_db().get(d.delay_bin, d.angle_bin);
    let l = excess_loss(measured, meta.direct_path_delay(), meta).unwrap();
    assert!(l.abs() < 0.01, "{l}");
}

#[test]
fn profile_peaks_at_a_single_planted_path() {
    let g = generate_campaign(&small(4, 1)).unwrap();
    let link = &g.links[0];
    let profile = delay_profile(&link.padp);
    let after = link.direct.delay_bin + 3;
    let argmax = (after..profile.len())
        .max_by(|&a, &b| profile[a].total_cmp(&profile[b]))
        .unwrap();
    assert_eq!(argmax, link.paths[0].delay_bin);
}

#[test]
fn two_separated_paths_are_both_recovered() {
    let g = generate_campaign(&small(5, 2)).unwrap();
    let link = &g.links[0];
    let padp = &link.padp;
    let found = detect_mpcs(padp, &DetectionConfig::for_link(padp.meta())).unwrap();
    let cells: Vec<_> = found
        .iter()
        .map(|m| bins(m, padp.delta_tau(), padp.delta_phi()))
        .collect();
    for p in &link.paths {
        assert!(cells.contains(&(p.delay_bin, p.angle_bin)), "{cells:?}");
    }
}

#[test]
fn fifty_planted_paths_recovered_within_one_bin() {
    let config = GenConfig {
        n_links: 3,
        paths_per_link: PathCount::Fixed(50),
        excess_loss: ExcessLossDist::Uniform {
            low: 0.0,
            high: 15.0,
        },
        noise_threshold_db: -140.0,
        noise_floor_db: -155.0,
        seed: 21,
        ..Default::default()
    };
    let g = generate_campaign(&config).unwrap();
    for link in &g.links {
        let padp = &link.padp;
        let found = detect_mpcs(padp, &DetectionConfig::for_link(padp.meta())).unwrap();
        let cells: Vec<_> = found
            .iter()
            .map(|m| bins(m, padp.delta_tau(), padp.delta_phi()))
            .collect();
        let recovered = link
            .paths
            .iter()
            .filter(|p| {
                cells.iter().any(|c| {
                    let da = c.1.abs_diff(p.angle_bin);
                    c.0.abs_diff(p.delay_bin) <= 1 && da.min(config.n_angle - da) <= 1
                })
            })
            .count();
        assert!(recovered >= 48, "{recovered} of 50");
    }
}

#[test]
fn detected_amplitudes_match_planted_up_to_noise() {
    let config = GenConfig {
        n_links: 2,
        seed: 8,
        ..Default::default()
    };
    let g = generate_campaign(&config).unwrap();
    for link in &g.links {
        let padp = &link.padp;
        let truth = link.truth_mpcs().unwrap();
        let found = detect_mpcs(padp, &DetectionConfig::for_link(padp.meta())).unwrap();
        for t in &truth.mpcs {
            if let Some(m) = found.iter().find(|m| m.tau == t.tau && m.phi == t.phi) {
                // noise only adds power, and stays well below the threshold
                if let (Some(a), Some(b)) = (m.p_main, t.p_main) {
                    assert!(a >= b - 1e-9 && a - b < 2.0, "{a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn detection_is_deterministic() {
    let g = generate_campaign(&small(11, 8)).unwrap();
    let padp = &g.links[0].padp;
    let c = DetectionConfig::for_link(padp.meta());
    assert_eq!(detect_mpcs(padp, &c).unwrap(), detect_mpcs(padp, &c).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn detection_invariants(seed in 0u64..10_000, paths in 0usize..12, raise in 1.0f64..15.0) {
        let config = GenConfig {
            truth_model: XprModel::AVERAGE,
            ..small(seed, paths)
        };
        let g = generate_campaign(&config).unwrap();
        let padp = &g.links[0].padp;
        let dc = DetectionConfig::for_link(padp.meta());
        let found = detect_mpcs(padp, &dc).unwrap();
        let p_th = padp.meta().noise_threshold_db;

        for m in &found {
            for p in [m.p_main, m.p_cross].into_iter().flatten() {
                prop_assert!(p > p_th);
            }
        }
        let (dt, dphi) = (padp.delta_tau(), padp.delta_phi());
        for (i, a) in found.iter().enumerate() {
            for b in &found[i + 1..] {
                let (ca, cb) = (bins(a, dt, dphi), bins(b, dt, dphi));
                let da = ca.1.abs_diff(cb.1);
                let sep = ca.0.abs_diff(cb.0).max(da.min(config.n_angle - da));
                prop_assert!(sep > dc.removal_half_extent, "{ca:?} {cb:?}");
            }
        }

        let mut raised_meta = padp.meta().clone();
        raised_meta.noise_threshold_db += raise;
        let raised = xpr_core::Padp::new(
            padp.delays().to_vec(),
            padp.azimuths().to_vec(),
            padp.main_db().clone(),
            padp.cross_db().clone(),
            raised_meta,
        ).unwrap();
        let fewer = detect_mpcs(&raised, &dc).unwrap();
        prop_assert!(fewer.len() <= found.len());
    }
}
