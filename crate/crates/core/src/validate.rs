//! Model comparison through the total cross-polarization power of a link.
//!
//! For each link the measured total `C_tot` is compared with totals `C̃_tot`
//! synthesized by redrawing every path's XPR from a model. The dB error
//! `ε = C̃_tot − C_tot` is censored whenever either total is, and its mean
//! `μ_ε` is estimated by a constant-mean Tobit fit.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::detect::{LinkMpcs, Mpc};
use crate::error::{Error, Result};
use crate::estimate::{
    fit_constant_mean, CensoredObservation, ConstantMeanBox, FitOptions, ObservationKind,
};
use crate::models::{sample_xpr, XprModel};
use crate::padp::fmt_f64;

/// Default number of synthesized totals per link.
pub const DEFAULT_REALIZATIONS: usize = 100;

const EPSILON_BOX: ConstantMeanBox = ConstantMeanBox {
    mu: (-100.0, 100.0),
    sigma: (0.01, 100.0),
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CrossPowerKind {
    /// Total power in dB, above the threshold.
    Exact(f64),
    /// Every component fell below this threshold, dB.
    Censored { below: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossPowerObservation {
    pub link_id: String,
    pub kind: CrossPowerKind,
}

fn power_sum_db(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut any = false;
    let sum: f64 = values
        .inspect(|_| any = true)
        .map(|p| 10f64.powf(p / 10.0))
        .sum();
    any.then(|| 10.0 * sum.log10())
}

fn observation(link_id: &str, total: Option<f64>, p_th: f64) -> CrossPowerObservation {
    CrossPowerObservation {
        link_id: link_id.to_string(),
        kind: match total {
            Some(c) => CrossPowerKind::Exact(c),
            None => CrossPowerKind::Censored { below: p_th },
        },
    }
}

/// Measured total: power sum of all present cross amplitudes.
pub fn total_cross_power(link: &LinkMpcs) -> CrossPowerObservation {
    let p_th = link.meta.noise_threshold_db;
    let total = power_sum_db(link.mpcs.iter().filter_map(|m| m.p_cross).filter(|p| *p > p_th));
    observation(&link.meta.link_id, total, p_th)
}

fn canonical_order(mpcs: &[Mpc]) -> Vec<&Mpc> {
    let key = |m: &Mpc| {
        [
            m.tau,
            m.phi,
            m.p_main.unwrap_or(f64::NEG_INFINITY),
            m.p_cross.unwrap_or(f64::NEG_INFINITY),
        ]
    };
    let mut sorted: Vec<&Mpc> = mpcs.iter().collect();
    sorted.sort_by(|a, b| {
        key(a)
            .iter()
            .zip(key(b).iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    sorted
}

/// One synthesized total. Paths with a main amplitude get a cross amplitude
/// of `p_main − XPR` with the XPR drawn from `model`; paths without keep
/// their measured cross amplitude. Components at or below `p_th` are left out.
///
/// Draws are assigned in a canonical path order, so the result does not
/// depend on the order of `mpcs`.
pub fn synthesize_cross_power<R: Rng + ?Sized>(
    link_id: &str,
    mpcs: &[Mpc],
    model: &XprModel,
    p_th: f64,
    rng: &mut R,
) -> Result<CrossPowerObservation> {
    let mut components = Vec::with_capacity(mpcs.len());
    for m in canonical_order(mpcs) {
        let p = match m.p_main {
            Some(main) => {
                let l = m.excess_loss.ok_or_else(|| {
                    Error::Domain("path with a main amplitude lacks its excess loss".into())
                })?;
                main - sample_xpr(model, l, rng)
            }
            None => match m.p_cross {
                Some(c) => c,
                None => continue,
            },
        };
        if p > p_th {
            components.push(p);
        }
    }
    Ok(observation(link_id, power_sum_db(components.into_iter()), p_th))
}

/// Censored error observation, or `None` when both totals are censored.
pub fn epsilon_observation(
    measured: &CrossPowerObservation,
    synthesized: &CrossPowerObservation,
    p_th: f64,
) -> Option<CensoredObservation> {
    let kind = match (measured.kind, synthesized.kind) {
        (CrossPowerKind::Exact(c), CrossPowerKind::Exact(s)) => ObservationKind::Exact(s - c),
        (CrossPowerKind::Censored { .. }, CrossPowerKind::Exact(s)) => {
            ObservationKind::RightCensored(s - p_th)
        }
        (CrossPowerKind::Exact(c), CrossPowerKind::Censored { .. }) => {
            ObservationKind::LeftCensored(p_th - c)
        }
        (CrossPowerKind::Censored { .. }, CrossPowerKind::Censored { .. }) => return None,
    };
    Some(CensoredObservation { kind, l_ex: None })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMetric {
    /// dB
    pub mu_eps: f64,
    /// dB
    pub sigma_eps: f64,
    pub n_links: usize,
    /// Realizations with both totals censored.
    pub n_dropped: usize,
    pub n_observations: usize,
}

/// Estimate `(μ_ε, σ_ε)` of `model` over `links`, `n_realizations` per link.
///
/// Each link draws from its own generator seeded from `rng`. Without any
/// censored error the estimate is the sample mean and ML standard deviation,
/// which is where the Tobit likelihood peaks in that case.
pub fn error_metric<R: Rng + ?Sized>(
    links: &[LinkMpcs],
    model: &XprModel,
    n_realizations: usize,
    rng: &mut R,
) -> Result<ErrorMetric> {
    model.validate()?;
    if n_realizations == 0 {
        return Err(Error::Domain("at least one realization per link is needed".into()));
    }
    let mut observations = Vec::with_capacity(links.len() * n_realizations);
    let mut n_dropped = 0;
    for link in links {
        let mut link_rng = ChaCha8Rng::seed_from_u64(rng.random());
        let p_th = link.meta.noise_threshold_db;
        let measured = total_cross_power(link);
        for _ in 0..n_realizations {
            let synth =
                synthesize_cross_power(&link.meta.link_id, &link.mpcs, model, p_th, &mut link_rng)?;
            match epsilon_observation(&measured, &synth, p_th) {
                Some(o) => observations.push(o),
                None => n_dropped += 1,
            }
        }
    }
    if observations.is_empty() {
        return Err(Error::Unestimable(
            "every realization has both totals censored".into(),
        ));
    }

    let exact: Vec<f64> = observations
        .iter()
        .filter_map(|o| match o.kind {
            ObservationKind::Exact(e) => Some(e),
            _ => None,
        })
        .collect();
    let (mu_eps, sigma_eps) = if exact.len() == observations.len() {
        let n = exact.len() as f64;
        let mean = exact.iter().sum::<f64>() / n;
        let var = exact.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    } else {
        let fit = fit_constant_mean(&observations, EPSILON_BOX, &FitOptions::default())
            .map_err(|e| match e {
                Error::Unidentifiable(m) => Error::Unestimable(m),
                other => other,
            })?;
        (fit.mu, fit.sigma)
    };
    Ok(ErrorMetric {
        mu_eps,
        sigma_eps,
        n_links: links.len(),
        n_dropped,
        n_observations: observations.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub campaign_id: String,
    pub model: u8,
    pub metric: ErrorMetric,
}

pub const VALIDATION_HEADER: [&str; 6] = [
    "campaign_id",
    "model",
    "mu_eps_db",
    "sigma_eps_db",
    "n_links",
    "n_dropped",
];

/// Comma-separated validation report with a header row.
pub fn validation_report(rows: &[ValidationRow]) -> String {
    let mut out = VALIDATION_HEADER.join(",");
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.campaign_id,
            r.model,
            fmt_f64(r.metric.mu_eps),
            fmt_f64(r.metric.sigma_eps),
            r.metric.n_links,
            r.metric.n_dropped
        );
    }
    out
}
