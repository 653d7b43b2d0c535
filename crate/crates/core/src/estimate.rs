//! Tobit maximum-likelihood fitting of the XPR models.
//!
//! Every detected path contributes one term to the log-likelihood: the
//! normal log-density for a measured XPR, the log upper-tail probability for
//! an XPR known only from below (cross polarization under the noise
//! threshold), and the log-CDF for an XPR known only from above (main
//! polarization under the threshold).

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::detect::{census, LinkMpcs, Mpc, MpcType};
use crate::error::{Error, Result};
use crate::models::{mean_xpr, XprModel};
use crate::normal;
use crate::optim::{multi_start, Bounds, NelderMeadOptions};
use crate::padp::{fmt_f64, fspl_at_delay, CampaignMeta};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObservationKind {
    /// Measured XPR, dB.
    Exact(f64),
    /// XPR exceeds this bound, dB.
    RightCensored(f64),
    /// XPR is below this bound, dB.
    LeftCensored(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CensoredObservation {
    pub kind: ObservationKind,
    /// Excess loss in dB. For left-censored observations this is a lower
    /// bound on the path's excess loss, since its main amplitude is unknown.
    pub l_ex: Option<f64>,
}

impl CensoredObservation {
    pub fn exact(xpr: f64, l_ex: f64) -> Self {
        CensoredObservation {
            kind: ObservationKind::Exact(xpr),
            l_ex: Some(l_ex),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.kind, ObservationKind::Exact(_))
    }
}

/// How model 2 treats observations whose main polarization is censored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Type3Mode {
    /// Evaluate the mean at the excess-loss lower bound `−P_th − FSPL(τ)`.
    #[default]
    Bound,
    /// Leave type 3 paths out of the model 2 fit.
    Drop,
}

impl Type3Mode {
    pub fn name(self) -> &'static str {
        match self {
            Type3Mode::Bound => "bound",
            Type3Mode::Drop => "drop",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bound" => Some(Type3Mode::Bound),
            "drop" => Some(Type3Mode::Drop),
            _ => None,
        }
    }
}

/// Convert one detected path into a censored XPR observation.
pub fn observation_from_mpc(mpc: &Mpc, meta: &CampaignMeta) -> Result<CensoredObservation> {
    let p_th = meta.noise_threshold_db;
    let missing = |what: &str| Error::Domain(format!("type {} MPC without {what}", mpc.mpc_type.code()));
    Ok(match mpc.mpc_type {
        MpcType::Type1 => {
            let m = mpc.p_main.ok_or_else(|| missing("main amplitude"))?;
            let c = mpc.p_cross.ok_or_else(|| missing("cross amplitude"))?;
            CensoredObservation {
                kind: ObservationKind::Exact(m - c),
                l_ex: Some(mpc.excess_loss.ok_or_else(|| missing("excess loss"))?),
            }
        }
        MpcType::Type2 => {
            let m = mpc.p_main.ok_or_else(|| missing("main amplitude"))?;
            CensoredObservation {
                kind: ObservationKind::RightCensored(m - p_th),
                l_ex: Some(mpc.excess_loss.ok_or_else(|| missing("excess loss"))?),
            }
        }
        MpcType::Type3 => {
            let c = mpc.p_cross.ok_or_else(|| missing("cross amplitude"))?;
            let l_bound = -p_th - fspl_at_delay(mpc.tau, meta.center_frequency)?;
            CensoredObservation {
                kind: ObservationKind::LeftCensored(p_th - c),
                l_ex: Some(l_bound),
            }
        }
    })
}

pub fn observations_from_link(link: &LinkMpcs) -> Result<Vec<CensoredObservation>> {
    link.mpcs
        .iter()
        .map(|m| observation_from_mpc(m, &link.meta))
        .collect()
}

fn term(kind: ObservationKind, mu: f64, sigma: f64, ln_sigma: f64) -> f64 {
    match kind {
        ObservationKind::Exact(x) => -ln_sigma + normal::ln_pdf((x - mu) / sigma),
        ObservationKind::RightCensored(b) => normal::ln_sf((b - mu) / sigma),
        ObservationKind::LeftCensored(b) => normal::ln_cdf((b - mu) / sigma),
    }
}

/// Censored log-likelihood (nats) of `observations` under `model`.
pub fn log_likelihood(model: &XprModel, observations: &[CensoredObservation]) -> Result<f64> {
    model.validate()?;
    let sigma = model.sigma();
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    let ln_sigma = sigma.ln();
    let mut total = 0.0;
    for obs in observations {
        let mu = match model {
            XprModel::Model1 { mu1, .. } => *mu1,
            XprModel::Model2 { .. } => {
                let l = obs
                    .l_ex
                    .ok_or_else(|| Error::Domain("model 2 needs an excess loss per observation".into()))?;
                mean_xpr(model, l)
            }
        };
        total += term(obs.kind, mu, sigma, ln_sigma);
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Number of simplex starts, at least 5.
    pub n_starts: usize,
    /// Seeds the start jitter.
    pub seed: u64,
    pub type3_mode: Type3Mode,
    pub simplex: NelderMeadOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            n_starts: 5,
            seed: 0x5eed_f17,
            type3_mode: Type3Mode::Bound,
            simplex: NelderMeadOptions::default(),
        }
    }
}

/// Search box for the location and scale of a constant-mean fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantMeanBox {
    pub mu: (f64, f64),
    pub sigma: (f64, f64),
}

impl ConstantMeanBox {
    pub const MODEL1: ConstantMeanBox = ConstantMeanBox {
        mu: (0.0, 60.0),
        sigma: (0.5, 20.0),
    };
}

pub const MODEL2_ALPHA_RANGE: (f64, f64) = (-2.0, 0.5);
pub const MODEL2_BETA_RANGE: (f64, f64) = (0.0, 60.0);
pub const MODEL2_SIGMA_RANGE: (f64, f64) = (0.5, 20.0);

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: XprModel,
    /// Attained log-likelihood, nats.
    pub loglik: f64,
    /// Observations used per kind: (exact, right-censored, left-censored).
    pub counts: (usize, usize, usize),
    pub converged: bool,
    pub n_restarts_used: usize,
}

impl FitResult {
    /// `key = value` block with the estimates and optimizer diagnostics.
    pub fn to_block(&self, header: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[{header}]");
        out.push_str(&self.model.to_param_string());
        let _ = writeln!(out, "loglik = {}", fmt_f64(self.loglik));
        let _ = writeln!(out, "converged = {}", self.converged);
        let _ = writeln!(out, "n_restarts_used = {}", self.n_restarts_used);
        let _ = writeln!(out, "n_exact = {}", self.counts.0);
        let _ = writeln!(out, "n_right_censored = {}", self.counts.1);
        let _ = writeln!(out, "n_left_censored = {}", self.counts.2);
        out
    }
}

fn kind_counts(obs: &[CensoredObservation]) -> (usize, usize, usize) {
    obs.iter().fold((0, 0, 0), |(a, b, c), o| match o.kind {
        ObservationKind::Exact(_) => (a + 1, b, c),
        ObservationKind::RightCensored(_) => (a, b + 1, c),
        ObservationKind::LeftCensored(_) => (a, b, c + 1),
    })
}

fn check_finite(obs: &[CensoredObservation]) -> Result<()> {
    for o in obs {
        let v = match o.kind {
            ObservationKind::Exact(v)
            | ObservationKind::RightCensored(v)
            | ObservationKind::LeftCensored(v) => v,
        };
        if !v.is_finite() || o.l_ex.is_some_and(|l| !l.is_finite()) {
            return Err(Error::Domain(format!("non-finite observation {o:?}")));
        }
    }
    Ok(())
}

fn mean_and_ml_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Fitted constant mean and standard deviation of censored data.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantMeanFit {
    pub mu: f64,
    pub sigma: f64,
    pub loglik: f64,
    pub converged: bool,
    pub n_restarts_used: usize,
}

/// Tobit fit of a constant-mean normal within `bounds`.
pub fn fit_constant_mean(
    observations: &[CensoredObservation],
    bounds: ConstantMeanBox,
    opts: &FitOptions,
) -> Result<ConstantMeanFit> {
    check_finite(observations)?;
    if observations.len() < 2 {
        return Err(Error::Unidentifiable(format!(
            "{} observation(s); at least 2 are needed",
            observations.len()
        )));
    }
    let exact: Vec<f64> = observations
        .iter()
        .filter_map(|o| match o.kind {
            ObservationKind::Exact(x) => Some(x),
            _ => None,
        })
        .collect();
    if exact.is_empty() {
        return Err(Error::Unidentifiable(
            "no uncensored observation among the data".into(),
        ));
    }
    let (m0, s0) = mean_and_ml_std(&exact);
    let s0 = if s0 > 0.0 { s0 } else { 1.0 };

    let kinds: Vec<ObservationKind> = observations.iter().map(|o| o.kind).collect();
    let objective = |x: &[f64]| -> f64 {
        let (mu, sigma) = (x[0], x[1]);
        let ln_sigma = sigma.ln();
        -kinds.iter().map(|k| term(*k, mu, sigma, ln_sigma)).sum::<f64>()
    };

    let box_ = Bounds::new(
        vec![bounds.mu.0, bounds.sigma.0],
        vec![bounds.mu.1, bounds.sigma.1],
    );
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n_starts = opts.n_starts.max(5);
    let mut starts = vec![vec![m0, s0]];
    while starts.len() < n_starts {
        starts.push(vec![
            m0 + rng.random_range(-5.0..5.0),
            s0 * rng.random_range(0.7..1.5),
        ]);
    }
    for s in &mut starts {
        box_.project(s);
    }
    let r = multi_start(objective, &starts, &[2.0, 1.0], &box_, &opts.simplex, 1);
    Ok(ConstantMeanFit {
        mu: r.best.x[0],
        sigma: r.best.x[1],
        loglik: -r.best.f,
        converged: r.best.converged,
        n_restarts_used: r.n_starts,
    })
}

/// Fit model 1: constant mean `mu1`, standard deviation `sigma1`.
pub fn fit_model1(observations: &[CensoredObservation], opts: &FitOptions) -> Result<FitResult> {
    let fit = fit_constant_mean(observations, ConstantMeanBox::MODEL1, opts)?;
    Ok(FitResult {
        model: XprModel::Model1 {
            mu1: fit.mu,
            sigma1: fit.sigma,
        },
        loglik: fit.loglik,
        counts: kind_counts(observations),
        converged: fit.converged,
        n_restarts_used: fit.n_restarts_used,
    })
}

/// Smallest spread of excess loss among exact observations for model 2, dB.
pub const MIN_EXCESS_LOSS_SPREAD: f64 = 5.0;

/// Fit model 2: mean `alpha2·L_ex + beta2` clipped at 0, standard deviation `sigma2`.
pub fn fit_model2(observations: &[CensoredObservation], opts: &FitOptions) -> Result<FitResult> {
    check_finite(observations)?;
    let used: Vec<CensoredObservation> = observations
        .iter()
        .filter(|o| {
            !(opts.type3_mode == Type3Mode::Drop
                && matches!(o.kind, ObservationKind::LeftCensored(_)))
        })
        .copied()
        .collect();
    if used.len() < 3 {
        return Err(Error::IllConditioned(format!(
            "{} observation(s); at least 3 are needed",
            used.len()
        )));
    }
    let mut pairs = Vec::new();
    let mut data = Vec::with_capacity(used.len());
    for o in &used {
        let l = o
            .l_ex
            .ok_or_else(|| Error::Domain("model 2 needs an excess loss per observation".into()))?;
        if let ObservationKind::Exact(x) = o.kind {
            pairs.push((l, x));
        }
        data.push((o.kind, l));
    }
    if pairs.is_empty() {
        return Err(Error::Unidentifiable(
            "no uncensored observation among the data".into(),
        ));
    }
    let (lo, hi) = pairs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (l, _)| {
            (lo.min(*l), hi.max(*l))
        });
    if hi - lo < MIN_EXCESS_LOSS_SPREAD {
        return Err(Error::IllConditioned(format!(
            "excess loss of uncensored paths spans {:.3} dB, need {MIN_EXCESS_LOSS_SPREAD} dB",
            hi - lo
        )));
    }

    // least-squares line through the uncensored (L_ex, XPR) pairs
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let resid = (pairs
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let resid = if resid > 0.0 { resid } else { 1.0 };
    let (_, spread) = mean_and_ml_std(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());

    let objective = |x: &[f64]| -> f64 {
        let model = XprModel::Model2 {
            alpha2: x[0],
            beta2: x[1],
            sigma2: x[2],
        };
        let sigma = x[2];
        let ln_sigma = sigma.ln();
        -data
            .iter()
            .map(|(k, l)| term(*k, mean_xpr(&model, *l), sigma, ln_sigma))
            .sum::<f64>()
    };

    let box_ = Bounds::new(
        vec![MODEL2_ALPHA_RANGE.0, MODEL2_BETA_RANGE.0, MODEL2_SIGMA_RANGE.0],
        vec![MODEL2_ALPHA_RANGE.1, MODEL2_BETA_RANGE.1, MODEL2_SIGMA_RANGE.1],
    );
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n_starts = opts.n_starts.max(5);
    // The least-squares line, then the constant-mean point (α = 0) that
    // nests model 1, then jittered copies of the line.
    let mut starts = vec![
        vec![slope, intercept, resid],
        vec![0.0, my, if spread > 0.0 { spread } else { 1.0 }],
    ];
    while starts.len() < n_starts {
        starts.push(vec![
            slope + rng.random_range(-0.2..0.2),
            intercept + rng.random_range(-5.0..5.0),
            resid * rng.random_range(0.7..1.5),
        ]);
    }
    for s in &mut starts {
        box_.project(s);
    }
    let r = multi_start(objective, &starts, &[0.1, 2.0, 1.0], &box_, &opts.simplex, 2);
    Ok(FitResult {
        model: XprModel::Model2 {
            alpha2: r.best.x[0],
            beta2: r.best.x[1],
            sigma2: r.best.x[2],
        },
        loglik: -r.best.f,
        counts: kind_counts(&used),
        converged: r.best.converged,
        n_restarts_used: r.n_starts,
    })
}

/// Which models a campaign fit runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSelection {
    Model1,
    Model2,
    Both,
}

impl ModelSelection {
    pub fn includes(self, model: u8) -> bool {
        matches!(
            (self, model),
            (ModelSelection::Both, _) | (ModelSelection::Model1, 1) | (ModelSelection::Model2, 2)
        )
    }
}

/// Per-campaign record with the fields of the campaign summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignRow {
    pub campaign_id: String,
    /// Hz
    pub center_frequency: f64,
    /// Hz
    pub bandwidth: f64,
    pub bs_height: f64,
    pub ms_height: f64,
    pub d_min: f64,
    pub d_max: f64,
    /// Strongest detected main amplitude above `P_th`, dB.
    pub dynamic_range_db: f64,
    pub links: usize,
    pub n_type1: usize,
    pub n_type2: usize,
    pub n_type3: usize,
    pub model1: Option<FitResult>,
    pub model2: Option<FitResult>,
    pub type3_mode: Type3Mode,
    /// Filled by the validation step.
    pub mu_eps1: Option<f64>,
    pub mu_eps2: Option<f64>,
}

pub const CAMPAIGN_TABLE_HEADER: [&str; 20] = [
    "campaign_id",
    "f_ghz",
    "bw_ghz",
    "h_bs_m",
    "h_ms_m",
    "d_min_m",
    "d_max_m",
    "dynamic_range_db",
    "links",
    "n_xpr_measured",
    "n_cross_censored",
    "n_main_censored",
    "mu1_db",
    "sigma1_db",
    "mu_eps1_db",
    "alpha2",
    "beta2_db",
    "sigma2_db",
    "mu_eps2_db",
    "type3_mode",
];

fn na(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), fmt_f64)
}

impl CampaignRow {
    pub fn to_record(&self) -> Vec<String> {
        let (mu1, s1) = match self.model1.as_ref().map(|f| f.model) {
            Some(XprModel::Model1 { mu1, sigma1 }) => (Some(mu1), Some(sigma1)),
            _ => (None, None),
        };
        let (a2, b2, s2) = match self.model2.as_ref().map(|f| f.model) {
            Some(XprModel::Model2 {
                alpha2,
                beta2,
                sigma2,
            }) => (Some(alpha2), Some(beta2), Some(sigma2)),
            _ => (None, None, None),
        };
        vec![
            self.campaign_id.clone(),
            fmt_f64(self.center_frequency / 1e9),
            fmt_f64(self.bandwidth / 1e9),
            fmt_f64(self.bs_height),
            fmt_f64(self.ms_height),
            fmt_f64(self.d_min),
            fmt_f64(self.d_max),
            fmt_f64(self.dynamic_range_db),
            self.links.to_string(),
            self.n_type1.to_string(),
            self.n_type2.to_string(),
            self.n_type3.to_string(),
            na(mu1),
            na(s1),
            na(self.mu_eps1),
            na(a2),
            na(b2),
            na(s2),
            na(self.mu_eps2),
            self.type3_mode.name().into(),
        ]
    }

    /// Structured block per fit with likelihood and convergence diagnostics.
    pub fn fit_blocks(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "campaign_id = \"{}\"", self.campaign_id);
        let _ = writeln!(out, "type3_mode = \"{}\"", self.type3_mode.name());
        for (name, fit) in [("model1", &self.model1), ("model2", &self.model2)] {
            if let Some(f) = fit {
                out.push('\n');
                out.push_str(&f.to_block(name));
            }
        }
        out
    }
}

/// Render rows as a comma-separated table with a header row.
pub fn campaign_table(rows: &[CampaignRow]) -> String {
    let mut out = CAMPAIGN_TABLE_HEADER.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_record().join(","));
        out.push('\n');
    }
    out
}

/// Census plus model fits for all links of one campaign.
pub fn fit_campaign(
    links: &[LinkMpcs],
    which: ModelSelection,
    opts: &FitOptions,
) -> Result<CampaignRow> {
    let first = links
        .first()
        .ok_or_else(|| Error::Domain("campaign has no links".into()))?;
    let all: Vec<&Mpc> = links.iter().flat_map(|l| &l.mpcs).collect();
    if all.is_empty() {
        return Err(Error::Domain(format!(
            "campaign {} has no detected MPCs",
            first.meta.campaign_id
        )));
    }
    let mut observations = Vec::with_capacity(all.len());
    for link in links {
        observations.extend(observations_from_link(link)?);
    }
    let owned: Vec<Mpc> = all.iter().map(|m| (*m).clone()).collect();
    let (n1, n2, n3) = census(&owned);
    let dynamic_range_db = links
        .iter()
        .flat_map(|l| {
            l.mpcs
                .iter()
                .filter_map(move |m| m.p_main.map(|p| p - l.meta.noise_threshold_db))
        })
        .fold(f64::NAN, f64::max);
    let d_min = links
        .iter()
        .map(|l| l.meta.link_distance)
        .fold(f64::INFINITY, f64::min);
    let d_max = links
        .iter()
        .map(|l| l.meta.link_distance)
        .fold(f64::NEG_INFINITY, f64::max);

    let model1 = if which.includes(1) {
        Some(fit_model1(&observations, opts)?)
    } else {
        None
    };
    let model2 = if which.includes(2) {
        Some(fit_model2(&observations, opts)?)
    } else {
        None
    };

    Ok(CampaignRow {
        campaign_id: first.meta.campaign_id.clone(),
        center_frequency: first.meta.center_frequency,
        bandwidth: first.meta.bandwidth,
        bs_height: first.meta.bs_height,
        ms_height: first.meta.ms_height,
        d_min,
        d_max,
        dynamic_range_db,
        links: links.len(),
        n_type1: n1,
        n_type2: n2,
        n_type3: n3,
        model1,
        model2,
        type3_mode: opts.type3_mode,
        mu_eps1: None,
        mu_eps2: None,
    })
}
