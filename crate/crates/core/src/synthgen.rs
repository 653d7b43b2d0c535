//! Synthetic campaigns with known ground truth.
//!
//! Each link gets a direct path at free-space level plus a set of planted
//! paths. Every path occupies one grid cell per polarization, with a skirt
//! 13 dB down on the two neighbouring delay bins at either side, on top of an
//! exponentially distributed noise floor.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};

use crate::detect::{DetectionConfig, LinkMpcs, Mpc};
use crate::error::{Error, Result};
use crate::estimate::{CensoredObservation, ObservationKind};
use crate::models::{sample_xpr, XprModel};
use crate::padp::{fmt_f64, fspl_at_delay, CampaignMeta, Grid, Padp, SPEED_OF_LIGHT};

/// Skirt level relative to the path cell, dB.
pub const SKIRT_DB: f64 = -13.0;
/// Delay bins covered by the skirt on each side of a path.
pub const SKIRT_BINS: usize = 2;

const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

/// Distribution of planted excess loss, dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExcessLossDist {
    /// Exponential with the given mean, truncated at `cap`.
    Exponential { mean: f64, cap: f64 },
    Uniform { low: f64, high: f64 },
    Fixed(f64),
}

impl ExcessLossDist {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ExcessLossDist::Exponential { mean, cap } => mean > 0.0 && cap > 0.0 && cap.is_finite(),
            ExcessLossDist::Uniform { low, high } => low.is_finite() && high.is_finite() && low <= high,
            ExcessLossDist::Fixed(v) => v.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid excess-loss distribution {self:?}")))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ExcessLossDist::Exponential { mean, cap } => {
                // inverse CDF of the exponential truncated to [0, cap]
                let u: f64 = rng.random();
                -mean * (-u * (-(-cap / mean).exp_m1())).ln_1p()
            }
            ExcessLossDist::Uniform { low, high } => {
                if high > low {
                    rng.random_range(low..high)
                } else {
                    low
                }
            }
            ExcessLossDist::Fixed(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathCount {
    Fixed(usize),
    Poisson { mean: f64 },
}

impl PathCount {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        match *self {
            PathCount::Fixed(n) => Ok(n),
            PathCount::Poisson { mean } => {
                let d = Poisson::new(mean)
                    .map_err(|e| Error::Domain(format!("path count mean {mean}: {e}")))?;
                Ok(d.sample(rng) as usize)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub campaign_id: String,
    pub truth_model: XprModel,
    pub n_links: usize,
    pub paths_per_link: PathCount,
    /// Smallest Chebyshev distance between planted paths, and between the
    /// direct path and the earliest planted delay, bins.
    pub min_separation: usize,
    pub excess_loss: ExcessLossDist,
    /// Mean noise power per cell, dB.
    pub noise_floor_db: f64,
    pub noise_threshold_db: f64,
    /// s
    pub delta_tau: f64,
    pub n_delay: usize,
    /// degrees
    pub delta_phi: f64,
    pub n_angle: usize,
    /// Hz
    pub center_frequency: f64,
    /// Hz
    pub bandwidth: f64,
    pub bs_height: f64,
    pub ms_height: f64,
    /// m
    pub distance_range: (f64, f64),
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            campaign_id: "synthetic".into(),
            truth_model: XprModel::AVERAGE,
            n_links: 8,
            paths_per_link: PathCount::Fixed(40),
            min_separation: 13,
            excess_loss: ExcessLossDist::Exponential {
                mean: 15.0,
                cap: 60.0,
            },
            noise_floor_db: -145.0,
            noise_threshold_db: -130.0,
            delta_tau: 1e-9,
            n_delay: 600,
            delta_phi: 1.0,
            n_angle: 360,
            center_frequency: 28e9,
            bandwidth: 1e9,
            bs_height: 4.0,
            ms_height: 1.5,
            distance_range: (10.0, 60.0),
            seed: 1,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        self.truth_model.validate()?;
        self.excess_loss.validate()?;
        if self.n_links == 0 {
            return Err(Error::Domain("n_links must be at least 1".into()));
        }
        if self.min_separation == 0 {
            return Err(Error::Domain("min_separation must be at least 1 bin".into()));
        }
        if !(self.noise_threshold_db > self.noise_floor_db) {
            return Err(Error::Domain(format!(
                "noise threshold {} dB must lie above the noise floor {} dB",
                self.noise_threshold_db, self.noise_floor_db
            )));
        }
        for (name, v) in [
            ("delta_tau", self.delta_tau),
            ("delta_phi", self.delta_phi),
            ("center_frequency", self.center_frequency),
            ("bandwidth", self.bandwidth),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_delay < 2 * SKIRT_BINS + 3 || self.n_angle == 0 {
            return Err(Error::Domain(format!(
                "grid {}×{} is too small",
                self.n_delay, self.n_angle
            )));
        }
        let (lo, hi) = self.distance_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Domain(format!("invalid distance range {lo}..{hi}")));
        }
        Ok(())
    }

    /// Whether planted paths are far enough apart for detection to resolve
    /// each one without interference from its neighbours.
    pub fn is_clean_for(&self, detection: &DetectionConfig) -> bool {
        self.min_separation > 2 * detection.removal_half_extent
    }

    fn wraps(&self) -> bool {
        let span = self.n_angle as f64 * self.delta_phi;
        (span - 360.0).abs() <= 1e-6 * 360.0
    }
}

/// A planted path with its unthresholded amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedPath {
    pub delay_bin: usize,
    pub angle_bin: usize,
    /// s
    pub tau: f64,
    /// degrees
    pub phi: f64,
    pub excess_loss: f64,
    pub xpr: f64,
    pub p_main: f64,
    pub p_cross: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedLink {
    pub padp: Padp,
    pub direct: PlantedPath,
    pub paths: Vec<PlantedPath>,
}

impl GeneratedLink {
    /// Planted paths as they would be classified against the threshold.
    /// Paths with neither amplitude above the threshold are left out.
    pub fn truth_mpcs(&self) -> Result<LinkMpcs> {
        let meta = self.padp.meta();
        let mut mpcs = Vec::new();
        for p in &self.paths {
            if let Some(m) = Mpc::classify(p.tau, p.phi, p.p_main, p.p_cross, meta)? {
                mpcs.push(m);
            }
        }
        Ok(LinkMpcs {
            meta: meta.clone(),
            mpcs,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCampaign {
    pub config: GenConfig,
    pub links: Vec<GeneratedLink>,
}

fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

fn separation(a: (usize, usize), b: (usize, usize), n_angle: usize, wrap: bool) -> usize {
    let dd = a.0.abs_diff(b.0);
    let da = a.1.abs_diff(b.1);
    let da = if wrap { da.min(n_angle - da) } else { da };
    dd.max(da)
}

/// Generate every link of a campaign. Link `i` draws from its own generator
/// seeded from the campaign seed, so links are independent of each other.
pub fn generate_campaign(config: &GenConfig) -> Result<GeneratedCampaign> {
    config.validate()?;
    let mut seeder = ChaCha8Rng::seed_from_u64(config.seed);
    let links = (0..config.n_links)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seeder.random());
            generate_link(config, i, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GeneratedCampaign {
        config: config.clone(),
        links,
    })
}

fn generate_link<R: Rng + ?Sized>(config: &GenConfig, index: usize, rng: &mut R) -> Result<GeneratedLink> {
    let n_delay = config.n_delay;
    let n_angle = config.n_angle;
    let wrap = config.wraps();
    let bin_length = SPEED_OF_LIGHT * config.delta_tau;

    // Snap the distance so the direct path falls on a delay bin.
    let (d_lo, d_hi) = config.distance_range;
    let d_draw = if d_hi > d_lo {
        rng.random_range(d_lo..d_hi)
    } else {
        d_lo
    };
    let k0 = ((d_draw / bin_length).round() as usize).max(1);
    let last_bin = n_delay - 1 - SKIRT_BINS;
    let first_bin = k0 + config.min_separation;
    if k0 > last_bin {
        return Err(Error::Generation(format!(
            "direct path at bin {k0} lies beyond the delay grid of {n_delay} bins"
        )));
    }
    let meta = CampaignMeta {
        campaign_id: config.campaign_id.clone(),
        link_id: format!("{}-L{:03}", config.campaign_id, index + 1),
        center_frequency: config.center_frequency,
        bandwidth: config.bandwidth,
        noise_threshold_db: config.noise_threshold_db,
        bs_height: config.bs_height,
        ms_height: config.ms_height,
        link_distance: k0 as f64 * bin_length,
    };
    let delays: Vec<f64> = (0..n_delay).map(|k| k as f64 * config.delta_tau).collect();
    let azimuths: Vec<f64> = (0..n_angle).map(|j| j as f64 * config.delta_phi).collect();

    let plant = |delay_bin: usize, angle_bin: usize, l: f64, rng: &mut R| -> Result<PlantedPath> {
        let tau = delays[delay_bin];
        let p_main = -(fspl_at_delay(tau, config.center_frequency)? + l);
        let xpr = sample_xpr(&config.truth_model, l, rng);
        Ok(PlantedPath {
            delay_bin,
            angle_bin,
            tau,
            phi: azimuths[angle_bin],
            excess_loss: l,
            xpr,
            p_main,
            p_cross: p_main - xpr,
        })
    };

    let direct_angle = rng.random_range(0..n_angle);
    let direct = plant(k0, direct_angle, 0.0, rng)?;

    let n_paths = config.paths_per_link.sample(rng)?;
    if n_paths > 0 && first_bin > last_bin {
        return Err(Error::Generation(format!(
            "no delay room for paths after the direct path at bin {k0}"
        )));
    }
    let mut paths: Vec<PlantedPath> = Vec::with_capacity(n_paths);
    for _ in 0..n_paths {
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let cell = (rng.random_range(first_bin..=last_bin), rng.random_range(0..n_angle));
            if paths
                .iter()
                .all(|p| separation(cell, (p.delay_bin, p.angle_bin), n_angle, wrap) >= config.min_separation)
            {
                placed = Some(cell);
                break;
            }
        }
        let (k, j) = placed.ok_or_else(|| {
            Error::Generation(format!(
                "could not place {n_paths} paths {} bins apart on link {}",
                config.min_separation, meta.link_id
            ))
        })?;
        let l = config.excess_loss.sample(rng);
        paths.push(plant(k, j, l, rng)?);
    }
    paths.sort_by_key(|p| (p.delay_bin, p.angle_bin));

    let floor = db_to_lin(config.noise_floor_db);
    let mut noise = || -> f64 {
        let e: f64 = Exp1.sample(rng);
        floor * e
    };
    let mut main_lin: Vec<f64> = (0..n_delay * n_angle).map(|_| noise()).collect();
    let mut cross_lin: Vec<f64> = (0..n_delay * n_angle).map(|_| noise()).collect();
    let skirt = db_to_lin(SKIRT_DB);
    for p in std::iter::once(&direct).chain(&paths) {
        let (m, c) = (db_to_lin(p.p_main), db_to_lin(p.p_cross));
        let lo = p.delay_bin.saturating_sub(SKIRT_BINS);
        let hi = (p.delay_bin + SKIRT_BINS).min(n_delay - 1);
        for k in lo..=hi {
            let w = if k == p.delay_bin { 1.0 } else { skirt };
            main_lin[k * n_angle + p.angle_bin] += w * m;
            cross_lin[k * n_angle + p.angle_bin] += w * c;
        }
    }
    let to_grid = |lin: Vec<f64>| Grid::new(n_delay, n_angle, lin.into_iter().map(lin_to_db).collect());
    let padp = Padp::new(delays, azimuths, to_grid(main_lin)?, to_grid(cross_lin)?, meta)?;
    Ok(GeneratedLink {
        padp,
        direct,
        paths,
    })
}

/// `truth.txt` body: planted parameters and per-path ground truth.
pub fn truth_to_string(campaign: &GeneratedCampaign) -> String {
    let c = &campaign.config;
    let mut out = String::new();
    let _ = writeln!(out, "campaign_id = {}", c.campaign_id);
    let _ = writeln!(out, "seed = {}", c.seed);
    out.push_str(&c.truth_model.to_param_string());
    let _ = writeln!(out, "noise_threshold_db = {}", fmt_f64(c.noise_threshold_db));
    let _ = writeln!(out, "noise_floor_db = {}", fmt_f64(c.noise_floor_db));
    let _ = writeln!(out, "min_separation_bins = {}", c.min_separation);
    let _ = writeln!(out, "n_links = {}", campaign.links.len());
    out.push('\n');
    let _ = writeln!(
        out,
        "link_id,path,tau_ns,phi_deg,excess_loss_db,xpr_db,p_main_db,p_cross_db"
    );
    for link in &campaign.links {
        let id = &link.padp.meta().link_id;
        let row = |out: &mut String, name: &str, p: &PlantedPath| {
            let _ = writeln!(
                out,
                "{id},{name},{},{},{},{},{},{}",
                fmt_f64(p.tau * 1e9),
                fmt_f64(p.phi),
                fmt_f64(p.excess_loss),
                fmt_f64(p.xpr),
                fmt_f64(p.p_main),
                fmt_f64(p.p_cross)
            );
        };
        row(&mut out, "direct", &link.direct);
        for (i, p) in link.paths.iter().enumerate() {
            row(&mut out, &(i + 1).to_string(), p);
        }
    }
    out
}

/// Configuration for drawing censored observations directly, without grids.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationConfig {
    pub truth_model: XprModel,
    /// Observations to return. Draws with both amplitudes censored do not count.
    pub n_obs: usize,
    pub excess_loss: ExcessLossDist,
    /// Hz
    pub center_frequency: f64,
    /// Path delays are drawn uniformly from this range, s.
    pub delay_range: (f64, f64),
    /// `f64::NEG_INFINITY` disables censoring.
    pub noise_threshold_db: f64,
    pub seed: u64,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        ObservationConfig {
            truth_model: XprModel::AVERAGE,
            n_obs: 5000,
            excess_loss: ExcessLossDist::Exponential {
                mean: 15.0,
                cap: 60.0,
            },
            center_frequency: 28e9,
            delay_range: (50e-9, 500e-9),
            noise_threshold_db: f64::NEG_INFINITY,
            seed: 1,
        }
    }
}

/// Uncensored values behind one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueObservation {
    pub tau: f64,
    pub excess_loss: f64,
    pub xpr: f64,
    pub p_main: f64,
    pub p_cross: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedObservations {
    pub observations: Vec<CensoredObservation>,
    pub truth: Vec<TrueObservation>,
    /// Draws discarded because both amplitudes fell below the threshold.
    pub n_undetected: usize,
}

/// Draw labelled observations with the same censoring rules that apply to
/// detected paths.
pub fn generate_observations(config: &ObservationConfig) -> Result<GeneratedObservations> {
    config.truth_model.validate()?;
    config.excess_loss.validate()?;
    let (t_lo, t_hi) = config.delay_range;
    if !(t_lo > 0.0 && t_lo <= t_hi && t_hi.is_finite()) {
        return Err(Error::Domain(format!("invalid delay range {t_lo}..{t_hi}")));
    }
    if config.noise_threshold_db.is_nan() {
        return Err(Error::Domain("noise threshold is NaN".into()));
    }
    let p_th = config.noise_threshold_db;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut observations = Vec::with_capacity(config.n_obs);
    let mut truth = Vec::with_capacity(config.n_obs);
    let mut n_undetected = 0usize;
    let max_draws = config.n_obs.saturating_mul(1000).max(1000);
    while observations.len() < config.n_obs {
        if observations.len() + n_undetected >= max_draws {
            return Err(Error::Generation(format!(
                "only {} of {} draws cleared the threshold",
                observations.len(),
                max_draws
            )));
        }
        let tau = if t_hi > t_lo {
            rng.random_range(t_lo..t_hi)
        } else {
            t_lo
        };
        let l = config.excess_loss.sample(&mut rng);
        let xpr = sample_xpr(&config.truth_model, l, &mut rng);
        let fspl = fspl_at_delay(tau, config.center_frequency)?;
        let p_main = -(fspl + l);
        let p_cross = p_main - xpr;
        let (kind, l_ex) = match (p_main > p_th, p_cross > p_th) {
            (true, true) => (ObservationKind::Exact(xpr), l),
            (true, false) => (ObservationKind::RightCensored(p_main - p_th), l),
            (false, true) => (ObservationKind::LeftCensored(p_th - p_cross), -p_th - fspl),
            (false, false) => {
                n_undetected += 1;
                continue;
            }
        };
        observations.push(CensoredObservation {
            kind,
            l_ex: Some(l_ex),
        });
        truth.push(TrueObservation {
            tau,
            excess_loss: l,
            xpr,
            p_main,
            p_cross,
        });
    }
    Ok(GeneratedObservations {
        observations,
        truth,
        n_undetected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::detect_mpcs;
    use crate::models::mean_xpr;
    use crate::normal;

    fn small() -> GenConfig {
        GenConfig {
            n_links: 2,
            paths_per_link: PathCount::Fixed(10),
            n_delay: 300,
            n_angle: 120,
            delta_phi: 3.0,
            distance_range: (10.0, 20.0),
            ..Default::default()
        }
    }

    #[test]
    fn direct_path_only_sits_at_free_space_level() {
        let c = GenConfig {
            paths_per_link: PathCount::Fixed(0),
            ..small()
        };
        let g = generate_campaign(&c).unwrap();
        for link in &g.links {
            assert!(link.paths.is_empty());
            let d = &link.direct;
            let fspl = fspl_at_delay(link.padp.meta().direct_path_delay(), c.center_frequency).unwrap();
            let v = link.padp.main_db().get(d.delay_bin, d.angle_bin);
            assert!((v + fspl).abs() < 0.01, "{v} vs {}", -fspl);
            assert!(detect_mpcs(&link.padp, &DetectionConfig::for_link(link.padp.meta()))
                .unwrap()
                .is_empty());
        }
    }

    #[test]
    fn direct_delay_falls_on_a_bin() {
        let g = generate_campaign(&small()).unwrap();
        for link in &g.links {
            let k = link.direct.delay_bin;
            let t = link.padp.meta().direct_path_delay();
            assert!((t - link.padp.delays()[k]).abs() < 1e-18);
        }
    }

    #[test]
    fn same_seed_same_campaign() {
        assert_eq!(generate_campaign(&small()).unwrap(), generate_campaign(&small()).unwrap());
        let other = GenConfig {
            seed: 2,
            ..small()
        };
        assert_ne!(generate_campaign(&small()).unwrap(), generate_campaign(&other).unwrap());
    }

    #[test]
    fn planted_count_and_separation() {
        let c = small();
        let g = generate_campaign(&c).unwrap();
        for link in &g.links {
            assert_eq!(link.paths.len(), 10);
            for (i, a) in link.paths.iter().enumerate() {
                assert!(a.delay_bin >= link.direct.delay_bin + c.min_separation);
                for b in &link.paths[i + 1..] {
                    let s = separation(
                        (a.delay_bin, a.angle_bin),
                        (b.delay_bin, b.angle_bin),
                        c.n_angle,
                        true,
                    );
                    assert!(s >= c.min_separation);
                }
                assert!((a.p_main - a.p_cross - a.xpr).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn overfull_grid_is_a_generation_error() {
        let c = GenConfig {
            paths_per_link: PathCount::Fixed(500),
            ..small()
        };
        assert!(matches!(generate_campaign(&c), Err(Error::Generation(_))));
    }

    #[test]
    fn threshold_below_floor_is_rejected() {
        let c = GenConfig {
            noise_floor_db: -120.0,
            ..small()
        };
        assert!(matches!(generate_campaign(&c), Err(Error::Domain(_))));
    }

    #[test]
    fn clean_mode_requires_twice_the_removal_extent() {
        let d = DetectionConfig::default();
        assert!(GenConfig::default().is_clean_for(&d));
        let tight = GenConfig {
            min_separation: 12,
            ..Default::default()
        };
        assert!(!tight.is_clean_for(&d));
    }

    #[test]
    fn truncated_exponential_stays_in_range() {
        let d = ExcessLossDist::Exponential {
            mean: 15.0,
            cap: 60.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..100_000).map(|_| d.sample(&mut rng)).collect();
        assert!(xs.iter().all(|x| (0.0..=60.0).contains(x)));
        // mean of the truncated exponential: m − cap·e^(−cap/m)/(1 − e^(−cap/m))
        let q = (-60.0f64 / 15.0).exp();
        let expected = 15.0 - 60.0 * q / (1.0 - q);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - expected).abs() < 0.15, "{mean} vs {expected}");
    }

    #[test]
    fn uncensored_observations_are_all_exact() {
        let g = generate_observations(&ObservationConfig {
            n_obs: 2000,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(g.observations.len(), 2000);
        assert!(g.observations.iter().all(|o| o.is_exact()));
        assert_eq!(g.n_undetected, 0);
    }

    #[test]
    fn zero_sigma_gives_the_mean() {
        let model = XprModel::Model2 {
            alpha2: -0.5,
            beta2: 28.0,
            sigma2: 0.0,
        };
        let g = generate_observations(&ObservationConfig {
            truth_model: model,
            n_obs: 500,
            ..Default::default()
        })
        .unwrap();
        for (o, t) in g.observations.iter().zip(&g.truth) {
            assert_eq!(o.kind, ObservationKind::Exact(mean_xpr(&model, t.excess_loss)));
        }
    }

    #[test]
    fn right_censoring_fraction_matches_normal_tail() {
        let l = 10.0;
        let tau = 100e-9;
        let f = 28e9;
        let p_main = -(fspl_at_delay(tau, f).unwrap() + l);
        let p_th = p_main - 25.0;
        let g = generate_observations(&ObservationConfig {
            n_obs: 100_000,
            excess_loss: ExcessLossDist::Fixed(l),
            delay_range: (tau, tau),
            noise_threshold_db: p_th,
            ..Default::default()
        })
        .unwrap();
        let right = g
            .observations
            .iter()
            .filter(|o| matches!(o.kind, ObservationKind::RightCensored(_)))
            .count() as f64
            / g.observations.len() as f64;
        // censored when XPR ≥ P^m − P_th = 25, mean 23, σ 6
        let expected = 1.0 - normal::cdf((25.0 - 23.0) / 6.0);
        assert!((right - expected).abs() < 0.02, "{right} vs {expected}");
    }

    #[test]
    fn conditional_means_track_the_model() {
        let g = generate_observations(&ObservationConfig {
            n_obs: 20_000,
            excess_loss: ExcessLossDist::Uniform {
                low: 0.0,
                high: 70.0,
            },
            ..Default::default()
        })
        .unwrap();
        for bin in 0..7 {
            let (lo, hi) = (bin as f64 * 10.0, bin as f64 * 10.0 + 10.0);
            let xs: Vec<(f64, f64)> = g
                .truth
                .iter()
                .filter(|t| t.excess_loss >= lo && t.excess_loss < hi)
                .map(|t| (t.xpr, mean_xpr(&XprModel::AVERAGE, t.excess_loss)))
                .collect();
            let n = xs.len() as f64;
            let gap = xs.iter().map(|(x, m)| x - m).sum::<f64>() / n;
            assert!(gap.abs() < 3.0 * 6.0 / n.sqrt(), "bin {bin}: {gap}");
        }
    }
}
