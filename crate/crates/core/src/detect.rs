//! Two-step dual-polarized multipath detection.
//!
//! Step 1 finds local maxima of the delay-domain profile (the maximum over
//! azimuth and over both polarizations). Step 2 blanks a rectangle around
//! every accepted path in both PADPs. The two steps repeat on the blanked
//! grids until no further peak qualifies.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil;
use crate::padp::{excess_loss, fmt_db, CampaignMeta, Grid, Padp};

/// Value written into removed cells. Lies below every threshold.
const BLANK: f64 = f64::NEG_INFINITY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MpcType {
    /// Both polarizations above threshold: the XPR is measured.
    Type1,
    /// Cross polarization below threshold: the XPR is bounded from below.
    Type2,
    /// Main polarization below threshold: the XPR is bounded from above.
    Type3,
}

impl MpcType {
    pub fn code(self) -> u8 {
        match self {
            MpcType::Type1 => 1,
            MpcType::Type2 => 2,
            MpcType::Type3 => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(MpcType::Type1),
            2 => Some(MpcType::Type2),
            3 => Some(MpcType::Type3),
            _ => None,
        }
    }
}

/// One detected multipath component.
#[derive(Debug, Clone, PartialEq)]
pub struct Mpc {
    /// Delay, seconds.
    pub tau: f64,
    /// Azimuth, degrees.
    pub phi: f64,
    pub p_main: Option<f64>,
    pub p_cross: Option<f64>,
    pub mpc_type: MpcType,
    pub excess_loss: Option<f64>,
}

impl Mpc {
    /// Classify a path from its two amplitudes; amplitudes at or below
    /// `p_th` are dropped. Returns `None` when neither exceeds `p_th`.
    pub fn classify(
        tau: f64,
        phi: f64,
        p_main: f64,
        p_cross: f64,
        meta: &CampaignMeta,
    ) -> Result<Option<Mpc>> {
        let p_th = meta.noise_threshold_db;
        let main = (p_main > p_th).then_some(p_main);
        let cross = (p_cross > p_th).then_some(p_cross);
        let mpc_type = match (main, cross) {
            (Some(_), Some(_)) => MpcType::Type1,
            (Some(_), None) => MpcType::Type2,
            (None, Some(_)) => MpcType::Type3,
            (None, None) => return Ok(None),
        };
        let excess = match main {
            Some(p) => Some(excess_loss(p, tau, meta)?),
            None => None,
        };
        Ok(Some(Mpc {
            tau,
            phi,
            p_main: main,
            p_cross: cross,
            mpc_type,
            excess_loss: excess,
        }))
    }

    /// Measured XPR, for Type 1 paths only.
    pub fn xpr(&self) -> Option<f64> {
        match (self.p_main, self.p_cross) {
            (Some(m), Some(c)) => Some(m - c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionConfig {
    /// Half width of the sliding average window, delay bins.
    pub window_half_width: usize,
    /// Half extent of the blanked rectangle, bins in delay and azimuth.
    pub removal_half_extent: usize,
    /// Half extent of the window searched for the weaker polarization.
    pub pairing_tolerance: usize,
    /// Peaks at or before this delay (plus half a bin) are ignored, seconds.
    pub exclude_before_delay: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            window_half_width: 2,
            removal_half_extent: 6,
            pairing_tolerance: 2,
            exclude_before_delay: 0.0,
        }
    }
}

impl DetectionConfig {
    /// Defaults with the direct path of `meta`'s link excluded.
    pub fn for_link(meta: &CampaignMeta) -> Self {
        DetectionConfig {
            exclude_before_delay: meta.direct_path_delay(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_half_width < 1 || self.removal_half_extent < 1 || self.pairing_tolerance < 1
        {
            return Err(Error::Domain("detection extents must be at least 1 bin".into()));
        }
        if self.pairing_tolerance > self.removal_half_extent {
            return Err(Error::Domain(format!(
                "pairing tolerance {} exceeds removal extent {}",
                self.pairing_tolerance, self.removal_half_extent
            )));
        }
        Ok(())
    }
}

/// `P(τ)`: per delay bin, the maximum over azimuth of both polarizations.
pub fn delay_profile(padp: &Padp) -> Vec<f64> {
    profile_of(padp.main_db(), padp.cross_db())
}

/// [`delay_profile`] over a bare pair of grids.
pub fn delay_profile_of(main: &Grid, cross: &Grid) -> Result<Vec<f64>> {
    if !main.same_shape(cross) {
        return Err(Error::Dimension(format!(
            "main grid {}×{}, cross grid {}×{}",
            main.n_delay(),
            main.n_angle(),
            cross.n_delay(),
            cross.n_angle()
        )));
    }
    Ok(profile_of(main, cross))
}

fn profile_of(main: &Grid, cross: &Grid) -> Vec<f64> {
    (0..main.n_delay()).map(|k| row_max(main, cross, k)).collect()
}

fn row_max(main: &Grid, cross: &Grid, k: usize) -> f64 {
    main.row(k)
        .iter()
        .chain(cross.row(k))
        .copied()
        .fold(BLANK, f64::max)
}

fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Linear-power mean over `[k − w, k + w]`, truncated at the grid edges.
fn window_mean_db(profile: &[f64], k: usize, w: usize) -> f64 {
    let lo = k.saturating_sub(w);
    let hi = (k + w).min(profile.len() - 1);
    let sum: f64 = profile[lo..=hi].iter().map(|p| db_to_lin(*p)).sum();
    10.0 * (sum / (hi - lo + 1) as f64).log10()
}

fn is_peak(profile: &[f64], delays: &[f64], k: usize, config: &DetectionConfig, p_th: f64) -> bool {
    let n = profile.len();
    if k == 0 || k + 1 >= n {
        return false;
    }
    let p = profile[k];
    if !(p > p_th) || !(p > profile[k - 1]) || !(p > profile[k + 1]) {
        return false;
    }
    if config.exclude_before_delay > 0.0 {
        let step = if n > 1 { delays[1] - delays[0] } else { 0.0 };
        if !(delays[k] > config.exclude_before_delay + 0.5 * step) {
            return false;
        }
    }
    p > window_mean_db(profile, k, config.window_half_width)
}

/// Delay bins of `profile` that qualify as path peaks.
///
/// A bin qualifies when it exceeds both neighbours, the linear-power mean of
/// the surrounding `2·window_half_width + 1` bins, and `p_th`, and lies after
/// the excluded direct-path delay. The first and last bins never qualify.
pub fn find_local_maxima(
    profile: &[f64],
    delays: &[f64],
    config: &DetectionConfig,
    p_th: f64,
) -> Vec<usize> {
    if profile.len() < 4 * config.window_half_width + 1 || delays.len() != profile.len() {
        return Vec::new();
    }
    (0..profile.len())
        .filter(|&k| is_peak(profile, delays, k, config, p_th))
        .collect()
}

/// Azimuth bins within `half` of `center`, wrapping on full-turn grids.
fn angle_window(center: usize, half: usize, n: usize, wrap: bool) -> Vec<usize> {
    if wrap {
        if 2 * half + 1 >= n {
            return (0..n).collect();
        }
        (0..=2 * half)
            .map(|d| (center + n + d - half) % n)
            .collect()
    } else {
        let lo = center.saturating_sub(half);
        let hi = (center + half).min(n - 1);
        (lo..=hi).collect()
    }
}

fn delay_window(center: usize, half: usize, n: usize) -> std::ops::RangeInclusive<usize> {
    center.saturating_sub(half)..=(center + half).min(n - 1)
}

/// Run the iterative detection on one link.
pub fn detect_mpcs(padp: &Padp, config: &DetectionConfig) -> Result<Vec<Mpc>> {
    config.validate()?;
    let meta = padp.meta();
    let p_th = meta.noise_threshold_db;
    let delays = padp.delays();
    let azimuths = padp.azimuths();
    let n_delay = delays.len();
    let n_angle = azimuths.len();
    let wrap = padp.wraps_azimuth();

    let mut main = padp.main_db().clone();
    let mut cross = padp.cross_db().clone();
    let mut profile = delay_profile_of(&main, &cross)?;
    let mut found = Vec::new();

    loop {
        let mut peaks = find_local_maxima(&profile, delays, config, p_th);
        if peaks.is_empty() {
            break;
        }
        // Strongest first; a peak blanked or demoted by an earlier one in the
        // same pass is re-tested against the updated profile.
        peaks.sort_by(|&a, &b| {
            profile[b]
                .partial_cmp(&profile[a])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut accepted = 0usize;
        for k in peaks {
            if !is_peak(&profile, delays, k, config, p_th) {
                continue;
            }
            let (angle, main_is_stronger) = strongest_cell(&main, &cross, k);
            let (strong, weak) = if main_is_stronger {
                (&main, &cross)
            } else {
                (&cross, &main)
            };
            let strong_value = strong.get(k, angle);
            let weak_value = delay_window(k, config.pairing_tolerance, n_delay)
                .flat_map(|i| {
                    angle_window(angle, config.pairing_tolerance, n_angle, wrap)
                        .into_iter()
                        .map(move |j| (i, j))
                })
                .map(|(i, j)| weak.get(i, j))
                .fold(BLANK, f64::max);
            let (p_main, p_cross) = if main_is_stronger {
                (strong_value, weak_value)
            } else {
                (weak_value, strong_value)
            };
            if let Some(mpc) = Mpc::classify(delays[k], azimuths[angle], p_main, p_cross, meta)? {
                found.push(mpc);
            }

            let rows = delay_window(k, config.removal_half_extent, n_delay);
            let cols = angle_window(angle, config.removal_half_extent, n_angle, wrap);
            for i in rows.clone() {
                for &j in &cols {
                    main.set(i, j, BLANK);
                    cross.set(i, j, BLANK);
                }
                profile[i] = row_max(&main, &cross, i);
            }
            accepted += 1;
        }
        if accepted == 0 {
            break;
        }
    }

    found.sort_by(|a, b| {
        a.tau
            .partial_cmp(&b.tau)
            .unwrap_or(Ordering::Equal)
            .then(a.phi.partial_cmp(&b.phi).unwrap_or(Ordering::Equal))
    });
    Ok(found)
}

/// Azimuth bin holding the largest value of either polarization in delay
/// row `k`, and whether that value belongs to the main polarization.
/// Ties go to the lower azimuth, then to the main polarization.
fn strongest_cell(main: &Grid, cross: &Grid, k: usize) -> (usize, bool) {
    let mut best = (0usize, true);
    let mut best_value = BLANK;
    for (j, (&m, &c)) in main.row(k).iter().zip(cross.row(k)).enumerate() {
        if m > best_value {
            best_value = m;
            best = (j, true);
        }
        if c > best_value {
            best_value = c;
            best = (j, false);
        }
    }
    best
}

/// MPC counts per type: `(type 1, type 2, type 3)`.
pub fn census(mpcs: &[Mpc]) -> (usize, usize, usize) {
    mpcs.iter().fold((0, 0, 0), |(a, b, c), m| match m.mpc_type {
        MpcType::Type1 => (a + 1, b, c),
        MpcType::Type2 => (a, b + 1, c),
        MpcType::Type3 => (a, b, c + 1),
    })
}

/// MPCs of one link together with the link metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkMpcs {
    pub meta: CampaignMeta,
    pub mpcs: Vec<Mpc>,
}

const MPC_HEADER: [&str; 6] = [
    "tau_ns",
    "phi_deg",
    "p_main_db",
    "p_cross_db",
    "type",
    "excess_loss_db",
];

fn opt_db(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt_db)
}

/// Render an MPC list: `#`-prefixed link metadata, a header row, one record per MPC.
pub fn mpcs_to_string(link: &LinkMpcs) -> String {
    let mut out = String::new();
    for (k, v) in link.meta.to_pairs() {
        let _ = writeln!(out, "# {k} = {v}");
    }
    out.push_str(&MPC_HEADER.join(","));
    out.push('\n');
    for m in &link.mpcs {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_db(m.tau * 1e9),
            fmt_db(m.phi),
            opt_db(m.p_main),
            opt_db(m.p_cross),
            m.mpc_type.code(),
            opt_db(m.excess_loss)
        );
    }
    out
}

pub fn write_mpc_file(link: &LinkMpcs, path: &Path) -> Result<()> {
    fsutil::write_atomic(path, mpcs_to_string(link).as_bytes())
}

pub fn read_mpc_file(path: &Path) -> Result<LinkMpcs> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Err(Error::File {
            path: path.to_path_buf(),
            message: "empty MPC file".into(),
        });
    }
    mpcs_from_str(&text).map_err(|e| e.in_file(path))
}

pub fn mpcs_from_str(text: &str) -> Result<LinkMpcs> {
    let mut pairs = std::collections::BTreeMap::new();
    let mut lines = std::collections::BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        if let Some(rest) = line.trim_start().strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                pairs.insert(k.trim().to_string(), v.trim().to_string());
                lines.insert(k.trim().to_string(), idx + 1);
            }
        }
    }
    let meta = CampaignMeta::from_pairs(&pairs, |k| lines.get(k).copied().unwrap_or(0))?;

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(0, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != MPC_HEADER {
        return Err(Error::parse(
            0,
            format!("expected header `{}`", MPC_HEADER.join(",")),
        ));
    }
    let mut mpcs = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let num = |i: usize| -> Result<f64> {
            record[i].parse::<f64>().map_err(|_| {
                Error::parse(line, format!("`{}`: invalid number `{}`", MPC_HEADER[i], &record[i]))
            })
        };
        let opt = |i: usize| -> Result<Option<f64>> {
            if &record[i] == "NA" {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        let code: u8 = record[4]
            .parse()
            .map_err(|_| Error::parse(line, format!("invalid type `{}`", &record[4])))?;
        let mpc_type = MpcType::from_code(code)
            .ok_or_else(|| Error::parse(line, format!("invalid type `{code}`")))?;
        let mpc = Mpc {
            tau: num(0)? / 1e9,
            phi: num(1)?,
            p_main: opt(2)?,
            p_cross: opt(3)?,
            mpc_type,
            excess_loss: opt(5)?,
        };
        let consistent = match mpc_type {
            MpcType::Type1 => mpc.p_main.is_some() && mpc.p_cross.is_some(),
            MpcType::Type2 => mpc.p_main.is_some() && mpc.p_cross.is_none(),
            MpcType::Type3 => mpc.p_main.is_none() && mpc.p_cross.is_some(),
        } && mpc.excess_loss.is_some() == mpc.p_main.is_some();
        if !consistent {
            return Err(Error::parse(
                line,
                format!("amplitudes inconsistent with type {code}"),
            ));
        }
        mpcs.push(mpc);
    }
    Ok(LinkMpcs { meta, mpcs })
}
