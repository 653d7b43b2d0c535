//! Dual-polarized power angular delay profiles.
//!
//! Powers are path gains in dB (typically negative). A [`Padp`] holds the
//! main- and cross-polarization grids of one link on a shared uniform
//! `(delay, azimuth)` raster.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fsutil;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Relative tolerance on the delay and azimuth steps.
pub const GRID_UNIFORMITY_TOL: f64 = 1e-6;

/// Free-space path loss `20·log10(4πd/λ)` with `d = c·τ`, `λ = c/f`.
pub fn fspl_at_delay(tau: f64, center_frequency: f64) -> Result<f64> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!("delay must be positive, got {tau}")));
    }
    if !(center_frequency > 0.0 && center_frequency.is_finite()) {
        return Err(Error::Domain(format!(
            "center frequency must be positive, got {center_frequency}"
        )));
    }
    // 4πd/λ = 4π(cτ)(f/c) = 4πτf
    Ok(20.0 * (4.0 * PI * tau * center_frequency).log10())
}

/// Loss beyond free space of a path with gain `p_main` dB at delay `tau`.
///
/// A path received exactly at the free-space level returns 0 dB.
pub fn excess_loss(p_main: f64, tau: f64, meta: &CampaignMeta) -> Result<f64> {
    Ok(-p_main - fspl_at_delay(tau, meta.center_frequency)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignMeta {
    pub campaign_id: String,
    pub link_id: String,
    /// Hz
    pub center_frequency: f64,
    /// Hz
    pub bandwidth: f64,
    /// Noise threshold `P_th`, dB.
    pub noise_threshold_db: f64,
    pub bs_height: f64,
    pub ms_height: f64,
    /// Tx-Rx distance, m.
    pub link_distance: f64,
}

impl CampaignMeta {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("center_frequency", self.center_frequency),
            ("bandwidth", self.bandwidth),
            ("link_distance", self.link_distance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.noise_threshold_db.is_finite() {
            return Err(Error::Domain("noise_threshold_db must be finite".into()));
        }
        Ok(())
    }

    /// Delay of the direct Tx-Rx path.
    pub fn direct_path_delay(&self) -> f64 {
        self.link_distance / SPEED_OF_LIGHT
    }

    pub(crate) fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("campaign_id", self.campaign_id.clone()),
            ("link_id", self.link_id.clone()),
            ("center_frequency", fmt_f64(self.center_frequency)),
            ("bandwidth", fmt_f64(self.bandwidth)),
            ("noise_threshold_db", fmt_f64(self.noise_threshold_db)),
            ("bs_height", fmt_f64(self.bs_height)),
            ("ms_height", fmt_f64(self.ms_height)),
            ("link_distance", fmt_f64(self.link_distance)),
        ]
    }

    /// Build from `key = value` pairs; `line_of` maps a key to its source line.
    pub(crate) fn from_pairs(
        pairs: &BTreeMap<String, String>,
        line_of: impl Fn(&str) -> usize,
    ) -> Result<Self> {
        let text = |key: &str| -> Result<String> {
            pairs
                .get(key)
                .cloned()
                .ok_or_else(|| Error::parse(0, format!("missing header field `{key}`")))
        };
        let num = |key: &str| -> Result<f64> {
            let raw = text(key)?;
            raw.parse::<f64>().map_err(|_| {
                Error::parse(line_of(key), format!("field `{key}`: invalid number `{raw}`"))
            })
        };
        let meta = CampaignMeta {
            campaign_id: text("campaign_id")?,
            link_id: pairs.get("link_id").cloned().unwrap_or_default(),
            center_frequency: num("center_frequency")?,
            bandwidth: num("bandwidth")?,
            noise_threshold_db: num("noise_threshold_db")?,
            bs_height: num("bs_height")?,
            ms_height: num("ms_height")?,
            link_distance: num("link_distance")?,
        };
        meta.validate()?;
        Ok(meta)
    }
}

/// Row-major `[delay × azimuth]` matrix of dB values.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n_delay: usize,
    n_angle: usize,
    values: Vec<f64>,
}

impl Grid {
    pub fn new(n_delay: usize, n_angle: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_delay * n_angle {
            return Err(Error::Dimension(format!(
                "{} values for a {n_delay}×{n_angle} grid",
                values.len()
            )));
        }
        Ok(Grid {
            n_delay,
            n_angle,
            values,
        })
    }

    pub fn filled(n_delay: usize, n_angle: usize, value: f64) -> Self {
        Grid {
            n_delay,
            n_angle,
            values: vec![value; n_delay * n_angle],
        }
    }

    pub fn n_delay(&self) -> usize {
        self.n_delay
    }

    pub fn n_angle(&self) -> usize {
        self.n_angle
    }

    #[inline]
    pub fn get(&self, delay: usize, angle: usize) -> f64 {
        self.values[delay * self.n_angle + angle]
    }

    #[inline]
    pub fn set(&mut self, delay: usize, angle: usize, value: f64) {
        self.values[delay * self.n_angle + angle] = value;
    }

    pub fn row(&self, delay: usize) -> &[f64] {
        &self.values[delay * self.n_angle..(delay + 1) * self.n_angle]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.n_delay == other.n_delay && self.n_angle == other.n_angle
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Padp {
    delays: Vec<f64>,
    azimuths: Vec<f64>,
    main_db: Grid,
    cross_db: Grid,
    meta: CampaignMeta,
}

impl Padp {
    /// `delays` in seconds, `azimuths` in degrees.
    pub fn new(
        delays: Vec<f64>,
        azimuths: Vec<f64>,
        main_db: Grid,
        cross_db: Grid,
        meta: CampaignMeta,
    ) -> Result<Self> {
        meta.validate()?;
        check_uniform("delay", &delays)?;
        check_uniform("azimuth", &azimuths)?;
        for (name, grid) in [("main", &main_db), ("cross", &cross_db)] {
            if grid.n_delay != delays.len() || grid.n_angle != azimuths.len() {
                return Err(Error::Dimension(format!(
                    "{name} grid is {}×{}, axes are {}×{}",
                    grid.n_delay,
                    grid.n_angle,
                    delays.len(),
                    azimuths.len()
                )));
            }
            if let Some(pos) = grid.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::Domain(format!(
                    "{name} grid has a non-finite value at delay bin {}, azimuth bin {}",
                    pos / grid.n_angle,
                    pos % grid.n_angle
                )));
            }
        }
        Ok(Padp {
            delays,
            azimuths,
            main_db,
            cross_db,
            meta,
        })
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn azimuths(&self) -> &[f64] {
        &self.azimuths
    }

    pub fn main_db(&self) -> &Grid {
        &self.main_db
    }

    pub fn cross_db(&self) -> &Grid {
        &self.cross_db
    }

    pub fn meta(&self) -> &CampaignMeta {
        &self.meta
    }

    pub fn delta_tau(&self) -> f64 {
        step(&self.delays)
    }

    pub fn delta_phi(&self) -> f64 {
        step(&self.azimuths)
    }

    /// True when the azimuth grid spans a full turn, so bin `n-1` neighbours bin `0`.
    pub fn wraps_azimuth(&self) -> bool {
        let span = self.azimuths.len() as f64 * self.delta_phi();
        (span - 360.0).abs() <= GRID_UNIFORMITY_TOL * 360.0
    }
}

fn step(axis: &[f64]) -> f64 {
    if axis.len() < 2 {
        return 1.0;
    }
    (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64
}

fn check_uniform(axis_name: &'static str, axis: &[f64]) -> Result<()> {
    if axis.is_empty() {
        return Err(Error::Dimension(format!("empty {axis_name} axis")));
    }
    if axis.iter().any(|v| !v.is_finite()) {
        return Err(Error::GridUniformity {
            axis: axis_name,
            message: "non-finite grid point".into(),
        });
    }
    if axis.len() < 2 {
        return Ok(());
    }
    let nominal = axis[1] - axis[0];
    if nominal <= 0.0 {
        return Err(Error::GridUniformity {
            axis: axis_name,
            message: "grid is not strictly increasing".into(),
        });
    }
    for (k, w) in axis.windows(2).enumerate() {
        let d = w[1] - w[0];
        if ((d - nominal) / nominal).abs() > GRID_UNIFORMITY_TOL {
            return Err(Error::GridUniformity {
                axis: axis_name,
                message: format!("step {k} is {d}, expected {nominal}"),
            });
        }
    }
    Ok(())
}

/// Shortest round-trip representation of an `f64`.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// dB value with at least four decimals that still parses back to the same bits.
pub(crate) fn fmt_db(v: f64) -> String {
    let s = format!("{v}");
    if s.contains('e') || s.contains("inf") || s.contains("NaN") {
        return s;
    }
    let decimals = s.split_once('.').map_or(0, |(_, frac)| frac.len());
    if decimals >= 4 {
        s
    } else {
        format!("{v:.4}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Polarization {
    Main,
    Cross,
}

impl Polarization {
    fn name(self) -> &'static str {
        match self {
            Polarization::Main => "main",
            Polarization::Cross => "cross",
        }
    }
}

/// Contents of one PADP file, which may hold one or both polarization blocks.
struct PadpFile {
    meta: CampaignMeta,
    delays: Vec<f64>,
    azimuths: Vec<f64>,
    main: Option<Grid>,
    cross: Option<Grid>,
}

fn render(padp: &Padp, blocks: &[Polarization]) -> String {
    let mut out = String::new();
    out.push_str("# dual-polarized power angular delay profile\n");
    for (k, v) in padp.meta.to_pairs() {
        let _ = writeln!(out, "{k} = {v}");
    }
    let _ = writeln!(out, "delta_tau_ns = {}", fmt_f64(padp.delta_tau() * 1e9));
    let _ = writeln!(out, "delta_phi_deg = {}", fmt_f64(padp.delta_phi()));
    let _ = writeln!(out, "n_delay = {}", padp.delays.len());
    let _ = writeln!(out, "n_angle = {}", padp.azimuths.len());
    let az: Vec<String> = padp.azimuths.iter().map(|a| fmt_f64(*a)).collect();
    let _ = writeln!(out, "azimuths_deg = {}", az.join(" "));
    out.push_str("# rows: delay in seconds, then one dB value per azimuth\n");
    for &pol in blocks {
        let grid = match pol {
            Polarization::Main => &padp.main_db,
            Polarization::Cross => &padp.cross_db,
        };
        let _ = writeln!(out, "polarization = {}", pol.name());
        for (i, tau) in padp.delays.iter().enumerate() {
            out.push_str(&fmt_f64(*tau));
            for v in grid.row(i) {
                out.push(' ');
                out.push_str(&fmt_db(*v));
            }
            out.push('\n');
        }
    }
    out
}

/// Serialize both polarizations of a PADP into one text document.
pub fn padp_to_string(padp: &Padp) -> String {
    render(padp, &[Polarization::Main, Polarization::Cross])
}

/// Parse a document holding both polarization blocks.
pub fn padp_from_str(text: &str) -> Result<Padp> {
    let file = parse(text)?;
    match (file.main, file.cross) {
        (Some(main), Some(cross)) => {
            Padp::new(file.delays, file.azimuths, main, cross, file.meta)
        }
        (None, _) => Err(Error::parse(0, "missing `polarization = main` block")),
        (_, None) => Err(Error::parse(0, "missing `polarization = cross` block")),
    }
}

pub fn write_padp(padp: &Padp, path: &Path) -> Result<()> {
    fsutil::write_atomic(path, padp_to_string(padp).as_bytes())
}

/// Write `<stem>.main.padp` and `<stem>.cross.padp` into `dir`.
pub fn write_padp_pair(padp: &Padp, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
    let main_path = dir.join(format!("{stem}.main.padp"));
    let cross_path = dir.join(format!("{stem}.cross.padp"));
    let main = render(padp, &[Polarization::Main]);
    let cross = render(padp, &[Polarization::Cross]);
    fsutil::write_atomic(&main_path, main.as_bytes())?;
    fsutil::write_atomic(&cross_path, cross.as_bytes())?;
    Ok((main_path, cross_path))
}

/// Read a PADP. A file holding a single polarization block named
/// `<id>.main.padp` or `<id>.cross.padp` is completed from its sibling.
pub fn read_padp(path: &Path) -> Result<Padp> {
    let file = read_file(path)?;
    if file.main.is_some() && file.cross.is_some() {
        return Padp::new(
            file.delays,
            file.azimuths,
            file.main.unwrap(),
            file.cross.unwrap(),
            file.meta,
        )
        .map_err(|e| e.in_file(path));
    }
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default();
    if let Some(stem) = name.strip_suffix(".main.padp") {
        read_padp_pair(path, &path.with_file_name(format!("{stem}.cross.padp")))
    } else if let Some(stem) = name.strip_suffix(".cross.padp") {
        read_padp_pair(&path.with_file_name(format!("{stem}.main.padp")), path)
    } else {
        Err(Error::File {
            path: path.to_path_buf(),
            message: "file holds a single polarization block and has no paired file name"
                .into(),
        })
    }
}

pub fn read_padp_pair(main_path: &Path, cross_path: &Path) -> Result<Padp> {
    let main = read_file(main_path)?;
    let cross = read_file(cross_path)?;
    if main.meta != cross.meta {
        return Err(Error::File {
            path: cross_path.to_path_buf(),
            message: format!("metadata differs from {}", main_path.display()),
        });
    }
    if main.delays != cross.delays || main.azimuths != cross.azimuths {
        return Err(Error::File {
            path: cross_path.to_path_buf(),
            message: format!("grid axes differ from {}", main_path.display()),
        });
    }
    let main_grid = main.main.ok_or_else(|| Error::File {
        path: main_path.to_path_buf(),
        message: "no `polarization = main` block".into(),
    })?;
    let cross_grid = cross.cross.ok_or_else(|| Error::File {
        path: cross_path.to_path_buf(),
        message: "no `polarization = cross` block".into(),
    })?;
    Padp::new(main.delays, main.azimuths, main_grid, cross_grid, main.meta)
        .map_err(|e| e.in_file(main_path))
}

fn read_file(path: &Path) -> Result<PadpFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text).map_err(|e| e.in_file(path))
}

fn parse(text: &str) -> Result<PadpFile> {
    let mut header: BTreeMap<String, String> = BTreeMap::new();
    let mut header_line: BTreeMap<String, usize> = BTreeMap::new();
    let mut current: Option<Polarization> = None;
    let mut rows: [Vec<(usize, Vec<f64>)>; 2] = [Vec::new(), Vec::new()];
    let mut seen = [false, false];

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some((key, value)) = line.split_once('=') {
            let key = key.trim();
            let value = value.trim();
            if key == "polarization" {
                let pol = match value {
                    "main" => Polarization::Main,
                    "cross" => Polarization::Cross,
                    other => {
                        return Err(Error::parse(
                            lineno,
                            format!("unknown polarization `{other}`"),
                        ))
                    }
                };
                let slot = pol as usize;
                if seen[slot] {
                    return Err(Error::parse(
                        lineno,
                        format!("duplicate `{}` block", pol.name()),
                    ));
                }
                seen[slot] = true;
                current = Some(pol);
            } else if current.is_some() {
                return Err(Error::parse(
                    lineno,
                    format!("header field `{key}` after the data body"),
                ));
            } else {
                header.insert(key.to_string(), value.to_string());
                header_line.insert(key.to_string(), lineno);
            }
            continue;
        }
        let Some(pol) = current else {
            return Err(Error::parse(lineno, "data row before a `polarization` line"));
        };
        let mut values = Vec::new();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(lineno, format!("invalid number `{tok}`")))?;
            values.push(v);
        }
        rows[pol as usize].push((lineno, values));
    }

    let line_of = |key: &str| header_line.get(key).copied().unwrap_or(0);
    let meta = CampaignMeta::from_pairs(&header, line_of)?;
    let count = |key: &str| -> Result<usize> {
        let raw = header
            .get(key)
            .ok_or_else(|| Error::parse(0, format!("missing header field `{key}`")))?;
        raw.parse()
            .map_err(|_| Error::parse(line_of(key), format!("field `{key}`: invalid count `{raw}`")))
    };
    let step_field = |key: &str| -> Result<f64> {
        let raw = header
            .get(key)
            .ok_or_else(|| Error::parse(0, format!("missing header field `{key}`")))?;
        raw.parse()
            .map_err(|_| Error::parse(line_of(key), format!("field `{key}`: invalid number `{raw}`")))
    };
    let n_delay = count("n_delay")?;
    let n_angle = count("n_angle")?;
    let delta_tau_ns = step_field("delta_tau_ns")?;
    let delta_phi_deg = step_field("delta_phi_deg")?;

    let az_raw = header
        .get("azimuths_deg")
        .ok_or_else(|| Error::parse(0, "missing header field `azimuths_deg`"))?;
    let azimuths = az_raw
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>().map_err(|_| {
                Error::parse(line_of("azimuths_deg"), format!("invalid azimuth `{t}`"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if azimuths.len() != n_angle {
        return Err(Error::parse(
            line_of("azimuths_deg"),
            format!("{} azimuths listed, n_angle = {n_angle}", azimuths.len()),
        ));
    }

    let mut delays: Option<Vec<f64>> = None;
    let mut grids: [Option<Grid>; 2] = [None, None];
    for pol in [Polarization::Main, Polarization::Cross] {
        let block = &rows[pol as usize];
        if !seen[pol as usize] {
            continue;
        }
        if block.len() != n_delay {
            let line = block.last().map_or(0, |(l, _)| *l);
            return Err(Error::parse(
                line,
                format!("{} block has {} rows, n_delay = {n_delay}", pol.name(), block.len()),
            ));
        }
        let mut block_delays = Vec::with_capacity(n_delay);
        let mut values = Vec::with_capacity(n_delay * n_angle);
        for (lineno, row) in block {
            if row.len() != n_angle + 1 {
                return Err(Error::parse(
                    *lineno,
                    format!(
                        "row has {} power values, expected {n_angle}",
                        row.len().saturating_sub(1)
                    ),
                ));
            }
            block_delays.push(row[0]);
            values.extend_from_slice(&row[1..]);
        }
        match &delays {
            None => delays = Some(block_delays),
            Some(d) if *d != block_delays => {
                return Err(Error::parse(
                    block[0].0,
                    "cross block delays differ from main block",
                ))
            }
            Some(_) => {}
        }
        grids[pol as usize] = Some(Grid::new(n_delay, n_angle, values)?);
    }
    let delays = delays.ok_or_else(|| Error::parse(0, "no polarization block"))?;

    check_uniform("delay", &delays)?;
    check_uniform("azimuth", &azimuths)?;
    if n_delay >= 2 {
        check_declared_step("delay", step(&delays) * 1e9, delta_tau_ns, line_of("delta_tau_ns"))?;
    }
    if n_angle >= 2 {
        check_declared_step("azimuth", step(&azimuths), delta_phi_deg, line_of("delta_phi_deg"))?;
    }

    let [main, cross] = grids;
    Ok(PadpFile {
        meta,
        delays,
        azimuths,
        main,
        cross,
    })
}

fn check_declared_step(axis: &'static str, actual: f64, declared: f64, line: usize) -> Result<()> {
    if ((actual - declared) / declared).abs() > GRID_UNIFORMITY_TOL {
        return Err(Error::GridUniformity {
            axis,
            message: format!("line {line}: declared step {declared}, grid step {actual}"),
        });
    }
    Ok(())
}
