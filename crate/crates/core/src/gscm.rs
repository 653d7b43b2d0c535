//! Per-sub-path 2×2 polarization matrices.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;

use crate::models::{kappa_from_db, sample_xpr, XprModel};
use crate::padp::fmt_f64;

/// Matrix entry in polar form. Keeping magnitude and phase separate makes
/// the XPR identity between the two columns hold without rounding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarEntry {
    pub magnitude: f64,
    /// radians, in `[0, 2π)`
    pub phase: f64,
}

impl PolarEntry {
    pub fn to_complex(self) -> Complex64 {
        Complex64::from_polar(self.magnitude, self.phase)
    }
}

/// `[[a_vv, a_vh], [a_hv, a_hh]]` with unit co-polar magnitude and cross
/// magnitude `κ^(−1/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationMatrix {
    pub vv: PolarEntry,
    pub vh: PolarEntry,
    pub hv: PolarEntry,
    pub hh: PolarEntry,
    /// The drawn XPR, dB.
    pub xpr_db: f64,
    /// `10^(xpr_db/10)`
    pub kappa: f64,
}

impl PolarizationMatrix {
    pub fn entries(&self) -> [Complex64; 4] {
        [self.vv, self.vh, self.hv, self.hh].map(PolarEntry::to_complex)
    }

    /// `|a_vv/a_hv|²` and `|a_hh/a_vh|²`.
    pub fn column_xprs(&self) -> (f64, f64) {
        (
            (self.vv.magnitude / self.hv.magnitude).powi(2),
            (self.hh.magnitude / self.vh.magnitude).powi(2),
        )
    }
}

/// Draw one matrix for a sub-path with excess loss `l_ex`.
pub fn sample_matrix<R: Rng + ?Sized>(model: &XprModel, l_ex: f64, rng: &mut R) -> PolarizationMatrix {
    let xpr_db = sample_xpr(model, l_ex, rng);
    let kappa = kappa_from_db(xpr_db);
    let cross = kappa.powf(-0.5);
    let mut entry = |magnitude: f64| PolarEntry {
        magnitude,
        phase: rng.random_range(0.0..TAU),
    };
    PolarizationMatrix {
        vv: entry(1.0),
        vh: entry(cross),
        hv: entry(cross),
        hh: entry(1.0),
        xpr_db,
        kappa,
    }
}

pub const MATRIX_HEADER: [&str; 10] = [
    "vv_re", "vv_im", "vh_re", "vh_im", "hv_re", "hv_im", "hh_re", "hh_im", "l_ex_db", "xpr_db",
];

/// Comma-separated batch: eight real columns per matrix, then `l_ex` and XPR.
pub fn matrices_to_string(batch: &[(f64, PolarizationMatrix)]) -> String {
    let mut out = MATRIX_HEADER.join(",");
    out.push('\n');
    for (l_ex, m) in batch {
        for z in m.entries() {
            let _ = write!(out, "{},{},", fmt_f64(z.re), fmt_f64(z.im));
        }
        let _ = writeln!(out, "{},{}", fmt_f64(*l_ex), fmt_f64(m.xpr_db));
    }
    out
}
