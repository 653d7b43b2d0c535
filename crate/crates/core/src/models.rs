//! The two multipath XPR distributions.
//!
//! Both models draw `XPR|dB` from a normal distribution. Model 1 has a
//! constant mean; model 2 has a mean that falls linearly with the path's
//! excess loss and is clipped to 0 dB once the line crosses zero.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fsutil;
use crate::padp::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XprModel {
    /// Constant mean `mu1` dB, standard deviation `sigma1` dB.
    Model1 { mu1: f64, sigma1: f64 },
    /// Mean `alpha2·L_ex + beta2` dB (clipped at 0), standard deviation `sigma2` dB.
    Model2 { alpha2: f64, beta2: f64, sigma2: f64 },
}

impl XprModel {
    /// Frequency- and environment-averaged excess-loss model: `(−0.5, 28, 6)`.
    pub const AVERAGE: XprModel = XprModel::Model2 {
        alpha2: -0.5,
        beta2: 28.0,
        sigma2: 6.0,
    };

    pub fn sigma(&self) -> f64 {
        match *self {
            XprModel::Model1 { sigma1, .. } => sigma1,
            XprModel::Model2 { sigma2, .. } => sigma2,
        }
    }

    /// 1 or 2.
    pub fn number(&self) -> u8 {
        match self {
            XprModel::Model1 { .. } => 1,
            XprModel::Model2 { .. } => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = match *self {
            XprModel::Model1 { mu1, sigma1 } => mu1.is_finite() && sigma1.is_finite(),
            XprModel::Model2 {
                alpha2,
                beta2,
                sigma2,
            } => alpha2.is_finite() && beta2.is_finite() && sigma2.is_finite(),
        };
        if !finite {
            return Err(Error::Domain(format!("non-finite model parameter in {self:?}")));
        }
        if self.sigma() < 0.0 {
            return Err(Error::Domain(format!("negative sigma in {self:?}")));
        }
        Ok(())
    }

    /// Sign sanity of a fitted model 2: decreasing mean and positive intercept.
    pub fn is_physically_plausible(&self) -> bool {
        match *self {
            XprModel::Model1 { sigma1, .. } => sigma1 > 0.0,
            XprModel::Model2 {
                alpha2,
                beta2,
                sigma2,
            } => alpha2 < 0.0 && beta2 > 0.0 && sigma2 > 0.0,
        }
    }

    /// Render as a `key = value` parameter file.
    pub fn to_param_string(&self) -> String {
        let mut out = String::new();
        match *self {
            XprModel::Model1 { mu1, sigma1 } => {
                let _ = writeln!(out, "model = 1");
                let _ = writeln!(out, "mu1 = {}", fmt_f64(mu1));
                let _ = writeln!(out, "sigma1 = {}", fmt_f64(sigma1));
            }
            XprModel::Model2 {
                alpha2,
                beta2,
                sigma2,
            } => {
                let _ = writeln!(out, "model = 2");
                let _ = writeln!(out, "alpha2 = {}", fmt_f64(alpha2));
                let _ = writeln!(out, "beta2 = {}", fmt_f64(beta2));
                let _ = writeln!(out, "sigma2 = {}", fmt_f64(sigma2));
            }
        }
        out
    }

    pub fn from_param_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::parse(line_of_toml_error(text, &e), e.message()))?;
        let num = |key: &str| -> Result<f64> {
            match table.get(key) {
                Some(toml::Value::Float(f)) => Ok(*f),
                Some(toml::Value::Integer(i)) => Ok(*i as f64),
                Some(other) => Err(Error::parse(0, format!("`{key}` must be a number, got {other}"))),
                None => Err(Error::parse(0, format!("missing parameter `{key}`"))),
            }
        };
        let model = match table.get("model") {
            Some(toml::Value::Integer(1)) => XprModel::Model1 {
                mu1: num("mu1")?,
                sigma1: num("sigma1")?,
            },
            Some(toml::Value::Integer(2)) => XprModel::Model2 {
                alpha2: num("alpha2")?,
                beta2: num("beta2")?,
                sigma2: num("sigma2")?,
            },
            Some(other) => return Err(Error::parse(0, format!("`model` must be 1 or 2, got {other}"))),
            None => return Err(Error::parse(0, "missing `model = 1|2`")),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_param_str(&text).map_err(|e| e.in_file(path))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, self.to_param_string().as_bytes())
    }
}

pub(crate) fn line_of_toml_error(text: &str, e: &toml::de::Error) -> usize {
    e.span()
        .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1)
}

/// Mean XPR in dB of a path with excess loss `l_ex` dB.
pub fn mean_xpr(model: &XprModel, l_ex: f64) -> f64 {
    match *model {
        XprModel::Model1 { mu1, .. } => mu1,
        // For α2 < 0 this is the line up to L_ex = −β2/α2 and 0 beyond.
        XprModel::Model2 { alpha2, beta2, .. } => (alpha2 * l_ex + beta2).max(0.0),
    }
}

/// One XPR draw in dB. Not truncated: negative values are valid draws.
pub fn sample_xpr<R: Rng + ?Sized>(model: &XprModel, l_ex: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    mean_xpr(model, l_ex) + model.sigma() * z
}

/// Linear-scale XPR `κ = 10^(XPR/10)`.
pub fn kappa_from_db(xpr_db: f64) -> f64 {
    10f64.powf(xpr_db / 10.0)
}

/// XPR of a linearly polarized wave rotated by `gamma` radians.
pub fn xpr_from_rotation(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < FRAC_PI_2) {
        return Err(Error::Domain(format!(
            "rotation angle must lie in (0, π/2), got {gamma}"
        )));
    }
    Ok(20.0 * (1.0 / gamma.tan()).log10())
}

/// Mean rotation angle implied by the linear part of model 2 under the
/// small-angle approximation `tan γ ≈ γ`.
pub fn rotation_from_model(alpha: f64, beta: f64, l_ex: f64) -> f64 {
    10f64.powf(-beta / 20.0) * 10f64.powf(l_ex / 10.0).powf(-alpha / 2.0)
}
