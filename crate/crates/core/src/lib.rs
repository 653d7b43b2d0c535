//! Cross-polarization ratio (XPR) modelling of multipath components.
//!
//! The pipeline runs from dual-polarized power-angular-delay profiles
//! ([`padp`]) through path extraction ([`detect`]) to censored
//! maximum-likelihood fits of the two XPR models ([`estimate`], [`models`]),
//! model validation by total cross-polarization power ([`validate`]), and
//! sampling of polarization matrices ([`gscm`]). [`synthgen`] builds
//! synthetic campaigns with known ground truth.

pub mod detect;
pub mod error;
pub mod estimate;
pub mod fsutil;
pub mod gscm;
pub mod models;
pub mod normal;
pub mod optim;
pub mod padp;
pub mod synthgen;
pub mod validate;

pub use detect::{detect_mpcs, DetectionConfig, LinkMpcs, Mpc, MpcType};
pub use error::{Error, Result};
pub use estimate::{
    fit_campaign, fit_model1, fit_model2, CensoredObservation, FitOptions, FitResult,
    ObservationKind, Type3Mode,
};
pub use models::{mean_xpr, sample_xpr, XprModel};
pub use padp::{CampaignMeta, Grid, Padp};
