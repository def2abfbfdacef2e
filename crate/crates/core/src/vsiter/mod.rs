//! V-s iteration with a union of shape functions.
//!
//! Each iteration fixes `V` to find the largest certified level `gamma` and
//! shape levels `beta_i` (linear in the multipliers), then fixes the
//! multipliers and solves for a new `V` (linear in `V`).

mod certificate;
mod config;
mod round;
mod steps;

use crate::lyap::LyapError;
use crate::shapes::ShapeError;
use crate::sos::SosError;

pub use certificate::{Certificate, CertificateError, ReplayItem, ReplayReport};
pub use config::{ConfigError, DegreeRange, InitialV, IterationConfig, Placement, RoundConfig, ShapeSpec, VStepCentering};
pub use round::{
    level_set_certificate, place_shapes, run_multiround, run_round, trace_csv, timing_csv, RoundResult,
    StopReason, TraceRow,
};
pub use steps::{beta_step, gamma_step, v_step, BetaResult, FixedShape, GammaResult, VStepResult};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VsError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no multiplier certifies any positive level of V")]
    InfeasibleAtZero,
    #[error("shape {index}: no level is certifiable; V at its center is {value_at_center} against gamma {gamma}")]
    ShapeInfeasible {
        index: usize,
        value_at_center: f64,
        gamma: f64,
    },
    #[error("V-step found no Lyapunov function for the fixed multipliers")]
    VStepInfeasible,
    #[error("no iteration produced a certificate that passes replay")]
    NoCertificate,
    #[error("polynomial dimensions disagree with the system")]
    Dimension,
    #[error(transparent)]
    Lyapunov(#[from] LyapError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Sos(#[from] SosError),
}

impl From<crate::sdp::SdpError> for VsError {
    fn from(e: crate::sdp::SdpError) -> Self {
        VsError::Sos(SosError::Sdp(e))
    }
}
