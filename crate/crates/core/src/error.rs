use std::fmt;

use crate::geometry::Basis;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("basis mismatch: expected {expected}, found {found}")]
    BasisMismatch { expected: Basis, found: Basis },

    #[error("metric is not symmetric positive definite")]
    DegenerateMetric,

    #[error("invalid body parameter `{name}` = {value}")]
    InvalidParameter { name: &'static str, value: f64 },

    #[error("singular configuration (h = {h:.3e}, h_i = {h_i:.3e})")]
    SingularConfiguration { h: f64, h_i: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("integration diverged at t = {t:.6} s")]
    Divergence { t: f64 },

    #[error("invalid step size {dt} s (must lie in (0, {max}])")]
    InvalidStep { dt: f64, max: f64 },

    #[error("time {t} s is beyond the reference horizon {horizon} s")]
    BeyondHorizon { t: f64, horizon: f64 },

    #[error("{0}")]
    Reference(String),
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Basis::ChartInduced => "chart-induced",
            Basis::Kinematic => "kinematic {e}",
            Basis::Constrained => "constrained {X}",
        };
        f.write_str(name)
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
