//! Fixed numerical thresholds shared across the crate.
//!
//! These are read-only constants; the acceptance suite and the simulator pin
//! against the same values.

/// Central-difference step used for metric and map partial derivatives.
pub const FD_STEP: f64 = 1e-6;

/// Configurations with `h² + h_i² ≤` this value (m²) are rejected as singular.
pub const ADMISSIBILITY_H2: f64 = 1e-6;

/// `|det ℛ|` below this value is treated as a singular frame.
pub const FRAME_DET_MIN: f64 = 1e-9;

/// Allocation requires `|h|, |h_i| ≥ ALLOCATION_H_FRACTION · l_i`.
pub const ALLOCATION_H_FRACTION: f64 = 0.05;

/// Drift corrections larger than this fraction of the cable length are logged.
pub const DRIFT_WARNING_FRACTION: f64 = 0.01;

/// Largest step accepted by the dynamics engine (s).
pub const MAX_DT: f64 = 0.05;

/// Initial configurations must satisfy `|C_i| <` this value (m²) to count as taut.
pub const TAUT_INIT_RESIDUAL: f64 = 1e-6;

/// Relative slack in the distance test used to re-engage a slack cable.
pub const REENGAGE_EPS: f64 = 1e-12;

/// Symmetry tolerance for metric construction.
pub const METRIC_SYMMETRY: f64 = 1e-12;

/// A cable whose tension falls below `-SLACK_TENSION` (N) goes slack.
pub const SLACK_TENSION: f64 = 1e-9;
