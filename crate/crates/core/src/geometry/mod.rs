//! Chart-based tensor calculus on the six-dimensional pair configuration
//! manifold (load pose plus one vehicle pose).
//!
//! Every vector, covector and linear map carries a [`Basis`] tag. Operations
//! check the tag and return [`Error::BasisMismatch`] instead of silently
//! reinterpreting components.

mod connection;
mod integrate;

pub use connection::{
    auto_parallel_rhs, covariant_derivative_of_map, covariant_derivative_of_map_6,
    levi_civita_christoffel, Christoffel, ChristoffelConvention, ConstantMetric, MetricField,
};
pub use integrate::{integrate_curve, rk4_step, step_count, CurveSample};

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::tolerances::METRIC_SYMMETRY;

pub type Vec6 = SVector<f64, 6>;
pub type Mat6 = SMatrix<f64, 6, 6>;

/// Frame in which components are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    /// `{∂x, ∂y, ∂θ, ∂x_i, ∂y_i, ∂θ_i}`
    ChartInduced,
    /// The kinematic frame `{e_1 .. e_6}`.
    Kinematic,
    /// The constrained frame `{X_1 .. X_6}`.
    Constrained,
}

/// Configuration of one load–vehicle pair in chart coordinates.
///
/// Headings are stored unwrapped; use [`ChartPoint::wrapped`] at reporting
/// boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChartPoint {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub x_i: f64,
    pub y_i: f64,
    pub theta_i: f64,
}

impl ChartPoint {
    pub fn new(x: f64, y: f64, theta: f64, x_i: f64, y_i: f64, theta_i: f64) -> Result<Self> {
        let p = Self { x, y, theta, x_i, y_i, theta_i };
        if p.is_finite() {
            Ok(p)
        } else {
            Err(Error::NonFinite("chart point"))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|c| c.is_finite())
    }

    pub fn to_vector(&self) -> Vec6 {
        Vec6::new(self.x, self.y, self.theta, self.x_i, self.y_i, self.theta_i)
    }

    pub fn from_vector(v: &Vec6) -> Self {
        Self { x: v[0], y: v[1], theta: v[2], x_i: v[3], y_i: v[4], theta_i: v[5] }
    }

    /// Moves the point along a chart-basis displacement.
    pub fn offset(&self, dq: &Vec6) -> Self {
        Self::from_vector(&(self.to_vector() + dq))
    }

    /// Copy with both headings mapped to `(−π, π]`.
    pub fn wrapped(&self) -> Self {
        Self { theta: wrap_angle(self.theta), theta_i: wrap_angle(self.theta_i), ..*self }
    }

    /// Vector from the vehicle to the load, `(x − x_i, y − y_i)`.
    pub fn cable_offset(&self) -> (f64, f64) {
        (self.x - self.x_i, self.y - self.y_i)
    }

    pub fn cable_distance(&self) -> f64 {
        let (dx, dy) = self.cable_offset();
        dx.hypot(dy)
    }
}

/// Maps an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    w
}

fn check_finite(v: &Vec6, what: &'static str) -> Result<()> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Tangent vector with an explicit basis tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentVec {
    components: Vec6,
    basis: Basis,
}

impl TangentVec {
    pub fn new(components: Vec6, basis: Basis) -> Result<Self> {
        check_finite(&components, "tangent vector")?;
        Ok(Self { components, basis })
    }

    /// Chart-basis vector; panics on non-finite input.
    pub fn chart(components: Vec6) -> Self {
        Self::new(components, Basis::ChartInduced).expect("finite tangent components")
    }

    pub fn zero(basis: Basis) -> Self {
        Self { components: Vec6::zeros(), basis }
    }

    pub fn components(&self) -> &Vec6 {
        &self.components
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    /// Components, provided they are in `basis`.
    pub fn in_basis(&self, basis: Basis) -> Result<&Vec6> {
        expect_basis(basis, self.basis)?;
        Ok(&self.components)
    }
}

/// Covector (one-form) with an explicit basis tag for the dual frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CotangentVec {
    components: Vec6,
    basis: Basis,
}

impl CotangentVec {
    pub fn new(components: Vec6, basis: Basis) -> Result<Self> {
        check_finite(&components, "cotangent vector")?;
        Ok(Self { components, basis })
    }

    pub fn chart(components: Vec6) -> Self {
        Self::new(components, Basis::ChartInduced).expect("finite covector components")
    }

    pub fn components(&self) -> &Vec6 {
        &self.components
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn in_basis(&self, basis: Basis) -> Result<&Vec6> {
        expect_basis(basis, self.basis)?;
        Ok(&self.components)
    }

    /// Pairing `α(v)`; both must be expressed in the same (dual) frame.
    pub fn apply(&self, v: &TangentVec) -> Result<f64> {
        expect_basis(self.basis, v.basis)?;
        Ok(self.components.dot(&v.components))
    }
}

/// A (1,1)-tensor: `entries[(a, b)]` is the `a`-th component of the image of
/// the `b`-th basis vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearMap {
    entries: Mat6,
    basis: Basis,
}

impl LinearMap {
    pub fn new(entries: Mat6, basis: Basis) -> Result<Self> {
        if entries.iter().all(|c| c.is_finite()) {
            Ok(Self { entries, basis })
        } else {
            Err(Error::NonFinite("linear map"))
        }
    }

    pub fn identity(basis: Basis) -> Self {
        Self { entries: Mat6::identity(), basis }
    }

    pub fn entries(&self) -> &Mat6 {
        &self.entries
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn apply(&self, v: &TangentVec) -> Result<TangentVec> {
        expect_basis(self.basis, v.basis)?;
        Ok(TangentVec { components: self.entries * v.components, basis: self.basis })
    }

    pub fn compose(&self, other: &LinearMap) -> Result<LinearMap> {
        expect_basis(self.basis, other.basis)?;
        Ok(LinearMap { entries: self.entries * other.entries, basis: self.basis })
    }
}

pub(crate) fn expect_basis(expected: Basis, found: Basis) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::BasisMismatch { expected, found })
    }
}

/// Kinetic-energy metric in the chart-induced basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricTensor {
    entries: Mat6,
}

impl MetricTensor {
    /// `diag(M, M, J, m_i, m_i, J_i)`.
    pub fn kinetic(load_mass: f64, load_inertia: f64, vehicle_mass: f64, vehicle_inertia: f64) -> Result<Self> {
        for (name, value) in [
            ("load mass", load_mass),
            ("load inertia", load_inertia),
            ("vehicle mass", vehicle_mass),
            ("vehicle inertia", vehicle_inertia),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter { name, value });
            }
        }
        let d = Vec6::new(load_mass, load_mass, load_inertia, vehicle_mass, vehicle_mass, vehicle_inertia);
        Ok(Self { entries: Mat6::from_diagonal(&d) })
    }

    /// Accepts any symmetric positive-definite matrix.
    pub fn from_matrix(entries: Mat6) -> Result<Self> {
        if !entries.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("metric"));
        }
        let scale = entries.amax().max(1.0);
        if (entries - entries.transpose()).amax() > METRIC_SYMMETRY * scale {
            return Err(Error::DegenerateMetric);
        }
        if entries.cholesky().is_none() {
            return Err(Error::DegenerateMetric);
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &Mat6 {
        &self.entries
    }

    /// `G(v, w)`; no factor ½.
    pub fn pair(&self, v: &TangentVec, w: &TangentVec) -> Result<f64> {
        let v = v.in_basis(Basis::ChartInduced)?;
        let w = w.in_basis(Basis::ChartInduced)?;
        Ok(v.dot(&(self.entries * w)))
    }

    /// Index lowering `G^♭`.
    pub fn flat(&self, v: &TangentVec) -> Result<CotangentVec> {
        let v = v.in_basis(Basis::ChartInduced)?;
        CotangentVec::new(self.entries * v, Basis::ChartInduced)
    }

    /// Index raising `G^♯`, solved with a Cholesky factorisation.
    pub fn sharp(&self, alpha: &CotangentVec) -> Result<TangentVec> {
        let a = alpha.in_basis(Basis::ChartInduced)?;
        let chol = self.entries.cholesky().ok_or(Error::DegenerateMetric)?;
        TangentVec::new(chol.solve(a), Basis::ChartInduced)
    }
}

impl MetricField<6> for MetricTensor {
    fn metric_at(&self, _p: &Vec6) -> Mat6 {
        self.entries
    }

    fn is_constant(&self) -> bool {
        true
    }
}
