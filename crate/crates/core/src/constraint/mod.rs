//! Constraint geometry of one load–vehicle pair.
//!
//! Chart coordinates are `(x, y, θ, x_i, y_i, θ_i)`. The pair carries three
//! frames of `TQ`:
//!
//! - chart-induced `{∂q}`;
//! - kinematic `{e_k}`: `e_1..e_4` span the no-side-slip distribution Δ,
//!   `e_5, e_6` are the lateral completions;
//! - constrained `{X_k}`: `X_1..X_3` span the distribution 𝒟 that also keeps
//!   the cable length fixed, `X_4..X_6` complete the frame.
//!
//! Frame order follows the rows of the basis matrix ℛ:
//! `X_1 = h_i e_1 + h e_3`, `X_2 = ∂θ`, `X_3 = ∂θ_i`.

mod connection;

pub use connection::{Complement, ConstrainedConnection, FrameChristoffel};

use nalgebra::{SMatrix, Matrix3};

use crate::error::{Error, Result};
use crate::geometry::{Basis, ChartPoint, CotangentVec, LinearMap, Mat6, MetricTensor, TangentVec, Vec6};
use crate::tolerances::{ADMISSIBILITY_H2, FRAME_DET_MIN};

type Mat36 = SMatrix<f64, 3, 6>;

/// Cable data of one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairGeometry {
    cable_length: f64,
}

impl PairGeometry {
    pub fn new(cable_length: f64) -> Result<Self> {
        if cable_length.is_finite() && cable_length > 0.0 {
            Ok(Self { cable_length })
        } else {
            Err(Error::InvalidParameter { name: "cable length", value: cable_length })
        }
    }

    pub fn cable_length(&self) -> f64 {
        self.cable_length
    }

    pub fn residual(&self, q: &ChartPoint) -> f64 {
        holonomic_residual(q, self.cable_length)
    }
}

/// `h = (x − x_i) cos θ + (y − y_i) sin θ`, `h_i` likewise with `θ_i`.
pub fn h_factors(q: &ChartPoint) -> (f64, f64) {
    let (dx, dy) = q.cable_offset();
    let h = dx * q.theta.cos() + dy * q.theta.sin();
    let h_i = dx * q.theta_i.cos() + dy * q.theta_i.sin();
    (h, h_i)
}

/// Rejects configurations where both `h` and `h_i` vanish.
pub fn check_admissible(q: &ChartPoint) -> Result<(f64, f64)> {
    let (h, h_i) = h_factors(q);
    if h * h + h_i * h_i > ADMISSIBILITY_H2 {
        Ok((h, h_i))
    } else {
        Err(Error::SingularConfiguration { h, h_i })
    }
}

/// Columns are `e_1 .. e_6` in chart components. The matrix is orthogonal.
pub fn kinematic_frame(q: &ChartPoint) -> Mat6 {
    let (s, c) = q.theta.sin_cos();
    let (si, ci) = q.theta_i.sin_cos();
    #[rustfmt::skip]
    let m = Mat6::new(
        c,   0.0, 0.0, 0.0, s,   0.0,
        s,   0.0, 0.0, 0.0, -c,  0.0,
        0.0, 1.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, ci,  0.0, 0.0, si,
        0.0, 0.0, si,  0.0, 0.0, -ci,
        0.0, 0.0, 0.0, 1.0, 0.0, 0.0,
    );
    m
}

/// `e_1 .. e_4` (generators of Δ) followed by the completions `e_5, e_6`.
pub fn delta_generators(q: &ChartPoint) -> [TangentVec; 6] {
    let e = kinematic_frame(q);
    std::array::from_fn(|k| TangentVec::chart(e.column(k).into_owned()))
}

/// Directional derivative of the frame field `e_j` along the chart vector `w`.
pub(crate) fn kinematic_frame_derivative(q: &ChartPoint, j: usize, w: &Vec6) -> Vec6 {
    let (s, c) = q.theta.sin_cos();
    let (si, ci) = q.theta_i.sin_cos();
    match j {
        0 => Vec6::new(-s, c, 0.0, 0.0, 0.0, 0.0) * w[2],
        2 => Vec6::new(0.0, 0.0, 0.0, -si, ci, 0.0) * w[5],
        4 => Vec6::new(c, s, 0.0, 0.0, 0.0, 0.0) * w[2],
        5 => Vec6::new(0.0, 0.0, 0.0, ci, si, 0.0) * w[5],
        _ => Vec6::zeros(),
    }
}

/// Chart components → `{e_k}` components.
pub fn to_kinematic(q: &ChartPoint, v: &TangentVec) -> Result<TangentVec> {
    let c = v.in_basis(Basis::ChartInduced)?;
    TangentVec::new(kinematic_frame(q).transpose() * c, Basis::Kinematic)
}

/// `{e_k}` components → chart components.
pub fn from_kinematic(q: &ChartPoint, v: &TangentVec) -> Result<TangentVec> {
    let c = v.in_basis(Basis::Kinematic)?;
    TangentVec::new(kinematic_frame(q) * c, Basis::ChartInduced)
}

/// Generators of Λ: `α_1 = sin θ_i dx_i − cos θ_i dy_i`, `α_2 = sin θ dx − cos θ dy`.
pub fn lambda_generators(q: &ChartPoint) -> [CotangentVec; 2] {
    let (s, c) = q.theta.sin_cos();
    let (si, ci) = q.theta_i.sin_cos();
    [
        CotangentVec::chart(Vec6::new(0.0, 0.0, 0.0, si, -ci, 0.0)),
        CotangentVec::chart(Vec6::new(s, -c, 0.0, 0.0, 0.0, 0.0)),
    ]
}

/// `(x − x_i)² + (y − y_i)² − l_i²`.
pub fn holonomic_residual(q: &ChartPoint, cable_length: f64) -> f64 {
    let (dx, dy) = q.cable_offset();
    dx * dx + dy * dy - cable_length * cable_length
}

/// `(x − x_i)(dx − dx_i) + (y − y_i)(dy − dy_i)`, unnormalised.
pub fn dc(q: &ChartPoint) -> CotangentVec {
    let (dx, dy) = q.cable_offset();
    CotangentVec::chart(Vec6::new(dx, dy, 0.0, -dx, -dy, 0.0))
}

/// `Σ = dC ⊕ Λ`, ordered `[dC, α_1, α_2]`.
pub fn sigma_generators(q: &ChartPoint) -> [CotangentVec; 3] {
    let [a1, a2] = lambda_generators(q);
    [dc(q), a1, a2]
}

/// Rows are the generators of Σ.
pub(crate) fn sigma_matrix(q: &ChartPoint) -> Mat36 {
    let rows = sigma_generators(q);
    Mat36::from_fn(|r, c| rows[r].components()[c])
}

/// Directional derivative of [`sigma_matrix`] along the chart vector `w`.
pub(crate) fn sigma_matrix_derivative(q: &ChartPoint, w: &Vec6) -> Mat36 {
    let (s, c) = q.theta.sin_cos();
    let (si, ci) = q.theta_i.sin_cos();
    let rx = w[0] - w[3];
    let ry = w[1] - w[4];
    #[rustfmt::skip]
    let m = Mat36::new(
        rx,          ry,          0.0, -rx,          -ry,          0.0,
        0.0,         0.0,         0.0, ci * w[5],    si * w[5],    0.0,
        c * w[2],    s * w[2],    0.0, 0.0,          0.0,          0.0,
    );
    m
}

/// Constrained frame `X_1 .. X_6` in chart components.
pub fn d_generators(q: &ChartPoint) -> Result<[TangentVec; 6]> {
    let r = BasisMatrix::rows_unchecked(q);
    check_admissible(q)?;
    Ok(std::array::from_fn(|k| TangentVec::chart(r.row(k).transpose())))
}

/// The basis matrix ℛ: row `k` holds the chart components of `X_{k+1}`, so
/// that `X = ℛ ∂q` as frames. Component vectors transform with `ℛ^{-T}`.
#[derive(Debug, Clone, Copy)]
pub struct BasisMatrix {
    rows: Mat6,
    lu: nalgebra::LU<f64, nalgebra::Const<6>, nalgebra::Const<6>>,
}

impl BasisMatrix {
    pub fn at(q: &ChartPoint) -> Result<Self> {
        let (h, h_i) = check_admissible(q)?;
        let rows = Self::rows_unchecked(q);
        let lu = rows.lu();
        if lu.determinant().abs() < FRAME_DET_MIN {
            return Err(Error::SingularConfiguration { h, h_i });
        }
        Ok(Self { rows, lu })
    }

    fn rows_unchecked(q: &ChartPoint) -> Mat6 {
        let (h, h_i) = h_factors(q);
        let (s, c) = q.theta.sin_cos();
        let (si, ci) = q.theta_i.sin_cos();
        #[rustfmt::skip]
        let m = Mat6::new(
            h_i * c, h_i * s, 0.0, h * ci, h * si, 0.0,
            0.0,     0.0,     1.0, 0.0,    0.0,    0.0,
            0.0,     0.0,     0.0, 0.0,    0.0,    1.0,
            c,       s,       0.0, 0.0,    0.0,    0.0,
            s,       -c,      0.0, 0.0,    0.0,    0.0,
            0.0,     0.0,     0.0, si,     -ci,    0.0,
        );
        m
    }

    pub fn matrix(&self) -> &Mat6 {
        &self.rows
    }

    pub fn determinant(&self) -> f64 {
        self.lu.determinant()
    }

    /// Chart components → `{X_k}` components (solves `ℛᵀ w_X = w_∂`).
    pub fn to_constrained(&self, v: &TangentVec) -> Result<TangentVec> {
        let c = v.in_basis(Basis::ChartInduced)?;
        let x = self
            .rows
            .transpose()
            .lu()
            .solve(c)
            .ok_or(Error::NonFinite("frame change"))?;
        TangentVec::new(x, Basis::Constrained)
    }

    /// `{X_k}` components → chart components (`w_∂ = ℛᵀ w_X`).
    pub fn to_chart(&self, v: &TangentVec) -> Result<TangentVec> {
        let c = v.in_basis(Basis::Constrained)?;
        TangentVec::new(self.rows.transpose() * c, Basis::ChartInduced)
    }

    /// Chart matrix of the map whose `{X}` matrix is `in_x`:
    /// `ℛᵀ in_x ℛ^{-T}`, evaluated as the transpose of `ℛ^{-1}(in_xᵀ ℛ)`.
    fn conjugate(&self, in_x: &Mat6) -> Result<Mat6> {
        let rhs = in_x.transpose() * self.rows;
        let t = self.lu.solve(&rhs).ok_or(Error::NonFinite("frame solve"))?;
        Ok(t.transpose())
    }
}

/// Matrix of `P` in the `{X}` frame: `diag(I₃, 0)`.
pub fn projection_in_constrained_frame() -> LinearMap {
    let d = Vec6::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0);
    LinearMap::new(Mat6::from_diagonal(&d), Basis::Constrained).expect("finite")
}

/// `(P, P′)` in chart components, with `P` projecting onto `span(X_1..X_3)`
/// along `span(X_4..X_6)`.
pub fn projection_maps(q: &ChartPoint) -> Result<(LinearMap, LinearMap)> {
    let r = BasisMatrix::at(q)?;
    let p = r.conjugate(projection_in_constrained_frame().entries())?;
    let p_c = Mat6::identity() - p;
    Ok((LinearMap::new(p, Basis::ChartInduced)?, LinearMap::new(p_c, Basis::ChartInduced)?))
}

/// Pieces of the metric-orthogonal complement `P′ = G⁻¹Σᵀ(ΣG⁻¹Σᵀ)⁻¹Σ`.
struct MetricComplement {
    g_inv: Mat6,
    sigma: Mat36,
    gram: nalgebra::Cholesky<f64, nalgebra::Const<3>>,
}

impl MetricComplement {
    fn new(q: &ChartPoint, metric: &MetricTensor) -> Result<Self> {
        let (h, h_i) = check_admissible(q)?;
        let g_inv = metric
            .entries()
            .cholesky()
            .ok_or(Error::DegenerateMetric)?
            .inverse();
        let sigma = sigma_matrix(q);
        let gram: Matrix3<f64> = sigma * g_inv * sigma.transpose();
        let gram = gram.cholesky().ok_or(Error::SingularConfiguration { h, h_i })?;
        Ok(Self { g_inv, sigma, gram })
    }

    fn complement(&self) -> Mat6 {
        let s_inv_sigma = self.gram.solve(&self.sigma);
        self.g_inv * self.sigma.transpose() * s_inv_sigma
    }

    fn derivative(&self, d_sigma: &Mat36) -> Mat6 {
        let s_inv_sigma = self.gram.solve(&self.sigma);
        let s_inv_dsigma = self.gram.solve(d_sigma);
        let d_gram: Matrix3<f64> =
            d_sigma * self.g_inv * self.sigma.transpose() + self.sigma * self.g_inv * d_sigma.transpose();
        let middle = self.gram.solve(&(d_gram * s_inv_sigma));
        self.g_inv
            * (d_sigma.transpose() * s_inv_sigma + self.sigma.transpose() * s_inv_dsigma
                - self.sigma.transpose() * middle)
    }
}

/// `(P, P′)` in chart components with `P` the `G`-orthogonal projection onto 𝒟.
///
/// Same range as [`projection_maps`]; the kernel is the `G`-orthogonal
/// complement `G⁻¹Σ` rather than `span(X_4..X_6)`.
pub fn metric_projection_maps(q: &ChartPoint, metric: &MetricTensor) -> Result<(LinearMap, LinearMap)> {
    let p_c = MetricComplement::new(q, metric)?.complement();
    Ok((
        LinearMap::new(Mat6::identity() - p_c, Basis::ChartInduced)?,
        LinearMap::new(p_c, Basis::ChartInduced)?,
    ))
}

/// Exact directional derivative of the metric complement `P′` along `w`.
pub fn metric_complement_derivative(q: &ChartPoint, metric: &MetricTensor, w: &Vec6) -> Result<Mat6> {
    let mc = MetricComplement::new(q, metric)?;
    Ok(mc.derivative(&sigma_matrix_derivative(q, w)))
}

/// Lagrange multipliers and constrained acceleration for `G q̈ = F + Σᵀλ`
/// subject to `Σ q̈ + Σ̇ q̇ = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstrainedAcceleration {
    pub acceleration: Vec6,
    /// Multipliers ordered like [`sigma_generators`].
    pub multipliers: nalgebra::Vector3<f64>,
}

/// Solves the constrained equations of motion directly in chart components.
pub fn constrained_acceleration(
    q: &ChartPoint,
    metric: &MetricTensor,
    velocity: &Vec6,
    force: &Vec6,
) -> Result<ConstrainedAcceleration> {
    let mc = MetricComplement::new(q, metric)?;
    let bias = sigma_matrix_derivative(q, velocity) * velocity;
    let free = mc.g_inv * force;
    let lambda = mc.gram.solve(&(-bias - mc.sigma * free));
    let acceleration = free + mc.g_inv * mc.sigma.transpose() * lambda;
    Ok(ConstrainedAcceleration { acceleration, multipliers: lambda })
}
