use nalgebra::{SMatrix, SVector};

use super::{expect_basis, Basis, LinearMap, TangentVec, Vec6};
use crate::error::{Error, Result};
use crate::tolerances::FD_STEP;

/// A metric tensor field over an `N`-dimensional chart.
pub trait MetricField<const N: usize> {
    fn metric_at(&self, p: &SVector<f64, N>) -> SMatrix<f64, N, N>;

    /// True when the entries do not depend on the point; Christoffel symbols
    /// are then exactly zero.
    fn is_constant(&self) -> bool {
        false
    }
}

/// Wraps a constant matrix as a metric field of any dimension.
#[derive(Debug, Clone, Copy)]
pub struct ConstantMetric<const N: usize>(pub SMatrix<f64, N, N>);

impl<const N: usize> MetricField<N> for ConstantMetric<N> {
    fn metric_at(&self, _p: &SVector<f64, N>) -> SMatrix<f64, N, N> {
        self.0
    }

    fn is_constant(&self) -> bool {
        true
    }
}

impl<const N: usize, F> MetricField<N> for F
where
    F: Fn(&SVector<f64, N>) -> SMatrix<f64, N, N>,
{
    fn metric_at(&self, p: &SVector<f64, N>) -> SMatrix<f64, N, N> {
        self(p)
    }
}

/// Which coefficient formula to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChristoffelConvention {
    /// `½ G^{km}(∂_i G_mj + ∂_j G_mi − ∂_m G_ij)`.
    #[default]
    Standard,
    /// All-plus derivative terms and no ½ factor. Kept only so tests can show
    /// that its auto-parallel curves are not metric geodesics.
    AsPrinted,
}

/// Connection coefficients at one point: `coeff(k, i, j) = Γ^k_ij`, with
/// `∇_{∂_i} ∂_j = Γ^k_ij ∂_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel<const N: usize> {
    coeffs: [[[f64; N]; N]; N],
    analytic_zero: bool,
}

impl<const N: usize> Christoffel<N> {
    pub fn zero() -> Self {
        Self { coeffs: [[[0.0; N]; N]; N], analytic_zero: true }
    }

    pub fn from_coefficients(coeffs: [[[f64; N]; N]; N]) -> Self {
        Self { coeffs, analytic_zero: false }
    }

    pub fn coeff(&self, k: usize, i: usize, j: usize) -> f64 {
        self.coeffs[k][i][j]
    }

    /// Set when the field came from a constant metric.
    pub fn is_analytic_zero(&self) -> bool {
        self.analytic_zero
    }

    /// `Γ^k_ij a^i b^j` for each `k`.
    pub fn contract(&self, a: &SVector<f64, N>, b: &SVector<f64, N>) -> SVector<f64, N> {
        let mut out = SVector::<f64, N>::zeros();
        if self.analytic_zero {
            return out;
        }
        for k in 0..N {
            let mut s = 0.0;
            for i in 0..N {
                for j in 0..N {
                    s += self.coeffs[k][i][j] * a[i] * b[j];
                }
            }
            out[k] = s;
        }
        out
    }

    /// Largest `|Γ^k_ij − Γ^k_ji|`.
    pub fn torsion_norm(&self) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..N {
            for i in 0..N {
                for j in 0..N {
                    worst = worst.max((self.coeffs[k][i][j] - self.coeffs[k][j][i]).abs());
                }
            }
        }
        worst
    }
}

/// Levi-Civita coefficients of `field` at `p`.
///
/// Constant fields return an exact zero. Otherwise metric partials are taken
/// by central differences with step [`FD_STEP`].
pub fn levi_civita_christoffel<const N: usize, F: MetricField<N> + ?Sized>(
    field: &F,
    p: &SVector<f64, N>,
    convention: ChristoffelConvention,
) -> Result<Christoffel<N>> {
    let g = field.metric_at(p);
    let inv = g.cholesky().ok_or(Error::DegenerateMetric)?.inverse();
    if field.is_constant() {
        return Ok(Christoffel::zero());
    }

    // dg[m] = ∂_m G
    let mut dg = [SMatrix::<f64, N, N>::zeros(); N];
    for (m, slot) in dg.iter_mut().enumerate() {
        let mut fwd = *p;
        let mut bwd = *p;
        fwd[m] += FD_STEP;
        bwd[m] -= FD_STEP;
        *slot = (field.metric_at(&fwd) - field.metric_at(&bwd)) / (2.0 * FD_STEP);
        if slot.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("metric partial derivative"));
        }
    }

    let (factor, sign) = match convention {
        ChristoffelConvention::Standard => (0.5, -1.0),
        ChristoffelConvention::AsPrinted => (1.0, 1.0),
    };
    let mut coeffs = [[[0.0; N]; N]; N];
    for i in 0..N {
        for j in 0..N {
            // lowered[m] = ∂_i G_mj + ∂_j G_mi ± ∂_m G_ij
            let lowered =
                SVector::<f64, N>::from_fn(|m, _| dg[i][(m, j)] + dg[j][(m, i)] + sign * dg[m][(i, j)]);
            let raised = inv * lowered * factor;
            for k in 0..N {
                coeffs[k][i][j] = raised[k];
            }
        }
    }
    Ok(Christoffel::from_coefficients(coeffs))
}

/// Auto-parallel acceleration `γ̈^k = −Γ^k_ij γ̇^i γ̇^j`.
pub fn auto_parallel_rhs(gamma: &Christoffel<6>, v: &TangentVec) -> Result<Vec6> {
    let v = v.in_basis(Basis::ChartInduced)?;
    Ok(-gamma.contract(v, v))
}

/// Covariant derivative of a (1,1)-tensor field along `y` in chart components:
///
/// `(∇_Y A)^a_b = Y^k (∂_k A^a_b + Γ^a_kr A^r_b − Γ^r_kb A^a_r)`.
///
/// `map_field(q)` returns the matrix `A^a_b` (row `a`, column `b`). Partials
/// are central differences with step [`FD_STEP`].
pub fn covariant_derivative_of_map<const N: usize, F>(
    map_field: F,
    y: &SVector<f64, N>,
    p: &SVector<f64, N>,
    gamma: &Christoffel<N>,
) -> Result<SMatrix<f64, N, N>>
where
    F: Fn(&SVector<f64, N>) -> Result<SMatrix<f64, N, N>>,
{
    let mut out = SMatrix::<f64, N, N>::zeros();
    for k in 0..N {
        if y[k] == 0.0 {
            continue;
        }
        let mut fwd = *p;
        let mut bwd = *p;
        fwd[k] += FD_STEP;
        bwd[k] -= FD_STEP;
        let partial = (map_field(&fwd)? - map_field(&bwd)?) / (2.0 * FD_STEP);
        if partial.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("map partial derivative"));
        }
        out += partial * y[k];
    }
    if gamma.is_analytic_zero() {
        return Ok(out);
    }
    let a = map_field(p)?;
    for row in 0..N {
        for col in 0..N {
            let mut s = 0.0;
            for k in 0..N {
                for r in 0..N {
                    s += y[k] * (gamma.coeff(row, k, r) * a[(r, col)] - gamma.coeff(r, k, col) * a[(row, r)]);
                }
            }
            out[(row, col)] += s;
        }
    }
    Ok(out)
}

/// Basis-checked wrapper of [`covariant_derivative_of_map`] on the pair
/// manifold.
pub fn covariant_derivative_of_map_6<F>(
    map_field: F,
    y: &TangentVec,
    p: &Vec6,
    gamma: &Christoffel<6>,
) -> Result<LinearMap>
where
    F: Fn(&Vec6) -> Result<LinearMap>,
{
    let yc = *y.in_basis(Basis::ChartInduced)?;
    let raw = covariant_derivative_of_map(
        |q| {
            let m = map_field(q)?;
            expect_basis(Basis::ChartInduced, m.basis())?;
            Ok(*m.entries())
        },
        &yc,
        p,
        gamma,
    )?;
    LinearMap::new(raw, Basis::ChartInduced)
}
