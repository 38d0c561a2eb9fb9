use super::{
    kinematic_frame, kinematic_frame_derivative, metric_complement_derivative, metric_projection_maps,
    projection_maps,
};
use crate::error::Result;
use crate::geometry::{
    covariant_derivative_of_map_6, levi_civita_christoffel, Basis, ChartPoint, Christoffel, LinearMap, Mat6,
    MetricTensor, TangentVec, Vec6,
};

/// Which complementary projection amends the metric connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Complement {
    /// Kernel `G⁻¹Σ`; the constrained geodesics conserve kinetic energy.
    #[default]
    MetricOrthogonal,
    /// Kernel `span(X_4, X_5, X_6)` from the basis matrix.
    Frame,
}

/// `∇ᴰ_X Y = ∇ᴳ_X Y + (∇ᴳ_X P′)(Y)` on one pair.
#[derive(Debug, Clone)]
pub struct ConstrainedConnection {
    metric: MetricTensor,
    complement: Complement,
    metric_symbols: Christoffel<6>,
}

/// Generalised symbols in the kinematic frame: `∇ᴰ_{e_k} e_j = Γ^i_jk e_i`,
/// stored as `gamma[i][j][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameChristoffel {
    pub gamma: [[[f64; 6]; 6]; 6],
}

impl FrameChristoffel {
    /// `Γ^i_jk u^j u^k`.
    pub fn contract(&self, u: &Vec6) -> Vec6 {
        Vec6::from_fn(|i, _| {
            let mut s = 0.0;
            for j in 0..6 {
                for k in 0..6 {
                    s += self.gamma[i][j][k] * u[j] * u[k];
                }
            }
            s
        })
    }
}

impl ConstrainedConnection {
    pub fn new(metric: MetricTensor, complement: Complement) -> Result<Self> {
        let metric_symbols = levi_civita_christoffel(&metric, &Vec6::zeros(), Default::default())?;
        Ok(Self { metric, complement, metric_symbols })
    }

    pub fn metric(&self) -> &MetricTensor {
        &self.metric
    }

    pub fn complement(&self) -> Complement {
        self.complement
    }

    /// `(P, P′)` in chart components for the configured complement.
    pub fn projections(&self, q: &ChartPoint) -> Result<(LinearMap, LinearMap)> {
        match self.complement {
            Complement::MetricOrthogonal => metric_projection_maps(q, &self.metric),
            Complement::Frame => projection_maps(q),
        }
    }

    /// `∇ᴳ_w P′` in chart components, through the generic covariant
    /// derivative of a map.
    pub fn complement_derivative(&self, q: &ChartPoint, w: &TangentVec) -> Result<LinearMap> {
        let field = |p: &Vec6| self.projections(&ChartPoint::from_vector(p)).map(|(_, pc)| pc);
        covariant_derivative_of_map_6(field, w, &q.to_vector(), &self.metric_symbols)
    }

    /// `(∇ᴳ_v P′)(v)`, the amendment term of the constrained connection.
    pub fn connection_term(&self, q: &ChartPoint, v: &TangentVec) -> Result<TangentVec> {
        let d = self.complement_derivative(q, v)?;
        d.apply(v)
    }

    /// Generalised Christoffel symbols of `∇ᴰ` in the kinematic frame.
    pub fn generalized_christoffel(&self, q: &ChartPoint) -> Result<FrameChristoffel> {
        let e = kinematic_frame(q);
        let mut gamma = [[[0.0; 6]; 6]; 6];
        for k in 0..6 {
            let ek = e.column(k).into_owned();
            let dpc = *self.complement_derivative(q, &TangentVec::chart(ek))?.entries();
            for j in 0..6 {
                let ej = e.column(j).into_owned();
                let nabla = kinematic_frame_derivative(q, j, &ek) + dpc * ej;
                let in_e = e.transpose() * nabla;
                for i in 0..6 {
                    gamma[i][j][k] = in_e[i];
                }
            }
        }
        Ok(FrameChristoffel { gamma })
    }

    /// `Γ^i_jk u^j u^k` for kinematic coefficients `u`, evaluated without
    /// building the full symbol table. Returns kinematic-frame components.
    ///
    /// Uses the closed-form derivative of `P′` for the metric complement and
    /// finite differences otherwise.
    pub fn poincare_drift(&self, q: &ChartPoint, u: &Vec6) -> Result<Vec6> {
        let e = kinematic_frame(q);
        let v = e * u;
        let dpc: Mat6 = match self.complement {
            Complement::MetricOrthogonal => metric_complement_derivative(q, &self.metric, &v)?,
            Complement::Frame => *self.complement_derivative(q, &TangentVec::chart(v))?.entries(),
        };
        let mut nabla = dpc * v;
        for j in 0..6 {
            if u[j] != 0.0 {
                nabla += kinematic_frame_derivative(q, j, &v) * u[j];
            }
        }
        Ok(e.transpose() * nabla)
    }

    /// Basis-tagged form of [`Self::poincare_drift`].
    pub fn drift(&self, q: &ChartPoint, u: &TangentVec) -> Result<TangentVec> {
        let d = self.poincare_drift(q, u.in_basis(Basis::Kinematic)?)?;
        TangentVec::new(d, Basis::Kinematic)
    }
}
