use nalgebra::SVector;

use crate::error::{Error, Result};

/// One sample of a second-order curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSample<const N: usize> {
    pub t: f64,
    pub q: SVector<f64, N>,
    pub v: SVector<f64, N>,
}

/// Classical four-stage Runge–Kutta step for `ẏ = f(y)`.
pub fn rk4_step<const M: usize, E>(
    y: &SVector<f64, M>,
    dt: f64,
    mut f: impl FnMut(&SVector<f64, M>) -> std::result::Result<SVector<f64, M>, E>,
) -> std::result::Result<SVector<f64, M>, E> {
    let k1 = f(y)?;
    let k2 = f(&(y + k1 * (0.5 * dt)))?;
    let k3 = f(&(y + k2 * (0.5 * dt)))?;
    let k4 = f(&(y + k3 * dt))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Samples the solution of `q̈ = rhs(q, q̇)` with fixed-step RK4.
///
/// Returns `floor(t_end / dt) + 1` samples starting at `t = 0`.
pub fn integrate_curve<const N: usize>(
    mut rhs: impl FnMut(&SVector<f64, N>, &SVector<f64, N>) -> SVector<f64, N>,
    q0: SVector<f64, N>,
    v0: SVector<f64, N>,
    dt: f64,
    t_end: f64,
) -> Result<Vec<CurveSample<N>>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidStep { dt, max: f64::INFINITY });
    }
    if !(t_end >= dt) {
        return Err(Error::InvalidStep { dt: t_end, max: dt });
    }
    let steps = step_count(t_end, dt);
    let mut out = Vec::with_capacity(steps + 1);
    out.push(CurveSample { t: 0.0, q: q0, v: v0 });
    let (mut q, mut v) = (q0, v0);
    for n in 1..=steps {
        // Stages of the first-order system (q, v) with q̇ = v, v̇ = rhs(q, v).
        let (k1q, k1v) = (v, rhs(&q, &v));
        let (q2, v2) = (q + k1q * (0.5 * dt), v + k1v * (0.5 * dt));
        let (k2q, k2v) = (v2, rhs(&q2, &v2));
        let (q3, v3) = (q + k2q * (0.5 * dt), v + k2v * (0.5 * dt));
        let (k3q, k3v) = (v3, rhs(&q3, &v3));
        let (q4, v4) = (q + k3q * dt, v + k3v * dt);
        let (k4q, k4v) = (v4, rhs(&q4, &v4));
        q += (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (dt / 6.0);
        v += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0);
        let t = n as f64 * dt;
        if q.iter().chain(v.iter()).any(|c| !c.is_finite()) {
            return Err(Error::Divergence { t });
        }
        out.push(CurveSample { t, q, v });
    }
    Ok(out)
}

/// `floor(t_end / dt)` robust to representation error in the ratio.
pub fn step_count(t_end: f64, dt: f64) -> usize {
    let ratio = t_end / dt;
    let nearest = ratio.round();
    if (ratio - nearest).abs() < 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        ratio.floor() as usize
    }
}
