//! Several vehicles towing one load, integrated as one coupled system.
//!
//! Every body is a unicycle with velocity `(v, ω)` along its heading, so the
//! no-side-slip constraints hold by construction. Cable `k` adds
//! `φ_k = ½(|p_0 − p_k|² − l_k²) = 0` while taut; its velocity form is
//! `v_0 h_0k − v_k h_k` with `h_0k`, `h_k` the offset `p_0 − p_k` projected on
//! the load and vehicle headings. Multipliers come from the reduced KKT
//! system with mass matrix `D = diag(M, J, m_1, J_1, …)`.

use nalgebra::{DMatrix, DVector};

use super::{ControlInput, EngineOptions, ModeChange, SimState, StepInfo};
use crate::error::{Error, Result};
use crate::geometry::ChartPoint;
use crate::tolerances::{MAX_DT, REENGAGE_EPS, SLACK_TENSION};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    pub mass: f64,
    pub inertia: f64,
    pub cable_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormationState {
    /// `(x, y, θ)` of the load, then of each vehicle.
    pub poses: Vec<[f64; 3]>,
    /// `(v, ω)` of the load, then of each vehicle.
    pub u: Vec<[f64; 2]>,
    pub taut: Vec<bool>,
    /// Tension of each cable under the last input; zero when slack.
    pub tension: Vec<f64>,
    pub t: f64,
}

impl FormationState {
    pub fn at_rest(load: [f64; 3], vehicles: &[[f64; 3]], taut: Vec<bool>) -> Self {
        let n = vehicles.len();
        let mut poses = vec![load];
        poses.extend_from_slice(vehicles);
        Self { poses, u: vec![[0.0; 2]; n + 1], taut, tension: vec![0.0; n], t: 0.0 }
    }

    pub fn vehicle_count(&self) -> usize {
        self.poses.len() - 1
    }

    /// The load and vehicle `k` (0-based) seen as one pair.
    pub fn pair(&self, k: usize) -> SimState {
        let [x, y, theta] = self.poses[0];
        let [x_i, y_i, theta_i] = self.poses[k + 1];
        SimState {
            q: ChartPoint { x, y, theta, x_i, y_i, theta_i },
            u: [self.u[0][0], self.u[0][1], self.u[k + 1][0], self.u[k + 1][1]],
            t: self.t,
            tension: self.tension[k],
            taut: self.taut[k],
        }
    }
}

/// Load forward acceleration and cable tensions as affine functions of the
/// vehicle thrusts `f`: `load_accel + load_gain·f` and
/// `tension + tension_gain·f`, with the taut cables held.
#[derive(Debug, Clone, PartialEq)]
pub struct ThrustResponse {
    pub load_accel: f64,
    pub load_gain: Vec<f64>,
    pub tension: Vec<f64>,
    pub tension_gain: DMatrix<f64>,
}

pub struct Formation {
    load_mass: f64,
    load_inertia: f64,
    vehicles: Vec<VehicleParams>,
    options: EngineOptions,
}

/// Offset `p_0 − p_k` and its projections on the load and vehicle headings.
struct Lever {
    d: [f64; 2],
    h0: f64,
    hk: f64,
}

fn lever(poses: &[[f64; 3]], k: usize) -> Lever {
    let [x, y, th] = poses[0];
    let [xk, yk, thk] = poses[k + 1];
    let d = [x - xk, y - yk];
    Lever { d, h0: d[0] * th.cos() + d[1] * th.sin(), hk: d[0] * thk.cos() + d[1] * thk.sin() }
}

impl Formation {
    pub fn new(load_mass: f64, load_inertia: f64, vehicles: Vec<VehicleParams>, options: EngineOptions) -> Result<Self> {
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 { Ok(()) } else { Err(Error::InvalidParameter { name, value: v }) }
        };
        positive("load_mass", load_mass)?;
        positive("load_inertia", load_inertia)?;
        if vehicles.is_empty() {
            return Err(Error::InvalidParameter { name: "vehicle count", value: 0.0 });
        }
        for v in &vehicles {
            positive("vehicle_mass", v.mass)?;
            positive("vehicle_inertia", v.inertia)?;
            positive("cable_length", v.cable_length)?;
        }
        Ok(Self { load_mass, load_inertia, vehicles, options })
    }

    pub fn vehicles(&self) -> &[VehicleParams] {
        &self.vehicles
    }

    fn inertias(&self) -> DVector<f64> {
        let mut d = vec![self.load_mass, self.load_inertia];
        for v in &self.vehicles {
            d.extend([v.mass, v.inertia]);
        }
        DVector::from_vec(d)
    }

    /// Rows of the velocity forms of the active cables.
    fn constraint_rows(&self, poses: &[[f64; 3]], active: &[usize]) -> DMatrix<f64> {
        let n = 2 * poses.len();
        let mut a = DMatrix::zeros(active.len(), n);
        for (r, &k) in active.iter().enumerate() {
            let lv = lever(poses, k);
            a[(r, 0)] = lv.h0;
            a[(r, 2 * (k + 1))] = -lv.hk;
        }
        a
    }

    /// Generalized forces: thrust and torque of each body. The load receives
    /// the sum of the per-vehicle load inputs.
    fn forces(&self, inputs: &[ControlInput]) -> DVector<f64> {
        let (f, tau) = inputs.iter().fold((0.0, 0.0), |(f, t), i| (f + i.f, t + i.tau));
        let tau = if self.options.virtual_load_torque { tau } else { 0.0 };
        let mut q = vec![f, tau];
        for i in inputs {
            q.extend([i.f_i, i.tau_i]);
        }
        DVector::from_vec(q)
    }

    /// Accelerations and multipliers with the `active` cables held.
    fn solve(
        &self,
        poses: &[[f64; 3]],
        u: &[[f64; 2]],
        force: &DVector<f64>,
        active: &[usize],
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let dinv = self.inertias().map(|m| 1.0 / m);
        let free = force.component_mul(&dinv);
        if active.is_empty() {
            return Ok((free, DVector::zeros(0)));
        }
        let a = self.constraint_rows(poses, active);
        // d/dt of each velocity form, applied to u.
        let mut rate = DVector::zeros(active.len());
        let [v0, w0] = u[0];
        let th0 = poses[0][2];
        for (r, &k) in active.iter().enumerate() {
            let lv = lever(poses, k);
            let [vk, wk] = u[k + 1];
            let thk = poses[k + 1][2];
            let c = (th0 - thk).cos();
            let g0 = -lv.d[0] * th0.sin() + lv.d[1] * th0.cos();
            let gk = -lv.d[0] * thk.sin() + lv.d[1] * thk.cos();
            let h0_dot = v0 - vk * c + w0 * g0;
            let hk_dot = v0 * c - vk + wk * gk;
            rate[r] = v0 * h0_dot - vk * hk_dot;
        }
        let adinv = &a * DMatrix::from_diagonal(&dinv);
        let schur = &adinv * a.transpose();
        let rhs = -(rate + &a * &free);
        let lambda = schur.lu().solve(&rhs).ok_or(Error::SingularConfiguration { h: f64::NAN, h_i: f64::NAN })?;
        let acc = free + adinv.transpose() * &lambda;
        Ok((acc, lambda))
    }

    fn tensions_from(&self, poses: &[[f64; 3]], active: &[usize], lambda: &DVector<f64>) -> Vec<f64> {
        let mut t = vec![0.0; self.vehicles.len()];
        for (r, &k) in active.iter().enumerate() {
            let lv = lever(poses, k);
            t[k] = -lambda[r] * lv.d[0].hypot(lv.d[1]);
        }
        t
    }

    /// Cable tensions the inputs would produce with the taut cables held.
    pub fn tensions(&self, s: &FormationState, inputs: &[ControlInput]) -> Result<Vec<f64>> {
        let active: Vec<usize> = (0..s.taut.len()).filter(|&k| s.taut[k]).collect();
        let (_, lambda) = self.solve(&s.poses, &s.u, &self.forces(inputs), &active)?;
        Ok(self.tensions_from(&s.poses, &active, &lambda))
    }

    /// Response about `base`, whose vehicle thrusts are taken as the offset.
    pub fn thrust_response(&self, s: &FormationState, base: &[ControlInput]) -> Result<ThrustResponse> {
        let n = self.vehicles.len();
        let active: Vec<usize> = (0..n).filter(|&k| s.taut[k]).collect();
        let force = self.forces(base);
        let (acc, lambda) = self.solve(&s.poses, &s.u, &force, &active)?;
        let tension = self.tensions_from(&s.poses, &active, &lambda);
        let mut load_gain = vec![0.0; n];
        let mut tension_gain = DMatrix::zeros(n, n);
        for k in 0..n {
            let mut f = force.clone();
            f[2 * (k + 1)] += 1.0;
            let (acc_k, lambda_k) = self.solve(&s.poses, &s.u, &f, &active)?;
            load_gain[k] = acc_k[0] - acc[0];
            let t_k = self.tensions_from(&s.poses, &active, &lambda_k);
            for j in 0..n {
                tension_gain[(j, k)] = t_k[j] - tension[j];
            }
        }
        Ok(ThrustResponse { load_accel: acc[0], load_gain, tension, tension_gain })
    }

    fn rhs(&self, y: &DVector<f64>, force: &DVector<f64>, active: &[usize]) -> Result<DVector<f64>> {
        let nb = self.vehicles.len() + 1;
        let (poses, u) = unpack(y, nb);
        let (acc, _) = self.solve(&poses, &u, force, active)?;
        let mut dy = DVector::zeros(5 * nb);
        for b in 0..nb {
            let [v, w] = u[b];
            let th = poses[b][2];
            dy[3 * b] = v * th.cos();
            dy[3 * b + 1] = v * th.sin();
            dy[3 * b + 2] = w;
            dy[3 * nb + 2 * b] = acc[2 * b];
            dy[3 * nb + 2 * b + 1] = acc[2 * b + 1];
        }
        Ok(dy)
    }

    /// One step with the inputs held over the step.
    pub fn step(&self, s: &FormationState, inputs: &[ControlInput], dt: f64) -> Result<(FormationState, Vec<StepInfo>)> {
        if !(dt > 0.0 && dt <= MAX_DT) {
            return Err(Error::InvalidStep { dt, max: MAX_DT });
        }
        let n = self.vehicles.len();
        if inputs.len() != n || s.vehicle_count() != n {
            return Err(Error::InvalidParameter { name: "vehicle count", value: inputs.len() as f64 });
        }
        if !inputs.iter().all(ControlInput::is_finite) {
            return Err(Error::NonFinite("control input"));
        }
        let force = self.forces(inputs);
        let mut info = vec![StepInfo::default(); n];
        let mut taut = s.taut.clone();
        // Drop compressed cables one at a time, most compressed first.
        if self.options.allow_slack {
            loop {
                let active: Vec<usize> = (0..n).filter(|&k| taut[k]).collect();
                let (_, lambda) = self.solve(&s.poses, &s.u, &force, &active)?;
                let t = self.tensions_from(&s.poses, &active, &lambda);
                let worst =
                    active.iter().copied().filter(|&k| t[k] < -SLACK_TENSION).min_by(|&a, &b| t[a].total_cmp(&t[b]));
                let Some(k) = worst else { break };
                taut[k] = false;
                info[k].mode_change = Some(ModeChange::WentSlack);
            }
        }
        let active: Vec<usize> = (0..n).filter(|&k| taut[k]).collect();
        let y0 = pack(&s.poses, &s.u);
        let f = |y: &DVector<f64>| self.rhs(y, &force, &active);
        let k1 = f(&y0)?;
        let k2 = f(&(&y0 + &k1 * (0.5 * dt)))?;
        let k3 = f(&(&y0 + &k2 * (0.5 * dt)))?;
        let k4 = f(&(&y0 + &k3 * dt))?;
        let y1 = &y0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        let t = s.t + dt;
        if y1.iter().any(|c| !c.is_finite()) {
            return Err(Error::Divergence { t });
        }
        let (poses, u) = unpack(&y1, n + 1);
        let mut next = FormationState { poses, u, taut, tension: vec![0.0; n], t };
        let mut engaged = false;
        for k in 0..n {
            let l = self.vehicles[k].cable_length;
            let lv = lever(&next.poses, k);
            let d = lv.d[0].hypot(lv.d[1]);
            if !next.taut[k] && d >= l * (1.0 - REENGAGE_EPS) {
                next.taut[k] = true;
                info[k].mode_change = Some(ModeChange::Reengaged);
                engaged = true;
            }
            if next.taut[k] && (self.options.drift_correction || info[k].mode_change.is_some()) {
                info[k].correction = self.seat(&mut next, k)?;
            }
        }
        if engaged || (self.options.drift_correction && next.taut.iter().any(|&t| t)) {
            self.project_velocity(&mut next)?;
        }
        next.tension = self.tensions(&next, inputs)?;
        Ok((next, info))
    }

    /// Moves vehicle `k` radially onto its cable circle; returns the distance.
    fn seat(&self, s: &mut FormationState, k: usize) -> Result<f64> {
        let l = self.vehicles[k].cable_length;
        let lv = lever(&s.poses, k);
        let d = lv.d[0].hypot(lv.d[1]);
        if !(d > 0.0) {
            return Err(Error::NonFinite("cable direction"));
        }
        if (d - l).abs() <= 4.0 * f64::EPSILON * l {
            return Ok(0.0);
        }
        let r = l / d;
        s.poses[k + 1][0] = s.poses[0][0] - lv.d[0] * r;
        s.poses[k + 1][1] = s.poses[0][1] - lv.d[1] * r;
        Ok((d - l).abs())
    }

    /// `D`-orthogonal projection of the velocities onto the taut cables'
    /// constraints: an inelastic impulse along those cables.
    fn project_velocity(&self, s: &mut FormationState) -> Result<()> {
        let active: Vec<usize> = (0..s.taut.len()).filter(|&k| s.taut[k]).collect();
        if active.is_empty() {
            return Ok(());
        }
        let dinv = self.inertias().map(|m| 1.0 / m);
        let a = self.constraint_rows(&s.poses, &active);
        let u = DVector::from_iterator(2 * s.u.len(), s.u.iter().flatten().copied());
        let adinv = &a * DMatrix::from_diagonal(&dinv);
        let mu = (&adinv * a.transpose())
            .lu()
            .solve(&(&a * &u))
            .ok_or(Error::SingularConfiguration { h: f64::NAN, h_i: f64::NAN })?;
        let projected = u - adinv.transpose() * mu;
        for (b, uv) in s.u.iter_mut().enumerate() {
            *uv = [projected[2 * b], projected[2 * b + 1]];
        }
        Ok(())
    }

    /// Applies a pose offset to the load. Cables now inside their circle go
    /// slack; the rest drag their vehicles back onto the circle.
    pub fn displace_load(&self, s: &FormationState, offset: [f64; 3]) -> Result<(FormationState, Vec<StepInfo>)> {
        if !offset.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("load offset"));
        }
        let mut next = s.clone();
        for (p, o) in next.poses[0].iter_mut().zip(offset) {
            *p += o;
        }
        let mut info = vec![StepInfo::default(); self.vehicles.len()];
        for (k, inf) in info.iter_mut().enumerate() {
            let l = self.vehicles[k].cable_length;
            let lv = lever(&next.poses, k);
            if lv.d[0].hypot(lv.d[1]) < l * (1.0 - REENGAGE_EPS) {
                if next.taut[k] {
                    inf.mode_change = Some(ModeChange::WentSlack);
                }
                next.taut[k] = false;
                next.tension[k] = 0.0;
            } else {
                if !next.taut[k] {
                    inf.mode_change = Some(ModeChange::Reengaged);
                }
                next.taut[k] = true;
                inf.correction = self.seat(&mut next, k)?;
            }
        }
        self.project_velocity(&mut next)?;
        Ok((next, info))
    }

    pub fn kinetic_energy(&self, s: &FormationState) -> f64 {
        let d = self.inertias();
        s.u.iter().flatten().zip(d.iter()).map(|(u, m)| 0.5 * m * u * u).sum()
    }
}

fn pack(poses: &[[f64; 3]], u: &[[f64; 2]]) -> DVector<f64> {
    DVector::from_iterator(5 * poses.len(), poses.iter().flatten().chain(u.iter().flatten()).copied())
}

fn unpack(y: &DVector<f64>, nb: usize) -> (Vec<[f64; 3]>, Vec<[f64; 2]>) {
    let poses = (0..nb).map(|b| [y[3 * b], y[3 * b + 1], y[3 * b + 2]]).collect();
    let u = (0..nb).map(|b| [y[3 * nb + 2 * b], y[3 * nb + 2 * b + 1]]).collect();
    (poses, u)
}
