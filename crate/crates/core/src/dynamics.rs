//! Forced constrained dynamics of one load–vehicle pair.
//!
//! The velocity is stored as coefficients `u = (v, ω, v_i, ω_i)` on
//! `e_1 .. e_4`, so the rolling constraints hold by construction. The taut
//! pair follows the Poincaré form of the constrained connection
//! `u̇ = P(Y)_e − Γ_e(u, u)`; a slack pair integrates two free unicycles.

use nalgebra::{SVector, Vector4};

pub mod formation;

pub use formation::{Formation, FormationState, ThrustResponse, VehicleParams};

use crate::constraint::{
    check_admissible, constrained_acceleration, h_factors, kinematic_frame, metric_projection_maps, Complement,
    ConstrainedConnection,
};
use crate::error::{Error, Result};
use crate::geometry::{rk4_step, Basis, ChartPoint, CotangentVec, MetricTensor, TangentVec, Vec6};
use crate::tolerances::{MAX_DT, REENGAGE_EPS, SLACK_TENSION};

type Vec10 = SVector<f64, 10>;

/// Masses, inertias and cable length of one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyParams {
    pub load_mass: f64,
    pub load_inertia: f64,
    pub vehicle_mass: f64,
    pub vehicle_inertia: f64,
    pub cable_length: f64,
}

impl BodyParams {
    pub fn new(
        load_mass: f64,
        load_inertia: f64,
        vehicle_mass: f64,
        vehicle_inertia: f64,
        cable_length: f64,
    ) -> Result<Self> {
        let p = Self { load_mass, load_inertia, vehicle_mass, vehicle_inertia, cable_length };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("load mass", self.load_mass),
            ("load inertia", self.load_inertia),
            ("vehicle mass", self.vehicle_mass),
            ("vehicle inertia", self.vehicle_inertia),
            ("cable length", self.cable_length),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter { name, value });
            }
        }
        Ok(())
    }

    pub fn metric(&self) -> Result<MetricTensor> {
        MetricTensor::kinetic(self.load_mass, self.load_inertia, self.vehicle_mass, self.vehicle_inertia)
    }

    fn inertias(&self) -> Vector4<f64> {
        Vector4::new(self.load_mass, self.load_inertia, self.vehicle_mass, self.vehicle_inertia)
    }
}

/// Thrusts and torques on the load (virtual) and the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    pub f: f64,
    pub tau: f64,
    pub f_i: f64,
    pub tau_i: f64,
}

impl ControlInput {
    pub fn is_finite(&self) -> bool {
        self.f.is_finite() && self.tau.is_finite() && self.f_i.is_finite() && self.tau_i.is_finite()
    }

    /// Generalised force `(f cos θ, f sin θ, τ, f_i cos θ_i, f_i sin θ_i, τ_i)`.
    pub fn chart_force(&self, q: &ChartPoint) -> Vec6 {
        let (s, c) = q.theta.sin_cos();
        let (si, ci) = q.theta_i.sin_cos();
        Vec6::new(self.f * c, self.f * s, self.tau, self.f_i * ci, self.f_i * si, self.tau_i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub q: ChartPoint,
    /// `(v, ω, v_i, ω_i)`.
    pub u: [f64; 4],
    pub t: f64,
    pub tension: f64,
    pub taut: bool,
}

impl SimState {
    pub fn at_rest(q: ChartPoint) -> Self {
        Self { q, u: [0.0; 4], t: 0.0, tension: 0.0, taut: true }
    }

    /// `u` padded with zero `e_5, e_6` coefficients.
    pub fn kinematic_velocity(&self) -> Vec6 {
        pad(&self.u)
    }

    /// Chart components of `q̇`.
    pub fn velocity(&self) -> Vec6 {
        kinematic_frame(&self.q) * self.kinematic_velocity()
    }

    pub fn kinetic_energy(&self, params: &BodyParams) -> f64 {
        let m = params.inertias();
        0.5 * (0..4).map(|k| m[k] * self.u[k] * self.u[k]).sum::<f64>()
    }
}

fn pad(u: &[f64; 4]) -> Vec6 {
    Vec6::new(u[0], u[1], u[2], u[3], 0.0, 0.0)
}

/// The force one-form with mass-normalised components as printed for the
/// model: `(f/M) cos θ dx + (f/M) sin θ dy + (τ/J) dθ + …`.
pub fn force_one_form(inp: &ControlInput, params: &BodyParams, q: &ChartPoint) -> CotangentVec {
    let (s, c) = q.theta.sin_cos();
    let (si, ci) = q.theta_i.sin_cos();
    let a = inp.f / params.load_mass;
    let a_i = inp.f_i / params.vehicle_mass;
    CotangentVec::chart(Vec6::new(
        a * c,
        a * s,
        inp.tau / params.load_inertia,
        a_i * ci,
        a_i * si,
        inp.tau_i / params.vehicle_inertia,
    ))
}

/// Compact closed form of the projected force, in `{e}` components:
/// `κ e_1 + τ e_2 + κ e_3 + τ_i e_4` with `κ = (h_i f + h f_i)/(h² + h_i²)`.
pub fn constrained_force(q: &ChartPoint, inp: &ControlInput) -> Result<TangentVec> {
    let (h, h_i) = check_admissible(q)?;
    let k = (h_i * inp.f + h * inp.f_i) / (h * h + h_i * h_i);
    TangentVec::new(Vec6::new(k, inp.tau, k, inp.tau_i, 0.0, 0.0), Basis::Kinematic)
}

/// `G`-orthogonal projection of `G^♯(F)` onto 𝒟, in `{e}` components.
///
/// Along the mixed generator `h_i e_1 + h e_3` the rate is
/// `(h_i f + h f_i)/(M h_i² + m_i h²)`.
pub fn projected_force(q: &ChartPoint, inp: &ControlInput, params: &BodyParams) -> Result<TangentVec> {
    let (h, h_i) = check_admissible(q)?;
    let rate = (h_i * inp.f + h * inp.f_i) / (params.load_mass * h_i * h_i + params.vehicle_mass * h * h);
    TangentVec::new(
        Vec6::new(
            rate * h_i,
            inp.tau / params.load_inertia,
            rate * h,
            inp.tau_i / params.vehicle_inertia,
            0.0,
            0.0,
        ),
        Basis::Kinematic,
    )
}

/// Moves the vehicle radially onto the cable circle about the load and
/// re-projects the velocity onto 𝒟. Returns the state and the distance moved.
pub fn constraint_drift_correction(s: &SimState, params: &BodyParams) -> Result<(SimState, f64)> {
    let (q, moved) = place_on_circle(&s.q, params.cable_length)?;
    let u = project_velocity(&q, &s.velocity(), params)?;
    Ok((SimState { q, u, ..*s }, moved))
}

fn place_on_circle(q: &ChartPoint, l: f64) -> Result<(ChartPoint, f64)> {
    let (dx, dy) = q.cable_offset();
    let d = dx.hypot(dy);
    if !(d > 0.0) {
        return Err(Error::NonFinite("cable direction"));
    }
    if (d - l).abs() <= 4.0 * f64::EPSILON * l {
        return Ok((*q, 0.0));
    }
    let k = l / d;
    let placed = ChartPoint { x_i: q.x - dx * k, y_i: q.y - dy * k, ..*q };
    Ok((placed, (d - l).abs()))
}

/// `G`-orthogonal projection of a chart velocity onto 𝒟, as `u`.
fn project_velocity(q: &ChartPoint, velocity: &Vec6, params: &BodyParams) -> Result<[f64; 4]> {
    let (p, _) = metric_projection_maps(q, &params.metric()?)?;
    let e = kinematic_frame(q).transpose() * (p.entries() * velocity);
    Ok([e[0], e[1], e[2], e[3]])
}

/// Cable tension from the constraint multiplier, and whether the cable holds.
pub fn cable_tension_monitor(s: &SimState, inp: &ControlInput, params: &BodyParams) -> Result<(f64, bool)> {
    let tension = tension(&s.q, &s.velocity(), inp, &params.metric()?)?;
    Ok((tension, tension >= -SLACK_TENSION))
}

fn tension(q: &ChartPoint, velocity: &Vec6, inp: &ControlInput, metric: &MetricTensor) -> Result<f64> {
    let sol = constrained_acceleration(q, metric, velocity, &inp.chart_force(q))?;
    // Constraint force on the load is λ_C (x − x_i, y − y_i).
    Ok(-sol.multipliers[0] * q.cable_distance())
}

/// Switches applied to the physical model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineOptions {
    pub allow_slack: bool,
    pub drift_correction: bool,
    /// When false the load torque input is ignored.
    pub virtual_load_torque: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self { allow_slack: true, drift_correction: true, virtual_load_torque: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeChange {
    WentSlack,
    Reengaged,
}

/// Side information from one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInfo {
    /// Vehicle displacement applied by drift correction or re-engagement (m).
    pub correction: f64,
    pub mode_change: Option<ModeChange>,
}

/// Integrator for one pair.
#[derive(Debug, Clone)]
pub struct Engine {
    params: BodyParams,
    options: EngineOptions,
    connection: ConstrainedConnection,
}

impl Engine {
    pub fn new(params: BodyParams, options: EngineOptions) -> Result<Self> {
        params.validate()?;
        let connection = ConstrainedConnection::new(params.metric()?, Complement::MetricOrthogonal)?;
        Ok(Self { params, options, connection })
    }

    pub fn params(&self) -> &BodyParams {
        &self.params
    }

    pub fn options(&self) -> &EngineOptions {
        &self.options
    }

    /// `Γ_e(u, u)` at the state, in `{e}` components.
    pub fn drift(&self, s: &SimState) -> Result<Vec6> {
        self.connection.poincare_drift(&s.q, &s.kinematic_velocity())
    }

    /// Cable tension the input would produce at the state if the cable held.
    pub fn tension(&self, s: &SimState, inp: &ControlInput) -> Result<f64> {
        tension(&s.q, &s.velocity(), inp, self.connection.metric())
    }

    /// One step with the input held over the step.
    pub fn step(&self, s: &SimState, inp: &ControlInput, dt: f64) -> Result<(SimState, StepInfo)> {
        self.step_with(s, |_, _| *inp, dt)
    }

    /// One step with the input re-evaluated at every stage.
    pub fn step_with(
        &self,
        s: &SimState,
        input: impl Fn(&ChartPoint, &[f64; 4]) -> ControlInput,
        dt: f64,
    ) -> Result<(SimState, StepInfo)> {
        if !(dt > 0.0 && dt <= MAX_DT) {
            return Err(Error::InvalidStep { dt, max: MAX_DT });
        }
        let input = |q: &ChartPoint, u: &[f64; 4]| -> Result<ControlInput> {
            let mut inp = input(q, u);
            if !self.options.virtual_load_torque {
                inp.tau = 0.0;
            }
            if inp.is_finite() { Ok(inp) } else { Err(Error::NonFinite("control input")) }
        };
        let mut info = StepInfo::default();
        let mut taut = s.taut;
        if taut && self.options.allow_slack {
            let (_, holds) = cable_tension_monitor(s, &input(&s.q, &s.u)?, &self.params)?;
            if !holds {
                taut = false;
                info.mode_change = Some(ModeChange::WentSlack);
            }
        }
        let y0 = pack(&s.q, &s.u);
        let y1 = if taut {
            rk4_step(&y0, dt, |y| self.taut_rhs(y, &input))?
        } else {
            rk4_step(&y0, dt, |y| self.slack_rhs(y, &input))?
        };
        let t = s.t + dt;
        if y1.iter().any(|c| !c.is_finite()) {
            return Err(Error::Divergence { t });
        }
        let (q, u) = unpack(&y1);
        let mut next = SimState { q, u, t, tension: 0.0, taut };
        if taut {
            if self.options.drift_correction {
                let (corrected, moved) = constraint_drift_correction(&next, &self.params)?;
                next = corrected;
                info.correction = moved;
            }
        } else if next.q.cable_distance() >= self.params.cable_length * (1.0 - REENGAGE_EPS) {
            let (corrected, moved) = constraint_drift_correction(&next, &self.params)?;
            next = SimState { taut: true, ..corrected };
            info.correction = moved;
            info.mode_change = Some(ModeChange::Reengaged);
        }
        if next.taut {
            let inp = input(&next.q, &next.u)?;
            next.tension = tension(&next.q, &next.velocity(), &inp, self.connection.metric())?;
        }
        Ok((next, info))
    }

    fn taut_rhs(
        &self,
        y: &Vec10,
        input: &impl Fn(&ChartPoint, &[f64; 4]) -> Result<ControlInput>,
    ) -> Result<Vec10> {
        let (q, u) = unpack(y);
        let inp = input(&q, &u)?;
        let w = pad(&u);
        let drift = self.connection.poincare_drift(&q, &w)?;
        let force = projected_force(&q, &inp, &self.params)?;
        let f = force.components();
        let du = [f[0] - drift[0], f[1] - drift[1], f[2] - drift[2], f[3] - drift[3]];
        Ok(pack_rates(&(kinematic_frame(&q) * w), &du))
    }

    fn slack_rhs(
        &self,
        y: &Vec10,
        input: &impl Fn(&ChartPoint, &[f64; 4]) -> Result<ControlInput>,
    ) -> Result<Vec10> {
        let (q, u) = unpack(y);
        let inp = input(&q, &u)?;
        let m = self.params.inertias();
        let du = [inp.f / m[0], inp.tau / m[1], inp.f_i / m[2], inp.tau_i / m[3]];
        Ok(pack_rates(&(kinematic_frame(&q) * pad(&u)), &du))
    }

    /// Applies a pose offset to the load. The cable goes slack if the load
    /// moves inside the circle; otherwise the vehicle is dragged back onto it.
    pub fn displace_load(&self, s: &SimState, offset: [f64; 3]) -> Result<(SimState, StepInfo)> {
        let q = ChartPoint::new(
            s.q.x + offset[0],
            s.q.y + offset[1],
            s.q.theta + offset[2],
            s.q.x_i,
            s.q.y_i,
            s.q.theta_i,
        )?;
        let moved = SimState { q, ..*s };
        let l = self.params.cable_length;
        if q.cable_distance() < l * (1.0 - REENGAGE_EPS) {
            let change = s.taut.then_some(ModeChange::WentSlack);
            return Ok((SimState { taut: false, tension: 0.0, ..moved }, StepInfo { correction: 0.0, mode_change: change }));
        }
        let (corrected, dist) = constraint_drift_correction(&moved, &self.params)?;
        let change = (!s.taut).then_some(ModeChange::Reengaged);
        Ok((SimState { taut: true, ..corrected }, StepInfo { correction: dist, mode_change: change }))
    }
}

/// Single step with default options.
pub fn step(s: &SimState, inp: &ControlInput, params: &BodyParams, dt: f64) -> Result<SimState> {
    Ok(Engine::new(*params, EngineOptions::default())?.step(s, inp, dt)?.0)
}

/// `(h, h_i)` of a state, for callers outside the geometry modules.
pub fn lever_arms(s: &SimState) -> (f64, f64) {
    h_factors(&s.q)
}

fn pack(q: &ChartPoint, u: &[f64; 4]) -> Vec10 {
    let v = q.to_vector();
    Vec10::from_fn(|k, _| if k < 6 { v[k] } else { u[k - 6] })
}

fn pack_rates(dq: &Vec6, du: &[f64; 4]) -> Vec10 {
    Vec10::from_fn(|k, _| if k < 6 { dq[k] } else { du[k - 6] })
}

fn unpack(y: &Vec10) -> (ChartPoint, [f64; 4]) {
    let q = ChartPoint::from_vector(&y.fixed_rows::<6>(0).into_owned());
    (q, [y[6], y[7], y[8], y[9]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::{holonomic_residual, lambda_generators, sigma_generators};
    use proptest::prelude::*;

    fn params() -> BodyParams {
        BodyParams::new(0.09, 1.5e-4, 0.045, 5.4e-5, 0.3).unwrap()
    }

    fn engine() -> Engine {
        Engine::new(params(), EngineOptions::default()).unwrap()
    }

    /// Vehicle dead ahead of the load at heading `theta`.
    fn aligned(theta: f64) -> ChartPoint {
        let (s, c) = theta.sin_cos();
        ChartPoint::new(0.0, 0.0, theta, 0.3 * c, 0.3 * s, theta).unwrap()
    }

    /// A taut state on 𝒟: rate `rate` along the mixed generator plus spins.
    fn moving(q: ChartPoint, rate: f64, omega: f64, omega_i: f64) -> SimState {
        let (h, h_i) = h_factors(&q);
        SimState { q, u: [rate * h_i, omega, rate * h, omega_i], t: 0.0, tension: 0.0, taut: true }
    }

    fn bent() -> ChartPoint {
        let th = 0.5f64;
        let phi = 0.3f64;
        ChartPoint::new(0.1, -0.2, th, 0.1 + 0.3 * (th + phi).cos(), -0.2 + 0.3 * (th + phi).sin(), 0.2).unwrap()
    }

    #[test]
    fn rejects_non_positive_parameters() {
        assert!(BodyParams::new(0.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(BodyParams::new(1.0, 1.0, 1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn force_one_form_examples() {
        let p = params();
        let zero = force_one_form(&ControlInput::default(), &p, &aligned(0.0));
        assert_eq!(*zero.components(), Vec6::zeros());
        let f = force_one_form(&ControlInput { f: p.load_mass, ..Default::default() }, &p, &aligned(0.0));
        assert_eq!(f.components()[0], 1.0);
        let q = aligned(std::f64::consts::FRAC_PI_2);
        let f = force_one_form(&ControlInput { f: 2.0 * p.load_mass, ..Default::default() }, &p, &q);
        assert!((f.components()[1] - 2.0).abs() < 1e-15);
        assert!(f.components()[0].abs() < 1e-15);
    }

    #[test]
    fn constrained_force_examples() {
        // h = h_i = 1: load one unit ahead of the vehicle, both at heading 0.
        let q = ChartPoint::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        let inp = ControlInput { f: 0.0, tau: 0.0, f_i: 2.0, tau_i: 0.0 };
        let y = constrained_force(&q, &inp).unwrap();
        assert_eq!(y.basis(), Basis::Kinematic);
        assert_eq!(y.components()[0], 1.0);
        assert_eq!(y.components()[2], 1.0);

        let inp = ControlInput { f: 0.0, tau: 0.3, f_i: 0.0, tau_i: -0.4 };
        let y = constrained_force(&q, &inp).unwrap();
        assert_eq!(*y.components(), Vec6::new(0.0, 0.3, 0.0, -0.4, 0.0, 0.0));

        // h = 1, h_i = 0: vehicle heading perpendicular to the cable.
        let q = ChartPoint::new(1.0, 0.0, 0.0, 0.0, 0.0, std::f64::consts::FRAC_PI_2).unwrap();
        let (h, h_i) = h_factors(&q);
        assert!((h - 1.0).abs() < 1e-15 && h_i.abs() < 1e-15);
        let y = constrained_force(&q, &ControlInput { f: 5.0, f_i: 7.0, ..Default::default() }).unwrap();
        assert!((y.components()[0] - 7.0).abs() < 1e-14);

        let singular = ChartPoint::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        assert!(matches!(constrained_force(&singular, &inp), Err(Error::SingularConfiguration { .. })));
    }

    #[test]
    fn projected_force_is_the_metric_projection() {
        let p = params();
        let q = bent();
        let inp = ControlInput { f: 0.2, tau: 0.01, f_i: -0.3, tau_i: 0.002 };
        let got = projected_force(&q, &inp, &p).unwrap();
        let g = p.metric().unwrap();
        let (proj, _) = metric_projection_maps(&q, &g).unwrap();
        let sharp = g.sharp(&CotangentVec::chart(inp.chart_force(&q))).unwrap();
        let oracle = kinematic_frame(&q).transpose() * (proj.entries() * sharp.components());
        assert!((got.components() - oracle).amax() < 1e-12 * oracle.amax());
    }

    #[test]
    fn projected_force_agrees_with_compact_form_in_symmetric_unit_case() {
        let p = BodyParams::new(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let q = ChartPoint::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        let inp = ControlInput { f: 0.4, tau: 0.2, f_i: 2.0, tau_i: 0.1 };
        let a = projected_force(&q, &inp, &p).unwrap();
        let b = constrained_force(&q, &inp).unwrap();
        assert!((a.components() - b.components()).amax() < 1e-15);
    }

    #[test]
    fn equilibrium_is_unchanged() {
        let s = SimState::at_rest(bent());
        let (next, info) = engine().step(&s, &ControlInput::default(), 1e-3).unwrap();
        assert_eq!(next.q, s.q);
        assert_eq!(next.u, s.u);
        assert!(next.taut);
        assert_eq!(info.mode_change, None);
        assert_eq!(next.t, 1e-3);
    }

    #[test]
    fn rejects_bad_steps() {
        let s = SimState::at_rest(bent());
        for dt in [0.0, -1e-3, 0.051, f64::NAN] {
            assert!(matches!(engine().step(&s, &ControlInput::default(), dt), Err(Error::InvalidStep { .. })));
        }
        let bad = ControlInput { f_i: f64::INFINITY, ..Default::default() };
        assert!(engine().step(&s, &bad, 1e-3).is_err());
    }

    #[test]
    fn straight_run_keeps_speed() {
        let e = engine();
        let q = aligned(0.4);
        let (_, h_i) = h_factors(&q);
        let mut s = moving(q, 0.1 / h_i, 0.0, 0.0);
        let v0 = s.u[0];
        for _ in 0..1000 {
            s = e.step(&s, &ControlInput::default(), 1e-3).unwrap().0;
        }
        assert!((s.u[0] - v0).abs() < 1e-6);
        assert!((s.q.x - 0.1 * 0.4f64.cos()).abs() < 1e-9);
    }

    #[test]
    fn unforced_motion_conserves_energy() {
        // Bilateral cable: the geodesic may demand compression.
        let e = Engine::new(params(), EngineOptions { allow_slack: false, ..Default::default() }).unwrap();
        let p = params();
        let mut s = moving(bent(), -0.4, 0.3, -0.5);
        let e0 = s.kinetic_energy(&p);
        for _ in 0..10_000 {
            s = e.step(&s, &ControlInput::default(), 1e-3).unwrap().0;
            assert!(s.taut);
        }
        let rel = (s.kinetic_energy(&p) - e0).abs() / e0;
        assert!(rel < 1e-6, "relative energy drift {rel}");
    }

    #[test]
    fn work_matches_energy_change() {
        let e = engine();
        let p = params();
        let inp = ControlInput { f: 0.0, tau: 2e-5, f_i: 0.004, tau_i: -1e-5 };
        let mut s = moving(aligned(0.2), 0.0, 0.0, 0.0);
        let power = |s: &SimState| inp.f * s.u[0] + inp.tau * s.u[1] + inp.f_i * s.u[2] + inp.tau_i * s.u[3];
        let e0 = s.kinetic_energy(&p);
        let dt = 1e-3;
        let mut work = 0.0;
        for _ in 0..5000 {
            let next = e.step(&s, &inp, dt).unwrap().0;
            assert!(next.taut);
            work += 0.5 * dt * (power(&s) + power(&next));
            s = next;
        }
        let gained = s.kinetic_energy(&p) - e0;
        assert!((gained - work).abs() < 1e-4 * work.abs(), "ΔKE {gained} vs work {work}");
    }

    #[test]
    fn matches_direct_constrained_solve() {
        let p = params();
        let e = engine();
        let s = moving(bent(), -0.3, 0.2, 0.4);
        let inp = ControlInput { f: 0.01, tau: 1e-4, f_i: 0.02, tau_i: -2e-5 };
        let g = p.metric().unwrap();
        let direct = constrained_acceleration(&s.q, &g, &s.velocity(), &inp.chart_force(&s.q)).unwrap();
        // q̈ = Ė u + E u̇.
        let y = pack(&s.q, &s.u);
        let rates = e.taut_rhs(&y, &|_: &ChartPoint, _: &[f64; 4]| Ok(inp)).unwrap();
        let du = pad(&[rates[6], rates[7], rates[8], rates[9]]);
        let w = s.velocity();
        let frame_rate = (0..6).fold(Vec6::zeros(), |acc, j| {
            acc + crate::constraint::kinematic_frame_derivative(&s.q, j, &w) * s.kinematic_velocity()[j]
        });
        let accel = kinematic_frame(&s.q) * du + frame_rate;
        assert!((accel - direct.acceleration).amax() < 1e-10 * direct.acceleration.amax().max(1.0));
    }

    #[test]
    fn constraint_forces_produce_no_motion() {
        let e = engine();
        let push = |q: &ChartPoint, _: &[f64; 4]| {
            let (h, h_i) = h_factors(q);
            ControlInput { f: h, tau: 0.0, f_i: -h_i, tau_i: 0.0 }
        };
        let mut a = moving(bent(), -0.3, 0.4, 0.6);
        let mut b = a;
        for _ in 0..1000 {
            a = e.step(&a, &ControlInput::default(), 1e-3).unwrap().0;
            b = e.step_with(&b, push, 1e-3).unwrap().0;
            assert!(a.taut && b.taut);
        }
        let diff = (a.q.to_vector() - b.q.to_vector()).amax().max((pad(&a.u) - pad(&b.u)).amax());
        assert!(diff < 1e-12);
    }

    #[test]
    fn drift_correction_examples() {
        let p = params();
        let s = moving(aligned(0.3), -0.2, 0.0, 0.1);
        let (same, moved) = constraint_drift_correction(&s, &p).unwrap();
        assert_eq!(moved, 0.0);
        assert_eq!(same.q, s.q);

        let (sn, cs) = 0.3f64.sin_cos();
        let pushed = SimState { q: ChartPoint { x_i: s.q.x_i + 1e-4 * cs, y_i: s.q.y_i + 1e-4 * sn, ..s.q }, ..s };
        let (fixed, moved) = constraint_drift_correction(&pushed, &p).unwrap();
        assert!((moved - 1e-4).abs() < 1e-12);
        assert!(holonomic_residual(&fixed.q, 0.3).abs() < 1e-15);
        assert_eq!((fixed.q.x, fixed.q.y, fixed.q.theta), (s.q.x, s.q.y, s.q.theta));
        let v = TangentVec::chart(fixed.velocity());
        for sigma in sigma_generators(&fixed.q) {
            assert!(sigma.apply(&v).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn tension_sign_cases() {
        let p = params();
        let s = SimState::at_rest(aligned(0.0));
        let (t, taut) = cable_tension_monitor(&s, &ControlInput { f_i: 0.01, ..Default::default() }, &p).unwrap();
        assert!(t > 0.0 && taut);
        let (t, taut) = cable_tension_monitor(&s, &ControlInput { f_i: -0.01, ..Default::default() }, &p).unwrap();
        assert!(t < 0.0 && !taut);
    }

    #[test]
    fn tension_balances_straight_pull() {
        // Both bodies accelerate together: T = M a with a = f_i/(M + m_i).
        let p = params();
        let s = SimState::at_rest(aligned(0.7));
        let f_i = 0.027;
        let (t, _) = cable_tension_monitor(&s, &ControlInput { f_i, ..Default::default() }, &p).unwrap();
        let oracle = p.load_mass * f_i / (p.load_mass + p.vehicle_mass);
        assert!((t - oracle).abs() < 1e-12);
    }

    #[test]
    fn pushing_goes_slack_and_reengages() {
        let e = engine();
        let mut s = SimState::at_rest(aligned(0.0));
        let (next, info) = e.step(&s, &ControlInput { f_i: -0.001, ..Default::default() }, 1e-3).unwrap();
        assert!(!next.taut);
        assert_eq!(info.mode_change, Some(ModeChange::WentSlack));
        assert!(next.q.cable_distance() < 0.3);
        s = next;
        let mut events = Vec::new();
        for _ in 0..2000 {
            let (n, info) = e.step(&s, &ControlInput { f_i: 0.002, ..Default::default() }, 1e-3).unwrap();
            events.extend(info.mode_change);
            s = n;
            if s.taut {
                break;
            }
        }
        assert_eq!(events, vec![ModeChange::Reengaged]);
        assert!(holonomic_residual(&s.q, 0.3).abs() < 1e-12);
        // Inelastic catch: the pair now moves with a common cable-direction speed.
        let (h, h_i) = h_factors(&s.q);
        assert!((s.u[0] * h - s.u[2] * h_i).abs() < 1e-12);
    }

    #[test]
    fn displacement_toward_vehicle_slackens() {
        let e = engine();
        let s = SimState::at_rest(aligned(0.0));
        let (d, info) = e.displace_load(&s, [0.05, 0.0, 0.0]).unwrap();
        assert!(!d.taut);
        assert_eq!(info.mode_change, Some(ModeChange::WentSlack));
        let (d, _) = e.displace_load(&s, [-0.05, 0.0, 0.0]).unwrap();
        assert!(d.taut);
        assert!(holonomic_residual(&d.q, 0.3).abs() < 1e-15);
    }

    #[test]
    fn zero_virtual_torque_option() {
        let opts = EngineOptions { virtual_load_torque: false, ..Default::default() };
        let e = Engine::new(params(), opts).unwrap();
        let s = SimState::at_rest(aligned(0.0));
        let (n, _) = e.step(&s, &ControlInput { tau: 1.0, ..Default::default() }, 1e-3).unwrap();
        assert_eq!(n.u, [0.0; 4]);
    }

    proptest! {
        #[test]
        fn rolling_constraints_hold_structurally(
            th in -3.0f64..3.0, th_i in -3.0f64..3.0, phi in -1.2f64..1.2,
            u in proptest::array::uniform4(-1.0f64..1.0),
        ) {
            let q = ChartPoint::new(0.0, 0.0, th, 0.3 * (th + phi).cos(), 0.3 * (th + phi).sin(), th_i).unwrap();
            let s = SimState { q, u, t: 0.0, tension: 0.0, taut: true };
            let v = TangentVec::chart(s.velocity());
            for alpha in lambda_generators(&q) {
                prop_assert!(alpha.apply(&v).unwrap().abs() < 1e-15);
            }
        }
    }
}
