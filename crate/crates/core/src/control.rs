//! Reference paths and the two-loop controller.
//!
//! The inner loop treats the load as a unicycle and produces a virtual thrust
//! and torque. The thrust is realised through the cable by the vehicle's
//! allocation law; each vehicle steers along the path tangent.

use std::f64::consts::{FRAC_2_PI, FRAC_PI_2};

use crate::constraint::h_factors;
use crate::error::{Error, Result};
use crate::dynamics::ThrustResponse;
use crate::geometry::{wrap_angle, ChartPoint};
use crate::tolerances::ALLOCATION_H_FRACTION;

/// `y = tan(2x/π)` with its first two derivatives.
pub fn tan_curve(x: f64) -> (f64, f64, f64) {
    let y = (FRAC_2_PI * x).tan();
    let sec2 = 1.0 + y * y;
    (y, FRAC_2_PI * sec2, 2.0 * FRAC_2_PI * FRAC_2_PI * sec2 * y)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceKind {
    /// `y = tan(2x/π)` for `x ∈ [x_start, x_end]`.
    TanCurve { x_start: f64, x_end: f64 },
    /// Straight segments through the points. A single point is a hold.
    Waypoints(Vec<[f64; 2]>),
    /// Dense samples of a smooth curve; curvature from neighbouring triples.
    ParametricSamples(Vec<[f64; 2]>),
}

/// A point on the path with its local frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    /// Arc length from the start (m).
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub curvature: f64,
}

impl PathPoint {
    /// Signed distance of `(x, y)` from the tangent line, positive to the left.
    pub fn lateral_offset(&self, x: f64, y: f64) -> f64 {
        let (s, c) = self.heading.sin_cos();
        -s * (x - self.x) + c * (y - self.y)
    }
}

/// Desired load state at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceState {
    pub point: PathPoint,
    pub velocity: [f64; 2],
    pub acceleration: [f64; 2],
    pub speed: f64,
}

/// An arc-length-parameterised path traversed at constant speed.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    kind: ReferenceKind,
    speed: f64,
    samples: Vec<PathPoint>,
}

const TAN_CURVE_INTERVALS: usize = 4000;

impl ReferenceTrajectory {
    pub fn new(kind: ReferenceKind, speed: f64) -> Result<Self> {
        if !(speed.is_finite() && speed >= 0.0) {
            return Err(Error::Reference(format!("path speed must be non-negative, got {speed}")));
        }
        let samples = match &kind {
            ReferenceKind::TanCurve { x_start, x_end } => tan_curve_table(*x_start, *x_end)?,
            ReferenceKind::Waypoints(pts) => polyline_table(pts, false)?,
            ReferenceKind::ParametricSamples(pts) => polyline_table(pts, true)?,
        };
        Ok(Self { kind, speed, samples })
    }

    pub fn kind(&self) -> &ReferenceKind {
        &self.kind
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn length(&self) -> f64 {
        self.samples.last().map_or(0.0, |p| p.s)
    }

    /// Time at which the path end is reached; infinite for a hold.
    pub fn horizon(&self) -> f64 {
        if self.length() == 0.0 || self.speed == 0.0 { f64::INFINITY } else { self.length() / self.speed }
    }

    pub fn start(&self) -> PathPoint {
        self.samples[0]
    }

    /// Path point at arc length `s`, clamped to the ends.
    pub fn at_arc_length(&self, s: f64) -> PathPoint {
        let n = self.samples.len();
        if n == 1 || s <= 0.0 {
            return self.samples[0];
        }
        if s >= self.length() {
            return self.samples[n - 1];
        }
        let k = self.samples.partition_point(|p| p.s <= s).clamp(1, n - 1) - 1;
        self.interpolate(k, (s - self.samples[k].s) / (self.samples[k + 1].s - self.samples[k].s))
    }

    fn interpolate(&self, k: usize, r: f64) -> PathPoint {
        let (a, b) = (&self.samples[k], &self.samples[k + 1]);
        let smooth = !matches!(self.kind, ReferenceKind::Waypoints(_));
        let lerp = |u: f64, v: f64| u + (v - u) * r;
        PathPoint {
            s: lerp(a.s, b.s),
            x: lerp(a.x, b.x),
            y: lerp(a.y, b.y),
            heading: if smooth { a.heading + wrap_angle(b.heading - a.heading) * r } else { a.heading },
            curvature: if smooth { lerp(a.curvature, b.curvature) } else { 0.0 },
        }
    }

    pub fn reference_state(&self, t: f64) -> Result<ReferenceState> {
        if !(t >= 0.0) {
            return Err(Error::Reference(format!("reference time must be non-negative, got {t}")));
        }
        let horizon = self.horizon();
        if t > horizon {
            return Err(Error::BeyondHorizon { t, horizon });
        }
        let point = self.at_arc_length(self.speed * t);
        let speed = if horizon.is_finite() { self.speed } else { 0.0 };
        let (sn, cs) = point.heading.sin_cos();
        let a_n = speed * speed * point.curvature;
        Ok(ReferenceState {
            point,
            velocity: [speed * cs, speed * sn],
            acceleration: [-a_n * sn, a_n * cs],
            speed,
        })
    }

    /// Closest point of the path to `(x, y)`.
    pub fn nearest(&self, x: f64, y: f64) -> PathPoint {
        let n = self.samples.len();
        if n == 1 {
            return self.samples[0];
        }
        let mut best = (f64::INFINITY, 0, 0.0);
        for k in 0..n - 1 {
            let (a, b) = (&self.samples[k], &self.samples[k + 1]);
            let (ex, ey) = (b.x - a.x, b.y - a.y);
            let len2 = ex * ex + ey * ey;
            let r = if len2 > 0.0 { (((x - a.x) * ex + (y - a.y) * ey) / len2).clamp(0.0, 1.0) } else { 0.0 };
            let (px, py) = (a.x + ex * r, a.y + ey * r);
            let d2 = (x - px).powi(2) + (y - py).powi(2);
            if d2 < best.0 {
                best = (d2, k, r);
            }
        }
        self.interpolate(best.1, best.2)
    }
}

fn tan_curve_table(x_start: f64, x_end: f64) -> Result<Vec<PathPoint>> {
    let limit = std::f64::consts::PI * std::f64::consts::PI / 4.0;
    if !(x_start.is_finite() && x_end.is_finite() && x_start < x_end && x_start > -limit && x_end < limit) {
        return Err(Error::Reference(format!(
            "tan curve range [{x_start}, {x_end}] must be increasing and inside (±π²/4)"
        )));
    }
    let dx = (x_end - x_start) / TAN_CURVE_INTERVALS as f64;
    let speed = |x: f64| (1.0 + tan_curve(x).1.powi(2)).sqrt();
    let mut s = 0.0;
    let mut out = Vec::with_capacity(TAN_CURVE_INTERVALS + 1);
    for k in 0..=TAN_CURVE_INTERVALS {
        let x = x_start + dx * k as f64;
        if k > 0 {
            // Simpson on each interval.
            let x0 = x - dx;
            s += dx / 6.0 * (speed(x0) + 4.0 * speed(x0 + 0.5 * dx) + speed(x));
        }
        let (y, d1, d2) = tan_curve(x);
        out.push(PathPoint { s, x, y, heading: d1.atan(), curvature: d2 / (1.0 + d1 * d1).powf(1.5) });
    }
    Ok(out)
}

fn polyline_table(pts: &[[f64; 2]], smooth: bool) -> Result<Vec<PathPoint>> {
    if pts.is_empty() {
        return Err(Error::Reference("path needs at least one point".into()));
    }
    if pts.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::Reference("path points must be finite".into()));
    }
    let mut pts: Vec<[f64; 2]> = pts.to_vec();
    pts.dedup();
    let n = pts.len();
    let seg_heading = |k: usize| (pts[k + 1][1] - pts[k][1]).atan2(pts[k + 1][0] - pts[k][0]);
    let mut out = Vec::with_capacity(n);
    let mut s = 0.0;
    for k in 0..n {
        if k > 0 {
            s += (pts[k][0] - pts[k - 1][0]).hypot(pts[k][1] - pts[k - 1][1]);
        }
        let heading = match (n, k) {
            (1, _) => 0.0,
            (_, 0) => seg_heading(0),
            (_, k) if k == n - 1 => seg_heading(k - 1),
            (_, k) if smooth => {
                let (h0, h1) = (seg_heading(k - 1), seg_heading(k));
                h0 + 0.5 * wrap_angle(h1 - h0)
            }
            (_, k) => seg_heading(k),
        };
        let curvature = if smooth && k > 0 && k + 1 < n { menger_curvature(pts[k - 1], pts[k], pts[k + 1]) } else { 0.0 };
        out.push(PathPoint { s, x: pts[k][0], y: pts[k][1], heading, curvature });
    }
    Ok(out)
}

/// Signed curvature of the circle through three points.
fn menger_curvature(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let d = |p: [f64; 2], q: [f64; 2]| (p[0] - q[0]).hypot(p[1] - q[1]);
    let denom = d(a, b) * d(b, c) * d(a, c);
    if denom > 0.0 { 2.0 * cross / denom } else { 0.0 }
}

/// Gains and limits of both loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains {
    /// Inverse look-ahead distance of the approach angle (1/m).
    pub k_p: f64,
    /// Heading gain toward the approach angle (1/s).
    pub k_d: f64,
    /// Yaw-rate tracking gain (1/s).
    pub k1: f64,
    /// Speed tracking gain (1/s).
    pub k2: f64,
    /// Bound on the commanded yaw-rate correction (rad/s).
    pub k3: f64,
    /// Along-track position gain (1/s²).
    pub k_s: f64,
    pub k_theta: f64,
    pub k_omega: f64,
    pub f_max: f64,
    pub tau_max: f64,
    /// Smallest cable tension the allocation may command (N).
    pub min_tension: f64,
    /// Slack mode: gap-closing gain (1/s) and extra separation speed (m/s).
    pub slack_gap_gain: f64,
    pub slack_closing_speed: f64,
    /// Slack mode: vehicle speed tracking gain (1/s).
    pub slack_speed_gain: f64,
    /// Several vehicles: heading correction per radian of slot-angle error.
    pub k_slot: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            k_p: 5.0,
            k_d: 1.0,
            k1: 20.0,
            k2: 1.0,
            k3: 1.0,
            k_s: 0.0,
            k_theta: 0.05,
            k_omega: 0.02,
            f_max: 0.05,
            tau_max: 0.02,
            min_tension: 1e-6,
            slack_gap_gain: 2.0,
            slack_closing_speed: 0.02,
            slack_speed_gain: 5.0,
            k_slot: 2.0,
        }
    }
}

impl ControllerGains {
    /// Names of gains violating `≥ 0` or of limits violating `> 0`.
    pub fn violations(&self) -> Vec<(&'static str, f64)> {
        let non_negative = [
            ("k_p", self.k_p),
            ("k_d", self.k_d),
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
            ("k_s", self.k_s),
            ("k_theta", self.k_theta),
            ("k_omega", self.k_omega),
            ("min_tension", self.min_tension),
            ("slack_gap_gain", self.slack_gap_gain),
            ("slack_closing_speed", self.slack_closing_speed),
            ("slack_speed_gain", self.slack_speed_gain),
            ("k_slot", self.k_slot),
        ];
        let positive = [("f_max", self.f_max), ("tau_max", self.tau_max)];
        non_negative
            .into_iter()
            .filter(|(_, v)| !(v.is_finite() && *v >= 0.0))
            .chain(positive.into_iter().filter(|(_, v)| !(v.is_finite() && *v > 0.0)))
            .collect()
    }
}

/// Heading error wrapped to `(−π, π]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeError {
    pub e_theta: f64,
}

impl AttitudeError {
    pub fn new(theta: f64, theta_ref: f64) -> Self {
        Self { e_theta: wrap_angle(theta - theta_ref) }
    }
}

/// Planar state of the load as the inner loop sees it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
}

/// What the inner loop tracks: the closest path point, the path speed and
/// the along-track lag behind the timed reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadReference {
    pub point: PathPoint,
    pub speed: f64,
    pub along_track_lag: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadCommand {
    pub f: f64,
    pub tau: f64,
    pub lateral_error: f64,
    pub heading_error: f64,
}

/// Inner-loop tracking law for the load.
///
/// The load steers toward the approach heading `θ_path - atan(k_p e_y)`, which
/// lies within a quarter turn of the path tangent, so a large lateral error
/// never commands a reversal. The yaw-rate command adds the path-curvature
/// feedforward.
pub fn load_virtual_control(
    load: &LoadState,
    reference: &LoadReference,
    gains: &ControllerGains,
    load_mass: f64,
    load_inertia: f64,
) -> LoadCommand {
    let p = &reference.point;
    let e_y = p.lateral_offset(load.x, load.y);
    let e_th = AttitudeError::new(load.theta, p.heading).e_theta;
    let v_ref = reference.speed;
    let approach = -(gains.k_p * e_y).atan();
    let correction = (gains.k_d * wrap_angle(approach - e_th)).clamp(-gains.k3, gains.k3);
    let along = 1.0 - p.curvature * e_y;
    let feedforward = if along > 0.1 { p.curvature * load.v * e_th.cos() / along } else { 0.0 };
    let omega_c = feedforward + correction;
    let tau = (load_inertia * gains.k1 * (omega_c - load.omega)).clamp(-gains.tau_max, gains.tau_max);
    let accel = gains.k2 * (v_ref - load.v) + gains.k_s * reference.along_track_lag;
    let f = (load_mass * accel).clamp(-gains.f_max, gains.f_max);
    LoadCommand { f, tau, lateral_error: e_y, heading_error: e_th }
}

/// Mass model seen by one vehicle's allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationModel {
    pub load_mass: f64,
    pub vehicle_mass: f64,
    /// Share of the load carried by this vehicle; shares sum to one.
    pub weight: f64,
    pub cable_length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub f_i: f64,
    pub saturated: bool,
    /// `|h|` or `|h_i|` fell below the threshold; `f_i` is the held command.
    pub singular: bool,
}

/// Vehicle thrust giving rate `a_cmd` along the mixed generator
/// `h_i e_1 + h e_3` with the load unactuated.
///
/// Solves `h f_i / (w M h_i² + m_i h²) = a_cmd`; with unit masses and `w = 1`
/// this is `f_i = a_cmd (h² + h_i²)/h`.
pub fn allocate_vehicle_force(
    q: &ChartPoint,
    a_cmd: f64,
    model: &AllocationModel,
    f_max: f64,
    last_feasible: f64,
) -> Allocation {
    let (h, h_i) = h_factors(q);
    let threshold = ALLOCATION_H_FRACTION * model.cable_length;
    if h.abs() < threshold || h_i.abs() < threshold || !a_cmd.is_finite() {
        return Allocation { f_i: last_feasible, saturated: false, singular: true };
    }
    let raw = a_cmd * (model.weight * model.load_mass * h_i * h_i + model.vehicle_mass * h * h) / h;
    let f_i = raw.clamp(-f_max, f_max);
    Allocation { f_i, saturated: f_i != raw, singular: false }
}

/// Rate along the mixed generator that makes the load accelerate at
/// `load_accel` along its heading, given the connection drift on `e_1`.
pub fn mixed_rate_command(q: &ChartPoint, load_accel: f64, drift_e1: f64) -> f64 {
    let (_, h_i) = h_factors(q);
    (load_accel + drift_e1) / h_i
}

/// Lowest `f_i` keeping tension `T(f_i) = t0 + slope f_i` at `t_min`.
pub fn tension_floor(f_i: f64, t0: f64, slope: f64, t_min: f64) -> f64 {
    if slope > 0.0 && t0 + slope * f_i < t_min {
        (t_min - t0) / slope
    } else {
        f_i
    }
}

/// Thrusts of several vehicles on one load.
///
/// Vehicles with `free[k]` split the load acceleration still missing after
/// `response.load_accel` in proportion to their weights. Each free cable is
/// then held at `t_min` or above and every thrust is saturated at `f_max`.
/// Entries of vehicles that are not free are zero.
pub fn allocate_shared_thrust(
    a_des: f64,
    response: &ThrustResponse,
    weights: &[f64],
    free: &[bool],
    t_min: f64,
    f_max: f64,
) -> Vec<f64> {
    let n = weights.len();
    let share: f64 = (0..n).filter(|&k| free[k]).map(|k| weights[k]).sum();
    let mut f = vec![0.0; n];
    if !(share > 0.0) {
        return f;
    }
    let missing = a_des - response.load_accel;
    for k in (0..n).filter(|&k| free[k]) {
        f[k] = weights[k] / share * missing / response.load_gain[k];
    }
    // Raising one thrust changes every tension: sweep until no floor binds.
    for _ in 0..64 {
        let mut moved: f64 = 0.0;
        for k in (0..n).filter(|&k| free[k]) {
            let t: f64 = response.tension[k] + (0..n).map(|j| response.tension_gain[(k, j)] * f[j]).sum::<f64>();
            let raised = tension_floor(f[k], t - response.tension_gain[(k, k)] * f[k], response.tension_gain[(k, k)], t_min);
            moved = moved.max((raised - f[k]).abs());
            f[k] = raised;
        }
        if moved <= 1e-15 * f_max {
            break;
        }
    }
    f.iter().map(|v| v.clamp(-f_max, f_max)).collect()
}

/// Path tangent at the point closest to the vehicle.
pub fn vehicle_heading_reference(reference: &ReferenceTrajectory, q: &ChartPoint) -> f64 {
    reference.nearest(q.x_i, q.y_i).heading
}

/// Heading that holds a vehicle at cable angle `slot` from the load heading.
///
/// The vehicle heads parallel to the load, turned by `k_slot` times the slot
/// error; moving forward this swings it around the load toward the slot. The
/// turn is capped at a quarter turn.
pub fn formation_heading_reference(q: &ChartPoint, slot: f64, gains: &ControllerGains) -> f64 {
    let (dx, dy) = q.cable_offset();
    let angle = (-dy).atan2(-dx);
    let error = wrap_angle(angle - q.theta - slot);
    q.theta - (gains.k_slot * error).clamp(-FRAC_PI_2, FRAC_PI_2)
}

/// `τ_i = −k_θ wrap(θ_i − θ_ref) − k_ω ω_i`, saturated.
pub fn vehicle_torque_control(theta_i: f64, omega_i: f64, theta_ref_i: f64, gains: &ControllerGains) -> f64 {
    let e = AttitudeError::new(theta_i, theta_ref_i).e_theta;
    (-gains.k_theta * e - gains.k_omega * omega_i).clamp(-gains.tau_max, gains.tau_max)
}

/// Slack-cable thrust: open the gap back to `l` at a bounded rate.
pub fn slack_vehicle_force(
    load_speed: f64,
    vehicle_speed: f64,
    distance: f64,
    cable_length: f64,
    vehicle_mass: f64,
    gains: &ControllerGains,
) -> f64 {
    let target = load_speed + gains.slack_gap_gain * (cable_length - distance) + gains.slack_closing_speed;
    (vehicle_mass * gains.slack_speed_gain * (target - vehicle_speed)).clamp(-gains.f_max, gains.f_max)
}
