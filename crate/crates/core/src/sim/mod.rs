//! Closed-loop batch simulation: scenario in, time series and metrics out.

mod config;
mod output;
mod svg;

pub use config::{
    parse_scenario, ConfigErrors, ConfigIssue, Disturbance, IntegratorConfig, LoadConfig, OutputConfig,
    ReferenceConfig, ScenarioConfig, VehicleConfig, DEFAULT_HEADING_OFFSET, DEFAULT_LATERAL_OFFSET,
};
pub use output::{emit_outputs, series_header, write_atomic, OutputFiles, PLOT_FILES};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraint::{holonomic_residual, lambda_generators};
use crate::control::{
    allocate_shared_thrust, allocate_vehicle_force, formation_heading_reference, load_virtual_control, mixed_rate_command, slack_vehicle_force, tension_floor,
    vehicle_heading_reference, vehicle_torque_control, AllocationModel, LoadReference, LoadState,
    ReferenceTrajectory,
};
use crate::dynamics::{ControlInput, Engine, EngineOptions, Formation, FormationState, ModeChange, SimState, StepInfo, VehicleParams};
use crate::geometry::{step_count, wrap_angle, ChartPoint, TangentVec};
use crate::tolerances::DRIFT_WARNING_FRACTION;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleRow {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
    pub f: f64,
    pub tau: f64,
    pub cable: f64,
    pub tension: f64,
    pub taut: bool,
}

/// State at one step together with the command applied from it.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub t: f64,
    pub load: [f64; 3],
    pub v: f64,
    pub omega: f64,
    /// Virtual load thrust and torque from the inner loop.
    pub f: f64,
    pub tau: f64,
    pub lateral_error: f64,
    pub heading_error: f64,
    pub saturated: bool,
    pub vehicles: Vec<VehicleRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    Disturbance,
    WentSlack,
    Reengaged,
    SingularAllocation,
    /// Drift correction moved the vehicle by more than the warning fraction.
    LargeCorrection(f64),
    WorkspaceExit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    /// Zero-based vehicle index, when the event concerns one vehicle.
    pub vehicle: Option<usize>,
    pub kind: EventKind,
}

impl Event {
    pub fn is_warning(&self) -> bool {
        matches!(self.kind, EventKind::LargeCorrection(_) | EventKind::WorkspaceExit | EventKind::SingularAllocation)
    }
}

/// Summary figures of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub rms_lateral_error_m: f64,
    pub final_lateral_error_m: f64,
    pub max_lateral_error_after_transient_m: f64,
    /// Largest `|C_i|/l_i²` over the recorded states.
    pub max_constraint_drift: f64,
    /// Largest `|C_i|/l_i²` reached within a step, before correction.
    pub max_step_drift: f64,
    pub max_rolling_residual: f64,
    pub max_correction_m: f64,
    pub min_tension_n: f64,
    pub saturation_duty_cycle: f64,
    pub max_vehicle_torque_nm: f64,
    pub slack_events: usize,
    pub reengage_events: usize,
    pub singular_allocation_events: usize,
    pub workspace_violation: bool,
}

impl Metrics {
    /// `key=value` pairs in output order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("rms_lateral_error_m", self.rms_lateral_error_m.to_string()),
            ("final_lateral_error_m", self.final_lateral_error_m.to_string()),
            ("max_lateral_error_after_transient_m", self.max_lateral_error_after_transient_m.to_string()),
            ("max_constraint_drift", self.max_constraint_drift.to_string()),
            ("max_step_drift", self.max_step_drift.to_string()),
            ("max_rolling_residual", self.max_rolling_residual.to_string()),
            ("max_correction_m", self.max_correction_m.to_string()),
            ("min_tension_n", self.min_tension_n.to_string()),
            ("saturation_duty_cycle", self.saturation_duty_cycle.to_string()),
            ("max_vehicle_torque_nm", self.max_vehicle_torque_nm.to_string()),
            ("slack_events", self.slack_events.to_string()),
            ("reengage_events", self.reengage_events.to_string()),
            ("singular_allocation_events", self.singular_allocation_events.to_string()),
            ("workspace_violation", self.workspace_violation.to_string()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub dt: f64,
    pub rows: Vec<RunRow>,
    pub events: Vec<Event>,
    pub metrics: Metrics,
}

impl RunRecord {
    /// Indices of the rows kept at `rate_hz`, always including the last.
    pub fn decimated(&self, rate_hz: f64) -> Vec<usize> {
        let stride = ((1.0 / (rate_hz * self.dt)).round() as usize).max(1);
        let last = self.rows.len().saturating_sub(1);
        let mut idx: Vec<usize> = (0..self.rows.len()).step_by(stride).collect();
        if idx.last() != Some(&last) {
            idx.push(last);
        }
        idx
    }
}

/// A numerical failure with the step at which it happened.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("step {step} (t = {t:.6} s): {source}; state {snapshot:?}")]
pub struct SimError {
    pub step: usize,
    pub t: f64,
    pub snapshot: Vec<ChartPoint>,
    pub source: crate::Error,
}

struct Runner<'a> {
    cfg: &'a ScenarioConfig,
    path: ReferenceTrajectory,
    /// One engine per pair. With one vehicle they integrate the plant; with
    /// several they only serve the allocation's pair model.
    engines: Vec<Engine>,
    /// The coupled plant when more than one cable pulls the load.
    formation: Option<(Formation, FormationState)>,
    /// Initial cable angle of each vehicle from the load heading.
    slots: Vec<f64>,
    pairs: Vec<SimState>,
    last_force: Vec<f64>,
    singular: Vec<bool>,
    events: Vec<Event>,
    outside: bool,
}

struct Commands {
    load: crate::control::LoadCommand,
    inputs: Vec<ControlInput>,
    /// Cable tension under `inputs`; zero on a slack cable.
    tensions: Vec<f64>,
    saturated: bool,
}

/// Runs the closed loop for the whole horizon.
pub fn run_simulation(cfg: &ScenarioConfig) -> Result<RunRecord, SimError> {
    let fail = |source: crate::Error| SimError { step: 0, t: 0.0, snapshot: Vec::new(), source };
    let path = cfg.reference_trajectory().map_err(fail)?;
    let options = EngineOptions {
        allow_slack: true,
        drift_correction: cfg.integrator.drift_correction,
        virtual_load_torque: cfg.load.virtual_torque,
    };
    let n = cfg.vehicles.len();
    let engines = (0..n)
        .map(|k| Engine::new(cfg.body_params(k), options))
        .collect::<crate::Result<Vec<_>>>()
        .map_err(fail)?;
    let pairs: Vec<SimState> = (0..n)
        .map(|k| {
            let q = cfg.initial_point(k);
            let l = cfg.vehicles[k].cable_length;
            SimState { taut: q.cable_distance() >= l * (1.0 - 1e-9), ..SimState::at_rest(q) }
        })
        .collect();
    let slots = pairs
        .iter()
        .map(|p| {
            let (dx, dy) = p.q.cable_offset();
            wrap_angle((-dy).atan2(-dx) - p.q.theta)
        })
        .collect();
    let formation = if n > 1 {
        let vehicles =
            cfg.vehicles.iter().map(|v| VehicleParams { mass: v.mass, inertia: v.inertia, cable_length: v.cable_length });
        let plant = Formation::new(cfg.load.mass, cfg.load.inertia, vehicles.collect(), options).map_err(fail)?;
        let poses: Vec<[f64; 3]> = cfg.vehicles.iter().map(|v| v.pose).collect();
        let state = FormationState::at_rest(cfg.load.pose, &poses, pairs.iter().map(|p| p.taut).collect());
        Some((plant, state))
    } else {
        None
    };
    let mut runner = Runner {
        cfg,
        path,
        engines,
        formation,
        slots,
        pairs,
        last_force: vec![0.0; n],
        singular: vec![false; n],
        events: Vec::new(),
        outside: false,
    };
    runner.run()
}

impl Runner<'_> {
    fn run(&mut self) -> Result<RunRecord, SimError> {
        let dt = self.cfg.integrator.dt;
        let steps = step_count(self.cfg.integrator.horizon, dt);
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.integrator.seed);
        let mut schedule: Vec<&Disturbance> = self.cfg.disturbances.iter().collect();
        schedule.sort_by(|a, b| a.time.total_cmp(&b.time));
        let mut schedule = schedule.into_iter().peekable();

        let mut rows = Vec::with_capacity(steps + 1);
        let mut max_step_drift: f64 = 0.0;
        let mut max_correction: f64 = 0.0;
        for step in 0..=steps {
            let t = step as f64 * dt;
            while let Some(d) = schedule.next_if(|d| d.time <= t + 0.5 * dt) {
                self.disturb(d, t, &mut rng).map_err(|e| self.error(step, t, e))?;
            }
            let cmds = self.commands(t).map_err(|e| self.error(step, t, e))?;
            rows.push(self.row(t, &cmds));
            self.check_workspace(t);
            if step == steps {
                break;
            }
            let infos = self.advance(&cmds.inputs, dt).map_err(|e| self.error(step, t, e))?;
            for (k, info) in infos.into_iter().enumerate() {
                let l = self.cfg.vehicles[k].cable_length;
                let t_next = (step + 1) as f64 * dt;
                match info.mode_change {
                    Some(ModeChange::WentSlack) => self.event(t, Some(k), EventKind::WentSlack),
                    Some(ModeChange::Reengaged) => self.event(t_next, Some(k), EventKind::Reengaged),
                    None if self.pairs[k].taut => {
                        max_correction = max_correction.max(info.correction);
                        // |d² − l²|/l² before correction.
                        max_step_drift = max_step_drift.max(info.correction * (2.0 * l + info.correction) / (l * l));
                        if info.correction > DRIFT_WARNING_FRACTION * l {
                            self.event(t_next, Some(k), EventKind::LargeCorrection(info.correction));
                        }
                    }
                    None => {}
                }
            }
        }
        let metrics = self.metrics(&rows, max_step_drift, max_correction);
        Ok(RunRecord { dt, rows, events: std::mem::take(&mut self.events), metrics })
    }

    fn error(&self, step: usize, t: f64, source: crate::Error) -> SimError {
        SimError { step, t, snapshot: self.pairs.iter().map(|p| p.q).collect(), source }
    }

    fn event(&mut self, t: f64, vehicle: Option<usize>, kind: EventKind) {
        self.events.push(Event { t, vehicle, kind });
    }

    fn disturb(&mut self, d: &Disturbance, t: f64, rng: &mut ChaCha8Rng) -> crate::Result<()> {
        let q = self.pairs[d.vehicle - 1].q;
        let (dx, dy) = q.cable_offset();
        let dist = dx.hypot(dy).max(f64::MIN_POSITIVE);
        let mut off = [d.offset[0] - d.toward_vehicle * dx / dist, d.offset[1] - d.toward_vehicle * dy / dist, d.offset[2]];
        if d.jitter > 0.0 {
            off[0] += rng.random_range(-d.jitter..=d.jitter);
            off[1] += rng.random_range(-d.jitter..=d.jitter);
        }
        self.event(t, None, EventKind::Disturbance);
        let infos = match &mut self.formation {
            Some((plant, state)) => {
                let (next, infos) = plant.displace_load(state, off)?;
                *state = next;
                self.pairs = (0..state.vehicle_count()).map(|k| state.pair(k)).collect();
                infos
            }
            None => {
                let (next, info) = self.engines[0].displace_load(&self.pairs[0], off)?;
                self.pairs[0] = next;
                vec![info]
            }
        };
        for (k, info) in infos.into_iter().enumerate() {
            match info.mode_change {
                Some(ModeChange::WentSlack) => self.event(t, Some(k), EventKind::WentSlack),
                Some(ModeChange::Reengaged) => self.event(t, Some(k), EventKind::Reengaged),
                None => {}
            }
        }
        Ok(())
    }

    fn commands(&mut self, t: f64) -> crate::Result<Commands> {
        let g = self.cfg.gains;
        let lead = &self.pairs[0];
        let load = LoadState { x: lead.q.x, y: lead.q.y, theta: lead.q.theta, v: lead.u[0], omega: lead.u[1] };
        let point = self.path.nearest(load.x, load.y);
        let lag = if t <= self.path.horizon() { self.path.speed() * t - point.s } else { 0.0 };
        let reference = LoadReference { point, speed: self.path.speed(), along_track_lag: lag };
        let cmd = load_virtual_control(&load, &reference, &g, self.cfg.load.mass, self.cfg.load.inertia);
        let accel = cmd.f / self.cfg.load.mass;
        let n = self.pairs.len();

        // Torques, slack thrusts and held thrusts; free thrusts start at zero.
        let mut inputs = Vec::with_capacity(n);
        let mut free = vec![false; n];
        for k in 0..n {
            let s = self.pairs[k];
            let v = &self.cfg.vehicles[k];
            let theta_ref = if n > 1 {
                formation_heading_reference(&s.q, self.slots[k], &g)
            } else {
                vehicle_heading_reference(&self.path, &s.q)
            };
            let tau_i = vehicle_torque_control(s.q.theta_i, s.u[3], theta_ref, &g);
            let f_i = if s.taut {
                let model = AllocationModel {
                    load_mass: self.cfg.load.mass,
                    vehicle_mass: v.mass,
                    weight: v.weight,
                    cable_length: v.cable_length,
                };
                let a_cmd = mixed_rate_command(&s.q, accel, self.engines[k].drift(&s)?[0]);
                let alloc = allocate_vehicle_force(&s.q, a_cmd, &model, g.f_max, self.last_force[k]);
                if alloc.singular && !self.singular[k] {
                    self.event(t, Some(k), EventKind::SingularAllocation);
                }
                self.singular[k] = alloc.singular;
                free[k] = !alloc.singular;
                alloc.f_i
            } else {
                slack_vehicle_force(load.v, s.u[2], s.q.cable_distance(), v.cable_length, v.mass, &g)
            };
            inputs.push(ControlInput { f: 0.0, tau: cmd.tau * v.weight, f_i, tau_i });
        }

        let tensions = match &self.formation {
            Some((plant, state)) => {
                for (inp, &fr) in inputs.iter_mut().zip(&free) {
                    if fr {
                        inp.f_i = 0.0;
                    }
                }
                let response = plant.thrust_response(state, &inputs)?;
                let weights: Vec<f64> = self.cfg.vehicles.iter().map(|v| v.weight).collect();
                let f = allocate_shared_thrust(accel, &response, &weights, &free, g.min_tension, g.f_max);
                for k in (0..n).filter(|&k| free[k]) {
                    inputs[k].f_i = f[k];
                }
                plant.tensions(state, &inputs)?
            }
            None => {
                let s = &self.pairs[0];
                if s.taut {
                    let base = ControlInput { f_i: 0.0, ..inputs[0] };
                    let t0 = self.engines[0].tension(s, &base)?;
                    let t1 = self.engines[0].tension(s, &ControlInput { f_i: 1.0, ..base })?;
                    let f = tension_floor(inputs[0].f_i, t0, t1 - t0, g.min_tension).clamp(-g.f_max, g.f_max);
                    inputs[0].f_i = f;
                    vec![t0 + (t1 - t0) * f]
                } else {
                    vec![0.0]
                }
            }
        };
        for k in (0..n).filter(|&k| free[k]) {
            self.last_force[k] = inputs[k].f_i;
        }
        let saturated = cmd.f.abs() >= g.f_max
            || cmd.tau.abs() >= g.tau_max
            || inputs.iter().any(|i| i.f_i.abs() >= g.f_max || i.tau_i.abs() >= g.tau_max);
        Ok(Commands { load: cmd, inputs, tensions, saturated })
    }

    /// Integrates the plant over one step and refreshes the pair views.
    fn advance(&mut self, inputs: &[ControlInput], dt: f64) -> crate::Result<Vec<StepInfo>> {
        match &mut self.formation {
            Some((plant, state)) => {
                let (next, infos) = plant.step(state, inputs, dt)?;
                *state = next;
                self.pairs = (0..state.vehicle_count()).map(|k| state.pair(k)).collect();
                Ok(infos)
            }
            None => {
                let (next, info) = self.engines[0].step(&self.pairs[0], &inputs[0], dt)?;
                self.pairs[0] = next;
                Ok(vec![info])
            }
        }
    }

    fn row(&self, t: f64, cmds: &Commands) -> RunRow {
        let lead = &self.pairs[0];
        let vehicles = self
            .pairs
            .iter()
            .zip(cmds.inputs.iter().zip(&cmds.tensions))
            .map(|(p, (inp, &tension))| VehicleRow {
                x: p.q.x_i,
                y: p.q.y_i,
                theta: p.q.theta_i,
                v: p.u[2],
                omega: p.u[3],
                f: inp.f_i,
                tau: inp.tau_i,
                cable: p.q.cable_distance(),
                tension,
                taut: p.taut,
            })
            .collect();
        RunRow {
            t,
            load: [lead.q.x, lead.q.y, lead.q.theta],
            v: lead.u[0],
            omega: lead.u[1],
            f: cmds.load.f,
            tau: cmds.load.tau,
            lateral_error: cmds.load.lateral_error,
            heading_error: cmds.load.heading_error,
            saturated: cmds.saturated,
            vehicles,
        }
    }

    fn check_workspace(&mut self, t: f64) {
        let o = &self.cfg.output;
        let inside = |x: f64, y: f64| {
            (x - o.workspace_center[0]).abs() <= 0.5 * o.workspace[0]
                && (y - o.workspace_center[1]).abs() <= 0.5 * o.workspace[1]
        };
        let all_inside = self.pairs.iter().all(|p| inside(p.q.x, p.q.y) && inside(p.q.x_i, p.q.y_i));
        if !all_inside && !self.outside {
            self.event(t, None, EventKind::WorkspaceExit);
        }
        self.outside = !all_inside;
    }

    fn metrics(&self, rows: &[RunRow], max_step_drift: f64, max_correction: f64) -> Metrics {
        let transient = self.cfg.output.transient;
        let settled: Vec<f64> = rows.iter().filter(|r| r.t >= transient).map(|r| r.lateral_error).collect();
        let rms = if settled.is_empty() {
            f64::NAN
        } else {
            (settled.iter().map(|e| e * e).sum::<f64>() / settled.len() as f64).sqrt()
        };
        let mut drift: f64 = 0.0;
        let mut rolling: f64 = 0.0;
        let mut min_tension = f64::INFINITY;
        let mut max_torque: f64 = 0.0;
        for r in rows {
            for (k, v) in r.vehicles.iter().enumerate() {
                let l = self.cfg.vehicles[k].cable_length;
                let q = ChartPoint { x: r.load[0], y: r.load[1], theta: r.load[2], x_i: v.x, y_i: v.y, theta_i: v.theta };
                if v.taut {
                    drift = drift.max(holonomic_residual(&q, l).abs() / (l * l));
                    min_tension = min_tension.min(v.tension);
                }
                let s = SimState { q, u: [r.v, r.omega, v.v, v.omega], t: r.t, tension: v.tension, taut: v.taut };
                let qdot = TangentVec::chart(s.velocity());
                for alpha in lambda_generators(&q) {
                    rolling = rolling.max(alpha.apply(&qdot).map_or(f64::NAN, f64::abs));
                }
                max_torque = max_torque.max(v.tau.abs());
            }
        }
        let count = |kind: fn(&EventKind) -> bool| self.events.iter().filter(|e| kind(&e.kind)).count();
        Metrics {
            rms_lateral_error_m: rms,
            final_lateral_error_m: rows.last().map_or(f64::NAN, |r| r.lateral_error.abs()),
            max_lateral_error_after_transient_m: settled.iter().fold(0.0, |m: f64, e| m.max(e.abs())),
            max_constraint_drift: drift,
            max_step_drift,
            max_rolling_residual: rolling,
            max_correction_m: max_correction,
            min_tension_n: min_tension,
            saturation_duty_cycle: rows.iter().filter(|r| r.saturated).count() as f64 / rows.len() as f64,
            max_vehicle_torque_nm: max_torque,
            slack_events: count(|k| matches!(k, EventKind::WentSlack)),
            reengage_events: count(|k| matches!(k, EventKind::Reengaged)),
            singular_allocation_events: count(|k| matches!(k, EventKind::SingularAllocation)),
            workspace_violation: self.events.iter().any(|e| e.kind == EventKind::WorkspaceExit),
        }
    }
}
