//! Acceptance checks. Runs without the libtest harness and prints one
//! PASS/FAIL line per criterion; exits non-zero if any fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, SMatrix, SVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cotow_core::constraint::{
    d_generators, metric_projection_maps, projection_maps, sigma_generators, Complement, ConstrainedConnection,
};
use cotow_core::dynamics::{BodyParams, ControlInput, Engine, EngineOptions, SimState};
use cotow_core::sim::{emit_outputs, parse_scenario, run_simulation, RunRecord, ScenarioConfig};
use cotow_core::{ChartPoint, Mat6, MetricTensor, TangentVec, Vec6};

type Mat36 = SMatrix<f64, 3, 6>;

const M: f64 = 0.09;
const J: f64 = 1.5e-4;
const MV: f64 = 0.045;
const JV: f64 = 5.4e-5;
const L: f64 = 0.3;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn scenario(name: &str) -> ScenarioConfig {
    let path: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_scenario(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Taut configuration with the vehicle at distance `l`, headings uniform.
fn random_taut(rng: &mut ChaCha8Rng, l: f64) -> ChartPoint {
    let x = rng.random_range(-1.0..1.0);
    let y = rng.random_range(-1.0..1.0);
    let psi: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let theta_i = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    ChartPoint { x, y, theta, x_i: x + l * psi.cos(), y_i: y + l * psi.sin(), theta_i }
}

fn lever_arms(q: &ChartPoint) -> (f64, f64) {
    let (dx, dy) = (q.x - q.x_i, q.y - q.y_i);
    (dx * q.theta.cos() + dy * q.theta.sin(), dx * q.theta_i.cos() + dy * q.theta_i.sin())
}

/// Rows: cable length form and the two no-side-slip forms, from the raw
/// geometry.
fn sigma_oracle(q: &ChartPoint) -> Mat36 {
    let (dx, dy) = (q.x - q.x_i, q.y - q.y_i);
    let (s, c) = q.theta.sin_cos();
    let (si, ci) = q.theta_i.sin_cos();
    Mat36::from_row_slice(&[
        dx, dy, 0.0, -dx, -dy, 0.0, //
        -s, c, 0.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, -si, ci, 0.0,
    ])
}

fn metric_oracle() -> Mat6 {
    Mat6::from_diagonal(&Vec6::new(M, M, J, MV, MV, JV))
}

/// `G⁻¹Σᵀ(ΣG⁻¹Σᵀ)⁻¹Σ` by direct inversion.
fn complement_oracle(q: &ChartPoint) -> Mat6 {
    let g_inv = metric_oracle().try_inverse().unwrap();
    let s = sigma_oracle(q);
    let gram: Matrix3<f64> = s * g_inv * s.transpose();
    g_inv * s.transpose() * gram.try_inverse().unwrap() * s
}

fn kinetic_energy(s: &SimState) -> f64 {
    let [v, w, vi, wi] = s.u;
    let q = &s.q;
    let qdot = [v * q.theta.cos(), v * q.theta.sin(), w, vi * q.theta_i.cos(), vi * q.theta_i.sin(), wi];
    let g = [M, M, J, MV, MV, JV];
    0.5 * qdot.iter().zip(g).map(|(d, m)| m * d * d).sum::<f64>()
}

fn sample_h(rng: &mut ChaCha8Rng, n: usize) -> Vec<ChartPoint> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let q = random_taut(rng, 1.0);
        let (h, h_i) = lever_arms(&q);
        if h * h + h_i * h_i > 0.1 {
            out.push(q);
        }
    }
    out
}

fn c1_annihilation() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for q in sample_h(&mut rng, 1000) {
        let oracle = sigma_oracle(&q);
        let library = sigma_generators(&q);
        let gens = d_generators(&q).expect("admissible");
        for x in &gens[..3] {
            let v = x.components();
            for r in 0..3 {
                worst = worst.max((oracle.row(r) * v)[0].abs());
                worst = worst.max(library[r].apply(x).expect("chart basis").abs());
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-10 && elapsed < Duration::from_secs(5),
        format!("max |Σ(X)| = {worst:.2e} over 1000 samples in {:.2} s", elapsed.as_secs_f64()),
    )
}

fn c2_projection() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let metric = MetricTensor::kinetic(M, J, MV, JV).unwrap();
    let (mut idem, mut sum): (f64, f64) = (0.0, 0.0);
    let mut ranks_ok = true;
    for q in sample_h(&mut rng, 1000) {
        for (p, pc) in [projection_maps(&q).unwrap(), metric_projection_maps(&q, &metric).unwrap()] {
            let (p, pc) = (p.entries(), pc.entries());
            idem = idem.max((p * p - p).amax());
            sum = sum.max((p + pc - Mat6::identity()).amax());
            let sv = p.svd(false, false).singular_values;
            let scale = sv.max();
            ranks_ok &= sv.iter().filter(|s| **s > 1e-8 * scale).count() == 3;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        idem < 1e-10 && sum < 1e-10 && ranks_ok && elapsed < Duration::from_secs(5),
        format!(
            "‖P²−P‖∞ = {idem:.2e}, ‖P+P′−I‖∞ = {sum:.2e}, rank 3: {ranks_ok}, both projections, {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn moving_state(rng: &mut ChaCha8Rng) -> SimState {
    loop {
        let q = random_taut(rng, L);
        let (h, h_i) = lever_arms(&q);
        if h * h + h_i * h_i > 0.1 * L * L {
            let rate = rng.random_range(-0.5..0.5);
            let u = [rate * h_i, rng.random_range(-0.5..0.5), rate * h, rng.random_range(-0.5..0.5)];
            return SimState { q, u, t: 0.0, tension: 0.0, taut: true };
        }
    }
}

fn c3_geodesic_energy() -> Outcome {
    let start = Instant::now();
    // Bilateral cable: an unforced geodesic may demand compression.
    let options = EngineOptions { allow_slack: false, ..EngineOptions::default() };
    let engine = Engine::new(BodyParams::new(M, J, MV, JV, L).unwrap(), options).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let mut s = moving_state(&mut rng);
        let e0 = kinetic_energy(&s);
        for _ in 0..10_000 {
            s = engine.step(&s, &ControlInput::default(), 1e-3).unwrap().0;
            worst = worst.max(((kinetic_energy(&s) - e0) / e0).abs());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-6 && elapsed < Duration::from_secs(10),
        format!("max relative energy change {worst:.2e} over 10 s, 3 trajectories, {:.2} s", elapsed.as_secs_f64()),
    )
}

/// Largest `|C|/l²` and largest rolling residual, from the recorded poses and
/// body speeds.
fn constraint_residuals(cfg: &ScenarioConfig, rec: &RunRecord) -> (f64, f64) {
    let (mut c, mut lam): (f64, f64) = (0.0, 0.0);
    for r in &rec.rows {
        let [x, y, th] = r.load;
        for (k, v) in r.vehicles.iter().enumerate() {
            let l = cfg.vehicles[k].cable_length;
            if v.taut {
                c = c.max((((x - v.x).powi(2) + (y - v.y).powi(2)) - l * l).abs() / (l * l));
            }
            let q = ChartPoint { x, y, theta: th, x_i: v.x, y_i: v.y, theta_i: v.theta };
            let qdot = SVector::<f64, 6>::new(
                r.v * th.cos(),
                r.v * th.sin(),
                r.omega,
                v.v * v.theta.cos(),
                v.v * v.theta.sin(),
                v.omega,
            );
            let s = sigma_oracle(&q);
            lam = lam.max((s.row(1) * qdot)[0].abs()).max((s.row(2) * qdot)[0].abs());
        }
    }
    (c, lam.max(rec.metrics.max_rolling_residual))
}

fn c4_constraints(cfg: &ScenarioConfig, rec: &RunRecord, elapsed: Duration) -> Outcome {
    let (c, lam) = constraint_residuals(cfg, rec);
    let drift = rec.metrics.max_constraint_drift.max(rec.metrics.max_step_drift);
    let worst = c.max(drift);
    outcome(
        worst < 1e-3 && lam < 1e-10 && elapsed < Duration::from_secs(60),
        format!(
            "max |C|/l² = {worst:.2e} (before correction {:.2e}), max |Λ(q̇)| = {lam:.2e}, {} s horizon in {:.2} s",
            rec.metrics.max_step_drift,
            cfg.integrator.horizon,
            elapsed.as_secs_f64()
        ),
    )
}

fn c5_tracking(cfg: &ScenarioConfig, rec: &RunRecord) -> Outcome {
    let transient = cfg.output.transient;
    let initial = rec.rows[0].lateral_error.abs();
    let settled = rec.rows.iter().filter(|r| r.t >= transient).map(|r| r.lateral_error.abs()).fold(0.0, f64::max);
    let peak = |lo: f64, hi: f64| {
        rec.rows
            .iter()
            .filter(|r| r.t >= lo && r.t < hi)
            .flat_map(|r| r.vehicles.iter().map(|v| v.tau.abs()).chain([r.tau.abs()]))
            .fold(0.0, f64::max)
    };
    let early = peak(0.0, 2.0);
    let late = peak(transient, f64::INFINITY);
    let starts_off = initial > 0.05;
    let large_first = early >= 10.0 * late && early > 0.0;
    outcome(
        settled < 0.05 && starts_off && large_first,
        format!(
            "lateral error {initial:.3} m at start, max {settled:.2e} m after {transient} s; peak torque {early:.2e} N m in the first 2 s vs {late:.2e} N m after"
        ),
    )
}

fn c6_tautness() -> Outcome {
    let cfg = scenario("disturbance.toml");
    let d = &cfg.disturbances[0];
    let rec = run_simulation(&cfg).unwrap();
    let l = cfg.vehicles[0].cable_length;
    let flags: Vec<(f64, bool)> = rec.rows.iter().map(|r| (r.t, r.vehicles[0].taut)).collect();
    let mut sequence = vec![flags[0].1];
    for w in flags.windows(2) {
        if w[1].1 != w[0].1 {
            sequence.push(w[1].1);
        }
    }
    let slack_at = flags.iter().find(|f| !f.1).map(|f| f.0);
    let taut_at = slack_at.and_then(|s| flags.iter().find(|f| f.0 > s && f.1).map(|f| f.0));
    let last = rec.rows.last().unwrap();
    let v = &last.vehicles[0];
    let residual = ((last.load[0] - v.x).powi(2) + (last.load[1] - v.y).powi(2) - l * l).abs() / (l * l);
    let recovery = match (slack_at, taut_at) {
        (Some(s), Some(t)) => t - s,
        _ => f64::INFINITY,
    };
    let pass = sequence == [true, false, true]
        && slack_at.is_some_and(|s| (s - d.time).abs() <= cfg.integrator.dt)
        && recovery <= 3.0
        && residual < 1e-6;
    outcome(
        pass,
        format!(
            "flags {:?}, slack at {:.3} s, taut again after {recovery:.3} s, final |C|/l² = {residual:.1e}",
            sequence.iter().map(|t| if *t { "taut" } else { "slack" }).collect::<Vec<_>>(),
            slack_at.unwrap_or(f64::NAN)
        ),
    )
}

fn c7_dalembert() -> Outcome {
    // In a bilateral run the extra cable pull needs no sign check.
    let options = EngineOptions { allow_slack: false, ..EngineOptions::default() };
    let engine = Engine::new(BodyParams::new(M, J, MV, JV, L).unwrap(), options).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let start = moving_state(&mut rng);
        // Thrusts f = c h, f_i = −c h_i make the chart force c·dC plus
        // side-slip reactions, a pure constraint force.
        let c = rng.random_range(0.1..1.0);
        let push = |q: &ChartPoint, _: &[f64; 4]| {
            let (h, h_i) = lever_arms(q);
            ControlInput { f: c * h, tau: 0.0, f_i: -c * h_i, tau_i: 0.0 }
        };
        let (mut a, mut b) = (start, start);
        for _ in 0..1000 {
            a = engine.step(&a, &ControlInput::default(), 1e-3).unwrap().0;
            b = engine.step_with(&b, push, 1e-3).unwrap().0;
            let dq = (a.q.to_vector() - b.q.to_vector()).amax();
            let du = a.u.iter().zip(b.u).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            worst = worst.max(dq).max(du);
        }
    }
    outcome(worst < 1e-12, format!("max state difference {worst:.2e} over 1 s, 5 trajectories"))
}

fn c8_connection_oracle() -> Outcome {
    let metric = MetricTensor::kinetic(M, J, MV, JV).unwrap();
    let conn = ConstrainedConnection::new(metric, Complement::MetricOrthogonal).unwrap();
    let frame = ConstrainedConnection::new(metric, Complement::Frame).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut worst_metric, mut worst_frame): (f64, f64) = (0.0, 0.0);
    let eps = 1e-5;
    for _ in 0..100 {
        let s = moving_state(&mut rng);
        let q = s.q;
        let v = TangentVec::chart(s.velocity());
        let w = *v.components();
        let step = |sign: f64| q.offset(&(w * (sign * eps)));
        // (∇_v P′)v with Γ = 0 in the chart: central difference along v.
        let oracle = (complement_oracle(&step(1.0)) - complement_oracle(&step(-1.0))) / (2.0 * eps) * w;
        let got = *conn.connection_term(&q, &v).unwrap().components();
        worst_metric = worst_metric.max((got - oracle).norm() / oracle.norm().max(1e-12));

        let frame_pc = |p: &ChartPoint| *projection_maps(p).unwrap().1.entries();
        let oracle = (frame_pc(&step(1.0)) - frame_pc(&step(-1.0))) / (2.0 * eps) * w;
        let got = *frame.connection_term(&q, &v).unwrap().components();
        worst_frame = worst_frame.max((got - oracle).norm() / oracle.norm().max(1e-12));
    }
    outcome(
        worst_metric < 1e-5 && worst_frame < 1e-5,
        format!(
            "max relative error {worst_metric:.2e} (metric complement), {worst_frame:.2e} (frame complement), 100 states"
        ),
    )
}

fn c9_determinism() -> Outcome {
    let cfg = scenario("default.toml");
    let dirs = [tempdir("a"), tempdir("b")];
    let bytes: Vec<Vec<u8>> = std::thread::scope(|s| {
        let handles: Vec<_> = dirs
            .iter()
            .map(|dir| {
                let cfg = &cfg;
                s.spawn(move || {
                    let rec = run_simulation(cfg).unwrap();
                    let files = emit_outputs(&rec, cfg, dir, false).unwrap();
                    std::fs::read(files.series).unwrap()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    for d in &dirs {
        let _ = std::fs::remove_dir_all(d);
    }
    outcome(bytes[0] == bytes[1] && !bytes[0].is_empty(), format!("two runs, {} bytes each, identical: {}", bytes[0].len(), bytes[0] == bytes[1]))
}

fn tempdir(tag: &str) -> PathBuf {
    std::env::temp_dir().join(format!("cotow-acceptance-{}-{tag}", std::process::id()))
}

fn main() -> ExitCode {
    let default = scenario("default.toml");
    let start = Instant::now();
    let rec = run_simulation(&default).unwrap();
    let default_elapsed = start.elapsed();

    let results = [
        ("annihilation", c1_annihilation()),
        ("projection", c2_projection()),
        ("geodesic energy", c3_geodesic_energy()),
        ("constraint maintenance", c4_constraints(&default, &rec, default_elapsed)),
        ("tracking", c5_tracking(&default, &rec)),
        ("tautness recovery", c6_tautness()),
        ("d'Alembert nullity", c7_dalembert()),
        ("connection oracle", c8_connection_oracle()),
        ("determinism", c9_determinism()),
    ];
    let mut failed = 0;
    for (k, (name, o)) in results.iter().enumerate() {
        println!("{} {}. {name}: {}", if o.pass { "PASS" } else { "FAIL" }, k + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} of {} passed", results.len() - failed, results.len());
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
