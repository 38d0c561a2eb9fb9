//! Scenario files: a sectioned TOML document with a fixed key set.
//!
//! Parsing reports every problem it finds. [`ScenarioConfig::to_canonical`]
//! writes all keys explicitly, so parsing its output reproduces the config.

use std::fmt::{self, Write as _};
use std::path::PathBuf;

use toml::{Table, Value};

use crate::constraint::{check_admissible, holonomic_residual};
use crate::control::{ControllerGains, ReferenceKind, ReferenceTrajectory};
use crate::dynamics::BodyParams;
use crate::geometry::ChartPoint;
use crate::tolerances::{MAX_DT, TAUT_INIT_RESIDUAL};

#[derive(Debug, Clone, PartialEq)]
pub struct LoadConfig {
    pub mass: f64,
    pub inertia: f64,
    /// `(x, y, θ)`.
    pub pose: [f64; 3],
    pub virtual_torque: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleConfig {
    pub mass: f64,
    pub inertia: f64,
    pub cable_length: f64,
    pub pose: [f64; 3],
    /// Share of the load assigned to this vehicle.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceConfig {
    pub kind: ReferenceKind,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub horizon: f64,
    pub drift_correction: bool,
    pub slack_start: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub rate_hz: f64,
    pub plots: bool,
    /// Width and height of the workspace rectangle (m).
    pub workspace: [f64; 2],
    pub workspace_center: [f64; 2],
    /// Start of the window used for settled tracking metrics (s).
    pub transient: f64,
}

/// A timed load-pose offset.
#[derive(Debug, Clone, PartialEq)]
pub struct Disturbance {
    pub time: f64,
    /// `(dx, dy, dθ)` applied as is.
    pub offset: [f64; 3],
    /// Extra displacement toward `vehicle` (m).
    pub toward_vehicle: f64,
    /// One-based vehicle index for `toward_vehicle`.
    pub vehicle: usize,
    /// Half-width of a uniform random position jitter (m).
    pub jitter: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub load: LoadConfig,
    pub vehicles: Vec<VehicleConfig>,
    pub reference: ReferenceConfig,
    pub gains: ControllerGains,
    pub integrator: IntegratorConfig,
    pub output: OutputConfig,
    pub disturbances: Vec<Disturbance>,
}

/// One problem in a scenario file, located by its dotted key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

/// Every issue found while reading a scenario.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{} scenario error(s):\n{}", .0.len(), render_issues(.0))]
pub struct ConfigErrors(pub Vec<ConfigIssue>);

fn render_issues(issues: &[ConfigIssue]) -> String {
    issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n")
}

impl ScenarioConfig {
    pub fn body_params(&self, k: usize) -> BodyParams {
        let v = &self.vehicles[k];
        BodyParams {
            load_mass: self.load.mass * v.weight,
            load_inertia: self.load.inertia * v.weight,
            vehicle_mass: v.mass,
            vehicle_inertia: v.inertia,
            cable_length: v.cable_length,
        }
    }

    pub fn initial_point(&self, k: usize) -> ChartPoint {
        let [x, y, theta] = self.load.pose;
        let [x_i, y_i, theta_i] = self.vehicles[k].pose;
        ChartPoint { x, y, theta, x_i, y_i, theta_i }
    }

    pub fn reference_trajectory(&self) -> crate::Result<ReferenceTrajectory> {
        ReferenceTrajectory::new(self.reference.kind.clone(), self.reference.speed)
    }

    /// Every key written explicitly, in a fixed order.
    pub fn to_canonical(&self) -> String {
        let mut out = String::new();
        let l = &self.load;
        let _ = writeln!(out, "[load]");
        num(&mut out, "mass", l.mass);
        num(&mut out, "inertia", l.inertia);
        pose(&mut out, l.pose);
        let _ = writeln!(out, "virtual_torque = {}", l.virtual_torque);
        for (k, v) in self.vehicles.iter().enumerate() {
            let _ = writeln!(out, "\n[vehicle.{}]", k + 1);
            num(&mut out, "mass", v.mass);
            num(&mut out, "inertia", v.inertia);
            num(&mut out, "cable_length", v.cable_length);
            pose(&mut out, v.pose);
            num(&mut out, "weight", v.weight);
        }
        let _ = writeln!(out, "\n[reference]");
        match &self.reference.kind {
            ReferenceKind::TanCurve { x_start, x_end } => {
                let _ = writeln!(out, "kind = \"tan_curve\"");
                num(&mut out, "x_start", *x_start);
                num(&mut out, "x_end", *x_end);
            }
            ReferenceKind::Waypoints(p) => {
                let _ = writeln!(out, "kind = \"waypoints\"\npoints = {}", points(p));
            }
            ReferenceKind::ParametricSamples(p) => {
                let _ = writeln!(out, "kind = \"samples\"\npoints = {}", points(p));
            }
        }
        num(&mut out, "speed", self.reference.speed);
        let _ = writeln!(out, "\n[gains]");
        for (key, value) in gain_fields(&self.gains) {
            num(&mut out, key, value);
        }
        let i = &self.integrator;
        let _ = writeln!(out, "\n[integrator]");
        num(&mut out, "dt", i.dt);
        num(&mut out, "horizon", i.horizon);
        let _ = writeln!(out, "drift_correction = {}\nslack_start = {}\nseed = {}", i.drift_correction, i.slack_start, i.seed);
        let o = &self.output;
        let _ = writeln!(out, "\n[output]");
        if let Some(dir) = &o.dir {
            let _ = writeln!(out, "dir = {}", Value::String(dir.display().to_string()));
        }
        num(&mut out, "rate_hz", o.rate_hz);
        let _ = writeln!(out, "plots = {}", o.plots);
        let _ = writeln!(out, "workspace = [{:?}, {:?}]", o.workspace[0], o.workspace[1]);
        let _ = writeln!(out, "workspace_center = [{:?}, {:?}]", o.workspace_center[0], o.workspace_center[1]);
        num(&mut out, "transient", o.transient);
        for (k, d) in self.disturbances.iter().enumerate() {
            let _ = writeln!(out, "\n[disturbance.{}]", k + 1);
            num(&mut out, "time", d.time);
            num(&mut out, "dx", d.offset[0]);
            num(&mut out, "dy", d.offset[1]);
            num(&mut out, "dtheta", d.offset[2]);
            num(&mut out, "toward_vehicle", d.toward_vehicle);
            let _ = writeln!(out, "vehicle = {}", d.vehicle);
            num(&mut out, "jitter", d.jitter);
        }
        out
    }
}

fn num(out: &mut String, key: &str, v: f64) {
    let _ = writeln!(out, "{key} = {v:?}");
}

fn pose(out: &mut String, p: [f64; 3]) {
    num(out, "x", p[0]);
    num(out, "y", p[1]);
    num(out, "theta", p[2]);
}

fn points(p: &[[f64; 2]]) -> String {
    let items: Vec<String> = p.iter().map(|[x, y]| format!("[{x:?}, {y:?}]")).collect();
    format!("[{}]", items.join(", "))
}

fn gain_fields(g: &ControllerGains) -> [(&'static str, f64); 15] {
    [
        ("k_p", g.k_p),
        ("k_d", g.k_d),
        ("k1", g.k1),
        ("k2", g.k2),
        ("k3", g.k3),
        ("k_s", g.k_s),
        ("k_theta", g.k_theta),
        ("k_omega", g.k_omega),
        ("f_max", g.f_max),
        ("tau_max", g.tau_max),
        ("min_tension", g.min_tension),
        ("slack_gap_gain", g.slack_gap_gain),
        ("slack_closing_speed", g.slack_closing_speed),
        ("slack_speed_gain", g.slack_speed_gain),
        ("k_slot", g.k_slot),
    ]
}

fn set_gain(g: &mut ControllerGains, key: &str, v: f64) -> bool {
    let slot = match key {
        "k_p" => &mut g.k_p,
        "k_d" => &mut g.k_d,
        "k1" => &mut g.k1,
        "k2" => &mut g.k2,
        "k3" => &mut g.k3,
        "k_s" => &mut g.k_s,
        "k_theta" => &mut g.k_theta,
        "k_omega" => &mut g.k_omega,
        "f_max" => &mut g.f_max,
        "tau_max" => &mut g.tau_max,
        "min_tension" => &mut g.min_tension,
        "slack_gap_gain" => &mut g.slack_gap_gain,
        "slack_closing_speed" => &mut g.slack_closing_speed,
        "slack_speed_gain" => &mut g.slack_speed_gain,
        "k_slot" => &mut g.k_slot,
        _ => return false,
    };
    *slot = v;
    true
}

/// Reads one section, tracking which keys were consumed.
struct Section<'a> {
    name: String,
    table: Option<&'a Table>,
    used: Vec<&'static str>,
}

impl<'a> Section<'a> {
    fn new(name: impl Into<String>, table: Option<&'a Table>) -> Self {
        Self { name: name.into(), table, used: Vec::new() }
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a Value> {
        self.used.push(key);
        self.table.and_then(|t| t.get(key))
    }

    fn path(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn float(&mut self, key: &'static str, default: Option<f64>, issues: &mut Vec<ConfigIssue>) -> f64 {
        match self.raw(key) {
            Some(Value::Float(v)) => *v,
            Some(Value::Integer(v)) => *v as f64,
            Some(_) => {
                issues.push(issue(self.path(key), "expected a number"));
                f64::NAN
            }
            None => default.unwrap_or_else(|| {
                issues.push(issue(self.path(key), "missing required key"));
                f64::NAN
            }),
        }
    }

    fn opt_float(&mut self, key: &'static str, issues: &mut Vec<ConfigIssue>) -> Option<f64> {
        if self.table.is_some_and(|t| t.contains_key(key)) {
            Some(self.float(key, None, issues))
        } else {
            self.used.push(key);
            None
        }
    }

    fn boolean(&mut self, key: &'static str, default: bool, issues: &mut Vec<ConfigIssue>) -> bool {
        match self.raw(key) {
            Some(Value::Boolean(b)) => *b,
            Some(_) => {
                issues.push(issue(self.path(key), "expected true or false"));
                default
            }
            None => default,
        }
    }

    fn integer(&mut self, key: &'static str, default: i64, issues: &mut Vec<ConfigIssue>) -> i64 {
        match self.raw(key) {
            Some(Value::Integer(v)) => *v,
            Some(_) => {
                issues.push(issue(self.path(key), "expected an integer"));
                default
            }
            None => default,
        }
    }

    fn string(&mut self, key: &'static str, issues: &mut Vec<ConfigIssue>) -> Option<&'a str> {
        match self.raw(key) {
            Some(Value::String(s)) => Some(s.as_str()),
            Some(_) => {
                issues.push(issue(self.path(key), "expected a string"));
                None
            }
            None => None,
        }
    }

    fn pairs(&mut self, key: &'static str, issues: &mut Vec<ConfigIssue>) -> Option<Vec<[f64; 2]>> {
        let raw = self.raw(key)?;
        let parsed = raw.as_array().and_then(|items| {
            items
                .iter()
                .map(|item| {
                    let a = item.as_array()?;
                    match a.as_slice() {
                        [x, y] => Some([number(x)?, number(y)?]),
                        _ => None,
                    }
                })
                .collect::<Option<Vec<_>>>()
        });
        if parsed.is_none() {
            issues.push(issue(self.path(key), "expected an array of [x, y] pairs"));
        }
        parsed
    }

    fn finish(self, issues: &mut Vec<ConfigIssue>) {
        if let Some(t) = self.table {
            for key in t.keys() {
                if !self.used.contains(&key.as_str()) {
                    issues.push(issue(self.path(key), "unknown key"));
                }
            }
        }
    }
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn issue(key: impl Into<String>, message: impl Into<String>) -> ConfigIssue {
    ConfigIssue { key: key.into(), message: message.into() }
}

/// Sub-tables `[name.1]`, `[name.2]`, … in index order.
fn indexed<'a>(root: &'a Table, name: &str, issues: &mut Vec<ConfigIssue>) -> Vec<(String, &'a Table)> {
    let Some(v) = root.get(name) else { return Vec::new() };
    let Some(t) = v.as_table() else {
        issues.push(issue(name, "expected sections like [name.1]"));
        return Vec::new();
    };
    let mut out: Vec<(usize, &Table)> = Vec::new();
    for (k, v) in t {
        match (k.parse::<usize>(), v.as_table()) {
            (Ok(i), Some(tab)) if i >= 1 => out.push((i, tab)),
            _ => issues.push(issue(format!("{name}.{k}"), "expected a section numbered from 1")),
        }
    }
    out.sort_by_key(|(i, _)| *i);
    for (pos, (i, _)) in out.iter().enumerate() {
        if *i != pos + 1 {
            issues.push(issue(format!("{name}.{i}"), format!("section numbers must be consecutive from 1 (expected {})", pos + 1)));
            break;
        }
    }
    out.into_iter().map(|(i, t)| (format!("{name}.{i}"), t)).collect()
}

fn table<'a>(root: &'a Table, name: &str, issues: &mut Vec<ConfigIssue>) -> Option<&'a Table> {
    match root.get(name) {
        Some(Value::Table(t)) => Some(t),
        Some(_) => {
            issues.push(issue(name, "expected a section"));
            None
        }
        None => None,
    }
}

const SECTIONS: [&str; 7] = ["load", "vehicle", "reference", "gains", "integrator", "output", "disturbance"];

/// Default initial heading offset of the load from the path tangent (rad).
pub const DEFAULT_HEADING_OFFSET: f64 = 0.55;
/// Default initial lateral offset of the load to the right of the path (m).
pub const DEFAULT_LATERAL_OFFSET: f64 = 0.15;

/// Parses and validates a scenario document.
///
/// A vehicle pose left out is placed dead ahead of the load at its cable
/// length with the load's heading. A load pose left out is the path start
/// moved right by [`DEFAULT_LATERAL_OFFSET`] and turned clockwise by
/// [`DEFAULT_HEADING_OFFSET`].
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ConfigErrors> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| {
        ConfigErrors(vec![issue("document", e.message().to_string())])
    })?;
    let mut issues = Vec::new();
    for key in root.keys() {
        if !SECTIONS.contains(&key.as_str()) {
            issues.push(issue(key.as_str(), "unknown section"));
        }
    }

    let reference = parse_reference(&root, &mut issues);
    let path = reference.as_ref().and_then(|r| ReferenceTrajectory::new(r.kind.clone(), r.speed).ok());

    let mut s = Section::new("load", table(&root, "load", &mut issues));
    let mass = s.float("mass", Some(0.09), &mut issues);
    let inertia = s.float("inertia", Some(1.5e-4), &mut issues);
    let default_pose = path.as_ref().map(|p| {
        let st = p.start();
        let (sn, cs) = st.heading.sin_cos();
        let d = DEFAULT_LATERAL_OFFSET;
        [st.x + d * sn, st.y - d * cs, st.heading - DEFAULT_HEADING_OFFSET]
    });
    let x = s.opt_float("x", &mut issues);
    let y = s.opt_float("y", &mut issues);
    let theta = s.opt_float("theta", &mut issues);
    let dp = default_pose.unwrap_or([0.0; 3]);
    let load_pose = [x.unwrap_or(dp[0]), y.unwrap_or(dp[1]), theta.unwrap_or(dp[2])];
    let virtual_torque = s.boolean("virtual_torque", true, &mut issues);
    s.finish(&mut issues);
    let load = LoadConfig { mass, inertia, pose: load_pose, virtual_torque };

    let sections = indexed(&root, "vehicle", &mut issues);
    if sections.is_empty() {
        issues.push(issue("vehicle", "at least one [vehicle.1] section is required"));
    }
    let n = sections.len().max(1) as f64;
    let mut vehicles = Vec::new();
    for (name, t) in &sections {
        let mut s = Section::new(name.clone(), Some(t));
        let mass = s.float("mass", Some(0.045), &mut issues);
        let inertia = s.float("inertia", Some(5.4e-5), &mut issues);
        let cable_length = s.float("cable_length", Some(0.3), &mut issues);
        let (sn, cs) = load.pose[2].sin_cos();
        let ahead = [load.pose[0] + cable_length * cs, load.pose[1] + cable_length * sn, load.pose[2]];
        let x = s.float("x", Some(ahead[0]), &mut issues);
        let y = s.float("y", Some(ahead[1]), &mut issues);
        let theta = s.float("theta", Some(ahead[2]), &mut issues);
        let weight = s.float("weight", Some(1.0 / n), &mut issues);
        s.finish(&mut issues);
        vehicles.push(VehicleConfig { mass, inertia, cable_length, pose: [x, y, theta], weight });
    }

    let mut s = Section::new("gains", table(&root, "gains", &mut issues));
    let mut gains = ControllerGains::default();
    for (key, default) in gain_fields(&ControllerGains::default()) {
        let v = s.float(key, Some(default), &mut issues);
        set_gain(&mut gains, key, v);
    }
    s.finish(&mut issues);

    let mut s = Section::new("integrator", table(&root, "integrator", &mut issues));
    let dt = s.float("dt", Some(1e-3), &mut issues);
    let horizon = s.float("horizon", Some(60.0), &mut issues);
    let drift_correction = s.boolean("drift_correction", true, &mut issues);
    let slack_start = s.boolean("slack_start", false, &mut issues);
    let seed = s.integer("seed", 0, &mut issues);
    if seed < 0 {
        issues.push(issue("integrator.seed", "must be non-negative"));
    }
    s.finish(&mut issues);
    let integrator = IntegratorConfig { dt, horizon, drift_correction, slack_start, seed: seed.max(0) as u64 };

    let mut s = Section::new("output", table(&root, "output", &mut issues));
    let dir = s.string("dir", &mut issues).map(PathBuf::from);
    let rate_hz = s.float("rate_hz", Some(100.0), &mut issues);
    let plots = s.boolean("plots", true, &mut issues);
    let workspace = s.pairs_fixed("workspace", [3.0, 3.0], &mut issues);
    let workspace_center = s.pairs_fixed("workspace_center", [0.0, 0.0], &mut issues);
    let transient = s.float("transient", Some(20.0), &mut issues);
    s.finish(&mut issues);
    let output = OutputConfig { dir, rate_hz, plots, workspace, workspace_center, transient };

    let mut disturbances = Vec::new();
    for (name, t) in indexed(&root, "disturbance", &mut issues) {
        let mut s = Section::new(name, Some(t));
        let time = s.float("time", None, &mut issues);
        let dx = s.float("dx", Some(0.0), &mut issues);
        let dy = s.float("dy", Some(0.0), &mut issues);
        let dtheta = s.float("dtheta", Some(0.0), &mut issues);
        let toward_vehicle = s.float("toward_vehicle", Some(0.0), &mut issues);
        let vehicle = s.integer("vehicle", 1, &mut issues);
        let jitter = s.float("jitter", Some(0.0), &mut issues);
        if vehicle < 1 || vehicle as usize > vehicles.len().max(1) {
            issues.push(issue(s.path("vehicle"), format!("no vehicle {vehicle}")));
        }
        s.finish(&mut issues);
        disturbances.push(Disturbance {
            time,
            offset: [dx, dy, dtheta],
            toward_vehicle,
            vehicle: vehicle.max(1) as usize,
            jitter,
        });
    }

    let Some(reference) = reference else { return Err(ConfigErrors(issues)) };
    let cfg = ScenarioConfig { load, vehicles, reference, gains, integrator, output, disturbances };
    validate(&cfg, path.as_ref(), &mut issues);
    if issues.is_empty() { Ok(cfg) } else { Err(ConfigErrors(issues)) }
}

impl Section<'_> {
    fn pairs_fixed(&mut self, key: &'static str, default: [f64; 2], issues: &mut Vec<ConfigIssue>) -> [f64; 2] {
        match self.raw(key) {
            None => default,
            Some(v) => match v.as_array().map(|a| a.as_slice()) {
                Some([a, b]) => match (number(a), number(b)) {
                    (Some(a), Some(b)) => [a, b],
                    _ => {
                        issues.push(issue(self.path(key), "expected two numbers"));
                        default
                    }
                },
                _ => {
                    issues.push(issue(self.path(key), "expected two numbers"));
                    default
                }
            },
        }
    }
}

fn parse_reference(root: &Table, issues: &mut Vec<ConfigIssue>) -> Option<ReferenceConfig> {
    let mut s = Section::new("reference", table(root, "reference", issues));
    let kind_name = s.string("kind", issues).unwrap_or("tan_curve");
    let speed = s.float("speed", Some(0.05), issues);
    let kind = match kind_name {
        "tan_curve" => {
            let x_start = s.float("x_start", Some(-1.2), issues);
            let x_end = s.float("x_end", Some(1.2), issues);
            Some(ReferenceKind::TanCurve { x_start, x_end })
        }
        "waypoints" | "samples" => {
            let pts = s.pairs("points", issues);
            if pts.is_none() && !issues.iter().any(|i| i.key == "reference.points") {
                issues.push(issue("reference.points", "missing required key"));
            }
            pts.map(|p| if kind_name == "waypoints" { ReferenceKind::Waypoints(p) } else { ReferenceKind::ParametricSamples(p) })
        }
        other => {
            issues.push(issue("reference.kind", format!("unknown kind `{other}` (tan_curve, waypoints, samples)")));
            None
        }
    };
    s.finish(issues);
    kind.map(|kind| ReferenceConfig { kind, speed })
}

fn validate(cfg: &ScenarioConfig, path: Option<&ReferenceTrajectory>, issues: &mut Vec<ConfigIssue>) {
    // A key already reported as malformed is not reported again.
    let mut positive = |key: String, v: f64| {
        if !(v.is_finite() && v > 0.0) && !issues.iter().any(|i| i.key == key) {
            issues.push(issue(key, format!("must be positive and finite, got {v}")));
        }
    };
    positive("load.mass".into(), cfg.load.mass);
    positive("load.inertia".into(), cfg.load.inertia);
    for (k, v) in cfg.vehicles.iter().enumerate() {
        positive(format!("vehicle.{}.mass", k + 1), v.mass);
        positive(format!("vehicle.{}.inertia", k + 1), v.inertia);
        positive(format!("vehicle.{}.cable_length", k + 1), v.cable_length);
        positive(format!("vehicle.{}.weight", k + 1), v.weight);
    }
    positive("integrator.dt".into(), cfg.integrator.dt);
    positive("integrator.horizon".into(), cfg.integrator.horizon);
    positive("output.rate_hz".into(), cfg.output.rate_hz);
    positive("output.workspace".into(), cfg.output.workspace[0].min(cfg.output.workspace[1]));

    let finite = |v: &[f64]| v.iter().all(|c| c.is_finite());
    if !finite(&cfg.load.pose) {
        issues.push(issue("load", "pose must be finite"));
    }
    if !finite(&cfg.output.workspace_center) {
        issues.push(issue("output.workspace_center", "must be finite"));
    }
    if !(cfg.output.transient.is_finite() && cfg.output.transient >= 0.0) {
        issues.push(issue("output.transient", "must be non-negative"));
    }
    let i = &cfg.integrator;
    if i.dt > MAX_DT {
        issues.push(issue("integrator.dt", format!("must not exceed {MAX_DT} s, got {}", i.dt)));
    }
    if i.dt > 0.0 && i.horizon < i.dt {
        issues.push(issue("integrator.horizon", format!("must be at least dt = {}", i.dt)));
    }
    if cfg.output.rate_hz > 0.0 && i.dt > 0.0 && cfg.output.rate_hz * i.dt > 1.0 + 1e-9 {
        issues.push(issue("output.rate_hz", "cannot exceed the integration rate 1/dt"));
    }
    if !cfg.vehicles.is_empty() {
        let total: f64 = cfg.vehicles.iter().map(|v| v.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            issues.push(issue("vehicle", format!("weights must sum to 1, got {total}")));
        }
    }
    for (k, v) in cfg.vehicles.iter().enumerate() {
        let key = format!("vehicle.{}", k + 1);
        if !finite(&v.pose) {
            issues.push(issue(key, "pose must be finite"));
            continue;
        }
        let q = cfg.initial_point(k);
        let residual = holonomic_residual(&q, v.cable_length);
        if i.slack_start {
            if residual > TAUT_INIT_RESIDUAL {
                issues.push(issue(key.clone(), "vehicle starts farther than its cable length"));
            }
        } else if residual.abs() >= TAUT_INIT_RESIDUAL {
            issues.push(issue(
                key.clone(),
                format!("initial cable is not taut (residual {residual:.3e} m²); set integrator.slack_start to allow this"),
            ));
        }
        if check_admissible(&q).is_err() {
            issues.push(issue(key, "initial configuration is singular (h and h_i both vanish)"));
        }
    }
    for (name, value) in cfg.gains.violations() {
        issues.push(issue(format!("gains.{name}"), format!("out of range: {value}")));
    }
    match (path, ReferenceTrajectory::new(cfg.reference.kind.clone(), cfg.reference.speed)) {
        (_, Err(e)) => issues.push(issue("reference", e.to_string())),
        (Some(p), Ok(_)) if p.horizon() < i.horizon => issues.push(issue(
            "integrator.horizon",
            format!("exceeds the reference horizon {:.3} s", p.horizon()),
        )),
        _ => {}
    }
    for (k, d) in cfg.disturbances.iter().enumerate() {
        let key = format!("disturbance.{}", k + 1);
        if !(d.time.is_finite() && d.time >= 0.0 && d.time <= i.horizon) {
            issues.push(issue(format!("{key}.time"), "must lie within [0, horizon]"));
        }
        if !(finite(&d.offset) && d.toward_vehicle.is_finite()) {
            issues.push(issue(key.clone(), "offsets must be finite"));
        }
        if !(d.jitter.is_finite() && d.jitter >= 0.0) {
            issues.push(issue(format!("{key}.jitter"), "must be non-negative"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[vehicle.1]\n";

    fn keys(text: &str) -> Vec<String> {
        parse_scenario(text).unwrap_err().0.into_iter().map(|i| i.key).collect()
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_scenario(MINIMAL).unwrap();
        assert_eq!(cfg.vehicles.len(), 1);
        assert_eq!(cfg.integrator.dt, 1e-3);
        assert_eq!(cfg.integrator.horizon, 60.0);
        assert_eq!(cfg.output.rate_hz, 100.0);
        assert_eq!(cfg.gains, ControllerGains::default());
        assert_eq!(cfg.reference.kind, ReferenceKind::TanCurve { x_start: -1.2, x_end: 1.2 });
        let q = cfg.initial_point(0);
        assert!(holonomic_residual(&q, 0.3).abs() < 1e-12);
        assert_eq!(q.theta, q.theta_i);
    }

    #[test]
    fn zero_dt_names_the_key() {
        assert_eq!(keys("[vehicle.1]\n[integrator]\ndt = 0\n"), vec!["integrator.dt"]);
    }

    #[test]
    fn slack_initial_cable_rejected_unless_enabled() {
        let text = "[load]\nx = 0\ny = 0\ntheta = 0\n[vehicle.1]\nx = 0.25\ny = 0\ntheta = 0\n";
        let errs = parse_scenario(text).unwrap_err();
        assert!(errs.0.iter().any(|i| i.key == "vehicle.1" && i.message.contains("not taut")));
        let ok = format!("{text}[integrator]\nslack_start = true\n");
        assert!(parse_scenario(&ok).is_ok());
    }

    #[test]
    fn reports_all_errors() {
        let text = "[load]\nmass = -1\ncolour = 3\n[vehicle.1]\nmass = \"heavy\"\n[integrator]\ndt = 0\n[extra]\n";
        let mut k = keys(text);
        k.sort();
        assert_eq!(k, vec!["extra", "integrator.dt", "load.colour", "load.mass", "vehicle.1.mass"]);
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert_eq!(keys("[vehicle.1]\nspeed = 2\n"), vec!["vehicle.1.speed"]);
        assert_eq!(keys("[vehicle.1]\n[gains]\nk_x = 1\n"), vec!["gains.k_x"]);
    }

    #[test]
    fn vehicle_sections_must_be_consecutive() {
        let k = keys("[vehicle.1]\n[vehicle.3]\n");
        assert!(k.contains(&"vehicle.3".to_string()));
        assert!(keys("").contains(&"vehicle".to_string()));
    }

    #[test]
    fn weights_default_to_equal_shares() {
        let text = "[load]\nx = 0\ny = 0\ntheta = 0\n[vehicle.1]\n[vehicle.2]\nx = 0.3\ny = 0\ntheta = 0\n[reference]\nkind = \"waypoints\"\npoints = [[0, 0], [2, 0]]\n[integrator]\nhorizon = 10\n";
        let cfg = parse_scenario(text).unwrap();
        assert_eq!(cfg.vehicles[0].weight, 0.5);
        assert_eq!(cfg.body_params(1).load_mass, 0.045);
    }

    #[test]
    fn horizon_beyond_reference_is_rejected() {
        let k = keys("[vehicle.1]\n[integrator]\nhorizon = 1000\n");
        assert_eq!(k, vec!["integrator.horizon"]);
    }

    #[test]
    fn bad_reference_kind() {
        assert!(keys("[vehicle.1]\n[reference]\nkind = \"spiral\"\n").contains(&"reference.kind".to_string()));
        assert!(keys("[vehicle.1]\n[reference]\nkind = \"waypoints\"\n").contains(&"reference.points".to_string()));
    }

    #[test]
    fn syntax_errors_are_reported() {
        let e = parse_scenario("[load\n").unwrap_err();
        assert_eq!(e.0[0].key, "document");
    }

    #[test]
    fn canonical_form_round_trips() {
        let text = "[load]\nmass = 0.1\n[vehicle.1]\n[output]\ndir = \"out/x\"\n[disturbance.1]\ntime = 5\ntoward_vehicle = 0.05\n";
        let cfg = parse_scenario(text).unwrap();
        let canon = cfg.to_canonical();
        let again = parse_scenario(&canon).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_canonical(), canon);
    }

    #[test]
    fn waypoint_canonical_round_trip() {
        let text = "[load]\nx = 0\ny = 0\ntheta = 0.1\n[vehicle.1]\n[reference]\nkind = \"samples\"\npoints = [[0, 0], [1, 0.1], [2, 0.4]]\nspeed = 0.01\n";
        let cfg = parse_scenario(text).unwrap();
        assert_eq!(parse_scenario(&cfg.to_canonical()).unwrap(), cfg);
    }
}
