use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use super::svg::{line_chart, Series};
use crate::control::ReferenceTrajectory;
use super::{EventKind, RunRecord, ScenarioConfig};

/// Plot files, one per panel: trajectories, angular velocities, speeds,
/// cable lengths, torques and forces.
pub const PLOT_FILES: [&str; 6] =
    ["trajectory.svg", "angular_velocity.svg", "speed.svg", "cable_length.svg", "torque.svg", "force.svg"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFiles {
    pub series: PathBuf,
    pub metrics: PathBuf,
    pub events: PathBuf,
    pub plots: Vec<PathBuf>,
}

/// Column order of the time-series file for `n` vehicles.
///
/// `t,x,y,theta,x_1,y_1,theta_1,…,v,omega,v_1,omega_1,…,f,tau,f_1,tau_1,…,
/// cable_1,…,tension_1,…,taut_1,…,lateral_error,heading_error`.
pub fn series_header(n: usize) -> String {
    let mut cols: Vec<String> = ["t", "x", "y", "theta"].map(String::from).to_vec();
    let per = |cols: &mut Vec<String>, names: &[&str]| {
        for k in 1..=n {
            cols.extend(names.iter().map(|c| format!("{c}_{k}")));
        }
    };
    per(&mut cols, &["x", "y", "theta"]);
    cols.extend(["v", "omega"].map(String::from));
    per(&mut cols, &["v", "omega"]);
    cols.extend(["f", "tau"].map(String::from));
    per(&mut cols, &["f", "tau"]);
    per(&mut cols, &["cable"]);
    per(&mut cols, &["tension"]);
    per(&mut cols, &["taut"]);
    cols.extend(["lateral_error", "heading_error"].map(String::from));
    cols.join(",")
}

/// Writes through a temporary file in the same directory and renames it.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let name = path.file_name().ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = path.with_file_name(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

fn series_csv(rec: &RunRecord, rows: &[usize]) -> String {
    let n = rec.rows.first().map_or(0, |r| r.vehicles.len());
    let mut out = series_header(n);
    out.push('\n');
    for &i in rows {
        let r = &rec.rows[i];
        let mut cells: Vec<String> = vec![r.t.to_string()];
        cells.extend(r.load.iter().map(f64::to_string));
        for v in &r.vehicles {
            cells.extend([v.x, v.y, v.theta].map(|c| c.to_string()));
        }
        cells.extend([r.v, r.omega].map(|c| c.to_string()));
        for v in &r.vehicles {
            cells.extend([v.v, v.omega].map(|c| c.to_string()));
        }
        cells.extend([r.f, r.tau].map(|c| c.to_string()));
        for v in &r.vehicles {
            cells.extend([v.f, v.tau].map(|c| c.to_string()));
        }
        cells.extend(r.vehicles.iter().map(|v| v.cable.to_string()));
        cells.extend(r.vehicles.iter().map(|v| v.tension.to_string()));
        cells.extend(r.vehicles.iter().map(|v| u8::from(v.taut).to_string()));
        cells.extend([r.lateral_error, r.heading_error].map(|c| c.to_string()));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn metrics_text(rec: &RunRecord, cfg: &ScenarioConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "steps={}", rec.rows.len().saturating_sub(1));
    let _ = writeln!(out, "dt_s={}", rec.dt);
    let _ = writeln!(out, "vehicles={}", cfg.vehicles.len());
    let _ = writeln!(out, "transient_s={}", cfg.output.transient);
    for (k, v) in rec.metrics.entries() {
        let _ = writeln!(out, "{k}={v}");
    }
    let _ = writeln!(out, "warnings={}", rec.events.iter().filter(|e| e.is_warning()).count());
    out
}

fn events_csv(rec: &RunRecord) -> String {
    let mut out = String::from("t,vehicle,event,value\n");
    for e in &rec.events {
        let vehicle = e.vehicle.map_or(String::new(), |k| (k + 1).to_string());
        let (name, value) = match e.kind {
            EventKind::Disturbance => ("disturbance", String::new()),
            EventKind::WentSlack => ("slack", String::new()),
            EventKind::Reengaged => ("taut", String::new()),
            EventKind::SingularAllocation => ("singular_allocation", String::new()),
            EventKind::LargeCorrection(c) => ("large_correction", c.to_string()),
            EventKind::WorkspaceExit => ("workspace_exit", String::new()),
        };
        let _ = writeln!(out, "{},{vehicle},{name},{value}", e.t);
    }
    out
}

fn plots(rec: &RunRecord, rows: &[usize], reference: Option<&ReferenceTrajectory>) -> Vec<String> {
    let n = rec.rows.first().map_or(0, |r| r.vehicles.len());
    let pick = |f: &dyn Fn(&super::RunRow) -> (f64, f64)| rows.iter().map(|&i| f(&rec.rows[i])).collect::<Vec<_>>();
    let per_vehicle = |name: &str, f: &dyn Fn(&super::VehicleRow) -> f64| {
        (0..n)
            .map(|k| Series::new(format!("{name} {}", k + 1), pick(&|r| (r.t, f(&r.vehicles[k])))))
            .collect::<Vec<_>>()
    };

    let mut traj = vec![Series::new("load", pick(&|r| (r.load[0], r.load[1])))];
    traj.extend((0..n).map(|k| Series::new(format!("vehicle {}", k + 1), pick(&|r| (r.vehicles[k].x, r.vehicles[k].y)))));
    if let Some(path) = reference {
        let len = path.length();
        let pts = (0..=400).map(|k| {
            let p = path.at_arc_length(len * k as f64 / 400.0);
            (p.x, p.y)
        });
        traj.insert(0, Series::new("reference", pts.collect()).dashed());
    }

    let mut omega = vec![Series::new("load", pick(&|r| (r.t, r.omega)))];
    omega.extend(per_vehicle("vehicle", &|v| v.omega));
    let mut speed = vec![Series::new("load", pick(&|r| (r.t, r.v)))];
    speed.extend(per_vehicle("vehicle", &|v| v.v));
    let cable = per_vehicle("cable", &|v| v.cable);
    let mut torque = vec![Series::new("load (virtual)", pick(&|r| (r.t, r.tau))).dashed()];
    torque.extend(per_vehicle("vehicle", &|v| v.tau));
    let force = per_vehicle("vehicle", &|v| v.f);

    vec![
        line_chart("Trajectories", "x (m)", "y (m)", &traj, true),
        line_chart("Angular velocities", "t (s)", "rad/s", &omega, false),
        line_chart("Speeds", "t (s)", "m/s", &speed, false),
        line_chart("Cable lengths", "t (s)", "m", &cable, false),
        line_chart("Torques", "t (s)", "N m", &torque, false),
        line_chart("Forces", "t (s)", "N", &force, false),
    ]
}

/// Writes the series, metrics and event files and, when asked, the plots.
pub fn emit_outputs(rec: &RunRecord, cfg: &ScenarioConfig, dir: &Path, with_plots: bool) -> io::Result<OutputFiles> {
    fs::create_dir_all(dir)?;
    let rows = rec.decimated(cfg.output.rate_hz);
    let files = OutputFiles {
        series: dir.join("series.csv"),
        metrics: dir.join("metrics.txt"),
        events: dir.join("events.csv"),
        plots: if with_plots { PLOT_FILES.iter().map(|f| dir.join(f)).collect() } else { Vec::new() },
    };
    write_atomic(&files.series, series_csv(rec, &rows).as_bytes())?;
    write_atomic(&files.metrics, metrics_text(rec, cfg).as_bytes())?;
    write_atomic(&files.events, events_csv(rec).as_bytes())?;
    if with_plots {
        for (path, svg) in files.plots.iter().zip(plots(rec, &rows, cfg.reference_trajectory().ok().as_ref())) {
            write_atomic(path, svg.as_bytes())?;
        }
    }
    Ok(files)
}
