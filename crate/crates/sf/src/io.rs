//! CSV and JSON writers. Floats are written in Rust's shortest round-trip form.

use std::fs;
use std::path::Path;

use carnot_core::asymptotics::DecayProfile;
use carnot_core::{ControlSignal, ExtremalState, Trajectory};
use serde::Serialize;

use crate::Result;

fn header(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(csv::Writer::from_path(path)?)
}

/// Columns `t, x_1..x_r, z_1..z_m`.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory, t0: f64) -> Result<()> {
    let mut w = writer(path)?;
    let p0 = traj.start();
    let mut head = vec!["t".to_string()];
    head.extend(header("x", p0.x.len()));
    head.extend(header("z", p0.z.len()));
    w.write_record(&head)?;
    for (k, p) in traj.points.iter().enumerate() {
        let mut row = vec![(t0 + k as f64 * traj.dt).to_string()];
        row.extend(p.x.iter().chain(&p.z).map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `t, u_1..u_r`, one row per cell (left endpoint).
pub fn write_control_csv(path: &Path, u: &ControlSignal) -> Result<()> {
    let mut w = writer(path)?;
    let mut head = vec!["t".to_string()];
    head.extend(header("u", u.dim()));
    w.write_record(&head)?;
    for (k, s) in u.samples().enumerate() {
        let mut row = vec![(k as f64 * u.dt()).to_string()];
        row.extend(s.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `t, a_1..a_r, b_1..b_m`.
pub fn write_states_csv(path: &Path, states: &[ExtremalState]) -> Result<()> {
    let mut w = writer(path)?;
    let (r, m) = states.first().map_or((0, 0), |s| (s.a.len(), s.b.len()));
    let mut head = vec!["t".to_string()];
    head.extend(header("a", r));
    head.extend(header("b", m));
    w.write_record(&head)?;
    for s in states {
        let mut row = vec![s.t.to_string()];
        row.extend(s.a.iter().chain(&s.b).map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `T, value, bound` with `bound = 2/T`.
pub fn write_decay_csv(path: &Path, profile: &DecayProfile) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["T", "value", "bound"])?;
    for (t, v) in &profile.points {
        w.write_record([t.to_string(), v.to_string(), (2.0 / t).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a control CSV written by [`write_control_csv`].
pub fn read_control_csv(path: &Path) -> Result<ControlSignal> {
    let mut r = csv::Reader::from_path(path)?;
    let mut times = Vec::new();
    let mut data = Vec::new();
    let mut dim = 0;
    for rec in r.records() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| crate::SfError::Spec(format!("bad number in {}: {e}", path.display())))?;
        dim = vals.len().saturating_sub(1);
        times.push(vals[0]);
        data.extend_from_slice(&vals[1..]);
    }
    let dt = match times.as_slice() {
        [a, b, ..] => b - a,
        _ => return Err(crate::SfError::Spec("control CSV needs at least two rows".into())),
    };
    Ok(ControlSignal::new(dt, dim, data)?)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
