//! Experiment specs and their runners.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use carnot_core::asymptotics::{
    affinity_detector, average_decay_profile, dyadic_ladder, kernel_membership_check,
};
use carnot_core::control::{blowdown_samples, develop};
use carnot_core::oracle::{sf_distance_upper, GeodesicVerdict, Oracle, OracleConfig, SubmetryReport};
use carnot_core::pmp::{build_b, conserved_quantities, integrate_extremal, residual_check, ExtremalProblem};
use carnot_core::{ControlSignal, Covector, Extremal, GroupPoint, HorizontalVector, NormModel, StepTwoAlgebra};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{resolve_group, resolve_norm, GroupRef, NormRef, ResolvedNorm};
use crate::io;
use crate::parallel::{par_map, parallel_solver};
use crate::report::{tolerances, Report};
use crate::suite::{run_suite, SuiteParams};
use crate::{Result, SfError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(flatten)]
    pub experiment: Experiment,
    #[serde(default)]
    pub group: GroupRef,
    #[serde(default)]
    pub norm: NormRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Drives every random choice of the run, including oracle restarts.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Experiment {
    Extremal(ExtremalParams),
    Decay(DecayParams),
    Blowdown(BlowdownParams),
    Counterexample(CounterexampleParams),
    Submetry(SubmetryParams),
    Sublinear(SublinearParams),
    Suite(SuiteParams),
}

fn default_residual_tol() -> f64 {
    1e-6
}

fn default_dt() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalParams {
    pub a0: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<GroupPoint>,
    #[serde(alias = "T")]
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_residual_tol")]
    pub tol: f64,
    /// Rescale `a0` to unit dual norm, which makes the control unit speed.
    #[serde(default)]
    pub unit_speed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayParams {
    pub a0: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Probe direction; rescaled to unit norm. Defaults to the first basis vector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<Vec<f64>>,
    #[serde(default = "default_time_ladder")]
    pub t_ladder: Vec<f64>,
    /// Additive slack on the `2/T` constant for quadrature error.
    #[serde(default = "default_decay_slack")]
    pub slack: f64,
}

fn default_time_ladder() -> Vec<f64> {
    dyadic_ladder(1.0, 7)
}

fn default_decay_slack() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowdownParams {
    pub a0: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_lambda_ladder")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_window")]
    pub window: f64,
    #[serde(default = "default_levels")]
    pub levels: u32,
    #[serde(default = "default_kernel_tol")]
    pub tol: f64,
}

fn default_lambda_ladder() -> Vec<f64> {
    dyadic_ladder(1.0, 11)
}

fn default_window() -> f64 {
    1.0
}

fn default_levels() -> u32 {
    carnot_core::asymptotics::DEFAULT_DYADIC_LEVELS
}

fn default_kernel_tol() -> f64 {
    1e-2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleParams {
    /// Flat direction pair and width; detected from the norm when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default = "default_counterexample_horizon")]
    pub horizon: f64,
    #[serde(default = "default_counterexample_steps")]
    pub steps: usize,
    /// Windows are the dyadic subintervals of `[0, horizon]` down to this level.
    #[serde(default = "default_counterexample_levels")]
    pub levels: u32,
    #[serde(default = "default_geodesic_rel_tol")]
    pub rel_tol: f64,
    #[serde(default)]
    pub oracle: OracleConfig,
}

fn default_counterexample_horizon() -> f64 {
    4.0 * PI
}

fn default_counterexample_steps() -> usize {
    2048
}

fn default_counterexample_levels() -> u32 {
    3
}

fn default_geodesic_rel_tol() -> f64 {
    1e-2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmetryParams {
    #[serde(default = "default_submetry_samples")]
    pub samples: usize,
    /// Horizontal and vertical sample components are uniform in `[-scale, scale]`.
    #[serde(default = "default_scale")]
    pub x_scale: f64,
    #[serde(default = "default_scale")]
    pub y_scale: f64,
    #[serde(default = "default_gap_tol")]
    pub gap_tol: f64,
    #[serde(default = "default_geodesic_rel_tol")]
    pub projection_rel_tol: f64,
    #[serde(default)]
    pub oracle: OracleConfig,
}

fn default_submetry_samples() -> usize {
    100
}

fn default_scale() -> f64 {
    1.0
}

fn default_gap_tol() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SublinearParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<GroupPoint>,
    pub h: GroupPoint,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(default = "default_time_ladder")]
    pub t_ladder: Vec<f64>,
    #[serde(default = "default_sublinear_rel_tol")]
    pub rel_tol: f64,
    #[serde(default)]
    pub oracle: OracleConfig,
}

fn default_sublinear_rel_tol() -> f64 {
    0.05
}

/// A finished run: the report and whether every check in it passed.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: Value,
    pub passed: bool,
}

impl ExperimentSpec {
    pub fn new(experiment: Experiment, group: &str, norm: &str) -> Self {
        Self {
            experiment,
            group: GroupRef::Name(group.into()),
            norm: NormRef::Name(norm.into()),
            output: None,
            seed: 0,
        }
    }

    fn context(&self) -> Result<(StepTwoAlgebra, ResolvedNorm)> {
        let alg = resolve_group(&self.group)?;
        let norm = resolve_norm(&self.norm, alg.rank())?;
        Ok((alg, norm))
    }

    fn oracle_config(&self, base: &OracleConfig) -> OracleConfig {
        OracleConfig {
            seed: self.seed,
            ..base.clone()
        }
    }
}

/// Runs `spec`, writing its files (and `report.json`) under `spec.output` when set.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Outcome> {
    let outcome = match &spec.experiment {
        Experiment::Extremal(p) => run_extremal(spec, p)?,
        Experiment::Decay(p) => run_decay(spec, p)?,
        Experiment::Blowdown(p) => run_blowdown(spec, p)?,
        Experiment::Counterexample(p) => run_counterexample(spec, p)?,
        Experiment::Submetry(p) => run_submetry(spec, p)?,
        Experiment::Sublinear(p) => run_sublinear(spec, p)?,
        Experiment::Suite(p) => {
            let rep = run_suite(p, spec.seed)?;
            let passed = rep.passed;
            Outcome {
                report: serde_json::to_value(Report::new(spec, rep.tolerances(), passed, rep))?,
                passed,
            }
        }
    };
    if let Some(dir) = &spec.output {
        io::write_json(&dir.join("report.json"), &outcome.report)?;
    }
    Ok(outcome)
}

fn unit_dual(norm: &NormModel, a0: &[f64]) -> Result<Vec<f64>> {
    let s = norm.dual_norm(a0)?;
    if s == 0.0 {
        return Err(SfError::Spec("a0 = 0 gives the constant curve; unit speed is impossible".into()));
    }
    Ok(a0.iter().map(|v| v / s).collect())
}

fn integrate(
    alg: &StepTwoAlgebra,
    norm: &ResolvedNorm,
    a0: Vec<f64>,
    b: &[f64],
    start: Option<GroupPoint>,
    horizon: f64,
    dt: f64,
) -> Result<Extremal> {
    let problem = ExtremalProblem {
        a0: Covector(a0),
        b: b.to_vec(),
        start: start.unwrap_or_else(|| alg.identity()),
        horizon,
        dt,
        selection: norm.selection.clone(),
    };
    Ok(integrate_extremal(alg, &norm.model, &problem)?)
}

fn out_file(spec: &ExperimentSpec, name: &str) -> Option<PathBuf> {
    spec.output.as_ref().map(|d| d.join(name))
}

fn run_extremal(spec: &ExperimentSpec, p: &ExtremalParams) -> Result<Outcome> {
    let (alg, norm) = spec.context()?;
    let a0 = if p.unit_speed {
        unit_dual(&norm.model, &p.a0)?
    } else {
        p.a0.clone()
    };
    let ex = integrate(&alg, &norm, a0, &p.b, p.start.clone(), p.horizon, p.dt)?;
    let states = ex.states();
    let residual = residual_check(&alg, &norm.model, &ex.control, &states, p.tol)?;
    let form = build_b(&alg, &p.b)?;
    let cons = conserved_quantities(&norm.model, &form, &states, &ex.control)?;
    let mut files = Vec::new();
    if let Some(path) = out_file(spec, "trajectory.csv") {
        io::write_trajectory_csv(&path, &ex.trajectory, 0.0)?;
        files.push("trajectory.csv");
    }
    if let Some(path) = out_file(spec, "control.csv") {
        io::write_control_csv(&path, &ex.control)?;
        files.push("control.csv");
    }
    if let Some(path) = out_file(spec, "states.csv") {
        io::write_states_csv(&path, &states)?;
        files.push("states.csv");
    }
    let passed = residual.is_extremal();
    let result = json!({
        "label": ex.label(),
        "horizon": ex.horizon,
        "dt": p.dt,
        "steps": ex.len(),
        "endpoint": ex.trajectory.end(),
        "residual": {
            "ode_residual": residual.ode_residual,
            "subdiff_violation": residual.subdiff_violation,
            "vertical_drift": residual.vertical_drift,
            "extremal_within_tol": passed,
            "violations": residual.violations,
        },
        "conservation": {
            "dual_norm_drift": cons.dual_norm_drift,
            "pairing_defect": cons.pairing_defect,
            "kernel_drifts": cons.kernel_drifts.iter()
                .map(|(y, d)| json!({"direction": y.0, "drift": d}))
                .collect::<Vec<_>>(),
        },
        "files": files,
    });
    let tol = tolerances([("residual", p.tol), ("vertical_drift", 0.0)]);
    Ok(Outcome {
        report: serde_json::to_value(Report::new(spec, tol, passed, result))?,
        passed,
    })
}

fn run_decay(spec: &ExperimentSpec, p: &DecayParams) -> Result<Outcome> {
    let (alg, norm) = spec.context()?;
    let a0 = unit_dual(&norm.model, &p.a0)?;
    let t_max = p.t_ladder.iter().cloned().fold(0.0, f64::max);
    let horizon = (t_max / p.dt).ceil() * p.dt;
    let ex = integrate(&alg, &norm, a0, &p.b, None, horizon, p.dt)?;
    let probe = match &p.probe {
        Some(x) => x.clone(),
        None => HorizontalVector::basis(alg.rank(), 0).0,
    };
    let nx = norm.model.norm(&probe)?;
    if nx == 0.0 {
        return Err(SfError::Spec("probe must be nonzero".into()));
    }
    let probe: Vec<f64> = probe.iter().map(|v| v / nx).collect();
    let form = build_b(&alg, &p.b)?;
    let profile = average_decay_profile(&ex.control, &form, &probe, &p.t_ladder)?;
    let bound = 2.0 + p.slack;
    let excess = profile.max_excess(bound);
    let passed = excess <= 0.0;
    if let Some(path) = out_file(spec, "decay.csv") {
        io::write_decay_csv(&path, &profile)?;
    }
    let result = json!({
        "probe": profile.probe.0,
        "points": profile.points.iter().map(|(t, v)| json!({"T": t, "value": v, "bound": 2.0 / t})).collect::<Vec<_>>(),
        "fitted_c": profile.fitted_c,
        "max_excess_over_bound": excess,
        "label": ex.label(),
    });
    let tol = tolerances([("decay_constant", bound)]);
    Ok(Outcome {
        report: serde_json::to_value(Report::new(spec, tol, passed, result))?,
        passed,
    })
}

fn run_blowdown(spec: &ExperimentSpec, p: &BlowdownParams) -> Result<Outcome> {
    let (alg, norm) = spec.context()?;
    let a0 = unit_dual(&norm.model, &p.a0)?;
    let l_max = p.lambdas.iter().cloned().fold(0.0, f64::max);
    let horizon = (l_max * p.window / p.dt).ceil() * p.dt;
    let ex = integrate(&alg, &norm, a0, &p.b, None, horizon, p.dt)?;
    let form = build_b(&alg, &p.b)?;
    let check = kernel_membership_check(&ex.control, &form, &p.lambdas, p.window, p.levels, p.tol)?;
    let blowdowns = blowdown_samples(&ex.control, &p.lambdas, p.window)?;
    let cauchy: Vec<Value> = blowdowns
        .windows(2)
        .zip(p.lambdas.windows(2))
        .map(|(pair, ls)| {
            let d = pair[0].l2_distance(&pair[1], 0.0, p.window)?;
            Ok(json!({"lambda": ls[0], "next": ls[1], "l2_distance": d}))
        })
        .collect::<Result<_>>()?;
    let result = json!({
        "entries": check.entries.iter().map(|(l, v)| json!({"lambda": l, "max_b_avg": v})).collect::<Vec<_>>(),
        "monotone": check.monotone,
        "consistent": check.consistent,
        "verdict": check.verdict,
        "l2_cauchy": cauchy,
        "window": p.window,
        "levels": p.levels,
    });
    let tol = tolerances([("kernel", p.tol)]);
    Ok(Outcome {
        report: serde_json::to_value(Report::new(spec, tol, check.consistent, result))?,
        passed: check.consistent,
    })
}

/// Lifted curve `t ↦ tX + ε sin(t) Y` and its dyadic-window geodesy verdicts.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleRun {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub eps: f64,
    pub control: ControlSignal,
    pub verdicts: Vec<GeodesicVerdict>,
    pub affine: bool,
    pub oscillation: f64,
}

impl CounterexampleRun {
    pub fn all_geodesic(&self) -> bool {
        self.verdicts.iter().all(|v| v.is_geodesic)
    }

    pub fn statement(&self) -> String {
        let n = self.verdicts.first().map_or(0, |v| v.n_steps);
        match (self.all_geodesic(), self.affine) {
            (true, false) => format!("non-affine infinite-geodesic candidate verified at resolution N={n}"),
            (true, true) => format!("affine line, not beaten at resolution N={n}"),
            (false, _) => format!("candidate beaten by the oracle at resolution N={n}"),
        }
    }
}

/// Builds the control `X + ε cos(t) Y` on `[0, horizon]`, develops it and checks
/// every dyadic window with the oracle.
#[allow(clippy::too_many_arguments)]
pub fn counterexample(
    alg: &StepTwoAlgebra,
    norm: &NormModel,
    flat: Option<(Vec<f64>, Vec<f64>, f64)>,
    horizon: f64,
    steps: usize,
    levels: u32,
    rel_tol: f64,
    oracle: &OracleConfig,
) -> Result<CounterexampleRun> {
    if norm.is_strictly_convex() {
        return Err(SfError::Spec(
            "norm strictly convex: every infinite geodesic is a line, no counterexample exists".into(),
        ));
    }
    let (x, y, eps) = match flat {
        Some(f) => f,
        None => {
            let e = norm
                .flat_edge()
                .ok_or_else(|| SfError::Spec("no flat edge found on the unit sphere".into()))?;
            (e.x.0, e.y.0, e.eps)
        }
    };
    let dt = horizon / steps as f64;
    let control = ControlSignal::from_fn(dt, steps, alg.rank(), |t| {
        x.iter().zip(&y).map(|(a, b)| a + eps * t.cos() * b).collect()
    })?;
    let traj = develop(alg, &alg.identity(), &control)?;
    let mut windows = Vec::new();
    for level in 0..=levels {
        let parts = 1usize << level;
        if !steps.is_multiple_of(parts) {
            return Err(SfError::Spec(format!("{steps} steps do not split into {parts} windows")));
        }
        let w = steps / parts;
        windows.extend((0..parts).map(|k| (k * w, (k + 1) * w)));
    }
    let o = Oracle::new(alg, norm, oracle.clone())?.with_solver(parallel_solver);
    let verdicts = par_map(&windows, |&(i, j)| o.is_geodesic_segment(&traj, i, j, rel_tol))
        .into_iter()
        .collect::<carnot_core::Result<Vec<_>>>()?;
    let aff = affinity_detector(&control, None);
    Ok(CounterexampleRun {
        x,
        y,
        eps,
        control,
        verdicts,
        affine: aff.is_affine,
        oscillation: aff.oscillation,
    })
}

fn verdict_json(v: &GeodesicVerdict, dt: f64) -> Value {
    json!({
        "t0": v.i as f64 * dt,
        "t1": v.j as f64 * dt,
        "segment_length": v.segment_length,
        "oracle_value": v.oracle_value,
        "is_geodesic": v.is_geodesic,
        "verdict": v.describe(),
    })
}

fn run_counterexample(spec: &ExperimentSpec, p: &CounterexampleParams) -> Result<Outcome> {
    let (alg, norm) = spec.context()?;
    let flat = match (&p.x, &p.y, p.eps) {
        (Some(x), Some(y), Some(e)) => Some((x.clone(), y.clone(), e)),
        (None, None, None) => None,
        _ => return Err(SfError::Spec("give all of x, y, eps or none of them".into())),
    };
    let cfg = spec.oracle_config(&p.oracle);
    let run = counterexample(&alg, &norm.model, flat, p.horizon, p.steps, p.levels, p.rel_tol, &cfg)?;
    if let Some(path) = out_file(spec, "control.csv") {
        io::write_control_csv(&path, &run.control)?;
    }
    let passed = run.all_geodesic();
    let dt = run.control.dt();
    let result = json!({
        "x": run.x,
        "y": run.y,
        "eps": run.eps,
        "affine": run.affine,
        "oscillation": run.oscillation,
        "statement": run.statement(),
        "windows": run.verdicts.iter().map(|v| verdict_json(v, dt)).collect::<Vec<_>>(),
        "n_steps": cfg.n_steps,
        "restarts": cfg.restarts,
        "seed": cfg.seed,
    });
    let tol = tolerances([("geodesic_rel_tol", p.rel_tol), ("endpoint", cfg.endpoint_tol)]);
    Ok(Outcome {
        report: serde_json::to_value(Report::new(spec, tol, passed, result))?,
        passed,
    })
}

/// Uniform samples `X ∈ [-sx, sx]^r`, `Y ∈ [-sy, sy]^m`.
pub fn submetry_samples(
    alg: &StepTwoAlgebra,
    count: usize,
    x_scale: f64,
    y_scale: f64,
    seed: u64,
) -> Vec<(HorizontalVector, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let x = (0..alg.rank()).map(|_| x_scale * rng.gen_range(-1.0..1.0)).collect();
            let y = (0..alg.vdim()).map(|_| y_scale * rng.gen_range(-1.0..1.0)).collect();
            (HorizontalVector(x), y)
        })
        .collect()
}

/// Submetry gaps for each sample, samples evaluated concurrently.
pub fn submetry(
    alg: &StepTwoAlgebra,
    norm: &NormModel,
    samples: &[(HorizontalVector, Vec<f64>)],
    oracle: &OracleConfig,
) -> Result<SubmetryReport> {
    let o = Oracle::new(alg, norm, oracle.clone())?.with_solver(sf_distance_upper);
    let parts = par_map(samples, |s| o.submetry_gap(std::slice::from_ref(s)))
        .into_iter()
        .collect::<carnot_core::Result<Vec<_>>>()?;
    let samples: Vec<_> = parts.into_iter().flat_map(|r| r.samples).collect();
    let min_gap = samples.iter().map(|s| s.gap).fold(f64::INFINITY, f64::min);
    let max_projection_rel_err = samples.iter().map(|s| s.projection_rel_err).fold(0.0, f64::max);
    Ok(SubmetryReport {
        samples,
        min_gap,
        max_projection_rel_err,
    })
}

fn run_submetry(spec: &ExperimentSpec, p: &SubmetryParams) -> Result<Outcome> {
    let (alg, norm) = spec.context()?;
    let cfg = spec.oracle_config(&p.oracle);
    let samples = submetry_samples(&alg, p.samples, p.x_scale, p.y_scale, spec.seed);
    let rep = submetry(&alg, &norm.model, &samples, &cfg)?;
    let passed = rep.min_gap >= -p.gap_tol && rep.max_projection_rel_err <= p.projection_rel_tol;
    let result = json!({
        "min_gap": rep.min_gap,
        "max_projection_rel_err": rep.max_projection_rel_err,
        "samples": rep.samples.iter().map(|s| json!({
            "x": s.x.0, "y": s.y, "distance": s.distance, "gap": s.gap,
            "projection_rel_err": s.projection_rel_err,
        })).collect::<Vec<_>>(),
        "n_steps": cfg.n_steps,
        "restarts": cfg.restarts,
        "seed": cfg.seed,
    });
    let tol = tolerances([
        ("gap", p.gap_tol),
        ("projection_rel", p.projection_rel_tol),
        ("endpoint", cfg.endpoint_tol),
    ]);
    Ok(Outcome {
        report: serde_json::to_value(Report::new(spec, tol, passed, result))?,
        passed,
    })
}

/// Result of a sublinear-ratio ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct SublinearRun {
    pub ratios: Vec<(f64, f64)>,
    /// `d(exp X, exp Y)` when `X ≠ Y`.
    pub reference: Option<f64>,
    /// `max t·ratio(t)` over the first half of the ladder.
    pub fitted_c: f64,
    pub passed: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn sublinear(
    alg: &StepTwoAlgebra,
    norm: &NormModel,
    g: &GroupPoint,
    h: &GroupPoint,
    x: &[f64],
    y: &[f64],
    t_ladder: &[f64],
    rel_tol: f64,
    oracle: &OracleConfig,
) -> Result<SublinearRun> {
    let o = Oracle::new(alg, norm, oracle.clone())?.with_solver(parallel_solver);
    let ratios = par_map(t_ladder, |t| o.sublinear_ratio(g, h, x, y, std::slice::from_ref(t)))
        .into_iter()
        .collect::<carnot_core::Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect::<Vec<_>>();
    if ratios.is_empty() {
        return Err(SfError::Spec("empty time ladder".into()));
    }
    let same = x == y;
    let half = ratios.len().div_ceil(2);
    let fitted_c = ratios[..half].iter().map(|(t, r)| t * r).fold(0.0, f64::max);
    let (reference, passed) = if same {
        // C is fitted on the first half and must bound the second half
        let ok = fitted_c.is_finite()
            && ratios[half..].iter().all(|(t, r)| *r <= fitted_c * (1.0 + rel_tol) / t);
        (None, ok)
    } else {
        let d = o.distance(&alg.exp_horizontal(x)?, &alg.exp_horizontal(y)?)?.value;
        let last = ratios.last().map_or(f64::NAN, |r| r.1);
        (Some(d), (last - d).abs() <= rel_tol * d)
    };
    Ok(SublinearRun {
        ratios,
        reference,
        fitted_c,
        passed,
    })
}

fn run_sublinear(spec: &ExperimentSpec, p: &SublinearParams) -> Result<Outcome> {
    let (alg, norm) = spec.context()?;
    let cfg = spec.oracle_config(&p.oracle);
    let g = p.g.clone().unwrap_or_else(|| alg.identity());
    let run = sublinear(&alg, &norm.model, &g, &p.h, &p.x, &p.y, &p.t_ladder, p.rel_tol, &cfg)?;
    let result = json!({
        "ratios": run.ratios.iter().map(|(t, r)| json!({"t": t, "ratio": r})).collect::<Vec<_>>(),
        "reference_distance": run.reference,
        "fitted_c": run.fitted_c,
        "n_steps": cfg.n_steps,
        "restarts": cfg.restarts,
        "seed": cfg.seed,
    });
    let tol = tolerances([("rel", p.rel_tol), ("endpoint", cfg.endpoint_tol)]);
    Ok(Outcome {
        report: serde_json::to_value(Report::new(spec, tol, run.passed, result))?,
        passed: run.passed,
    })
}

/// Reads an [`ExperimentSpec`] from a JSON file.
pub fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
