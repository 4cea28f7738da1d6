//! The invariant and acceptance suite.
//!
//! Every check runs even if an earlier one failed; errors are recorded as
//! failed checks. Reports carry no timings, so a fixed seed reproduces them
//! byte for byte.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use carnot_core::asymptotics::{
    average_decay_profile, dyadic_ladder, kernel_membership_check, window_average_from_prefixes,
};
use carnot_core::control::{develop, dilate_control};
use carnot_core::oracle::{sf_distance_upper, Oracle, OracleConfig};
use carnot_core::pmp::{build_b, conserved_quantities, integrate_extremal, residual_check, ExtremalProblem};
use carnot_core::{
    ControlSignal, Covector, Extremal, GroupPoint, HorizontalVector, NormModel, Selection, StepTwoAlgebra,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{resolve_group, GroupRef};
use crate::experiments::{counterexample, sublinear, submetry, submetry_samples};
use crate::parallel::{par_map, parallel_solver};
use crate::report::Tolerances;
use crate::Result;

/// Builtin groups exercised by the algebra checks.
pub const BUILTIN_GROUPS: [&str; 3] = ["heisenberg:1", "heisenberg:2", "free2:3"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteParams {
    /// Smaller sample sizes and fewer restarts, for smoke runs.
    pub quick: bool,
    pub dt: f64,
    /// Number of random extremal runs in the conservation and decay checks.
    pub runs: usize,
    pub oracle: OracleConfig,
    /// Extra group definitions to validate alongside the builtins.
    pub groups: Vec<GroupRef>,
    /// Step used by the check that a too-coarse integration is detected.
    pub coarse_dt: f64,
}

impl Default for SuiteParams {
    fn default() -> Self {
        Self {
            quick: false,
            dt: 1e-3,
            runs: 20,
            oracle: OracleConfig::default(),
            groups: Vec::new(),
            coarse_dt: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub id: String,
    pub title: String,
    pub passed: bool,
    pub metrics: BTreeMap<String, f64>,
    pub tolerances: Tolerances,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    fn new(id: &str, title: &str) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            passed: true,
            metrics: BTreeMap::new(),
            tolerances: BTreeMap::new(),
            note: None,
        }
    }

    fn metric(&mut self, name: &str, value: f64) -> &mut Self {
        self.metrics.insert(name.into(), value);
        self
    }

    fn tol(&mut self, name: &str, value: f64) -> &mut Self {
        self.tolerances.insert(name.into(), value);
        self
    }

    /// Records `value ≤ limit` (NaN fails).
    fn at_most(&mut self, name: &str, value: f64, limit: f64) -> &mut Self {
        self.metric(name, value);
        self.tol(name, limit);
        if !(value <= limit) {
            self.passed = false;
        }
        self
    }

    fn require(&mut self, ok: bool) -> &mut Self {
        self.passed &= ok;
        self
    }

    fn note(&mut self, text: impl Into<String>) -> &mut Self {
        self.note = Some(text.into());
        self
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.id, self.title)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub params: SuiteParams,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl SuiteReport {
    /// Every check tolerance, keyed `check-id.name`.
    pub fn tolerances(&self) -> Tolerances {
        self.checks
            .iter()
            .flat_map(|c| c.tolerances.iter().map(move |(k, v)| (format!("{}.{k}", c.id), *v)))
            .collect()
    }

    pub fn get(&self, id: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.id == id)
    }
}

type CheckFn = fn(&Ctx) -> Result<Check>;

struct Ctx<'a> {
    params: &'a SuiteParams,
    seed: u64,
}

impl Ctx<'_> {
    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    fn oracle(&self) -> OracleConfig {
        let mut cfg = OracleConfig {
            seed: self.seed,
            ..self.params.oracle.clone()
        };
        if self.params.quick {
            cfg.restarts = cfg.restarts.min(4);
        }
        cfg
    }

    fn scaled(&self, full: usize, quick: usize) -> usize {
        if self.params.quick {
            quick.min(full)
        } else {
            full
        }
    }
}

/// Ids of every check, in report order.
pub fn check_ids() -> Vec<&'static str> {
    checks().into_iter().map(|(id, _)| id).collect()
}

fn checks() -> Vec<(&'static str, CheckFn)> {
    vec![
        ("algebra.validate", check_validate as CheckFn),
        ("algebra.laws", check_algebra_laws),
        ("norms.subdifferential", check_norms),
        ("control.invariance", check_control),
        ("pmp.closed-form", check_closed_form),
        ("pmp.conservation", check_conservation),
        ("pmp.coarse-step-flagged", check_coarse_step),
        ("asymptotics.decay", check_decay),
        ("asymptotics.kernel", check_kernel),
        ("asymptotics.prefix-identity", check_prefix_identity),
        ("oracle.properties", check_oracle_properties),
        ("oracle.submetry", check_submetry),
        ("dichotomy.circle-0.9-period", check_circle_short),
        ("dichotomy.circle-beyond-period", check_circle_long),
        ("dichotomy.lines", check_lines),
        ("dichotomy.linf-sine", check_linf_sine),
        ("dichotomy.sweep", check_dichotomy_sweep),
        ("oracle.sublinear", check_sublinear),
    ]
}

/// Runs every check; never stops early.
pub fn run_suite(params: &SuiteParams, seed: u64) -> Result<SuiteReport> {
    run_selected(params, seed, |_| true)
}

/// Runs the checks whose id satisfies `select`, in report order.
pub fn run_selected(params: &SuiteParams, seed: u64, select: impl Fn(&str) -> bool) -> Result<SuiteReport> {
    let ctx = Ctx { params, seed };
    let mut out = Vec::new();
    for (id, f) in checks() {
        if !select(id) {
            continue;
        }
        let check = match f(&ctx) {
            Ok(mut c) => {
                c.id = id.into();
                c
            }
            Err(e) => {
                let mut c = Check::new(id, "check aborted");
                c.passed = false;
                c.note(e.to_string());
                c
            }
        };
        out.push(check);
    }
    let passed = out.iter().all(|c| c.passed);
    Ok(SuiteReport {
        seed,
        params: params.clone(),
        checks: out,
        passed,
    })
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.gen_range(-1.0..1.0)).collect()
}

fn random_point(rng: &mut ChaCha8Rng, alg: &StepTwoAlgebra) -> GroupPoint {
    GroupPoint::new(uniform(rng, alg.rank(), 1.0), uniform(rng, alg.vdim(), 1.0))
}

fn check_validate(ctx: &Ctx) -> Result<Check> {
    let mut c = Check::new("", "builtin and configured groups are stratified step-2 algebras");
    let mut refs: Vec<GroupRef> = BUILTIN_GROUPS.iter().map(|n| GroupRef::Name((*n).into())).collect();
    refs.extend(ctx.params.groups.iter().cloned());
    let mut failures = Vec::new();
    for (i, g) in refs.iter().enumerate() {
        match resolve_group(g) {
            Ok(alg) => {
                let v = alg.tensor().validate_stratified();
                if !v.ok {
                    failures.push(format!("group {i}: {}", v.diagnostic.unwrap_or_default()));
                }
            }
            Err(e) => failures.push(format!("group {i}: {e}")),
        }
    }
    c.metric("groups", refs.len() as f64);
    c.metric("invalid", failures.len() as f64);
    c.require(failures.is_empty());
    if !failures.is_empty() {
        c.note(failures.join("; "));
    }
    Ok(c)
}

fn check_algebra_laws(ctx: &Ctx) -> Result<Check> {
    let mut c = Check::new("", "associativity, inverses and dilation homomorphism on random triples");
    let triples = ctx.scaled(1000, 100);
    let (mut assoc, mut inv, mut dil) = (0.0f64, 0.0f64, 0.0f64);
    for (gi, name) in BUILTIN_GROUPS.iter().enumerate() {
        let alg = StepTwoAlgebra::builtin(name)?;
        let mut rng = ctx.rng(100 + gi as u64);
        let e = alg.identity();
        for _ in 0..triples {
            let (g, h, k) = (random_point(&mut rng, &alg), random_point(&mut rng, &alg), random_point(&mut rng, &alg));
            let l = rng.gen_range(0.1..3.0);
            let left = alg.multiply(&alg.multiply(&g, &h)?, &k)?;
            let right = alg.multiply(&g, &alg.multiply(&h, &k)?)?;
            assoc = assoc.max(left.max_abs_diff(&right));
            let gi = alg.inverse(&g)?;
            inv = inv
                .max(alg.multiply(&g, &gi)?.max_abs_diff(&e))
                .max(alg.multiply(&gi, &g)?.max_abs_diff(&e));
            let lhs = alg.dilate(l, &alg.multiply(&g, &h)?)?;
            let rhs = alg.multiply(&alg.dilate(l, &g)?, &alg.dilate(l, &h)?)?;
            dil = dil.max(lhs.max_abs_diff(&rhs));
        }
    }
    c.metric("triples_per_group", triples as f64);
    c.at_most("associativity", assoc, 1e-12);
    c.at_most("inverse", inv, 1e-12);
    c.at_most("dilation_homomorphism", dil, 1e-12);
    Ok(c)
}

fn norm_zoo(r: usize, rng: &mut ChaCha8Rng) -> Result<Vec<NormModel>> {
    let mut m = vec![0.0; r * r];
    let g = uniform(rng, r * r, 1.0);
    for i in 0..r {
        for j in 0..r {
            m[i * r + j] = (0..r).map(|k| g[i * r + k] * g[j * r + k]).sum::<f64>() + if i == j { 0.5 } else { 0.0 };
        }
    }
    let mut out = vec![
        NormModel::euclidean_identity(r),
        NormModel::euclidean(r, m)?,
        NormModel::lp(r, 1.5)?,
        NormModel::lp(r, 4.0)?,
        NormModel::linf(r),
        NormModel::l1(r),
    ];
    if r == 2 {
        let hex: Vec<Vec<f64>> = (0..6)
            .map(|k| {
                let t = PI / 3.0 * k as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
        out.push(NormModel::polyhedral(hex)?);
    }
    Ok(out)
}

fn check_norms(ctx: &Ctx) -> Result<Check> {
    let mut c = Check::new("", "subdifferential bounds, pairing identity and maximized value for every norm kind");
    let samples = ctx.scaled(200, 40);
    let (mut bound, mut pairing, mut gap, mut value, mut speed) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for r in [2usize, 3] {
        let mut rng = ctx.rng(200 + r as u64);
        for norm in norm_zoo(r, &mut rng)? {
            for _ in 0..samples {
                let a = uniform(&mut rng, r, 2.0);
                let x = uniform(&mut rng, r, 2.0);
                let u = norm.feedback_control(&a, &Selection::Barycenter)?;
                let nu = norm.norm(&u)?;
                let ax: f64 = a.iter().zip(&x).map(|(p, q)| p * q).sum();
                bound = bound.max(ax.abs() - norm.norm(&x)? * nu);
                let au: f64 = a.iter().zip(u.iter()).map(|(p, q)| p * q).sum();
                pairing = pairing.max((au - nu * nu).abs());
                gap = gap.max(norm.subdiff_gap(&u, &a)?);
                let dn = norm.dual_norm(&a)?;
                value = value.max((au - 0.5 * nu * nu - 0.5 * dn * dn).abs());
                speed = speed.max((nu - dn).abs());
            }
        }
    }
    c.at_most("pairing_bound_excess", bound, 1e-9);
    c.at_most("pairing_identity", pairing, 1e-9);
    c.at_most("subdifferential_gap", gap, 1e-9);
    c.at_most("maximized_value", value, 1e-9);
    c.at_most("feedback_speed", speed, 1e-9);
    Ok(c)
}

fn check_control(ctx: &Ctx) -> Result<Check> {
    let mut c = Check::new("", "development is left-invariant and commutes with dilations");
    let alg = StepTwoAlgebra::free_step_two(3)?;
    let mut rng = ctx.rng(300);
    let (mut left, mut dil) = (0.0f64, 0.0f64);
    for _ in 0..ctx.scaled(20, 5) {
        let data = uniform(&mut rng, 3 * 50, 1.0);
        let u = ControlSignal::new(0.1, 3, data)?;
        let start = random_point(&mut rng, &alg);
        let g = random_point(&mut rng, &alg);
        let a = develop(&alg, &alg.multiply(&g, &start)?, &u)?;
        let b = develop(&alg, &start, &u)?;
        for (p, q) in a.points.iter().zip(&b.points) {
            left = left.max(p.max_abs_diff(&alg.multiply(&g, q)?));
        }
        for l in [0.5, 2.0, 3.0] {
            let ul = dilate_control(&u, l)?;
            let d = develop(&alg, &alg.dilate(1.0 / l, &start)?, &ul)?;
            for (p, q) in d.points.iter().zip(&b.points) {
                dil = dil.max(p.max_abs_diff(&alg.dilate(1.0 / l, q)?));
            }
        }
    }
    c.at_most("left_invariance", left, 1e-12);
    c.at_most("dilation_identity", dil, 1e-9);
    Ok(c)
}

fn check_closed_form(ctx: &Ctx) -> Result<Check> {
    let mut c = Check::new("", "H1 euclidean extremal from a0=(1,0), b=1 matches (cos t, sin t)");
    let alg = StepTwoAlgebra::heisenberg(1)?;
    let norm = NormModel::euclidean_identity(2);
    let dt = ctx.params.dt;
    let ex = integrate_extremal(&alg, &norm, &ExtremalProblem::from_identity(&alg, vec![1.0, 0.0], vec![1.0], 10.0, dt))?;
    let err = ex
        .control
        .samples()
        .enumerate()
        .map(|(k, u)| {
            let t = k as f64 * dt;
            (u[0] - t.cos()).abs().max((u[1] - t.sin()).abs())
        })
        .fold(0.0, f64::max);
    c.at_most("sup_error", err, 1e-6);
    Ok(c)
}

/// The random strictly convex runs shared by the conservation and decay checks.
struct RunSpec {
    group: &'static str,
    norm: NormModel,
    a0: Vec<f64>,
    b: Vec<f64>,
}

fn random_runs(ctx: &Ctx) -> Result<Vec<RunSpec>> {
    let mut rng = ctx.rng(400);
    let mut out = Vec::new();
    for i in 0..ctx.scaled(ctx.params.runs, 4) {
        let group = BUILTIN_GROUPS[i % 3];
        let alg = StepTwoAlgebra::builtin(group)?;
        let r = alg.rank();
        let norm = match (i / 3) % 5 {
            0 => NormModel::euclidean_identity(r),
            1 => {
                let zoo = norm_zoo(r, &mut rng)?;
                zoo[1].clone()
            }
            2 => NormModel::lp(r, 1.5)?,
            3 => NormModel::lp(r, 3.0)?,
            _ => NormModel::lp(r, 4.0)?,
        };
        let mut a0 = uniform(&mut rng, r, 1.0);
        let s = norm.dual_norm(&a0)?;
        a0.iter_mut().for_each(|v| *v /= s);
        let b = uniform(&mut rng, alg.vdim(), 2.0);
        out.push(RunSpec { group, norm, a0, b });
    }
    Ok(out)
}

fn run_one(spec: &RunSpec, horizon: f64, dt: f64) -> Result<(StepTwoAlgebra, Extremal)> {
    let alg = StepTwoAlgebra::builtin(spec.group)?;
    let p = ExtremalProblem::from_identity(&alg, spec.a0.clone(), spec.b.clone(), horizon, dt);
    let ex = integrate_extremal(&alg, &spec.norm, &p)?;
    Ok((alg, ex))
}

fn check_conservation(ctx: &Ctx) -> Result<Check> {
    let mut c = Check::new("", "random strictly convex extremals conserve duals, kernel pairings and speed");
    let runs = random_runs(ctx)?;
    let dt = ctx.params.dt;
    let metrics = par_map(&runs, |s| -> Result<[f64; 6]> {
        let (alg, ex) = run_one(s, 10.0, dt)?;
        let states = ex.states();
        let form = build_b(&alg, &s.b)?;
        let cons = conserved_quantities(&s.norm, &form, &states, &ex.control)?;
        let res = residual_check(&alg, &s.norm, &ex.control, &states, 1e-6)?;
        Ok([
            res.vertical_drift,
            cons.dual_norm_drift,
            cons.max_kernel_drift(),
            cons.pairing_defect,
            res.subdiff_violation,
            res.ode_residual,
        ])
    });
    let mut worst = [0.0f64; 6];
    for m in metrics {
        let m = m?;
        for (w, v) in worst.iter_mut().zip(m) {
            *w = w.max(v);
        }
    }
    c.metric("runs", runs.len() as f64);
    c.at_most("vertical_drift", worst[0], 0.0);
    c.at_most("dual_norm_drift", worst[1], 1e-6);
    c.at_most("kernel_drift", worst[2], 1e-6);
    c.at_most("pairing_defect", worst[3], 1e-6);
    c.at_most("subdifferential_gap", worst[4], 1e-6);
    c.metric("ode_residual", worst[5]);
    Ok(c)
}

fn check_coarse_step(ctx: &Ctx) -> Result<Check> {
    let mut c = Check::new("", "a too-coarse step shows up as conservation drift");
    let alg = StepTwoAlgebra::heisenberg(1)?;
    let norm = NormModel::euclidean_identity(2);
    let dt = ctx.params.coarse_dt;
    let horizon = (10.0 / dt).round() * dt;
    let ex = integrate_extremal(&alg, &norm, &ExtremalProblem::from_identity(&alg, vec![1.0, 0.0], vec![1.0], horizon, dt))?;
    let form = build_b(&alg, &[1.0])?;
    let cons = conserved_quantities(&norm, &form, &ex.states(), &ex.control)?;
    c.metric("dt", dt);
    c.metric("dual_norm_drift", cons.dual_norm_drift);
    c.tol("flag_threshold", 1e-6);
    c.require(cons.dual_norm_drift > 1e-6);
    Ok(c)
}

fn check_decay(ctx: &Ctx) -> Result<Check> {
    let mut c = Check::new("", "B-paired averages of unit-speed extremals decay like 2/T");
    let runs = random_runs(ctx)?;
    let dt = ctx.params.dt;
    let ladder = dyadic_ladder(1.0, 7);
    let mut rng = ctx.rng(500);
    let probes: Vec<Vec<f64>> = runs
        .iter()
        .map(|s| {
            let x = uniform(&mut rng, s.a0.len(), 1.0);
            let n = s.norm.norm(&x).unwrap_or(1.0);
            x.iter().map(|v| v / n).collect()
        })
        .collect();
    let items: Vec<(&RunSpec, &Vec<f64>)> = runs.iter().zip(&probes).collect();
    let results = par_map(&items, |(s, x)| -> Result<(f64, f64)> {
        let (alg, ex) = run_one(s, 64.0, dt)?;
        let form = build_b(&alg, &s.b)?;
        let prof = average_decay_profile(&ex.control, &form, x, &ladder)?;
        Ok((prof.max_excess(2.1), prof.fitted_c))
    });
    let (mut excess, mut fitted) = (f64::NEG_INFINITY, 0.0f64);
    for r in results {
        let (e, f) = r?;
        excess = excess.max(e);
        fitted = fitted.max(f);
    }
    c.metric("fitted_c", fitted);
    c.tol("decay_constant", 2.1);
    c.at_most("max_excess_over_bound", excess, 0.0);
    Ok(c)
}

fn check_kernel(ctx: &Ctx) -> Result<Check> {
    let mut c = Check::new("", "blowdown window averages of the circle control vanish (evidence)");
    let alg = StepTwoAlgebra::heisenberg(1)?;
    let norm = NormModel::euclidean_identity(2);
    let dt = ctx.params.dt;
    let ladder = dyadic_ladder(1.0, 11);
    let horizon = (1024.0 / dt).round() * dt;
    let ex = integrate_extremal(&alg, &norm, &ExtremalProblem::from_identity(&alg, vec![1.0, 0.0], vec![1.0], horizon, dt))?;
    let form = build_b(&alg, &[1.0])?;
    let rep = kernel_membership_check(&ex.control, &form, &ladder, 1.0, carnot_core::asymptotics::DEFAULT_DYADIC_LEVELS, 1e-2)?;
    for (l, v) in &rep.entries {
        c.metric(&format!("lambda_{l}"), *v);
    }
    c.tol("largest_lambda", 1e-2);
    c.require(rep.consistent);
    c.note(rep.verdict);
    Ok(c)
}

fn check_prefix_identity(ctx: &Ctx) -> Result<Check> {
    let mut c = Check::new("", "window averages agree with the prefix-average identity");
    let mut rng = ctx.rng(600);
    let u = ControlSignal::new(0.01, 2, uniform(&mut rng, 2 * 10_000, 1.0))?;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let a = rng.gen_range(0.05..0.5);
        let b = rng.gen_range(a + 0.05..1.0);
        let l = rng.gen_range(1.0..100.0);
        let direct = u.average(a * l, b * l)?;
        let via = window_average_from_prefixes(&u, a, b, l)?;
        for (p, q) in direct.iter().zip(via.iter()) {
            worst = worst.max((p - q).abs());
        }
    }
    c.at_most("max_difference", worst, 1e-10);
    Ok(c)
}

fn check_oracle_properties(ctx: &Ctx) -> Result<Check> {
    let mut c = Check::new("", "oracle distance: left-invariance, symmetry, homogeneity, triangle, soundness");
    let alg = StepTwoAlgebra::heisenberg(1)?;
    let norm = NormModel::euclidean_identity(2);
    let cfg = ctx.oracle();
    let o = Oracle::new(&alg, &norm, cfg.clone())?.with_solver(parallel_solver);
    let mut rng = ctx.rng(700);
    let (mut inv, mut sym, mut hom, mut tri) = (0.0f64, 0.0f64, 0.0f64, f64::NEG_INFINITY);
    for _ in 0..ctx.scaled(4, 2) {
        let (g, h, k) = (random_point(&mut rng, &alg), random_point(&mut rng, &alg), random_point(&mut rng, &alg));
        let dgh = o.distance(&g, &h)?.value;
        let e = alg.identity();
        let diff = alg.difference(&g, &h)?;
        inv = inv.max((o.distance(&e, &diff)?.value - dgh).abs() / dgh);
        sym = sym.max((o.distance(&h, &g)?.value - dgh).abs() / dgh);
        for l in [0.5, 2.0] {
            let dl = o.distance(&e, &alg.dilate(l, &diff)?)?.value;
            hom = hom.max((dl - l * dgh).abs() / dgh);
        }
        let dhk = o.distance(&h, &k)?.value;
        let dgk = o.distance(&g, &k)?.value;
        tri = tri.max((dgk - dgh - dhk) / (dgh + dhk));
    }
    // soundness: a warm start is never lost
    let u = ControlSignal::from_fn(0.01, 300, 2, |t| vec![(0.7 * t).cos(), 1.0 + (0.3 * t).sin()])?;
    let traj = develop(&alg, &alg.identity(), &u)?;
    let p = carnot_core::oracle::TranscriptionProblem::new(&alg, &norm, alg.identity(), traj.end().clone(), cfg)?
        .with_warm_start(u.clone())?;
    let warm = sf_distance_upper(&p)?.value;
    let len = u.length(&norm)?;
    c.at_most("left_invariance_rel", inv, 1e-3);
    c.at_most("symmetry_rel", sym, 1e-2);
    c.at_most("homogeneity_rel", hom, 1e-3);
    c.at_most("triangle_excess_rel", tri, 1e-3);
    c.at_most("warm_start_excess_rel", (warm - len) / len, 1e-6);
    Ok(c)
}

fn check_submetry(ctx: &Ctx) -> Result<Check> {
    let mut c = Check::new("", "submetry gap and projection norm in H1 for euclidean and linf");
    let alg = StepTwoAlgebra::heisenberg(1)?;
    let cfg = ctx.oracle();
    let count = ctx.scaled(100, 8);
    for (name, norm) in [("euclidean", NormModel::euclidean_identity(2)), ("linf", NormModel::linf(2))] {
        let samples = submetry_samples(&alg, count, 1.0, 1.0, ctx.seed.wrapping_add(800));
        let rep = submetry(&alg, &norm, &samples, &cfg)?;
        c.metric(&format!("{name}.min_gap"), rep.min_gap);
        c.tol(&format!("{name}.min_gap"), -1e-3);
        c.require(rep.min_gap >= -1e-3);
        c.at_most(&format!("{name}.projection_rel_err"), rep.max_projection_rel_err, 1e-2);
    }
    c.metric("samples", count as f64);
    c.metric("n_steps", cfg.n_steps as f64);
    Ok(c)
}

fn circle_traj(alg: &StepTwoAlgebra, periods: f64) -> Result<(carnot_core::Trajectory, usize)> {
    let per = 1000usize;
    let dt = 2.0 * PI / per as f64;
    let steps = (periods * per as f64).round() as usize;
    let norm = NormModel::euclidean_identity(2);
    let ex = integrate_extremal(
        alg,
        &norm,
        &ExtremalProblem::from_identity(alg, vec![1.0, 0.0], vec![1.0], steps as f64 * dt, dt),
    )?;
    Ok((ex.trajectory, steps))
}

fn geodesic_check(c: &mut Check, traj: &carnot_core::Trajectory, j: usize, rel_tol: f64, cfg: &OracleConfig) -> Result<bool> {
    let alg = StepTwoAlgebra::heisenberg(1)?;
    let norm = NormModel::euclidean_identity(2);
    let o = Oracle::new(&alg, &norm, cfg.clone())?.with_solver(parallel_solver);
    let v = o.is_geodesic_segment(traj, 0, j, rel_tol)?;
    c.metric("segment_length", v.segment_length);
    c.metric("oracle_value", v.oracle_value);
    c.metric("n_steps", v.n_steps as f64);
    c.tol("rel_tol", rel_tol);
    Ok(v.is_geodesic)
}

fn check_circle_short(ctx: &Ctx) -> Result<Check> {
    let mut c = Check::new("", "H1 euclidean circle extremal fails geodesy on [0, 0.9*2pi]");
    let alg = StepTwoAlgebra::heisenberg(1)?;
    let (traj, steps) = circle_traj(&alg, 0.9)?;
    let geodesic = geodesic_check(&mut c, &traj, steps, 0.02, &ctx.oracle())?;
    c.require(!geodesic);
    if geodesic {
        c.note(
            "arcs shorter than a full turn are length minimizers in H1 (isoperimetric problem); \
             no shortcut exists to find",
        );
    }
    Ok(c)
}

fn check_circle_long(ctx: &Ctx) -> Result<Check> {
    let mut c = Check::new("", "H1 euclidean circle extremal fails geodesy on [0, 1.25*2pi]");
    let alg = StepTwoAlgebra::heisenberg(1)?;
    let (traj, steps) = circle_traj(&alg, 1.25)?;
    let geodesic = geodesic_check(&mut c, &traj, steps, 0.02, &ctx.oracle())?;
    c.require(!geodesic);
    Ok(c)
}

fn check_lines(ctx: &Ctx) -> Result<Check> {
    let mut c = Check::new("", "H1 euclidean lines pass geodesy on [0, 20]");
    let alg = StepTwoAlgebra::heisenberg(1)?;
    let norm = NormModel::euclidean_identity(2);
    let cfg = ctx.oracle();
    let o = Oracle::new(&alg, &norm, cfg)?.with_solver(parallel_solver);
    let mut worst = f64::INFINITY;
    for k in 0..3 {
        let t = 0.4 + 1.7 * k as f64;
        let ex = integrate_extremal(
            &alg,
            &norm,
            &ExtremalProblem::from_identity(&alg, vec![t.cos(), t.sin()], vec![0.0], 20.0, 0.01),
        )?;
        let v = o.is_geodesic_segment(&ex.trajectory, 0, ex.len(), 0.01)?;
        worst = worst.min(v.oracle_value / v.segment_length);
        c.require(v.is_geodesic);
    }
    c.metric("min_oracle_over_length", worst);
    c.tol("rel_tol", 0.01);
    Ok(c)
}

fn check_linf_sine(ctx: &Ctx) -> Result<Check> {
    let mut c = Check::new("", "H1 linf lifted sine passes geodesy on all dyadic windows of [0, 4pi] and is not affine");
    let alg = StepTwoAlgebra::heisenberg(1)?;
    let norm = NormModel::linf(2);
    let levels = if ctx.params.quick { 1 } else { 3 };
    let run = counterexample(
        &alg,
        &norm,
        Some((vec![1.0, 0.0], vec![0.0, 1.0], 1.0)),
        4.0 * PI,
        2048,
        levels,
        0.01,
        &ctx.oracle(),
    )?;
    let worst = run
        .verdicts
        .iter()
        .map(|v| v.oracle_value / v.segment_length)
        .fold(f64::INFINITY, f64::min);
    c.metric("windows", run.verdicts.len() as f64);
    c.metric("min_oracle_over_length", worst);
    c.metric("oscillation", run.oscillation);
    c.tol("rel_tol", 0.01);
    c.require(run.all_geodesic() && !run.affine);
    c.note(run.statement());
    Ok(c)
}

/// Per-norm outcome of [`run_dichotomy_suite`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DichotomyRow {
    pub group: String,
    pub norm: String,
    pub strictly_convex: bool,
    /// For each curved extremal: the shortest tested window on which the oracle found a shortcut.
    pub first_failing_window: Vec<Option<f64>>,
    pub lines_pass: bool,
    pub counterexample: Option<String>,
    pub passed: bool,
}

/// Strictly convex norms: curved extremals eventually stop being geodesic while
/// lines never do. Other norms: the lifted-sine counterexample holds.
pub fn run_dichotomy_suite(cfg: &OracleConfig, quick: bool) -> Result<Vec<DichotomyRow>> {
    let cases: [(&str, &str); 4] = [
        ("heisenberg:1", "euclidean"),
        ("heisenberg:1", "lp:4"),
        ("heisenberg:1", "linf"),
        ("free2:3", "euclidean"),
    ];
    let mut rows = Vec::new();
    for (group, norm_name) in cases {
        let alg = StepTwoAlgebra::builtin(group)?;
        let norm = crate::config::resolve_norm(&crate::config::NormRef::Name(norm_name.into()), alg.rank())?.model;
        let strictly_convex = norm.is_strictly_convex();
        let o = Oracle::new(&alg, &norm, cfg.clone())?.with_solver(parallel_solver);
        let r = alg.rank();
        let mut lines_pass = true;
        for k in 0..if quick { 1 } else { 2 } {
            let dir: Vec<f64> = (0..r).map(|i| ((i + 1) as f64 * (0.9 + k as f64)).cos()).collect();
            let s = norm.dual_norm(&dir)?;
            let a0: Vec<f64> = dir.iter().map(|v| v / s).collect();
            let p = ExtremalProblem::from_identity(&alg, a0, vec![0.0; alg.vdim()], 20.0, 0.01);
            let ex = integrate_extremal(&alg, &norm, &p)?;
            lines_pass &= o.is_geodesic_segment(&ex.trajectory, 0, ex.len(), 0.01)?.is_geodesic;
        }
        let mut first_failing_window = Vec::new();
        let mut counterexample_text = None;
        let passed = if strictly_convex {
            if alg.vdim() == 1 {
                for (k, b) in [1.0, -1.5].into_iter().enumerate().take(if quick { 1 } else { 2 }) {
                    let t0 = 0.3 + k as f64;
                    let mut a0 = vec![t0.cos(), t0.sin()];
                    let s = norm.dual_norm(&a0)?;
                    a0.iter_mut().for_each(|v| *v /= s);
                    let dt = 2.0 * PI / 1000.0;
                    let windows = [1000usize, 2000, 4000];
                    let p = ExtremalProblem::from_identity(&alg, a0, vec![b], 4000.0 * dt, dt);
                    let ex = integrate_extremal(&alg, &norm, &p)?;
                    let mut failed_at = None;
                    for j in windows {
                        if !o.is_geodesic_segment(&ex.trajectory, 0, j, 0.02)?.is_geodesic {
                            failed_at = Some(j as f64 * dt);
                            break;
                        }
                    }
                    first_failing_window.push(failed_at);
                }
            }
            lines_pass && first_failing_window.iter().all(Option::is_some)
        } else {
            let run = counterexample(&alg, &norm, None, 4.0 * PI, 2048, if quick { 0 } else { 2 }, 0.01, cfg)?;
            counterexample_text = Some(run.statement());
            run.all_geodesic() && !run.affine
        };
        rows.push(DichotomyRow {
            group: group.into(),
            norm: norm_name.into(),
            strictly_convex,
            first_failing_window,
            lines_pass,
            counterexample: counterexample_text,
            passed,
        });
    }
    Ok(rows)
}

fn check_dichotomy_sweep(ctx: &Ctx) -> Result<Check> {
    let mut c = Check::new("", "dichotomy sweep over euclidean, lp:4 and linf norms");
    let rows = run_dichotomy_suite(&ctx.oracle(), ctx.params.quick)?;
    let mut notes = Vec::new();
    for row in &rows {
        c.require(row.passed);
        let key = format!("{}/{}", row.group, row.norm);
        for (i, w) in row.first_failing_window.iter().enumerate() {
            c.metric(&format!("{key}.extremal_{i}.first_failing_window"), w.unwrap_or(f64::NAN));
        }
        c.metric(&format!("{key}.lines_pass"), if row.lines_pass { 1.0 } else { 0.0 });
        if let Some(t) = &row.counterexample {
            notes.push(format!("{key}: {t}"));
        }
    }
    if !notes.is_empty() {
        c.note(notes.join("; "));
    }
    Ok(c)
}

fn check_sublinear(ctx: &Ctx) -> Result<Check> {
    let mut c = Check::new("", "sublinear distance ratios in H1: C/t decay for X=Y, limit d(expX, expY) otherwise");
    let alg = StepTwoAlgebra::heisenberg(1)?;
    let norm = NormModel::euclidean_identity(2);
    let cfg = ctx.oracle();
    let ladder = dyadic_ladder(1.0, 7);
    let e = alg.identity();
    let same = sublinear(
        &alg,
        &norm,
        &e,
        &GroupPoint::new(vec![0.0, 0.0], vec![1.0]),
        &[1.0, 0.0],
        &[1.0, 0.0],
        &ladder,
        0.05,
        &cfg,
    )?;
    c.metric("same.fitted_c", same.fitted_c);
    c.require(same.passed);
    let diff = sublinear(
        &alg,
        &norm,
        &e,
        &GroupPoint::new(vec![0.3, -0.2], vec![0.5]),
        &[1.0, 0.0],
        &[0.0, 1.0],
        &ladder,
        0.05,
        &cfg,
    )?;
    let last = diff.ratios.last().map_or(f64::NAN, |r| r.1);
    let reference = diff.reference.unwrap_or(f64::NAN);
    c.metric("different.ratio_at_64", last);
    c.metric("different.reference", reference);
    c.at_most("different.rel_error", (last - reference).abs() / reference, 0.05);
    Ok(c)
}

/// Unit dual covector in direction `theta` (r = 2), used by callers building sweeps.
pub fn unit_dual_r2(norm: &NormModel, theta: f64) -> Result<Covector> {
    let a = vec![theta.cos(), theta.sin()];
    let s = norm.dual_norm(&a)?;
    Ok(Covector(a.into_iter().map(|v| v / s).collect()))
}

/// Horizontal unit vector in direction `theta` (r = 2).
pub fn unit_r2(norm: &NormModel, theta: f64) -> Result<HorizontalVector> {
    let x = vec![theta.cos(), theta.sin()];
    let s = norm.norm(&x)?;
    Ok(HorizontalVector(x.into_iter().map(|v| v / s).collect()))
}
