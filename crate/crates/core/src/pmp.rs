//! The normal extremal system of a step-2 sub-Finsler group.
//!
//! Along a normal extremal the vertical duals `b ∈ V2*` are constant, so
//! `B(X, Y) = b([X, Y])` is a fixed skew form and the horizontal dual obeys
//!
//! ```text
//! ȧ(t)Y = B(u(t), Y)   for all Y ∈ V1,     a(t) ∈ ∂(½‖·‖²)(u(t)).
//! ```
//!
//! [`integrate_extremal`] advances `a` with classical RK4, closing the system with
//! the Legendre feedback `u = argmax_v { a(v) − ½‖v‖² }`, and develops the
//! recorded controls into the group exactly.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // unused when std is linked into the build
use num_traits::Float;

use crate::algebra::{GroupPoint, HorizontalVector, StepTwoAlgebra};
use crate::control::{develop, ControlSignal, Trajectory};
use crate::error::{check_dim, check_positive, Error, Result};
use crate::linalg;
use crate::norms::{Covector, Feedback, NormModel, Selection};

/// Relative singular-value cutoff for `ker B`.
pub const KERNEL_REL_TOL: f64 = 1e-10;

// Cells closer than REFINE_REACH·h·|ȧ_i| to a switching hyperplane a_i = 0 are
// split into REFINE_SPLIT substeps, recursively up to REFINE_DEPTH times.
const REFINE_REACH: f64 = 16.0;
const REFINE_SPLIT: usize = 16;
const REFINE_DEPTH: u32 = 4;
/// Per-cell absolute tolerance of the residual reference solve, relative to `dt`.
const REFERENCE_TOL: f64 = 1e-10;
const REFERENCE_DEPTH: u32 = 60;

/// The skew form `B_ij = Σ_k b_k c[k][i][j]` on `V1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BForm {
    dim: usize,
    m: Vec<f64>,
}

impl BForm {
    pub fn build(alg: &StepTwoAlgebra, b: &[f64]) -> Result<Self> {
        check_dim("vertical dual b", alg.vdim(), b.len())?;
        let r = alg.rank();
        let mut m = vec![0.0; r * r];
        for i in 0..r {
            for j in 0..r {
                m[i * r + j] = b
                    .iter()
                    .enumerate()
                    .map(|(k, bk)| bk * alg.structure_constant(k, i, j))
                    .sum();
            }
        }
        Ok(Self { dim: r, m })
    }

    /// A form from an explicit row-major matrix; it must be exactly skew.
    pub fn from_matrix(dim: usize, m: Vec<f64>) -> Result<Self> {
        check_dim("B matrix entries", dim * dim, m.len())?;
        let out = Self { dim, m };
        if !out.is_skew() {
            return Err(Error::InvalidAlgebra("B is not skew-symmetric".into()));
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.m[i * self.dim + j]
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.m
    }

    /// `B + Bᵀ = 0`, compared bit for bit.
    pub fn is_skew(&self) -> bool {
        let r = self.dim;
        (0..r).all(|i| (0..r).all(|j| self.m[i * r + j] == -self.m[j * r + i]))
    }

    /// `B(x, y) = xᵀ B y`.
    pub fn apply(&self, x: &[f64], y: &[f64]) -> f64 {
        linalg::dot(x, &self.act_right(y))
    }

    /// Components of the functional `B(u, ·)`, i.e. `Bᵀ u`.
    pub fn pair_left(&self, u: &[f64]) -> Vec<f64> {
        let r = self.dim;
        (0..r)
            .map(|i| (0..r).map(|j| u[j] * self.m[j * r + i]).sum())
            .collect()
    }

    /// `B y`, the components of `B(·, y)`.
    pub fn act_right(&self, y: &[f64]) -> Vec<f64> {
        linalg::mat_vec(self.dim, &self.m, y)
    }

    /// Orthonormal basis of `ker B`.
    pub fn kernel(&self) -> Vec<HorizontalVector> {
        linalg::null_space(self.dim, &self.m, KERNEL_REL_TOL)
            .into_iter()
            .map(HorizontalVector)
            .collect()
    }
}

pub fn build_b(alg: &StepTwoAlgebra, b: &[f64]) -> Result<BForm> {
    BForm::build(alg, b)
}

pub fn kernel_b(form: &BForm) -> Vec<HorizontalVector> {
    form.kernel()
}

/// Dual state at one grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalState {
    pub t: f64,
    pub a: Covector,
    pub b: Vec<f64>,
}

/// Inputs of one extremal run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalProblem {
    pub a0: Covector,
    pub b: Vec<f64>,
    pub start: GroupPoint,
    pub horizon: f64,
    pub dt: f64,
    pub selection: Selection,
}

impl ExtremalProblem {
    /// Run from the identity with barycenter selection.
    pub fn from_identity(alg: &StepTwoAlgebra, a0: Vec<f64>, b: Vec<f64>, horizon: f64, dt: f64) -> Self {
        Self {
            a0: Covector(a0),
            b,
            start: alg.identity(),
            horizon,
            dt,
            selection: Selection::Barycenter,
        }
    }
}

/// Output of [`integrate_extremal`]. The vertical dual is stored once for the
/// whole run and cannot be changed afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Extremal {
    pub trajectory: Trajectory,
    pub control: ControlSignal,
    vertical: Vec<f64>,
    duals: Vec<f64>,
    dim: usize,
    /// Set when some sample came from a set-valued feedback through the selection rule.
    pub selected: bool,
    pub horizon: f64,
}

impl Extremal {
    pub fn vertical(&self) -> &[f64] {
        &self.vertical
    }

    /// `a(t_k)` for `k = 0..=samples`.
    pub fn dual(&self, k: usize) -> &[f64] {
        &self.duals[k * self.dim..(k + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.control.len()
    }

    pub fn is_empty(&self) -> bool {
        self.control.is_empty()
    }

    pub fn states(&self) -> Vec<ExtremalState> {
        let dt = self.control.dt();
        (0..=self.len())
            .map(|k| ExtremalState {
                t: k as f64 * dt,
                a: Covector(self.dual(k).to_vec()),
                b: self.vertical.clone(),
            })
            .collect()
    }

    pub fn label(&self) -> &'static str {
        if self.selected {
            "selected extremal"
        } else {
            "extremal"
        }
    }
}

struct Field<'a> {
    form: &'a BForm,
    norm: &'a NormModel,
    selection: &'a Selection,
}

impl Field<'_> {
    fn control(&self, a: &[f64]) -> (HorizontalVector, bool) {
        let fb = self.norm.feedback_unchecked(a);
        let set_valued = matches!(fb, Feedback::Face { .. });
        (self.norm.select(&fb, a, self.selection), set_valued)
    }

    fn eval(&self, a: &[f64]) -> Vec<f64> {
        self.form.pair_left(&self.control(a).0)
    }

    fn rk4(&self, a: &mut [f64], h: f64) {
        let k1 = self.eval(a);
        let shifted = |k: &[f64], s: f64| -> Vec<f64> { a.iter().zip(k).map(|(x, d)| x + s * d).collect() };
        let k2 = self.eval(&shifted(&k1, 0.5 * h));
        let k3 = self.eval(&shifted(&k2, 0.5 * h));
        let k4 = self.eval(&shifted(&k3, h));
        for i in 0..a.len() {
            a[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }

    /// Step-doubling RK4 over `h`: halves until the two estimates agree within `abs_tol`.
    fn reference(&self, a: &mut [f64], h: f64, abs_tol: f64, depth: u32) {
        let mut one = a.to_vec();
        self.rk4(&mut one, h);
        let mut two = a.to_vec();
        self.rk4(&mut two, 0.5 * h);
        self.rk4(&mut two, 0.5 * h);
        let err = one.iter().zip(&two).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        if err <= abs_tol || depth == 0 {
            a.copy_from_slice(&two);
        } else {
            self.reference(a, 0.5 * h, abs_tol, depth - 1);
            self.reference(a, 0.5 * h, abs_tol, depth - 1);
        }
    }

    fn advance(&self, a: &mut [f64], h: f64, depth: u32) {
        if depth > 0 && self.norm.feedback_singular_on_axes() {
            let d = self.eval(a);
            let near = a
                .iter()
                .zip(&d)
                .any(|(x, v)| x.abs() < REFINE_REACH * h * v.abs());
            if near {
                let sub = h / REFINE_SPLIT as f64;
                for _ in 0..REFINE_SPLIT {
                    self.advance(a, sub, depth - 1);
                }
                return;
            }
        }
        self.rk4(a, h);
    }
}

/// Integrates the normal extremal from `a0` with constant vertical dual `b`.
///
/// `a` is advanced by RK4 on the fixed grid `t_k = k·dt`; the control recorded
/// for cell `k` is the (selected) feedback at `a(t_k)`, and the trajectory is
/// its exact development from `start`.
pub fn integrate_extremal(alg: &StepTwoAlgebra, norm: &NormModel, problem: &ExtremalProblem) -> Result<Extremal> {
    let r = alg.rank();
    check_dim("norm dimension", r, norm.dim())?;
    check_dim("initial dual a0", r, problem.a0.len())?;
    check_dim("vertical dual b", alg.vdim(), problem.b.len())?;
    check_positive("dt", problem.dt)?;
    check_positive("horizon", problem.horizon)?;
    let steps = (problem.horizon / problem.dt).round();
    if steps < 1.0 || (steps * problem.dt - problem.horizon).abs() > 1e-6 * problem.horizon {
        return Err(Error::GridMismatch(format!(
            "horizon {} is not a whole number of steps of {}",
            problem.horizon, problem.dt
        )));
    }
    let steps = steps as usize;
    if problem.a0.iter().chain(&problem.b).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { t: 0.0 });
    }
    let form = BForm::build(alg, &problem.b)?;
    let field = Field {
        form: &form,
        norm,
        selection: &problem.selection,
    };

    let mut a = problem.a0.0.clone();
    let mut duals = Vec::with_capacity((steps + 1) * r);
    let mut controls = Vec::with_capacity(steps * r);
    let mut selected = false;
    duals.extend_from_slice(&a);
    for k in 0..steps {
        let (u, set_valued) = field.control(&a);
        selected |= set_valued;
        controls.extend_from_slice(&u);
        field.advance(&mut a, problem.dt, REFINE_DEPTH);
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState {
                t: (k + 1) as f64 * problem.dt,
            });
        }
        duals.extend_from_slice(&a);
    }
    let control = ControlSignal::new(problem.dt, r, controls)?;
    let trajectory = develop(alg, &problem.start, &control)?;
    Ok(Extremal {
        trajectory,
        control,
        vertical: problem.b.clone(),
        duals,
        dim: r,
        selected,
        horizon: steps as f64 * problem.dt,
    })
}

/// Residuals of the extremal conditions for a sampled `(u, a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    /// Largest one-step defect of the sampled duals, per unit time (see [`residual_check`]).
    pub ode_residual: f64,
    /// Largest Fenchel–Young gap of `(u_k, a(t_k))`.
    pub subdiff_violation: f64,
    pub vertical_drift: f64,
    pub tol: f64,
    pub violations: Vec<String>,
}

impl ResidualReport {
    pub fn is_extremal(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the derivative and subdifferential conditions on the grid.
///
/// When the feedback is unique the ODE residual is `|a_{k+1} − Φ(a_k)|/dt`, with
/// `Φ` an adaptive step-doubling solve of `ȧ = B(u(a), ·)` across the cell. Sample
/// based quadratures cannot resolve the Hölder feedback of `lp`, `p > 2`, near the
/// coordinate axes. For set-valued feedback it is the distance from `Δa/dt` to
/// `B(·, ·)` applied to the segment `[u_k, u_{k+1}]`, exact for piecewise constant
/// controls switching at most once per cell.
pub fn residual_check(
    alg: &StepTwoAlgebra,
    norm: &NormModel,
    u: &ControlSignal,
    states: &[ExtremalState],
    tol: f64,
) -> Result<ResidualReport> {
    let r = alg.rank();
    check_dim("control dimension", r, u.dim())?;
    check_dim("norm dimension", r, norm.dim())?;
    let n = u.len();
    if states.len() != n + 1 {
        return Err(Error::GridMismatch(format!(
            "{} control samples need {} states, got {}",
            n,
            n + 1,
            states.len()
        )));
    }
    let dt = u.dt();
    let t0 = states[0].t;
    for (k, s) in states.iter().enumerate() {
        check_dim("state a", r, s.a.len())?;
        check_dim("state b", alg.vdim(), s.b.len())?;
        let expect = t0 + k as f64 * dt;
        if (s.t - expect).abs() > 1e-9 * expect.abs().max(1.0) {
            return Err(Error::GridMismatch(format!(
                "state {k} at t = {} but control grid has t = {expect}",
                s.t
            )));
        }
    }
    let form = BForm::build(alg, &states[0].b)?;
    let vertical_drift = states
        .iter()
        .flat_map(|s| s.b.iter().zip(&states[0].b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);

    let mut ode_residual = 0.0f64;
    let unique = norm.is_strictly_convex();
    let field = Field {
        form: &form,
        norm,
        selection: &Selection::Barycenter,
    };
    for k in 0..n {
        let (a0, a1) = (&states[k].a, &states[k + 1].a);
        let res = if unique {
            let mut reference = a0.0.clone();
            field.reference(&mut reference, dt, dt * REFERENCE_TOL, REFERENCE_DEPTH);
            a1.iter().zip(&reference).map(|(x, y)| (x - y) / dt).collect::<Vec<f64>>()
        } else {
            let slope: Vec<f64> = a1.iter().zip(a0.iter()).map(|(x, y)| (x - y) / dt).collect();
            let next = if k + 1 < n { u.sample(k + 1) } else { u.sample(k) };
            hull_residual(&form, &slope, u.sample(k), next)
        };
        ode_residual = ode_residual.max(linalg::norm2(&res));
    }
    let subdiff_violation = (0..n)
        .map(|k| norm.gap_unchecked(u.sample(k), &states[k].a))
        .fold(0.0, f64::max);

    let mut violations = Vec::new();
    if !(ode_residual <= tol) {
        violations.push(format!("ODE residual {ode_residual:e} exceeds {tol:e}"));
    }
    if !(subdiff_violation <= tol) {
        violations.push(format!("subdifferential gap {subdiff_violation:e} exceeds {tol:e}"));
    }
    if vertical_drift != 0.0 {
        violations.push(format!("vertical dual drifts by {vertical_drift:e}"));
    }
    Ok(ResidualReport {
        ode_residual,
        subdiff_violation,
        vertical_drift,
        tol,
        violations,
    })
}

/// `min_θ |slope − B(θ u + (1 − θ) v, ·)|` as a vector.
fn hull_residual(form: &BForm, slope: &[f64], u: &[f64], v: &[f64]) -> Vec<f64> {
    let bu = form.pair_left(u);
    let bv = form.pair_left(v);
    let d: Vec<f64> = bu.iter().zip(&bv).map(|(x, y)| x - y).collect();
    let w: Vec<f64> = slope.iter().zip(&bv).map(|(x, y)| x - y).collect();
    let dd = linalg::dot(&d, &d);
    let theta = if dd > 0.0 { (linalg::dot(&w, &d) / dd).clamp(0.0, 1.0) } else { 0.0 };
    w.iter().zip(&d).map(|(x, y)| x - theta * y).collect()
}

/// Drift of the quantities a normal extremal conserves.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservationReport {
    /// For each basis vector `Y` of `ker B`: `max_t |a(t)Y − a(0)Y|`.
    pub kernel_drifts: Vec<(HorizontalVector, f64)>,
    /// `max_t |‖a(t)‖* − ‖a(0)‖*|`.
    pub dual_norm_drift: f64,
    /// `max_t |a(t)u(t) − ‖u(t)‖²|`.
    pub pairing_defect: f64,
}

impl ConservationReport {
    pub fn max_kernel_drift(&self) -> f64 {
        self.kernel_drifts.iter().map(|(_, d)| *d).fold(0.0, f64::max)
    }
}

pub fn conserved_quantities(
    norm: &NormModel,
    form: &BForm,
    states: &[ExtremalState],
    u: &ControlSignal,
) -> Result<ConservationReport> {
    check_dim("norm dimension", form.dim(), norm.dim())?;
    check_dim("control dimension", form.dim(), u.dim())?;
    let first = states
        .first()
        .ok_or_else(|| Error::GridMismatch("no states".into()))?;
    let kernel_drifts = form
        .kernel()
        .into_iter()
        .map(|y| {
            let c0 = first.a.apply(&y);
            let d = states.iter().map(|s| (s.a.apply(&y) - c0).abs()).fold(0.0, f64::max);
            (y, d)
        })
        .collect();
    let h0 = norm.dual_eval(&first.a);
    let dual_norm_drift = states
        .iter()
        .map(|s| (norm.dual_eval(&s.a) - h0).abs())
        .fold(0.0, f64::max);
    let pairing_defect = u
        .samples()
        .zip(states)
        .map(|(uk, s)| {
            let n = norm.eval(uk);
            (s.a.apply(uk) - n * n).abs()
        })
        .fold(0.0, f64::max);
    Ok(ConservationReport {
        kernel_drifts,
        dual_norm_drift,
        pairing_defect,
    })
}
