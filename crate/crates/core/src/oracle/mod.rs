//! Brute-force upper bounds on the sub-Finsler distance by direct transcription.
//!
//! The oracle never looks at the extremal equations. It minimizes the energy
//! `½ Σ ‖u_k‖² h` of piecewise-constant controls on `N` cells of `[0, 1]`
//! subject to the exact endpoint constraint, using an augmented Lagrangian with
//! L-BFGS inner solves, then restores feasibility by Gauss–Newton projection.
//! For the polyhedral kinds the squared norm is replaced by a smooth surrogate
//! during the solve and the length is polished with projected subgradient steps.
//!
//! Whatever control comes out, its length in the true norm is reported, so the
//! value is always an upper bound on the distance (up to the endpoint slack).
//! Lower bounds are never claimed.

mod lbfgs;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // unused when std is linked into the build
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{dilate_unchecked, GroupPoint, HorizontalVector, StepTwoAlgebra};
use crate::control::{ControlSignal, Trajectory};
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::norms::NormModel;

const INNER_ITERS: usize = 400;
const INNER_GRAD_TOL: f64 = 1e-10;
const RESTORE_ITERS: usize = 40;
const RESTORE_TARGET: f64 = 1e-14;
const MAX_SHARPNESS: f64 = 64.0;
const FOURIER_MODES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub n_steps: usize,
    /// Increasing penalty weights of the augmented Lagrangian.
    pub penalty_schedule: Vec<f64>,
    pub restarts: usize,
    pub seed: u64,
    /// Endpoint tolerance in dilation-normalized coordinates.
    pub endpoint_tol: f64,
    /// Projected subgradient iterations for the polyhedral kinds.
    pub polish_iters: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            n_steps: 64,
            penalty_schedule: vec![1e1, 1e2, 1e3, 1e4, 1e5, 1e6],
            restarts: 16,
            seed: 0,
            endpoint_tol: 1e-8,
            polish_iters: 300,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps < 2 {
            return Err(Error::InvalidControl(format!("oracle needs N ≥ 2 steps, got {}", self.n_steps)));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidControl("oracle needs at least one restart".into()));
        }
        let sched = &self.penalty_schedule;
        if sched.is_empty() || sched.iter().any(|w| !(*w > 0.0)) || sched.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidControl(
                "penalty schedule must be nonempty, positive and increasing".into(),
            ));
        }
        if !(self.endpoint_tol > 0.0) {
            return Err(Error::NonPositive {
                what: "endpoint tolerance",
                value: self.endpoint_tol,
            });
        }
        Ok(())
    }
}

/// One distance query `d(g, h)`.
#[derive(Debug, Clone)]
pub struct TranscriptionProblem<'a> {
    pub alg: &'a StepTwoAlgebra,
    pub norm: &'a NormModel,
    pub g: GroupPoint,
    pub h: GroupPoint,
    pub config: OracleConfig,
    /// A control (any grid) roughly steering `g` to `h`, used as restart 0.
    pub warm_start: Option<ControlSignal>,
}

impl<'a> TranscriptionProblem<'a> {
    pub fn new(
        alg: &'a StepTwoAlgebra,
        norm: &'a NormModel,
        g: GroupPoint,
        h: GroupPoint,
        config: OracleConfig,
    ) -> Result<Self> {
        check_dim("norm dimension", alg.rank(), norm.dim())?;
        for p in [&g, &h] {
            check_dim("group point x", alg.rank(), p.x.len())?;
            check_dim("group point z", alg.vdim(), p.z.len())?;
            if !p.is_finite() {
                return Err(Error::NonFiniteState { t: 0.0 });
            }
        }
        config.validate()?;
        Ok(Self {
            alg,
            norm,
            g,
            h,
            config,
            warm_start: None,
        })
    }

    pub fn with_warm_start(mut self, u: ControlSignal) -> Result<Self> {
        check_dim("warm start dimension", self.alg.rank(), u.dim())?;
        if u.is_empty() {
            return Err(Error::InvalidControl("empty warm start".into()));
        }
        self.warm_start = Some(u);
        Ok(self)
    }

    /// `g⁻¹h` rescaled by `δ_{1/s}` with `s = |x|₂ + √|z|₂`, and `s`.
    fn normalized_target(&self) -> Result<(GroupPoint, f64)> {
        let t = self.alg.difference(&self.g, &self.h)?;
        let s = linalg::norm2(&t.x) + linalg::norm2(&t.z).sqrt();
        if s == 0.0 {
            return Ok((t, 0.0));
        }
        Ok((dilate_unchecked(1.0 / s, &t), s))
    }

    /// Runs restart `index` (`0..config.restarts`). Restarts are independent.
    pub fn solve_restart(&self, index: usize) -> Result<Candidate> {
        let (target, scale) = self.normalized_target()?;
        let n = self.config.n_steps;
        let r = self.alg.rank();
        if scale == 0.0 {
            return Ok(Candidate {
                index,
                value: 0.0,
                control: ControlSignal::new(1.0 / n as f64, r, vec![0.0; n * r])?,
                residual: 0.0,
                feasible: true,
            });
        }
        let tp = Transcription::new(self.alg, self.norm, &target, n);
        let init = self.initial_guess(index, &target, scale)?;
        let mut best: Option<(f64, Vec<f64>, f64)> = None;
        let consider = |u: &[f64], res: f64, best: &mut Option<(f64, Vec<f64>, f64)>| {
            if res <= self.config.endpoint_tol {
                let len = tp.length(u);
                if best.as_ref().is_none_or(|b| len < b.0) {
                    *best = Some((len, u.to_vec(), res));
                }
            }
        };

        if index == 0 || (index == 1 && self.warm_start.is_some()) {
            let mut u0 = init.clone();
            let res = tp.restore(&mut u0);
            consider(&u0, res, &mut best);
        }

        let mut u = init;
        let mut mult = vec![0.0; tp.ncons];
        for (j, &mu) in self.config.penalty_schedule.iter().enumerate() {
            let sharp = (4.0 * (1u64 << j.min(16)) as f64).min(MAX_SHARPNESS);
            lbfgs::minimize(
                &mut u,
                |x, grad| tp.augmented(x, &mult, mu, sharp, grad),
                INNER_ITERS,
                INNER_GRAD_TOL,
            );
            let c = tp.constraint(&u);
            for (l, ci) in mult.iter_mut().zip(&c) {
                *l -= mu * ci;
            }
        }
        let res = tp.restore(&mut u);
        consider(&u, res, &mut best);

        if self.norm.is_polyhedral() && res <= self.config.endpoint_tol {
            let polished = tp.polish(&u, self.config.polish_iters, self.config.endpoint_tol);
            if let Some((pu, pres)) = polished {
                consider(&pu, pres, &mut best);
            }
        }

        let dt = 1.0 / n as f64;
        match best {
            Some((len, u, res)) => Ok(Candidate {
                index,
                value: scale * len,
                control: ControlSignal::new(dt, r, u.iter().map(|v| scale * v).collect())?,
                residual: res,
                feasible: true,
            }),
            None => Ok(Candidate {
                index,
                value: f64::INFINITY,
                control: ControlSignal::new(dt, r, u.iter().map(|v| scale * v).collect())?,
                residual: res,
                feasible: false,
            }),
        }
    }

    fn initial_guess(&self, index: usize, target: &GroupPoint, scale: f64) -> Result<Vec<f64>> {
        let n = self.config.n_steps;
        let r = self.alg.rank();
        let line: Vec<f64> = (0..n).flat_map(|_| target.x.iter().copied()).collect();
        match (index, &self.warm_start) {
            (0, Some(w)) => {
                let total = w.duration();
                let cell = total / n as f64;
                let mut out = Vec::with_capacity(n * r);
                for k in 0..n {
                    let avg = w.average(k as f64 * cell, ((k + 1) as f64 * cell).min(total))?;
                    out.extend(avg.iter().map(|v| v * total / scale));
                }
                Ok(out)
            }
            (0, None) | (1, Some(_)) => Ok(line),
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed.wrapping_add(index as u64));
                let mut out = line;
                for f in 1..=FOURIER_MODES {
                    let amp = 2.0 / f as f64;
                    let a: Vec<f64> = (0..r).map(|_| amp * rng.gen_range(-1.0..1.0)).collect();
                    let b: Vec<f64> = (0..r).map(|_| amp * rng.gen_range(-1.0..1.0)).collect();
                    for k in 0..n {
                        let phase = 2.0 * core::f64::consts::PI * (f * k) as f64 / n as f64;
                        let (s, c) = phase.sin_cos();
                        for i in 0..r {
                            out[k * r + i] += a[i] * c + b[i] * s;
                        }
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Output of one restart.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub index: usize,
    /// Length of the control in the true norm; infinite when infeasible.
    pub value: f64,
    /// The control on `[0, 1]` with `N` cells, in the original scale.
    pub control: ControlSignal,
    /// Endpoint residual in normalized coordinates.
    pub residual: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub value: f64,
    pub control: ControlSignal,
    pub n_steps: usize,
    pub restarts: usize,
    pub seed: u64,
    pub best_restart: usize,
    pub feasible_restarts: usize,
    pub endpoint_residual: f64,
}

/// Keeps the shortest feasible candidate; ties go to the lower restart index,
/// so the result does not depend on the order candidates arrive in.
pub fn reduce(config: &OracleConfig, candidates: Vec<Candidate>) -> Result<OracleResult> {
    let feasible_restarts = candidates.iter().filter(|c| c.feasible).count();
    let best_residual = candidates.iter().map(|c| c.residual).fold(f64::INFINITY, f64::min);
    let best = candidates
        .into_iter()
        .filter(|c| c.feasible)
        .min_by(|a, b| a.value.total_cmp(&b.value).then(a.index.cmp(&b.index)))
        .ok_or(Error::Infeasible {
            residual: best_residual,
        })?;
    Ok(OracleResult {
        value: best.value,
        control: best.control,
        n_steps: config.n_steps,
        restarts: config.restarts,
        seed: config.seed,
        best_restart: best.index,
        feasible_restarts,
        endpoint_residual: best.residual,
    })
}

/// Best upper bound over all restarts, run sequentially.
pub fn sf_distance_upper(problem: &TranscriptionProblem) -> Result<OracleResult> {
    let candidates = (0..problem.config.restarts)
        .map(|i| problem.solve_restart(i))
        .collect::<Result<Vec<_>>>()?;
    reduce(&problem.config, candidates)
}

/// How a [`TranscriptionProblem`] gets solved; lets callers run restarts in parallel.
pub type Solver = fn(&TranscriptionProblem) -> Result<OracleResult>;

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicVerdict {
    pub i: usize,
    pub j: usize,
    /// `Σ ‖u_k‖ dt` over the segment.
    pub segment_length: f64,
    pub oracle_value: f64,
    pub rel_tol: f64,
    pub n_steps: usize,
    /// The oracle did not beat the segment by more than `rel_tol`.
    pub is_geodesic: bool,
}

impl GeodesicVerdict {
    pub fn describe(&self) -> String {
        if self.is_geodesic {
            format!("not beaten at resolution N={}", self.n_steps)
        } else {
            format!(
                "shortcut found at resolution N={}: {:.6} < {:.6}",
                self.n_steps, self.oracle_value, self.segment_length
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubmetrySample {
    pub x: HorizontalVector,
    pub y: Vec<f64>,
    /// `d(e, exp(X + Y)) − ‖X‖`.
    pub gap: f64,
    pub distance: f64,
    /// `|d(e, exp X) − ‖X‖| / ‖X‖`.
    pub projection_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubmetryReport {
    pub samples: Vec<SubmetrySample>,
    pub min_gap: f64,
    pub max_projection_rel_err: f64,
}

/// The distance oracle bound to one group and norm.
#[derive(Clone)]
pub struct Oracle<'a> {
    pub alg: &'a StepTwoAlgebra,
    pub norm: &'a NormModel,
    pub config: OracleConfig,
    pub solver: Solver,
}

impl<'a> Oracle<'a> {
    pub fn new(alg: &'a StepTwoAlgebra, norm: &'a NormModel, config: OracleConfig) -> Result<Self> {
        check_dim("norm dimension", alg.rank(), norm.dim())?;
        config.validate()?;
        Ok(Self {
            alg,
            norm,
            config,
            solver: sf_distance_upper,
        })
    }

    pub fn with_solver(mut self, solver: Solver) -> Self {
        self.solver = solver;
        self
    }

    pub fn problem(&self, g: &GroupPoint, h: &GroupPoint) -> Result<TranscriptionProblem<'a>> {
        TranscriptionProblem::new(self.alg, self.norm, g.clone(), h.clone(), self.config.clone())
    }

    pub fn distance(&self, g: &GroupPoint, h: &GroupPoint) -> Result<OracleResult> {
        (self.solver)(&self.problem(g, h)?)
    }

    /// Whether the oracle fails to beat the measured length of `traj` between
    /// points `i` and `j` by more than `rel_tol`.
    pub fn is_geodesic_segment(&self, traj: &Trajectory, i: usize, j: usize, rel_tol: f64) -> Result<GeodesicVerdict> {
        let u = traj.control(self.alg, i, j)?;
        let segment_length = u.length(self.norm)?;
        let problem = self
            .problem(&traj.points[i], &traj.points[j])?
            .with_warm_start(u)?;
        let res = (self.solver)(&problem)?;
        Ok(GeodesicVerdict {
            i,
            j,
            segment_length,
            oracle_value: res.value,
            rel_tol,
            n_steps: res.n_steps,
            is_geodesic: res.value >= segment_length * (1.0 - rel_tol),
        })
    }

    /// Gaps `d(e, exp(X+Y)) − ‖X‖` and projection errors for each `(X, Y)`.
    pub fn submetry_gap(&self, samples: &[(HorizontalVector, Vec<f64>)]) -> Result<SubmetryReport> {
        let e = self.alg.identity();
        let mut out = Vec::with_capacity(samples.len());
        for (x, y) in samples {
            let nx = self.norm.norm(x)?;
            let p = GroupPoint::new(x.0.clone(), y.clone());
            let d = self.distance(&e, &p)?.value;
            let proj = self.distance(&e, &self.alg.exp_horizontal(x)?)?.value;
            let projection_rel_err = if nx > 0.0 { (proj - nx).abs() / nx } else { proj };
            out.push(SubmetrySample {
                x: x.clone(),
                y: y.clone(),
                gap: d - nx,
                distance: d,
                projection_rel_err,
            });
        }
        let min_gap = out.iter().map(|s| s.gap).fold(f64::INFINITY, f64::min);
        let max_projection_rel_err = out.iter().map(|s| s.projection_rel_err).fold(0.0, f64::max);
        Ok(SubmetryReport {
            samples: out,
            min_gap,
            max_projection_rel_err,
        })
    }

    /// `(t, d(g·exp(tX), h·exp(tY)) / t)` along the ladder.
    pub fn sublinear_ratio(
        &self,
        g: &GroupPoint,
        h: &GroupPoint,
        x: &[f64],
        y: &[f64],
        t_ladder: &[f64],
    ) -> Result<Vec<(f64, f64)>> {
        let mut out = Vec::with_capacity(t_ladder.len());
        for &t in t_ladder {
            crate::error::check_positive("ladder time", t)?;
            let tx: Vec<f64> = x.iter().map(|v| t * v).collect();
            let ty: Vec<f64> = y.iter().map(|v| t * v).collect();
            let p = self.alg.multiply(g, &self.alg.exp_horizontal(&tx)?)?;
            let q = self.alg.multiply(h, &self.alg.exp_horizontal(&ty)?)?;
            out.push((t, self.distance(&p, &q)?.value / t));
        }
        Ok(out)
    }
}

/// The normalized transcription: `N` cells of width `1/N`, endpoint constraint
/// against a target of unit gauge.
struct Transcription<'a> {
    alg: &'a StepTwoAlgebra,
    norm: &'a NormModel,
    target: &'a GroupPoint,
    n: usize,
    r: usize,
    m: usize,
    h: f64,
    ncons: usize,
}

impl<'a> Transcription<'a> {
    fn new(alg: &'a StepTwoAlgebra, norm: &'a NormModel, target: &'a GroupPoint, n: usize) -> Self {
        let (r, m) = (alg.rank(), alg.vdim());
        Self {
            alg,
            norm,
            target,
            n,
            r,
            m,
            h: 1.0 / n as f64,
            ncons: r + m,
        }
    }

    fn cell<'u>(&self, u: &'u [f64], k: usize) -> &'u [f64] {
        &u[k * self.r..(k + 1) * self.r]
    }

    fn length(&self, u: &[f64]) -> f64 {
        (0..self.n).map(|k| self.norm.eval(self.cell(u, k))).sum::<f64>() * self.h
    }

    /// Endpoint minus target, `x` components first.
    fn constraint(&self, u: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.r];
        let mut z = vec![0.0; self.m];
        let mut step = vec![0.0; self.r];
        for k in 0..self.n {
            for (s, v) in step.iter_mut().zip(self.cell(u, k)) {
                *s = self.h * v;
            }
            self.alg.bracket_acc(&x, &step, 0.5, &mut z);
            for (a, b) in x.iter_mut().zip(&step) {
                *a += b;
            }
        }
        x.iter()
            .zip(&self.target.x)
            .chain(z.iter().zip(&self.target.z))
            .map(|(a, b)| a - b)
            .collect()
    }

    /// Differences `P_k − S_k` of suffix and prefix sums of the cells.
    fn suffix_minus_prefix(&self, u: &[f64]) -> Vec<f64> {
        let r = self.r;
        let mut total = vec![0.0; r];
        for k in 0..self.n {
            for (t, v) in total.iter_mut().zip(self.cell(u, k)) {
                *t += v;
            }
        }
        let mut prefix = vec![0.0; r];
        let mut out = vec![0.0; self.n * r];
        for k in 0..self.n {
            let cell = self.cell(u, k);
            for i in 0..r {
                let suffix = total[i] - prefix[i] - cell[i];
                out[k * r + i] = suffix - prefix[i];
            }
            for (p, v) in prefix.iter_mut().zip(cell) {
                *p += v;
            }
        }
        out
    }

    /// Adds `Jᵀ w` to `out`.
    fn add_jt(&self, diffs: &[f64], w: &[f64], out: &mut [f64]) {
        let (r, h) = (self.r, self.h);
        let (wx, wz) = w.split_at(r);
        let form = self.weighted_bracket(wz);
        let half_h2 = 0.5 * h * h;
        for k in 0..self.n {
            let d = &diffs[k * r..(k + 1) * r];
            for i in 0..r {
                let bd: f64 = (0..r).map(|j| form[i * r + j] * d[j]).sum();
                out[k * r + i] += h * wx[i] + half_h2 * bd;
            }
        }
    }

    /// `Σ_c w_c C^c` as a row-major `r × r` matrix.
    fn weighted_bracket(&self, w: &[f64]) -> Vec<f64> {
        let r = self.r;
        let mut out = vec![0.0; r * r];
        for (c, wc) in w.iter().enumerate() {
            if *wc == 0.0 {
                continue;
            }
            for i in 0..r {
                for j in 0..r {
                    out[i * r + j] += wc * self.alg.structure_constant(c, i, j);
                }
            }
        }
        out
    }

    /// Dense Jacobian of [`Self::constraint`], row-major `(r+m) × (N r)`.
    fn jacobian(&self, u: &[f64]) -> Vec<f64> {
        let cols = self.n * self.r;
        let diffs = self.suffix_minus_prefix(u);
        let mut jac = vec![0.0; self.ncons * cols];
        let mut unit = vec![0.0; self.ncons];
        for row in 0..self.ncons {
            unit[row] = 1.0;
            self.add_jt(&diffs, &unit, &mut jac[row * cols..(row + 1) * cols]);
            unit[row] = 0.0;
        }
        jac
    }

    /// `½ Σ φ²(u_k) h − λᵀc + ½ μ |c|²` and its gradient.
    fn augmented(&self, u: &[f64], mult: &[f64], mu: f64, sharpness: f64, grad: &mut [f64]) -> f64 {
        let r = self.r;
        let mut value = 0.0;
        let mut g = vec![0.0; r];
        for k in 0..self.n {
            value += 0.5 * self.h * self.norm.smooth_sq(self.cell(u, k), sharpness, &mut g);
            for i in 0..r {
                grad[k * r + i] = 0.5 * self.h * g[i];
            }
        }
        let c = self.constraint(u);
        let w: Vec<f64> = c.iter().zip(mult).map(|(ci, l)| mu * ci - l).collect();
        value += c.iter().zip(mult).map(|(ci, l)| 0.5 * mu * ci * ci - l * ci).sum::<f64>();
        let diffs = self.suffix_minus_prefix(u);
        self.add_jt(&diffs, &w, grad);
        value
    }

    /// Solves `(J Jᵀ) y = rhs` with a small Tikhonov shift.
    fn normal_solve(&self, jac: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
        let (rows, cols) = (self.ncons, self.n * self.r);
        let mut a = vec![0.0; rows * rows];
        for p in 0..rows {
            for q in 0..=p {
                let v = linalg::dot(&jac[p * cols..(p + 1) * cols], &jac[q * cols..(q + 1) * cols]);
                a[p * rows + q] = v;
                a[q * rows + p] = v;
            }
        }
        let trace: f64 = (0..rows).map(|p| a[p * rows + p]).sum();
        let shift = 1e-13 * trace.max(1e-300);
        for p in 0..rows {
            a[p * rows + p] += shift;
        }
        linalg::solve(rows, &a, rhs)
    }

    /// Minimum-norm Gauss–Newton steps toward the constraint set, in place.
    /// Returns the final residual `|c|₂`.
    fn restore(&self, u: &mut [f64]) -> f64 {
        let cols = self.n * self.r;
        let mut c = self.constraint(u);
        let mut res = linalg::norm2(&c);
        for _ in 0..RESTORE_ITERS {
            if res <= RESTORE_TARGET || !res.is_finite() {
                break;
            }
            let jac = self.jacobian(u);
            let Some(y) = self.normal_solve(&jac, &c) else { break };
            let mut delta = vec![0.0; cols];
            for (row, yr) in y.iter().enumerate() {
                for (d, j) in delta.iter_mut().zip(&jac[row * cols..(row + 1) * cols]) {
                    *d += yr * j;
                }
            }
            let mut step = 1.0;
            let mut improved = false;
            for _ in 0..20 {
                let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a - step * d).collect();
                let ct = self.constraint(&trial);
                let rt = linalg::norm2(&ct);
                if rt < res {
                    u.copy_from_slice(&trial);
                    c = ct;
                    res = rt;
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        res
    }

    /// Projected subgradient descent on the true length, restoring feasibility
    /// after each step; returns the best feasible iterate.
    fn polish(&self, start: &[f64], iters: usize, tol: f64) -> Option<(Vec<f64>, f64)> {
        let (r, cols) = (self.r, self.n * self.r);
        let mut u = start.to_vec();
        let mut best: Option<(f64, Vec<f64>, f64)> = None;
        let alpha0 = 0.05 * linalg::norm2(&u).max(1e-3);
        let mut sub = vec![0.0; r];
        for it in 0..iters {
            let mut g = vec![0.0; cols];
            for k in 0..self.n {
                self.norm.subgradient(self.cell(&u, k), &mut sub);
                g[k * r..(k + 1) * r].copy_from_slice(&sub);
            }
            let jac = self.jacobian(&u);
            let jg: Vec<f64> = (0..self.ncons)
                .map(|row| linalg::dot(&jac[row * cols..(row + 1) * cols], &g))
                .collect();
            let y = self.normal_solve(&jac, &jg)?;
            for (row, yr) in y.iter().enumerate() {
                for (gi, j) in g.iter_mut().zip(&jac[row * cols..(row + 1) * cols]) {
                    *gi -= yr * j;
                }
            }
            let gn = linalg::norm2(&g);
            if gn < 1e-14 {
                break;
            }
            let step = alpha0 / (1.0 + it as f64).sqrt() / gn;
            for (ui, gi) in u.iter_mut().zip(&g) {
                *ui -= step * gi;
            }
            let res = self.restore(&mut u);
            if res <= tol {
                let len = self.length(&u);
                if best.as_ref().is_none_or(|b| len < b.0) {
                    best = Some((len, u.clone(), res));
                }
            } else if let Some(b) = &best {
                u.copy_from_slice(&b.1);
            } else {
                return None;
            }
        }
        best.map(|(_, u, res)| (u, res))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::develop;
    use approx::assert_abs_diff_eq;
    use core::f64::consts::PI;

    fn h1() -> StepTwoAlgebra {
        StepTwoAlgebra::heisenberg(1).unwrap()
    }

    fn quick(restarts: usize) -> OracleConfig {
        OracleConfig {
            restarts,
            ..OracleConfig::default()
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let alg = StepTwoAlgebra::free_step_two(3).unwrap();
        let norm = NormModel::euclidean_identity(3);
        let target = GroupPoint::new(vec![0.3, -0.2, 0.5], vec![0.1, 0.2, -0.3]);
        let tp = Transcription::new(&alg, &norm, &target, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u: Vec<f64> = (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let jac = tp.jacobian(&u);
        let eps = 1e-6;
        for col in 0..24 {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[col] += eps;
            dn[col] -= eps;
            let (cp, cm) = (tp.constraint(&up), tp.constraint(&dn));
            for row in 0..6 {
                let fd = (cp[row] - cm[row]) / (2.0 * eps);
                assert_abs_diff_eq!(jac[row * 24 + col], fd, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn augmented_gradient_matches_finite_differences() {
        let alg = h1();
        let target = GroupPoint::new(vec![0.4, 0.1], vec![0.3]);
        for norm in [NormModel::lp(2, 3.0).unwrap(), NormModel::linf(2)] {
            let tp = Transcription::new(&alg, &norm, &target, 6);
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let u: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mult = [0.3, -0.1, 0.7];
            let mut g = vec![0.0; 12];
            tp.augmented(&u, &mult, 10.0, 8.0, &mut g);
            let eps = 1e-6;
            let mut scratch = vec![0.0; 12];
            for col in 0..12 {
                let mut up = u.clone();
                let mut dn = u.clone();
                up[col] += eps;
                dn[col] -= eps;
                let fd = (tp.augmented(&up, &mult, 10.0, 8.0, &mut scratch)
                    - tp.augmented(&dn, &mult, 10.0, 8.0, &mut scratch))
                    / (2.0 * eps);
                assert_abs_diff_eq!(g[col], fd, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn identical_points_have_distance_zero() {
        let alg = h1();
        let norm = NormModel::euclidean_identity(2);
        let o = Oracle::new(&alg, &norm, quick(2)).unwrap();
        let g = GroupPoint::new(vec![0.2, 0.3], vec![-1.0]);
        let res = o.distance(&g, &g).unwrap();
        assert_eq!(res.value, 0.0);
        assert!(res.control.as_flat().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn horizontal_targets_give_the_norm() {
        let alg = StepTwoAlgebra::free_step_two(3).unwrap();
        for norm in [
            NormModel::euclidean_identity(3),
            NormModel::lp(3, 4.0).unwrap(),
            NormModel::linf(3),
            NormModel::l1(3),
        ] {
            let o = Oracle::new(&alg, &norm, quick(3)).unwrap();
            let x = [0.7, -0.4, 1.1];
            let res = o.distance(&alg.identity(), &alg.exp_horizontal(&x).unwrap()).unwrap();
            let nx = norm.norm(&x).unwrap();
            assert!(res.value >= nx * (1.0 - 1e-9), "{}", norm.kind_name());
            assert!(res.value <= nx * (1.0 + 1e-6), "{}: {} vs {nx}", norm.kind_name(), res.value);
        }
    }

    #[test]
    fn heisenberg_vertical_distance() {
        // an arc of length L enclosing the disc of area z satisfies z = L²/(4π)
        let alg = h1();
        let norm = NormModel::euclidean_identity(2);
        let o = Oracle::new(&alg, &norm, quick(6)).unwrap();
        for z in [1.0 / (2.0 * PI), 1.0, 3.0] {
            let res = o.distance(&alg.identity(), &GroupPoint::new(vec![0.0, 0.0], vec![z])).unwrap();
            let exact = (4.0 * PI * z).sqrt();
            assert!(res.value >= exact * (1.0 - 1e-9));
            assert!(res.value <= exact * 1.01, "z={z}: {} vs {exact}", res.value);
            let end = crate::control::endpoint(&alg, &res.control).unwrap();
            assert!(end.max_abs_diff(&GroupPoint::new(vec![0.0, 0.0], vec![z])) < 1e-8);
        }
    }

    #[test]
    fn distance_is_left_invariant_and_homogeneous() {
        let alg = h1();
        let norm = NormModel::euclidean_identity(2);
        let o = Oracle::new(&alg, &norm, quick(6)).unwrap();
        let g = GroupPoint::new(vec![0.5, -1.0], vec![2.0]);
        let h = GroupPoint::new(vec![1.0, 0.2], vec![-0.5]);
        let d = o.distance(&g, &h).unwrap().value;
        let d0 = o.distance(&alg.identity(), &alg.difference(&g, &h).unwrap()).unwrap().value;
        assert_abs_diff_eq!(d, d0, epsilon = 1e-9 * d);
        let back = o.distance(&h, &g).unwrap().value;
        assert!((d - back).abs() <= 1e-3 * d);
        let p = alg.difference(&g, &h).unwrap();
        for l in [0.5, 2.0] {
            let dl = o.distance(&alg.identity(), &alg.dilate(l, &p).unwrap()).unwrap().value;
            assert_abs_diff_eq!(dl, l * d0, epsilon = 1e-9 * d0);
        }
    }

    #[test]
    fn warm_start_never_loses_to_input() {
        let alg = h1();
        let norm = NormModel::euclidean_identity(2);
        let u = ControlSignal::from_fn(0.01, 300, 2, |t| vec![(0.7 * t).cos(), 1.0 + (0.3 * t).sin()]).unwrap();
        let traj = develop(&alg, &alg.identity(), &u).unwrap();
        let cfg = OracleConfig {
            restarts: 1,
            ..OracleConfig::default()
        };
        let p = TranscriptionProblem::new(&alg, &norm, alg.identity(), traj.end().clone(), cfg)
            .unwrap()
            .with_warm_start(u.clone())
            .unwrap();
        let res = sf_distance_upper(&p).unwrap();
        assert!(res.value <= u.length(&norm).unwrap() * (1.0 + 1e-6));
    }

    #[test]
    fn circle_beyond_a_period_is_beaten_and_lines_are_not() {
        let alg = h1();
        let norm = NormModel::euclidean_identity(2);
        let o = Oracle::new(&alg, &norm, quick(4)).unwrap();
        let dt = 2.0 * PI / 400.0;
        let circ = ControlSignal::from_fn(dt, 500, 2, |t| vec![t.cos(), t.sin()]).unwrap();
        let traj = develop(&alg, &alg.identity(), &circ).unwrap();
        let v = o.is_geodesic_segment(&traj, 0, 500, 0.02).unwrap();
        assert!(!v.is_geodesic, "{v:?}");
        let half = o.is_geodesic_segment(&traj, 0, 200, 0.02).unwrap();
        assert!(half.is_geodesic, "{half:?}");

        let line = ControlSignal::constant(0.05, 400, &[0.6, 0.8]).unwrap();
        let traj = develop(&alg, &alg.identity(), &line).unwrap();
        let v = o.is_geodesic_segment(&traj, 0, 400, 0.01).unwrap();
        assert!(v.is_geodesic, "{v:?}");
        assert!(o.is_geodesic_segment(&traj, 3, 401, 0.01).is_err());
    }

    #[test]
    fn submetry_examples() {
        let alg = h1();
        let norm = NormModel::euclidean_identity(2);
        let o = Oracle::new(&alg, &norm, quick(4)).unwrap();
        let rep = o
            .submetry_gap(&[
                (HorizontalVector(vec![1.0, 0.0]), vec![0.0]),
                (HorizontalVector(vec![1.0, 0.0]), vec![1.0]),
                (HorizontalVector(vec![0.0, 0.0]), vec![0.5]),
            ])
            .unwrap();
        assert!(rep.samples[0].gap.abs() < 1e-6);
        assert!(rep.samples[1].gap > 0.1);
        assert_abs_diff_eq!(rep.samples[2].gap, (2.0 * PI).sqrt(), epsilon = 0.02);
        assert!(rep.max_projection_rel_err < 1e-6);
    }

    #[test]
    fn sublinear_examples() {
        let alg = h1();
        let norm = NormModel::euclidean_identity(2);
        let o = Oracle::new(&alg, &norm, quick(4)).unwrap();
        let e = alg.identity();
        let zero = o.sublinear_ratio(&e, &e, &[1.0, 0.0], &[1.0, 0.0], &[1.0, 4.0]).unwrap();
        assert!(zero.iter().all(|(_, r)| *r == 0.0));

        let h = GroupPoint::new(vec![0.0, 0.0], vec![1.0]);
        let central = o.sublinear_ratio(&e, &h, &[1.0, 0.0], &[1.0, 0.0], &[1.0, 8.0]).unwrap();
        for (t, r) in central {
            assert_abs_diff_eq!(r * t, (4.0 * PI).sqrt(), epsilon = 0.02 * (4.0 * PI).sqrt());
        }
    }

    #[test]
    fn restarts_are_deterministic() {
        let alg = h1();
        let norm = NormModel::linf(2);
        let cfg = OracleConfig {
            restarts: 3,
            seed: 11,
            ..OracleConfig::default()
        };
        let target = GroupPoint::new(vec![0.3, 0.1], vec![0.4]);
        let p = TranscriptionProblem::new(&alg, &norm, alg.identity(), target, cfg).unwrap();
        let a = sf_distance_upper(&p).unwrap();
        let b = sf_distance_upper(&p).unwrap();
        assert_eq!(a, b);
        let mut cands: Vec<_> = (0..3).map(|i| p.solve_restart(i).unwrap()).collect();
        cands.reverse();
        assert_eq!(reduce(&p.config, cands).unwrap(), a);
    }

    #[test]
    fn config_validation() {
        let bad = [
            OracleConfig {
                n_steps: 1,
                ..OracleConfig::default()
            },
            OracleConfig {
                restarts: 0,
                ..OracleConfig::default()
            },
            OracleConfig {
                penalty_schedule: vec![10.0, 1.0],
                ..OracleConfig::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }
}
