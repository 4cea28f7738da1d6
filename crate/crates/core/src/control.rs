//! Piecewise-constant controls on a uniform grid and the curves they develop.
//!
//! Sample `k` holds the control on `[k·dt, (k+1)·dt)`. Development is exact: each
//! cell contributes the group factor `exp(dt·u_k)`, so no discretization error
//! enters the curve itself.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // unused when std is linked into the build
use num_traits::Float;

use crate::algebra::{dilate_unchecked, GroupPoint, HorizontalVector, StepTwoAlgebra};
use crate::error::{check_dim, check_positive, Error, Result};
use crate::norms::NormModel;

/// Relative slack when comparing a window end to the signal horizon.
const HORIZON_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    dt: f64,
    dim: usize,
    data: Vec<f64>,
}

impl ControlSignal {
    /// `data` holds `count · dim` values, sample-major.
    pub fn new(dt: f64, dim: usize, data: Vec<f64>) -> Result<Self> {
        check_positive("control step dt", dt)?;
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidControl(format!(
                "need a positive number of samples of dimension {dim}, got {} values",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidControl("non-finite sample".into()));
        }
        Ok(Self { dt, dim, data })
    }

    pub fn from_samples(dt: f64, samples: &[HorizontalVector]) -> Result<Self> {
        let dim = samples.first().map(|s| s.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(dim * samples.len());
        for s in samples {
            check_dim("control sample", dim, s.len())?;
            data.extend_from_slice(s);
        }
        Self::new(dt, dim, data)
    }

    /// Samples `f` at the left end `k·dt` of each of `count` cells.
    pub fn from_fn(dt: f64, count: usize, dim: usize, mut f: impl FnMut(f64) -> Vec<f64>) -> Result<Self> {
        let mut data = Vec::with_capacity(count * dim);
        for k in 0..count {
            let v = f(k as f64 * dt);
            check_dim("control sample", dim, v.len())?;
            data.extend(v);
        }
        Self::new(dt, dim, data)
    }

    pub fn constant(dt: f64, count: usize, value: &[f64]) -> Result<Self> {
        Self::from_fn(dt, count, value.len(), |_| value.to_vec())
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Total duration `T = dt · count`.
    pub fn duration(&self) -> f64 {
        self.dt * self.len() as f64
    }

    #[inline]
    pub fn sample(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Value of the signal at time `t` (clamped to the last cell at `t = T`).
    pub fn value_at(&self, t: f64) -> &[f64] {
        let k = ((t / self.dt).floor().max(0.0) as usize).min(self.len() - 1);
        self.sample(k)
    }

    /// Whether every sample has norm `1 ± tol`.
    pub fn is_unit_speed(&self, norm: &NormModel, tol: f64) -> bool {
        norm.dim() == self.dim && self.samples().all(|s| (norm.eval(s) - 1.0).abs() <= tol)
    }

    /// Length `Σ ‖u_k‖ dt`.
    pub fn length(&self, norm: &NormModel) -> Result<f64> {
        check_dim("norm dimension", self.dim, norm.dim())?;
        Ok(self.samples().map(|s| norm.eval(s)).sum::<f64>() * self.dt)
    }

    fn check_window(&self, t0: f64, t1: f64) -> Result<()> {
        let limit = self.duration();
        if !(t0 >= 0.0 && t1 > t0 && t1 <= limit * (1.0 + HORIZON_SLACK)) {
            return Err(Error::InvalidWindow { t0, t1, limit });
        }
        Ok(())
    }

    /// Exact `∫_{t0}^{t1} u(t) dt` of the piecewise-constant signal.
    pub fn integral(&self, t0: f64, t1: f64) -> Result<HorizontalVector> {
        self.check_window(t0, t1)?;
        let t1 = t1.min(self.duration());
        let mut acc = vec![0.0; self.dim];
        let first = (t0 / self.dt).floor() as usize;
        let n = self.len();
        for k in first..n {
            let a = k as f64 * self.dt;
            if a >= t1 {
                break;
            }
            let b = a + self.dt;
            let w = b.min(t1) - a.max(t0);
            if w <= 0.0 {
                continue;
            }
            for (o, v) in acc.iter_mut().zip(self.sample(k)) {
                *o += w * v;
            }
        }
        Ok(HorizontalVector(acc))
    }

    /// Integral average `(t1 − t0)⁻¹ ∫_{t0}^{t1} u`.
    pub fn average(&self, t0: f64, t1: f64) -> Result<HorizontalVector> {
        let mut v = self.integral(t0, t1)?;
        let w = t1 - t0;
        v.iter_mut().for_each(|x| *x /= w);
        Ok(v)
    }

    /// Mean over all samples.
    pub fn mean(&self) -> HorizontalVector {
        let mut acc = vec![0.0; self.dim];
        for s in self.samples() {
            for (o, v) in acc.iter_mut().zip(s) {
                *o += v;
            }
        }
        let n = self.len() as f64;
        HorizontalVector(acc.into_iter().map(|x| x / n).collect())
    }

    /// The signal restricted to `[0, t_window]`, rounded up to whole cells.
    pub fn restrict(&self, t_window: f64) -> Result<Self> {
        self.check_window(0.0, t_window)?;
        let cells = ((t_window / self.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let cells = cells.min(self.len());
        Self::new(self.dt, self.dim, self.data[..cells * self.dim].to_vec())
    }

    /// Exact `L²` distance between two signals on `[t0, t1]`.
    pub fn l2_distance(&self, other: &ControlSignal, t0: f64, t1: f64) -> Result<f64> {
        check_dim("control dimension", self.dim, other.dim)?;
        self.check_window(t0, t1)?;
        other.check_window(t0, t1)?;
        let mut t = t0;
        let mut ka = ((t0 / self.dt).floor() as usize).min(self.len() - 1);
        let mut kb = ((t0 / other.dt).floor() as usize).min(other.len() - 1);
        let mut acc = 0.0;
        while t < t1 {
            let na = if ka + 1 >= self.len() { t1 } else { ((ka + 1) as f64 * self.dt).min(t1) };
            let nb = if kb + 1 >= other.len() { t1 } else { ((kb + 1) as f64 * other.dt).min(t1) };
            let next = na.min(nb);
            let d2: f64 = self
                .sample(ka)
                .iter()
                .zip(other.sample(kb))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            acc += d2 * (next - t).max(0.0);
            if next >= t1 {
                break;
            }
            if na <= next {
                ka += 1;
            }
            if nb <= next {
                kb += 1;
            }
            t = next;
        }
        Ok(acc.sqrt())
    }
}

/// Points of a horizontal curve on the control grid: `points.len() = samples + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub points: Vec<GroupPoint>,
}

impl Trajectory {
    pub fn start(&self) -> &GroupPoint {
        &self.points[0]
    }

    pub fn end(&self) -> &GroupPoint {
        self.points.last().expect("trajectory has at least one point")
    }

    /// Recovers the control from consecutive points: `u_k = (p_k⁻¹ p_{k+1}).x / dt`.
    pub fn control(&self, alg: &StepTwoAlgebra, i: usize, j: usize) -> Result<ControlSignal> {
        if j >= self.points.len() {
            return Err(Error::IndexOutOfRange {
                index: j,
                len: self.points.len(),
            });
        }
        if i >= j {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.points.len(),
            });
        }
        let r = alg.rank();
        let mut data = Vec::with_capacity((j - i) * r);
        for k in i..j {
            let step = alg.difference(&self.points[k], &self.points[k + 1])?;
            data.extend(step.x.iter().map(|v| v / self.dt));
        }
        ControlSignal::new(self.dt, r, data)
    }
}

/// Develops `u` from `start`: `p_{k+1} = p_k · exp(dt·u_k)`.
pub fn develop(alg: &StepTwoAlgebra, start: &GroupPoint, u: &ControlSignal) -> Result<Trajectory> {
    check_dim("control dimension", alg.rank(), u.dim())?;
    check_dim("start x", alg.rank(), start.x.len())?;
    check_dim("start z", alg.vdim(), start.z.len())?;
    let mut points = Vec::with_capacity(u.len() + 1);
    let mut p = start.clone();
    points.push(p.clone());
    let mut step = vec![0.0; u.dim()];
    for s in u.samples() {
        for (o, v) in step.iter_mut().zip(s) {
            *o = u.dt() * v;
        }
        alg.right_mul_exp(&mut p, &step);
        points.push(p.clone());
    }
    Ok(Trajectory { dt: u.dt(), points })
}

/// Endpoint of the development from the identity, without storing the path.
pub fn endpoint(alg: &StepTwoAlgebra, u: &ControlSignal) -> Result<GroupPoint> {
    check_dim("control dimension", alg.rank(), u.dim())?;
    let mut p = alg.identity();
    let mut step = vec![0.0; u.dim()];
    for s in u.samples() {
        for (o, v) in step.iter_mut().zip(s) {
            *o = u.dt() * v;
        }
        alg.right_mul_exp(&mut p, &step);
    }
    Ok(p)
}

/// `u_λ(t) = u(λ t)`. On a uniform grid this keeps every sample and shrinks the
/// step to `dt/λ`.
pub fn dilate_control(u: &ControlSignal, lambda: f64) -> Result<ControlSignal> {
    check_positive("dilation factor", lambda)?;
    ControlSignal::new(u.dt() / lambda, u.dim(), u.as_flat().to_vec())
}

/// `δ_{1/λ}` applied pointwise, the curve side of [`dilate_control`].
pub fn dilate_trajectory(traj: &Trajectory, lambda: f64) -> Result<Trajectory> {
    check_positive("dilation factor", lambda)?;
    Ok(Trajectory {
        dt: traj.dt / lambda,
        points: traj.points.iter().map(|p| dilate_unchecked(1.0 / lambda, p)).collect(),
    })
}

/// Dilated controls `u_λ` for each `λ`, restricted to `[0, t_window]`.
pub fn blowdown_samples(u: &ControlSignal, lambdas: &[f64], t_window: f64) -> Result<Vec<ControlSignal>> {
    lambdas
        .iter()
        .map(|&l| {
            check_positive("dilation factor", l)?;
            if l * t_window > u.duration() * (1.0 + HORIZON_SLACK) {
                return Err(Error::InvalidWindow {
                    t0: 0.0,
                    t1: l * t_window,
                    limit: u.duration(),
                });
            }
            dilate_control(u, l)?.restrict(t_window)
        })
        .collect()
}
