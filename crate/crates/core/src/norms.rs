//! Norms on the horizontal layer and the convex analysis of `E(v) = ½‖v‖²`.
//!
//! For every supported kind the dual norm has a closed form, which gives an exact
//! membership test for the subdifferential: `a ∈ ∂E(u)` iff the Fenchel–Young gap
//! `½‖a‖*² + ½‖u‖² − a(u)` vanishes. That gap is precisely
//! `sup_v { a(v − u) − E(v) + E(u) }`, the worst violation of the subgradient
//! inequality, so a tolerance on it is a tolerance on the inequality itself.
//!
//! The maximizers of `a(v) − ½‖v‖²` form `‖a‖* · F(a)`, where `F(a)` is the face
//! of the unit ball exposed by `a`. Polyhedral kinds return that face as a vertex
//! list; a [`Selection`] picks one representative.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

#[allow(unused_imports)] // unused when std is linked into the build
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::HorizontalVector;
use crate::error::{check_dim, Error, Result};
use crate::linalg;

/// Relative tolerance for deciding which vertices lie on an exposed face.
pub const FACE_REL_TOL: f64 = 1e-12;
/// Directions per coordinate-plane slice in the subgradient probe set.
pub const PROBE_DIRECTIONS: usize = 64;

/// A linear functional on `V1`, acting by the dual pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Covector(pub Vec<f64>);

impl Covector {
    pub fn apply(&self, v: &[f64]) -> f64 {
        linalg::dot(&self.0, v)
    }
}

impl Deref for Covector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Covector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Covector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// How to pick one control out of a set-valued feedback.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule", content = "vector")]
pub enum Selection {
    /// Barycenter of the exposed face's vertices.
    #[default]
    Barycenter,
    /// The face vertex listed first in the norm's vertex order.
    LowestIndexVertex,
    /// The user vector rescaled to the face's norm level, if it lies on the face;
    /// otherwise the barycenter.
    FixedVector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Euclidean { metric: Vec<f64>, inverse: Vec<f64> },
    Lp { p: f64, q: f64 },
    Linf,
    L1,
    Polyhedral { vertices: Vec<Vec<f64>>, facets: Vec<Vec<f64>> },
}

/// A norm on `ℝ^r` together with its dual.
#[derive(Debug, Clone, PartialEq)]
pub struct NormModel {
    dim: usize,
    kind: Kind,
}

/// Result of the Legendre feedback `argmax_v { a(v) − ½‖v‖² }`.
#[derive(Debug, Clone, PartialEq)]
pub enum Feedback {
    Unique(HorizontalVector),
    /// `scale · conv(vertices)`, with `vertices` on the unit sphere.
    Face {
        scale: f64,
        vertices: Vec<HorizontalVector>,
    },
}

impl Feedback {
    pub fn is_unique(&self) -> bool {
        matches!(self, Feedback::Unique(_))
    }

    pub fn barycenter(&self) -> HorizontalVector {
        match self {
            Feedback::Unique(u) => u.clone(),
            Feedback::Face { scale, vertices } => {
                let n = vertices.len() as f64;
                let r = vertices[0].len();
                let mut out = vec![0.0; r];
                for v in vertices {
                    for (o, x) in out.iter_mut().zip(v.iter()) {
                        *o += x;
                    }
                }
                HorizontalVector(out.into_iter().map(|x| scale * x / n).collect())
            }
        }
    }
}

/// A segment on the unit sphere: `‖x + c·y‖ = 1` for `|c| ≤ eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatEdge {
    pub x: HorizontalVector,
    pub y: HorizontalVector,
    pub eps: f64,
}

impl NormModel {
    /// `‖v‖ = √(vᵀ M v)` for a symmetric positive definite `M` (row-major).
    pub fn euclidean(dim: usize, metric: Vec<f64>) -> Result<Self> {
        check_dim("metric entries", dim * dim, metric.len())?;
        for i in 0..dim {
            for j in 0..i {
                let (a, b) = (metric[i * dim + j], metric[j * dim + i]);
                if (a - b).abs() > 1e-12 * (a.abs() + b.abs()).max(1.0) {
                    return Err(Error::InvalidNorm("metric is not symmetric".into()));
                }
            }
        }
        let inverse = linalg::spd_inverse(dim, &metric)
            .ok_or_else(|| Error::InvalidNorm("metric is not positive definite".into()))?;
        Ok(Self {
            dim,
            kind: Kind::Euclidean { metric, inverse },
        })
    }

    pub fn euclidean_identity(dim: usize) -> Self {
        let mut metric = vec![0.0; dim * dim];
        for i in 0..dim {
            metric[i * dim + i] = 1.0;
        }
        Self {
            dim,
            kind: Kind::Euclidean {
                inverse: metric.clone(),
                metric,
            },
        }
    }

    pub fn lp(dim: usize, p: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::InvalidNorm(format!(
                "lp needs 1 < p < ∞ (use l1/linf), got {p}"
            )));
        }
        Ok(Self {
            dim,
            kind: Kind::Lp { p, q: p / (p - 1.0) },
        })
    }

    pub fn linf(dim: usize) -> Self {
        Self { dim, kind: Kind::Linf }
    }

    pub fn l1(dim: usize) -> Self {
        Self { dim, kind: Kind::L1 }
    }

    /// Gauge of `conv(vertices)`. The set must be symmetric and span `ℝ^r`.
    pub fn polyhedral(vertices: Vec<Vec<f64>>) -> Result<Self> {
        let dim = vertices
            .first()
            .map(|v| v.len())
            .ok_or_else(|| Error::InvalidNorm("empty vertex list".into()))?;
        if dim == 0 {
            return Err(Error::InvalidNorm("zero-dimensional vertices".into()));
        }
        for v in &vertices {
            check_dim("vertex", dim, v.len())?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidNorm("non-finite vertex".into()));
            }
        }
        let scale = vertices
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()));
        for (idx, v) in vertices.iter().enumerate() {
            let has_mirror = vertices.iter().any(|w| {
                v.iter()
                    .zip(w)
                    .all(|(a, b)| (a + b).abs() <= 1e-9 * scale.max(1.0))
            });
            if !has_mirror {
                return Err(Error::InvalidNorm(format!(
                    "vertex {} has no antipode; the unit ball must be symmetric",
                    idx + 1
                )));
            }
        }
        let flat: Vec<f64> = vertices.iter().flatten().cloned().collect();
        if linalg::rank(vertices.len(), dim, &flat, 1e-10) < dim {
            return Err(Error::InvalidNorm("vertices do not span the space".into()));
        }
        let facets = enumerate_facets(dim, &vertices);
        if facets.is_empty() {
            return Err(Error::InvalidNorm("could not find any facet".into()));
        }
        Ok(Self {
            dim,
            kind: Kind::Polyhedral { vertices, facets },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            Kind::Euclidean { .. } => "euclidean",
            Kind::Lp { .. } => "lp",
            Kind::Linf => "linf",
            Kind::L1 => "l1",
            Kind::Polyhedral { .. } => "polyhedral",
        }
    }

    /// Exponent for `lp`, `None` otherwise.
    pub fn lp_exponent(&self) -> Option<f64> {
        match self.kind {
            Kind::Lp { p, .. } => Some(p),
            _ => None,
        }
    }

    /// Metric matrix for the euclidean kind.
    pub fn metric(&self) -> Option<&[f64]> {
        match &self.kind {
            Kind::Euclidean { metric, .. } => Some(metric),
            _ => None,
        }
    }

    /// Unit-ball vertices for the polyhedral kinds (linf, l1, polyhedral).
    pub fn vertices(&self) -> Option<Vec<Vec<f64>>> {
        let r = self.dim;
        match &self.kind {
            Kind::Linf => Some(sign_vectors(r)),
            Kind::L1 => Some(signed_basis(r)),
            Kind::Polyhedral { vertices, .. } => Some(vertices.clone()),
            _ => None,
        }
    }

    /// Facet normals `n_j` with `‖v‖ = max_j n_j·v` for the polyhedral kinds.
    fn facets(&self) -> Option<Vec<Vec<f64>>> {
        let r = self.dim;
        match &self.kind {
            Kind::Linf => Some(signed_basis(r)),
            Kind::L1 => Some(sign_vectors(r)),
            Kind::Polyhedral { facets, .. } => Some(facets.clone()),
            _ => None,
        }
    }

    pub fn norm(&self, v: &[f64]) -> Result<f64> {
        check_dim("norm argument", self.dim, v.len())?;
        Ok(self.eval(v))
    }

    pub(crate) fn eval(&self, v: &[f64]) -> f64 {
        match &self.kind {
            Kind::Euclidean { metric, .. } => {
                let mv = linalg::mat_vec(self.dim, metric, v);
                linalg::dot(v, &mv).max(0.0).sqrt()
            }
            Kind::Lp { p, .. } => lp_norm(v, *p),
            Kind::Linf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            Kind::L1 => v.iter().map(|x| x.abs()).sum(),
            Kind::Polyhedral { facets, .. } => facets
                .iter()
                .map(|n| linalg::dot(n, v))
                .fold(0.0, f64::max),
        }
    }

    /// `sup { a(v) : ‖v‖ ≤ 1 }`.
    pub fn dual_norm(&self, a: &[f64]) -> Result<f64> {
        check_dim("covector", self.dim, a.len())?;
        Ok(self.dual_eval(a))
    }

    pub(crate) fn dual_eval(&self, a: &[f64]) -> f64 {
        match &self.kind {
            Kind::Euclidean { inverse, .. } => {
                let ma = linalg::mat_vec(self.dim, inverse, a);
                linalg::dot(a, &ma).max(0.0).sqrt()
            }
            Kind::Lp { q, .. } => lp_norm(a, *q),
            Kind::Linf => a.iter().map(|x| x.abs()).sum(),
            Kind::L1 => a.iter().fold(0.0, |m, x| m.max(x.abs())),
            Kind::Polyhedral { vertices, .. } => vertices
                .iter()
                .map(|v| linalg::dot(a, v))
                .fold(0.0, f64::max),
        }
    }

    /// Fenchel–Young gap `½‖a‖*² + ½‖u‖² − a(u)`: zero iff `a ∈ ∂(½‖·‖²)(u)`.
    pub fn subdiff_gap(&self, u: &[f64], a: &[f64]) -> Result<f64> {
        check_dim("control", self.dim, u.len())?;
        check_dim("covector", self.dim, a.len())?;
        Ok(self.gap_unchecked(u, a))
    }

    pub(crate) fn gap_unchecked(&self, u: &[f64], a: &[f64]) -> f64 {
        let d = self.dual_eval(a);
        let n = self.eval(u);
        0.5 * d * d + 0.5 * n * n - linalg::dot(a, u)
    }

    /// Whether `a(v − u) ≤ ½‖v‖² − ½‖u‖² + tol` for all `v`.
    pub fn subdiff_contains(&self, u: &[f64], a: &[f64], tol: f64) -> Result<bool> {
        Ok(self.subdiff_gap(u, a)? <= tol)
    }

    /// Largest violation of the subgradient inequality over a deterministic probe
    /// set: [`PROBE_DIRECTIONS`] directions in every coordinate plane plus the
    /// norm's extreme directions, each scaled to radii `½‖u‖, ‖u‖, 2‖u‖, 1`.
    ///
    /// This is a sampled lower estimate of [`NormModel::subdiff_gap`].
    pub fn subdiff_probe_violation(&self, u: &[f64], a: &[f64]) -> Result<f64> {
        check_dim("control", self.dim, u.len())?;
        check_dim("covector", self.dim, a.len())?;
        let nu = self.eval(u);
        let e_u = 0.5 * nu * nu;
        let au = linalg::dot(a, u);
        let mut radii = vec![1.0];
        for r in [0.5 * nu, nu, 2.0 * nu] {
            if r > 0.0 {
                radii.push(r);
            }
        }
        let mut worst = f64::NEG_INFINITY;
        for dir in self.probe_directions() {
            let len = self.eval(&dir);
            if len == 0.0 {
                continue;
            }
            for &rad in &radii {
                let v: Vec<f64> = dir.iter().map(|x| x * rad / len).collect();
                let lhs = linalg::dot(a, &v) - au;
                let rhs = 0.5 * rad * rad - e_u;
                worst = worst.max(lhs - rhs);
            }
        }
        // v = 0 is always admissible.
        worst = worst.max(-au + e_u);
        Ok(worst)
    }

    fn probe_directions(&self) -> Vec<Vec<f64>> {
        let r = self.dim;
        let mut dirs = Vec::new();
        if r == 1 {
            dirs.push(vec![1.0]);
            dirs.push(vec![-1.0]);
        }
        for i in 0..r {
            for j in (i + 1)..r {
                for s in 0..PROBE_DIRECTIONS {
                    let th = 2.0 * core::f64::consts::PI * s as f64 / PROBE_DIRECTIONS as f64;
                    let mut d = vec![0.0; r];
                    d[i] = th.cos();
                    d[j] = th.sin();
                    dirs.push(d);
                }
            }
        }
        if let Some(vs) = self.vertices() {
            dirs.extend(vs);
        }
        dirs
    }

    /// `argmax_v { a(v) − ½‖v‖² }`.
    pub fn legendre_feedback(&self, a: &[f64]) -> Result<Feedback> {
        check_dim("covector", self.dim, a.len())?;
        Ok(self.feedback_unchecked(a))
    }

    pub(crate) fn feedback_unchecked(&self, a: &[f64]) -> Feedback {
        let r = self.dim;
        let scale = self.dual_eval(a);
        if scale == 0.0 {
            return Feedback::Unique(HorizontalVector::zeros(r));
        }
        match &self.kind {
            Kind::Euclidean { inverse, .. } => {
                Feedback::Unique(HorizontalVector(linalg::mat_vec(r, inverse, a)))
            }
            Kind::Lp { q, .. } => Feedback::Unique(HorizontalVector(
                a.iter()
                    .map(|&ai| scale * ai.signum() * (ai.abs() / scale).powf(q - 1.0))
                    .map(|x| if x.is_nan() { 0.0 } else { x })
                    .collect(),
            )),
            Kind::Linf => {
                let amax = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                let free: Vec<usize> = (0..r)
                    .filter(|&i| a[i].abs() <= FACE_REL_TOL * amax)
                    .collect();
                let base: Vec<f64> = a
                    .iter()
                    .map(|&x| if x.abs() <= FACE_REL_TOL * amax { 0.0 } else { x.signum() })
                    .collect();
                if free.is_empty() {
                    return Feedback::Unique(HorizontalVector(
                        base.iter().map(|s| scale * s).collect(),
                    ));
                }
                let mut vertices = Vec::with_capacity(1 << free.len());
                for bits in 0..(1usize << free.len()) {
                    let mut v = base.clone();
                    for (b, &i) in free.iter().enumerate() {
                        v[i] = if bits & (1 << b) == 0 { -1.0 } else { 1.0 };
                    }
                    vertices.push(HorizontalVector(v));
                }
                Feedback::Face { scale, vertices }
            }
            Kind::L1 => {
                let top: Vec<usize> = (0..r)
                    .filter(|&i| a[i].abs() >= scale * (1.0 - FACE_REL_TOL))
                    .collect();
                let vertices: Vec<HorizontalVector> = top
                    .iter()
                    .map(|&i| {
                        let mut v = HorizontalVector::zeros(r);
                        v[i] = a[i].signum();
                        v
                    })
                    .collect();
                face_or_unique(scale, vertices)
            }
            Kind::Polyhedral { vertices, .. } => {
                let face: Vec<HorizontalVector> = vertices
                    .iter()
                    .filter(|v| linalg::dot(a, v) >= scale * (1.0 - FACE_REL_TOL))
                    .map(|v| HorizontalVector(v.clone()))
                    .collect();
                face_or_unique(scale, face)
            }
        }
    }

    /// Picks one maximizer according to `rule`.
    pub fn select(&self, feedback: &Feedback, a: &[f64], rule: &Selection) -> HorizontalVector {
        match feedback {
            Feedback::Unique(u) => u.clone(),
            Feedback::Face { scale, vertices } => match rule {
                Selection::Barycenter => feedback.barycenter(),
                Selection::LowestIndexVertex => {
                    HorizontalVector(vertices[0].iter().map(|x| scale * x).collect())
                }
                Selection::FixedVector(w) => {
                    if w.len() == self.dim {
                        let nw = self.eval(w);
                        if nw > 0.0 {
                            let cand: Vec<f64> = w.iter().map(|x| x * scale / nw).collect();
                            let s2 = scale * scale;
                            if (linalg::dot(a, &cand) - s2).abs() <= 1e-9 * s2.max(1.0) {
                                return HorizontalVector(cand);
                            }
                        }
                    }
                    feedback.barycenter()
                }
            },
        }
    }

    /// Feedback followed by selection.
    pub fn feedback_control(&self, a: &[f64], rule: &Selection) -> Result<HorizontalVector> {
        let fb = self.legendre_feedback(a)?;
        Ok(self.select(&fb, a, rule))
    }

    /// Exact strict convexity of the unit sphere for the built-in kinds.
    pub fn is_strictly_convex(&self) -> bool {
        match self.kind {
            Kind::Euclidean { .. } | Kind::Lp { .. } => true,
            // In one dimension every norm is |·| up to scale, which has no flat piece.
            Kind::Linf | Kind::L1 | Kind::Polyhedral { .. } => self.dim == 1,
        }
    }

    /// Samples pairs of distinct unit vectors and looks for a midpoint that stays
    /// on the unit sphere. Returns a witness pair when one is found.
    pub fn strict_convexity_probe(&self, n_samples: usize, seed: u64) -> Option<(Vec<f64>, Vec<f64>)> {
        let r = self.dim;
        let mut candidates: Vec<Vec<f64>> = self.vertices().unwrap_or_default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n_samples {
            candidates.push((0..r).map(|_| rng.gen_range(-1.0..1.0)).collect());
        }
        let unit: Vec<Vec<f64>> = candidates
            .into_iter()
            .filter_map(|v| {
                let n = self.eval(&v);
                (n > 0.0).then(|| v.iter().map(|x| x / n).collect())
            })
            .collect();
        for (i, u) in unit.iter().enumerate() {
            for v in &unit[i + 1..] {
                let dist = u.iter().zip(v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if dist < 1e-6 {
                    continue;
                }
                let mid: Vec<f64> = u.iter().zip(v).map(|(a, b)| 0.5 * (a + b)).collect();
                if self.eval(&mid) >= 1.0 - 1e-12 {
                    return Some((u.clone(), v.clone()));
                }
            }
        }
        None
    }

    /// A flat segment `{x + c·y : |c| ≤ eps}` on the unit sphere, found by midpoint
    /// probing of vertex pairs; `None` for strictly convex norms.
    pub fn flat_edge(&self) -> Option<FlatEdge> {
        let r = self.dim;
        if self.is_strictly_convex() {
            return None;
        }
        if let Kind::Linf = self.kind {
            return Some(FlatEdge {
                x: HorizontalVector::basis(r, 0),
                y: HorizontalVector::basis(r, 1),
                eps: 1.0,
            });
        }
        let vs = self.vertices()?;
        for (i, u) in vs.iter().enumerate() {
            for v in &vs[i + 1..] {
                let antipodal = u.iter().zip(v).all(|(a, b)| (a + b).abs() < 1e-12);
                if antipodal {
                    continue;
                }
                let nu = self.eval(u);
                let nv = self.eval(v);
                let mid: Vec<f64> = u.iter().zip(v).map(|(a, b)| 0.5 * (a / nu + b / nv)).collect();
                if self.eval(&mid) >= 1.0 - 1e-12 {
                    let y = u.iter().zip(v).map(|(a, b)| 0.5 * (b / nv - a / nu)).collect();
                    return Some(FlatEdge {
                        x: HorizontalVector(mid),
                        y: HorizontalVector(y),
                        eps: 1.0,
                    });
                }
            }
        }
        None
    }

    /// Spot-checks positive homogeneity and the triangle inequality.
    pub fn validate_probe(&self, n_samples: usize, seed: u64) -> Result<()> {
        let r = self.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n_samples {
            let x: Vec<f64> = (0..r).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..r).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let t: f64 = rng.gen_range(0.0..3.0);
            let nx = self.eval(&x);
            let ny = self.eval(&y);
            let tx: Vec<f64> = x.iter().map(|v| t * v).collect();
            if (self.eval(&tx) - t * nx).abs() > 1e-9 * (1.0 + t * nx) {
                return Err(Error::InvalidNorm("positive homogeneity fails".into()));
            }
            let s: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            if self.eval(&s) > nx + ny + 1e-9 * (1.0 + nx + ny) {
                return Err(Error::InvalidNorm("triangle inequality fails".into()));
            }
        }
        Ok(())
    }

    /// Whether the feedback has a non-Lipschitz or discontinuous set on the
    /// coordinate hyperplanes `a_i = 0`.
    pub(crate) fn feedback_singular_on_axes(&self) -> bool {
        match self.kind {
            Kind::Lp { p, .. } => p > 2.0,
            Kind::Linf => true,
            _ => false,
        }
    }

    /// Whether the norm needs a smoothed surrogate in gradient-based optimization.
    pub(crate) fn is_polyhedral(&self) -> bool {
        matches!(self.kind, Kind::Linf | Kind::L1 | Kind::Polyhedral { .. })
    }

    /// Smooth surrogate `φ²` of `‖u‖²` and its gradient (written to `grad`).
    ///
    /// Exact for the euclidean and lp kinds. For the polyhedral kinds the facet
    /// maximum is replaced by the `sharpness`-norm of the positive facet values,
    /// which overestimates `‖u‖` by at most a factor `(#facets)^{1/sharpness}`.
    pub(crate) fn smooth_sq(&self, u: &[f64], sharpness: f64, grad: &mut [f64]) -> f64 {
        let r = self.dim;
        match &self.kind {
            Kind::Euclidean { metric, .. } => {
                let mu = linalg::mat_vec(r, metric, u);
                for (g, m) in grad.iter_mut().zip(&mu) {
                    *g = 2.0 * m;
                }
                linalg::dot(u, &mu)
            }
            Kind::Lp { p, .. } => {
                let n = lp_norm(u, *p);
                for (g, &x) in grad.iter_mut().zip(u) {
                    *g = if n == 0.0 {
                        0.0
                    } else {
                        2.0 * n * x.signum() * (x.abs() / n).powf(p - 1.0)
                    };
                }
                n * n
            }
            _ => {
                let facets = self.facets().expect("polyhedral kinds have facets");
                let vals: Vec<f64> = facets.iter().map(|n| linalg::dot(n, u).max(0.0)).collect();
                let vmax = vals.iter().cloned().fold(0.0, f64::max);
                grad.iter_mut().for_each(|g| *g = 0.0);
                if vmax == 0.0 {
                    return 0.0;
                }
                let s: f64 = vals.iter().map(|v| (v / vmax).powf(sharpness)).sum();
                let phi = vmax * s.powf(1.0 / sharpness);
                for (n, v) in facets.iter().zip(&vals) {
                    if *v == 0.0 {
                        continue;
                    }
                    let w = 2.0 * phi * (v / phi).powf(sharpness - 1.0);
                    for (g, ni) in grad.iter_mut().zip(n) {
                        *g += w * ni;
                    }
                }
                phi * phi
            }
        }
    }

    /// One subgradient of `‖·‖` at `u` (zero at the origin).
    pub(crate) fn subgradient(&self, u: &[f64], out: &mut [f64]) {
        let r = self.dim;
        let n = self.eval(u);
        out.iter_mut().for_each(|g| *g = 0.0);
        if n == 0.0 {
            return;
        }
        match &self.kind {
            Kind::Euclidean { metric, .. } => {
                let mu = linalg::mat_vec(r, metric, u);
                for (o, m) in out.iter_mut().zip(mu) {
                    *o = m / n;
                }
            }
            Kind::Lp { p, .. } => {
                for (o, &x) in out.iter_mut().zip(u) {
                    *o = x.signum() * (x.abs() / n).powf(p - 1.0);
                }
            }
            _ => {
                let facets = self.facets().expect("polyhedral kinds have facets");
                let best = facets
                    .iter()
                    .max_by(|a, b| {
                        linalg::dot(a, u)
                            .partial_cmp(&linalg::dot(b, u))
                            .unwrap_or(core::cmp::Ordering::Equal)
                    })
                    .expect("nonempty facets");
                out.copy_from_slice(best);
            }
        }
    }
}

fn face_or_unique(scale: f64, vertices: Vec<HorizontalVector>) -> Feedback {
    if vertices.len() == 1 {
        let v = &vertices[0];
        Feedback::Unique(HorizontalVector(v.iter().map(|x| scale * x).collect()))
    } else {
        Feedback::Face { scale, vertices }
    }
}

fn lp_norm(v: &[f64], p: f64) -> f64 {
    let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if m == 0.0 {
        return 0.0;
    }
    let s: f64 = v.iter().map(|x| (x.abs() / m).powf(p)).sum();
    m * s.powf(1.0 / p)
}

/// All `2^r` sign vectors; bit `i` set means coordinate `i` is `−1`.
fn sign_vectors(r: usize) -> Vec<Vec<f64>> {
    (0..(1usize << r))
        .map(|bits| {
            (0..r)
                .map(|i| if bits & (1 << i) == 0 { 1.0 } else { -1.0 })
                .collect()
        })
        .collect()
}

/// `e_1, −e_1, e_2, −e_2, …`.
fn signed_basis(r: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * r);
    for i in 0..r {
        for s in [1.0, -1.0] {
            let mut v = vec![0.0; r];
            v[i] = s;
            out.push(v);
        }
    }
    out
}

/// Facet normals of `conv(vertices)` for a symmetric spanning vertex set: every
/// hyperplane `n·x = 1` through `r` affinely independent vertices that keeps all
/// vertices on the side `n·x ≤ 1`.
fn enumerate_facets(r: usize, vertices: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = vertices.len();
    let mut facets: Vec<Vec<f64>> = Vec::new();
    if n < r {
        return facets;
    }
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        let mut mat = Vec::with_capacity(r * r);
        for &i in &idx {
            mat.extend_from_slice(&vertices[i]);
        }
        if let Some(normal) = linalg::solve(r, &mat, &vec![1.0; r]) {
            let outside = vertices.iter().any(|v| linalg::dot(&normal, v) > 1.0 + 1e-9);
            let dup = facets.iter().any(|f| {
                f.iter().zip(&normal).all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + a.abs()))
            });
            if !outside && !dup {
                facets.push(normal);
            }
        }
        // next combination
        let mut k = r;
        loop {
            if k == 0 {
                return facets;
            }
            k -= 1;
            if idx[k] < n - r + k {
                idx[k] += 1;
                for t in (k + 1)..r {
                    idx[t] = idx[t - 1] + 1;
                }
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn square() -> NormModel {
        NormModel::polyhedral(vec![
            vec![1.0, 1.0],
            vec![-1.0, 1.0],
            vec![-1.0, -1.0],
            vec![1.0, -1.0],
        ])
        .unwrap()
    }

    #[test]
    fn norm_values() {
        assert_eq!(NormModel::linf(2).norm(&[1.0, -0.5]).unwrap(), 1.0);
        assert_eq!(NormModel::euclidean_identity(2).norm(&[3.0, 4.0]).unwrap(), 5.0);
        let l4 = NormModel::lp(2, 4.0).unwrap();
        assert_abs_diff_eq!(l4.norm(&[1.0, 1.0]).unwrap(), 2f64.powf(0.25), epsilon = 1e-15);
        assert_abs_diff_eq!(square().norm(&[0.3, -0.7]).unwrap(), 0.7, epsilon = 1e-15);
        assert!(NormModel::linf(2).norm(&[1.0]).is_err());
    }

    #[test]
    fn dual_norm_values() {
        assert_abs_diff_eq!(NormModel::linf(2).dual_norm(&[0.3, 0.7]).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(NormModel::euclidean_identity(2).dual_norm(&[3.0, 4.0]).unwrap(), 5.0);
        // max over the four vertices (±1, ±1) of a·v with a = (1, 0)
        let brute = [[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]]
            .iter()
            .map(|v| v[0])
            .fold(f64::MIN, f64::max);
        assert_eq!(square().dual_norm(&[1.0, 0.0]).unwrap(), brute);
    }

    #[test]
    fn invalid_norms() {
        assert!(NormModel::lp(2, 1.0).is_err());
        assert!(NormModel::lp(2, f64::INFINITY).is_err());
        assert!(NormModel::euclidean(2, vec![1.0, 0.0, 0.0, -1.0]).is_err());
        assert!(NormModel::euclidean(2, vec![1.0, 0.5, 0.2, 1.0]).is_err());
        assert!(NormModel::polyhedral(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).is_err());
        assert!(NormModel::polyhedral(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]).is_err());
    }

    #[test]
    fn polyhedral_hexagon_facets() {
        let hex: Vec<Vec<f64>> = (0..6)
            .map(|k| {
                let t = core::f64::consts::PI * k as f64 / 3.0;
                vec![t.cos(), t.sin()]
            })
            .collect();
        let n = NormModel::polyhedral(hex.clone()).unwrap();
        for v in &hex {
            assert_abs_diff_eq!(n.norm(v).unwrap(), 1.0, epsilon = 1e-12);
        }
        // edge midpoint between vertex 0 and 1 is on the sphere
        let mid = [0.5 * (hex[0][0] + hex[1][0]), 0.5 * (hex[0][1] + hex[1][1])];
        assert_abs_diff_eq!(n.norm(&mid).unwrap(), 1.0, epsilon = 1e-12);
        assert!(n.validate_probe(200, 3).is_ok());
    }

    #[test]
    fn subdifferential_examples() {
        let e = NormModel::euclidean_identity(2);
        assert!(e.subdiff_contains(&[1.0, 0.0], &[1.0, 0.0], 1e-12).unwrap());
        let linf = NormModel::linf(2);
        assert!(linf.subdiff_contains(&[1.0, 1.0], &[0.5, 0.5], 1e-12).unwrap());
        assert!(!linf.subdiff_contains(&[1.0, 1.0], &[2.0, 0.0], 1e-12).unwrap());
        // the probe set only samples the inequality, so it can only under-report
        let gap = linf.subdiff_gap(&[1.0, 1.0], &[2.0, 0.0]).unwrap();
        let probe = linf.subdiff_probe_violation(&[1.0, 1.0], &[2.0, 0.0]).unwrap();
        assert!(probe > 0.0 && probe <= gap + 1e-12);
    }

    #[test]
    fn subgradient_brute_force_grid() {
        // Independent check of the linf examples over a dense grid of v.
        let linf = NormModel::linf(2);
        let worst = |a: [f64; 2]| {
            let u = [1.0, 1.0];
            let eu = 0.5;
            let mut w = f64::MIN;
            for i in -200..=200 {
                for j in -200..=200 {
                    let v = [i as f64 / 50.0, j as f64 / 50.0];
                    let nv = linf.norm(&v).unwrap();
                    let lhs = a[0] * (v[0] - u[0]) + a[1] * (v[1] - u[1]);
                    w = w.max(lhs - (0.5 * nv * nv - eu));
                }
            }
            w
        };
        assert!(worst([0.5, 0.5]) <= 1e-12);
        assert!(worst([2.0, 0.0]) > 0.1);
        assert!(linf.subdiff_gap(&[1.0, 1.0], &[2.0, 0.0]).unwrap() >= worst([2.0, 0.0]) - 1e-12);
    }

    #[test]
    fn feedback_examples() {
        let e = NormModel::euclidean_identity(2);
        match e.legendre_feedback(&[0.6, 0.8]).unwrap() {
            Feedback::Unique(u) => {
                assert_abs_diff_eq!(u[0], 0.6, epsilon = 1e-15);
                assert_abs_diff_eq!(u[1], 0.8, epsilon = 1e-15);
            }
            f => panic!("{f:?}"),
        }
        assert_eq!(
            NormModel::linf(2).legendre_feedback(&[0.0, 0.0]).unwrap(),
            Feedback::Unique(HorizontalVector(vec![0.0, 0.0]))
        );
        let linf = NormModel::linf(2);
        let fb = linf.legendre_feedback(&[1.0, 0.0]).unwrap();
        match &fb {
            Feedback::Face { scale, vertices } => {
                assert_eq!(*scale, 1.0);
                assert_eq!(vertices.len(), 2);
                assert!(vertices.iter().all(|v| v[0] == 1.0 && v[1].abs() == 1.0));
            }
            f => panic!("{f:?}"),
        }
        assert_eq!(linf.select(&fb, &[1.0, 0.0], &Selection::Barycenter).0, vec![1.0, 0.0]);
        assert_eq!(
            linf.select(&fb, &[1.0, 0.0], &Selection::LowestIndexVertex).0,
            vec![1.0, -1.0]
        );
        assert_eq!(
            linf.select(&fb, &[1.0, 0.0], &Selection::FixedVector(vec![2.0, 1.0])).0,
            vec![1.0, 0.5]
        );
        // (0, 1) is not on the exposed edge: falls back to the barycenter
        assert_eq!(
            linf.select(&fb, &[1.0, 0.0], &Selection::FixedVector(vec![0.0, 1.0])).0,
            vec![1.0, 0.0]
        );
    }

    #[test]
    fn linf_feedback_grid_brute_force() {
        // max over a grid of a(v) − ½‖v‖∞² for a = (1, 0) is ½, attained on {1} × [−1, 1].
        let mut best = f64::MIN;
        let mut argmax = Vec::new();
        for i in -100..=100 {
            for j in -100..=100 {
                let v = [i as f64 / 50.0, j as f64 / 50.0];
                let n = v[0].abs().max(v[1].abs());
                let val = v[0] - 0.5 * n * n;
                if val > best + 1e-12 {
                    best = val;
                    argmax.clear();
                }
                if (val - best).abs() <= 1e-12 {
                    argmax.push(v);
                }
            }
        }
        assert_abs_diff_eq!(best, 0.5, epsilon = 1e-12);
        assert!(argmax.iter().all(|v| v[0] == 1.0 && v[1].abs() <= 1.0));
        assert_eq!(argmax.len(), 101);
    }

    #[test]
    fn l1_and_polyhedral_faces() {
        let l1 = NormModel::l1(3);
        match l1.legendre_feedback(&[0.5, -0.5, 0.1]).unwrap() {
            Feedback::Face { scale, vertices } => {
                assert_eq!(scale, 0.5);
                assert_eq!(vertices.len(), 2);
            }
            f => panic!("{f:?}"),
        }
        assert!(l1.legendre_feedback(&[0.5, -0.4, 0.1]).unwrap().is_unique());
        let sq = square();
        let fb = sq.legendre_feedback(&[0.0, 2.0]).unwrap();
        assert_eq!(sq.select(&fb, &[0.0, 2.0], &Selection::Barycenter).0, vec![0.0, 2.0]);
    }

    #[test]
    fn strict_convexity() {
        assert!(NormModel::euclidean_identity(2).is_strictly_convex());
        assert!(NormModel::lp(2, 4.0).unwrap().is_strictly_convex());
        assert!(!NormModel::linf(2).is_strictly_convex());
        assert!(!NormModel::l1(3).is_strictly_convex());
        assert!(!square().is_strictly_convex());
        assert!(NormModel::linf(2).strict_convexity_probe(100, 1).is_some());
        assert!(NormModel::l1(3).strict_convexity_probe(100, 1).is_some());
        assert!(NormModel::euclidean_identity(3).strict_convexity_probe(200, 1).is_none());
        assert!(NormModel::lp(2, 4.0).unwrap().strict_convexity_probe(200, 1).is_none());
    }

    #[test]
    fn flat_edges() {
        let e = NormModel::linf(2).flat_edge().unwrap();
        assert_eq!((e.x.0.clone(), e.y.0.clone(), e.eps), (vec![1.0, 0.0], vec![0.0, 1.0], 1.0));
        for n in [NormModel::linf(3), NormModel::l1(2), square()] {
            let e = n.flat_edge().unwrap();
            for c in [-1.0, -0.3, 0.0, 0.6, 1.0] {
                let v: Vec<f64> = e.x.iter().zip(e.y.iter()).map(|(a, b)| a + c * e.eps * b).collect();
                assert_abs_diff_eq!(n.norm(&v).unwrap(), 1.0, epsilon = 1e-12);
            }
        }
        assert!(NormModel::euclidean_identity(2).flat_edge().is_none());
    }

    #[test]
    fn surrogate_gradients_match_finite_differences() {
        let norms = [
            NormModel::euclidean(2, vec![2.0, 0.3, 0.3, 1.0]).unwrap(),
            NormModel::lp(2, 3.0).unwrap(),
            NormModel::linf(2),
            NormModel::l1(2),
            square(),
        ];
        let u = [0.7, -0.4];
        for n in &norms {
            let mut g = [0.0; 2];
            let f0 = n.smooth_sq(&u, 8.0, &mut g);
            assert!(f0 >= n.norm(&u).unwrap().powi(2) - 1e-12);
            for i in 0..2 {
                let h = 1e-6;
                let mut up = u;
                up[i] += h;
                let mut dn = u;
                dn[i] -= h;
                let mut tmp = [0.0; 2];
                let fd = (n.smooth_sq(&up, 8.0, &mut tmp) - n.smooth_sq(&dn, 8.0, &mut tmp)) / (2.0 * h);
                assert_abs_diff_eq!(fd, g[i], epsilon = 1e-6);
            }
        }
    }
}
