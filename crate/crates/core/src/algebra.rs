//! Step-2 stratified Lie algebras and their groups in exponential coordinates.
//!
//! A point is stored as `(x, z)` with `x ∈ V1 = ℝ^r` and `z ∈ V2 = ℝ^m`. In step 2
//! the Baker–Campbell–Hausdorff series stops after the first bracket, so
//!
//! ```text
//! (x, z) · (x', z') = (x + x', z + z' + ½ [x, x'])
//! ```
//!
//! is exact and exp/log are the identity on coordinates.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_positive, Error, Result};
use crate::linalg;

/// Relative singular-value cutoff for the stratification rank test.
pub const RANK_REL_TOL: f64 = 1e-10;

/// Components of a vector in the horizontal layer `V1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HorizontalVector(pub Vec<f64>);

impl HorizontalVector {
    pub fn zeros(r: usize) -> Self {
        Self(vec![0.0; r])
    }

    /// The `i`-th basis vector of `ℝ^r` (zero-based).
    pub fn basis(r: usize, i: usize) -> Self {
        let mut v = vec![0.0; r];
        v[i] = 1.0;
        Self(v)
    }
}

impl Deref for HorizontalVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for HorizontalVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for HorizontalVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// A group element in exponential coordinates of the first kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPoint {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

impl GroupPoint {
    pub fn new(x: Vec<f64>, z: Vec<f64>) -> Self {
        Self { x, z }
    }

    pub fn identity(r: usize, m: usize) -> Self {
        Self {
            x: vec![0.0; r],
            z: vec![0.0; m],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.z).all(|v| v.is_finite())
    }

    /// Largest coordinate difference, horizontal and vertical alike.
    pub fn max_abs_diff(&self, other: &GroupPoint) -> f64 {
        self.x
            .iter()
            .zip(&other.x)
            .chain(self.z.iter().zip(&other.z))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// One entry of the bracket table: `[X_i, X_j]` has coefficient `coeff` on `Z_k`.
///
/// Indices are one-based, as in group definition files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketEntry {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub coeff: f64,
}

/// Raw, unvalidated structure tensor `c[k][i][j]` with `[X_i, X_j] = Σ_k c[k][i][j] Z_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureTensor {
    rank: usize,
    vdim: usize,
    c: Vec<f64>,
}

/// Outcome of [`StructureTensor::validate_stratified`].
#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub ok: bool,
    pub diagnostic: Option<String>,
}

impl StructureTensor {
    /// Dense tensor laid out as `c[(k * r + i) * r + j]` (zero-based).
    pub fn from_dense(rank: usize, vdim: usize, c: Vec<f64>) -> Result<Self> {
        if rank == 0 {
            return Err(Error::InvalidAlgebra("rank must be positive".into()));
        }
        check_dim("structure tensor", vdim * rank * rank, c.len())?;
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidAlgebra("non-finite structure constant".into()));
        }
        Ok(Self { rank, vdim, c })
    }

    /// Builds the tensor from a bracket table. An entry `(i, j)` whose mirror
    /// `(j, i)` is not listed for the same `k` is skew-completed.
    pub fn from_brackets(rank: usize, vdim: usize, entries: &[BracketEntry]) -> Result<Self> {
        let mut c = vec![0.0; vdim * rank * rank];
        let mut explicit = vec![false; vdim * rank * rank];
        for e in entries {
            if e.i == 0 || e.j == 0 || e.k == 0 || e.i > rank || e.j > rank || e.k > vdim {
                return Err(Error::InvalidAlgebra(format!(
                    "bracket index out of range: i={}, j={}, k={} (rank {rank}, vdim {vdim})",
                    e.i, e.j, e.k
                )));
            }
            let idx = ((e.k - 1) * rank + (e.i - 1)) * rank + (e.j - 1);
            c[idx] = e.coeff;
            explicit[idx] = true;
        }
        for k in 0..vdim {
            for i in 0..rank {
                for j in 0..rank {
                    let idx = (k * rank + i) * rank + j;
                    let mirror = (k * rank + j) * rank + i;
                    if explicit[idx] && !explicit[mirror] {
                        c[mirror] = -c[idx];
                    }
                }
            }
        }
        Self::from_dense(rank, vdim, c)
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn vdim(&self) -> usize {
        self.vdim
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.c[(k * self.rank + i) * self.rank + j]
    }

    /// Checks skew-symmetry and that the brackets `[X_i, X_j]`, `i < j`, span `V2`.
    pub fn validate_stratified(&self) -> Validation {
        let r = self.rank;
        let m = self.vdim;
        let pairs = r * (r - 1) / 2;
        if m > pairs {
            return Validation {
                ok: false,
                diagnostic: Some(format!(
                    "vdim {m} exceeds r(r-1)/2 = {pairs}; V2 cannot be spanned by brackets"
                )),
            };
        }
        for k in 0..m {
            for i in 0..r {
                for j in i..r {
                    let a = self.get(k, i, j);
                    let b = self.get(k, j, i);
                    if a != -b {
                        return Validation {
                            ok: false,
                            diagnostic: Some(format!(
                                "skew-symmetry fails: c[{}][{}][{}] = {a}, c[{}][{}][{}] = {b}",
                                k + 1,
                                i + 1,
                                j + 1,
                                k + 1,
                                j + 1,
                                i + 1
                            )),
                        };
                    }
                }
            }
        }
        if m == 0 {
            return Validation {
                ok: true,
                diagnostic: None,
            };
        }
        let mut mat = Vec::with_capacity(m * pairs);
        for k in 0..m {
            for i in 0..r {
                for j in (i + 1)..r {
                    mat.push(self.get(k, i, j));
                }
            }
        }
        let rk = linalg::rank(m, pairs, &mat, RANK_REL_TOL);
        if rk < m {
            return Validation {
                ok: false,
                diagnostic: Some(format!(
                    "[V1, V1] has dimension {rk} < vdim {m}; V2 is not generated by V1"
                )),
            };
        }
        Validation {
            ok: true,
            diagnostic: None,
        }
    }
}

/// A validated step-2 stratified Lie algebra `V1 ⊕ V2`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTwoAlgebra {
    tensor: StructureTensor,
}

impl TryFrom<StructureTensor> for StepTwoAlgebra {
    type Error = Error;

    fn try_from(tensor: StructureTensor) -> Result<Self> {
        let v = tensor.validate_stratified();
        if v.ok {
            Ok(Self { tensor })
        } else {
            Err(Error::InvalidAlgebra(v.diagnostic.unwrap_or_default()))
        }
    }
}

impl StepTwoAlgebra {
    pub fn from_brackets(rank: usize, vdim: usize, entries: &[BracketEntry]) -> Result<Self> {
        StructureTensor::from_brackets(rank, vdim, entries)?.try_into()
    }

    /// The Heisenberg group `H^n`: basis `x_1..x_n, y_1..y_n`, `[x_i, y_i] = Z`.
    pub fn heisenberg(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidAlgebra("heisenberg:n needs n >= 1".into()));
        }
        let entries: Vec<_> = (1..=n)
            .map(|i| BracketEntry {
                i,
                j: n + i,
                k: 1,
                coeff: 1.0,
            })
            .collect();
        Self::from_brackets(2 * n, 1, &entries)
    }

    /// The free step-2 group of rank `r`; `V2` has basis `[X_i, X_j]`, `i < j`, in
    /// lexicographic order.
    pub fn free_step_two(r: usize) -> Result<Self> {
        if r < 2 {
            return Err(Error::InvalidAlgebra("free2:r needs r >= 2".into()));
        }
        let mut entries = Vec::new();
        let mut k = 0;
        for i in 1..=r {
            for j in (i + 1)..=r {
                k += 1;
                entries.push(BracketEntry { i, j, k, coeff: 1.0 });
            }
        }
        Self::from_brackets(r, k, &entries)
    }

    /// Resolves `"heisenberg:n"` and `"free2:r"`.
    pub fn builtin(name: &str) -> Result<Self> {
        let (family, arg) = name
            .split_once(':')
            .ok_or_else(|| Error::InvalidAlgebra(format!("unknown group `{name}`")))?;
        let n: usize = arg
            .trim()
            .parse()
            .map_err(|_| Error::InvalidAlgebra(format!("bad size in `{name}`")))?;
        match family.trim() {
            "heisenberg" => Self::heisenberg(n),
            "free2" => Self::free_step_two(n),
            _ => Err(Error::InvalidAlgebra(format!("unknown group `{name}`"))),
        }
    }

    pub fn rank(&self) -> usize {
        self.tensor.rank
    }

    pub fn vdim(&self) -> usize {
        self.tensor.vdim
    }

    pub fn tensor(&self) -> &StructureTensor {
        &self.tensor
    }

    /// `c[k][i][j]`, zero-based.
    #[inline]
    pub fn structure_constant(&self, k: usize, i: usize, j: usize) -> f64 {
        self.tensor.get(k, i, j)
    }

    /// Bracket table with one-based indices, listing only `i < j` and nonzero entries.
    pub fn bracket_entries(&self) -> Vec<BracketEntry> {
        let mut out = Vec::new();
        for k in 0..self.vdim() {
            for i in 0..self.rank() {
                for j in (i + 1)..self.rank() {
                    let coeff = self.structure_constant(k, i, j);
                    if coeff != 0.0 {
                        out.push(BracketEntry {
                            i: i + 1,
                            j: j + 1,
                            k: k + 1,
                            coeff,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn identity(&self) -> GroupPoint {
        GroupPoint::identity(self.rank(), self.vdim())
    }

    /// `[X, Y] ∈ V2`.
    pub fn bracket(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        check_dim("bracket argument", self.rank(), x.len())?;
        check_dim("bracket argument", self.rank(), y.len())?;
        let mut out = vec![0.0; self.vdim()];
        self.bracket_acc(x, y, 1.0, &mut out);
        Ok(out)
    }

    /// `out += scale * [x, y]`, no dimension checks.
    #[inline]
    pub(crate) fn bracket_acc(&self, x: &[f64], y: &[f64], scale: f64, out: &mut [f64]) {
        let r = self.rank();
        for (k, o) in out.iter_mut().enumerate() {
            let block = &self.tensor.c[k * r * r..(k + 1) * r * r];
            let mut s = 0.0;
            for i in 0..r {
                if x[i] == 0.0 {
                    continue;
                }
                let row = &block[i * r..(i + 1) * r];
                s += x[i] * linalg::dot(row, y);
            }
            *o += scale * s;
        }
    }

    fn check_point(&self, g: &GroupPoint) -> Result<()> {
        check_dim("group point x", self.rank(), g.x.len())?;
        check_dim("group point z", self.vdim(), g.z.len())
    }

    /// Exact step-2 BCH product.
    pub fn multiply(&self, g: &GroupPoint, h: &GroupPoint) -> Result<GroupPoint> {
        self.check_point(g)?;
        self.check_point(h)?;
        Ok(self.multiply_unchecked(g, h))
    }

    pub(crate) fn multiply_unchecked(&self, g: &GroupPoint, h: &GroupPoint) -> GroupPoint {
        let x = g.x.iter().zip(&h.x).map(|(a, b)| a + b).collect();
        let mut z: Vec<f64> = g.z.iter().zip(&h.z).map(|(a, b)| a + b).collect();
        self.bracket_acc(&g.x, &h.x, 0.5, &mut z);
        GroupPoint { x, z }
    }

    /// Right-multiplies `g` in place by `exp(step)` for a horizontal `step`.
    #[inline]
    pub(crate) fn right_mul_exp(&self, g: &mut GroupPoint, step: &[f64]) {
        let (x, z) = (&mut g.x, &mut g.z);
        self.bracket_acc(x, step, 0.5, z);
        for (a, b) in x.iter_mut().zip(step) {
            *a += b;
        }
    }

    pub fn inverse(&self, g: &GroupPoint) -> Result<GroupPoint> {
        self.check_point(g)?;
        Ok(GroupPoint {
            x: g.x.iter().map(|v| -v).collect(),
            z: g.z.iter().map(|v| -v).collect(),
        })
    }

    /// `δ_λ(x, z) = (λ x, λ² z)`.
    pub fn dilate(&self, lambda: f64, g: &GroupPoint) -> Result<GroupPoint> {
        check_positive("dilation factor", lambda)?;
        self.check_point(g)?;
        Ok(dilate_unchecked(lambda, g))
    }

    /// `exp(X)` for a horizontal `X`, i.e. the point `(X, 0)`.
    pub fn exp_horizontal(&self, x: &[f64]) -> Result<GroupPoint> {
        check_dim("horizontal vector", self.rank(), x.len())?;
        Ok(GroupPoint {
            x: x.to_vec(),
            z: vec![0.0; self.vdim()],
        })
    }

    /// `g⁻¹ h`.
    pub fn difference(&self, g: &GroupPoint, h: &GroupPoint) -> Result<GroupPoint> {
        let gi = self.inverse(g)?;
        self.multiply(&gi, h)
    }
}

pub(crate) fn dilate_unchecked(lambda: f64, g: &GroupPoint) -> GroupPoint {
    let l2 = lambda * lambda;
    GroupPoint {
        x: g.x.iter().map(|v| lambda * v).collect(),
        z: g.z.iter().map(|v| l2 * v).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h1() -> StepTwoAlgebra {
        StepTwoAlgebra::heisenberg(1).unwrap()
    }

    fn p(x: &[f64], z: &[f64]) -> GroupPoint {
        GroupPoint::new(x.to_vec(), z.to_vec())
    }

    #[test]
    fn heisenberg_bracket_reads_structure_constant() {
        assert_eq!(h1().bracket(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), vec![1.0]);
        assert_eq!(h1().bracket(&[0.3, -2.0], &[0.3, -2.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn free_rank_three_bracket() {
        let a = StepTwoAlgebra::free_step_two(3).unwrap();
        // [e1+e2, e2+e3] = [e1,e2] + [e1,e3] + [e2,e3]
        let b = a.bracket(&[1.0, 1.0, 0.0], &[0.0, 1.0, 1.0]).unwrap();
        assert_eq!(b, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn bracket_dimension_mismatch() {
        assert!(matches!(
            h1().bracket(&[1.0], &[0.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn bch_products() {
        let a = h1();
        let g = a.multiply(&p(&[1.0, 0.0], &[0.0]), &p(&[0.0, 1.0], &[0.0])).unwrap();
        assert_eq!(g, p(&[1.0, 1.0], &[0.5]));
        let e = a.identity();
        assert_eq!(a.multiply(&g, &e).unwrap(), g);
        let gg = a.multiply(&p(&[1.0, 0.0], &[0.0]), &p(&[1.0, 0.0], &[0.0])).unwrap();
        assert_eq!(gg, p(&[2.0, 0.0], &[0.0]));
    }

    #[test]
    fn inverse_negates() {
        let a = h1();
        assert_eq!(a.inverse(&p(&[1.0, 1.0], &[0.5])).unwrap(), p(&[-1.0, -1.0], &[-0.5]));
        assert_eq!(a.inverse(&a.identity()).unwrap(), a.identity());
    }

    #[test]
    fn dilation_examples() {
        let a = h1();
        let g = p(&[1.0, 1.0], &[0.5]);
        assert_eq!(a.dilate(2.0, &g).unwrap(), p(&[2.0, 2.0], &[2.0]));
        assert_eq!(a.dilate(1.0, &g).unwrap(), g);
        assert!(a.dilate(0.0, &g).is_err());
        assert!(a.dilate(-1.0, &g).is_err());
    }

    #[test]
    fn validate_examples() {
        assert!(h1().tensor().validate_stratified().ok);
        // r=2, m=2: the second vertical direction is never reached.
        let t = StructureTensor::from_brackets(
            2,
            2,
            &[BracketEntry {
                i: 1,
                j: 2,
                k: 1,
                coeff: 1.0,
            }],
        )
        .unwrap();
        let v = t.validate_stratified();
        assert!(!v.ok);
        assert!(v.diagnostic.unwrap().contains("vdim"));
        // Non-skew: c[1][1][2] = c[1][2][1] = 1.
        let t = StructureTensor::from_dense(2, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let v = t.validate_stratified();
        assert!(!v.ok);
        assert!(v.diagnostic.unwrap().contains("skew"));
        assert!(StepTwoAlgebra::try_from(t).is_err());
    }

    #[test]
    fn explicit_mirror_entries_are_kept() {
        let e = [
            BracketEntry { i: 1, j: 2, k: 1, coeff: 1.0 },
            BracketEntry { i: 2, j: 1, k: 1, coeff: 1.0 },
        ];
        assert!(StepTwoAlgebra::from_brackets(2, 1, &e).is_err());
    }

    #[test]
    fn builtins_are_stratified() {
        for name in ["heisenberg:1", "heisenberg:2", "heisenberg:3", "free2:2", "free2:3", "free2:4"] {
            let a = StepTwoAlgebra::builtin(name).unwrap();
            assert!(a.tensor().validate_stratified().ok, "{name}");
        }
        assert_eq!(StepTwoAlgebra::builtin("free2:4").unwrap().vdim(), 6);
        assert!(StepTwoAlgebra::builtin("sl2:2").is_err());
        assert!(StepTwoAlgebra::builtin("heisenberg").is_err());
    }

    #[test]
    fn rank_test_is_scale_invariant() {
        let e = [BracketEntry { i: 1, j: 2, k: 1, coeff: 1e-20 }];
        assert!(StepTwoAlgebra::from_brackets(2, 1, &e).is_ok());
    }
}
