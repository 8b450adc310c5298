use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::space::ModeSpace;
use super::state::HybridState;
use crate::error::{Error, Result};

/// Square complex matrix in compressed-sparse-row layout.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl SparseMatrix {
    /// Assemble from (row, col, value) triplets. Duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, C64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|(r, c, _)| *r >= dim || *c >= dim) {
            return Err(Error::InvalidArgument(format!(
                "triplet ({r}, {c}) outside dimension {dim}"
            )));
        }
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        let mut rows_of = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                rows_of.push(r);
                last = Some((r, c));
            }
        }
        let mut keep_cols = Vec::with_capacity(cols.len());
        let mut keep_vals = Vec::with_capacity(vals.len());
        for ((r, c), v) in rows_of.into_iter().zip(cols).zip(vals) {
            if v != C64::new(0.0, 0.0) {
                row_ptr[r + 1] += 1;
                keep_cols.push(c);
                keep_vals.push(v);
            }
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            dim,
            row_ptr,
            cols: keep_cols,
            vals: keep_vals,
        })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            row_ptr: vec![0; dim + 1],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            row_ptr: (0..=dim).collect(),
            cols: (0..dim).collect(),
            vals: vec![C64::new(1.0, 0.0); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Column indices and values stored in row `r`.
    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[C64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    /// Storage slot of entry (r, c), if it is structurally present.
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.cols[a..b].binary_search(&c).ok().map(|p| a + p)
    }

    /// Stored values in slot order; editing them keeps the sparsity pattern.
    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.vals
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let (cols, vals) = self.row(r);
        cols.iter()
            .position(|&x| x == c)
            .map_or(C64::new(0.0, 0.0), |p| vals[p])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    /// y += alpha * A x
    #[inline]
    pub fn mul_vec_add(&self, alpha: C64, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        for (r, yr) in y.iter_mut().enumerate() {
            let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
            if a == b {
                continue;
            }
            let mut acc = C64::new(0.0, 0.0);
            for p in a..b {
                acc += self.vals[p] * x[self.cols[p]];
            }
            *yr += alpha * acc;
        }
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.dim];
        self.mul_vec_add(C64::new(1.0, 0.0), x, &mut y);
        y
    }

    pub fn adjoint(&self) -> Self {
        let t = self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect();
        Self::from_triplets(self.dim, t).expect("indices already validated")
    }

    pub fn scaled(&self, s: C64) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// self + s * other
    pub fn add_scaled(&self, s: C64, other: &SparseMatrix) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::SpaceMismatch);
        }
        let t = self
            .triplets()
            .chain(other.triplets().map(|(r, c, v)| (r, c, s * v)))
            .collect();
        Self::from_triplets(self.dim, t)
    }

    /// Matrix product self * other.
    pub fn matmul(&self, other: &SparseMatrix) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::SpaceMismatch);
        }
        let mut t = Vec::new();
        for r in 0..self.dim {
            let (ac, av) = self.row(r);
            for (&k, &a) in ac.iter().zip(av) {
                let (bc, bv) = other.row(k);
                for (&c, &b) in bc.iter().zip(bv) {
                    t.push((r, c, a * b));
                }
            }
        }
        Self::from_triplets(self.dim, t)
    }

    /// Largest absolute column sum.
    pub fn one_norm(&self) -> f64 {
        let mut sums = vec![0.0; self.dim];
        for (&c, v) in self.cols.iter().zip(&self.vals) {
            sums[c] += v.norm();
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    /// max |A - A^dagger| entry.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (r, c, v) in self.triplets() {
            worst = worst.max((v - self.get(c, r).conj()).norm());
        }
        worst
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn from_dense(m: &DMatrix<C64>, drop_below: f64) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidArgument("matrix must be square".into()));
        }
        let mut t = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)].norm() > drop_below {
                    t.push((r, c, m[(r, c)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), t)
    }
}

/// exp(G) x through a scaled Taylor series.
pub(crate) fn expm_apply(g: &SparseMatrix, x: &[C64]) -> Vec<C64> {
    let norm = g.one_norm();
    let steps = (norm / 0.5).ceil().max(1.0) as usize;
    let inv = 1.0 / steps as f64;
    let mut v = x.to_vec();
    let mut term = vec![C64::new(0.0, 0.0); x.len()];
    let mut next = vec![C64::new(0.0, 0.0); x.len()];
    for _ in 0..steps {
        term.copy_from_slice(&v);
        for k in 1..=80 {
            next.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            g.mul_vec_add(C64::new(inv / k as f64, 0.0), &term, &mut next);
            std::mem::swap(&mut term, &mut next);
            let mut tmax: f64 = 0.0;
            let mut vmax: f64 = 0.0;
            for (vi, ti) in v.iter_mut().zip(&term) {
                *vi += *ti;
                tmax = tmax.max(ti.norm());
                vmax = vmax.max(vi.norm());
            }
            if tmax <= 1e-18 * vmax.max(1e-300) {
                break;
            }
        }
    }
    v
}

#[derive(Clone, Debug)]
enum OpKind {
    Sparse(Arc<SparseMatrix>),
    /// Factors in written order; the rightmost acts first.
    Product(Vec<LinearOperator>),
    Sum(Vec<(C64, LinearOperator)>),
    /// exp(G) for a sparse generator G.
    Exp(Arc<SparseMatrix>),
}

/// Operator on a [`ModeSpace`]: either an explicit sparse matrix or a
/// composition tree applied matrix-free.
#[derive(Clone, Debug)]
pub struct LinearOperator {
    space: ModeSpace,
    kind: OpKind,
}

impl LinearOperator {
    pub fn from_sparse(space: &ModeSpace, m: SparseMatrix) -> Result<Self> {
        if m.dim() != space.dim() {
            return Err(Error::SpaceMismatch);
        }
        Ok(Self {
            space: space.clone(),
            kind: OpKind::Sparse(Arc::new(m)),
        })
    }

    pub fn identity(space: &ModeSpace) -> Self {
        Self {
            space: space.clone(),
            kind: OpKind::Sparse(Arc::new(SparseMatrix::identity(space.dim()))),
        }
    }

    /// exp(G), applied by scaled Taylor expansion without forming the matrix.
    pub fn exp_of(space: &ModeSpace, generator: SparseMatrix) -> Result<Self> {
        if generator.dim() != space.dim() {
            return Err(Error::SpaceMismatch);
        }
        Ok(Self {
            space: space.clone(),
            kind: OpKind::Exp(Arc::new(generator)),
        })
    }

    /// Product `factors[0] * factors[1] * ...`; the last factor acts first.
    pub fn product(space: &ModeSpace, factors: Vec<LinearOperator>) -> Result<Self> {
        if factors.iter().any(|f| !f.space.same_as(space)) {
            return Err(Error::SpaceMismatch);
        }
        if factors.is_empty() {
            return Ok(Self::identity(space));
        }
        Ok(Self {
            space: space.clone(),
            kind: OpKind::Product(factors),
        })
    }

    pub fn linear_combination(space: &ModeSpace, terms: Vec<(C64, LinearOperator)>) -> Result<Self> {
        if terms.iter().any(|(_, f)| !f.space.same_as(space)) {
            return Err(Error::SpaceMismatch);
        }
        Ok(Self {
            space: space.clone(),
            kind: OpKind::Sum(terms),
        })
    }

    /// `self * other` (other acts first).
    pub fn compose(&self, other: &LinearOperator) -> Result<Self> {
        Self::product(&self.space, vec![self.clone(), other.clone()])
    }

    pub fn plus(&self, other: &LinearOperator) -> Result<Self> {
        let one = C64::new(1.0, 0.0);
        Self::linear_combination(&self.space, vec![(one, self.clone()), (one, other.clone())])
    }

    pub fn scaled(&self, s: C64) -> Self {
        match &self.kind {
            OpKind::Sparse(m) => Self {
                space: self.space.clone(),
                kind: OpKind::Sparse(Arc::new(m.scaled(s))),
            },
            _ => Self {
                space: self.space.clone(),
                kind: OpKind::Sum(vec![(s, self.clone())]),
            },
        }
    }

    pub fn space(&self) -> &ModeSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn as_sparse(&self) -> Option<&SparseMatrix> {
        match &self.kind {
            OpKind::Sparse(m) => Some(m),
            _ => None,
        }
    }

    pub fn adjoint(&self) -> Self {
        let kind = match &self.kind {
            OpKind::Sparse(m) => OpKind::Sparse(Arc::new(m.adjoint())),
            OpKind::Product(fs) => OpKind::Product(fs.iter().rev().map(|f| f.adjoint()).collect()),
            OpKind::Sum(ts) => OpKind::Sum(ts.iter().map(|(c, f)| (c.conj(), f.adjoint())).collect()),
            OpKind::Exp(g) => OpKind::Exp(Arc::new(g.adjoint())),
        };
        Self {
            space: self.space.clone(),
            kind,
        }
    }

    /// Raw amplitude-vector application.
    pub fn apply_vec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.dim(), "vector length does not match operator");
        match &self.kind {
            OpKind::Sparse(m) => m.mul_vec(x),
            OpKind::Product(fs) => {
                let mut v = x.to_vec();
                for f in fs.iter().rev() {
                    v = f.apply_vec(&v);
                }
                v
            }
            OpKind::Sum(ts) => {
                let mut out = vec![C64::new(0.0, 0.0); x.len()];
                for (c, f) in ts {
                    for (o, y) in out.iter_mut().zip(f.apply_vec(x)) {
                        *o += c * y;
                    }
                }
                out
            }
            OpKind::Exp(g) => expm_apply(g, x),
        }
    }

    pub fn apply(&self, state: &HybridState) -> Result<HybridState> {
        if !state.space().same_as(&self.space) {
            return Err(Error::SpaceMismatch);
        }
        HybridState::new(&self.space, self.apply_vec(state.amplitudes()))
    }

    /// Explicit sparse form. Exponentials are materialized column by column.
    pub fn to_sparse(&self) -> SparseMatrix {
        match &self.kind {
            OpKind::Sparse(m) => (**m).clone(),
            OpKind::Product(fs) => {
                let mut acc = SparseMatrix::identity(self.dim());
                for f in fs {
                    acc = acc.matmul(&f.to_sparse()).expect("same dimension");
                }
                acc
            }
            OpKind::Sum(ts) => {
                let mut acc = SparseMatrix::zero(self.dim());
                for (c, f) in ts {
                    acc = acc.add_scaled(*c, &f.to_sparse()).expect("same dimension");
                }
                acc
            }
            OpKind::Exp(g) => {
                let d = self.dim();
                let mut t = Vec::new();
                let mut e = vec![C64::new(0.0, 0.0); d];
                for c in 0..d {
                    e[c] = C64::new(1.0, 0.0);
                    for (r, v) in expm_apply(g, &e).into_iter().enumerate() {
                        if v.norm() > 1e-16 {
                            t.push((r, c, v));
                        }
                    }
                    e[c] = C64::new(0.0, 0.0);
                }
                SparseMatrix::from_triplets(d, t).expect("indices in range")
            }
        }
    }

    /// Dense matrix obtained by applying the operator to every basis vector.
    pub fn to_dense(&self) -> DMatrix<C64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        let mut e = vec![C64::new(0.0, 0.0); d];
        for c in 0..d {
            e[c] = C64::new(1.0, 0.0);
            for (r, v) in self.apply_vec(&e).into_iter().enumerate() {
                m[(r, c)] = v;
            }
            e[c] = C64::new(0.0, 0.0);
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let m = SparseMatrix::from_triplets(
            3,
            vec![
                (0, 1, c(1.0, 0.0)),
                (0, 1, c(2.0, 0.0)),
                (2, 2, c(1.0, 0.0)),
                (2, 2, c(-1.0, 0.0)),
            ],
        )
        .unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 1), c(3.0, 0.0));
        assert!(SparseMatrix::from_triplets(2, vec![(2, 0, c(1.0, 0.0))]).is_err());
    }

    #[test]
    fn matmul_matches_dense() {
        let a = SparseMatrix::from_triplets(
            3,
            vec![
                (0, 1, c(1.0, 2.0)),
                (1, 2, c(0.5, 0.0)),
                (2, 0, c(0.0, -1.0)),
                (1, 1, c(3.0, 0.0)),
            ],
        )
        .unwrap();
        let b = a.adjoint().scaled(c(0.0, 2.0));
        let sparse = a.matmul(&b).unwrap().to_dense();
        let dense = a.to_dense() * b.to_dense();
        assert!((sparse - dense).norm() < 1e-14);
    }

    #[test]
    fn exp_of_rotation_generator() {
        // exp(-i t sigma_x) on a spin-only space
        let space = ModeSpace::spin_only();
        let t = 0.7;
        let g = SparseMatrix::from_triplets(2, vec![(0, 1, c(0.0, -t)), (1, 0, c(0.0, -t))]).unwrap();
        let u = LinearOperator::exp_of(&space, g).unwrap();
        let col = u.apply_vec(&[c(1.0, 0.0), c(0.0, 0.0)]);
        assert!((col[0] - c(t.cos(), 0.0)).norm() < 1e-15);
        assert!((col[1] - c(0.0, -t.sin())).norm() < 1e-15);
        let back = u.adjoint().apply_vec(&col);
        assert!((back[0] - c(1.0, 0.0)).norm() < 1e-15);
    }
}
