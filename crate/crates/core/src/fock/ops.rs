//! Primitive mode and spin operators.

use num_complex::Complex64 as C64;

use super::operator::{LinearOperator, SparseMatrix};
use super::space::ModeSpace;
use crate::error::{Error, Result};

/// Spin operators acting on the qubit factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpinOp {
    X,
    Y,
    Z,
    /// sigma_+ = |e><g|
    Raise,
    /// sigma_- = |g><e|
    Lower,
    /// |g><g|
    ProjectG,
    /// |e><e|
    ProjectE,
}

impl SpinOp {
    /// 2x2 matrix in the (g, e) basis.
    pub fn matrix(self) -> [[C64; 2]; 2] {
        let o = C64::new(0.0, 0.0);
        let l = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        match self {
            SpinOp::X => [[o, l], [l, o]],
            SpinOp::Y => [[o, -i], [i, o]],
            SpinOp::Z => [[-l, o], [o, l]],
            SpinOp::Raise => [[o, o], [l, o]],
            SpinOp::Lower => [[o, l], [o, o]],
            SpinOp::ProjectG => [[l, o], [o, o]],
            SpinOp::ProjectE => [[o, o], [o, l]],
        }
    }
}

/// Sparse matrix of a purely motional map. `f` edits a copy of the
/// occupation label in place and returns the matrix element, or `None` when
/// the column is annihilated. Targets outside the space are dropped
/// (hard truncation).
pub(crate) fn motional_map(space: &ModeSpace, f: impl Fn(&mut [u8]) -> Option<C64>) -> SparseMatrix {
    let md = space.motional_dim();
    let mut per_block = Vec::new();
    let mut label = vec![0u8; space.num_modes()];
    for m in 0..md {
        label.copy_from_slice(space.motional_label(m));
        if let Some(v) = f(&mut label) {
            if let Some(t) = space.motional_index(&label) {
                per_block.push((t, m, v));
            }
        }
    }
    let mut t = Vec::with_capacity(per_block.len() * space.spin_dim());
    for s in 0..space.spin_dim() {
        t.extend(
            per_block
                .iter()
                .map(|&(r, c, v)| (space.join(s, r), space.join(s, c), v)),
        );
    }
    SparseMatrix::from_triplets(space.dim(), t).expect("indices in range")
}

/// Spin matrix tensored with the motional identity.
pub(crate) fn spin_map(space: &ModeSpace, m2: [[C64; 2]; 2]) -> Result<SparseMatrix> {
    if !space.has_spin() {
        return Err(Error::NoSpin);
    }
    let md = space.motional_dim();
    let mut t = Vec::new();
    for (r, row) in m2.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            if v != C64::new(0.0, 0.0) {
                t.extend((0..md).map(|m| (space.join(r, m), space.join(c, m), v)));
            }
        }
    }
    SparseMatrix::from_triplets(space.dim(), t)
}

fn shift(label: &mut [u8], idx: usize, up: bool) -> Option<u8> {
    let n = label[idx];
    if up {
        label[idx] = n + 1;
        Some(n)
    } else if n == 0 {
        None
    } else {
        label[idx] = n - 1;
        Some(n)
    }
}

pub(crate) fn lower_sparse(space: &ModeSpace, mode: usize) -> Result<SparseMatrix> {
    space.check_mode(mode)?;
    Ok(motional_map(space, |l| {
        shift(l, mode - 1, false).map(|n| C64::new((n as f64).sqrt(), 0.0))
    }))
}

pub(crate) fn raise_sparse(space: &ModeSpace, mode: usize) -> Result<SparseMatrix> {
    space.check_mode(mode)?;
    Ok(motional_map(space, |l| {
        shift(l, mode - 1, true).map(|n| C64::new((n as f64 + 1.0).sqrt(), 0.0))
    }))
}

pub(crate) fn number_sparse(space: &ModeSpace, mode: usize) -> Result<SparseMatrix> {
    space.check_mode(mode)?;
    Ok(motional_map(space, |l| {
        let n = l[mode - 1];
        (n > 0).then(|| C64::new(n as f64, 0.0))
    }))
}

/// Ladder annihilation operator of `mode` (1-based).
pub fn ladder_lower(space: &ModeSpace, mode: usize) -> Result<LinearOperator> {
    LinearOperator::from_sparse(space, lower_sparse(space, mode)?)
}

/// Ladder creation operator; maps the cutoff occupation to zero.
pub fn ladder_raise(space: &ModeSpace, mode: usize) -> Result<LinearOperator> {
    LinearOperator::from_sparse(space, raise_sparse(space, mode)?)
}

pub fn number(space: &ModeSpace, mode: usize) -> Result<LinearOperator> {
    LinearOperator::from_sparse(space, number_sparse(space, mode)?)
}

/// Sum of all mode number operators.
pub fn total_number(space: &ModeSpace) -> LinearOperator {
    let m = motional_map(space, |l| {
        let n: usize = l.iter().map(|&o| o as usize).sum();
        (n > 0).then(|| C64::new(n as f64, 0.0))
    });
    LinearOperator::from_sparse(space, m).expect("same space")
}

/// Arithmetic subtraction |n+1> -> |n>, |0> -> 0, with no sqrt(n) factor.
pub fn arithmetic_lower(space: &ModeSpace, mode: usize) -> Result<LinearOperator> {
    space.check_mode(mode)?;
    let m = motional_map(space, |l| shift(l, mode - 1, false).map(|_| C64::new(1.0, 0.0)));
    LinearOperator::from_sparse(space, m)
}

/// Arithmetic addition |n> -> |n+1>, truncated at the cutoff.
pub fn arithmetic_raise(space: &ModeSpace, mode: usize) -> Result<LinearOperator> {
    Ok(arithmetic_lower(space, mode)?.adjoint())
}

/// |0><0| on `mode`, identity elsewhere.
pub fn vacuum_projector(space: &ModeSpace, mode: usize) -> Result<LinearOperator> {
    space.check_mode(mode)?;
    let m = motional_map(space, |l| (l[mode - 1] == 0).then_some(C64::new(1.0, 0.0)));
    LinearOperator::from_sparse(space, m)
}

pub fn spin_op(space: &ModeSpace, which: SpinOp) -> Result<LinearOperator> {
    LinearOperator::from_sparse(space, spin_map(space, which.matrix())?)
}
