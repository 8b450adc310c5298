use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::operator::SparseMatrix;
use super::space::{ModeSpace, Spin, Subsystem};
use super::state::HybridState;
use crate::error::{Error, Result};

/// Dense density operator, row-major `dim x dim`.
#[derive(Clone, Debug)]
pub struct DensityOperator {
    space: ModeSpace,
    data: Vec<C64>,
}

pub(crate) struct Bipartition {
    pub reduced: ModeSpace,
    /// reduced-space index of every full-space index
    pub kept: Vec<usize>,
    /// full-space indices sharing the same traced-out label
    pub groups: Vec<Vec<usize>>,
}

/// Index bookkeeping for tracing out the complement of `keep`. The reduced
/// space orders its factors as the full one does (spin first, then the kept
/// modes in ascending order, renumbered from 1) and carries no total cap.
pub(crate) fn bipartition(space: &ModeSpace, keep: &[Subsystem]) -> Result<Bipartition> {
    if keep.is_empty() {
        return Err(Error::InvalidArgument("keep set is empty".into()));
    }
    let mut keep_spin = false;
    let mut modes = Vec::new();
    for &s in keep {
        match s {
            Subsystem::Spin if !space.has_spin() => return Err(Error::NoSpin),
            Subsystem::Spin => keep_spin = true,
            Subsystem::Mode(m) => {
                space.check_mode(m)?;
                modes.push(m - 1);
            }
        }
    }
    modes.sort_unstable();
    modes.dedup();
    let reduced = if modes.is_empty() {
        ModeSpace::spin_only()
    } else {
        ModeSpace::build(
            modes.len(),
            space.cutoff(),
            keep_spin,
            None,
            super::space::DEFAULT_DIM_LIMIT,
        )?
    };
    let traced: Vec<usize> = (0..space.num_modes()).filter(|m| !modes.contains(m)).collect();
    let radix = space.cutoff() + 1;
    let mut kept = Vec::with_capacity(space.dim());
    let mut env: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut sub = vec![0u8; modes.len()];
    for i in 0..space.dim() {
        let (s, m) = space.split(i);
        let label = space.motional_label(m);
        for (k, &mode) in modes.iter().enumerate() {
            sub[k] = label[mode];
        }
        let r = reduced.motional_index(&sub).expect("reduced space is uncapped");
        kept.push(if keep_spin { reduced.join(s, r) } else { r });
        let mut key = if keep_spin { 0 } else { s };
        for &t in &traced {
            key = key * radix + label[t] as usize;
        }
        env.entry(key).or_default().push(i);
    }
    Ok(Bipartition {
        reduced,
        kept,
        groups: env.into_values().collect(),
    })
}

impl DensityOperator {
    pub fn new(space: &ModeSpace, data: Vec<C64>) -> Result<Self> {
        let d = space.dim();
        if data.len() != d * d {
            return Err(Error::InvalidArgument(format!(
                "{} entries for a {d}x{d} density operator",
                data.len()
            )));
        }
        Ok(Self {
            space: space.clone(),
            data,
        })
    }

    pub fn zeros(space: &ModeSpace) -> Self {
        let d = space.dim();
        Self {
            space: space.clone(),
            data: vec![C64::new(0.0, 0.0); d * d],
        }
    }

    /// |psi><psi| (keeps the norm of psi).
    pub fn from_pure(psi: &HybridState) -> Self {
        let a = psi.amplitudes();
        let d = a.len();
        let mut data = vec![C64::new(0.0, 0.0); d * d];
        for (r, ar) in a.iter().enumerate() {
            if *ar == C64::new(0.0, 0.0) {
                continue;
            }
            for (c, ac) in a.iter().enumerate() {
                data[r * d + c] = ar * ac.conj();
            }
        }
        Self {
            space: psi.space().clone(),
            data,
        }
    }

    pub fn from_dense(space: &ModeSpace, m: &DMatrix<C64>) -> Result<Self> {
        let d = space.dim();
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::SpaceMismatch);
        }
        Ok(Self {
            space: space.clone(),
            data: (0..d * d).map(|k| m[(k / d, k % d)]).collect(),
        })
    }

    pub fn space(&self) -> &ModeSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.dim() + c]
    }

    pub fn trace(&self) -> C64 {
        let d = self.dim();
        (0..d).map(|k| self.data[k * d + k]).sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            space: self.space.clone(),
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// U rho U† for a sparse `u` on the same space.
    pub fn conjugated(&self, u: &SparseMatrix) -> Result<Self> {
        let d = self.dim();
        if u.dim() != d {
            return Err(Error::SpaceMismatch);
        }
        let zero = C64::new(0.0, 0.0);
        let mut x = vec![zero; d * d];
        for r in 0..d {
            let (cols, vals) = u.row(r);
            let dst = &mut x[r * d..(r + 1) * d];
            for (&k, &v) in cols.iter().zip(vals) {
                for (o, s) in dst.iter_mut().zip(&self.data[k * d..(k + 1) * d]) {
                    *o += v * s;
                }
            }
        }
        let mut out = vec![zero; d * d];
        for c in 0..d {
            let (cols, vals) = u.row(c);
            for r in 0..d {
                let mut acc = zero;
                for (&k, &v) in cols.iter().zip(vals) {
                    acc += x[r * d + k] * v.conj();
                }
                out[r * d + c] = acc;
            }
        }
        DensityOperator::new(&self.space, out)
    }

    /// max |rho - rho^dagger| over entries.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for r in 0..d {
            for c in r..d {
                worst = worst.max((self.data[r * d + c] - self.data[c * d + r].conj()).norm());
            }
        }
        worst
    }

    /// Replace rho by (rho + rho^dagger)/2.
    pub fn symmetrize(&mut self) {
        let d = self.dim();
        for r in 0..d {
            for c in r..d {
                let avg = (self.data[r * d + c] + self.data[c * d + r].conj()) * 0.5;
                self.data[r * d + c] = avg;
                self.data[c * d + r] = avg.conj();
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |r, c| self.data[r * d + c])
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut m = self.to_dense();
        m = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        let mut v: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// <psi|rho|psi>
    pub fn expectation_pure(&self, psi: &HybridState) -> Result<f64> {
        if !psi.space().same_as(&self.space) {
            return Err(Error::SpaceMismatch);
        }
        let a = psi.amplitudes();
        let d = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for (r, ar) in a.iter().enumerate() {
            if *ar == C64::new(0.0, 0.0) {
                continue;
            }
            let row = &self.data[r * d..(r + 1) * d];
            let s: C64 = row.iter().zip(a).map(|(x, y)| x * y).sum();
            acc += ar.conj() * s;
        }
        Ok(acc.re)
    }

    /// P rho P for the spin projector P, unnormalized, together with its trace.
    pub fn project_spin(&self, spin: Spin) -> Result<(DensityOperator, f64)> {
        if !self.space.has_spin() {
            return Err(Error::NoSpin);
        }
        let d = self.dim();
        let md = self.space.motional_dim();
        let mut out = self.clone();
        for r in 0..d {
            for c in 0..d {
                if r / md != spin.index() || c / md != spin.index() {
                    out.data[r * d + c] = C64::new(0.0, 0.0);
                }
            }
        }
        let p = out.trace().re;
        Ok((out, p))
    }

    /// Partial trace onto the `keep` subsystems.
    pub fn partial_trace(&self, keep: &[Subsystem]) -> Result<DensityOperator> {
        let part = bipartition(&self.space, keep)?;
        let d = self.dim();
        let rd = part.reduced.dim();
        let mut out = vec![C64::new(0.0, 0.0); rd * rd];
        for group in &part.groups {
            for &i in group {
                let ki = part.kept[i];
                for &j in group {
                    out[ki * rd + part.kept[j]] += self.data[i * d + j];
                }
            }
        }
        DensityOperator::new(&part.reduced, out)
    }

    /// Move to a space that differs only in its total cap. Returns the
    /// operator and the trace lost with dropped labels.
    pub fn transfer(&self, target: &ModeSpace) -> Result<(DensityOperator, f64)> {
        let probe = HybridState::zeros(&self.space);
        probe.transfer(target)?;
        let d = self.dim();
        let map: Vec<Option<usize>> = (0..d)
            .map(|i| {
                let (s, m) = self.space.split(i);
                target
                    .motional_index(self.space.motional_label(m))
                    .map(|t| target.join(s, t))
            })
            .collect();
        let td = target.dim();
        let mut out = vec![C64::new(0.0, 0.0); td * td];
        let mut lost = 0.0;
        for r in 0..d {
            match map[r] {
                Some(tr) => {
                    for (c, m) in map.iter().enumerate() {
                        if let Some(tc) = *m {
                            out[tr * td + tc] = self.data[r * d + c];
                        }
                    }
                }
                None => lost += self.data[r * d + r].re,
            }
        }
        Ok((DensityOperator::new(target, out)?, lost))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn random_state(space: &ModeSpace, rng: &mut ChaCha8Rng) -> HybridState {
        let amps = (0..space.dim())
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        HybridState::new(space, amps).unwrap().normalize().unwrap().0
    }

    #[test]
    fn bell_like_reduction() {
        let space = ModeSpace::new(2, 1, false).unwrap();
        let r = 0.5f64.sqrt();
        let psi = HybridState::from_terms(&space, &[(&[1, 0], None, c(r)), (&[0, 1], None, c(r))]).unwrap();
        let rho = DensityOperator::from_pure(&psi)
            .partial_trace(&[Subsystem::Mode(1)])
            .unwrap();
        assert_eq!(rho.dim(), 2);
        assert!((rho.get(0, 0) - c(0.5)).norm() < 1e-15);
        assert!((rho.get(1, 1) - c(0.5)).norm() < 1e-15);
        assert!(rho.get(0, 1).norm() < 1e-15);
    }

    #[test]
    fn product_state_factor() {
        let space = ModeSpace::new(2, 2, true).unwrap();
        // (|g> + |e>)/sqrt2 x |2> x |1>
        let r = 0.5f64.sqrt();
        let psi = HybridState::from_terms(
            &space,
            &[
                (&[2, 1], Some(Spin::Ground), c(r)),
                (&[2, 1], Some(Spin::Excited), c(r)),
            ],
        )
        .unwrap();
        let spin = DensityOperator::from_pure(&psi)
            .partial_trace(&[Subsystem::Spin])
            .unwrap();
        assert_eq!(spin.dim(), 2);
        for k in 0..4 {
            assert!((spin.get(k / 2, k % 2) - c(0.5)).norm() < 1e-15);
        }
        let m1 = psi.reduced_density(&[Subsystem::Mode(1)]).unwrap();
        assert!((m1.get(2, 2) - c(1.0)).norm() < 1e-15);
        assert!(matches!(psi.reduced_density(&[]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn partial_trace_matches_index_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let space = ModeSpace::new(3, 2, false).unwrap();
        let psi = random_state(&space, &mut rng);
        let rho = DensityOperator::from_pure(&psi);
        // keep modes 1 and 3
        let red = rho.partial_trace(&[Subsystem::Mode(3), Subsystem::Mode(1)]).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                for a2 in 0..3 {
                    for b2 in 0..3 {
                        let mut expect = c(0.0);
                        for t in 0..3 {
                            let i = space.basis_index(&[a, t, b], None).unwrap();
                            let j = space.basis_index(&[a2, t, b2], None).unwrap();
                            expect += rho.get(i, j);
                        }
                        let got = red.get(a * 3 + b, a2 * 3 + b2);
                        assert!((got - expect).norm() < 1e-14);
                    }
                }
            }
        }
        let from_state = psi.reduced_density(&[Subsystem::Mode(1), Subsystem::Mode(3)]).unwrap();
        for (x, y) in from_state.data().iter().zip(red.data()) {
            assert!((x - y).norm() < 1e-14);
        }
        assert!((red.trace() - c(1.0)).norm() < 1e-13);
        assert!(red.hermiticity_error() < 1e-15);
    }

    #[test]
    fn nested_partial_traces_compose() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let space = ModeSpace::new(3, 1, true).unwrap();
        let rho = DensityOperator::from_pure(&random_state(&space, &mut rng));
        let outer = rho
            .partial_trace(&[Subsystem::Spin, Subsystem::Mode(2), Subsystem::Mode(3)])
            .unwrap();
        // in the reduced space, the old mode 3 is mode 2
        let nested = outer.partial_trace(&[Subsystem::Spin, Subsystem::Mode(2)]).unwrap();
        let direct = rho.partial_trace(&[Subsystem::Spin, Subsystem::Mode(3)]).unwrap();
        for (x, y) in nested.data().iter().zip(direct.data()) {
            assert!((x - y).norm() < 1e-14);
        }
    }

    #[test]
    fn spin_projection_and_eigenvalues() {
        let space = ModeSpace::new(1, 1, true).unwrap();
        let psi = HybridState::from_terms(
            &space,
            &[(&[0], Some(Spin::Ground), c(0.6)), (&[1], Some(Spin::Excited), c(0.8))],
        )
        .unwrap();
        let rho = DensityOperator::from_pure(&psi);
        let (pg, p) = rho.project_spin(Spin::Ground).unwrap();
        assert!((p - 0.36).abs() < 1e-15);
        assert!((pg.get(0, 0) - c(0.36)).norm() < 1e-15);
        let ev = rho.eigenvalues();
        assert!(ev[0].abs() < 1e-14 && (ev[3] - 1.0).abs() < 1e-14);
        assert!((rho.expectation_pure(&psi).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn conjugation_matches_pure_evolution() {
        let space = ModeSpace::new(2, 2, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = random_state(&space, &mut rng);
        let u = crate::gates::beam_splitter(&space, 1, 2, 0.7, 0.2).unwrap().to_sparse();
        let rho = DensityOperator::from_pure(&psi).conjugated(&u).unwrap();
        let direct = DensityOperator::from_pure(&HybridState::new(&space, u.mul_vec(psi.amplitudes())).unwrap());
        let err = rho
            .data()
            .iter()
            .zip(direct.data())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-13, "{err}");
    }
}
