use num_complex::Complex64 as C64;

use super::density::{bipartition, DensityOperator};
use super::space::{ModeSpace, Spin, Subsystem};
use crate::error::{Error, Result};

/// Pure-state amplitude vector. The norm is not forced to one: after
/// post-selections its square is the accumulated success probability.
#[derive(Clone, Debug)]
pub struct HybridState {
    space: ModeSpace,
    amps: Vec<C64>,
}

impl HybridState {
    pub fn new(space: &ModeSpace, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != space.dim() {
            return Err(Error::InvalidArgument(format!(
                "{} amplitudes for a space of dimension {}",
                amps.len(),
                space.dim()
            )));
        }
        Ok(Self {
            space: space.clone(),
            amps,
        })
    }

    pub fn zeros(space: &ModeSpace) -> Self {
        Self {
            space: space.clone(),
            amps: vec![C64::new(0.0, 0.0); space.dim()],
        }
    }

    pub fn basis(space: &ModeSpace, occupations: &[usize], spin: Option<Spin>) -> Result<Self> {
        let mut s = Self::zeros(space);
        let i = space.basis_index(occupations, spin)?;
        s.amps[i] = C64::new(1.0, 0.0);
        Ok(s)
    }

    /// Superposition of basis labels with the given coefficients.
    pub fn from_terms(space: &ModeSpace, terms: &[(&[usize], Option<Spin>, C64)]) -> Result<Self> {
        let mut s = Self::zeros(space);
        for &(occ, spin, c) in terms {
            s.amps[space.basis_index(occ, spin)?] += c;
        }
        Ok(s)
    }

    pub fn space(&self) -> &ModeSpace {
        &self.space
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn amplitude(&self, occupations: &[usize], spin: Option<Spin>) -> Result<C64> {
        Ok(self.amps[self.space.basis_index(occupations, spin)?])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// <self|other>
    pub fn inner(&self, other: &HybridState) -> Result<C64> {
        if !self.space.same_as(&other.space) {
            return Err(Error::SpaceMismatch);
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// Unit vector along `self` together with the norm squared it had.
    pub fn normalize(&self) -> Result<(HybridState, f64)> {
        let n2 = self.norm_sqr();
        if n2 <= f64::MIN_POSITIVE {
            return Err(Error::ImpossibleBranch);
        }
        Ok((self.scaled(C64::new(1.0 / n2.sqrt(), 0.0)), n2))
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self {
            space: self.space.clone(),
            amps: self.amps.iter().map(|a| a * c).collect(),
        }
    }

    /// self + c * other
    pub fn add_scaled(&self, c: C64, other: &HybridState) -> Result<Self> {
        if !self.space.same_as(&other.space) {
            return Err(Error::SpaceMismatch);
        }
        Ok(Self {
            space: self.space.clone(),
            amps: self.amps.iter().zip(&other.amps).map(|(a, b)| a + c * b).collect(),
        })
    }

    /// <psi|op|psi>
    pub fn expectation(&self, op: &super::LinearOperator) -> Result<C64> {
        let v = op.apply(self)?;
        self.inner(&v)
    }

    /// max |a_i - b_i| <= tol
    pub fn approx_eq(&self, other: &HybridState, tol: f64) -> bool {
        self.space.same_as(&other.space) && self.amps.iter().zip(&other.amps).all(|(a, b)| (a - b).norm() <= tol)
    }

    /// Spin branch projection. The result is not renormalized.
    pub fn project_spin(&self, spin: Spin) -> Result<HybridState> {
        if !self.space.has_spin() {
            return Err(Error::NoSpin);
        }
        let mut out = self.clone();
        let md = self.space.motional_dim();
        for (i, a) in out.amps.iter_mut().enumerate() {
            if i / md != spin.index() {
                *a = C64::new(0.0, 0.0);
            }
        }
        Ok(out)
    }

    /// Total phonon number if every populated label shares it.
    pub fn definite_particle_number(&self, tol: f64) -> Option<usize> {
        let mut found = None;
        for (i, a) in self.amps.iter().enumerate() {
            if a.norm_sqr() > tol * tol {
                let n = self.space.total_occupation(i);
                match found {
                    None => found = Some(n),
                    Some(m) if m != n => return None,
                    _ => {}
                }
            }
        }
        found
    }

    /// Copy amplitudes into another space with the same modes, spin and
    /// cutoff but a different total cap. Returns the state and the norm
    /// squared lost because labels are missing from the target.
    pub fn transfer(&self, target: &ModeSpace) -> Result<(HybridState, f64)> {
        if target.num_modes() != self.space.num_modes()
            || target.has_spin() != self.space.has_spin()
            || target.cutoff() != self.space.cutoff()
        {
            return Err(Error::SpaceMismatch);
        }
        let mut out = HybridState::zeros(target);
        let mut lost = 0.0;
        for (i, &a) in self.amps.iter().enumerate() {
            let (s, m) = self.space.split(i);
            match target.motional_index(self.space.motional_label(m)) {
                Some(t) => out.amps[target.join(s, t)] = a,
                None => lost += a.norm_sqr(),
            }
        }
        Ok((out, lost))
    }

    /// Reduced density operator on `keep`, computed without forming the
    /// full projector.
    pub fn reduced_density(&self, keep: &[Subsystem]) -> Result<DensityOperator> {
        let part = bipartition(&self.space, keep)?;
        let rd = part.reduced.dim();
        let mut data = vec![C64::new(0.0, 0.0); rd * rd];
        for group in &part.groups {
            for &i in group {
                let ai = self.amps[i];
                if ai == C64::new(0.0, 0.0) {
                    continue;
                }
                let ki = part.kept[i];
                for &j in group {
                    data[ki * rd + part.kept[j]] += ai * self.amps[j].conj();
                }
            }
        }
        DensityOperator::new(&part.reduced, data)
    }

    /// Nonzero amplitudes with their labels, in basis order.
    pub fn terms(&self, tol: f64) -> Vec<(Vec<usize>, Option<Spin>, C64)> {
        self.amps
            .iter()
            .enumerate()
            .filter(|(_, a)| a.norm() > tol)
            .map(|(i, &a)| {
                let (occ, spin) = self.space.labels(i);
                (occ, spin, a)
            })
            .collect()
    }
}

impl std::fmt::Display for HybridState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut first = true;
        for (occ, spin, a) in self.terms(1e-12) {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            let digits: String = occ.iter().map(|o| o.to_string()).collect::<Vec<_>>().join(",");
            let s = match spin {
                Some(Spin::Ground) => "g;",
                Some(Spin::Excited) => "e;",
                None => "",
            };
            write!(f, "({:.6}{:+.6}i)|{s}{digits}>", a.re, a.im)?;
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}
