use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Largest Hilbert-space dimension accepted by [`ModeSpace::new`].
pub const DEFAULT_DIM_LIMIT: usize = 1 << 22;

const NOT_IN_SPACE: u32 = u32::MAX;

/// Internal two-level state of the addressed ion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Spin {
    Ground,
    Excited,
}

impl Spin {
    pub(crate) fn index(self) -> usize {
        match self {
            Spin::Ground => 0,
            Spin::Excited => 1,
        }
    }

    pub(crate) fn from_index(i: usize) -> Spin {
        if i == 0 {
            Spin::Ground
        } else {
            Spin::Excited
        }
    }

    pub fn flipped(self) -> Spin {
        match self {
            Spin::Ground => Spin::Excited,
            Spin::Excited => Spin::Ground,
        }
    }
}

/// A subsystem label: the spin qubit or a motional mode (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Subsystem {
    Spin,
    Mode(usize),
}

/// Truncated hybrid Hilbert space: optional spin qubit tensored with
/// `num_modes` bosonic modes, each holding at most `cutoff` quanta.
///
/// Basis ordering (version 1): the spin is the slowest index (g before e),
/// followed by mode 1, ..., mode N with mode N fastest; occupations ascend.
/// An optional cap on the total phonon number drops every label whose
/// occupations sum above the cap while keeping the relative order.
#[derive(Clone)]
pub struct ModeSpace {
    inner: Arc<SpaceInner>,
}

struct SpaceInner {
    num_modes: usize,
    cutoff: usize,
    has_spin: bool,
    max_total: Option<usize>,
    /// Flattened motional labels, `num_modes` entries per motional index.
    labels: Vec<u8>,
    /// Mixed-radix motional label -> motional index (or `NOT_IN_SPACE`).
    lookup: Vec<u32>,
}

impl ModeSpace {
    /// Full tensor-product space. `num_modes` must be at least one.
    pub fn new(num_modes: usize, cutoff: usize, has_spin: bool) -> Result<Self> {
        if num_modes == 0 {
            return Err(Error::InvalidSpace("num_modes must be at least 1".into()));
        }
        Self::build(num_modes, cutoff, has_spin, None, DEFAULT_DIM_LIMIT)
    }

    /// Space restricted to labels with at most `max_total` phonons in total.
    pub fn with_total_cap(num_modes: usize, cutoff: usize, has_spin: bool, max_total: usize) -> Result<Self> {
        if num_modes == 0 {
            return Err(Error::InvalidSpace("num_modes must be at least 1".into()));
        }
        Self::build(num_modes, cutoff, has_spin, Some(max_total), DEFAULT_DIM_LIMIT)
    }

    /// Like [`ModeSpace::new`] with an explicit dimension limit.
    pub fn with_limit(num_modes: usize, cutoff: usize, has_spin: bool, limit: usize) -> Result<Self> {
        if num_modes == 0 {
            return Err(Error::InvalidSpace("num_modes must be at least 1".into()));
        }
        Self::build(num_modes, cutoff, has_spin, None, limit)
    }

    /// Spin-only space, used for reduced density operators.
    pub(crate) fn spin_only() -> Self {
        Self::build(0, 0, true, None, DEFAULT_DIM_LIMIT).expect("two-level space")
    }

    pub(crate) fn build(
        num_modes: usize,
        cutoff: usize,
        has_spin: bool,
        max_total: Option<usize>,
        limit: usize,
    ) -> Result<Self> {
        if num_modes == 0 && !has_spin {
            return Err(Error::InvalidSpace("empty space".into()));
        }
        if cutoff > u8::MAX as usize - 1 {
            return Err(Error::InvalidSpace(format!("cutoff {cutoff} too large")));
        }
        let radix = (cutoff + 1) as u128;
        let full = radix
            .checked_pow(num_modes as u32)
            .ok_or(Error::DimensionTooLarge { dim: u128::MAX, limit })?;
        let spin_factor: u128 = if has_spin { 2 } else { 1 };
        if full > limit as u128 || full * spin_factor > limit as u128 {
            return Err(Error::DimensionTooLarge {
                dim: full * spin_factor,
                limit,
            });
        }
        let full = full as usize;
        let mut labels = Vec::new();
        let mut lookup = vec![NOT_IN_SPACE; full];
        let mut occ = vec![0u8; num_modes];
        let mut count = 0u32;
        for (flat, slot) in lookup.iter_mut().enumerate() {
            // odometer decode, mode N fastest
            let mut rem = flat;
            for m in (0..num_modes).rev() {
                occ[m] = (rem % (cutoff + 1)) as u8;
                rem /= cutoff + 1;
            }
            let total: usize = occ.iter().map(|&o| o as usize).sum();
            if max_total.is_some_and(|cap| total > cap) {
                continue;
            }
            *slot = count;
            count += 1;
            labels.extend_from_slice(&occ);
        }
        Ok(Self {
            inner: Arc::new(SpaceInner {
                num_modes,
                cutoff,
                has_spin,
                max_total,
                labels,
                lookup,
            }),
        })
    }

    pub fn num_modes(&self) -> usize {
        self.inner.num_modes
    }

    pub fn cutoff(&self) -> usize {
        self.inner.cutoff
    }

    pub fn has_spin(&self) -> bool {
        self.inner.has_spin
    }

    pub fn max_total(&self) -> Option<usize> {
        self.inner.max_total
    }

    /// Number of motional basis labels.
    pub fn motional_dim(&self) -> usize {
        self.inner.labels.len().checked_div(self.inner.num_modes).unwrap_or(1)
    }

    pub fn spin_dim(&self) -> usize {
        if self.inner.has_spin {
            2
        } else {
            1
        }
    }

    pub fn dim(&self) -> usize {
        self.spin_dim() * self.motional_dim()
    }

    /// Occupations of motional label `m`.
    pub fn motional_label(&self, m: usize) -> &[u8] {
        let n = self.inner.num_modes;
        &self.inner.labels[m * n..(m + 1) * n]
    }

    /// Motional index of an occupation tuple, if it belongs to the space.
    pub fn motional_index(&self, occupations: &[u8]) -> Option<usize> {
        if occupations.len() != self.inner.num_modes {
            return None;
        }
        let radix = self.inner.cutoff + 1;
        let mut flat = 0usize;
        for &o in occupations {
            if o as usize > self.inner.cutoff {
                return None;
            }
            flat = flat * radix + o as usize;
        }
        match self.inner.lookup[flat] {
            NOT_IN_SPACE => None,
            i => Some(i as usize),
        }
    }

    /// Index of `(occupations, spin)`; `spin` must be `None` exactly when
    /// the space carries no spin.
    pub fn basis_index(&self, occupations: &[usize], spin: Option<Spin>) -> Result<usize> {
        if occupations.len() != self.inner.num_modes {
            return Err(Error::InvalidArgument(format!(
                "expected {} occupations, got {}",
                self.inner.num_modes,
                occupations.len()
            )));
        }
        for (m, &o) in occupations.iter().enumerate() {
            if o > self.inner.cutoff {
                return Err(Error::OccupationOutOfRange {
                    mode: m + 1,
                    occupation: o,
                    cutoff: self.inner.cutoff,
                });
            }
        }
        let spin_offset = match (self.inner.has_spin, spin) {
            (true, Some(s)) => s.index() * self.motional_dim(),
            (false, None) => 0,
            (true, None) => {
                return Err(Error::InvalidArgument("spin label required".into()));
            }
            (false, Some(_)) => return Err(Error::NoSpin),
        };
        let occ: Vec<u8> = occupations.iter().map(|&o| o as u8).collect();
        let m = self
            .motional_index(&occ)
            .ok_or_else(|| Error::NotInSpace(format!("{occupations:?} exceeds the total cap")))?;
        Ok(spin_offset + m)
    }

    /// Inverse of [`ModeSpace::basis_index`].
    pub fn labels(&self, index: usize) -> (Vec<usize>, Option<Spin>) {
        let md = self.motional_dim();
        let m = index % md;
        let spin = self.inner.has_spin.then(|| Spin::from_index(index / md));
        let occ = self.motional_label(m).iter().map(|&o| o as usize).collect();
        (occ, spin)
    }

    /// Split a basis index into (spin index, motional index).
    #[inline]
    pub fn split(&self, index: usize) -> (usize, usize) {
        let md = self.motional_dim();
        (index / md, index % md)
    }

    #[inline]
    pub fn join(&self, spin: usize, motional: usize) -> usize {
        spin * self.motional_dim() + motional
    }

    pub fn check_mode(&self, mode: usize) -> Result<()> {
        if mode == 0 || mode > self.inner.num_modes {
            Err(Error::BadMode {
                mode,
                num_modes: self.inner.num_modes,
            })
        } else {
            Ok(())
        }
    }

    /// Occupation of `mode` (1-based) in basis state `index`.
    #[inline]
    pub fn occupation(&self, index: usize, mode: usize) -> usize {
        let (_, m) = self.split(index);
        self.motional_label(m)[mode - 1] as usize
    }

    /// Total phonon number of basis state `index`.
    pub fn total_occupation(&self, index: usize) -> usize {
        let (_, m) = self.split(index);
        self.motional_label(m).iter().map(|&o| o as usize).sum()
    }

    /// Same parameters, different total cap.
    pub fn recapped(&self, max_total: Option<usize>) -> Result<Self> {
        Self::build(
            self.inner.num_modes,
            self.inner.cutoff,
            self.inner.has_spin,
            max_total,
            DEFAULT_DIM_LIMIT,
        )
    }

    pub fn same_as(&self, other: &ModeSpace) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self == other
    }
}

impl PartialEq for ModeSpace {
    fn eq(&self, other: &Self) -> bool {
        self.inner.num_modes == other.inner.num_modes
            && self.inner.cutoff == other.inner.cutoff
            && self.inner.has_spin == other.inner.has_spin
            && self.inner.max_total == other.inner.max_total
    }
}

impl Eq for ModeSpace {}

impl fmt::Debug for ModeSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModeSpace")
            .field("num_modes", &self.inner.num_modes)
            .field("cutoff", &self.inner.cutoff)
            .field("has_spin", &self.inner.has_spin)
            .field("max_total", &self.inner.max_total)
            .field("dim", &self.dim())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions() {
        assert_eq!(ModeSpace::new(4, 4, true).unwrap().dim(), 1250);
        assert_eq!(ModeSpace::new(1, 0, false).unwrap().dim(), 1);
        assert_eq!(ModeSpace::new(2, 1, true).unwrap().dim(), 8);
    }

    #[test]
    fn rejects_bad_spaces() {
        assert!(ModeSpace::new(0, 3, true).is_err());
        assert!(matches!(
            ModeSpace::with_limit(10, 9, true, 1000),
            Err(Error::DimensionTooLarge { .. })
        ));
    }

    #[test]
    fn small_space_order_matches_enumeration() {
        // (2 modes, cutoff 1, spin): spin slowest, mode 2 fastest
        let space = ModeSpace::new(2, 1, true).unwrap();
        let mut expected = Vec::new();
        for s in [Spin::Ground, Spin::Excited] {
            for n1 in 0..=1 {
                for n2 in 0..=1 {
                    expected.push((vec![n1, n2], Some(s)));
                }
            }
        }
        let got: Vec<_> = (0..space.dim()).map(|i| space.labels(i)).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn odometer_order_three_modes() {
        let space = ModeSpace::new(3, 2, false).unwrap();
        let mut i = 0;
        for a in 0..=2 {
            for b in 0..=2 {
                for c in 0..=2 {
                    assert_eq!(space.basis_index(&[a, b, c], None).unwrap(), i);
                    i += 1;
                }
            }
        }
        assert_eq!(i, space.dim());
    }

    #[test]
    fn round_trip_labels() {
        for space in [
            ModeSpace::new(3, 2, true).unwrap(),
            ModeSpace::with_total_cap(4, 4, true, 5).unwrap(),
        ] {
            for i in 0..space.dim() {
                let (occ, spin) = space.labels(i);
                assert_eq!(space.basis_index(&occ, spin).unwrap(), i);
            }
        }
    }

    #[test]
    fn vacuum_ground_is_first() {
        let space = ModeSpace::new(4, 4, true).unwrap();
        assert_eq!(space.basis_index(&[0; 4], Some(Spin::Ground)).unwrap(), 0);
    }

    #[test]
    fn cutoff_violation_is_an_error() {
        let space = ModeSpace::new(2, 2, false).unwrap();
        assert!(matches!(
            space.basis_index(&[3, 0], None),
            Err(Error::OccupationOutOfRange { mode: 1, .. })
        ));
    }

    #[test]
    fn total_cap_counts() {
        // tuples of 4 occupations in 0..=4 summing to at most 5
        let space = ModeSpace::with_total_cap(4, 4, true, 5).unwrap();
        assert_eq!(space.motional_dim(), 122);
        assert_eq!(space.dim(), 244);
        assert!(space.basis_index(&[4, 2, 0, 0], Some(Spin::Ground)).is_err());
    }
}
