//! Sculpting protocols: symmetric-state preparation, the local/collective
//! basis map for four ions, ladder-operator sculpting, the two four-mode
//! scenarios and the general 2n-mode schemes with their closed forms.

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fock::{lower_sparse, HybridState, LinearOperator, ModeSpace, SparseMatrix, Spin, C64};
use crate::gates::{arithmetic_subtract, beam_splitter, carrier, post_select_spin, rsb};

/// Mixing angle between collective modes 2 and 4 of a four-ion chain.
pub const LAMBDA: f64 = 0.306277;

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Real orthogonal map from local to collective annihilation operators,
/// `a_{c,i} = Σ_l M[i][l] a_{l,l}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMap {
    pub coefficients: DMatrix<f64>,
    pub lambda: f64,
}

impl BasisMap {
    /// The four-ion normal-mode matrix with mixing angle `lambda`.
    pub fn four_ion(lambda: f64) -> Self {
        let (c, s) = (lambda.cos(), lambda.sin());
        let r = FRAC_1_SQRT_2;
        #[rustfmt::skip]
        let m = DMatrix::from_row_slice(4, 4, &[
            0.5, 0.5, 0.5, 0.5,
            -c * r, -s * r, s * r, c * r,
            0.5, -0.5, -0.5, 0.5,
            -s * r, c * r, -c * r, s * r,
        ]);
        Self {
            coefficients: m,
            lambda,
        }
    }

    pub fn reference() -> Self {
        Self::four_ion(LAMBDA)
    }

    /// max |M Mᵀ - 1|
    pub fn orthogonality_error(&self) -> f64 {
        let m = &self.coefficients;
        let n = m.nrows();
        (m * m.transpose() - DMatrix::<f64>::identity(n, n)).abs().max()
    }

    fn check(&self, space: &ModeSpace) -> Result<()> {
        if space.num_modes() != 4 || self.coefficients.nrows() != 4 {
            return Err(Error::InvalidArgument(
                "local/collective map is only available for four modes".into(),
            ));
        }
        if self.orthogonality_error() > 1e-12 {
            return Err(Error::InvalidArgument("basis map is not orthogonal".into()));
        }
        Ok(())
    }

    pub fn complex(&self) -> DMatrix<C64> {
        self.coefficients.map(re)
    }

    /// Re-express a state given in local Fock amplitudes in the collective basis.
    pub fn local_to_collective(&self, state: &HybridState) -> Result<HybridState> {
        self.check(state.space())?;
        fock_transform(state, &self.complex())
    }

    pub fn collective_to_local(&self, state: &HybridState) -> Result<HybridState> {
        self.check(state.space())?;
        fock_transform(state, &self.complex().adjoint())
    }

    /// T O T⁻¹ where T is the local-to-collective amplitude map.
    pub fn operator_to_collective(&self, op: &LinearOperator) -> Result<LinearOperator> {
        self.check(op.space())?;
        conjugate(op, &self.complex())
    }

    pub fn operator_to_local(&self, op: &LinearOperator) -> Result<LinearOperator> {
        self.check(op.space())?;
        conjugate(op, &self.complex().adjoint())
    }
}

/// Passive linear transformation of Fock amplitudes: each creation operator
/// `b_l†` of the input basis becomes `Σ_i U[i][l] c_i†`.
pub fn fock_transform(state: &HybridState, u: &DMatrix<C64>) -> Result<HybridState> {
    let space = state.space();
    let modes = space.num_modes();
    if u.nrows() != modes || u.ncols() != modes {
        return Err(Error::InvalidArgument(format!(
            "mode transform must be {modes}x{modes}"
        )));
    }
    let mut fact = vec![1.0f64; space.cutoff() * modes + 2];
    for k in 1..fact.len() {
        fact[k] = fact[k - 1] * k as f64;
    }
    let mut out = HybridState::zeros(space);
    let mut lost = 0.0;
    for (idx, &amp) in state.amplitudes().iter().enumerate() {
        if amp == re(0.0) {
            continue;
        }
        let (s, m) = space.split(idx);
        let label = space.motional_label(m);
        let mut poly: HashMap<Vec<u8>, C64> = HashMap::from([(vec![0u8; modes], re(1.0))]);
        let mut norm = 1.0;
        for (l, &n) in label.iter().enumerate() {
            norm *= fact[n as usize];
            for _ in 0..n {
                let mut next: HashMap<Vec<u8>, C64> = HashMap::new();
                for (mono, c) in &poly {
                    for i in 0..modes {
                        let w = u[(i, l)];
                        if w == re(0.0) {
                            continue;
                        }
                        let mut mono2 = mono.clone();
                        mono2[i] += 1;
                        *next.entry(mono2).or_insert(re(0.0)) += c * w;
                    }
                }
                poly = next;
            }
        }
        let scale = amp / norm.sqrt();
        for (mono, c) in poly {
            let weight: f64 = mono.iter().map(|&k| fact[k as usize]).product();
            let value = scale * c * weight.sqrt();
            match space.motional_index(&mono) {
                Some(t) => out.amplitudes_mut()[space.join(s, t)] += value,
                None => lost += value.norm_sqr(),
            }
        }
    }
    if lost > 1e-20 {
        return Err(Error::NotInSpace(format!(
            "mode transform leaks weight {lost:.3e} beyond the cutoff"
        )));
    }
    Ok(out)
}

fn conjugate(op: &LinearOperator, u: &DMatrix<C64>) -> Result<LinearOperator> {
    let space = op.space();
    let d = space.dim();
    let inv = u.adjoint();
    let mut t = Vec::new();
    for c in 0..d {
        if space.total_occupation(c) > space.cutoff() {
            continue;
        }
        let (occ, spin) = space.labels(c);
        let e = HybridState::basis(space, &occ, spin)?;
        let col = fock_transform(&op.apply(&fock_transform(&e, &inv)?)?, u)?;
        for (r, v) in col.amplitudes().iter().enumerate() {
            if v.norm() > 1e-15 {
                t.push((r, c, *v));
            }
        }
    }
    LinearOperator::from_sparse(space, SparseMatrix::from_triplets(d, t)?)
}

/// One boson in every mode, spin in |g> when present.
pub fn prepare_sym(space: &ModeSpace) -> Result<HybridState> {
    if space.cutoff() < 1 {
        return Err(Error::InvalidArgument("cutoff must be at least 1".into()));
    }
    let ones = vec![1usize; space.num_modes()];
    HybridState::basis(space, &ones, space.has_spin().then_some(Spin::Ground))
}

/// |sym> built from the ground state with a carrier π pulse and a red
/// sideband π pulse per mode (both with φ = π/2).
pub fn prepare_sym_by_gates(space: &ModeSpace) -> Result<HybridState> {
    if !space.has_spin() {
        return Err(Error::NoSpin);
    }
    let mut psi = HybridState::basis(space, &vec![0; space.num_modes()], Some(Spin::Ground))?;
    for mode in 1..=space.num_modes() {
        psi = carrier(space, PI, PI / 2.0)?.apply(&psi)?;
        psi = rsb(space, mode, PI, PI / 2.0)?.apply(&psi)?;
    }
    Ok(psi)
}

/// Sign convention of the GHZ target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GhzConvention {
    /// (|1..1 0..0> + (-1)^{n+1} |0..0 1..1>)/√2
    Main,
    /// (Π_odd a† + Π_even a†)|0>/√2
    Interleaved,
}

pub fn ghz_target(space: &ModeSpace, convention: GhzConvention) -> Result<HybridState> {
    let modes = space.num_modes();
    if !modes.is_multiple_of(2) {
        return Err(Error::InvalidArgument(
            "GHZ target needs an even number of modes".into(),
        ));
    }
    let n = modes / 2;
    let spin = space.has_spin().then_some(Spin::Ground);
    let (first, second, sign): (Vec<usize>, Vec<usize>, f64) = match convention {
        GhzConvention::Main => (
            (0..modes).map(|m| usize::from(m < n)).collect(),
            (0..modes).map(|m| usize::from(m >= n)).collect(),
            if n % 2 == 1 { 1.0 } else { -1.0 },
        ),
        GhzConvention::Interleaved => (
            (0..modes).map(|m| usize::from(m % 2 == 0)).collect(),
            (0..modes).map(|m| usize::from(m % 2 == 1)).collect(),
            1.0,
        ),
    };
    HybridState::from_terms(
        space,
        &[
            (&first, spin, re(FRAC_1_SQRT_2)),
            (&second, spin, re(sign * FRAC_1_SQRT_2)),
        ],
    )
}

/// Branch record of one protocol step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub name: String,
    pub probability: f64,
}

/// Outcome of an ideal protocol.
#[derive(Debug, Clone)]
pub struct ProtocolResult {
    /// Normalized output state.
    pub final_state: HybridState,
    pub success_prob: f64,
    pub overlap_with_target: C64,
    pub overlap_magnitude: f64,
    /// Squared overlap.
    pub fidelity: f64,
    pub step_log: Vec<StepRecord>,
    /// Named intermediate states (unnormalized, as produced).
    pub checkpoints: Vec<(String, HybridState)>,
}

impl ProtocolResult {
    pub fn checkpoint(&self, name: &str) -> Option<&HybridState> {
        self.checkpoints.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    /// Product of the logged branch probabilities.
    pub fn logged_probability(&self) -> f64 {
        self.step_log.iter().map(|s| s.probability).product()
    }
}

/// Bookkeeping helper shared by the ideal protocols.
struct Run {
    psi: HybridState,
    log: Vec<StepRecord>,
    checkpoints: Vec<(String, HybridState)>,
}

impl Run {
    fn new(psi: HybridState) -> Self {
        Self {
            psi,
            log: Vec::new(),
            checkpoints: Vec::new(),
        }
    }

    fn unitary(&mut self, op: &LinearOperator) -> Result<()> {
        self.psi = op.apply(&self.psi)?;
        Ok(())
    }

    fn subtract(&mut self, mode: usize) -> Result<()> {
        let (psi, p) = arithmetic_subtract(&self.psi, mode)?;
        self.psi = psi;
        self.log.push(StepRecord {
            name: format!("S{mode}"),
            probability: p,
        });
        Ok(())
    }

    fn select(&mut self, name: String, spin: Spin) -> Result<()> {
        let (psi, p) = post_select_spin(&self.psi, spin)?;
        self.psi = psi;
        self.log.push(StepRecord { name, probability: p });
        Ok(())
    }

    /// Apply a (not necessarily norm-preserving) ladder-type operator; the
    /// logged weight is <b†b>/N with b normalized and N the phonon number.
    fn annihilate(&mut self, name: String, op: &LinearOperator, coeff_norm_sqr: f64) -> Result<()> {
        let n = self
            .psi
            .definite_particle_number(1e-12)
            .ok_or(Error::IndefiniteParticleNumber)?;
        let before = self.psi.norm_sqr();
        self.psi = op.apply(&self.psi)?;
        let after = self.psi.norm_sqr();
        if after <= 1e-300 {
            return Err(Error::ImpossibleBranch);
        }
        self.log.push(StepRecord {
            name,
            probability: after / (before * coeff_norm_sqr * n as f64),
        });
        Ok(())
    }

    fn mark(&mut self, name: &str) {
        self.checkpoints.push((name.to_string(), self.psi.clone()));
    }

    fn finish(self, target: &HybridState, success_override: Option<f64>) -> Result<ProtocolResult> {
        let (final_state, norm_sqr) = self.psi.normalize()?;
        let overlap = final_state.inner(target)?;
        let logged: f64 = self.log.iter().map(|s| s.probability).product();
        let _ = norm_sqr;
        Ok(ProtocolResult {
            final_state,
            success_prob: success_override.unwrap_or(logged),
            overlap_with_target: overlap,
            overlap_magnitude: overlap.norm(),
            fidelity: overlap.norm_sqr(),
            step_log: self.log,
            checkpoints: self.checkpoints,
        })
    }
}

/// Â_j = Σ_{p≤n} a_p + Σ_{q>n} e^{i2(j+q)π/n} a_q on a 2n-mode space.
pub fn subtraction_aj(space: &ModeSpace, j: usize, n: usize) -> Result<LinearOperator> {
    if space.num_modes() != 2 * n || n == 0 || j >= n {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= j < n and 2n modes (j={j}, n={n}, modes={})",
            space.num_modes()
        )));
    }
    let mut acc = SparseMatrix::zero(space.dim());
    for q in 1..=2 * n {
        let c = if q <= n {
            re(1.0)
        } else {
            C64::from_polar(1.0, 2.0 * (j + q) as f64 * PI / n as f64)
        };
        acc = acc.add_scaled(c, &lower_sparse(space, q)?)?;
    }
    LinearOperator::from_sparse(space, acc)
}

/// Apply 𝒥 = Π_j Â_j to |sym_2n> and compare with the main GHZ target.
pub fn sculpt_j(n: usize) -> Result<ProtocolResult> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let space = ModeSpace::new(2 * n, 1, false)?;
    let mut run = Run::new(prepare_sym(&space)?);
    for j in 0..n {
        let a = subtraction_aj(&space, j, n)?;
        run.annihilate(format!("A{j}"), &a, (2 * n) as f64)?;
    }
    run.finish(&ghz_target(&space, GhzConvention::Main)?, None)
}

/// Four-mode space used by the ideal scenarios.
pub fn scenario_space(cutoff: usize) -> Result<ModeSpace> {
    if cutoff < 4 {
        return Err(Error::InvalidArgument(
            "the four-mode scenarios need cutoff >= 4".into(),
        ));
    }
    ModeSpace::new(4, cutoff, true)
}

fn scenario_tail(mut run: Run, rsb_correction: bool) -> Result<ProtocolResult> {
    let space = run.psi.space().clone();
    run.mark("after_beam_splitters");
    run.subtract(3)?;
    run.subtract(4)?;
    run.mark("after_subtraction");
    if rsb_correction {
        run.unitary(&rsb(&space, 2, 2.0 * PI / 3.0, PI / 2.0)?)?;
        run.mark("after_rsb");
        run.select("RSB2+g".into(), Spin::Ground)?;
    }
    let target = ghz_target(&space, GhzConvention::Main)?;
    run.finish(&target, None)
}

/// Local-basis preparation, one tilted beam splitter between collective
/// modes 2 and 4, subtractions from modes 3 and 4, optional rsb correction.
pub fn scenario_with_ia(cutoff: usize, rsb_correction: bool) -> Result<ProtocolResult> {
    let space = scenario_space(cutoff)?;
    let local = prepare_sym(&space)?;
    let collective = BasisMap::reference().local_to_collective(&local)?;
    let mut run = Run::new(collective);
    run.mark("initial_collective");
    run.unitary(&with_ia_beam_splitter(&space)?)?;
    scenario_tail(run, rsb_correction)
}

/// The tilted beam splitter of the individually addressed scenario.
pub fn with_ia_beam_splitter(space: &ModeSpace) -> Result<LinearOperator> {
    beam_splitter(space, 4, 2, 2.0 * LAMBDA - PI / 2.0, -PI / 2.0)
}

/// The 50-50 beam-splitter layer of the collective scenario in the order
/// applied: B12, B34, B13, B24.
pub const WITHOUT_IA_SEQUENCE: [(usize, usize); 4] = [(1, 2), (3, 4), (1, 3), (2, 4)];

/// Collective-basis preparation followed by four 50-50 beam splitters.
pub fn scenario_without_ia(cutoff: usize, rsb_correction: bool) -> Result<ProtocolResult> {
    scenario_without_ia_ordered(cutoff, rsb_correction, &WITHOUT_IA_SEQUENCE)
}

/// Like [`scenario_without_ia`] with a custom beam-splitter order.
pub fn scenario_without_ia_ordered(
    cutoff: usize,
    rsb_correction: bool,
    order: &[(usize, usize)],
) -> Result<ProtocolResult> {
    let space = scenario_space(cutoff)?;
    let mut run = Run::new(prepare_sym(&space)?);
    for &(j, k) in order {
        run.unitary(&beam_splitter(&space, j, k, PI / 2.0, -PI / 2.0)?)?;
    }
    scenario_tail(run, rsb_correction)
}

/// Variant of the general 2n-mode scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SculptVariant {
    /// 𝒥′ with ladder operators followed by B̄.
    Ladder,
    /// Beam-splitter layers around arithmetic subtractions on odd modes.
    Arithmetic,
}

/// Largest n accepted by [`general_sculpt`].
pub const GENERAL_MAX_N: usize = 4;

/// Default rsb angle for the even-mode correction (see [`general_sculpt_with`]).
pub const GENERAL_RSB_THETA: f64 = PI / 2.0;

/// x ⊕ y on modes 1..=2n.
pub fn cyclic_add(x: usize, y: usize, modes: usize) -> usize {
    1 + (x + y - 1) % modes
}

pub fn general_sculpt(n: usize, variant: SculptVariant, rsb_correction: bool) -> Result<ProtocolResult> {
    general_sculpt_with(n, variant, rsb_correction, GENERAL_RSB_THETA)
}

/// General scheme with an explicit angle for the even-mode rsb correction.
pub fn general_sculpt_with(
    n: usize,
    variant: SculptVariant,
    rsb_correction: bool,
    rsb_theta: f64,
) -> Result<ProtocolResult> {
    if n == 0 || n > GENERAL_MAX_N {
        return Err(Error::InvalidArgument(format!("n must be in 1..={GENERAL_MAX_N}")));
    }
    let modes = 2 * n;
    // B_{j,k} in the ion-trap (Heisenberg) convention is the literal exponential with j and k swapped
    let bs = |space: &ModeSpace, j: usize, k: usize| beam_splitter(space, k, j, PI / 2.0, -PI / 2.0);
    match variant {
        SculptVariant::Ladder => {
            let space = ModeSpace::new(modes, 2, false)?;
            let mut run = Run::new(prepare_sym(&space)?);
            for j in 0..n {
                let op = ladder_factor(&space, j)?;
                run.annihilate(format!("J'{j}"), &op, 4.0)?;
            }
            run.mark("after_subtraction");
            for j in 1..=n {
                run.unitary(&bs(&space, 2 * j - 1, 2 * j)?)?;
            }
            run.finish(&ghz_target(&space, GhzConvention::Interleaved)?, None)
        }
        SculptVariant::Arithmetic => {
            let space = ModeSpace::new(modes, 2, rsb_correction)?;
            let mut run = Run::new(prepare_sym(&space)?);
            for l in 1..=n {
                run.unitary(&bs(&space, 2 * l - 1, 2 * l)?)?;
            }
            for k in 1..=n {
                run.unitary(&bs(&space, 2 * k, cyclic_add(2 * k, 1, modes))?)?;
            }
            for j in 1..=n {
                run.subtract(2 * j - 1)?;
            }
            run.mark("after_subtraction");
            if rsb_correction {
                for i in 1..=n {
                    run.unitary(&rsb(&space, 2 * i, rsb_theta, PI / 2.0)?)?;
                    run.select(format!("RSB{}+g", 2 * i), Spin::Ground)?;
                }
            }
            for h in 1..=n {
                run.unitary(&bs(&space, 2 * h, cyclic_add(2 * h, 1, modes))?.adjoint())?;
            }
            run.finish(&ghz_target(&space, GhzConvention::Interleaved)?, None)
        }
    }
}

/// ½(a_{2j⊕1} − a_{2j⊕2} + a_{2j⊕3} + a_{2j⊕4}) for factor j (0-based).
pub fn ladder_factor(space: &ModeSpace, j: usize) -> Result<LinearOperator> {
    let modes = space.num_modes();
    let signs = [1.0, -1.0, 1.0, 1.0];
    let mut acc = SparseMatrix::zero(space.dim());
    for (off, s) in signs.iter().enumerate() {
        let mode = cyclic_add(2 * j, off + 1, modes);
        acc = acc.add_scaled(re(0.5 * s), &lower_sparse(space, mode)?)?;
    }
    LinearOperator::from_sparse(space, acc)
}

/// |<ψ_f|GHZ′>| of the uncorrected arithmetic scheme.
pub fn closed_form_overlap(n: usize) -> f64 {
    let n_i = n as i32;
    let r2 = 2f64.sqrt();
    ((r2 - 1.0).powi(n_i) + (r2 + 1.0).powi(n_i)) / (2f64.powi(n_i) * (3f64.powi(n_i) + 1.0)).sqrt()
}

/// Success probability of the general arithmetic scheme.
pub fn closed_form_success(n: usize, corrected: bool) -> f64 {
    let n_i = n as i32;
    if corrected {
        2f64.powi(-(2 * n_i - 1))
    } else {
        (3f64.powi(n_i) + 1.0) / 2f64.powi(3 * n_i - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn basis_map_rows() {
        let m = BasisMap::reference();
        assert!(m.orthogonality_error() < 1e-12);
        let r = FRAC_1_SQRT_2;
        let (c, s) = (LAMBDA.cos(), LAMBDA.sin());
        let expect = [
            [0.5, 0.5, 0.5, 0.5],
            [-c * r, -s * r, s * r, c * r],
            [0.5, -0.5, -0.5, 0.5],
            [-s * r, c * r, -c * r, s * r],
        ];
        for (i, row) in expect.iter().enumerate() {
            for (l, v) in row.iter().enumerate() {
                assert_eq!(m.coefficients[(i, l)], *v);
            }
        }
    }

    #[test]
    fn collective_single_phonon_expands_evenly() {
        let space = ModeSpace::new(4, 1, false).unwrap();
        let m = BasisMap::reference();
        let c1 = HybridState::basis(&space, &[1, 0, 0, 0], None).unwrap();
        let local = m.collective_to_local(&c1).unwrap();
        for l in 0..4 {
            let mut occ = [0; 4];
            occ[l] = 1;
            assert!((local.amplitude(&occ, None).unwrap() - re(0.5)).norm() < 1e-15);
        }
        let vac = HybridState::basis(&space, &[0; 4], None).unwrap();
        assert!(m.local_to_collective(&vac).unwrap().approx_eq(&vac, 0.0));
    }

    #[test]
    fn local_collective_round_trip() {
        let space = ModeSpace::new(4, 3, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // random state with at most 3 phonons in total so no weight leaves the cutoff
        let mut psi = HybridState::zeros(&space);
        for i in 0..space.dim() {
            if space.total_occupation(i) <= 3 {
                psi.amplitudes_mut()[i] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        let m = BasisMap::reference();
        let back = m.collective_to_local(&m.local_to_collective(&psi).unwrap()).unwrap();
        assert!(back.approx_eq(&psi, 1e-12));
        assert!((m.local_to_collective(&psi).unwrap().norm() - psi.norm()).abs() < 1e-12);
        let bad = ModeSpace::new(3, 2, false).unwrap();
        assert!(m.local_to_collective(&HybridState::zeros(&bad)).is_err());
    }

    #[test]
    fn operator_transform_matches_state_transform() {
        let space = ModeSpace::new(4, 2, false).unwrap();
        let m = BasisMap::reference();
        let a = crate::fock::ladder_lower(&space, 2).unwrap();
        let ac = m.operator_to_collective(&a).unwrap();
        let psi = HybridState::basis(&space, &[1, 1, 0, 0], None).unwrap();
        let lhs = ac.apply(&m.local_to_collective(&psi).unwrap()).unwrap();
        let rhs = m.local_to_collective(&a.apply(&psi).unwrap()).unwrap();
        assert!(lhs.approx_eq(&rhs, 1e-13));
    }

    #[test]
    fn sym_by_gates_matches_direct() {
        let space = ModeSpace::new(4, 1, true).unwrap();
        let direct = prepare_sym(&space).unwrap();
        let gated = prepare_sym_by_gates(&space).unwrap();
        assert!(gated.approx_eq(&direct, 1e-12));
        assert_eq!(direct.norm(), 1.0);
    }

    #[test]
    fn aj_phases() {
        let space = ModeSpace::new(4, 1, false).unwrap();
        let a = subtraction_aj(&space, 0, 2).unwrap();
        let sym = prepare_sym(&space).unwrap();
        let out = a.apply(&sym).unwrap();
        let expected = [
            (vec![0, 1, 1, 1], 1.0),
            (vec![1, 0, 1, 1], 1.0),
            (vec![1, 1, 0, 1], -1.0),
            (vec![1, 1, 1, 0], 1.0),
        ];
        for (occ, v) in expected {
            assert!((out.amplitude(&occ, None).unwrap() - re(v)).norm() < 1e-14);
        }
        assert_eq!(out.definite_particle_number(1e-12), Some(3));
        let space1 = ModeSpace::new(2, 1, false).unwrap();
        let a10 = subtraction_aj(&space1, 0, 1).unwrap().to_sparse();
        let sum = crate::fock::ladder_lower(&space1, 1)
            .unwrap()
            .plus(&crate::fock::ladder_lower(&space1, 2).unwrap())
            .unwrap()
            .to_sparse();
        assert!((a10.to_dense() - sum.to_dense()).norm() < 1e-14);
    }

    #[test]
    fn sculpt_j_outputs_n_phonons() {
        for n in 1..=3 {
            let r = sculpt_j(n).unwrap();
            assert_eq!(r.final_state.definite_particle_number(1e-12), Some(n));
            assert!(r.success_prob > 0.0 && r.success_prob <= 1.0);
        }
        let r1 = sculpt_j(1).unwrap();
        assert!((r1.fidelity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ghz_targets() {
        let space = ModeSpace::new(4, 1, false).unwrap();
        let main = ghz_target(&space, GhzConvention::Main).unwrap();
        assert!((main.amplitude(&[1, 1, 0, 0], None).unwrap() - re(FRAC_1_SQRT_2)).norm() < 1e-15);
        assert!((main.amplitude(&[0, 0, 1, 1], None).unwrap() + re(FRAC_1_SQRT_2)).norm() < 1e-15);
        let inter = ghz_target(&space, GhzConvention::Interleaved).unwrap();
        assert!((inter.amplitude(&[1, 0, 1, 0], None).unwrap() - re(FRAC_1_SQRT_2)).norm() < 1e-15);
        assert!((inter.amplitude(&[0, 1, 0, 1], None).unwrap() - re(FRAC_1_SQRT_2)).norm() < 1e-15);
        let two = ModeSpace::new(2, 1, false).unwrap();
        let t = ghz_target(&two, GhzConvention::Main).unwrap();
        assert!((t.amplitude(&[0, 1], None).unwrap() - re(FRAC_1_SQRT_2)).norm() < 1e-15);
    }

    #[test]
    fn scenarios_match_worked_numbers() {
        for with_ia in [true, false] {
            let uncorrected = if with_ia {
                scenario_with_ia(4, false).unwrap()
            } else {
                scenario_without_ia(4, false).unwrap()
            };
            assert!((uncorrected.success_prob - 5.0 / 16.0).abs() < 1e-12);
            assert!((uncorrected.overlap_magnitude - 3.0 / 10f64.sqrt()).abs() < 1e-12);
            assert!((uncorrected.fidelity - 0.9).abs() < 1e-12);
            let after = uncorrected.checkpoint("after_subtraction").unwrap();
            let a = after.amplitude(&[1, 1, 0, 0], Some(Spin::Ground)).unwrap();
            let b = after.amplitude(&[0, 0, 1, 1], Some(Spin::Ground)).unwrap();
            // (2|1100> - |0011>)/4 up to a global phase
            assert!((a.norm() - 0.5).abs() < 1e-12 && (b.norm() - 0.25).abs() < 1e-12);
            assert!(((a / b) + re(2.0)).norm() < 1e-12);
            let corrected = if with_ia {
                scenario_with_ia(4, true).unwrap()
            } else {
                scenario_without_ia(4, true).unwrap()
            };
            assert!((corrected.success_prob - 0.125).abs() < 1e-12);
            assert!((corrected.fidelity - 1.0).abs() < 1e-12);
            assert!((corrected.logged_probability() - corrected.success_prob).abs() < 1e-12);
        }
    }

    #[test]
    fn scenarios_share_the_post_beam_splitter_state() {
        let a = scenario_with_ia(4, false).unwrap();
        let b = scenario_without_ia(4, false).unwrap();
        let sa = a.checkpoint("after_beam_splitters").unwrap();
        let sb = b.checkpoint("after_beam_splitters").unwrap();
        assert!(sa.approx_eq(sb, 1e-12));
    }

    /// (1/16) Π_f (Σ_m s_{f,m} a_m†)|0> expanded by brute force over all index choices.
    fn product_expansion_oracle(space: &ModeSpace) -> HybridState {
        let signs = [
            [1.0, 1.0, 1.0, 1.0],
            [1.0, 1.0, -1.0, -1.0],
            [1.0, -1.0, 1.0, -1.0],
            [1.0, -1.0, -1.0, 1.0],
        ];
        let mut out = HybridState::zeros(space);
        for choice in 0..256usize {
            let picks = [choice & 3, (choice >> 2) & 3, (choice >> 4) & 3, (choice >> 6) & 3];
            let mut occ = [0usize; 4];
            let mut coeff = 1.0 / 16.0;
            for (f, &m) in picks.iter().enumerate() {
                occ[m] += 1;
                coeff *= signs[f][m];
            }
            let fact: f64 = occ.iter().map(|&k| (1..=k).product::<usize>() as f64).product();
            let i = space.basis_index(&occ, Some(Spin::Ground)).unwrap();
            out.amplitudes_mut()[i] += re(coeff * fact.sqrt());
        }
        out
    }

    #[test]
    fn post_beam_splitter_state_matches_product_expansion() {
        let space = scenario_space(4).unwrap();
        let oracle = product_expansion_oracle(&space);
        assert!((oracle.norm() - 1.0).abs() < 1e-12);
        for r in [
            scenario_with_ia(4, false).unwrap(),
            scenario_without_ia(4, false).unwrap(),
        ] {
            let s = r.checkpoint("after_beam_splitters").unwrap();
            let phase = oracle.inner(s).unwrap();
            assert!((phase.norm() - 1.0).abs() < 1e-12);
            assert!(s.approx_eq(&oracle.scaled(phase), 1e-12));
        }
    }

    #[test]
    fn without_ia_beam_splitter_order_matters() {
        let reordered = scenario_without_ia_ordered(4, false, &[(1, 2), (1, 3), (3, 4), (2, 4)]).unwrap();
        let reference = scenario_without_ia(4, false).unwrap();
        let a = reordered.checkpoint("after_beam_splitters").unwrap();
        let b = reference.checkpoint("after_beam_splitters").unwrap();
        assert!(!a.approx_eq(b, 1e-6));
    }

    #[test]
    fn ladder_pair_products_vanish_on_sym() {
        // (a_x + a_y)(a_x - a_y) = a_x² - a_y² annihilates a state with single occupations
        let space = ModeSpace::new(4, 2, false).unwrap();
        let sym = prepare_sym(&space).unwrap();
        let ax = crate::fock::ladder_lower(&space, 1).unwrap();
        let ay = crate::fock::ladder_lower(&space, 2).unwrap();
        let sq = ax
            .compose(&ax)
            .unwrap()
            .plus(&ay.compose(&ay).unwrap().scaled(re(-1.0)))
            .unwrap();
        assert!(sq.apply(&sym).unwrap().norm() < 1e-15);
    }

    #[test]
    fn general_schemes() {
        for n in 1..=3 {
            let ladder = general_sculpt(n, SculptVariant::Ladder, false).unwrap();
            assert!((ladder.fidelity - 1.0).abs() < 1e-12, "ladder n={n}");
            let plain = general_sculpt(n, SculptVariant::Arithmetic, false).unwrap();
            assert!((plain.success_prob - closed_form_success(n, false)).abs() < 1e-10);
            assert!((plain.overlap_magnitude - closed_form_overlap(n)).abs() < 1e-10);
            let fixed = general_sculpt(n, SculptVariant::Arithmetic, true).unwrap();
            assert!((fixed.success_prob - closed_form_success(n, true)).abs() < 1e-10);
            assert!((fixed.fidelity - 1.0).abs() < 1e-10);
        }
        assert!(general_sculpt(0, SculptVariant::Ladder, false).is_err());
        assert!(general_sculpt(5, SculptVariant::Ladder, false).is_err());
    }

    #[test]
    fn closed_form_values() {
        assert!((closed_form_overlap(2) - 3.0 / 10f64.sqrt()).abs() < 1e-15);
        assert!((closed_form_success(1, false) - 1.0).abs() < 1e-15);
        assert!((closed_form_success(2, false) - 5.0 / 16.0).abs() < 1e-15);
        assert!((closed_form_success(3, true) - 1.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn cyclic_addition() {
        assert_eq!(cyclic_add(4, 1, 4), 1);
        assert_eq!(cyclic_add(2, 1, 4), 3);
        assert_eq!(cyclic_add(6, 3, 6), 3);
    }
}
