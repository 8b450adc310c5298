//! Instantaneous, noiseless gate actions.
//!
//! Conventions (all angles in radians):
//!
//! * carrier: `|g> -> cos(θ/2)|g> - i e^{iφ} sin(θ/2)|e>`,
//!   `|e> -> cos(θ/2)|e> - i e^{-iφ} sin(θ/2)|g>`
//! * red sideband on mode j: `exp[-i θ/2 (e^{iφ} σ- a† + e^{-iφ} σ+ a)]`,
//!   so `|e,n> -> cos|e,n> - i e^{iφ} sin|g,n+1>` with angle `θ√(n+1)/2`
//! * blue sideband: `exp[-i θ/2 (e^{-iφ} σ+ a† + e^{iφ} σ- a)]`
//! * displacement: `exp[θ (a† e^{iφ} - a e^{-iφ})]`
//! * beam splitter: `exp[i θ/2 (a_k† a_j e^{iφ} + a_k a_j† e^{-iφ})]`

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fock::{
    arithmetic_lower, lower_sparse, raise_sparse, spin_map, vacuum_projector, HybridState, LinearOperator, ModeSpace,
    SparseMatrix, Spin, SpinOp, C64,
};

/// Angle and phase of a gate together with the modes it addresses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateParams {
    pub theta: f64,
    pub phi: f64,
    pub mode_j: Option<usize>,
    pub mode_k: Option<usize>,
}

impl GateParams {
    /// φ reduced into [0, 2π).
    pub fn canonical_phi(&self) -> f64 {
        self.phi.rem_euclid(2.0 * PI)
    }
}

/// One ideal gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    Carrier { theta: f64, phi: f64 },
    Rsb { mode: usize, theta: f64, phi: f64 },
    Bsb { mode: usize, theta: f64, phi: f64 },
    Displacement { mode: usize, theta: f64, phi: f64 },
    BeamSplitter { j: usize, k: usize, theta: f64, phi: f64 },
}

impl Gate {
    pub fn operator(&self, space: &ModeSpace) -> Result<LinearOperator> {
        match *self {
            Gate::Carrier { theta, phi } => carrier(space, theta, phi),
            Gate::Rsb { mode, theta, phi } => rsb(space, mode, theta, phi),
            Gate::Bsb { mode, theta, phi } => bsb(space, mode, theta, phi),
            Gate::Displacement { mode, theta, phi } => displacement(space, mode, theta, phi),
            Gate::BeamSplitter { j, k, theta, phi } => beam_splitter(space, j, k, theta, phi),
        }
    }

    pub fn params(&self) -> GateParams {
        match *self {
            Gate::Carrier { theta, phi } => GateParams {
                theta,
                phi,
                mode_j: None,
                mode_k: None,
            },
            Gate::Rsb { mode, theta, phi }
            | Gate::Bsb { mode, theta, phi }
            | Gate::Displacement { mode, theta, phi } => GateParams {
                theta,
                phi,
                mode_j: Some(mode),
                mode_k: None,
            },
            Gate::BeamSplitter { j, k, theta, phi } => GateParams {
                theta,
                phi,
                mode_j: Some(j),
                mode_k: Some(k),
            },
        }
    }

    /// Short label such as `RSB2` or `B12`.
    pub fn label(&self) -> String {
        match *self {
            Gate::Carrier { .. } => "CARR".into(),
            Gate::Rsb { mode, .. } => format!("RSB{mode}"),
            Gate::Bsb { mode, .. } => format!("BSB{mode}"),
            Gate::Displacement { mode, .. } => format!("D{mode}"),
            Gate::BeamSplitter { j, k, .. } => format!("B{j}{k}"),
        }
    }

    pub fn apply(&self, state: &HybridState) -> Result<HybridState> {
        self.operator(state.space())?.apply(state)
    }
}

fn cis(x: f64) -> C64 {
    C64::from_polar(1.0, x)
}

/// Spin rotation C(θ, φ) = exp(−iθ/2 (e^{iφ}σ₊ + e^{−iφ}σ₋)).
pub fn carrier(space: &ModeSpace, theta: f64, phi: f64) -> Result<LinearOperator> {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let i = C64::new(0.0, 1.0);
    // columns are images of |g>, |e>
    let m = [
        [C64::new(c, 0.0), -i * cis(-phi) * s],
        [-i * cis(phi) * s, C64::new(c, 0.0)],
    ];
    LinearOperator::from_sparse(space, spin_map(space, m)?)
}

fn spin_mode_generator(
    space: &ModeSpace,
    mode: usize,
    spin_up_with_raise: bool,
    coeff_up: C64,
) -> Result<SparseMatrix> {
    // coeff_up * σ+ X + h.c., X = a† (blue) or a (red)
    let sp = spin_map(space, SpinOp::Raise.matrix())?;
    let x = if spin_up_with_raise {
        raise_sparse(space, mode)?
    } else {
        lower_sparse(space, mode)?
    };
    let term = sp.matmul(&x)?.scaled(coeff_up);
    term.add_scaled(C64::new(1.0, 0.0), &term.adjoint())
}

/// Red sideband on `mode`: |e,n> <-> |g,n+1>.
pub fn rsb(space: &ModeSpace, mode: usize, theta: f64, phi: f64) -> Result<LinearOperator> {
    space.check_mode(mode)?;
    let h = spin_mode_generator(space, mode, false, cis(-phi))?;
    LinearOperator::exp_of(space, h.scaled(C64::new(0.0, -theta / 2.0)))
}

/// Blue sideband on `mode`: |g,n> <-> |e,n+1>.
pub fn bsb(space: &ModeSpace, mode: usize, theta: f64, phi: f64) -> Result<LinearOperator> {
    space.check_mode(mode)?;
    let h = spin_mode_generator(space, mode, true, cis(-phi))?;
    LinearOperator::exp_of(space, h.scaled(C64::new(0.0, -theta / 2.0)))
}

/// Coherent displacement of `mode` by θe^{iφ}. Acts on the modes only.
pub fn displacement(space: &ModeSpace, mode: usize, theta: f64, phi: f64) -> Result<LinearOperator> {
    space.check_mode(mode)?;
    let up = raise_sparse(space, mode)?.scaled(cis(phi) * theta);
    let g = up.add_scaled(C64::new(-1.0, 0.0), &up.adjoint())?;
    LinearOperator::exp_of(space, g)
}

/// Warning text when the cutoff is too small for a displacement of size θ.
pub fn displacement_truncation_warning(space: &ModeSpace, theta: f64) -> Option<String> {
    let cutoff = space.cutoff() as f64;
    (theta * theta > cutoff / 4.0).then(|| {
        format!(
            "displacement |θ|² = {:.3} exceeds cutoff/4 = {:.3}; truncation errors likely",
            theta * theta,
            cutoff / 4.0
        )
    })
}

/// Two-mode beam splitter between modes `j` and `k`.
pub fn beam_splitter(space: &ModeSpace, j: usize, k: usize, theta: f64, phi: f64) -> Result<LinearOperator> {
    space.check_mode(j)?;
    space.check_mode(k)?;
    if j == k {
        return Err(Error::InvalidArgument("beam splitter needs two distinct modes".into()));
    }
    let hop = raise_sparse(space, k)?
        .matmul(&lower_sparse(space, j)?)?
        .scaled(cis(phi));
    let g = hop.add_scaled(C64::new(1.0, 0.0), &hop.adjoint())?;
    LinearOperator::exp_of(space, g.scaled(C64::new(0.0, theta / 2.0)))
}

/// Remove the vacuum component of `mode` and shift the rest down by one.
/// Returns the unnormalized state and the branch probability relative to
/// the input norm.
pub fn arithmetic_subtract(state: &HybridState, mode: usize) -> Result<(HybridState, f64)> {
    let space = state.space();
    let p0 = vacuum_projector(space, mode)?.apply(state)?;
    let kept = state.add_scaled(C64::new(-1.0, 0.0), &p0)?;
    let n_in = state.norm_sqr();
    if n_in == 0.0 {
        return Err(Error::ImpossibleBranch);
    }
    let p = kept.norm_sqr() / n_in;
    if p <= 1e-300 {
        return Err(Error::ImpossibleBranch);
    }
    let out = arithmetic_lower(space, mode)?.apply(&kept)?;
    Ok((out, p))
}

/// Keep one spin branch. Returns the unnormalized projection and its
/// probability relative to the input norm.
pub fn post_select_spin(state: &HybridState, branch: Spin) -> Result<(HybridState, f64)> {
    let out = state.project_spin(branch)?;
    let n_in = state.norm_sqr();
    if n_in == 0.0 {
        return Err(Error::ImpossibleBranch);
    }
    let p = out.norm_sqr() / n_in;
    if p <= 1e-300 {
        return Err(Error::ImpossibleBranch);
    }
    Ok((out, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{number, spin_op, total_number};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn re(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn unitary_error(u: &DMatrix<C64>) -> f64 {
        let d = u.nrows();
        (u.adjoint() * u - DMatrix::<C64>::identity(d, d)).norm()
    }

    fn random_state(space: &ModeSpace, seed: u64) -> HybridState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps = (0..space.dim())
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        HybridState::new(space, amps).unwrap().normalize().unwrap().0
    }

    #[test]
    fn carrier_pi_half_phase_flips_to_excited() {
        let space = ModeSpace::new(1, 1, true).unwrap();
        let g = HybridState::basis(&space, &[0], Some(Spin::Ground)).unwrap();
        let e = HybridState::basis(&space, &[0], Some(Spin::Excited)).unwrap();
        let out = carrier(&space, PI, PI / 2.0).unwrap().apply(&g).unwrap();
        assert!(out.approx_eq(&e, 1e-15));
        let id = carrier(&space, 0.0, 1.3).unwrap().to_dense();
        assert!((id - DMatrix::<C64>::identity(4, 4)).norm() < 1e-15);
        for phi in [0.0, 0.4, -2.0] {
            assert!(unitary_error(&carrier(&space, PI / 2.0, phi).unwrap().to_dense()) < 1e-14);
        }
    }

    #[test]
    fn rsb_worked_example() {
        let space = ModeSpace::new(2, 2, true).unwrap();
        let psi = HybridState::basis(&space, &[0, 1], Some(Spin::Ground)).unwrap();
        let out = rsb(&space, 2, 2.0 * PI / 3.0, PI / 2.0).unwrap().apply(&psi).unwrap();
        let g1 = out.amplitude(&[0, 1], Some(Spin::Ground)).unwrap();
        let e0 = out.amplitude(&[0, 0], Some(Spin::Excited)).unwrap();
        assert!((g1 - re(0.5)).norm() < 1e-14);
        assert!((e0 - re(-(3f64.sqrt()) / 2.0)).norm() < 1e-14);
        assert!((g1.norm_sqr() - 0.25).abs() < 1e-14 && (e0.norm_sqr() - 0.75).abs() < 1e-14);
    }

    #[test]
    fn rsb_pi_pulse_loads_phonon() {
        let space = ModeSpace::new(1, 3, true).unwrap();
        let e0 = HybridState::basis(&space, &[0], Some(Spin::Excited)).unwrap();
        let g1 = HybridState::basis(&space, &[1], Some(Spin::Ground)).unwrap();
        let out = rsb(&space, 1, PI, PI / 2.0).unwrap().apply(&e0).unwrap();
        assert!(out.approx_eq(&g1, 1e-14));
        let g0 = HybridState::basis(&space, &[0], Some(Spin::Ground)).unwrap();
        assert!(rsb(&space, 1, 1.1, 0.3)
            .unwrap()
            .apply(&g0)
            .unwrap()
            .approx_eq(&g0, 1e-15));
        let id = rsb(&space, 1, 0.0, 0.3).unwrap().to_dense();
        assert!((id - DMatrix::<C64>::identity(8, 8)).norm() < 1e-15);
    }

    #[test]
    fn bsb_conventions() {
        let space = ModeSpace::new(1, 3, true).unwrap();
        let g0 = HybridState::basis(&space, &[0], Some(Spin::Ground)).unwrap();
        let e1 = HybridState::basis(&space, &[1], Some(Spin::Excited)).unwrap();
        // documented phase: -i e^{-iπ/2} = -1
        let out = bsb(&space, 1, PI, PI / 2.0).unwrap().apply(&g0).unwrap();
        assert!(out.approx_eq(&e1.scaled(re(-1.0)), 1e-14));
        let id = bsb(&space, 1, 0.0, 0.3).unwrap().to_dense();
        assert!((id - DMatrix::<C64>::identity(8, 8)).norm() < 1e-15);
    }

    #[test]
    fn bsb_is_spin_flipped_rsb() {
        let space = ModeSpace::new(2, 2, true).unwrap();
        let flip = carrier(&space, PI, 0.0).unwrap().to_dense();
        for (theta, phi) in [(0.7, 0.3), (PI, -1.2), (2.5, 2.0)] {
            let b = bsb(&space, 2, theta, phi).unwrap().to_dense();
            let r = rsb(&space, 2, theta, -phi).unwrap().to_dense();
            let rebuilt = -(&flip * r * &flip);
            assert!((b - rebuilt).norm() < 1e-13);
        }
    }

    #[test]
    fn sidebands_conserve_excitations() {
        let space = ModeSpace::new(2, 3, true).unwrap();
        // σz/2 + n for rsb, σz/2 - n for bsb
        let half_z = spin_op(&space, SpinOp::Z).unwrap().scaled(re(0.5));
        let n2 = number(&space, 2).unwrap();
        let red_q = half_z.plus(&n2).unwrap();
        let blue_q = half_z.plus(&n2.scaled(re(-1.0))).unwrap();
        for seed in 0..4 {
            // keep away from the cutoff so truncation plays no role
            let mut psi = random_state(&space, seed);
            for (i, a) in psi.amplitudes_mut().iter_mut().enumerate() {
                if space.occupation(i, 2) >= 2 {
                    *a = re(0.0);
                }
            }
            let psi = psi.normalize().unwrap().0;
            let r = rsb(&space, 2, 1.3, 0.4).unwrap().apply(&psi).unwrap();
            let b = bsb(&space, 2, 1.3, 0.4).unwrap().apply(&psi).unwrap();
            let before_r = psi.expectation(&red_q).unwrap();
            let before_b = psi.expectation(&blue_q).unwrap();
            assert!((r.expectation(&red_q).unwrap() - before_r).norm() < 1e-12);
            assert!((b.expectation(&blue_q).unwrap() - before_b).norm() < 1e-12);
        }
    }

    #[test]
    fn displacement_moves_mean_field() {
        let space = ModeSpace::new(1, 12, false).unwrap();
        let vac = HybridState::basis(&space, &[0], None).unwrap();
        let (theta, phi) = (0.3, 0.7);
        let d = displacement(&space, 1, theta, phi).unwrap();
        let coh = d.apply(&vac).unwrap();
        let a = crate::fock::ladder_lower(&space, 1).unwrap();
        let mean = coh.expectation(&a).unwrap();
        assert!((mean - C64::from_polar(theta, phi)).norm() < 1e-8);
        let back = displacement(&space, 1, -theta, phi).unwrap().apply(&coh).unwrap();
        assert!(back.approx_eq(&vac, 1e-8));
        assert!(displacement_truncation_warning(&space, 0.3).is_none());
        assert!(displacement_truncation_warning(&space, 2.0).is_some());
        let id = displacement(&space, 1, 0.0, 0.2).unwrap().apply(&coh).unwrap();
        assert!(id.approx_eq(&coh, 0.0));
    }

    #[test]
    fn beam_splitter_swap_and_inverse() {
        let space = ModeSpace::new(2, 2, false).unwrap();
        let ten = HybridState::basis(&space, &[1, 0], None).unwrap();
        let one = HybridState::basis(&space, &[0, 1], None).unwrap();
        // 2x2 block: exp(iπ/2 (e^{-iπ/2}|01><10| + h.c.)) |10> = i e^{-iπ/2}|01> = |01>
        let out = beam_splitter(&space, 1, 2, PI, -PI / 2.0).unwrap().apply(&ten).unwrap();
        assert!(out.approx_eq(&one, 1e-14));
        let b = beam_splitter(&space, 1, 2, 0.9, 0.3).unwrap().to_dense();
        let binv = beam_splitter(&space, 1, 2, -0.9, 0.3).unwrap().to_dense();
        assert!((&b * binv - DMatrix::<C64>::identity(9, 9)).norm() < 1e-13);
        assert!(beam_splitter(&space, 1, 1, 0.3, 0.0).is_err());
    }

    #[test]
    fn beam_splitter_heisenberg_relation() {
        // B a_j B† = cos(θ/2) a_j - i e^{-iφ} sin(θ/2) a_k for this orientation
        let space = ModeSpace::new(2, 4, false).unwrap();
        let (theta, phi) = (1.1, 0.4);
        let b = beam_splitter(&space, 1, 2, theta, phi).unwrap().to_dense();
        let a1 = crate::fock::ladder_lower(&space, 1).unwrap().to_dense();
        let a2 = crate::fock::ladder_lower(&space, 2).unwrap().to_dense();
        let lhs = &b * &a1 * b.adjoint();
        let rhs = &a1 * re((theta / 2.0).cos()) + &a2 * (C64::new(0.0, -1.0) * cis(-phi) * (theta / 2.0).sin());
        // compare on the sector with at most 3 phonons where truncation is invisible
        for c in 0..space.dim() {
            if space.total_occupation(c) <= 3 {
                for r in 0..space.dim() {
                    assert!((lhs[(r, c)] - rhs[(r, c)]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn beam_splitter_conserves_phonons() {
        let space = ModeSpace::new(3, 2, false).unwrap();
        let n = total_number(&space);
        for seed in 10..14 {
            let psi = random_state(&space, seed);
            let out = beam_splitter(&space, 1, 3, 2.1, -0.5).unwrap().apply(&psi).unwrap();
            assert!((out.expectation(&n).unwrap() - psi.expectation(&n).unwrap()).norm() < 1e-12);
        }
    }

    #[test]
    fn unitarity_in_untruncated_sector() {
        let space = ModeSpace::new(2, 3, true).unwrap();
        let gates = [
            rsb(&space, 1, 1.2, 0.5).unwrap(),
            bsb(&space, 2, 0.8, -0.3).unwrap(),
            beam_splitter(&space, 2, 1, 1.7, 0.2).unwrap(),
        ];
        for u in gates {
            let m = u.to_dense();
            let prod = m.adjoint() * &m;
            for c in 0..space.dim() {
                if space.total_occupation(c) <= 2 {
                    for r in 0..space.dim() {
                        let expect = if r == c { 1.0 } else { 0.0 };
                        assert!((prod[(r, c)] - re(expect)).norm() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn subtraction_branches() {
        let space = ModeSpace::new(1, 3, false).unwrap();
        let one = HybridState::basis(&space, &[1], None).unwrap();
        let zero = HybridState::basis(&space, &[0], None).unwrap();
        let (out, p) = arithmetic_subtract(&one, 1).unwrap();
        assert!(out.approx_eq(&zero, 0.0) && p == 1.0);
        let r = 0.5f64.sqrt();
        let sup = zero.scaled(re(r)).add_scaled(re(r), &one).unwrap();
        let (out, p) = arithmetic_subtract(&sup, 1).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        assert!(out.approx_eq(&zero.scaled(re(r)), 1e-15));
        assert!(matches!(arithmetic_subtract(&zero, 1), Err(Error::ImpossibleBranch)));
    }

    #[test]
    fn post_selection_branches() {
        let space = ModeSpace::new(1, 1, true).unwrap();
        let g = HybridState::basis(&space, &[1], Some(Spin::Ground)).unwrap();
        let (out, p) = post_select_spin(&g, Spin::Ground).unwrap();
        assert!(out.approx_eq(&g, 0.0) && p == 1.0);
        assert!(matches!(
            post_select_spin(&g, Spin::Excited),
            Err(Error::ImpossibleBranch)
        ));
    }
}
