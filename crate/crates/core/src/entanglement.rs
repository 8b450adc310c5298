//! Mode and particle entanglement of motional states, measured by the von
//! Neumann entropy (natural log) maximized over bipartitions.
//!
//! A spin factor, when present, has to be in a product state with the
//! motion; it is dropped before any entropy is computed.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fock::{
    lower_sparse, DensityOperator, HybridState, LinearOperator, ModeSpace, SparseMatrix, Subsystem, C64,
    DEFAULT_DIM_LIMIT,
};

/// Largest tensor (entries) a particle expansion may allocate.
pub const PARTICLE_TENSOR_LIMIT: usize = 1 << 22;

/// -Σ p log p with 0 log 0 = 0; tiny negative round-off is clipped.
pub fn entropy_of(probabilities: &[f64]) -> f64 {
    probabilities
        .iter()
        .filter(|&&p| p > 1e-300)
        .map(|&p| -p * p.ln())
        .sum()
}

pub fn von_neumann_entropy(rho: &DensityOperator) -> Result<f64> {
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("density operator trace {tr} is not 1")));
    }
    Ok(entropy_of(&rho.eigenvalues()))
}

/// Motional state of a state whose spin factorizes; unchanged when there is no spin.
pub fn motional_part(state: &HybridState) -> Result<HybridState> {
    let space = state.space();
    if !space.has_spin() {
        return Ok(state.clone());
    }
    let rho_s = state.reduced_density(&[Subsystem::Spin])?;
    let tr = rho_s.trace().re;
    if tr <= 0.0 {
        return Err(Error::ImpossibleBranch);
    }
    let purity: f64 = rho_s.data().iter().map(|v| v.norm_sqr()).sum::<f64>() / (tr * tr);
    if purity < 1.0 - 1e-10 {
        return Err(Error::InvalidArgument(
            "spin is entangled with the motion; entropies need a product spin state".into(),
        ));
    }
    let s = if rho_s.get(0, 0).re >= rho_s.get(1, 1).re { 0 } else { 1 };
    let motional = ModeSpace::build(
        space.num_modes(),
        space.cutoff(),
        false,
        space.max_total(),
        DEFAULT_DIM_LIMIT,
    )?;
    let amps = (0..space.motional_dim())
        .map(|m| state.amplitudes()[space.join(s, m)])
        .collect();
    Ok(HybridState::new(&motional, amps)?.normalize()?.0)
}

/// Maximum entropy of the reduced state over all bipartitions of the modes.
///
/// Only subsets containing mode 1 are enumerated; for a pure state the
/// complementary subset has the same entropy.
pub fn mode_entanglement(state: &HybridState) -> Result<f64> {
    let psi = motional_part(state)?.normalize()?.0;
    let modes = psi.space().num_modes();
    if modes < 2 {
        return Ok(0.0);
    }
    let mut best = 0.0f64;
    for mask in 1usize..(1 << modes) - 1 {
        if mask & 1 == 0 {
            continue;
        }
        let keep: Vec<Subsystem> = (0..modes)
            .filter(|m| mask >> m & 1 == 1)
            .map(|m| Subsystem::Mode(m + 1))
            .collect();
        best = best.max(von_neumann_entropy(&psi.reduced_density(&keep)?)?);
    }
    Ok(best)
}

/// First-quantized form of a state with a definite number of bosons: a
/// symmetric tensor over `single_particle_dim^num_particles` entries, first
/// particle slowest.
#[derive(Debug, Clone)]
pub struct ParticleExpansion {
    pub num_particles: usize,
    pub single_particle_dim: usize,
    pub tensor: Vec<C64>,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Every ordered sequence of mode indices with the given occupations.
fn sequences(occ: &mut [usize], prefix: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
    if prefix.len() == n {
        out.push(prefix.clone());
        return;
    }
    for m in 0..occ.len() {
        if occ[m] > 0 {
            occ[m] -= 1;
            prefix.push(m);
            sequences(occ, prefix, n, out);
            prefix.pop();
            occ[m] += 1;
        }
    }
}

impl ParticleExpansion {
    pub fn from_state(state: &HybridState) -> Result<Self> {
        let psi = motional_part(state)?;
        let n = psi
            .definite_particle_number(1e-12)
            .ok_or(Error::IndefiniteParticleNumber)?;
        let d = psi.space().num_modes();
        let len = d
            .checked_pow(n as u32)
            .filter(|&l| l <= PARTICLE_TENSOR_LIMIT)
            .ok_or(Error::DimensionTooLarge {
                dim: (d as u128).saturating_pow(n as u32),
                limit: PARTICLE_TENSOR_LIMIT,
            })?;
        let mut tensor = vec![C64::new(0.0, 0.0); len];
        for (occ, _, amp) in psi.terms(0.0) {
            let mut occ = occ;
            let w = (occ.iter().map(|&k| factorial(k)).product::<f64>() / factorial(n)).sqrt();
            let mut seqs = Vec::new();
            sequences(&mut occ, &mut Vec::with_capacity(n), n, &mut seqs);
            for seq in seqs {
                let idx = seq.iter().fold(0, |acc, &m| acc * d + m);
                tensor[idx] += amp * w;
            }
        }
        Ok(Self {
            num_particles: n,
            single_particle_dim: d,
            tensor,
        })
    }

    pub fn norm(&self) -> f64 {
        self.tensor.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    fn digits(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.num_particles];
        for slot in out.iter_mut().rev() {
            *slot = idx % self.single_particle_dim;
            idx /= self.single_particle_dim;
        }
        out
    }

    /// Largest change of any entry under a transposition of adjacent particles.
    pub fn exchange_symmetry_error(&self) -> f64 {
        let d = self.single_particle_dim;
        let mut worst = 0.0f64;
        for (idx, v) in self.tensor.iter().enumerate() {
            let digits = self.digits(idx);
            for p in 0..self.num_particles.saturating_sub(1) {
                let mut swapped = digits.clone();
                swapped.swap(p, p + 1);
                let j = swapped.iter().fold(0, |acc, &m| acc * d + m);
                worst = worst.max((v - self.tensor[j]).norm());
            }
        }
        worst
    }

    /// Occupation-number amplitudes recovered from the tensor, `(occupations, amplitude)`.
    pub fn occupation_amplitudes(&self) -> Vec<(Vec<usize>, C64)> {
        let n = self.num_particles;
        let mut out = Vec::new();
        for (idx, v) in self.tensor.iter().enumerate() {
            let digits = self.digits(idx);
            if digits.windows(2).any(|w| w[0] > w[1]) {
                continue;
            }
            let mut occ = vec![0; self.single_particle_dim];
            for &m in &digits {
                occ[m] += 1;
            }
            let w = (factorial(n) / occ.iter().map(|&k| factorial(k)).product::<f64>()).sqrt();
            out.push((occ, v * w));
        }
        out
    }

    /// Schmidt weights of the split into the first `k` particles and the rest.
    pub fn split_weights(&self, k: usize) -> Vec<f64> {
        let d = self.single_particle_dim;
        let rows = d.pow(k as u32);
        let cols = self.tensor.len() / rows;
        let t = DMatrix::from_row_slice(rows, cols, &self.tensor);
        t.singular_values().iter().map(|s| s * s).collect()
    }

    /// Entropy of the `k`-particle reduced state.
    pub fn split_entropy(&self, k: usize) -> f64 {
        entropy_of(&self.split_weights(k))
    }
}

/// Maximum entropy over particle-count bipartitions k | N−k. Zero for N < 2.
pub fn particle_entanglement(state: &HybridState) -> Result<f64> {
    let psi = motional_part(state)?.normalize()?.0;
    let pe = ParticleExpansion::from_state(&psi)?;
    if pe.num_particles < 2 {
        return Ok(0.0);
    }
    Ok((1..=pe.num_particles / 2)
        .map(|k| pe.split_entropy(k))
        .fold(0.0, f64::max))
}

/// b±θ = (sinθ a1 ± cosθ a2 + a3/√2 ∓ a4/√2)/√2 on a four-mode space.
pub fn b_theta_operator(space: &ModeSpace, theta: f64, plus: bool) -> Result<LinearOperator> {
    if space.num_modes() != 4 {
        return Err(Error::InvalidArgument("b±θ acts on four modes".into()));
    }
    let s = if plus { 1.0 } else { -1.0 };
    let coeffs = [theta.sin(), s * theta.cos(), FRAC_1_SQRT_2, -s * FRAC_1_SQRT_2];
    let mut acc = SparseMatrix::zero(space.dim());
    for (m, c) in coeffs.iter().enumerate() {
        acc = acc.add_scaled(C64::new(c * FRAC_1_SQRT_2, 0.0), &lower_sparse(space, m + 1)?)?;
    }
    LinearOperator::from_sparse(space, acc)
}

/// b−θ b+θ |sym4> before normalization; its squared norm is the branch weight.
pub fn b_theta_branch(theta: f64) -> Result<(HybridState, f64)> {
    let space = ModeSpace::new(4, 1, false)?;
    let sym = crate::sculpting::prepare_sym(&space)?;
    let out = b_theta_operator(&space, theta, false)?.apply(&b_theta_operator(&space, theta, true)?.apply(&sym)?)?;
    let p = out.norm_sqr();
    Ok((out, p))
}

/// Normalized b−θ b+θ |sym4> = cosθ|1010> + sinθ|0101>.
pub fn b_theta_state(theta: f64) -> Result<HybridState> {
    Ok(b_theta_branch(theta)?.0.normalize()?.0)
}

/// One point of the entropy sweep over θ.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct EntropyRow {
    pub theta: f64,
    pub s_me: f64,
    pub s_pe: f64,
    pub sum: f64,
    /// Squared norm of b−θ b+θ |sym4>.
    pub branch_probability: f64,
}

pub fn entropy_point(theta: f64) -> Result<EntropyRow> {
    let (raw, p) = b_theta_branch(theta)?;
    let psi = raw.normalize()?.0;
    let s_me = mode_entanglement(&psi)?;
    let s_pe = particle_entanglement(&psi)?;
    Ok(EntropyRow {
        theta,
        s_me,
        s_pe,
        sum: s_me + s_pe,
        branch_probability: p,
    })
}

/// Entropies of the b±θ output along `grid`, in grid order.
pub fn entropy_sweep(grid: &[f64]) -> Result<Vec<EntropyRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty θ grid".into()));
    }
    grid.par_iter().map(|&t| entropy_point(t)).collect()
}

/// Uniform grid of `points` angles on [start, end].
pub fn linspace(start: f64, end: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..points)
            .map(|i| start + (end - start) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}
