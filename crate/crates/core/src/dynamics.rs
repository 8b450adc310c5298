//! Time evolution under the laser Hamiltonian: Schrödinger propagation of
//! pure states and the Lindblad master equation with motional heating and
//! dephasing, both integrated with an embedded Dormand–Prince 5(4) scheme or
//! fixed-step RK4.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{lower_sparse, number_sparse, raise_sparse, DensityOperator, HybridState, SparseMatrix, C64};
use crate::laser::Hamiltonian;

const ZERO: C64 = C64::new(0.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Adaptive Dormand–Prince 5(4).
    Dopri5,
    /// Classical RK4 with step `max_step`.
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSettings {
    pub method: Method,
    pub rtol: f64,
    pub atol: f64,
    /// ms
    pub max_step: f64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            method: Method::Dopri5,
            rtol: 1e-8,
            atol: 1e-10,
            max_step: 1e-3,
        }
    }
}

impl IntegratorSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0) || !(self.atol > 0.0) || !(self.max_step > 0.0) {
            return Err(Error::Config("rtol, atol and max_step must be positive".into()));
        }
        Ok(())
    }
}

/// Bookkeeping of one integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evaluations: usize,
    /// Smallest accepted step, ms.
    pub min_step: f64,
}

impl IntegrationStats {
    fn merge(&mut self, other: &IntegrationStats) {
        self.accepted += other.accepted;
        self.rejected += other.rejected;
        self.rhs_evaluations += other.rhs_evaluations;
        self.min_step = if self.min_step == 0.0 {
            other.min_step
        } else if other.min_step == 0.0 {
            self.min_step
        } else {
            self.min_step.min(other.min_step)
        };
    }
}

fn axpy(y: &mut [C64], a: f64, x: &[C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += *xi * a;
    }
}

// Dormand–Prince coefficients
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrate y' = f(t, y) from `t0` to `t1`, stopping exactly at every
/// breakpoint in between (places where f is not smooth).
pub fn integrate<F>(
    mut f: F,
    y0: &[C64],
    t0: f64,
    t1: f64,
    breakpoints: &[f64],
    settings: &IntegratorSettings,
) -> Result<(Vec<C64>, IntegrationStats)>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    settings.validate()?;
    let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|&b| b > t0 && b < t1).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.push(t1);
    let mut y = y0.to_vec();
    let mut stats = IntegrationStats::default();
    let mut start = t0;
    let mut h_guess = None;
    for end in cuts {
        if end - start <= 0.0 {
            continue;
        }
        let s = match settings.method {
            Method::Dopri5 => dopri5(&mut f, &mut y, start, end, settings, &mut h_guess)?,
            Method::Rk4 => rk4(&mut f, &mut y, start, end, settings.max_step),
        };
        stats.merge(&s);
        start = end;
    }
    Ok((y, stats))
}

fn rk4<F>(f: &mut F, y: &mut [C64], t0: f64, t1: f64, max_step: f64) -> IntegrationStats
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let n = y.len();
    let steps = ((t1 - t0) / max_step).ceil().max(1.0) as usize;
    let h = (t1 - t0) / steps as f64;
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![ZERO; n],
        vec![ZERO; n],
        vec![ZERO; n],
        vec![ZERO; n],
        vec![ZERO; n],
    );
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        f(t, y, &mut k1);
        tmp.copy_from_slice(y);
        axpy(&mut tmp, h / 2.0, &k1);
        f(t + h / 2.0, &tmp, &mut k2);
        tmp.copy_from_slice(y);
        axpy(&mut tmp, h / 2.0, &k2);
        f(t + h / 2.0, &tmp, &mut k3);
        tmp.copy_from_slice(y);
        axpy(&mut tmp, h, &k3);
        f(t + h, &tmp, &mut k4);
        for i in 0..n {
            y[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
        }
    }
    IntegrationStats {
        accepted: steps,
        rejected: 0,
        rhs_evaluations: 4 * steps,
        min_step: h,
    }
}

fn dopri5<F>(
    f: &mut F,
    y: &mut Vec<C64>,
    t0: f64,
    t1: f64,
    settings: &IntegratorSettings,
    h_guess: &mut Option<f64>,
) -> Result<IntegrationStats>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let n = y.len();
    let mut k: Vec<Vec<C64>> = (0..7).map(|_| vec![ZERO; n]).collect();
    let mut tmp = vec![ZERO; n];
    let mut y_new = vec![ZERO; n];
    let mut stats = IntegrationStats::default();
    let mut t = t0;
    let span = t1 - t0;
    let mut h = h_guess.unwrap_or(span / 100.0).min(settings.max_step).min(span);
    f(t, y, &mut k[0]);
    stats.rhs_evaluations += 1;
    let min_h = 1e-14 * span.max(t1.abs());
    while t < t1 {
        let last = t + h >= t1 - 1e-15 * span;
        if last {
            h = t1 - t;
        }
        let stage = |tmp: &mut Vec<C64>, y: &[C64], k: &[Vec<C64>], coeffs: &[f64]| {
            tmp.copy_from_slice(y);
            for (kk, &c) in k.iter().zip(coeffs) {
                if c != 0.0 {
                    axpy(tmp, h * c, kk);
                }
            }
        };
        stage(&mut tmp, y, &k, &[A21]);
        f(t + C2 * h, &tmp, &mut k[1]);
        stage(&mut tmp, y, &k, &[A31, A32]);
        f(t + C3 * h, &tmp, &mut k[2]);
        stage(&mut tmp, y, &k, &[A41, A42, A43]);
        f(t + C4 * h, &tmp, &mut k[3]);
        stage(&mut tmp, y, &k, &[A51, A52, A53, A54]);
        f(t + C5 * h, &tmp, &mut k[4]);
        stage(&mut tmp, y, &k, &[A61, A62, A63, A64, A65]);
        f(t + h, &tmp, &mut k[5]);
        stage(&mut y_new, y, &k, &[B1, 0.0, B3, B4, B5, B6]);
        f(t + h, &y_new, &mut k[6]);
        stats.rhs_evaluations += 6;

        let mut err_sum = 0.0;
        for i in 0..n {
            let e = (k[0][i] * E1 + k[2][i] * E3 + k[3][i] * E4 + k[4][i] * E5 + k[5][i] * E6 + k[6][i] * E7) * h;
            let scale = settings.atol + settings.rtol * y[i].norm().max(y_new[i].norm());
            err_sum += (e.norm() / scale).powi(2);
        }
        let err = (err_sum / n as f64).sqrt();
        if err <= 1.0 {
            t = if last { t1 } else { t + h };
            std::mem::swap(y, &mut y_new);
            k.swap(0, 6);
            stats.accepted += 1;
            stats.min_step = if stats.min_step == 0.0 {
                h
            } else {
                stats.min_step.min(h)
            };
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = (h * factor).min(settings.max_step);
            if !last {
                *h_guess = Some(h);
            }
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            if h < min_h {
                return Err(Error::StepUnderflow { time: t, step: h });
            }
        }
    }
    Ok(stats)
}

/// ψ(τ) for iψ' = H(t)ψ over the pulse `[0, config.duration]`.
///
/// The state is not renormalized; its norm drift is the caller's diagnostic.
pub fn evolve_unitary(
    h: &Hamiltonian,
    psi0: &HybridState,
    settings: &IntegratorSettings,
) -> Result<(HybridState, IntegrationStats)> {
    evolve_unitary_span(h, psi0, 0.0, h.config().duration, settings)
}

/// Like [`evolve_unitary`] over `[t0, t1]` of the pulse clock.
pub fn evolve_unitary_span(
    h: &Hamiltonian,
    psi0: &HybridState,
    t0: f64,
    t1: f64,
    settings: &IntegratorSettings,
) -> Result<(HybridState, IntegrationStats)> {
    if !psi0.space().same_as(h.space()) {
        return Err(Error::SpaceMismatch);
    }
    let mut hm = h.pattern();
    let rhs = |t: f64, y: &[C64], dy: &mut [C64]| {
        h.assemble_into(t, &mut hm);
        dy.iter_mut().for_each(|v| *v = ZERO);
        hm.mul_vec_add(-I, y, dy);
    };
    let (y, stats) = integrate(
        rhs,
        psi0.amplitudes(),
        t0,
        t1,
        &h.config().envelope.breakpoints(),
        settings,
    )?;
    Ok((HybridState::new(psi0.space(), y)?, stats))
}

/// Form of the number-operator dissipator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DephasingForm {
    /// (κ/2)(2nρn − {n², ρ})
    #[default]
    Standard,
    /// (κ/2)(2nρ(aa†) − {(aa†)n, ρ}); not Hermiticity preserving.
    AsPrinted,
}

/// Motional heating and dephasing rates per mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    /// Γ_r = n̄γ_r, phonons/ms
    pub heating_rates: Vec<f64>,
    /// κ_r, 1/ms
    pub dephasing_rates: Vec<f64>,
    pub nbar: f64,
    pub scale_gamma: f64,
    pub scale_kappa: f64,
    #[serde(default)]
    pub dephasing: DephasingForm,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::reference()
    }
}

impl NoiseSpec {
    /// Reference rates: 15 phonons/s on the centre-of-mass mode, 0.675
    /// phonons/s on the others, κ = 0.075/ms on every mode, n̄ = 10⁶.
    pub fn reference() -> Self {
        Self {
            heating_rates: vec![0.015, 0.000675, 0.000675, 0.000675],
            dephasing_rates: vec![0.075; 4],
            nbar: 1e6,
            scale_gamma: 1.0,
            scale_kappa: 1.0,
            dephasing: DephasingForm::Standard,
        }
    }

    pub fn noiseless(modes: usize) -> Self {
        Self {
            heating_rates: vec![0.0; modes],
            dephasing_rates: vec![0.0; modes],
            nbar: 1e6,
            scale_gamma: 0.0,
            scale_kappa: 0.0,
            dephasing: DephasingForm::Standard,
        }
    }

    pub fn scaled(&self, scale_gamma: f64, scale_kappa: f64) -> Self {
        Self {
            scale_gamma,
            scale_kappa,
            ..self.clone()
        }
    }

    pub fn validate(&self, modes: usize) -> Result<()> {
        if self.heating_rates.len() != modes || self.dephasing_rates.len() != modes {
            return Err(Error::Config(format!(
                "noise needs {modes} heating and dephasing rates"
            )));
        }
        let all = self
            .heating_rates
            .iter()
            .chain(&self.dephasing_rates)
            .chain([&self.scale_gamma, &self.scale_kappa]);
        if all.clone().any(|v| !v.is_finite() || *v < 0.0) || !(self.nbar > 0.0) {
            return Err(Error::Config(
                "noise rates and scales must be nonnegative, nbar positive".into(),
            ));
        }
        Ok(())
    }

    /// γ_r = Γ_r / n̄ including the scale factor.
    pub fn gamma(&self, mode: usize) -> f64 {
        self.scale_gamma * self.heating_rates[mode - 1] / self.nbar
    }

    pub fn kappa(&self, mode: usize) -> f64 {
        self.scale_kappa * self.dephasing_rates[mode - 1]
    }

    pub fn is_silent(&self) -> bool {
        let m = self.heating_rates.len();
        (1..=m).all(|r| self.gamma(r) == 0.0 && self.kappa(r) == 0.0)
    }

    pub fn preserves_hermiticity(&self) -> bool {
        self.dephasing == DephasingForm::Standard
            || self.scale_kappa == 0.0
            || self.dephasing_rates.iter().all(|&k| k == 0.0)
    }
}

/// Jump operator with at most one nonzero per column, stored as (row, col, value).
struct Jump {
    entries: Vec<(usize, usize, C64)>,
    weight: f64,
}

/// Dissipative part of the master equation on a fixed space.
pub struct Dissipator {
    dim: usize,
    jumps: Vec<Jump>,
    /// Elementwise rate: all anticommutator terms and the diagonal jumps.
    rates: Vec<C64>,
    hermitian: bool,
}

fn diagonal(m: &SparseMatrix) -> Result<Vec<f64>> {
    let mut d = vec![0.0; m.dim()];
    for (r, c, v) in m.triplets() {
        if r != c {
            return Err(Error::InvalidArgument("expected a diagonal operator".into()));
        }
        d[r] = v.re;
    }
    Ok(d)
}

impl Dissipator {
    pub fn new(space: &crate::fock::ModeSpace, noise: &NoiseSpec) -> Result<Self> {
        let modes = space.num_modes();
        noise.validate(modes)?;
        let d = space.dim();
        let mut diag_rate = vec![0.0f64; d];
        let mut rates = vec![ZERO; d * d];
        let mut jumps = Vec::new();
        for r in 1..=modes {
            let gamma = noise.gamma(r);
            if gamma > 0.0 {
                for (op, w) in [
                    (lower_sparse(space, r)?, gamma / 2.0 * (noise.nbar + 1.0)),
                    (raise_sparse(space, r)?, gamma / 2.0 * noise.nbar),
                ] {
                    let ldl = diagonal(&op.adjoint().matmul(&op)?)?;
                    for (acc, x) in diag_rate.iter_mut().zip(&ldl) {
                        *acc += w * x;
                    }
                    jumps.push(Jump {
                        entries: op.triplets().collect(),
                        weight: 2.0 * w,
                    });
                }
            }
            let kappa = noise.kappa(r);
            if kappa > 0.0 {
                let n = diagonal(&number_sparse(space, r)?)?;
                let w = kappa / 2.0;
                match noise.dephasing {
                    DephasingForm::Standard => {
                        for i in 0..d {
                            for j in 0..d {
                                rates[i * d + j] += -w * (n[i] - n[j]).powi(2);
                            }
                        }
                    }
                    DephasingForm::AsPrinted => {
                        let a = lower_sparse(space, r)?;
                        let aad = diagonal(&a.matmul(&a.adjoint())?)?;
                        for i in 0..d {
                            for j in 0..d {
                                let v = 2.0 * n[i] * aad[j] - aad[i] * n[i] - aad[j] * n[j];
                                rates[i * d + j] += w * v;
                            }
                        }
                    }
                }
            }
        }
        for i in 0..d {
            for j in 0..d {
                rates[i * d + j] -= diag_rate[i] + diag_rate[j];
            }
        }
        Ok(Self {
            dim: d,
            jumps,
            rates,
            hermitian: noise.preserves_hermiticity(),
        })
    }

    /// out += D(ρ)
    pub fn apply_add(&self, rho: &[C64], out: &mut [C64]) {
        let d = self.dim;
        for ((o, r), rate) in out.iter_mut().zip(rho).zip(&self.rates) {
            *o += rate * r;
        }
        for jump in &self.jumps {
            for &(i, k, c1) in &jump.entries {
                let src = &rho[k * d..(k + 1) * d];
                let dst = &mut out[i * d..(i + 1) * d];
                let c1w = c1 * jump.weight;
                for &(j, l, c2) in &jump.entries {
                    dst[j] += c1w * c2.conj() * src[l];
                }
            }
        }
    }

    pub fn preserves_hermiticity(&self) -> bool {
        self.hermitian
    }
}

/// out = −i[H, ρ] for row-major ρ.
fn commutator(h: &SparseMatrix, rho: &[C64], out: &mut [C64], hermitian: bool) {
    let d = h.dim();
    out.iter_mut().for_each(|v| *v = ZERO);
    // X = H ρ
    for r in 0..d {
        let (cols, vals) = h.row(r);
        let dst = &mut out[r * d..(r + 1) * d];
        for (&k, &v) in cols.iter().zip(vals) {
            let src = &rho[k * d..(k + 1) * d];
            for (o, s) in dst.iter_mut().zip(src) {
                *o += v * s;
            }
        }
    }
    if hermitian {
        // ρ H = (H ρ)† when both are Hermitian
        for r in 0..d {
            for c in r..d {
                let x_rc = out[r * d + c];
                let x_cr = out[c * d + r];
                let v_rc = -I * (x_rc - x_cr.conj());
                out[r * d + c] = v_rc;
                out[c * d + r] = v_rc.conj();
            }
        }
    } else {
        let mut y = vec![ZERO; d * d];
        for k in 0..d {
            let (cols, vals) = h.row(k);
            for r in 0..d {
                let a = rho[r * d + k];
                if a == ZERO {
                    continue;
                }
                for (&c, &v) in cols.iter().zip(vals) {
                    y[r * d + c] += a * v;
                }
            }
        }
        for (o, yv) in out.iter_mut().zip(&y) {
            *o = -I * (*o - yv);
        }
    }
}

/// Largest tolerated negative eigenvalue of the output state.
pub const POSITIVITY_TOLERANCE: f64 = 1e-6;

/// ρ(τ) under the master equation over the pulse `[0, config.duration]`.
///
/// The output is symmetrized; its smallest eigenvalue is checked against
/// [`POSITIVITY_TOLERANCE`].
pub fn evolve_lindblad(
    h: &Hamiltonian,
    dissipator: &Dissipator,
    rho0: &DensityOperator,
    settings: &IntegratorSettings,
) -> Result<(DensityOperator, IntegrationStats)> {
    evolve_lindblad_span(h, dissipator, rho0, 0.0, h.config().duration, settings)
}

/// Like [`evolve_lindblad`] over `[t0, t1]` of the pulse clock.
pub fn evolve_lindblad_span(
    h: &Hamiltonian,
    dissipator: &Dissipator,
    rho0: &DensityOperator,
    t0: f64,
    t1: f64,
    settings: &IntegratorSettings,
) -> Result<(DensityOperator, IntegrationStats)> {
    if !rho0.space().same_as(h.space()) || dissipator.dim != rho0.dim() {
        return Err(Error::SpaceMismatch);
    }
    let mut hm = h.pattern();
    let hermitian = dissipator.preserves_hermiticity();
    let rhs = |t: f64, y: &[C64], dy: &mut [C64]| {
        h.assemble_into(t, &mut hm);
        commutator(&hm, y, dy, hermitian);
        dissipator.apply_add(y, dy);
    };
    let (y, stats) = integrate(rhs, rho0.data(), t0, t1, &h.config().envelope.breakpoints(), settings)?;
    let mut rho = DensityOperator::new(rho0.space(), y)?;
    rho.symmetrize();
    check_positivity(&rho, t1)?;
    Ok((rho, stats))
}

/// Free evolution (no laser) under the dissipator for `duration` ms.
pub fn evolve_dissipator_only(
    dissipator: &Dissipator,
    rho0: &DensityOperator,
    duration: f64,
    settings: &IntegratorSettings,
) -> Result<(DensityOperator, IntegrationStats)> {
    let rhs = |_t: f64, y: &[C64], dy: &mut [C64]| {
        dy.iter_mut().for_each(|v| *v = ZERO);
        dissipator.apply_add(y, dy);
    };
    let (y, stats) = integrate(rhs, rho0.data(), 0.0, duration, &[], settings)?;
    let mut rho = DensityOperator::new(rho0.space(), y)?;
    rho.symmetrize();
    Ok((rho, stats))
}

pub fn check_positivity(rho: &DensityOperator, time: f64) -> Result<()> {
    let scale = rho.trace().re.max(1e-300);
    let min = rho.min_eigenvalue() / scale;
    if min < -POSITIVITY_TOLERANCE {
        return Err(Error::PositivityViolation {
            min_eigenvalue: min,
            time,
        });
    }
    Ok(())
}

/// A pure or mixed state.
#[derive(Debug, Clone)]
pub enum QuantumState {
    Pure(HybridState),
    Mixed(DensityOperator),
}

impl QuantumState {
    pub fn space(&self) -> &crate::fock::ModeSpace {
        match self {
            QuantumState::Pure(p) => p.space(),
            QuantumState::Mixed(m) => m.space(),
        }
    }

    /// ‖ψ‖² or Tr ρ.
    pub fn weight(&self) -> f64 {
        match self {
            QuantumState::Pure(p) => p.norm_sqr(),
            QuantumState::Mixed(m) => m.trace().re,
        }
    }

    pub fn to_density(&self) -> DensityOperator {
        match self {
            QuantumState::Pure(p) => DensityOperator::from_pure(p),
            QuantumState::Mixed(m) => m.clone(),
        }
    }
}

/// |<b|a>|² for a pure `a`, <b|ρ|b> for a mixed one (neither normalized here).
pub fn fidelity(a: &QuantumState, target: &HybridState) -> Result<f64> {
    match a {
        QuantumState::Pure(p) => Ok(target.inner(p)?.norm_sqr()),
        QuantumState::Mixed(m) => m.expectation_pure(target),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{ModeSpace, Spin};
    use crate::laser::{gate_config, GateKind, HamiltonianOptions, PulseParams, TrapSpec};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn dense_expm_apply(h: &DMatrix<C64>, t: f64, x: &[C64]) -> Vec<C64> {
        // eigen-decomposition of the Hermitian generator
        let eig = h.clone().symmetric_eigen();
        let v = &eig.eigenvectors;
        let mut phases = DMatrix::<C64>::zeros(h.nrows(), h.nrows());
        for i in 0..h.nrows() {
            phases[(i, i)] = C64::from_polar(1.0, -eig.eigenvalues[i] * t);
        }
        let u = v * phases * v.adjoint();
        let xv = nalgebra::DVector::from_column_slice(x);
        (u * xv).iter().copied().collect()
    }

    #[test]
    fn matches_dense_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = 48;
        let mut m = DMatrix::<C64>::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                if rng.gen_bool(0.2) || i == j {
                    let v = C64::new(
                        rng.gen_range(-1.0..1.0),
                        if i == j { 0.0 } else { rng.gen_range(-1.0..1.0) },
                    );
                    m[(i, j)] = v;
                    m[(j, i)] = v.conj();
                }
            }
        }
        let h = SparseMatrix::from_dense(&m, 0.0).unwrap();
        let x: Vec<C64> = (0..d)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let settings = IntegratorSettings {
            rtol: 1e-11,
            atol: 1e-13,
            max_step: 0.1,
            ..Default::default()
        };
        let (y, stats) = integrate(
            |_t, y, dy| {
                dy.iter_mut().for_each(|v| *v = ZERO);
                h.mul_vec_add(-I, y, dy);
            },
            &x,
            0.0,
            2.0,
            &[0.7],
            &settings,
        )
        .unwrap();
        let oracle = dense_expm_apply(&m, 2.0, &x);
        let err = y.iter().zip(&oracle).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
        assert!(stats.accepted > 0);
        let rk = IntegratorSettings {
            method: Method::Rk4,
            max_step: 1e-3,
            ..Default::default()
        };
        let (y4, _) = integrate(
            |_t, y, dy| {
                dy.iter_mut().for_each(|v| *v = ZERO);
                h.mul_vec_add(-I, y, dy);
            },
            &x,
            0.0,
            2.0,
            &[],
            &rk,
        )
        .unwrap();
        let err4 = y4.iter().zip(&oracle).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err4 < 1e-8, "{err4}");
    }

    #[test]
    fn zero_hamiltonian_is_identity() {
        let x = vec![C64::new(0.3, 0.1), C64::new(-0.2, 0.5)];
        let (y, _) = integrate(
            |_t, _y, dy| dy.iter_mut().for_each(|v| *v = ZERO),
            &x,
            0.0,
            1.0,
            &[],
            &IntegratorSettings::default(),
        )
        .unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn carrier_pi_pulse() {
        let trap = TrapSpec::reference();
        let space = ModeSpace::with_total_cap(4, 2, true, 1).unwrap();
        let cfg = gate_config(GateKind::Carrier, &trap, PI, PI / 2.0, &PulseParams::default()).unwrap();
        let h = Hamiltonian::new(&space, &trap, &cfg, HamiltonianOptions::default()).unwrap();
        let g = HybridState::basis(&space, &[0; 4], Some(Spin::Ground)).unwrap();
        let (psi, _) = evolve_unitary(&h, &g, &IntegratorSettings::default()).unwrap();
        let e = HybridState::basis(&space, &[0; 4], Some(Spin::Excited)).unwrap();
        assert!(e.inner(&psi).unwrap().norm_sqr() > 1.0 - 1e-3);
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn heating_slope_from_vacuum() {
        let space = ModeSpace::new(1, 3, false).unwrap();
        let mut noise = NoiseSpec::reference();
        noise.heating_rates.truncate(1);
        noise.dephasing_rates = vec![0.0];
        let diss = Dissipator::new(&space, &noise).unwrap();
        let rho0 = DensityOperator::from_pure(&HybridState::basis(&space, &[0], None).unwrap());
        let t = 0.5;
        let (rho, _) = evolve_dissipator_only(&diss, &rho0, t, &IntegratorSettings::default()).unwrap();
        let n_mean: f64 = (0..4).map(|n| n as f64 * rho.get(n, n).re).sum();
        // d<n>/dt = γn̄ − γ<n> ≈ Γ for <n> ≪ n̄
        assert!((n_mean / t - 0.015).abs() < 1e-5, "{}", n_mean / t);
        assert!((rho.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dephasing_closed_form() {
        let space = ModeSpace::new(1, 3, false).unwrap();
        let mut noise = NoiseSpec::reference();
        noise.heating_rates = vec![0.0];
        noise.dephasing_rates = vec![0.8];
        let diss = Dissipator::new(&space, &noise).unwrap();
        let mut psi = HybridState::zeros(&space);
        for n in 0..4 {
            psi.amplitudes_mut()[n] = C64::new(0.5, 0.0);
        }
        let rho0 = DensityOperator::from_pure(&psi);
        let t = 1.3;
        let (rho, _) = evolve_dissipator_only(&diss, &rho0, t, &IntegratorSettings::default()).unwrap();
        for n in 0..4 {
            for m in 0..4 {
                let dn = n as f64 - m as f64;
                let expect = 0.25 * (-0.8 * t * dn * dn / 2.0).exp();
                assert!((rho.get(n, m).re - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn as_printed_dephasing_breaks_hermiticity() {
        let space = ModeSpace::new(1, 2, false).unwrap();
        let mut noise = NoiseSpec::reference();
        noise.heating_rates = vec![0.0];
        noise.dephasing_rates = vec![1.0];
        noise.dephasing = DephasingForm::AsPrinted;
        let diss = Dissipator::new(&space, &noise).unwrap();
        assert!(!diss.preserves_hermiticity());
        let mut psi = HybridState::zeros(&space);
        psi.amplitudes_mut()[0] = C64::new(FRAC, 0.0);
        psi.amplitudes_mut()[1] = C64::new(FRAC, 0.0);
        let rho = DensityOperator::from_pure(&psi);
        let mut out = vec![ZERO; 9];
        diss.apply_add(rho.data(), &mut out);
        let trace: C64 = (0..3).map(|i| out[i * 3 + i]).sum();
        assert!(trace.norm() < 1e-15);
        assert!((out[1] - out[3].conj()).norm() > 1e-3);
    }
    const FRAC: f64 = std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn lindblad_without_noise_matches_unitary() {
        let trap = TrapSpec::reference();
        let space = ModeSpace::with_total_cap(4, 2, true, 2).unwrap();
        let cfg = gate_config(GateKind::Rsb(2), &trap, PI / 2.0, 0.3, &PulseParams::default()).unwrap();
        let h = Hamiltonian::new(&space, &trap, &cfg, HamiltonianOptions::default()).unwrap();
        let psi0 = HybridState::basis(&space, &[0, 0, 0, 0], Some(Spin::Excited)).unwrap();
        let tight = IntegratorSettings {
            rtol: 1e-10,
            atol: 1e-12,
            ..Default::default()
        };
        let (psi, _) = evolve_unitary(&h, &psi0, &tight).unwrap();
        let diss = Dissipator::new(&space, &NoiseSpec::noiseless(4)).unwrap();
        let (rho, _) = evolve_lindblad(&h, &diss, &DensityOperator::from_pure(&psi0), &tight).unwrap();
        let pure = DensityOperator::from_pure(&psi);
        let diff = rho
            .data()
            .iter()
            .zip(pure.data())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-8, "{diff}");
        assert!((rho.trace().re - 1.0).abs() < 1e-8);
    }

    #[test]
    fn noisy_gate_keeps_trace() {
        let trap = TrapSpec::reference();
        let space = ModeSpace::with_total_cap(4, 2, true, 2).unwrap();
        let cfg = gate_config(
            GateKind::BeamSplitter(1, 2),
            &trap,
            PI / 8.0,
            -PI / 2.0,
            &PulseParams::default(),
        )
        .unwrap();
        let h = Hamiltonian::new(&space, &trap, &cfg, HamiltonianOptions::default()).unwrap();
        let diss = Dissipator::new(&space, &NoiseSpec::reference().scaled(50.0, 2.0)).unwrap();
        let psi0 = HybridState::basis(&space, &[1, 0, 0, 0], Some(Spin::Ground)).unwrap();
        let (rho, _) = evolve_lindblad(
            &h,
            &diss,
            &DensityOperator::from_pure(&psi0),
            &IntegratorSettings::default(),
        )
        .unwrap();
        assert!((rho.trace().re - 1.0).abs() < 1e-8);
        assert!(rho.hermiticity_error() < 1e-12);
        assert!(rho.min_eigenvalue() > -1e-8);
    }

    #[test]
    fn fidelity_values() {
        let space = ModeSpace::new(4, 1, false).unwrap();
        let ghz = crate::sculpting::ghz_target(&space, crate::sculpting::GhzConvention::Main).unwrap();
        let psi = HybridState::from_terms(
            &space,
            &[
                (&[1, 1, 0, 0], None, C64::new(2.0 / 5f64.sqrt(), 0.0)),
                (&[0, 0, 1, 1], None, C64::new(-1.0 / 5f64.sqrt(), 0.0)),
            ],
        )
        .unwrap();
        assert!((fidelity(&QuantumState::Pure(psi.clone()), &ghz).unwrap() - 0.9).abs() < 1e-12);
        assert!((fidelity(&QuantumState::Mixed(DensityOperator::from_pure(&psi)), &ghz).unwrap() - 0.9).abs() < 1e-12);
        assert!((fidelity(&QuantumState::Pure(ghz.clone()), &ghz).unwrap() - 1.0).abs() < 1e-12);
        let other = HybridState::basis(&space, &[1, 0, 1, 0], None).unwrap();
        assert!(fidelity(&QuantumState::Pure(other), &ghz).unwrap().abs() < 1e-15);
    }
}
