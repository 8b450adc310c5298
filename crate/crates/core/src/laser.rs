//! Two-laser interaction Hamiltonian of one addressed ion coupled to the
//! collective modes, pulse envelopes and the laser settings that realize
//! each gate.
//!
//! Every term of the Hamiltonian is stored as `c(t) O + c(t)* O†` with
//! `c(t) = g_l(t) · constant · exp[-i (s Θ_l(t) + ω t)]`, where `Θ_l` is the
//! integrated detuning of laser `l` and `s = ±1` the sign with which the
//! detuning enters the term.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{
    lower_sparse, number_sparse, raise_sparse, spin_map, LinearOperator, ModeSpace, SparseMatrix, SpinOp, C64,
};
use crate::gates::Gate;

/// 2π × 1 MHz in rad/ms.
const TWO_PI_MHZ: f64 = 2.0 * PI * 1000.0;

/// Peak coupling of the reference setup, rad/ms.
pub const G0_REFERENCE: f64 = PI / 0.004;

/// Rise time as a fraction of the pulse length.
pub const RISE_RATIO_REFERENCE: f64 = 0.125;

/// Trap description: collective-mode frequencies (rad/ms), Lamb-Dicke
/// parameters of the addressed ion and the radial/axial trap frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrapSpec {
    pub mode_freqs: Vec<f64>,
    pub lamb_dicke: Vec<f64>,
    pub trap_freqs: (f64, f64),
}

impl Default for TrapSpec {
    fn default() -> Self {
        Self::reference()
    }
}

impl TrapSpec {
    /// Four-ion chain; ν₁ is the centre-of-mass mode at ωx.
    pub fn reference() -> Self {
        Self {
            mode_freqs: [1.270, 1.159, 0.982, 0.702].iter().map(|f| f * TWO_PI_MHZ).collect(),
            lamb_dicke: vec![0.067, 0.067, 0.076, 0.094],
            trap_freqs: (1.270 * TWO_PI_MHZ, 0.519 * TWO_PI_MHZ),
        }
    }

    pub fn num_modes(&self) -> usize {
        self.mode_freqs.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode_freqs.is_empty() || self.mode_freqs.len() != self.lamb_dicke.len() {
            return Err(Error::Config("trap needs one Lamb-Dicke parameter per mode".into()));
        }
        let all = self
            .mode_freqs
            .iter()
            .chain(&self.lamb_dicke)
            .chain([&self.trap_freqs.0, &self.trap_freqs.1]);
        if all.clone().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Config("trap parameters must be positive".into()));
        }
        Ok(())
    }

    pub fn check_mode(&self, mode: usize) -> Result<()> {
        if mode == 0 || mode > self.num_modes() {
            return Err(Error::BadMode {
                mode,
                num_modes: self.num_modes(),
            });
        }
        Ok(())
    }

    pub fn nu(&self, mode: usize) -> f64 {
        self.mode_freqs[mode - 1]
    }

    pub fn eta(&self, mode: usize) -> f64 {
        self.lamb_dicke[mode - 1]
    }
}

/// Soft-edged square pulse: sin² ramps of length `t_r` around a flat top.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    pub g0: f64,
    pub tau: f64,
    pub t_r: f64,
}

impl PulseShape {
    pub fn new(g0: f64, tau: f64, t_r: f64) -> Result<Self> {
        if !(tau > 0.0) || !(0.0..=tau / 2.0).contains(&t_r) || !(g0 >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "pulse needs tau > 0, 0 <= t_r <= tau/2, g0 >= 0 (g0={g0}, tau={tau}, t_r={t_r})"
            )));
        }
        Ok(Self { g0, tau, t_r })
    }

    pub fn with_ratio(g0: f64, tau: f64, ratio: f64) -> Result<Self> {
        Self::new(g0, tau, ratio * tau)
    }

    pub fn area(&self) -> f64 {
        self.g0 * (self.tau - self.t_r)
    }
}

pub fn pulse_envelope(t: f64, shape: &PulseShape) -> f64 {
    let PulseShape { g0, tau, t_r } = *shape;
    if !(0.0..=tau).contains(&t) {
        0.0
    } else if t < t_r {
        g0 * (PI * t / (2.0 * t_r)).sin().powi(2)
    } else if t <= tau - t_r {
        g0
    } else {
        g0 * (PI * (tau - t) / (2.0 * t_r)).sin().powi(2)
    }
}

/// Coupling envelope g(t), shared by both lasers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Envelope {
    SoftSquare(PulseShape),
    /// g0 sin(πt/τ) on [0, τ]
    Sine {
        g0: f64,
        tau: f64,
    },
}

impl Envelope {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Envelope::SoftSquare(ref s) => pulse_envelope(t, s),
            Envelope::Sine { g0, tau } => {
                if (0.0..=tau).contains(&t) {
                    g0 * (PI * t / tau).sin()
                } else {
                    0.0
                }
            }
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Envelope::SoftSquare(ref s) => s.area(),
            Envelope::Sine { g0, tau } => 2.0 * g0 * tau / PI,
        }
    }

    pub fn peak(&self) -> f64 {
        match *self {
            Envelope::SoftSquare(ref s) => s.g0,
            Envelope::Sine { g0, .. } => g0,
        }
    }

    /// ∫₀ᵗ g(t')² dt'
    pub fn power_integral(&self, t: f64) -> f64 {
        match *self {
            Envelope::SoftSquare(PulseShape { g0, tau, t_r }) => {
                let t = t.clamp(0.0, tau);
                // ∫ sin⁴x dx = 3x/8 − sin2x/4 + sin4x/32
                let ramp = |u: f64| {
                    if t_r == 0.0 {
                        return 0.0;
                    }
                    let x = PI * u / (2.0 * t_r);
                    2.0 * t_r / PI * (3.0 * x / 8.0 - (2.0 * x).sin() / 4.0 + (4.0 * x).sin() / 32.0)
                };
                let full = ramp(t_r);
                let acc = if t < t_r {
                    ramp(t)
                } else if t <= tau - t_r {
                    full + (t - t_r)
                } else {
                    2.0 * full + (tau - 2.0 * t_r) - ramp(tau - t)
                };
                g0 * g0 * acc
            }
            Envelope::Sine { g0, tau } => {
                let t = t.clamp(0.0, tau);
                g0 * g0 * (t / 2.0 - tau / (4.0 * PI) * (2.0 * PI * t / tau).sin())
            }
        }
    }

    /// Interior points where the envelope has a kink; integrators should not step over them.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            Envelope::SoftSquare(ref s) if s.t_r > 0.0 => vec![s.t_r, s.tau - s.t_r],
            _ => Vec::new(),
        }
    }
}

/// Laser detuning δ_l(t) from the carrier, rad/ms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Detuning {
    Constant(f64),
    /// center + amplitude cos(πt/τ)
    Chirp {
        center: f64,
        amplitude: f64,
        tau: f64,
    },
    /// center + coefficient · g(t)², following the light shift of the envelope
    LightShifted {
        center: f64,
        coefficient: f64,
        envelope: Envelope,
    },
}

impl Detuning {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Detuning::Constant(d) => d,
            Detuning::Chirp { center, amplitude, tau } => center + amplitude * (PI * t / tau).cos(),
            Detuning::LightShifted {
                center,
                coefficient,
                envelope,
            } => center + coefficient * envelope.value(t).powi(2),
        }
    }

    /// Θ(t) = ∫₀ᵗ δ(t') dt'
    pub fn phase(&self, t: f64) -> f64 {
        match *self {
            Detuning::Constant(d) => d * t,
            Detuning::Chirp { center, amplitude, tau } => center * t + amplitude * tau / PI * (PI * t / tau).sin(),
            Detuning::LightShifted {
                center,
                coefficient,
                envelope,
            } => center * t + coefficient * envelope.power_integral(t),
        }
    }

    fn center(&self) -> f64 {
        match *self {
            Detuning::Constant(d) => d,
            Detuning::Chirp { center, .. } => center,
            Detuning::LightShifted { center, .. } => center,
        }
    }
}

/// Settings of the laser pair for one pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaserConfig {
    pub detunings: [Detuning; 2],
    pub phases: [f64; 2],
    pub envelope: Envelope,
    pub duration: f64,
}

impl LaserConfig {
    /// Phase the light-shift tracking adds to the laser pair by the end of the
    /// pulse; undone afterwards by a frame update on the spin.
    pub fn frame_phase(&self) -> f64 {
        let extra = |d: &Detuning| match *d {
            Detuning::LightShifted {
                coefficient, envelope, ..
            } => coefficient * envelope.power_integral(self.duration),
            _ => 0.0,
        };
        0.5 * (extra(&self.detunings[0]) + extra(&self.detunings[1]))
    }
}

/// Gate families addressable with the laser pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateKind {
    Carrier,
    Rsb(usize),
    Bsb(usize),
    Displacement(usize),
    BeamSplitter(usize, usize),
}

impl GateKind {
    /// θ / ∫g for this gate family.
    pub fn angle_factor(&self, trap: &TrapSpec) -> Result<f64> {
        match *self {
            GateKind::Carrier => Ok(2.0),
            GateKind::Rsb(m) | GateKind::Bsb(m) => {
                trap.check_mode(m)?;
                Ok(2.0 * trap.eta(m))
            }
            GateKind::Displacement(m) => {
                trap.check_mode(m)?;
                Ok(trap.eta(m) / 2.0)
            }
            GateKind::BeamSplitter(j, k) => {
                trap.check_mode(j)?;
                trap.check_mode(k)?;
                if j == k {
                    return Err(Error::InvalidArgument("beam splitter needs two distinct modes".into()));
                }
                Ok(trap.eta(j) * trap.eta(k))
            }
        }
    }

    pub fn label(&self) -> String {
        match *self {
            GateKind::Carrier => "CARR".into(),
            GateKind::Rsb(m) => format!("RSB{m}"),
            GateKind::Bsb(m) => format!("BSB{m}"),
            GateKind::Displacement(m) => format!("D{m}"),
            GateKind::BeamSplitter(j, k) => format!("B{j}{k}"),
        }
    }

    /// The ideal gate realized by the tabulated drive settings for (θ, φ).
    ///
    /// The carrier drive with laser phases −φ produces the rotation with
    /// phase −φ in the ideal-gate convention. The displacement drive is a
    /// displacement only for φ ∈ {0, π} with the spin in |−>, where it equals
    /// D(θ, φ+π).
    pub fn ideal_equivalent(&self, theta: f64, phi: f64) -> Gate {
        match *self {
            GateKind::Carrier => Gate::Carrier { theta, phi: -phi },
            GateKind::Rsb(mode) => Gate::Rsb { mode, theta, phi },
            GateKind::Bsb(mode) => Gate::Bsb { mode, theta, phi },
            GateKind::Displacement(mode) => Gate::Displacement {
                mode,
                theta,
                phi: phi + PI,
            },
            GateKind::BeamSplitter(j, k) => Gate::BeamSplitter { j, k, theta, phi },
        }
    }
}

/// Peak coupling and rise-time ratio used to turn angles into durations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseParams {
    pub g0: f64,
    pub rise_ratio: f64,
    /// Track the carrier light shift in the detuning of sideband pulses.
    pub light_shift_compensation: bool,
}

impl Default for PulseParams {
    fn default() -> Self {
        Self {
            g0: G0_REFERENCE,
            rise_ratio: RISE_RATIO_REFERENCE,
            light_shift_compensation: false,
        }
    }
}

impl PulseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.g0 > 0.0) || !(0.0..=0.5).contains(&self.rise_ratio) {
            return Err(Error::Config("pulse needs g0 > 0 and 0 <= rise_ratio <= 0.5".into()));
        }
        Ok(())
    }
}

/// τ with factor · g0 · (τ − t_r) = |θ| and t_r = ratio · τ.
pub fn duration_for_angle(kind: GateKind, trap: &TrapSpec, theta: f64, pulse: &PulseParams) -> Result<f64> {
    pulse.validate()?;
    if !(theta.abs() > 0.0) || !theta.is_finite() {
        return Err(Error::InvalidArgument("rotation angle must be nonzero".into()));
    }
    let f = kind.angle_factor(trap)?;
    Ok(theta.abs() / (f * pulse.g0 * (1.0 - pulse.rise_ratio)))
}

/// Laser settings for one gate. Negative angles are realized as (|θ|, φ+π).
pub fn gate_config(kind: GateKind, trap: &TrapSpec, theta: f64, phi: f64, pulse: &PulseParams) -> Result<LaserConfig> {
    trap.validate()?;
    let tau = duration_for_angle(kind, trap, theta, pulse)?;
    let phi = if theta < 0.0 { phi + PI } else { phi };
    let envelope = Envelope::SoftSquare(PulseShape::with_ratio(pulse.g0, tau, pulse.rise_ratio)?);
    let c = Detuning::Constant;
    // The off-resonant carrier shifts |g> and |e> apart by about 2g²/|δ|.
    let sideband = |center: f64| {
        if pulse.light_shift_compensation {
            Detuning::LightShifted {
                center,
                coefficient: -2.0 / center,
                envelope,
            }
        } else {
            c(center)
        }
    };
    let (detunings, phases) = match kind {
        GateKind::Carrier => ([c(0.0), c(0.0)], [-phi, -phi]),
        GateKind::Rsb(m) => ([sideband(-trap.nu(m)); 2], [-phi - FRAC_PI_2; 2]),
        GateKind::Bsb(m) => ([sideband(trap.nu(m)); 2], [-phi - FRAC_PI_2; 2]),
        GateKind::Displacement(m) => ([c(trap.nu(m)), c(-trap.nu(m))], [-phi, -phi - PI]),
        GateKind::BeamSplitter(j, k) => {
            let d = trap.nu(j) - trap.nu(k);
            ([c(d), c(-d)], [PI - phi, phi - PI])
        }
    };
    Ok(LaserConfig {
        detunings,
        phases,
        envelope,
        duration: tau,
    })
}

/// Δ₀ = ½ √(n_max+1) η_k g0
pub fn chirp_amplitude(trap: &TrapSpec, mode: usize, n_max: usize, g0: f64) -> Result<f64> {
    trap.check_mode(mode)?;
    Ok(0.5 * ((n_max + 1) as f64).sqrt() * trap.eta(mode) * g0)
}

/// Sideband used for the adiabatic subtraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sideband {
    #[default]
    Red,
    Blue,
}

impl Sideband {
    pub fn label(&self) -> &'static str {
        match self {
            Sideband::Red => "red",
            Sideband::Blue => "blue",
        }
    }
}

/// Adiabatic sideband sweep on `mode`: δ(t) = ∓ν + Δ₀cos(πt/τ) (− for the
/// red sideband), g(t) = g0 sin(πt/τ), laser phases −π/2 on both beams.
pub fn adiabatic_schedule(
    trap: &TrapSpec,
    mode: usize,
    sideband: Sideband,
    n_max: usize,
    g0: f64,
    tau: f64,
) -> Result<LaserConfig> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument("sweep duration must be positive".into()));
    }
    let amplitude = chirp_amplitude(trap, mode, n_max, g0)?;
    let center = match sideband {
        Sideband::Red => -trap.nu(mode),
        Sideband::Blue => trap.nu(mode),
    };
    let d = Detuning::Chirp { center, amplitude, tau };
    Ok(LaserConfig {
        detunings: [d, d],
        phases: [-FRAC_PI_2; 2],
        envelope: Envelope::Sine { g0, tau },
        duration: tau,
    })
}

/// Which parts of the Hamiltonian to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HamiltonianOptions {
    /// Keep the −η²(n+½) bracket next to σ+ in the zeroth-order term.
    pub include_stark: bool,
    /// Keep only terms whose frequency vanishes at the centre detuning.
    pub resonant_only: bool,
}

impl Default for HamiltonianOptions {
    fn default() -> Self {
        Self {
            include_stark: true,
            resonant_only: false,
        }
    }
}

#[derive(Debug, Clone)]
struct Term {
    laser: usize,
    constant: C64,
    sign: f64,
    omega: f64,
    /// (slot of O, matrix element) and the same for O†
    slots: Vec<(usize, C64)>,
    adjoint_slots: Vec<(usize, C64)>,
}

/// Time-dependent Hamiltonian with a fixed sparsity pattern.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    space: ModeSpace,
    config: LaserConfig,
    pattern: SparseMatrix,
    terms: Vec<Term>,
}

fn ci(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

impl Hamiltonian {
    pub fn new(space: &ModeSpace, trap: &TrapSpec, config: &LaserConfig, options: HamiltonianOptions) -> Result<Self> {
        trap.validate()?;
        if space.num_modes() != trap.num_modes() {
            return Err(Error::InvalidArgument(format!(
                "space has {} modes, trap has {}",
                space.num_modes(),
                trap.num_modes()
            )));
        }
        let modes = space.num_modes();
        let sp = spin_map(space, SpinOp::Raise.matrix())?;
        let sm = spin_map(space, SpinOp::Lower.matrix())?;
        let a: Vec<SparseMatrix> = (1..=modes).map(|m| lower_sparse(space, m)).collect::<Result<_>>()?;
        let ad: Vec<SparseMatrix> = (1..=modes).map(|m| raise_sparse(space, m)).collect::<Result<_>>()?;

        // (operator, constant, s, ω) per laser before the laser phase is attached;
        // `phase_sign` says whether the term carries e^{+iφ_l} or e^{-iφ_l}.
        let mut raw: Vec<(SparseMatrix, C64, f64, f64, f64)> = Vec::new();
        raw.push((sp.clone(), ci(0.5, 0.0), 1.0, 0.0, 1.0));
        if options.include_stark {
            let mut stark = SparseMatrix::zero(space.dim());
            for m in 1..=modes {
                let eta2 = trap.eta(m).powi(2);
                stark = stark
                    .add_scaled(ci(eta2, 0.0), &number_sparse(space, m)?)?
                    .add_scaled(ci(0.5 * eta2, 0.0), &SparseMatrix::identity(space.dim()))?;
            }
            raw.push((stark, ci(-0.5, 0.0), 1.0, 0.0, 1.0));
        }
        for j in 1..=modes {
            let (eta, nu) = (trap.eta(j), trap.nu(j));
            let i_half_eta = ci(0.0, eta / 2.0); // η/2 · e^{iπ/2}
            raw.push((sp.matmul(&ad[j - 1])?, i_half_eta, 1.0, -nu, 1.0));
            raw.push((sp.matmul(&a[j - 1])?, i_half_eta, 1.0, nu, 1.0));
            for k in j + 1..=modes {
                let c = ci(-eta * trap.eta(k) / 2.0, 0.0);
                let hop = a[j - 1].matmul(&ad[k - 1])?;
                let dnu = trap.nu(k) - nu;
                raw.push((sp.matmul(&hop)?, c, 1.0, -dnu, 1.0));
                raw.push((sm.matmul(&hop)?, c, -1.0, -dnu, -1.0));
            }
            let ad2 = ad[j - 1].matmul(&ad[j - 1])?;
            let c2 = ci(-eta * eta / 4.0, 0.0);
            raw.push((sp.matmul(&ad2)?, c2, 1.0, -2.0 * nu, 1.0));
            raw.push((sm.matmul(&ad2)?, c2, -1.0, -2.0 * nu, -1.0));
        }

        let mut kept = Vec::new();
        for (op, c, s, omega, phase_sign) in raw {
            if op.nnz() == 0 {
                continue;
            }
            for laser in 0..2 {
                if options.resonant_only {
                    let f = s * config.detunings[laser].center() + omega;
                    if f.abs() > 1e-9 {
                        continue;
                    }
                }
                let constant = c * C64::from_polar(1.0, phase_sign * config.phases[laser]);
                kept.push((op.clone(), laser, constant, s, omega));
            }
        }

        let mut all = Vec::new();
        for (op, ..) in &kept {
            for (r, c, _) in op.triplets() {
                all.push((r, c, ci(1.0, 0.0)));
                all.push((c, r, ci(1.0, 0.0)));
            }
        }
        let mut pattern = SparseMatrix::from_triplets(space.dim(), all)?;
        pattern.values_mut().iter_mut().for_each(|v| *v = ci(0.0, 0.0));
        let slot = |r: usize, c: usize| pattern.position(r, c).expect("pattern covers every term");
        let terms = kept
            .into_iter()
            .map(|(op, laser, constant, sign, omega)| {
                let slots = op.triplets().map(|(r, c, v)| (slot(r, c), v)).collect();
                let adjoint_slots = op.triplets().map(|(r, c, v)| (slot(c, r), v.conj())).collect();
                Term {
                    laser,
                    constant,
                    sign,
                    omega,
                    slots,
                    adjoint_slots,
                }
            })
            .collect();
        Ok(Self {
            space: space.clone(),
            config: *config,
            pattern,
            terms,
        })
    }

    pub fn space(&self) -> &ModeSpace {
        &self.space
    }

    pub fn config(&self) -> &LaserConfig {
        &self.config
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Empty matrix with the sparsity pattern of H(t).
    pub fn pattern(&self) -> SparseMatrix {
        self.pattern.clone()
    }

    /// Overwrite the values of `h` (obtained from [`Hamiltonian::pattern`]) with H(t).
    pub fn assemble_into(&self, t: f64, h: &mut SparseMatrix) {
        let g = self.config.envelope.value(t);
        let vals = h.values_mut();
        vals.iter_mut().for_each(|v| *v = ci(0.0, 0.0));
        if g == 0.0 {
            return;
        }
        let theta = [self.config.detunings[0].phase(t), self.config.detunings[1].phase(t)];
        for term in &self.terms {
            let c = term.constant * g * C64::from_polar(1.0, -(term.sign * theta[term.laser] + term.omega * t));
            let cc = c.conj();
            for &(p, v) in &term.slots {
                vals[p] += c * v;
            }
            for &(p, v) in &term.adjoint_slots {
                vals[p] += cc * v;
            }
        }
    }

    pub fn at(&self, t: f64) -> SparseMatrix {
        let mut h = self.pattern();
        self.assemble_into(t, &mut h);
        h
    }
}

/// H_I(t) as an operator on `space`.
pub fn interaction_hamiltonian(
    space: &ModeSpace,
    trap: &TrapSpec,
    config: &LaserConfig,
    t: f64,
) -> Result<LinearOperator> {
    let h = Hamiltonian::new(space, trap, config, HamiltonianOptions::default())?;
    LinearOperator::from_sparse(space, h.at(t))
}
