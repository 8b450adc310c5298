//! Numerical studies with laser-driven gates: single-gate characterizations,
//! full sculpting protocols with per-gate ledgers, and noise maps.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::mpsc::Sender;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    evolve_lindblad, evolve_lindblad_span, evolve_unitary, evolve_unitary_span, fidelity, Dissipator,
    IntegratorSettings, NoiseSpec, QuantumState,
};
use crate::error::{Error, Result};
use crate::fock::{DensityOperator, HybridState, LinearOperator, ModeSpace, SparseMatrix, Spin, C64};
use crate::gates::{arithmetic_subtract, beam_splitter, carrier, post_select_spin, rsb};
use crate::laser::{
    adiabatic_schedule, gate_config, GateKind, Hamiltonian, HamiltonianOptions, LaserConfig, PulseParams, Sideband,
    TrapSpec,
};
use crate::sculpting::{ghz_target, prepare_sym, BasisMap, GhzConvention, LAMBDA, WITHOUT_IA_SEQUENCE};

/// Collective modes of the four-ion chain.
pub const MODES: usize = 4;
/// Amplitudes below this weight do not count as occupied.
const OCCUPIED: f64 = 1e-20;
/// Leakage above this is reported as a warning.
pub const LEAKAGE_WARNING: f64 = 1e-6;
/// Rise-time ratio of the B34 and B13 pulses in the collective scenario.
pub const WIDE_RISE_RATIO: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Local-basis preparation and one tilted beam splitter.
    WithIa,
    /// Collective-basis preparation and four 50-50 beam splitters.
    WithoutIa,
}

impl Scenario {
    pub fn label(&self) -> &'static str {
        match self {
            Scenario::WithIa => "with-ia",
            Scenario::WithoutIa => "without-ia",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateModel {
    /// Instantaneous ideal unitaries and subtractions.
    Ideal,
    /// Laser pulses integrated under the full interaction Hamiltonian.
    Realistic,
}

impl GateModel {
    pub fn label(&self) -> &'static str {
        match self {
            GateModel::Ideal => "ideal",
            GateModel::Realistic => "realistic",
        }
    }
}

/// Physical and numerical settings shared by every experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSettings {
    pub trap: TrapSpec,
    pub pulse: PulseParams,
    pub integrator: IntegratorSettings,
    pub hamiltonian: HamiltonianOptions,
    /// Per-mode Fock cutoff.
    pub cutoff: usize,
    /// Phonons allowed above the ideal total in each stage.
    pub headroom: usize,
    /// Interval searched for subtraction durations, ms.
    pub tau_search: [f64; 2],
    /// Golden-section resolution, ms.
    pub tau_resolution: f64,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            trap: TrapSpec::reference(),
            pulse: PulseParams::default(),
            integrator: IntegratorSettings::default(),
            hamiltonian: HamiltonianOptions::default(),
            cutoff: 5,
            headroom: 1,
            tau_search: [0.1, 1.2],
            tau_resolution: 1e-3,
        }
    }
}

impl ExperimentSettings {
    pub fn validate(&self) -> Result<()> {
        self.trap.validate()?;
        if self.trap.num_modes() != MODES {
            return Err(Error::Config(format!("the sculpting experiments need {MODES} modes")));
        }
        self.pulse.validate()?;
        self.integrator.validate()?;
        if self.cutoff < 4 {
            return Err(Error::Config("cutoff must be at least 4".into()));
        }
        let [lo, hi] = self.tau_search;
        if !(lo > 0.0 && hi > lo) || !(self.tau_resolution > 0.0) {
            return Err(Error::Config("tau_search must be an increasing positive pair".into()));
        }
        Ok(())
    }

    /// Four-mode space with spin and total phonon number ≤ `cap`.
    pub fn space(&self, cap: usize) -> Result<ModeSpace> {
        ModeSpace::with_total_cap(MODES, self.cutoff, true, cap.min(MODES * self.cutoff))
    }
}

/// One entry of a protocol schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    /// Laser pulse. Beam splitters run with the spin dressed in |−>.
    Pulse {
        kind: GateKind,
        theta: f64,
        phi: f64,
        rise_ratio: f64,
    },
    /// Adiabatic subtraction, spin reset and post-selection of |g>.
    /// `n_max` sets the chirp amplitude.
    Subtract { mode: usize, tau: f64, n_max: usize },
    /// rsb(2, 2π/3, π/2) followed by post-selection of |g>.
    Correct,
}

impl Step {
    pub fn label(&self) -> String {
        match self {
            Step::Pulse { kind, .. } => kind.label(),
            Step::Subtract { mode, .. } => format!("S{mode}"),
            Step::Correct => "RSB2".into(),
        }
    }
}

/// Beam-splitter layer of a scenario.
pub fn beam_splitter_steps(scenario: Scenario, pulse: &PulseParams) -> Vec<Step> {
    match scenario {
        Scenario::WithIa => vec![Step::Pulse {
            kind: GateKind::BeamSplitter(4, 2),
            theta: 2.0 * LAMBDA - FRAC_PI_2,
            phi: -FRAC_PI_2,
            rise_ratio: pulse.rise_ratio,
        }],
        Scenario::WithoutIa => WITHOUT_IA_SEQUENCE
            .iter()
            .map(|&(j, k)| Step::Pulse {
                kind: GateKind::BeamSplitter(j, k),
                theta: FRAC_PI_2,
                phi: -FRAC_PI_2,
                rise_ratio: if matches!((j, k), (3, 4) | (1, 3)) {
                    WIDE_RISE_RATIO
                } else {
                    pulse.rise_ratio
                },
            })
            .collect(),
    }
}

/// Collective-basis input of a scenario with the spin in |g>.
pub fn initial_state(scenario: Scenario, space: &ModeSpace) -> Result<HybridState> {
    let sym = prepare_sym(space)?;
    match scenario {
        Scenario::WithIa => BasisMap::reference().local_to_collective(&sym),
        Scenario::WithoutIa => Ok(sym),
    }
}

fn max_total(psi: &HybridState) -> usize {
    let space = psi.space();
    psi.amplitudes()
        .iter()
        .enumerate()
        .filter(|(_, a)| a.norm_sqr() > OCCUPIED)
        .map(|(i, _)| space.total_occupation(i))
        .max()
        .unwrap_or(0)
}

fn max_occupation(psi: &HybridState, mode: usize) -> usize {
    let space = psi.space();
    psi.amplitudes()
        .iter()
        .enumerate()
        .filter(|(_, a)| a.norm_sqr() > OCCUPIED)
        .map(|(i, _)| space.occupation(i, mode))
        .max()
        .unwrap_or(0)
}

fn transfer(state: &QuantumState, space: &ModeSpace) -> Result<(QuantumState, f64)> {
    Ok(match state {
        QuantumState::Pure(p) => {
            let (s, lost) = p.transfer(space)?;
            (QuantumState::Pure(s), lost)
        }
        QuantumState::Mixed(m) => {
            let (s, lost) = m.transfer(space)?;
            (QuantumState::Mixed(s), lost)
        }
    })
}

fn normalized(state: QuantumState) -> Result<QuantumState> {
    let w = state.weight();
    if !(w > 0.0) {
        return Err(Error::ImpossibleBranch);
    }
    Ok(match state {
        QuantumState::Pure(p) => QuantumState::Pure(p.scaled(C64::new(1.0 / w.sqrt(), 0.0))),
        QuantumState::Mixed(m) => QuantumState::Mixed(m.scaled(1.0 / w)),
    })
}

fn apply_unitary(u: &LinearOperator, state: QuantumState) -> Result<QuantumState> {
    Ok(match state {
        QuantumState::Pure(p) => QuantumState::Pure(u.apply(&p)?),
        QuantumState::Mixed(m) => QuantumState::Mixed(m.conjugated(&u.to_sparse())?),
    })
}

/// Multiplies the excited-spin amplitudes by e^{iφ}.
fn spin_phase(space: &ModeSpace, phi: f64) -> Result<LinearOperator> {
    let phase = C64::from_polar(1.0, phi);
    let diag = (0..space.dim())
        .map(|i| {
            let v = if space.labels(i).1 == Some(Spin::Excited) {
                phase
            } else {
                C64::new(1.0, 0.0)
            };
            (i, i, v)
        })
        .collect();
    LinearOperator::from_sparse(space, SparseMatrix::from_triplets(space.dim(), diag)?)
}

/// Keep the `spin` branch; returns the renormalized state and its probability.
fn select(state: QuantumState, spin: Spin) -> Result<(QuantumState, f64)> {
    let (kept, p) = match state {
        QuantumState::Pure(p) => {
            let (s, prob) = post_select_spin(&p, spin)?;
            (QuantumState::Pure(s), prob)
        }
        QuantumState::Mixed(m) => {
            let w = m.trace().re;
            let (s, tr) = m.project_spin(spin)?;
            if !(w > 0.0) || tr <= 1e-300 {
                return Err(Error::ImpossibleBranch);
            }
            (QuantumState::Mixed(s), tr / w)
        }
    };
    Ok((normalized(kept)?, p))
}

/// Normalized fidelity of `state` with the pure `target`.
pub fn state_fidelity(state: &QuantumState, target: &HybridState) -> Result<f64> {
    let w = state.weight() * target.norm_sqr();
    if !(w > 0.0) {
        return Err(Error::InvalidArgument("fidelity of a zero state".into()));
    }
    Ok(fidelity(state, target)? / w)
}

/// Result of one realistic step.
struct Outcome {
    state: QuantumState,
    probability: f64,
    duration: f64,
    /// largest |weight change| of an evolution in the step
    drift: f64,
}

/// Executes steps with one gate model and noise setting.
struct Lab<'a> {
    settings: &'a ExperimentSettings,
    noise: &'a NoiseSpec,
    model: GateModel,
    sideband: Sideband,
}

impl<'a> Lab<'a> {
    fn noisy(&self) -> bool {
        self.model == GateModel::Realistic && !self.noise.is_silent()
    }

    fn evolve(&self, cfg: &LaserConfig, state: QuantumState) -> Result<(QuantumState, f64)> {
        let h = Hamiltonian::new(state.space(), &self.settings.trap, cfg, self.settings.hamiltonian)?;
        let integ = &self.settings.integrator;
        let w0 = state.weight();
        let out = match state {
            QuantumState::Pure(p) if !self.noisy() => QuantumState::Pure(evolve_unitary(&h, &p, integ)?.0),
            other => {
                let rho = other.to_density();
                let noise = if self.noisy() {
                    self.noise.clone()
                } else {
                    NoiseSpec::noiseless(MODES)
                };
                let diss = Dissipator::new(rho.space(), &noise)?;
                QuantumState::Mixed(evolve_lindblad(&h, &diss, &rho, integ)?.0)
            }
        };
        let drift = (out.weight() - w0).abs();
        Ok((out, drift))
    }

    fn ideal_step(&self, step: &Step, psi: &HybridState) -> Result<(HybridState, f64)> {
        let space = psi.space();
        let (out, p) = match *step {
            Step::Pulse { kind, theta, phi, .. } => (kind.ideal_equivalent(theta, phi).apply(psi)?, 1.0),
            Step::Subtract { mode, .. } => arithmetic_subtract(psi, mode)?,
            Step::Correct => post_select_spin(&rsb(space, 2, 2.0 * PI / 3.0, FRAC_PI_2)?.apply(psi)?, Spin::Ground)?,
        };
        Ok((out.normalize()?.0, p))
    }

    fn pulse_config(&self, kind: GateKind, theta: f64, phi: f64, rise_ratio: f64) -> Result<LaserConfig> {
        let pulse = PulseParams {
            rise_ratio,
            ..self.settings.pulse
        };
        gate_config(kind, &self.settings.trap, theta, phi, &pulse)
    }

    fn sweep_config(&self, mode: usize, tau: f64, n_max: usize) -> Result<LaserConfig> {
        adiabatic_schedule(
            &self.settings.trap,
            mode,
            self.sideband,
            n_max.max(1),
            self.settings.pulse.g0,
            tau,
        )
    }

    fn real_step(&self, step: &Step, state: QuantumState) -> Result<Outcome> {
        if self.model == GateModel::Ideal {
            let QuantumState::Pure(psi) = state else {
                return Err(Error::InvalidArgument("ideal gates act on pure states".into()));
            };
            let (out, p) = self.ideal_step(step, &psi)?;
            return Ok(Outcome {
                state: QuantumState::Pure(out),
                probability: p,
                duration: 0.0,
                drift: 0.0,
            });
        }
        let space = state.space().clone();
        match *step {
            Step::Pulse {
                kind,
                theta,
                phi,
                rise_ratio,
            } => {
                let cfg = self.pulse_config(kind, theta, phi, rise_ratio)?;
                let dressed = matches!(kind, GateKind::BeamSplitter(..));
                let mut s = state;
                if dressed {
                    s = apply_unitary(&carrier(&space, FRAC_PI_2, -FRAC_PI_2)?, s)?;
                }
                let (mut s, drift) = self.evolve(&cfg, s)?;
                let frame = cfg.frame_phase();
                if frame != 0.0 {
                    s = apply_unitary(&spin_phase(&space, frame)?, s)?;
                }
                if dressed {
                    s = apply_unitary(&carrier(&space, -FRAC_PI_2, -FRAC_PI_2)?, s)?;
                }
                Ok(Outcome {
                    state: normalized(s)?,
                    probability: 1.0,
                    duration: cfg.duration,
                    drift,
                })
            }
            Step::Subtract { mode, tau, n_max } => {
                let cfg = self.sweep_config(mode, tau, n_max)?;
                let flip = carrier(&space, PI, FRAC_PI_2)?;
                let (s, drift) = match self.sideband {
                    Sideband::Red => {
                        let (s, drift) = self.evolve(&cfg, state)?;
                        (apply_unitary(&flip, s)?, drift)
                    }
                    Sideband::Blue => self.evolve(&cfg, apply_unitary(&flip, state)?)?,
                };
                let (s, p) = select(s, Spin::Ground)?;
                Ok(Outcome {
                    state: s,
                    probability: p,
                    duration: tau,
                    drift,
                })
            }
            Step::Correct => {
                let cfg = self.pulse_config(
                    GateKind::Rsb(2),
                    2.0 * PI / 3.0,
                    FRAC_PI_2,
                    self.settings.pulse.rise_ratio,
                )?;
                let (s, drift) = self.evolve(&cfg, state)?;
                let (s, p) = select(s, Spin::Ground)?;
                Ok(Outcome {
                    state: s,
                    probability: p,
                    duration: cfg.duration,
                    drift,
                })
            }
        }
    }
}

/// One gate of a protocol ledger.
#[derive(Debug, Clone, Serialize)]
pub struct LedgerRow {
    pub name: String,
    /// ms
    pub duration: f64,
    /// ms
    pub accumulated_time: f64,
    /// Fidelity when the gate acts on the ideal input.
    pub isolated_fidelity: Option<f64>,
    /// Fidelity of the running state with the ideal state after this gate.
    pub accumulated_fidelity: f64,
    pub branch_probability: f64,
    /// Weight dropped when moving into this stage's truncated space.
    pub leakage: f64,
    /// Largest change of norm² or trace during the integration.
    pub drift: f64,
}

/// Populations and coherence of |1100> and |0011> in the final state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhoElements {
    pub rho11: f64,
    pub rho22: f64,
    pub rho12_re: f64,
    pub rho12_im: f64,
}

impl RhoElements {
    pub fn rho12(&self) -> C64 {
        C64::new(self.rho12_re, self.rho12_im)
    }
}

/// ρ11 = <1100|ρ|1100>, ρ22 = <0011|ρ|0011>, ρ12 = <1100|ρ|0011> of the
/// motional state (spin traced out), normalized by the trace.
pub fn density_matrix_elements(state: &QuantumState) -> Result<RhoElements> {
    let space = state.space();
    if space.num_modes() != MODES {
        return Err(Error::InvalidArgument("density matrix elements need four modes".into()));
    }
    let spins: Vec<Option<Spin>> = if space.has_spin() {
        vec![Some(Spin::Ground), Some(Spin::Excited)]
    } else {
        vec![None]
    };
    let mut acc = [C64::new(0.0, 0.0); 3];
    for &s in &spins {
        let a = space.basis_index(&[1, 1, 0, 0], s)?;
        let b = space.basis_index(&[0, 0, 1, 1], s)?;
        let (aa, bb, ab) = match state {
            QuantumState::Pure(p) => {
                let (x, y) = (p.amplitudes()[a], p.amplitudes()[b]);
                (x * x.conj(), y * y.conj(), x * y.conj())
            }
            QuantumState::Mixed(m) => (m.get(a, a), m.get(b, b), m.get(a, b)),
        };
        acc[0] += aa;
        acc[1] += bb;
        acc[2] += ab;
    }
    let w = state.weight();
    if !(w > 0.0) {
        return Err(Error::InvalidArgument("zero state".into()));
    }
    Ok(RhoElements {
        rho11: acc[0].re / w,
        rho22: acc[1].re / w,
        rho12_re: acc[2].re / w,
        rho12_im: acc[2].im / w,
    })
}

/// What to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSpec {
    pub scenario: Scenario,
    pub gate_model: GateModel,
    pub sideband: Sideband,
    pub rsb_correction: bool,
    /// τ3, τ4 in ms; optimized at zero noise when absent.
    pub subtraction_times: Option<[f64; 2]>,
    /// Also run every gate on its ideal input.
    pub isolated: bool,
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        Self {
            scenario: Scenario::WithIa,
            gate_model: GateModel::Realistic,
            sideband: Sideband::Red,
            rsb_correction: true,
            subtraction_times: None,
            isolated: true,
        }
    }
}

/// Per-gate record of one protocol run.
#[derive(Debug, Clone, Serialize)]
pub struct ProtocolLedger {
    pub scenario: Scenario,
    pub gate_model: GateModel,
    pub sideband: Sideband,
    pub noise: NoiseSpec,
    pub subtraction_times: [f64; 2],
    pub rows: Vec<LedgerRow>,
    /// Fidelity with the GHZ target.
    pub final_fidelity: f64,
    pub success_probability: f64,
    pub rho: RhoElements,
    /// Set when a post-selection found an empty branch.
    pub failed: Option<String>,
    #[serde(skip)]
    pub final_state: Option<QuantumState>,
}

impl ProtocolLedger {
    pub fn row(&self, name: &str) -> Option<&LedgerRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn total_time(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.accumulated_time)
    }
}

struct Tracker<'a> {
    lab: Lab<'a>,
    real: QuantumState,
    ideal: HybridState,
    success: f64,
    time: f64,
    rows: Vec<LedgerRow>,
    isolated: bool,
}

impl<'a> Tracker<'a> {
    fn new(lab: Lab<'a>, initial: HybridState, isolated: bool) -> Self {
        Self {
            lab,
            real: QuantumState::Pure(initial.clone()),
            ideal: initial,
            success: 1.0,
            time: 0.0,
            rows: Vec::new(),
            isolated,
        }
    }

    fn enter(&self) -> Result<(HybridState, QuantumState, f64)> {
        let space = self
            .lab
            .settings
            .space(max_total(&self.ideal) + self.lab.settings.headroom)?;
        let (ideal, _) = self.ideal.transfer(&space)?;
        let (real, leak) = transfer(&self.real, &space)?;
        Ok((ideal, real, leak))
    }

    fn advance(&mut self, step: Step) -> Result<()> {
        let (ideal_in, real_in, leakage) = self.enter()?;
        let step = match step {
            Step::Subtract { mode, tau, n_max: 0 } => Step::Subtract {
                mode,
                tau,
                n_max: max_occupation(&ideal_in, mode),
            },
            s => s,
        };
        let (ideal_out, _) = self.lab.ideal_step(&step, &ideal_in)?;
        let out = self.lab.real_step(&step, real_in)?;
        let isolated_fidelity = if self.isolated {
            let iso = self.lab.real_step(&step, QuantumState::Pure(ideal_in))?;
            Some(state_fidelity(&iso.state, &ideal_out)?)
        } else {
            None
        };
        self.time += out.duration;
        self.success *= out.probability;
        self.rows.push(LedgerRow {
            name: step.label(),
            duration: out.duration,
            accumulated_time: self.time,
            isolated_fidelity,
            accumulated_fidelity: state_fidelity(&out.state, &ideal_out)?,
            branch_probability: out.probability,
            leakage,
            drift: out.drift,
        });
        self.real = out.state;
        self.ideal = ideal_out;
        Ok(())
    }
}

/// The full schedule of a scenario with the given subtraction times.
pub fn protocol_steps(spec: &ProtocolSpec, pulse: &PulseParams, times: [f64; 2]) -> Vec<Step> {
    let mut steps = beam_splitter_steps(spec.scenario, pulse);
    steps.push(Step::Subtract {
        mode: 3,
        tau: times[0],
        n_max: 0,
    });
    steps.push(Step::Subtract {
        mode: 4,
        tau: times[1],
        n_max: 0,
    });
    if spec.rsb_correction {
        steps.push(Step::Correct);
    }
    steps
}

/// Run a sculpting scenario end to end and record every gate.
pub fn run_protocol(spec: &ProtocolSpec, settings: &ExperimentSettings, noise: &NoiseSpec) -> Result<ProtocolLedger> {
    settings.validate()?;
    noise.validate(MODES)?;
    let times = match (spec.subtraction_times, spec.gate_model) {
        (Some(t), _) => t,
        (None, GateModel::Ideal) => [0.0; 2],
        (None, GateModel::Realistic) => optimize_subtraction_times(spec.scenario, spec.sideband, settings)?.tau,
    };
    if spec.gate_model == GateModel::Realistic && !times.iter().all(|t| *t > 0.0) {
        return Err(Error::Config("subtraction times must be positive".into()));
    }
    let lab = Lab {
        settings,
        noise,
        model: spec.gate_model,
        sideband: spec.sideband,
    };
    let space = settings.space(MODES + settings.headroom)?;
    let mut tracker = Tracker::new(lab, initial_state(spec.scenario, &space)?, spec.isolated);
    let mut failed = None;
    for step in protocol_steps(spec, &settings.pulse, times) {
        match tracker.advance(step) {
            Ok(()) => {}
            Err(Error::ImpossibleBranch) => {
                failed = Some(format!("empty post-selection branch at {}", step.label()));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let (final_fidelity, rho) = if failed.is_none() {
        let target = ghz_target(tracker.real.space(), GhzConvention::Main)?;
        (
            state_fidelity(&tracker.real, &target)?,
            density_matrix_elements(&tracker.real)?,
        )
    } else {
        (
            0.0,
            RhoElements {
                rho11: 0.0,
                rho22: 0.0,
                rho12_re: 0.0,
                rho12_im: 0.0,
            },
        )
    };
    Ok(ProtocolLedger {
        scenario: spec.scenario,
        gate_model: spec.gate_model,
        sideband: spec.sideband,
        noise: noise.clone(),
        subtraction_times: times,
        rows: tracker.rows,
        final_fidelity,
        success_probability: if failed.is_none() { tracker.success } else { 0.0 },
        rho,
        failed,
        final_state: Some(tracker.real),
    })
}

/// Optimized subtraction durations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubtractionTimes {
    /// τ3, τ4 in ms
    pub tau: [f64; 2],
    /// Accumulated fidelity after both subtractions at these times.
    pub fidelity: f64,
    pub evaluations: usize,
}

/// Maximize `f` on `[lo, hi]`: a uniform scan with `coarse` points, then a
/// golden-section search in the bracket around the best point.
pub fn maximize<F>(mut f: F, lo: f64, hi: f64, coarse: usize, tol: f64) -> Result<(f64, f64, usize)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let coarse = coarse.max(3);
    let grid: Vec<f64> = (0..coarse)
        .map(|i| lo + (hi - lo) * i as f64 / (coarse - 1) as f64)
        .collect();
    let mut values = Vec::with_capacity(coarse);
    for &x in &grid {
        values.push(f(x)?);
    }
    let mut evals = coarse;
    let best = (0..coarse)
        .max_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(coarse - 1)]);
    let (mut best_x, mut best_f) = (grid[best], values[best]);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    evals += 2;
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
        evals += 1;
    }
    for (x, v) in [(c, fc), (d, fd)] {
        if v > best_f {
            best_x = x;
            best_f = v;
        }
    }
    Ok((best_x, best_f, evals))
}

/// Durations of the two subtractions maximizing the noiseless accumulated
/// fidelity after both: first τ3 alone, then τ4, then τ3 again near its
/// first optimum with the final objective.
pub fn optimize_subtraction_times(
    scenario: Scenario,
    sideband: Sideband,
    settings: &ExperimentSettings,
) -> Result<SubtractionTimes> {
    settings.validate()?;
    let silent = NoiseSpec::noiseless(MODES);
    let lab = Lab {
        settings,
        noise: &silent,
        model: GateModel::Realistic,
        sideband,
    };
    let space = settings.space(MODES + settings.headroom)?;
    let mut tracker = Tracker::new(lab, initial_state(scenario, &space)?, false);
    for step in beam_splitter_steps(scenario, &settings.pulse) {
        tracker.advance(step)?;
    }
    let (ideal_in, real_in, _) = tracker.enter()?;
    let lab = &tracker.lab;
    let n3 = max_occupation(&ideal_in, 3);
    let (ideal3, _) = lab.ideal_step(
        &Step::Subtract {
            mode: 3,
            tau: 1.0,
            n_max: n3,
        },
        &ideal_in,
    )?;
    let after3 = |tau: f64| -> Result<QuantumState> {
        let step = Step::Subtract {
            mode: 3,
            tau,
            n_max: n3,
        };
        Ok(lab.real_step(&step, real_in.clone())?.state)
    };
    let space4 = settings.space(max_total(&ideal3) + settings.headroom)?;
    let (ideal3_small, _) = ideal3.transfer(&space4)?;
    let n4 = max_occupation(&ideal3_small, 4);
    let (ideal4, _) = lab.ideal_step(
        &Step::Subtract {
            mode: 4,
            tau: 1.0,
            n_max: n4,
        },
        &ideal3_small,
    )?;
    let after4 = |s3: &QuantumState, tau: f64| -> Result<f64> {
        let (s3, _) = transfer(s3, &space4)?;
        let out = lab.real_step(
            &Step::Subtract {
                mode: 4,
                tau,
                n_max: n4,
            },
            s3,
        )?;
        state_fidelity(&out.state, &ideal4)
    };
    let [lo, hi] = settings.tau_search;
    let tol = settings.tau_resolution;
    let coarse = 12;
    let (t3, _, e1) = maximize(|t| state_fidelity(&after3(t)?, &ideal3), lo, hi, coarse, tol)?;
    let s3 = after3(t3)?;
    let (t4, _, e2) = maximize(|t| after4(&s3, t), lo, hi, coarse, tol)?;
    let spacing = (hi - lo) / (coarse - 1) as f64;
    let (a, b) = ((t3 - spacing).max(lo), (t3 + spacing).min(hi));
    let (t3, fid, e3) = maximize(|t| after4(&after3(t)?, t4), a, b, 5, tol)?;
    Ok(SubtractionTimes {
        tau: [t3, t4],
        fidelity: fid,
        evaluations: e1 + e2 + e3,
    })
}

/// How the noise scales vary across a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coupling {
    /// Full grid over both scales.
    Both,
    /// ξκ = 0.
    GammaOnly,
    /// ξγ = 0.
    KappaOnly,
    /// ξγ = ξκ.
    Diagonal,
}

impl Coupling {
    pub fn label(&self) -> &'static str {
        match self {
            Coupling::Both => "both",
            Coupling::GammaOnly => "gamma-only",
            Coupling::KappaOnly => "kappa-only",
            Coupling::Diagonal => "diagonal",
        }
    }

    /// Points (ξγ, ξκ) in output order.
    pub fn points(&self, xi_gamma: &[f64], xi_kappa: &[f64]) -> Vec<(f64, f64)> {
        match self {
            Coupling::Both => xi_gamma
                .iter()
                .flat_map(|&g| xi_kappa.iter().map(move |&k| (g, k)))
                .collect(),
            Coupling::GammaOnly => xi_gamma.iter().map(|&g| (g, 0.0)).collect(),
            Coupling::KappaOnly => xi_kappa.iter().map(|&k| (0.0, k)).collect(),
            Coupling::Diagonal => xi_gamma.iter().map(|&x| (x, x)).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NoisePoint {
    pub xi_gamma: f64,
    pub xi_kappa: f64,
    pub fidelity: f64,
    pub success_probability: f64,
    pub rho: RhoElements,
    pub failed: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseMap {
    pub scenario: Scenario,
    pub sideband: Sideband,
    pub coupling: Coupling,
    pub subtraction_times: [f64; 2],
    pub points: Vec<NoisePoint>,
}

impl NoiseMap {
    pub fn at(&self, xi_gamma: f64, xi_kappa: f64) -> Option<&NoisePoint> {
        self.points
            .iter()
            .find(|p| (p.xi_gamma - xi_gamma).abs() < 1e-12 && (p.xi_kappa - xi_kappa).abs() < 1e-12)
    }

    /// Largest increase of the fidelity along either noise axis.
    pub fn monotonicity_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for p in &self.points {
            for q in &self.points {
                let along_gamma = q.xi_kappa == p.xi_kappa && q.xi_gamma > p.xi_gamma;
                let along_kappa = q.xi_gamma == p.xi_gamma && q.xi_kappa > p.xi_kappa;
                let along_diag = self.coupling == Coupling::Diagonal && q.xi_gamma > p.xi_gamma;
                if (along_gamma || along_kappa || along_diag) && p.failed.is_none() && q.failed.is_none() {
                    worst = worst.max(q.fidelity - p.fidelity);
                }
            }
        }
        worst
    }
}

/// Progress of a sweep, sent after every finished point.
#[derive(Debug, Clone, PartialEq)]
pub struct Progress {
    pub task: String,
    pub completed: usize,
    pub total: usize,
}

fn report(progress: Option<&Sender<Progress>>, task: &str, done: &std::sync::atomic::AtomicUsize, total: usize) {
    let completed = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
    if let Some(tx) = progress {
        // a dropped receiver only silences reporting
        let _ = tx.send(Progress {
            task: task.into(),
            completed,
            total,
        });
    }
}

/// Final fidelity and ρ elements over a grid of noise scales (multiples of
/// the rates in `base`). Subtraction times are optimized once at zero noise
/// unless fixed in `spec`. Points run on the current rayon pool.
pub fn noise_map(
    spec: &ProtocolSpec,
    settings: &ExperimentSettings,
    base: &NoiseSpec,
    xi_gamma: &[f64],
    xi_kappa: &[f64],
    coupling: Coupling,
    progress: Option<&Sender<Progress>>,
) -> Result<NoiseMap> {
    settings.validate()?;
    base.validate(MODES)?;
    let grid = coupling.points(xi_gamma, xi_kappa);
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty noise grid".into()));
    }
    if grid
        .iter()
        .any(|&(g, k)| !(0.0..=2.0).contains(&g) || !(0.0..=2.0).contains(&k))
    {
        return Err(Error::InvalidArgument("noise scales must lie in [0, 2]".into()));
    }
    let times = match (spec.subtraction_times, spec.gate_model) {
        (Some(t), _) => t,
        (None, GateModel::Ideal) => [0.0; 2],
        (None, GateModel::Realistic) => optimize_subtraction_times(spec.scenario, spec.sideband, settings)?.tau,
    };
    let point_spec = ProtocolSpec {
        subtraction_times: Some(times),
        isolated: false,
        ..spec.clone()
    };
    let done = std::sync::atomic::AtomicUsize::new(0);
    let total = grid.len();
    let points: Vec<NoisePoint> = grid
        .par_iter()
        .map(|&(g, k)| {
            let noise = base.scaled(g, k);
            let run = run_protocol(&point_spec, settings, &noise);
            report(progress, "noisemap", &done, total);
            match run {
                Ok(l) => NoisePoint {
                    xi_gamma: g,
                    xi_kappa: k,
                    fidelity: l.final_fidelity,
                    success_probability: l.success_probability,
                    rho: l.rho,
                    failed: l.failed,
                },
                Err(e) => NoisePoint {
                    xi_gamma: g,
                    xi_kappa: k,
                    fidelity: f64::NAN,
                    success_probability: f64::NAN,
                    rho: RhoElements {
                        rho11: f64::NAN,
                        rho22: f64::NAN,
                        rho12_re: f64::NAN,
                        rho12_im: f64::NAN,
                    },
                    failed: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(NoiseMap {
        scenario: spec.scenario,
        sideband: spec.sideband,
        coupling,
        subtraction_times: times,
        points,
    })
}

/// Rectangular table of sweep results; failed rows carry NaN values.
#[derive(Debug, Clone, Serialize)]
pub struct SweepGrid {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub values: Vec<f64>,
    pub failed: Option<String>,
}

impl SweepGrid {
    fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Result<Vec<f64>>, keys: &[f64]) {
        let width = self.columns.len();
        self.rows.push(match row {
            Ok(values) => SweepRow { values, failed: None },
            Err(e) => {
                let mut values = keys.to_vec();
                values.resize(width, f64::NAN);
                SweepRow {
                    values,
                    failed: Some(e.to_string()),
                }
            }
        });
    }

    /// Values of one column, row by row.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r.values[i]).collect())
    }
}

fn population(state: &QuantumState, occupations: &[usize], spin: Option<Spin>) -> Result<f64> {
    let space = state.space();
    let spins: Vec<Option<Spin>> = match spin {
        Some(s) => vec![Some(s)],
        None if space.has_spin() => vec![Some(Spin::Ground), Some(Spin::Excited)],
        None => vec![None],
    };
    let mut p = 0.0;
    for s in spins {
        let i = space.basis_index(occupations, s)?;
        p += match state {
            QuantumState::Pure(psi) => psi.amplitudes()[i].norm_sqr(),
            QuantumState::Mixed(m) => m.get(i, i).re,
        };
    }
    Ok(p / state.weight())
}

fn unit(mode: usize, n: usize) -> Vec<usize> {
    let mut occ = vec![0; MODES];
    occ[mode - 1] = n;
    occ
}

fn realistic_lab<'a>(settings: &'a ExperimentSettings, noise: &'a NoiseSpec, sideband: Sideband) -> Lab<'a> {
    Lab {
        settings,
        noise,
        model: GateModel::Realistic,
        sideband,
    }
}

/// Red sideband rsb(θ, π/2) on `mode` acting on |g>|1>: infidelity with the
/// ideal gate and the populations of |e>|0> and |g>|1>.
pub fn characterize_rsb(
    settings: &ExperimentSettings,
    noise: &NoiseSpec,
    mode: usize,
    thetas: &[f64],
) -> Result<SweepGrid> {
    settings.validate()?;
    noise.validate(MODES)?;
    settings.trap.check_mode(mode)?;
    let lab = realistic_lab(settings, noise, Sideband::Red);
    let space = settings.space(1 + settings.headroom)?;
    let psi0 = HybridState::basis(&space, &unit(mode, 1), Some(Spin::Ground))?;
    let rows: Vec<Result<Vec<f64>>> = thetas
        .par_iter()
        .map(|&theta| {
            let ideal = rsb(&space, mode, theta, FRAC_PI_2)?.apply(&psi0)?;
            let (state, duration) = if theta == 0.0 {
                (QuantumState::Pure(psi0.clone()), 0.0)
            } else {
                let step = Step::Pulse {
                    kind: GateKind::Rsb(mode),
                    theta,
                    phi: FRAC_PI_2,
                    rise_ratio: settings.pulse.rise_ratio,
                };
                let out = lab.real_step(&step, QuantumState::Pure(psi0.clone()))?;
                (out.state, out.duration)
            };
            Ok(vec![
                theta,
                duration,
                1.0 - state_fidelity(&state, &ideal)?,
                population(&state, &[0; MODES], Some(Spin::Excited))?,
                population(&state, &unit(mode, 1), Some(Spin::Ground))?,
            ])
        })
        .collect();
    let mut grid = SweepGrid::new("rsb", &["theta", "duration_ms", "infidelity", "pop_e0", "pop_g1"]);
    for (row, &theta) in rows.into_iter().zip(thetas) {
        grid.push(row, &[theta]);
    }
    Ok(grid)
}

/// Beam splitter B_{j,k}(θ, −π/2) acting on one phonon in mode j:
/// infidelity with the ideal gate and the phonon populations of j and k.
pub fn characterize_bs(
    settings: &ExperimentSettings,
    noise: &NoiseSpec,
    pairs: &[(usize, usize)],
    thetas: &[f64],
) -> Result<SweepGrid> {
    settings.validate()?;
    noise.validate(MODES)?;
    let lab = realistic_lab(settings, noise, Sideband::Red);
    let space = settings.space(1 + settings.headroom)?;
    let mut tasks = Vec::new();
    for &(j, k) in pairs {
        GateKind::BeamSplitter(j, k).angle_factor(&settings.trap)?;
        for &theta in thetas {
            tasks.push((j, k, theta));
        }
    }
    let rows: Vec<Result<Vec<f64>>> = tasks
        .par_iter()
        .map(|&(j, k, theta)| {
            let psi0 = HybridState::basis(&space, &unit(j, 1), Some(Spin::Ground))?;
            let ideal = beam_splitter(&space, j, k, theta, -FRAC_PI_2)?.apply(&psi0)?;
            let (state, duration) = if theta == 0.0 {
                (QuantumState::Pure(psi0), 0.0)
            } else {
                let step = Step::Pulse {
                    kind: GateKind::BeamSplitter(j, k),
                    theta,
                    phi: -FRAC_PI_2,
                    rise_ratio: settings.pulse.rise_ratio,
                };
                let out = lab.real_step(&step, QuantumState::Pure(psi0))?;
                (out.state, out.duration)
            };
            Ok(vec![
                j as f64,
                k as f64,
                theta,
                duration,
                1.0 - state_fidelity(&state, &ideal)?,
                population(&state, &unit(j, 1), None)?,
                population(&state, &unit(k, 1), None)?,
            ])
        })
        .collect();
    let mut grid = SweepGrid::new(
        "beam_splitter",
        &["j", "k", "theta", "duration_ms", "infidelity", "pop_j", "pop_k"],
    );
    for (row, &(j, k, theta)) in rows.into_iter().zip(&tasks) {
        grid.push(row, &[j as f64, k as f64, theta]);
    }
    Ok(grid)
}

/// Adiabatic subtraction from |g>|n> on `mode` for each duration. The
/// infidelity is 1 − p·F with F the fidelity of the post-selected state with
/// |g>|n−1> and p the branch probability; both are reported too.
/// `n_max` sets the chirp amplitude (at least the largest `n`).
pub fn characterize_subtraction(
    settings: &ExperimentSettings,
    noise: &NoiseSpec,
    mode: usize,
    sideband: Sideband,
    taus: &[f64],
    occupations: &[usize],
    n_max: usize,
) -> Result<SweepGrid> {
    settings.validate()?;
    noise.validate(MODES)?;
    settings.trap.check_mode(mode)?;
    let top = occupations.iter().copied().max().unwrap_or(0);
    if occupations.contains(&0) || top > settings.cutoff {
        return Err(Error::InvalidArgument(format!(
            "initial occupations must lie in 1..={}",
            settings.cutoff
        )));
    }
    let n_max = n_max.max(top);
    let lab = realistic_lab(settings, noise, sideband);
    let eta_g = settings.trap.eta(mode) * settings.pulse.g0;
    let mut tasks = Vec::new();
    for &n in occupations {
        for &tau in taus {
            tasks.push((n, tau));
        }
    }
    let rows: Vec<Result<Vec<f64>>> = tasks
        .par_iter()
        .map(|&(n, tau)| {
            let space = settings.space(n + settings.headroom)?;
            let psi0 = HybridState::basis(&space, &unit(mode, n), Some(Spin::Ground))?;
            let target = HybridState::basis(&space, &unit(mode, n - 1), Some(Spin::Ground))?;
            let out = lab.real_step(&Step::Subtract { mode, tau, n_max }, QuantumState::Pure(psi0))?;
            let kept = state_fidelity(&out.state, &target)?;
            // the ideal subtraction of a Fock state never fails, so the discarded branch counts as error
            Ok(vec![
                n as f64,
                tau,
                tau * eta_g,
                1.0 - out.probability * kept,
                1.0 - kept,
                out.probability,
            ])
        })
        .collect();
    let mut grid = SweepGrid::new(
        "subtraction",
        &[
            "n",
            "tau_ms",
            "scaled_duration",
            "infidelity",
            "post_selected_infidelity",
            "success",
        ],
    );
    for (row, &(n, tau)) in rows.into_iter().zip(&tasks) {
        grid.push(row, &[n as f64, tau, tau * eta_g]);
    }
    Ok(grid)
}

/// <n> of `mode` during the adiabatic sweep from |g>|n> (before the spin
/// reset), sampled at `samples` equally spaced fractions of τ.
pub fn subtraction_trajectory(
    settings: &ExperimentSettings,
    noise: &NoiseSpec,
    mode: usize,
    sideband: Sideband,
    tau: f64,
    n: usize,
    n_max: usize,
    samples: usize,
) -> Result<SweepGrid> {
    settings.validate()?;
    noise.validate(MODES)?;
    if n == 0 || n > settings.cutoff || samples < 2 {
        return Err(Error::InvalidArgument(
            "need 1 <= n <= cutoff and at least two samples".into(),
        ));
    }
    let lab = realistic_lab(settings, noise, sideband);
    let space = settings.space(n + settings.headroom)?;
    let mut psi = HybridState::basis(&space, &unit(mode, n), Some(Spin::Ground))?;
    if sideband == Sideband::Blue {
        psi = carrier(&space, PI, FRAC_PI_2)?.apply(&psi)?;
    }
    let cfg = lab.sweep_config(mode, tau, n_max.max(n))?;
    let h = Hamiltonian::new(&space, &settings.trap, &cfg, settings.hamiltonian)?;
    let mean_n = |s: &QuantumState| -> f64 {
        let w = s.weight();
        (0..space.dim())
            .map(|i| {
                let p = match s {
                    QuantumState::Pure(p) => p.amplitudes()[i].norm_sqr(),
                    QuantumState::Mixed(m) => m.get(i, i).re,
                };
                p * space.occupation(i, mode) as f64
            })
            .sum::<f64>()
            / w
    };
    let noisy = lab.noisy();
    let diss = Dissipator::new(&space, noise)?;
    let mut state = if noisy {
        QuantumState::Mixed(DensityOperator::from_pure(&psi))
    } else {
        QuantumState::Pure(psi)
    };
    let mut grid = SweepGrid::new("subtraction_trajectory", &["t_over_tau", "mean_n"]);
    grid.push(Ok(vec![0.0, mean_n(&state)]), &[0.0]);
    for i in 1..samples {
        let (t0, t1) = (
            (i - 1) as f64 / (samples - 1) as f64 * tau,
            i as f64 / (samples - 1) as f64 * tau,
        );
        state = match state {
            QuantumState::Pure(p) => QuantumState::Pure(evolve_unitary_span(&h, &p, t0, t1, &settings.integrator)?.0),
            QuantumState::Mixed(m) => {
                QuantumState::Mixed(evolve_lindblad_span(&h, &diss, &m, t0, t1, &settings.integrator)?.0)
            }
        };
        grid.push(Ok(vec![t1 / tau, mean_n(&state)]), &[t1 / tau]);
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ideal_spec(scenario: Scenario, correction: bool) -> ProtocolSpec {
        ProtocolSpec {
            scenario,
            gate_model: GateModel::Ideal,
            rsb_correction: correction,
            ..Default::default()
        }
    }

    #[test]
    fn ideal_protocols_reproduce_closed_forms() {
        let settings = ExperimentSettings::default();
        let noise = NoiseSpec::reference();
        for scenario in [Scenario::WithIa, Scenario::WithoutIa] {
            let l = run_protocol(&ideal_spec(scenario, true), &settings, &noise).unwrap();
            assert!((l.final_fidelity - 1.0).abs() < 1e-12);
            assert!((l.success_probability - 0.125).abs() < 1e-12);
            let product: f64 = l.rows.iter().map(|r| r.branch_probability).product();
            assert!((product - l.success_probability).abs() < 1e-12);
            let l = run_protocol(&ideal_spec(scenario, false), &settings, &noise).unwrap();
            assert!((l.final_fidelity - 0.9).abs() < 1e-12);
            assert!((l.success_probability - 5.0 / 16.0).abs() < 1e-12);
            assert!(l.rows.iter().all(|r| (r.accumulated_fidelity - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn scenario_outputs_agree_with_ideal_gates() {
        let settings = ExperimentSettings::default();
        let noise = NoiseSpec::noiseless(4);
        let a = run_protocol(&ideal_spec(Scenario::WithIa, true), &settings, &noise).unwrap();
        let b = run_protocol(&ideal_spec(Scenario::WithoutIa, true), &settings, &noise).unwrap();
        let (Some(QuantumState::Pure(x)), Some(QuantumState::Pure(y))) = (a.final_state, b.final_state) else {
            panic!("ideal runs stay pure");
        };
        assert!((x.inner(&y).unwrap().norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rho_elements() {
        let space = ExperimentSettings::default().space(2).unwrap();
        let ghz = ghz_target(&space, GhzConvention::Main).unwrap();
        let e = density_matrix_elements(&QuantumState::Pure(ghz)).unwrap();
        assert!((e.rho11 - 0.5).abs() < 1e-14 && (e.rho22 - 0.5).abs() < 1e-14);
        assert!((e.rho12() - C64::new(-0.5, 0.0)).norm() < 1e-14);
        let prod = HybridState::basis(&space, &[1, 1, 0, 0], Some(Spin::Ground)).unwrap();
        let e = density_matrix_elements(&QuantumState::Mixed(DensityOperator::from_pure(&prod))).unwrap();
        assert_eq!((e.rho11, e.rho22, e.rho12_re, e.rho12_im), (1.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn golden_section_finds_peak() {
        let (x, fx, evals) = maximize(
            |x| Ok(-(x - 0.37f64).powi(2) + (5.0 * x).sin() * 0.01),
            0.0,
            1.0,
            9,
            1e-4,
        )
        .unwrap();
        let fine = (0..100_001)
            .map(|i| i as f64 / 100_000.0)
            .map(|x| (x, -(x - 0.37f64).powi(2) + (5.0 * x).sin() * 0.01));
        let best = fine.max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert!((x - best.0).abs() < 2e-4, "{x} {}", best.0);
        assert!(fx >= best.1 - 1e-8);
        assert!(evals < 40);
    }

    #[test]
    fn coupling_points() {
        let xs = [0.0, 1.0, 2.0];
        assert_eq!(Coupling::Both.points(&xs, &xs).len(), 9);
        assert_eq!(Coupling::GammaOnly.points(&xs, &xs)[2], (2.0, 0.0));
        assert_eq!(Coupling::KappaOnly.points(&xs, &xs)[1], (0.0, 1.0));
        assert_eq!(Coupling::Diagonal.points(&xs, &xs)[2], (2.0, 2.0));
    }

    #[test]
    fn rsb_zero_angle_is_trivial() {
        let settings = ExperimentSettings::default();
        let g = characterize_rsb(&settings, &NoiseSpec::reference(), 2, &[0.0]).unwrap();
        assert_eq!(g.column("infidelity").unwrap()[0], 0.0);
        assert_eq!(g.column("pop_g1").unwrap()[0], 1.0);
    }

    #[test]
    fn single_subtraction_lowers_occupation() {
        let settings = ExperimentSettings::default();
        let g = characterize_subtraction(
            &settings,
            &NoiseSpec::noiseless(4),
            4,
            Sideband::Red,
            &[0.67],
            &[1, 2],
            2,
        )
        .unwrap();
        // transfer oscillates with τ; 0.67 ms is past the first dip for n = 1, 2
        for inf in g.column("infidelity").unwrap() {
            assert!(inf < 0.05, "{inf}");
        }
        for inf in g.column("post_selected_infidelity").unwrap() {
            assert!(inf < 1e-5, "{inf}");
        }
    }

    #[test]
    fn light_shift_compensation_restores_sidebands() {
        let mut settings = ExperimentSettings::default();
        let noise = NoiseSpec::noiseless(4);
        let raw = characterize_rsb(&settings, &noise, 2, &[FRAC_PI_2]).unwrap();
        assert!(raw.column("infidelity").unwrap()[0] > 0.1);
        settings.pulse.light_shift_compensation = true;
        let fixed = characterize_rsb(&settings, &noise, 2, &[FRAC_PI_2]).unwrap();
        assert!(fixed.column("infidelity").unwrap()[0] < 1e-2);

        let space = settings.space(2).unwrap();
        let psi0 = HybridState::basis(&space, &[0; MODES], Some(Spin::Ground)).unwrap();
        let ideal = crate::gates::bsb(&space, 3, PI, FRAC_PI_2)
            .unwrap()
            .apply(&psi0)
            .unwrap();
        let lab = realistic_lab(&settings, &noise, Sideband::Red);
        let step = Step::Pulse {
            kind: GateKind::Bsb(3),
            theta: PI,
            phi: FRAC_PI_2,
            rise_ratio: settings.pulse.rise_ratio,
        };
        let out = lab.real_step(&step, QuantumState::Pure(psi0)).unwrap();
        let f = state_fidelity(&out.state, &ideal).unwrap();
        assert!(f > 0.99, "{f}");
    }
}
