//! Command-line front end.
//!
//! Settings are resolved in this order, later sources winning: the built-in
//! `paper-2022` profile, the TOML file given with `--config`, `IONSCULPT_*`
//! environment variables, command-line flags. Every command writes a
//! tab-separated table with a `#` metadata header and a JSON record into the
//! output directory.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dynamics::{DephasingForm, NoiseSpec};
use crate::entanglement::{entropy_sweep, linspace, mode_entanglement, particle_entanglement};
use crate::experiments::{
    characterize_bs, characterize_rsb, characterize_subtraction, noise_map, optimize_subtraction_times, run_protocol,
    subtraction_trajectory, Coupling, ExperimentSettings, GateModel, NoiseMap, Progress, ProtocolLedger, ProtocolSpec,
    Scenario, SweepGrid, MODES,
};
use crate::laser::Sideband;
use crate::sculpting::{
    closed_form_overlap, closed_form_success, general_sculpt, prepare_sym, SculptVariant, GENERAL_MAX_N,
};
use crate::{Error, ModeSpace};

pub const PROFILE: &str = "paper-2022";
pub const ENV_PREFIX: &str = "IONSCULPT_";

/// Exit status for usage and configuration errors.
pub const EXIT_USAGE: i32 = 1;
/// Exit status when the numerics fail.
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "ionsculpt",
    version,
    about = "Phonon-subtraction GHZ sculpting on a four-ion chain"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML run configuration
    #[arg(long, global = true, env = "IONSCULPT_CONFIG")]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, env = "IONSCULPT_OUT")]
    pub out: Option<PathBuf>,
    /// Per-mode Fock cutoff
    #[arg(long, global = true, env = "IONSCULPT_CUTOFF")]
    pub cutoff: Option<usize>,
    /// Worker threads for sweeps (default: available cores)
    #[arg(long, global = true, env = "IONSCULPT_WORKERS")]
    pub workers: Option<usize>,
    /// Relative tolerance of the integrator
    #[arg(long, global = true, env = "IONSCULPT_RTOL")]
    pub rtol: Option<f64>,
    /// Defaults profile
    #[arg(long, global = true, env = "IONSCULPT_PROFILE")]
    pub profile: Option<String>,
    /// ideal | realistic
    #[arg(long, global = true, env = "IONSCULPT_GATES", value_parser = kebab::<GateModel>)]
    pub gates: Option<GateModel>,
    /// red | blue
    #[arg(long, global = true, env = "IONSCULPT_SIDEBAND", value_parser = kebab::<Sideband>)]
    pub sideband: Option<Sideband>,
    /// Use the (a a†)-ordered dephasing dissipator (not Hermiticity preserving)
    #[arg(long, global = true, env = "IONSCULPT_AS_PRINTED_DEPHASING")]
    pub as_printed_dephasing: bool,
    /// Track the carrier light shift in sideband pulse detunings
    #[arg(long, global = true, env = "IONSCULPT_LIGHT_SHIFT_COMPENSATION")]
    pub light_shift_compensation: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Ideal-gate sculpting: overlaps and success probabilities
    Ideal(IdealArgs),
    /// Single-gate characterization
    Gates {
        #[command(subcommand)]
        which: GateCommand,
    },
    /// One protocol run with its per-gate ledger
    Protocol(ProtocolArgs),
    /// Final fidelity over a grid of noise scales
    Noisemap(NoisemapArgs),
    /// Mode and particle entanglement along the b±θ subtraction sequence
    Entanglement(EntanglementArgs),
}

#[derive(Debug, Clone, Args)]
pub struct IdealArgs {
    /// Number of mode pairs (2n modes)
    #[arg(long)]
    pub n: Option<usize>,
    /// Run every n from 1 up to this value
    #[arg(long, conflicts_with = "n")]
    pub n_max: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum GateCommand {
    /// Red sideband rsb(θ, π/2) on one collective mode
    Rsb {
        #[arg(long, default_value_t = 2)]
        mode: usize,
        #[arg(long, default_value_t = PI)]
        theta_max: f64,
        #[arg(long, default_value_t = 21)]
        points: usize,
        /// Scale of both noise rates relative to the reference values
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Beam splitters between mode pairs
    Bs {
        /// Pairs as j-k, comma separated
        #[arg(long, value_delimiter = ',', default_value = "2-4,1-2,3-4,1-3", value_parser = parse_pair)]
        pairs: Vec<(usize, usize)>,
        #[arg(long, default_value_t = PI)]
        theta_max: f64,
        #[arg(long, default_value_t = 21)]
        points: usize,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Adiabatic arithmetic subtraction
    Subtract {
        #[arg(long, default_value_t = 4)]
        mode: usize,
        /// Largest initial occupation; sets the chirp amplitude
        #[arg(long, default_value_t = 4)]
        nmax: usize,
        #[arg(long, default_value_t = 0.005)]
        tau_min: f64,
        #[arg(long, default_value_t = 1.0)]
        tau_max: f64,
        /// Log-spaced τ points
        #[arg(long, default_value_t = 25)]
        points: usize,
        /// Samples of ⟨n⟩ along the pulse at the best τ
        #[arg(long, default_value_t = 41)]
        samples: usize,
        #[arg(long)]
        noise: Option<f64>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct ProtocolArgs {
    /// with-ia | without-ia
    #[arg(long, value_parser = kebab::<Scenario>)]
    pub scenario: Option<Scenario>,
    /// Scale of both noise rates
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub xi_gamma: Option<f64>,
    #[arg(long)]
    pub xi_kappa: Option<f64>,
    /// Subtraction durations in ms (both or neither; optimized when absent)
    #[arg(long, requires = "tau4")]
    pub tau3: Option<f64>,
    #[arg(long, requires = "tau3")]
    pub tau4: Option<f64>,
    /// Skip the final rsb correction
    #[arg(long)]
    pub no_correction: bool,
}

#[derive(Debug, Clone, Args)]
pub struct NoisemapArgs {
    #[arg(long, value_parser = kebab::<Scenario>)]
    pub scenario: Option<Scenario>,
    /// Points per axis on [0, 2]
    #[arg(long, default_value_t = 3)]
    pub grid: usize,
    /// both | gamma-only | kappa-only | diagonal
    #[arg(long, default_value = "both", value_parser = kebab::<Coupling>)]
    pub coupling: Coupling,
    #[arg(long, requires = "tau4")]
    pub tau3: Option<f64>,
    #[arg(long, requires = "tau3")]
    pub tau4: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct EntanglementArgs {
    /// θ points on [0, π/2]
    #[arg(long, default_value_t = 41)]
    pub points: usize,
}

fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(Value::String(s.to_string())).map_err(|_| format!("unknown value '{s}'"))
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (j, k) = s
        .split_once('-')
        .ok_or_else(|| format!("pair '{s}' must look like j-k"))?;
    let j = j.trim().parse().map_err(|_| format!("bad mode in '{s}'"))?;
    let k = k.trim().parse().map_err(|_| format!("bad mode in '{s}'"))?;
    Ok((j, k))
}

/// Everything a run depends on. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub profile: String,
    pub out: PathBuf,
    pub workers: Option<usize>,
    pub scenario: Scenario,
    pub gates: GateModel,
    pub sideband: Sideband,
    pub rsb_correction: bool,
    /// Noise scales relative to the reference rates.
    pub xi_gamma: f64,
    pub xi_kappa: f64,
    /// τ3, τ4 in ms; optimized at zero noise when absent.
    pub subtraction_times: Option<[f64; 2]>,
    pub experiment: ExperimentSettings,
    pub noise: NoiseSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            profile: PROFILE.into(),
            out: PathBuf::from("results"),
            workers: None,
            scenario: Scenario::WithIa,
            gates: GateModel::Realistic,
            sideband: Sideband::Red,
            rsb_correction: true,
            xi_gamma: 1.0,
            xi_kappa: 1.0,
            subtraction_times: None,
            experiment: ExperimentSettings::default(),
            noise: NoiseSpec::reference(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, Error> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.profile != PROFILE {
            return Err(Error::Config(format!(
                "unknown profile '{}' (available: {PROFILE})",
                self.profile
            )));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        if !(self.xi_gamma >= 0.0 && self.xi_kappa >= 0.0) || !self.xi_gamma.is_finite() || !self.xi_kappa.is_finite() {
            return Err(Error::Config("noise scales must be finite and nonnegative".into()));
        }
        if let Some(t) = self.subtraction_times {
            if !t.iter().all(|x| *x > 0.0 && x.is_finite()) {
                return Err(Error::Config("subtraction times must be positive".into()));
            }
        }
        self.experiment.validate()?;
        self.noise.validate(MODES)
    }

    fn apply(&mut self, g: &GlobalArgs) {
        if let Some(p) = &g.profile {
            self.profile = p.clone();
        }
        if let Some(out) = &g.out {
            self.out = out.clone();
        }
        if let Some(c) = g.cutoff {
            self.experiment.cutoff = c;
        }
        if let Some(w) = g.workers {
            self.workers = Some(w);
        }
        if let Some(r) = g.rtol {
            self.experiment.integrator.rtol = r;
        }
        if let Some(m) = g.gates {
            self.gates = m;
        }
        if let Some(s) = g.sideband {
            self.sideband = s;
        }
        if g.as_printed_dephasing {
            self.noise.dephasing = DephasingForm::AsPrinted;
        }
        if g.light_shift_compensation {
            self.experiment.pulse.light_shift_compensation = true;
        }
    }

    fn set_noise(&mut self, both: Option<f64>, gamma: Option<f64>, kappa: Option<f64>) {
        if let Some(x) = both {
            self.xi_gamma = x;
            self.xi_kappa = x;
        }
        if let Some(x) = gamma {
            self.xi_gamma = x;
        }
        if let Some(x) = kappa {
            self.xi_kappa = x;
        }
    }

    fn scaled_noise(&self) -> NoiseSpec {
        self.noise.scaled(self.xi_gamma, self.xi_kappa)
    }

    fn protocol_spec(&self) -> ProtocolSpec {
        ProtocolSpec {
            scenario: self.scenario,
            gate_model: self.gates,
            sideband: self.sideband,
            rsb_correction: self.rsb_correction,
            subtraction_times: self.subtraction_times,
            isolated: true,
        }
    }
}

/// Builds the configuration a parsed command line asks for.
pub fn resolve(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(&cli.global);
    let taus = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(x, y)| [x, y]);
    match &cli.command {
        Command::Gates { which } => {
            let noise = match which {
                GateCommand::Rsb { noise, .. }
                | GateCommand::Bs { noise, .. }
                | GateCommand::Subtract { noise, .. } => *noise,
            };
            cfg.set_noise(noise, None, None);
        }
        Command::Protocol(a) => {
            cfg.set_noise(a.noise, a.xi_gamma, a.xi_kappa);
            if let Some(s) = a.scenario {
                cfg.scenario = s;
            }
            if let Some(t) = taus(a.tau3, a.tau4) {
                cfg.subtraction_times = Some(t);
            }
            if a.no_correction {
                cfg.rsb_correction = false;
            }
        }
        Command::Noisemap(a) => {
            if let Some(s) = a.scenario {
                cfg.scenario = s;
            }
            if let Some(t) = taus(a.tau3, a.tau4) {
                cfg.subtraction_times = Some(t);
            }
        }
        Command::Ideal(_) | Command::Entanglement(_) => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// `x` with 12 significant digits, without trailing zeros.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Tab-separated table with a `#` metadata header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            meta: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn meta(mut self, key: &str, value: impl Into<String>) -> Self {
        self.meta.push((key.into(), value.into()));
        self
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn from_grid(grid: &SweepGrid) -> Self {
        let mut cols: Vec<&str> = grid.columns.iter().map(|s| s.as_str()).collect();
        cols.push("failed");
        let mut t = Table::new(&grid.name, &cols);
        for row in &grid.rows {
            let mut cells: Vec<String> = row.values.iter().map(|v| format_number(*v)).collect();
            cells.push(row.failed.clone().unwrap_or_default().replace(['\t', '\n'], " "));
            t.push(cells);
        }
        t
    }

    pub fn render(&self, command: &str, cfg: &RunConfig) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# ionsculpt {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "# command: {command}");
        let _ = writeln!(s, "# units: time ms, angular frequency and rates rad/ms, angles rad");
        for (k, v) in &self.meta {
            let _ = writeln!(s, "# {k}: {v}");
        }
        let _ = writeln!(s, "# config: {}", serde_json::to_string(cfg).unwrap_or_default());
        let _ = writeln!(s, "{}", self.columns.join("\t"));
        for row in &self.rows {
            let _ = writeln!(s, "{}", row.join("\t"));
        }
        s
    }
}

/// Files and a one-line summary produced by a command.
#[derive(Debug, Clone)]
pub struct Report {
    pub command: String,
    pub tables: Vec<Table>,
    pub record: Value,
    pub summary: Vec<String>,
}

impl Report {
    pub fn write(&self, cfg: &RunConfig) -> Result<Vec<PathBuf>, Error> {
        std::fs::create_dir_all(&cfg.out)?;
        let mut written = Vec::new();
        for t in &self.tables {
            let path = cfg.out.join(format!("{}.tsv", t.name));
            std::fs::write(&path, t.render(&self.command, cfg))?;
            written.push(path);
        }
        let record = json!({
            "ionsculpt": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "config": cfg,
            "result": self.record,
        });
        let path = cfg.out.join(format!(
            "{}.json",
            self.tables.first().map_or("result", |t| t.name.as_str())
        ));
        let mut text = serde_json::to_string_pretty(&record).map_err(|e| Error::Config(e.to_string()))?;
        text.push('\n');
        std::fs::write(&path, text)?;
        written.push(path);
        Ok(written)
    }
}

fn num(x: f64) -> String {
    format_number(x)
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, format_number)
}

pub fn cmd_ideal(args: &IdealArgs) -> Result<Report, Error> {
    let ns: Vec<usize> = match (args.n, args.n_max) {
        (Some(n), None) => vec![n],
        (None, Some(m)) => (1..=m).collect(),
        (None, None) => vec![2],
        (Some(_), Some(_)) => unreachable!("clap rejects --n with --n-max"),
    };
    if ns.is_empty() || ns.iter().any(|&n| n == 0 || n > GENERAL_MAX_N) {
        return Err(Error::Config(format!("n must lie in 1..={GENERAL_MAX_N}")));
    }
    let mut t = Table::new(
        "ideal",
        &[
            "n",
            "overlap",
            "fidelity",
            "success_uncorrected",
            "success_corrected",
            "overlap_closed_form",
            "success_uncorrected_closed_form",
            "success_corrected_closed_form",
        ],
    );
    let mut records = Vec::new();
    let mut summary = Vec::new();
    for &n in &ns {
        let raw = general_sculpt(n, SculptVariant::Arithmetic, false)?;
        let corrected = general_sculpt(n, SculptVariant::Arithmetic, true)?;
        t.push(vec![
            n.to_string(),
            num(raw.overlap_magnitude),
            num(raw.fidelity),
            num(raw.success_prob),
            num(corrected.success_prob),
            num(closed_form_overlap(n)),
            num(closed_form_success(n, false)),
            num(closed_form_success(n, true)),
        ]);
        records.push(json!({
            "n": n,
            "overlap": raw.overlap_magnitude,
            "fidelity": raw.fidelity,
            "fidelity_corrected": corrected.fidelity,
            "success_uncorrected": raw.success_prob,
            "success_corrected": corrected.success_prob,
        }));
        summary.push(format!(
            "n = {n}: overlap {}, fidelity {}, success {} uncorrected / {} corrected",
            num(raw.overlap_magnitude),
            num(raw.fidelity),
            num(raw.success_prob),
            num(corrected.success_prob)
        ));
    }
    Ok(Report {
        command: "ideal".into(),
        tables: vec![t],
        record: Value::Array(records),
        summary,
    })
}

pub fn cmd_gates(which: &GateCommand, cfg: &RunConfig) -> Result<Report, Error> {
    let noise = cfg.scaled_noise();
    let settings = &cfg.experiment;
    match *which {
        GateCommand::Rsb {
            mode,
            theta_max,
            points,
            ..
        } => {
            let thetas = grid_points(0.0, theta_max, points)?;
            let grid = characterize_rsb(settings, &noise, mode, &thetas)?;
            let worst = grid
                .column("infidelity")
                .unwrap_or_default()
                .into_iter()
                .fold(0.0, f64::max);
            let t = Table::from_grid(&grid).meta("mode", mode.to_string());
            Ok(Report {
                command: "gates rsb".into(),
                summary: vec![format!("rsb on mode {mode}: largest infidelity {}", num(worst))],
                record: serde_json::to_value(&grid).unwrap_or(Value::Null),
                tables: vec![t],
            })
        }
        GateCommand::Bs {
            ref pairs,
            theta_max,
            points,
            ..
        } => {
            let thetas = grid_points(0.0, theta_max, points)?;
            let grid = characterize_bs(settings, &noise, pairs, &thetas)?;
            let mut summary = Vec::new();
            let (js, ks) = (
                grid.column("j").unwrap_or_default(),
                grid.column("k").unwrap_or_default(),
            );
            let pops = grid.column("pop_k").unwrap_or_default();
            let th = grid.column("theta").unwrap_or_default();
            for i in 0..grid.rows.len() {
                if (th[i] - PI).abs() < 1e-12 {
                    summary.push(format!("B{}{} π transfer population {}", js[i], ks[i], num(pops[i])));
                }
            }
            Ok(Report {
                command: "gates bs".into(),
                summary,
                record: serde_json::to_value(&grid).unwrap_or(Value::Null),
                tables: vec![Table::from_grid(&grid)],
            })
        }
        GateCommand::Subtract {
            mode,
            nmax,
            tau_min,
            tau_max,
            points,
            samples,
            ..
        } => {
            if !(tau_min > 0.0 && tau_max > tau_min) {
                return Err(Error::Config("need 0 < tau-min < tau-max".into()));
            }
            if nmax == 0 || nmax > settings.cutoff {
                return Err(Error::Config(format!("nmax must lie in 1..={}", settings.cutoff)));
            }
            let taus: Vec<f64> = log_points(tau_min, tau_max, points)?;
            let ns: Vec<usize> = (1..=nmax).collect();
            let grid = characterize_subtraction(settings, &noise, mode, cfg.sideband, &taus, &ns, nmax)?;
            let mut tables = vec![Table::from_grid(&grid)
                .meta("mode", mode.to_string())
                .meta("sideband", cfg.sideband.label())];
            let mut summary = Vec::new();
            let mut best_taus = Vec::new();
            let col = |name: &str| grid.column(name).unwrap_or_default();
            let (gn, gtau, ginf) = (col("n"), col("tau_ms"), col("infidelity"));
            for &n in &ns {
                let best = (0..grid.rows.len())
                    .filter(|&i| gn[i] == n as f64 && ginf[i].is_finite())
                    .min_by(|&a, &b| ginf[a].total_cmp(&ginf[b]));
                if let Some(i) = best {
                    summary.push(format!(
                        "|{n}>: best tau {} ms, infidelity {}",
                        num(gtau[i]),
                        num(ginf[i])
                    ));
                    best_taus.push((n, gtau[i]));
                }
            }
            let mut traj_table = Table::new("subtract_trajectory", &["n", "tau_ms", "t_over_tau", "mean_n"])
                .meta("mode", mode.to_string());
            let mut traj_records = Vec::new();
            for &(n, tau) in &best_taus {
                let traj = subtraction_trajectory(settings, &noise, mode, cfg.sideband, tau, n, nmax, samples)?;
                let (x, y) = (
                    traj.column("t_over_tau").unwrap_or_default(),
                    traj.column("mean_n").unwrap_or_default(),
                );
                for (a, b) in x.iter().zip(&y) {
                    traj_table.push(vec![n.to_string(), num(tau), num(*a), num(*b)]);
                }
                traj_records.push(json!({"n": n, "tau_ms": tau, "grid": traj}));
            }
            tables.push(traj_table);
            Ok(Report {
                command: "gates subtract".into(),
                summary,
                record: json!({"sweep": grid, "trajectories": traj_records}),
                tables,
            })
        }
    }
}

fn grid_points(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>, Error> {
    if points == 0 || !(hi >= lo) || !hi.is_finite() {
        return Err(Error::Config(
            "grid needs at least one point and an increasing range".into(),
        ));
    }
    Ok(linspace(lo, hi, points))
}

fn log_points(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>, Error> {
    Ok(grid_points(lo.ln(), hi.ln(), points)?
        .into_iter()
        .map(f64::exp)
        .collect())
}

fn ledger_table(ledger: &ProtocolLedger) -> Table {
    let mut t = Table::new(
        "protocol",
        &[
            "gate",
            "duration_ms",
            "accumulated_time_ms",
            "isolated_fidelity",
            "accumulated_fidelity",
            "branch_probability",
            "leakage",
            "drift",
        ],
    )
    .meta("scenario", ledger.scenario.label())
    .meta("gates", ledger.gate_model.label())
    .meta("sideband", ledger.sideband.label())
    .meta(
        "subtraction_times_ms",
        format!(
            "{} {}",
            num(ledger.subtraction_times[0]),
            num(ledger.subtraction_times[1])
        ),
    )
    .meta("final_fidelity", num(ledger.final_fidelity))
    .meta("success_probability", num(ledger.success_probability))
    .meta(
        "rho",
        format!(
            "rho11 {} rho22 {} rho12_re {} rho12_im {}",
            num(ledger.rho.rho11),
            num(ledger.rho.rho22),
            num(ledger.rho.rho12_re),
            num(ledger.rho.rho12_im)
        ),
    );
    if let Some(f) = &ledger.failed {
        t = t.meta("failed", f.clone());
    }
    for r in &ledger.rows {
        t.push(vec![
            r.name.clone(),
            num(r.duration),
            num(r.accumulated_time),
            opt(r.isolated_fidelity),
            num(r.accumulated_fidelity),
            num(r.branch_probability),
            num(r.leakage),
            num(r.drift),
        ]);
    }
    t
}

pub fn cmd_protocol(cfg: &RunConfig) -> Result<Report, Error> {
    let ledger = run_protocol(&cfg.protocol_spec(), &cfg.experiment, &cfg.scaled_noise())?;
    if let Some(why) = &ledger.failed {
        return Err(Error::Config(format!("protocol failed: {why}")));
    }
    let summary = vec![format!(
        "{} {} gates, {} subtraction: fidelity {}, success {}, total time {} ms",
        ledger.scenario.label(),
        ledger.gate_model.label(),
        ledger.sideband.label(),
        num(ledger.final_fidelity),
        num(ledger.success_probability),
        num(ledger.total_time())
    )];
    Ok(Report {
        command: "protocol".into(),
        tables: vec![ledger_table(&ledger)],
        record: serde_json::to_value(&ledger).unwrap_or(Value::Null),
        summary,
    })
}

fn map_table(map: &NoiseMap) -> Table {
    let mut t = Table::new(
        "noisemap",
        &[
            "xi_gamma",
            "xi_kappa",
            "coupling_mode",
            "fidelity",
            "rho11",
            "rho22",
            "rho12_re",
            "rho12_im",
            "success_probability",
            "failed",
        ],
    )
    .meta("scenario", map.scenario.label())
    .meta("sideband", map.sideband.label())
    .meta(
        "subtraction_times_ms",
        format!("{} {}", num(map.subtraction_times[0]), num(map.subtraction_times[1])),
    );
    let coupling = serde_json::to_value(map.coupling)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default();
    for p in &map.points {
        t.push(vec![
            num(p.xi_gamma),
            num(p.xi_kappa),
            coupling.clone(),
            num(p.fidelity),
            num(p.rho.rho11),
            num(p.rho.rho22),
            num(p.rho.rho12_re),
            num(p.rho.rho12_im),
            num(p.success_probability),
            p.failed.clone().unwrap_or_default().replace(['\t', '\n'], " "),
        ]);
    }
    t
}

pub fn cmd_noisemap(args: &NoisemapArgs, cfg: &RunConfig) -> Result<Report, Error> {
    if args.grid == 0 {
        return Err(Error::Config("grid needs at least one point".into()));
    }
    let axis = linspace(0.0, 2.0, args.grid);
    let (tx, rx) = mpsc::channel::<Progress>();
    let printer = std::thread::spawn(move || {
        for p in rx {
            eprintln!("[{}] {}/{}", p.task, p.completed, p.total);
        }
    });
    let spec = ProtocolSpec {
        isolated: false,
        ..cfg.protocol_spec()
    };
    let map = noise_map(
        &spec,
        &cfg.experiment,
        &cfg.noise,
        &axis,
        &axis,
        args.coupling,
        Some(&tx),
    );
    drop(tx);
    let _ = printer.join();
    let map = map?;
    if !map.points.is_empty() && map.points.iter().all(|p| p.failed.is_some()) {
        return Err(Error::ImpossibleBranch);
    }
    let mut summary: Vec<String> = map
        .points
        .iter()
        .map(|p| {
            format!(
                "xi_gamma {} xi_kappa {}: fidelity {}",
                num(p.xi_gamma),
                num(p.xi_kappa),
                num(p.fidelity)
            )
        })
        .collect();
    summary.push(format!(
        "largest monotonicity violation {}",
        num(map.monotonicity_violation())
    ));
    Ok(Report {
        command: "noisemap".into(),
        tables: vec![map_table(&map)],
        record: serde_json::to_value(&map).unwrap_or(Value::Null),
        summary,
    })
}

pub fn cmd_entanglement(args: &EntanglementArgs) -> Result<Report, Error> {
    let thetas = grid_points(0.0, PI / 2.0, args.points)?;
    let rows = entropy_sweep(&thetas)?;
    let sym = prepare_sym(&ModeSpace::new(4, 2, false)?)?;
    let (pe, me) = (particle_entanglement(&sym)?, mode_entanglement(&sym)?);
    let mut t = Table::new("entanglement", &["theta", "s_me", "s_pe", "sum", "branch_probability"])
        .meta("sym4", format!("s_pe {} s_me {}", num(pe), num(me)));
    for r in &rows {
        t.push(vec![
            num(r.theta),
            num(r.s_me),
            num(r.s_pe),
            num(r.sum),
            num(r.branch_probability),
        ]);
    }
    let sums: Vec<f64> = rows.iter().map(|r| r.sum).collect();
    let range = sums.iter().cloned().fold(f64::MIN, f64::max) - sums.iter().cloned().fold(f64::MAX, f64::min);
    Ok(Report {
        command: "entanglement".into(),
        tables: vec![t],
        record: json!({"sym4": {"s_pe": pe, "s_me": me}, "sweep": rows}),
        summary: vec![
            format!(
                "|sym4>: S_PE {} (log 6 = {}), S_ME {}",
                num(pe),
                num(6f64.ln()),
                num(me)
            ),
            format!("range of S_PE + S_ME along the sweep: {}", num(range)),
        ],
    })
}

/// Runs a resolved command; the report is not yet written.
pub fn execute(command: &Command, cfg: &RunConfig) -> Result<Report, Error> {
    match command {
        Command::Ideal(a) => cmd_ideal(a),
        Command::Gates { which } => cmd_gates(which, cfg),
        Command::Protocol(_) => {
            if cfg.gates == GateModel::Realistic && cfg.subtraction_times.is_none() {
                let t = optimize_subtraction_times(cfg.scenario, cfg.sideband, &cfg.experiment)?;
                eprintln!(
                    "optimized subtraction times: {} ms, {} ms",
                    num(t.tau[0]),
                    num(t.tau[1])
                );
                let cfg = RunConfig {
                    subtraction_times: Some(t.tau),
                    ..cfg.clone()
                };
                return cmd_protocol(&cfg);
            }
            cmd_protocol(cfg)
        }
        Command::Noisemap(a) => cmd_noisemap(a, cfg),
        Command::Entanglement(a) => cmd_entanglement(a),
    }
}

/// Exit status for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::StepUnderflow { .. } | Error::PositivityViolation { .. } | Error::ImpossibleBranch => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

/// Parses `args`, runs the command and writes its files; returns the exit status.
pub fn run_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    if let Some(n) = cfg.workers {
        // the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let report = match execute(&cli.command, &cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    match report.write(&cfg) {
        Ok(paths) => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            for line in &report.summary {
                let _ = writeln!(stdout, "{line}");
            }
            for p in paths {
                let _ = writeln!(stdout, "wrote {}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

pub fn main() -> i32 {
    run_with_args(std::env::args_os())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(0.125), "0.125");
        assert_eq!(format_number(3.0 / 10f64.sqrt()), "0.948683298051");
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(-2.5e-9), "-2.5e-9");
        assert_eq!(format_number(123456789012345.0), "1.23456789012e14");
        assert_eq!(format_number(f64::NAN), "nan");
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        assert!(RunConfig::from_toml("[experiment]\ncutof = 5").is_err());
        let c = RunConfig::from_toml("xi_gamma = 2.0\n[experiment.integrator]\nrtol = 1e-6").unwrap();
        assert_eq!(c.xi_gamma, 2.0);
        assert_eq!(c.experiment.integrator.rtol, 1e-6);
        assert_eq!(
            c.experiment.integrator.atol,
            RunConfig::default().experiment.integrator.atol
        );
    }

    #[test]
    fn default_config_round_trips() {
        let c = RunConfig::default();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn flags_override_file() {
        let cli = Cli::try_parse_from([
            "ionsculpt",
            "--cutoff",
            "6",
            "--sideband",
            "blue",
            "protocol",
            "--noise",
            "0",
        ])
        .unwrap();
        let cfg = resolve(&cli).unwrap();
        assert_eq!(cfg.experiment.cutoff, 6);
        assert_eq!(cfg.sideband, Sideband::Blue);
        assert_eq!((cfg.xi_gamma, cfg.xi_kappa), (0.0, 0.0));
    }

    #[test]
    fn unknown_profile_is_rejected() {
        let cli = Cli::try_parse_from(["ionsculpt", "--profile", "other", "ideal"]).unwrap();
        assert!(resolve(&cli).is_err());
    }
}
