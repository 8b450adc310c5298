//! Final fidelity against the heating scale with dephasing off, with
//! progress reported from the worker pool.
//!
//! `cargo run --release --example noise_map` (several minutes per noisy point)

use std::sync::mpsc;

use ionsculpt::dynamics::NoiseSpec;
use ionsculpt::experiments::{noise_map, Coupling, ExperimentSettings, ProtocolSpec};

fn main() -> ionsculpt::Result<()> {
    let settings = ExperimentSettings::default();
    let spec = ProtocolSpec {
        subtraction_times: Some([0.6739, 0.3227]),
        isolated: false,
        ..Default::default()
    };
    let (tx, rx) = mpsc::channel();
    let watcher = std::thread::spawn(move || {
        for p in rx {
            let p: ionsculpt::experiments::Progress = p;
            eprintln!("{}: {}/{}", p.task, p.completed, p.total);
        }
    });
    let map = noise_map(
        &spec,
        &settings,
        &NoiseSpec::reference(),
        &[0.0, 1.0],
        &[0.0],
        Coupling::GammaOnly,
        Some(&tx),
    )?;
    drop(tx);
    let _ = watcher.join();
    println!("xi_gamma  xi_kappa  fidelity  success");
    for p in &map.points {
        println!(
            "{:.2}      {:.2}      {:.4}    {:.4}",
            p.xi_gamma, p.xi_kappa, p.fidelity, p.success_probability
        );
    }
    println!("monotonicity violation {:.1e}", map.monotonicity_violation());
    Ok(())
}
