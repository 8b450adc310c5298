//! Adiabatic phonon subtraction: infidelity against the sweep duration and
//! the mean phonon number along one sweep.
//!
//! `cargo run --release --example subtraction`

use ionsculpt::dynamics::NoiseSpec;
use ionsculpt::experiments::{characterize_subtraction, subtraction_trajectory, ExperimentSettings};
use ionsculpt::laser::Sideband;

fn main() -> ionsculpt::Result<()> {
    let settings = ExperimentSettings::default();
    let noise = NoiseSpec::reference();
    let taus = [0.02, 0.1, 0.3, 0.7, 1.0];
    let grid = characterize_subtraction(&settings, &noise, 4, Sideband::Red, &taus, &[1, 2], 2)?;
    println!("{}", grid.columns.join("\t"));
    for row in &grid.rows {
        let cells: Vec<String> = row.values.iter().map(|v| format!("{v:.5}")).collect();
        println!("{}", cells.join("\t"));
    }

    let traj = subtraction_trajectory(&settings, &noise, 4, Sideband::Red, 0.7, 1, 2, 11)?;
    println!("\n{}", traj.columns.join("\t"));
    for row in &traj.rows {
        let cells: Vec<String> = row.values.iter().map(|v| format!("{v:.5}")).collect();
        println!("{}", cells.join("\t"));
    }
    Ok(())
}
