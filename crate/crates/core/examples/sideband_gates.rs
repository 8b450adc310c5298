//! Red-sideband pulses driven through the full laser Hamiltonian, with and
//! without the light-shift compensation option.
//!
//! `cargo run --release --example sideband_gates`

use std::f64::consts::PI;

use ionsculpt::dynamics::NoiseSpec;
use ionsculpt::entanglement::linspace;
use ionsculpt::experiments::{characterize_rsb, ExperimentSettings};
use ionsculpt::laser::PulseParams;

fn main() -> ionsculpt::Result<()> {
    let faithful = ExperimentSettings::default();
    let compensated = ExperimentSettings {
        pulse: PulseParams {
            light_shift_compensation: true,
            ..faithful.pulse
        },
        ..faithful.clone()
    };
    let thetas = linspace(0.0, PI, 5);
    let noise = NoiseSpec::reference();
    for (label, settings) in [("square pulse", &faithful), ("light-shift compensated", &compensated)] {
        let grid = characterize_rsb(settings, &noise, 2, &thetas)?;
        println!("{label}");
        let cols = ["theta", "duration_ms", "infidelity", "pop_e0", "pop_g1"];
        let data: Vec<Vec<f64>> = cols.iter().map(|c| grid.column(c).unwrap_or_default()).collect();
        println!("    {}", cols.join("  "));
        for i in 0..thetas.len() {
            let row: Vec<String> = data.iter().map(|c| format!("{:.5}", c[i])).collect();
            println!("    {}", row.join("  "));
        }
    }
    Ok(())
}
