//! Beam-splitter pulses between mode pairs: one phonon starting in mode j,
//! noiseless and under the reference heating and dephasing rates.
//!
//! `cargo run --release --example beam_splitter`

use std::f64::consts::PI;

use ionsculpt::dynamics::NoiseSpec;
use ionsculpt::experiments::{characterize_bs, ExperimentSettings, MODES};

fn main() -> ionsculpt::Result<()> {
    let settings = ExperimentSettings::default();
    let pairs = [(1, 2), (2, 4), (3, 4)];
    for (label, noise) in [
        ("noiseless", NoiseSpec::noiseless(MODES)),
        ("reference noise", NoiseSpec::reference()),
    ] {
        let grid = characterize_bs(&settings, &noise, &pairs, &[PI / 2.0, PI])?;
        println!("{label}");
        for row in &grid.rows {
            let v = &row.values;
            println!(
                "    B{}{} θ = {:.4}: {:.4} ms, infidelity {:.3e}, P(j) {:.4}, P(k) {:.4}",
                v[0] as usize, v[1] as usize, v[2], v[3], v[4], v[5], v[6]
            );
        }
    }
    Ok(())
}
