//! The with-IA protocol run gate by gate, first with ideal gates and then
//! through the laser Hamiltonian at fixed subtraction durations.
//!
//! `cargo run --release --example protocol` (about 15 s)

use ionsculpt::dynamics::NoiseSpec;
use ionsculpt::experiments::{run_protocol, ExperimentSettings, GateModel, ProtocolLedger, ProtocolSpec, MODES};

fn print(ledger: &ProtocolLedger) {
    println!(
        "{} gates, τ3 = {:.4} ms, τ4 = {:.4} ms",
        ledger.gate_model.label(),
        ledger.subtraction_times[0],
        ledger.subtraction_times[1]
    );
    println!("    gate    dur/ms   t/ms     F iso    F acc    p");
    for r in &ledger.rows {
        println!(
            "    {:<7} {:.4}  {:.4}  {}  {:.4}  {:.4}",
            r.name,
            r.duration,
            r.accumulated_time,
            r.isolated_fidelity.map_or("  -   ".into(), |f| format!("{f:.4}")),
            r.accumulated_fidelity,
            r.branch_probability
        );
    }
    println!(
        "    final fidelity {:.4}, success {:.4}, ρ11 {:.4}, ρ22 {:.4}, |ρ12| {:.4}",
        ledger.final_fidelity,
        ledger.success_probability,
        ledger.rho.rho11,
        ledger.rho.rho22,
        ledger.rho.rho12().norm()
    );
}

fn main() -> ionsculpt::Result<()> {
    let settings = ExperimentSettings::default();
    let noise = NoiseSpec::noiseless(MODES);
    let ideal = ProtocolSpec {
        gate_model: GateModel::Ideal,
        ..Default::default()
    };
    print(&run_protocol(&ideal, &settings, &noise)?);

    // zero-noise optimum of the default settings; omit to optimize (minutes)
    let realistic = ProtocolSpec {
        subtraction_times: Some([0.6739, 0.3227]),
        ..Default::default()
    };
    print(&run_protocol(&realistic, &settings, &noise)?);
    Ok(())
}
