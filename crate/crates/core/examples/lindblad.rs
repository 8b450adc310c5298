//! A realistic beam-splitter pulse under heating and dephasing, integrated
//! with the master equation and compared with the closed-system evolution.
//! The spin starts in |−> = (|g> − |e>)/√2, which the cross-mode drive leaves
//! alone.

use std::f64::consts::PI;

use ionsculpt::dynamics::{evolve_lindblad, evolve_unitary, Dissipator, IntegratorSettings, NoiseSpec};
use ionsculpt::experiments::ExperimentSettings;
use ionsculpt::laser::{gate_config, GateKind, Hamiltonian};
use ionsculpt::{DensityOperator, HybridState, Spin, C64};

fn main() -> ionsculpt::Result<()> {
    let settings = ExperimentSettings::default();
    let space = settings.space(2)?;
    let cfg = gate_config(
        GateKind::BeamSplitter(1, 2),
        &settings.trap,
        PI,
        -PI / 2.0,
        &settings.pulse,
    )?;
    let h = Hamiltonian::new(&space, &settings.trap, &cfg, settings.hamiltonian)?;
    let h2 = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let minus = |occ: &[usize]| {
        HybridState::from_terms(
            &space,
            &[(occ, Some(Spin::Ground), h2), (occ, Some(Spin::Excited), -h2)],
        )
    };
    let psi = minus(&[1, 0, 0, 0])?;
    let target = minus(&[0, 1, 0, 0])?;
    let integrator = IntegratorSettings::default();

    let (pure, stats) = evolve_unitary(&h, &psi, &integrator)?;
    println!("pulse length {:.4} ms, {} accepted steps", cfg.duration, stats.accepted);
    println!("closed system: P(0,1,0,0) = {:.6}", pure.inner(&target)?.norm_sqr());

    for (xg, xk) in [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (5.0, 5.0)] {
        let noise = NoiseSpec::reference().scaled(xg, xk);
        let diss = Dissipator::new(&space, &noise)?;
        let (rho, _) = evolve_lindblad(&h, &diss, &DensityOperator::from_pure(&psi), &integrator)?;
        let p: f64 = [Spin::Ground, Spin::Excited]
            .iter()
            .map(|&s| space.basis_index(&[0, 1, 0, 0], Some(s)).map(|i| rho.get(i, i).re))
            .sum::<ionsculpt::Result<f64>>()?;
        println!(
            "ξγ = {xg}, ξκ = {xk}: P(0,1,0,0) = {p:.6}, trace {:.10}",
            rho.trace().re
        );
    }
    Ok(())
}
