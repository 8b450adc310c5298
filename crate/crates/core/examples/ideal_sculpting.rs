//! Ideal sculpting: the four-mode scenarios and the general 2n-mode schemes.

use ionsculpt::sculpting::{
    closed_form_overlap, closed_form_success, general_sculpt, scenario_with_ia, scenario_without_ia, sculpt_j,
    SculptVariant,
};

fn main() -> ionsculpt::Result<()> {
    for n in 1..=3 {
        println!("J(n={n}) fidelity {:.12}", sculpt_j(n)?.fidelity);
    }

    for (name, corrected) in [("uncorrected", false), ("corrected", true)] {
        let r = scenario_with_ia(5, corrected)?;
        println!(
            "with-ia {name}: |overlap| {:.12}, fidelity {:.12}, success {:.12}",
            r.overlap_magnitude, r.fidelity, r.success_prob
        );
        for step in &r.step_log {
            println!("    {:<8} p = {:.6}", step.name, step.probability);
        }
    }
    let r = scenario_without_ia(5, true)?;
    println!(
        "without-ia corrected: fidelity {:.12}, success {:.12}",
        r.fidelity, r.success_prob
    );

    println!("n  overlap        closed form    success        closed form");
    for n in 1..=4 {
        let r = general_sculpt(n, SculptVariant::Arithmetic, false)?;
        println!(
            "{n}  {:.12} {:.12} {:.12} {:.12}",
            r.overlap_magnitude,
            closed_form_overlap(n),
            r.success_prob,
            closed_form_success(n, false)
        );
    }
    Ok(())
}
