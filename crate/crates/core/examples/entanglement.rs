//! Mode and particle entanglement of |sym4> and of the b±θ family.

use std::f64::consts::PI;

use ionsculpt::entanglement::{entropy_sweep, linspace, mode_entanglement, particle_entanglement};
use ionsculpt::sculpting::prepare_sym;
use ionsculpt::ModeSpace;

fn main() -> ionsculpt::Result<()> {
    let sym = prepare_sym(&ModeSpace::new(4, 2, false)?)?;
    println!("S_ME(sym4) = {:.12}", mode_entanglement(&sym)?);
    println!(
        "S_PE(sym4) = {:.12} (ln 6 = {:.12})",
        particle_entanglement(&sym)?,
        6f64.ln()
    );

    println!("theta     S_ME      S_PE      sum       branch p");
    for row in entropy_sweep(&linspace(0.0, PI / 2.0, 11))? {
        println!(
            "{:.4}  {:.6}  {:.6}  {:.6}  {:.4}",
            row.theta, row.s_me, row.s_pe, row.sum, row.branch_probability
        );
    }
    Ok(())
}
