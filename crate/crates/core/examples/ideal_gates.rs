//! Exact gate algebra on a small Fock space: carrier, sidebands, beam
//! splitter and heralded subtraction.

use std::f64::consts::PI;

use ionsculpt::gates::{arithmetic_subtract, beam_splitter, carrier, post_select_spin, rsb};
use ionsculpt::{HybridState, ModeSpace, Spin};

fn show(label: &str, psi: &HybridState) {
    println!("{label}:");
    for (occ, spin, c) in psi.terms(1e-12) {
        let s = if spin == Some(Spin::Excited) { 'e' } else { 'g' };
        println!("    {:+.6}{:+.6}i  |{s}> {occ:?}", c.re, c.im);
    }
}

fn main() -> ionsculpt::Result<()> {
    let space = ModeSpace::new(2, 3, true)?;
    let g1 = HybridState::basis(&space, &[1, 0], Some(Spin::Ground))?;

    show("carrier(π/2, 0) |g,1,0>", &carrier(&space, PI / 2.0, 0.0)?.apply(&g1)?);

    let out = rsb(&space, 1, 2.0 * PI / 3.0, PI / 2.0)?.apply(&g1)?;
    show("rsb(2π/3, π/2) |g,1,0>", &out);
    let (kept, p) = post_select_spin(&out, Spin::Ground)?;
    show(&format!("ground branch (p = {p:.4})"), &kept);

    let two = HybridState::basis(&space, &[1, 1], Some(Spin::Ground))?;
    show(
        "B12(π/2, −π/2) |g,1,1>",
        &beam_splitter(&space, 1, 2, PI / 2.0, -PI / 2.0)?.apply(&two)?,
    );

    let three = HybridState::basis(&space, &[3, 0], Some(Spin::Ground))?;
    let (sub, p) = arithmetic_subtract(&three, 1)?;
    show(&format!("arithmetic subtraction from |3,0> (p = {p:.4})"), &sub);
    Ok(())
}
