//! Plain-text state snapshots.
//!
//! ```text
//! ionsculpt-state 1
//! ordering spin-major
//! modes 4
//! cutoff 4
//! spin true
//! max_total none
//! dim 1250
//! 1.00000000000000000e0 0.00000000000000000e0
//! ...
//! ```
//!
//! One `re im` pair per basis index in the documented basis order.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use num_complex::Complex64 as C64;

use super::space::ModeSpace;
use super::state::HybridState;
use crate::error::{Error, Result};

const MAGIC: &str = "ionsculpt-state";
const VERSION: u32 = 1;
const ORDERING: &str = "spin-major";

pub fn write_state<W: Write>(state: &HybridState, mut w: W) -> Result<()> {
    let s = state.space();
    writeln!(w, "{MAGIC} {VERSION}")?;
    writeln!(w, "ordering {ORDERING}")?;
    writeln!(w, "modes {}", s.num_modes())?;
    writeln!(w, "cutoff {}", s.cutoff())?;
    writeln!(w, "spin {}", s.has_spin())?;
    match s.max_total() {
        Some(cap) => writeln!(w, "max_total {cap}")?,
        None => writeln!(w, "max_total none")?,
    }
    writeln!(w, "dim {}", s.dim())?;
    for a in state.amplitudes() {
        writeln!(w, "{:.17e} {:.17e}", a.re, a.im)?;
    }
    Ok(())
}

fn header(lines: &mut impl Iterator<Item = std::io::Result<String>>, key: &str) -> Result<String> {
    let line = lines
        .next()
        .ok_or_else(|| Error::Snapshot(format!("missing `{key}` line")))??;
    let rest = line
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| Error::Snapshot(format!("expected `{key}`, found `{line}`")))?;
    Ok(rest.trim().to_string())
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Snapshot(format!("bad {what}: `{s}`")))
}

pub fn read_state<R: Read>(r: R) -> Result<HybridState> {
    let mut lines = BufReader::new(r).lines();
    let version: u32 = parse(&header(&mut lines, MAGIC)?, "version")?;
    if version != VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let ordering = header(&mut lines, "ordering")?;
    if ordering != ORDERING {
        return Err(Error::Snapshot(format!("unknown ordering `{ordering}`")));
    }
    let modes: usize = parse(&header(&mut lines, "modes")?, "modes")?;
    let cutoff: usize = parse(&header(&mut lines, "cutoff")?, "cutoff")?;
    let spin: bool = parse(&header(&mut lines, "spin")?, "spin")?;
    let cap = header(&mut lines, "max_total")?;
    let dim: usize = parse(&header(&mut lines, "dim")?, "dim")?;
    let space = if cap == "none" {
        ModeSpace::new(modes, cutoff, spin)?
    } else {
        ModeSpace::with_total_cap(modes, cutoff, spin, parse(&cap, "max_total")?)?
    };
    if space.dim() != dim {
        return Err(Error::Snapshot(format!(
            "declared dim {dim} but descriptor gives {}",
            space.dim()
        )));
    }
    let mut amps = Vec::with_capacity(dim);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(re), Some(im), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Snapshot(format!("bad amplitude line `{line}`")));
        };
        amps.push(C64::new(parse(re, "real part")?, parse(im, "imaginary part")?));
    }
    if amps.len() != dim {
        return Err(Error::Snapshot(format!(
            "expected {dim} amplitudes, found {}",
            amps.len()
        )));
    }
    HybridState::new(&space, amps)
}

pub fn save_state(state: &HybridState, path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_state(state, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_state(path: impl AsRef<Path>) -> Result<HybridState> {
    read_state(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let space = ModeSpace::with_total_cap(3, 2, true, 3).unwrap();
        let amps: Vec<C64> = (0..space.dim())
            .map(|i| C64::new((i as f64 * 0.37).sin() / 3.0, (i as f64).sqrt() * 1e-7))
            .collect();
        let s = HybridState::new(&space, amps).unwrap();
        let mut buf = Vec::new();
        write_state(&s, &mut buf).unwrap();
        let back = read_state(buf.as_slice()).unwrap();
        assert_eq!(back.space(), s.space());
        assert_eq!(back.amplitudes(), s.amplitudes());
    }

    #[test]
    fn rejects_wrong_version_and_truncated_body() {
        assert!(read_state("ionsculpt-state 9\n".as_bytes()).is_err());
        let text =
            "ionsculpt-state 1\nordering spin-major\nmodes 1\ncutoff 1\nspin false\nmax_total none\ndim 2\n1 0\n";
        assert!(matches!(read_state(text.as_bytes()), Err(Error::Snapshot(_))));
    }
}
