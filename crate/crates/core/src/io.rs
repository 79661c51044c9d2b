//! Binary dense-matrix and vacuum-state files.
//!
//! Matrix file: magic `BDFMAT01`, rows and cols as u64, then the entries in
//! row-major order as (re, im) f64 pairs. State file: magic `BDFSTAT1`, then
//! n (u64), L, Λ, μ (f64), provenance (u8: 0 linear, 1 scf, 2 manual), then a
//! matrix record. Everything is little-endian. Rows and columns are indexed
//! 4a + s with a the momentum index of the lattice (jx, jy, jz ascending) and
//! s the spinor component, upper two components first.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use faer::Mat;
use num_complex::Complex64;

use crate::error::{BdfError, Result};
use crate::lattice::{LatticeSpec, MomentumLattice};
use crate::states::{Provenance, VacuumState};

const MATRIX_MAGIC: &[u8; 8] = b"BDFMAT01";
const STATE_MAGIC: &[u8; 8] = b"BDFSTAT1";

fn put_u64<W: Write>(w: &mut W, x: u64) -> Result<()> {
    Ok(w.write_all(&x.to_le_bytes())?)
}

fn put_f64<W: Write>(w: &mut W, x: f64) -> Result<()> {
    Ok(w.write_all(&x.to_le_bytes())?)
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 8]) -> Result<()> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    if &b != magic {
        return Err(BdfError::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&b),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

pub fn write_matrix<W: Write>(w: &mut W, m: &Mat<Complex64>) -> Result<()> {
    w.write_all(MATRIX_MAGIC)?;
    put_u64(w, m.nrows() as u64)?;
    put_u64(w, m.ncols() as u64)?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            put_f64(w, m[(i, j)].re)?;
            put_f64(w, m[(i, j)].im)?;
        }
    }
    Ok(())
}

pub fn read_matrix<R: Read>(r: &mut R) -> Result<Mat<Complex64>> {
    expect_magic(r, MATRIX_MAGIC)?;
    let rows = get_u64(r)? as usize;
    let cols = get_u64(r)? as usize;
    if rows.checked_mul(cols).is_none_or(|n| n > 1 << 28) {
        return Err(BdfError::Format(format!(
            "implausible matrix size {rows}x{cols}"
        )));
    }
    let mut m = Mat::<Complex64>::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let re = get_f64(r)?;
            let im = get_f64(r)?;
            m[(i, j)] = Complex64::new(re, im);
        }
    }
    Ok(m)
}

pub fn write_state<W: Write>(w: &mut W, state: &VacuumState) -> Result<()> {
    w.write_all(STATE_MAGIC)?;
    put_u64(w, state.spec.n_per_axis as u64)?;
    put_f64(w, state.spec.box_length)?;
    put_f64(w, state.spec.cutoff)?;
    put_f64(w, state.fermi_level)?;
    let tag: u8 = match state.provenance {
        Provenance::Linear => 0,
        Provenance::Scf => 1,
        Provenance::Manual => 2,
    };
    w.write_all(&[tag])?;
    write_matrix(w, &state.q)
}

/// Reads a state and checks it against `lattice`.
pub fn read_state<R: Read>(r: &mut R, lattice: &MomentumLattice) -> Result<VacuumState> {
    expect_magic(r, STATE_MAGIC)?;
    let n = get_u64(r)? as usize;
    let spec = LatticeSpec::new(n, get_f64(r)?, get_f64(r)?);
    lattice.ensure_spec(&spec)?;
    let mu = get_f64(r)?;
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let provenance = match tag[0] {
        0 => Provenance::Linear,
        1 => Provenance::Scf,
        2 => Provenance::Manual,
        t => return Err(BdfError::Format(format!("unknown provenance tag {t}"))),
    };
    let q = read_matrix(r)?;
    VacuumState::new(lattice, q, mu, provenance)
}

pub fn save_state(path: &Path, state: &VacuumState) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_state(&mut w, state)?;
    Ok(w.flush()?)
}

pub fn load_state(path: &Path, lattice: &MomentumLattice) -> Result<VacuumState> {
    read_state(&mut BufReader::new(File::open(path)?), lattice)
}

pub fn save_matrix(path: &Path, m: &Mat<Complex64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix(&mut w, m)?;
    Ok(w.flush()?)
}

pub fn load_matrix(path: &Path) -> Result<Mat<Complex64>> {
    read_matrix(&mut BufReader::new(File::open(path)?))
}
