//! Binary state files.
//!
//! Layout (little endian): magic `QCCSTATE`, format version `u32`, `D` as `u32`, `ℏ`,
//! per axis `x_min` and `x_max`, `n_x` as `u32`, branch count as `u32`, then for each
//! branch its weight followed by `n_x^D` pairs `(re, im)`.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::state::{Branch, QuantumState};
use super::PhaseSpaceGrid;
use crate::error::{Error, Result};

pub const STATE_MAGIC: &[u8; 8] = b"QCCSTATE";
pub const STATE_FORMAT_VERSION: u32 = 1;

fn u32_of<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn f64_of<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

impl QuantumState {
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let g = self.grid();
        w.write_all(STATE_MAGIC)?;
        w.write_all(&STATE_FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(g.dim() as u32).to_le_bytes())?;
        w.write_all(&g.hbar().to_le_bytes())?;
        for a in 0..g.dim() {
            w.write_all(&g.x_min(a).to_le_bytes())?;
            w.write_all(&g.x_max(a).to_le_bytes())?;
        }
        w.write_all(&(g.n_x() as u32).to_le_bytes())?;
        w.write_all(&(self.branches().len() as u32).to_le_bytes())?;
        for b in self.branches() {
            w.write_all(&b.weight.to_le_bytes())?;
            for z in &b.psi {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| Error::Format("file is too short for a state header".into()))?;
        if &magic != STATE_MAGIC {
            return Err(Error::Format("not a state file".into()));
        }
        let version = u32_of(&mut r)?;
        if version != STATE_FORMAT_VERSION {
            return Err(Error::Format(format!("state format version {version}, expected {STATE_FORMAT_VERSION}")));
        }
        let dim = u32_of(&mut r)? as usize;
        if dim == 0 || dim > 2 {
            return Err(Error::Format(format!("unsupported dimension {dim}")));
        }
        let hbar = f64_of(&mut r)?;
        let mut lo = Vec::with_capacity(dim);
        let mut hi = Vec::with_capacity(dim);
        for _ in 0..dim {
            lo.push(f64_of(&mut r)?);
            hi.push(f64_of(&mut r)?);
        }
        let n_x = u32_of(&mut r)? as usize;
        let grid = PhaseSpaceGrid::with_box(dim, hbar, &lo, &hi, n_x).map_err(|e| Error::Format(e.to_string()))?;
        let count = u32_of(&mut r)? as usize;
        if count == 0 || count > super::state::MAX_BRANCHES {
            return Err(Error::Format(format!("branch count {count} is out of range")));
        }
        let mut branches = Vec::with_capacity(count);
        for _ in 0..count {
            let weight = f64_of(&mut r)?;
            let mut psi = Vec::with_capacity(grid.len());
            for _ in 0..grid.len() {
                let re = f64_of(&mut r)?;
                let im = f64_of(&mut r)?;
                psi.push(Complex64::new(re, im));
            }
            branches.push(Branch { weight, psi });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after the last branch".into()));
        }
        QuantumState::mixture(grid, branches)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_binary(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_binary(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::state::{cat_state, random_low_rank};
    use crate::phase::PhasePoint;

    fn grid() -> PhaseSpaceGrid {
        PhaseSpaceGrid::new(1, 0.1, -8.0, 8.0, 128).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let g = grid();
        let s = random_low_rank(&g, 3, 4, &PhasePoint::origin(1), 0.5).unwrap();
        let mut buf = Vec::new();
        s.write_binary(&mut buf).unwrap();
        let back = QuantumState::read_binary(&buf[..]).unwrap();
        assert_eq!(back.grid(), s.grid());
        assert_eq!(back.branches().len(), s.branches().len());
        for (a, b) in back.branches().iter().zip(s.branches()) {
            assert_eq!(a.weight, b.weight);
            assert_eq!(a.psi, b.psi);
        }
    }

    #[test]
    fn header_problems_are_format_errors() {
        let g = grid();
        let s = cat_state(&g, &PhasePoint::new(vec![1.0, 0.0]).unwrap(), &PhasePoint::new(vec![-1.0, 0.0]).unwrap()).unwrap();
        let mut buf = Vec::new();
        s.write_binary(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[8] = 9;
        assert!(matches!(QuantumState::read_binary(&bad[..]), Err(Error::Format(m)) if m.contains("version 9")));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(QuantumState::read_binary(&bad[..]), Err(Error::Format(_))));
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(QuantumState::read_binary(&long[..]), Err(Error::Format(_))));
        assert!(QuantumState::read_binary(&buf[..buf.len() - 3]).is_err());
    }
}
