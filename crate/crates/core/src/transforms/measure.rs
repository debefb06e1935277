use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::PhasePoint;

const MAGIC: &[u8; 8] = b"QCCMEAS\0";
/// Version of the columnar measure file layout.
pub const MEASURE_FORMAT_VERSION: u32 = 1;

/// Regular lattice of phase-space centers; the last coordinate varies fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    pub counts: Vec<usize>,
}

impl LatticeSpec {
    pub fn new(origin: Vec<f64>, spacing: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        let n = origin.len();
        if n == 0 || n % 2 != 0 || spacing.len() != n || counts.len() != n {
            return Err(Error::InvalidInput("lattice needs 2D origins, spacings and counts".into()));
        }
        if spacing.iter().any(|h| !(h.is_finite() && *h > 0.0)) || counts.iter().any(|c| *c == 0) {
            return Err(Error::InvalidInput("lattice spacings must be positive and counts nonzero".into()));
        }
        Ok(Self { origin, spacing, counts })
    }

    /// Lattice with spacing `h` covering `[lo_c, hi_c]` in every coordinate,
    /// anchored on integer multiples of `h` shifted by `anchor`.
    pub fn covering(lo: &[f64], hi: &[f64], spacing: &[f64], anchor: &[f64]) -> Result<Self> {
        let mut origin = Vec::with_capacity(lo.len());
        let mut counts = Vec::with_capacity(lo.len());
        for c in 0..lo.len() {
            let h = spacing[c];
            let first = ((lo[c] - anchor[c]) / h).floor();
            let last = ((hi[c] - anchor[c]) / h).ceil();
            origin.push(anchor[c] + first * h);
            counts.push((last - first) as usize + 1);
        }
        Self::new(origin, spacing.to_vec(), counts)
    }

    pub fn dim(&self) -> usize {
        self.origin.len() / 2
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn axis(&self, c: usize) -> Vec<f64> {
        (0..self.counts[c]).map(|i| self.origin[c] + i as f64 * self.spacing[c]).collect()
    }

    pub fn index(&self, flat: usize) -> Vec<usize> {
        let mut rem = flat;
        let mut idx = vec![0; self.counts.len()];
        for c in (0..self.counts.len()).rev() {
            idx[c] = rem % self.counts[c];
            rem /= self.counts[c];
        }
        idx
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.index(flat)
            .iter()
            .enumerate()
            .map(|(c, i)| self.origin[c] + *i as f64 * self.spacing[c])
            .collect()
    }

    /// Shifts every center by `v`.
    pub fn translated(&self, v: &[f64]) -> Self {
        Self {
            origin: self.origin.iter().zip(v).map(|(o, s)| o + s).collect(),
            spacing: self.spacing.clone(),
            counts: self.counts.clone(),
        }
    }
}

/// Discrete measure on phase space stored as flat points and masses.
///
/// Lattice-supported measures keep their [`LatticeSpec`]; particle clouds do not.
/// Signed measures (Wigner functions) carry `signed = true` and are rejected by
/// optimal transport.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceMeasure {
    dim: usize,
    hbar: f64,
    points: Vec<f64>,
    masses: Vec<f64>,
    lattice: Option<LatticeSpec>,
    signed: bool,
}

impl PhaseSpaceMeasure {
    /// Weighted particle cloud; `hbar` is metadata only (0 when unknown).
    pub fn particles(dim: usize, hbar: f64, points: &[PhasePoint], masses: Vec<f64>) -> Result<Self> {
        if points.len() != masses.len() {
            return Err(Error::InvalidInput("one mass per point is required".into()));
        }
        let mut flat = Vec::with_capacity(points.len() * 2 * dim);
        for p in points {
            if p.dim() != dim {
                return Err(Error::InvalidInput("point dimension mismatch".into()));
            }
            flat.extend_from_slice(p.coords());
        }
        Self::from_flat(dim, hbar, flat, masses)
    }

    /// Particle cloud from row-major coordinates.
    pub fn from_flat(dim: usize, hbar: f64, points: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.len() != masses.len() * 2 * dim {
            return Err(Error::InvalidInput("coordinate array does not match the mass count".into()));
        }
        check_masses(&masses, false)?;
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("measure support"));
        }
        Ok(Self { dim, hbar, points, masses, lattice: None, signed: false })
    }

    /// Lattice-supported measure with one mass per lattice center.
    pub fn on_lattice(lattice: LatticeSpec, hbar: f64, masses: Vec<f64>, signed: bool) -> Result<Self> {
        if masses.len() != lattice.len() {
            return Err(Error::InvalidInput("one mass per lattice center is required".into()));
        }
        check_masses(&masses, signed)?;
        let dim = lattice.dim();
        let mut points = Vec::with_capacity(masses.len() * 2 * dim);
        for i in 0..lattice.len() {
            points.extend(lattice.point(i));
        }
        Ok(Self { dim, hbar, points, masses, lattice: Some(lattice), signed })
    }

    /// Point mass `δ_α`.
    pub fn dirac(alpha: &PhasePoint, hbar: f64) -> Self {
        Self { dim: alpha.dim(), hbar, points: alpha.coords().to_vec(), masses: vec![1.0], lattice: None, signed: false }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let w = 2 * self.dim;
        &self.points[i * w..(i + 1) * w]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn lattice(&self) -> Option<&LatticeSpec> {
        self.lattice.as_ref()
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Mass divided by the lattice cell volume; `None` for particle clouds.
    pub fn density(&self) -> Option<Vec<f64>> {
        let v = self.lattice.as_ref()?.cell_volume();
        Some(self.masses.iter().map(|m| m / v).collect())
    }

    /// `∫ f dμ`.
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        (0..self.len()).map(|i| self.masses[i] * f(self.point(i))).sum()
    }

    /// First moment divided by total mass.
    pub fn mean(&self) -> Vec<f64> {
        let total = self.total_mass();
        (0..2 * self.dim).map(|c| self.integrate(|z| z[c]) / total).collect()
    }

    /// Same masses at shifted locations.
    pub fn translated(&self, v: &[f64]) -> Self {
        let w = 2 * self.dim;
        let points = self.points.iter().enumerate().map(|(i, z)| z + v[i % w]).collect();
        Self { points, lattice: self.lattice.as_ref().map(|l| l.translated(v)), ..self.clone() }
    }

    /// Replaces the support by `points` (same order), dropping any lattice structure.
    pub fn with_points(&self, points: Vec<f64>) -> Result<Self> {
        if points.len() != self.points.len() {
            return Err(Error::InvalidInput("support size changed".into()));
        }
        Ok(Self { points, lattice: None, ..self.clone() })
    }

    /// Rescales masses to total one.
    pub fn normalized(&self) -> Result<Self> {
        let t = self.total_mass();
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::NotNormalizable(t));
        }
        Ok(Self { masses: self.masses.iter().map(|m| m / t).collect(), ..self.clone() })
    }

    /// Atoms as `(point, mass)` pairs.
    pub fn atoms(&self) -> Vec<(PhasePoint, f64)> {
        (0..self.len())
            .map(|i| (PhasePoint::new(self.point(i).to_vec()).expect("finite support"), self.masses[i]))
            .collect()
    }

    /// Keeps the atoms selected by `keep`, as a particle cloud.
    pub fn filter<F: Fn(usize) -> bool>(&self, keep: F) -> Self {
        let w = 2 * self.dim;
        let mut points = Vec::new();
        let mut masses = Vec::new();
        for i in 0..self.len() {
            if keep(i) {
                points.extend_from_slice(&self.points[i * w..(i + 1) * w]);
                masses.push(self.masses[i]);
            }
        }
        Self { dim: self.dim, hbar: self.hbar, points, masses, lattice: None, signed: self.signed }
    }

    /// Little-endian columnar file: header, then rows of `2D` coordinates and one mass.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&MEASURE_FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&self.hbar.to_le_bytes())?;
        w.write_all(&[self.signed as u8, self.lattice.is_some() as u8])?;
        if let Some(l) = &self.lattice {
            for c in 0..2 * self.dim {
                w.write_all(&l.origin[c].to_le_bytes())?;
                w.write_all(&l.spacing[c].to_le_bytes())?;
                w.write_all(&(l.counts[c] as u64).to_le_bytes())?;
            }
        }
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for i in 0..self.len() {
            for v in self.point(i) {
                w.write_all(&v.to_le_bytes())?;
            }
            w.write_all(&self.masses[i].to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a measure file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != MEASURE_FORMAT_VERSION {
            return Err(Error::Format(format!("measure format version {version}, expected {MEASURE_FORMAT_VERSION}")));
        }
        let dim = read_u32(&mut r)? as usize;
        if dim == 0 || dim > 2 {
            return Err(Error::Format(format!("unsupported dimension {dim}")));
        }
        let hbar = read_f64(&mut r)?;
        let mut flags = [0u8; 2];
        r.read_exact(&mut flags)?;
        let lattice = if flags[1] == 1 {
            let mut origin = Vec::new();
            let mut spacing = Vec::new();
            let mut counts = Vec::new();
            for _ in 0..2 * dim {
                origin.push(read_f64(&mut r)?);
                spacing.push(read_f64(&mut r)?);
                counts.push(read_u64(&mut r)? as usize);
            }
            Some(LatticeSpec::new(origin, spacing, counts)?)
        } else {
            None
        };
        let n = read_u64(&mut r)? as usize;
        let mut points = Vec::with_capacity(n * 2 * dim);
        let mut masses = Vec::with_capacity(n);
        for _ in 0..n {
            for _ in 0..2 * dim {
                points.push(read_f64(&mut r)?);
            }
            masses.push(read_f64(&mut r)?);
        }
        let signed = flags[0] == 1;
        check_masses(&masses, signed)?;
        if let Some(l) = &lattice {
            if l.len() != n {
                return Err(Error::Format("lattice size does not match the row count".into()));
            }
        }
        Ok(Self { dim, hbar, points, masses, lattice, signed })
    }

    /// CSV with columns `x1.., p1.., mass`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header: Vec<String> = (1..=self.dim).map(|a| format!("x{a}")).collect();
        header.extend((1..=self.dim).map(|a| format!("p{a}")));
        header.push("mass".into());
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.point(i).iter().map(|v| format!("{v:.17e}")).collect();
            row.push(format!("{:.17e}", self.masses[i]));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_binary(f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_binary(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn check_masses(masses: &[f64], signed: bool) -> Result<()> {
    if masses.iter().any(|m| !m.is_finite()) {
        return Err(Error::NonFinite("measure masses"));
    }
    if !signed && masses.iter().any(|m| *m < 0.0) {
        return Err(Error::SignedMeasure);
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_indexing() {
        let l = LatticeSpec::new(vec![0.0, 1.0], vec![0.5, 0.25], vec![3, 4]).unwrap();
        assert_eq!(l.len(), 12);
        assert_eq!(l.point(5), vec![0.5, 1.25]);
        let c = LatticeSpec::covering(&[-1.0, -1.0], &[1.0, 1.0], &[0.3, 0.3], &[0.0, 0.0]).unwrap();
        assert!(c.origin[0] <= -1.0 && c.origin[0] + 0.3 * (c.counts[0] - 1) as f64 >= 1.0);
    }

    #[test]
    fn binary_round_trip() {
        let l = LatticeSpec::new(vec![0.0, 1.0], vec![0.5, 0.25], vec![2, 3]).unwrap();
        let m = PhaseSpaceMeasure::on_lattice(l, 0.1, vec![0.1, 0.2, 0.3, -0.1, 0.4, 0.1], true).unwrap();
        let mut buf = Vec::new();
        m.write_binary(&mut buf).unwrap();
        assert_eq!(PhaseSpaceMeasure::read_binary(&buf[..]).unwrap(), m);
        buf[8] = 9;
        assert!(matches!(PhaseSpaceMeasure::read_binary(&buf[..]), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_negative_mass_unless_signed() {
        assert!(matches!(PhaseSpaceMeasure::from_flat(1, 0.1, vec![0.0, 0.0], vec![-1.0]), Err(Error::SignedMeasure)));
    }
}
