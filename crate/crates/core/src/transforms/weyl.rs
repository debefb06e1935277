use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use super::husimi::check_spacing;
use super::measure::LatticeSpec;
use crate::error::{Error, Result};
use crate::phase::state::{coherent_values, Branch};
use crate::phase::{PhasePoint, PhaseSpaceGrid, QuantumState};

/// Tolerance of the Hermitian flag.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Dense operator acting on position-grid samples.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    grid: PhaseSpaceGrid,
    entries: DMatrix<Complex64>,
    hermitian: bool,
}

impl OperatorMatrix {
    /// Wraps a square matrix; the Hermitian flag is set when `max|A − A†| ≤ 1e-10`.
    pub fn new(grid: PhaseSpaceGrid, entries: DMatrix<Complex64>) -> Result<Self> {
        let n = grid.len();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::InvalidInput(format!("operator must be {n}×{n}")));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("operator entries"));
        }
        let hermitian = hermitian_defect(&entries) <= HERMITIAN_TOL;
        Ok(Self { grid, entries, hermitian })
    }

    pub fn identity(grid: &PhaseSpaceGrid) -> Self {
        let n = grid.len();
        Self { grid: grid.clone(), entries: DMatrix::identity(n, n), hermitian: true }
    }

    pub fn grid(&self) -> &PhaseSpaceGrid {
        &self.grid
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<Complex64> {
        self.entries
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// `max |A − A†|` over entries.
    pub fn hermitian_defect(&self) -> f64 {
        hermitian_defect(&self.entries)
    }

    pub fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let v = nalgebra::DVector::from_column_slice(psi);
        (&self.entries * v).iter().copied().collect()
    }

    pub fn adjoint(&self) -> Self {
        Self { grid: self.grid.clone(), entries: self.entries.adjoint(), hermitian: self.hermitian }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Self::new(self.grid.clone(), &self.entries - &other.entries)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        Self::new(self.grid.clone(), &self.entries * &other.entries)
    }

    /// `U A U†`.
    pub fn conjugate_by(&self, u: &Self) -> Result<Self> {
        Self::new(self.grid.clone(), &u.entries * &self.entries * u.entries.adjoint())
    }

    /// `A ρ A†` branch by branch (weights kept, norms not renormalized).
    pub fn apply_state(&self, state: &QuantumState) -> Result<QuantumState> {
        let branches: Vec<Branch> = state
            .branches()
            .iter()
            .map(|b| Branch { weight: b.weight, psi: self.apply(&b.psi) })
            .collect();
        let parts = branches.into_iter().map(|b| (b.weight, b.psi)).collect();
        QuantumState::normalized(state.grid().clone(), parts)
    }
}

fn hermitian_defect(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Weyl quantization on a one-dimensional grid:
/// `K[i][j] = (1/N) Σ_k A((x_i + x_j)/2, p_k) e^{i p_k (x_i − x_j)/ℏ}`.
///
/// Each midpoint costs one inverse FFT over the momentum axis.
pub fn weyl_quantize<A>(symbol: A, grid: &PhaseSpaceGrid) -> Result<OperatorMatrix>
where
    A: Fn(f64, f64) -> f64 + Sync,
{
    if grid.dim() != 1 {
        return Err(Error::Unsupported("dense quantization is implemented for D = 1".into()));
    }
    let n = grid.n_x();
    let ps = grid.fft_momenta(0);
    let x0 = grid.x_min(0);
    let dx = grid.dx(0);
    let fft = FftPlanner::new().plan_fft_inverse(n);
    let cols: Vec<Vec<Complex64>> = (0..2 * n - 1)
        .into_par_iter()
        .map(|s| {
            let m = x0 + 0.5 * s as f64 * dx;
            let mut line: Vec<Complex64> = ps.iter().map(|p| Complex64::new(symbol(m, *p), 0.0)).collect();
            fft.process(&mut line);
            line.iter_mut().for_each(|z| *z /= n as f64);
            line
        })
        .collect();
    if cols.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("symbol values"));
    }
    let entries = DMatrix::from_fn(n, n, |i, j| {
        let d = (i as i64 - j as i64).rem_euclid(n as i64) as usize;
        cols[i + j][d]
    });
    OperatorMatrix::new(grid.clone(), entries)
}

/// `Op^w(f) = (2πℏ)^{−D} Σ_α f(α)|α⟩⟨α|·(cell volume)` over the lattice centers.
pub fn wavepacket_quantize<F>(f: F, grid: &PhaseSpaceGrid, lattice: &LatticeSpec) -> Result<OperatorMatrix>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_spacing(lattice, grid.hbar())?;
    if lattice.dim() != grid.dim() {
        return Err(Error::InvalidInput("lattice dimension does not match the grid".into()));
    }
    let n = grid.len();
    let d = grid.dim() as i32;
    let pref = (2.0 * PI * grid.hbar()).powi(-d) * lattice.cell_volume() * grid.cell_volume();
    let mut entries = DMatrix::<Complex64>::zeros(n, n);
    for i in 0..lattice.len() {
        let z = lattice.point(i);
        let c = f(&z);
        if !c.is_finite() {
            return Err(Error::NonFinite("wavepacket symbol"));
        }
        if c == 0.0 {
            continue;
        }
        let v = nalgebra::DVector::from_vec(coherent_values(grid, &PhasePoint::new(z)?));
        entries.ger(Complex64::new(pref * c, 0.0), &v, &v.conjugate(), Complex64::new(1.0, 0.0));
    }
    OperatorMatrix::new(grid.clone(), entries)
}

/// Smallest eigenvalue of a Hermitian operator.
pub fn min_eigenvalue(op: &OperatorMatrix) -> f64 {
    let sym = (op.entries() + op.entries().adjoint()).map(|z| z * 0.5);
    sym.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::apply_factor;
    use crate::phase::state::{coherent_values, random_low_rank};

    fn grid() -> PhaseSpaceGrid {
        PhaseSpaceGrid::new(1, 0.1, -6.0, 6.0, 128).unwrap()
    }

    #[test]
    fn elementary_symbols() {
        let g = grid();
        let one = weyl_quantize(|_, _| 1.0, &g).unwrap();
        let id = OperatorMatrix::identity(&g);
        assert!(one.entries().iter().zip(id.entries().iter()).all(|(a, b)| (a - b).norm() < 1e-13));
        let x = weyl_quantize(|x, _| x, &g).unwrap();
        let xs = g.x_axis(0);
        for i in 0..g.len() {
            for j in 0..g.len() {
                let expect = if i == j { xs[i] } else { 0.0 };
                assert!((x.entries()[(i, j)] - expect).norm() < 1e-12);
            }
        }
        let p = weyl_quantize(|_, p| p, &g).unwrap();
        let psi = coherent_values(&g, &PhasePoint::new(vec![0.3, 0.5]).unwrap());
        let spectral = apply_factor(&g, &psi, 1, 0.0);
        let err = p.apply(&psi).iter().zip(&spectral).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-8);
        assert!(p.is_hermitian());
    }

    #[test]
    fn duality_with_wigner() {
        let g = grid();
        let s = random_low_rank(&g, 21, 1, &PhasePoint::origin(1), 0.8).unwrap();
        let f = |x: f64, p: f64| (x * 0.7).cos() * (-p * p).exp() + 0.3 * x * p;
        let op = weyl_quantize(f, &g).unwrap();
        let psi = &s.branches()[0].psi;
        let lhs = crate::phase::state::inner(&g, psi, &op.apply(psi)).re;
        let w = crate::transforms::wigner::wigner(&s).unwrap();
        let rhs = w.integrate(|z| f(z[0], z[1]));
        assert!((lhs - rhs).abs() < 1e-6, "{lhs} {rhs}");
    }

    #[test]
    fn wavepacket_identity_and_shift() {
        let h: f64 = 0.1;
        let g = grid();
        let lattice = LatticeSpec::covering(&[-3.5, -3.5], &[3.5, 3.5], &[0.5 * h.sqrt(); 2], &[0.0, 0.0]).unwrap();
        let s = random_low_rank(&g, 2, 1, &PhasePoint::origin(1), 0.5).unwrap();
        let psi = &s.branches()[0].psi;
        let one = wavepacket_quantize(|_| 1.0, &g, &lattice).unwrap();
        let err = one.apply(psi).iter().zip(psi).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
        assert!(min_eigenvalue(&one) > -1e-8);
        // |α_x − c|² ↦ (x̂ − c)² + ℏ/2
        let c = 0.2;
        let sq = wavepacket_quantize(|z| (z[0] - c).powi(2), &g, &lattice).unwrap();
        let x1 = apply_factor(&g, psi, 0, c);
        let x2 = apply_factor(&g, &x1, 0, c);
        let got = sq.apply(psi);
        let err = got
            .iter()
            .zip(x2.iter().zip(psi))
            .map(|(a, (b, z))| (a - b - z * (h / 2.0)).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
        let sqp = wavepacket_quantize(|z| (z[1] - c).powi(2), &g, &lattice).unwrap();
        let p1 = apply_factor(&g, psi, 1, c);
        let p2 = apply_factor(&g, &p1, 1, c);
        let err = sqp
            .apply(psi)
            .iter()
            .zip(p2.iter().zip(psi))
            .map(|(a, (b, z))| (a - b - z * (h / 2.0)).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn coarse_lattice_rejected() {
        let g = grid();
        let lattice = LatticeSpec::covering(&[-1.0, -1.0], &[1.0, 1.0], &[0.5, 0.5], &[0.0, 0.0]).unwrap();
        assert!(matches!(wavepacket_quantize(|_| 1.0, &g, &lattice), Err(Error::LatticeTooCoarse { .. })));
    }
}
