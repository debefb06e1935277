use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::{PhaseSpaceGrid, BOUNDARY_LIMIT};
use super::point::PhasePoint;
use super::quadrature::normal_rule;
use crate::error::{Error, Result};
use crate::fft::NdFft;

/// Largest number of branches a mixture may carry.
pub const MAX_BRANCHES: usize = 4096;
/// Coherent centers must sit this many `sqrt(ℏ)` away from every box edge.
pub const CENTER_MARGIN: f64 = 5.0;

const NORM_TOL: f64 = 1e-10;
const WEIGHT_TOL: f64 = 1e-12;

/// One pure component of a mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub weight: f64,
    pub psi: Vec<Complex64>,
}

/// A density operator stored as a weighted ensemble of wavefunctions on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    grid: PhaseSpaceGrid,
    branches: Vec<Branch>,
}

impl QuantumState {
    /// Pure state; `psi` must already have unit norm.
    pub fn pure(grid: PhaseSpaceGrid, psi: Vec<Complex64>) -> Result<Self> {
        Self::mixture(grid, vec![Branch { weight: 1.0, psi }])
    }

    /// Mixture of unit-norm branches whose weights sum to one.
    pub fn mixture(grid: PhaseSpaceGrid, branches: Vec<Branch>) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::InvalidInput("a state needs at least one branch".into()));
        }
        if branches.len() > MAX_BRANCHES {
            return Err(Error::CapExceeded { what: "mixture branches", count: branches.len(), cap: MAX_BRANCHES });
        }
        let total: f64 = branches.iter().map(|b| b.weight).sum();
        if branches.iter().any(|b| !(b.weight >= 0.0) || !b.weight.is_finite()) {
            return Err(Error::InvalidInput("branch weights must be finite and nonnegative".into()));
        }
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidInput(format!("branch weights sum to {total}, expected 1")));
        }
        for b in &branches {
            if b.psi.len() != grid.len() {
                return Err(Error::InvalidInput("wavefunction length does not match the grid".into()));
            }
            let n = norm_sq(&grid, &b.psi);
            if !n.is_finite() {
                return Err(Error::NonFinite("wavefunction"));
            }
            if (n.sqrt() - 1.0).abs() > NORM_TOL {
                return Err(Error::InvalidInput(format!("branch norm {} differs from 1", n.sqrt())));
            }
        }
        Ok(Self { grid, branches })
    }

    /// Builds a mixture after normalizing each wavefunction and the weights.
    pub fn normalized(grid: PhaseSpaceGrid, parts: Vec<(f64, Vec<Complex64>)>) -> Result<Self> {
        let total: f64 = parts.iter().map(|(w, _)| *w).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::NotNormalizable(total));
        }
        let branches = parts
            .into_iter()
            .map(|(w, mut psi)| {
                let n = norm_sq(&grid, &psi).sqrt();
                if !(n > 0.0) || !n.is_finite() {
                    return Err(Error::NotNormalizable(n));
                }
                psi.iter_mut().for_each(|z| *z /= n);
                Ok(Branch { weight: w / total, psi })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::mixture(grid, branches)
    }

    pub fn grid(&self) -> &PhaseSpaceGrid {
        &self.grid
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn into_branches(self) -> Vec<Branch> {
        self.branches
    }

    pub fn is_pure(&self) -> bool {
        self.branches.len() == 1
    }

    /// `Σ w_b ‖ψ_b‖²`.
    pub fn trace(&self) -> f64 {
        self.branches.iter().map(|b| b.weight * norm_sq(&self.grid, &b.psi)).sum()
    }

    /// Applies `f` to every branch wavefunction, keeping the weights.
    pub fn map_branches<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(&[Complex64]) -> Result<Vec<Complex64>>,
    {
        let branches = self
            .branches
            .iter()
            .map(|b| Ok(Branch { weight: b.weight, psi: f(&b.psi)? }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid: self.grid.clone(), branches })
    }

    /// Weighted probability sitting in the position or momentum boundary band.
    pub fn boundary_mass(&self) -> f64 {
        self.branches.iter().map(|b| b.weight * boundary_mass(&self.grid, &b.psi)).sum()
    }

    /// Fails with [`Error::BoundaryLeak`] when the boundary band holds too much mass.
    pub fn check_boundary(&self) -> Result<()> {
        let mass = self.boundary_mass();
        if mass > BOUNDARY_LIMIT {
            return Err(Error::BoundaryLeak { mass, limit: BOUNDARY_LIMIT });
        }
        Ok(())
    }

    /// Expectation of the position and momentum operators, `(⟨x̂⟩, ⟨p̂⟩)`.
    pub fn mean(&self) -> PhasePoint {
        let d = self.grid.dim();
        let mut acc = vec![0.0; 2 * d];
        for b in &self.branches {
            for a in 0..d {
                let px = crate::norms::apply_factor(&self.grid, &b.psi, a, 0.0);
                let pp = crate::norms::apply_factor(&self.grid, &b.psi, d + a, 0.0);
                acc[a] += b.weight * inner(&self.grid, &b.psi, &px).re;
                acc[d + a] += b.weight * inner(&self.grid, &b.psi, &pp).re;
            }
        }
        PhasePoint::new(acc).expect("finite moments")
    }
}

/// `Δx^D Σ |ψ|²`.
pub fn norm_sq(grid: &PhaseSpaceGrid, psi: &[Complex64]) -> f64 {
    grid.cell_volume() * psi.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

/// Discrete inner product `⟨a|b⟩ = Δx^D Σ conj(a)·b`.
pub fn inner(grid: &PhaseSpaceGrid, a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let s: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    s * grid.cell_volume()
}

/// Fraction of `|ψ|²` inside the position band or the momentum band, whichever is larger.
///
/// The momentum band is the position band width capped at a quarter of `p_max`.
pub fn boundary_mass(grid: &PhaseSpaceGrid, psi: &[Complex64]) -> f64 {
    let band = grid.boundary_band();
    let total: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let d = grid.dim();
    let mut pos = 0.0;
    for (flat, z) in psi.iter().enumerate() {
        let x = grid.position(flat);
        let near = (0..d).any(|a| x[a] - grid.x_min(a) < band || grid.x_max(a) - x[a] < band);
        if near {
            pos += z.norm_sqr();
        }
    }
    let mut spec = psi.to_vec();
    NdFft::cube(grid.n_x(), d).forward(&mut spec);
    let spec_total: f64 = spec.iter().map(|z| z.norm_sqr()).sum();
    let mut mom = 0.0;
    for (flat, z) in spec.iter().enumerate() {
        let p = grid.momentum(flat);
        if (0..d).any(|a| p[a].abs() > grid.p_max(a) - band.min(0.25 * grid.p_max(a))) {
            mom += z.norm_sqr();
        }
    }
    (pos / total).max(mom / spec_total)
}

fn coherent_factor(hbar: f64, center_x: f64, center_p: f64, x: f64) -> Complex64 {
    let amp = (PI * hbar).powf(-0.25) * (-(x - center_x).powi(2) / (2.0 * hbar)).exp();
    Complex64::from_polar(amp, center_p * (x - center_x / 2.0) / hbar)
}

/// Samples of `⟨x|α⟩` on the grid without any margin check.
pub fn coherent_values(grid: &PhaseSpaceGrid, alpha: &PhasePoint) -> Vec<Complex64> {
    let d = grid.dim();
    let h = grid.hbar();
    let factors: Vec<Vec<Complex64>> = (0..d)
        .map(|a| {
            grid.x_axis(a)
                .into_iter()
                .map(|x| coherent_factor(h, alpha.x()[a], alpha.p()[a], x))
                .collect()
        })
        .collect();
    match d {
        1 => factors[0].clone(),
        _ => {
            let n = grid.n_x();
            let mut out = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    out.push(factors[0][i] * factors[1][j]);
                }
            }
            out
        }
    }
}

fn check_center(grid: &PhaseSpaceGrid, alpha: &PhasePoint) -> Result<()> {
    if alpha.dim() != grid.dim() {
        return Err(Error::InvalidInput("phase point dimension does not match the grid".into()));
    }
    let margin = CENTER_MARGIN * grid.hbar().sqrt();
    for a in 0..grid.dim() {
        let x = alpha.x()[a];
        if x - grid.x_min(a) < margin || grid.x_max(a) - x < margin {
            return Err(Error::BoundaryMargin { axis: a, center: x, margin });
        }
        let p = alpha.p()[a];
        if p.abs() + margin > grid.p_max(a) {
            return Err(Error::BandLimit { axis: a, momentum: p, limit: grid.p_max(a) });
        }
    }
    Ok(())
}

/// Isotropic coherent state `|α⟩`, the harmonic ground state translated to `α`.
///
/// `⟨x|α⟩ = (πℏ)^{−D/4} exp(iα_p·(x − α_x/2)/ℏ) exp(−|x − α_x|²/(2ℏ))`.
pub fn coherent_state(grid: &PhaseSpaceGrid, alpha: &PhasePoint) -> Result<QuantumState> {
    check_center(grid, alpha)?;
    QuantumState::pure(grid.clone(), coherent_values(grid, alpha))
}

/// Closed-form overlap `⟨β|α⟩` of two coherent states.
pub fn coherent_overlap(hbar: f64, beta: &PhasePoint, alpha: &PhasePoint) -> Complex64 {
    let d = alpha.dim();
    let mut out = Complex64::new(1.0, 0.0);
    for j in 0..d {
        let (ax, ap, bx, bp) = (alpha.x()[j], alpha.p()[j], beta.x()[j], beta.p()[j]);
        let mag = (-((ax - bx).powi(2) + (ap - bp).powi(2)) / (4.0 * hbar)).exp();
        let phase = (ap * bx - bp * ax) / (2.0 * hbar);
        out *= Complex64::from_polar(mag, phase);
    }
    out
}

/// Shifts `psi` by `shift` in position via Fourier phases, `ψ(x) → ψ(x − shift)`.
pub fn fourier_shift(grid: &PhaseSpaceGrid, psi: &[Complex64], shift: &[f64]) -> Vec<Complex64> {
    let d = grid.dim();
    let plan = NdFft::cube(grid.n_x(), d);
    let mut spec = psi.to_vec();
    plan.forward(&mut spec);
    for (flat, z) in spec.iter_mut().enumerate() {
        let p = grid.momentum(flat);
        let phase: f64 = (0..d).map(|a| -p[a] * shift[a] / grid.hbar()).sum();
        *z *= Complex64::from_polar(1.0, phase);
    }
    plan.inverse(&mut spec);
    spec
}

/// Applies `τ_α = exp(i(α_p·x̂ − α_x·p̂)/ℏ)` to one wavefunction without boundary checks.
pub fn translate_values(grid: &PhaseSpaceGrid, psi: &[Complex64], alpha: &PhasePoint) -> Vec<Complex64> {
    if alpha.coords().iter().all(|c| *c == 0.0) {
        return psi.to_vec();
    }
    let d = grid.dim();
    let mut out = if alpha.x().iter().all(|c| *c == 0.0) {
        psi.to_vec()
    } else {
        fourier_shift(grid, psi, alpha.x())
    };
    for (flat, z) in out.iter_mut().enumerate() {
        let x = grid.position(flat);
        let phase: f64 = (0..d).map(|a| alpha.p()[a] * (x[a] - alpha.x()[a] / 2.0)).sum::<f64>() / grid.hbar();
        *z *= Complex64::from_polar(1.0, phase);
    }
    out
}

/// Phase-space translation of every branch, `τ_α ρ τ_α†`.
pub fn translate(state: &QuantumState, alpha: &PhasePoint) -> Result<QuantumState> {
    if alpha.dim() != state.grid().dim() {
        return Err(Error::InvalidInput("phase point dimension does not match the grid".into()));
    }
    if alpha.coords().iter().all(|c| *c == 0.0) {
        return Ok(state.clone());
    }
    let grid = state.grid().clone();
    let out = state.map_branches(|psi| Ok(translate_values(&grid, psi, alpha)))?;
    out.check_boundary()?;
    Ok(out)
}

/// Mixture `Σ p_i |α_i⟩⟨α_i|` from a list of atoms whose weights sum to one.
pub fn mix_coherent(grid: &PhaseSpaceGrid, atoms: &[(PhasePoint, f64)]) -> Result<QuantumState> {
    if atoms.len() > MAX_BRANCHES {
        return Err(Error::CapExceeded { what: "mixture atoms", count: atoms.len(), cap: MAX_BRANCHES });
    }
    let total: f64 = atoms.iter().map(|(_, w)| *w).sum();
    if atoms.iter().any(|(_, w)| !(*w >= 0.0) || !w.is_finite()) || !total.is_finite() || (total - 1.0).abs() > 1e-6 {
        return Err(Error::NotNormalizable(total));
    }
    let mut branches = Vec::with_capacity(atoms.len());
    for (alpha, w) in atoms {
        check_center(grid, alpha)?;
        branches.push(Branch { weight: w / total, psi: coherent_values(grid, alpha) });
    }
    QuantumState::mixture(grid.clone(), branches)
}

/// Atoms of a tensor Gauss–Hermite rule for the normal law `N(mean, diag(sigma²))` on phase space.
pub fn gaussian_atoms(mean: &PhasePoint, sigma: &[f64], nodes_per_axis: usize) -> Result<Vec<(PhasePoint, f64)>> {
    let dims = mean.coords().len();
    if sigma.len() != dims {
        return Err(Error::InvalidInput("one width per phase coordinate is required".into()));
    }
    let count = nodes_per_axis.checked_pow(dims as u32).unwrap_or(usize::MAX);
    if count > MAX_BRANCHES {
        return Err(Error::CapExceeded { what: "mixture atoms", count, cap: MAX_BRANCHES });
    }
    let (z, w) = normal_rule(nodes_per_axis);
    let mut atoms = Vec::with_capacity(count);
    for flat in 0..count {
        let mut rem = flat;
        let mut coords = vec![0.0; dims];
        let mut weight = 1.0;
        for c in (0..dims).rev() {
            let k = rem % nodes_per_axis;
            rem /= nodes_per_axis;
            coords[c] = mean.coords()[c] + sigma[c] * z[k];
            weight *= w[k];
        }
        atoms.push((PhasePoint::new(coords)?, weight));
    }
    Ok(atoms)
}

/// Normalized superposition `(|a⟩ + |b⟩)/‖·‖`.
pub fn cat_state(grid: &PhaseSpaceGrid, a: &PhasePoint, b: &PhasePoint) -> Result<QuantumState> {
    check_center(grid, a)?;
    check_center(grid, b)?;
    let va = coherent_values(grid, a);
    let vb = coherent_values(grid, b);
    let psi: Vec<Complex64> = va.iter().zip(&vb).map(|(x, y)| x + y).collect();
    QuantumState::normalized(grid.clone(), vec![(1.0, psi)])
}

/// Harmonic-oscillator eigenfunction `n` (unit mass and frequency) along axis 0,
/// ground state along the others, translated to `center`.
pub fn hermite_values(grid: &PhaseSpaceGrid, center: &PhasePoint, n: usize) -> Vec<Complex64> {
    let h = grid.hbar();
    let origin = PhasePoint::origin(grid.dim());
    let mut base = coherent_values(grid, &origin);
    let xs = grid.x_axis(0);
    let norm = 1.0 / ((2f64.powi(n as i32)) * (1..=n).map(|k| k as f64).product::<f64>()).sqrt();
    for (flat, z) in base.iter_mut().enumerate() {
        let idx = grid.unflatten(flat);
        let s = xs[idx[0]] / h.sqrt();
        // physicists' Hermite recurrence
        let (mut h0, mut h1) = (1.0, 2.0 * s);
        let hn = match n {
            0 => h0,
            _ => {
                for k in 1..n {
                    let h2 = 2.0 * s * h1 - 2.0 * k as f64 * h0;
                    h0 = h1;
                    h1 = h2;
                }
                h1
            }
        };
        *z *= hn * norm;
    }
    translate_values(grid, &base, center)
}

/// Seeded random mixture of `rank` branches; each branch is a random complex
/// combination of up to eight coherent states and up to two Hermite-excited states
/// with centers drawn uniformly from `center ± spread`.
pub fn random_low_rank(
    grid: &PhaseSpaceGrid,
    seed: u64,
    rank: usize,
    center: &PhasePoint,
    spread: f64,
) -> Result<QuantumState> {
    if rank == 0 || rank > 8 {
        return Err(Error::InvalidInput(format!("rank {rank} must be between 1 and 8")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = 2 * grid.dim();
    let mut parts = Vec::with_capacity(rank);
    for _ in 0..rank {
        let n_coh = rng.gen_range(1..=8);
        let n_herm = rng.gen_range(0..=2);
        let mut psi = vec![Complex64::new(0.0, 0.0); grid.len()];
        for term in 0..(n_coh + n_herm) {
            let coords: Vec<f64> = (0..dims)
                .map(|c| center.coords()[c] + spread * (2.0 * rng.gen::<f64>() - 1.0))
                .collect();
            let alpha = PhasePoint::new(coords)?;
            check_center(grid, &alpha)?;
            let values = if term < n_coh {
                coherent_values(grid, &alpha)
            } else {
                hermite_values(grid, &alpha, rng.gen_range(1..=2))
            };
            let coef = Complex64::new(gaussian(&mut rng), gaussian(&mut rng));
            psi.iter_mut().zip(&values).for_each(|(z, v)| *z += coef * v);
        }
        let weight = -(1.0 - rng.gen::<f64>()).ln();
        parts.push((weight, psi));
    }
    QuantumState::normalized(grid.clone(), parts)
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box–Muller
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}
