use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use super::measure::{LatticeSpec, PhaseSpaceMeasure};
use crate::error::{Error, Result};
use crate::fft::{signed_index, upsample2};
use crate::phase::{PhaseSpaceGrid, QuantumState};

/// Phase-space lattice of the Wigner transform: grid positions × ascending grid momenta.
pub fn wigner_lattice(grid: &PhaseSpaceGrid) -> Result<LatticeSpec> {
    if grid.dim() != 1 {
        return Err(Error::Unsupported("Wigner functions are computed for D = 1".into()));
    }
    let n = grid.n_x();
    LatticeSpec::new(
        vec![grid.x_min(0), -((n / 2) as f64) * grid.dp(0)],
        vec![grid.dx(0), grid.dp(0)],
        vec![n, n],
    )
}

/// Wigner densities of one wavefunction on [`wigner_lattice`], row-major in `(x, p)`.
///
/// `W(x, p) = (2πℏ)^{−1} ∫ ψ(x + y/2) conj ψ(x − y/2) e^{−ipy/ℏ} dy`, evaluated with the
/// half-step samples of a band-limited upsampling and one FFT per position.
pub fn wigner_psi(grid: &PhaseSpaceGrid, psi: &[Complex64]) -> Vec<f64> {
    let n = grid.n_x();
    let up = upsample2(psi, n, 1);
    let m2 = 2 * n as i64;
    let fft = FftPlanner::new().plan_fft_forward(n);
    let scale = grid.dx(0) / (2.0 * PI * grid.hbar());
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut line: Vec<Complex64> = (0..n)
                .map(|m| {
                    let s = signed_index(m, n);
                    let a = (2 * i as i64 + s).rem_euclid(m2) as usize;
                    let b = (2 * i as i64 - s).rem_euclid(m2) as usize;
                    up[a] * up[b].conj()
                })
                .collect();
            fft.process(&mut line);
            (0..n).map(|k| scale * line[(k + n / 2) % n].re).collect()
        })
        .collect();
    rows.concat()
}

/// Wigner function of a state as a signed lattice measure (mass = density × cell).
pub fn wigner(state: &QuantumState) -> Result<PhaseSpaceMeasure> {
    let (lattice, dens) = wigner_density(state)?;
    let vol = lattice.cell_volume();
    let masses = dens.iter().map(|v| v * vol).collect();
    PhaseSpaceMeasure::on_lattice(lattice, state.grid().hbar(), masses, true)
}

/// Wigner densities `Σ_b w_b W_{ψ_b}` together with their lattice.
pub fn wigner_density(state: &QuantumState) -> Result<(LatticeSpec, Vec<f64>)> {
    let grid = state.grid();
    let lattice = wigner_lattice(grid)?;
    state.check_boundary()?;
    let mut acc = vec![0.0; lattice.len()];
    for b in state.branches() {
        let w = wigner_psi(grid, &b.psi);
        acc.iter_mut().zip(&w).for_each(|(a, v)| *a += b.weight * v);
    }
    Ok((lattice, acc))
}

/// Convolution of lattice densities with the centered Gaussian of covariance `variance·Id`,
/// computed spectrally with periodic wrap-around.
pub fn gaussian_smooth(density: &[f64], lattice: &LatticeSpec, variance: f64) -> Vec<f64> {
    let shape = lattice.counts.clone();
    let plan = crate::fft::NdFft::new(&shape);
    let mut data: Vec<Complex64> = density.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    plan.forward(&mut data);
    let freqs: Vec<Vec<f64>> = shape
        .iter()
        .enumerate()
        .map(|(c, &n)| {
            let len = n as f64 * lattice.spacing[c];
            (0..n).map(|k| 2.0 * PI * signed_index(k, n) as f64 / len).collect()
        })
        .collect();
    for (flat, z) in data.iter_mut().enumerate() {
        let idx = lattice.index(flat);
        let k2: f64 = idx.iter().enumerate().map(|(c, i)| freqs[c][*i].powi(2)).sum();
        *z *= (-0.5 * variance * k2).exp();
    }
    plan.inverse(&mut data);
    data.iter().map(|z| z.re).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::state::{cat_state, coherent_state, random_low_rank};
    use crate::phase::PhasePoint;

    fn pt(c: &[f64]) -> PhasePoint {
        PhasePoint::new(c.to_vec()).unwrap()
    }

    #[test]
    fn coherent_wigner_is_gaussian_with_half_hbar_variance() {
        let h = 0.1;
        let g = PhaseSpaceGrid::new(1, h, -8.0, 8.0, 256).unwrap();
        let a = pt(&[0.5, -0.3]);
        let s = coherent_state(&g, &a).unwrap();
        let w = wigner(&s).unwrap();
        assert!((w.total_mass() - 1.0).abs() < 1e-8);
        let lattice = w.lattice().unwrap();
        let dens = w.density().unwrap();
        let mut err: f64 = 0.0;
        for (i, v) in dens.iter().enumerate() {
            let z = lattice.point(i);
            let r2 = (z[0] - 0.5).powi(2) + (z[1] + 0.3).powi(2);
            err = err.max((v - (-r2 / h).exp() / (PI * h)).abs());
        }
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn cat_state_has_negative_fringes() {
        let g = PhaseSpaceGrid::new(1, 0.1, -8.0, 8.0, 256).unwrap();
        let s = cat_state(&g, &pt(&[-1.5, 0.0]), &pt(&[1.5, 0.0])).unwrap();
        let w = wigner(&s).unwrap();
        assert!(w.masses().iter().cloned().fold(f64::INFINITY, f64::min) < 0.0);
        assert!((w.total_mass() - 1.0).abs() < 1e-8);
        // midpoint value by direct quadrature of the defining integral at (0, p)
        let psi = &s.branches()[0].psi;
        let xs = g.x_axis(0);
        let n = xs.len();
        let center = n / 2;
        let lattice = w.lattice().unwrap();
        let dens = w.density().unwrap();
        for k in [n / 2, n / 2 + 3, n / 2 + 7] {
            let p = lattice.point(center * n + k)[1];
            // y = 2jΔx keeps both arguments on the grid
            let mut acc = Complex64::new(0.0, 0.0);
            for j in -(n as i64) / 4..(n as i64) / 4 {
                let a = (center as i64 + j) as usize;
                let b = (center as i64 - j) as usize;
                let y = 2.0 * j as f64 * g.dx(0);
                acc += psi[a] * psi[b].conj() * Complex64::from_polar(1.0, -p * y / 0.1);
            }
            let direct = (acc * 2.0 * g.dx(0) / (2.0 * PI * 0.1)).re;
            assert!((direct - dens[center * n + k]).abs() < 1e-8, "{direct} {}", dens[center * n + k]);
        }
    }

    #[test]
    fn mixtures_are_linear() {
        let g = PhaseSpaceGrid::new(1, 0.1, -8.0, 8.0, 256).unwrap();
        let s = random_low_rank(&g, 8, 2, &PhasePoint::origin(1), 1.0).unwrap();
        let (_, whole) = wigner_density(&s).unwrap();
        let parts: Vec<Vec<f64>> = s.branches().iter().map(|b| wigner_psi(&g, &b.psi)).collect();
        for (i, v) in whole.iter().enumerate() {
            let sum: f64 = s.branches().iter().zip(&parts).map(|(b, p)| b.weight * p[i]).sum();
            assert!((v - sum).abs() < 1e-10);
        }
    }

    #[test]
    fn smoothing_adds_variance() {
        let l = LatticeSpec::new(vec![-5.0, -5.0], vec![0.05, 0.05], vec![200, 200]).unwrap();
        let dens: Vec<f64> = (0..l.len())
            .map(|i| {
                let z = l.point(i);
                (-(z[0] * z[0] + z[1] * z[1]) / (2.0 * 0.2)).exp() / (2.0 * PI * 0.2)
            })
            .collect();
        let out = gaussian_smooth(&dens, &l, 0.3);
        for i in (0..l.len()).step_by(97) {
            let z = l.point(i);
            let expect = (-(z[0] * z[0] + z[1] * z[1]) / (2.0 * 0.5)).exp() / (2.0 * PI * 0.5);
            assert!((out[i] - expect).abs() < 1e-10);
        }
    }
}
