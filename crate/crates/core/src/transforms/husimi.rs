use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use super::measure::{LatticeSpec, PhaseSpaceMeasure};
use crate::error::{Error, Result};
use crate::fft::NdFft;
use crate::phase::{PhasePoint, PhaseSpaceGrid, QuantumState};

/// Allowed deviation of the Husimi quadrature mass from the trace.
pub const COVERAGE_TOL: f64 = 1e-6;
/// Coherent-state kernels are cut where `exp(−r²/(2ℏ))` drops below `exp(−40)`.
const WINDOW_SIGMAS: f64 = 9.0;
/// Marginal tail mass ignored when sizing a covering lattice.
const MARGINAL_TAIL: f64 = 1e-13;
/// Padding of covering lattices in units of `sqrt(ℏ)`.
const PAD_SQRT_HBAR: f64 = 7.0;

/// Largest lattice spacing accepted for Husimi sampling, `sqrt(ℏ)/2`.
pub fn max_spacing(hbar: f64) -> f64 {
    0.5 * hbar.sqrt()
}

/// Default center-lattice spacing, `sqrt(ℏ)/4`.
pub fn default_spacing(hbar: f64) -> f64 {
    0.25 * hbar.sqrt()
}

pub(crate) fn check_spacing(lattice: &LatticeSpec, hbar: f64) -> Result<()> {
    let limit = max_spacing(hbar);
    for (c, h) in lattice.spacing.iter().enumerate() {
        if *h > limit * (1.0 + 1e-12) {
            return Err(Error::LatticeTooCoarse { axis: c, spacing: *h, limit });
        }
    }
    Ok(())
}

fn tail_range(values: &[f64], coords: &[f64]) -> (f64, f64) {
    let total: f64 = values.iter().sum();
    let mut acc = 0.0;
    let mut lo = 0;
    for (i, v) in values.iter().enumerate() {
        acc += v;
        if acc > MARGINAL_TAIL * total {
            lo = i;
            break;
        }
    }
    acc = 0.0;
    let mut hi = values.len() - 1;
    for (i, v) in values.iter().enumerate().rev() {
        acc += v;
        if acc > MARGINAL_TAIL * total {
            hi = i;
            break;
        }
    }
    (coords[lo], coords[hi])
}

/// Lattice with the given spacing covering the phase-space support of `state`:
/// marginal supports of `|ψ|²` and `|ψ̂|²` padded by `7·sqrt(ℏ)`, anchored at the origin.
pub fn covering_lattice(state: &QuantumState, spacing: f64) -> Result<LatticeSpec> {
    let grid = state.grid();
    let d = grid.dim();
    let n = grid.n_x();
    let pad = PAD_SQRT_HBAR * grid.hbar().sqrt();
    let plan = NdFft::cube(n, d);
    let mut x_marg = vec![vec![0.0; n]; d];
    let mut p_marg = vec![vec![0.0; n]; d];
    for b in state.branches() {
        let mut spec = b.psi.clone();
        plan.forward(&mut spec);
        for flat in 0..b.psi.len() {
            let idx = grid.unflatten(flat);
            for a in 0..d {
                x_marg[a][idx[a]] += b.weight * b.psi[flat].norm_sqr();
                // FFT bin k maps to ascending index (k + n/2) mod n
                p_marg[a][(idx[a] + n / 2) % n] += b.weight * spec[flat].norm_sqr();
            }
        }
    }
    let mut lo = vec![0.0; 2 * d];
    let mut hi = vec![0.0; 2 * d];
    for a in 0..d {
        let (l, h) = tail_range(&x_marg[a], &grid.x_axis(a));
        lo[a] = l - pad;
        hi[a] = h + pad;
        let (l, h) = tail_range(&p_marg[a], &grid.p_axis(a));
        lo[d + a] = l - pad;
        hi[d + a] = h + pad;
    }
    LatticeSpec::covering(&lo, &hi, &vec![spacing; 2 * d], &vec![0.0; 2 * d])
}

struct AxisTables {
    /// `exp(−i p_k x_j/ℏ)` for lattice momenta `k` and all grid points `j`.
    phases: Vec<Vec<Complex64>>,
    xs: Vec<f64>,
}

fn axis_tables(grid: &PhaseSpaceGrid, lattice: &LatticeSpec, axis: usize) -> AxisTables {
    let d = grid.dim();
    let xs = grid.x_axis(axis);
    let phases = lattice
        .axis(d + axis)
        .iter()
        .map(|p| xs.iter().map(|x| Complex64::from_polar(1.0, -p * x / grid.hbar())).collect())
        .collect();
    AxisTables { phases, xs }
}

fn window(xs: &[f64], center: f64, half: f64) -> (usize, usize, Vec<f64>, f64) {
    let lo = xs.partition_point(|x| *x < center - half);
    let hi = xs.partition_point(|x| *x <= center + half);
    let h2 = half / WINDOW_SIGMAS;
    let g = xs[lo..hi].iter().map(|x| (-(x - center).powi(2) / (2.0 * h2 * h2)).exp()).collect();
    (lo, hi, g, h2)
}

/// Husimi densities `(2πℏ)^{−D} Σ_b w_b |⟨α|ψ_b⟩|²` on every lattice center, without checks.
pub fn husimi_values(state: &QuantumState, lattice: &LatticeSpec) -> Result<Vec<f64>> {
    let grid = state.grid();
    let d = grid.dim();
    if lattice.dim() != d {
        return Err(Error::InvalidInput("lattice dimension does not match the state".into()));
    }
    let h = grid.hbar();
    let half = WINDOW_SIGMAS * h.sqrt();
    let tables: Vec<AxisTables> = (0..d).map(|a| axis_tables(grid, lattice, a)).collect();
    let n = grid.n_x();
    let norm = (PI * h).powf(-0.25 * d as f64) * grid.cell_volume();
    let pref = (2.0 * PI * h).powi(-(d as i32)) * norm * norm;
    let x_axes: Vec<Vec<f64>> = (0..d).map(|a| lattice.axis(a)).collect();
    let x_count: usize = lattice.counts[..d].iter().product();
    let p_count: usize = lattice.counts[d..].iter().product();

    let blocks: Vec<Vec<f64>> = (0..x_count)
        .into_par_iter()
        .map(|bx| {
            let mut out = vec![0.0; p_count];
            let ax: Vec<f64> = match d {
                1 => vec![x_axes[0][bx]],
                _ => vec![x_axes[0][bx / lattice.counts[1]], x_axes[1][bx % lattice.counts[1]]],
            };
            let wins: Vec<_> = (0..d).map(|a| window(&tables[a].xs, ax[a], half)).collect();
            if wins.iter().any(|w| w.0 >= w.1) {
                return out;
            }
            for b in state.branches() {
                match d {
                    1 => {
                        let (lo, hi, g, _) = &wins[0];
                        let f: Vec<Complex64> = (*lo..*hi).map(|j| b.psi[j] * g[j - lo]).collect();
                        for (k, ph) in tables[0].phases.iter().enumerate() {
                            let s: Complex64 = f.iter().zip(&ph[*lo..*hi]).map(|(u, v)| u * v).sum();
                            out[k] += b.weight * s.norm_sqr();
                        }
                    }
                    _ => {
                        let (lo1, hi1, g1, _) = &wins[0];
                        let (lo2, hi2, g2, _) = &wins[1];
                        let w2 = hi2 - lo2;
                        let mut f = vec![Complex64::new(0.0, 0.0); (hi1 - lo1) * w2];
                        for j1 in *lo1..*hi1 {
                            for j2 in *lo2..*hi2 {
                                f[(j1 - lo1) * w2 + (j2 - lo2)] = b.psi[j1 * n + j2] * g1[j1 - lo1] * g2[j2 - lo2];
                            }
                        }
                        let np2 = lattice.counts[d + 1];
                        for (k1, ph1) in tables[0].phases.iter().enumerate() {
                            let mut t = vec![Complex64::new(0.0, 0.0); w2];
                            for j1 in *lo1..*hi1 {
                                let e = ph1[j1];
                                let row = &f[(j1 - lo1) * w2..(j1 - lo1 + 1) * w2];
                                t.iter_mut().zip(row).for_each(|(acc, v)| *acc += e * v);
                            }
                            for (k2, ph2) in tables[1].phases.iter().enumerate() {
                                let s: Complex64 = t.iter().zip(&ph2[*lo2..*hi2]).map(|(u, v)| u * v).sum();
                                out[k1 * np2 + k2] += b.weight * s.norm_sqr();
                            }
                        }
                    }
                }
            }
            out.iter_mut().for_each(|v| *v *= pref);
            out
        })
        .collect();
    Ok(blocks.concat())
}

/// Husimi function `H_ρ(α) = (2πℏ)^{−D}⟨α|ρ|α⟩` sampled on `lattice`, as a measure
/// with masses `H_ρ(α)·cell volume`.
///
/// Fails when the spacing exceeds `sqrt(ℏ)/2` or the quadrature mass misses the trace by
/// more than `1e-6`.
pub fn husimi(state: &QuantumState, lattice: &LatticeSpec) -> Result<PhaseSpaceMeasure> {
    check_spacing(lattice, state.grid().hbar())?;
    let dens = husimi_values(state, lattice)?;
    let vol = lattice.cell_volume();
    let masses: Vec<f64> = dens.iter().map(|v| v * vol).collect();
    let mass: f64 = masses.iter().sum();
    if (mass - state.trace()).abs() > COVERAGE_TOL {
        return Err(Error::Coverage { mass });
    }
    PhaseSpaceMeasure::on_lattice(lattice.clone(), state.grid().hbar(), masses, false)
}

/// Husimi function on a covering lattice with the given spacing.
pub fn husimi_auto(state: &QuantumState, spacing: f64) -> Result<PhaseSpaceMeasure> {
    let lattice = covering_lattice(state, spacing)?;
    husimi(state, &lattice)
}

/// `H_ρ(α)` at a single point.
pub fn husimi_at(state: &QuantumState, alpha: &PhasePoint) -> Result<f64> {
    let d = state.grid().dim();
    let lattice = LatticeSpec::new(alpha.coords().to_vec(), vec![1.0; 2 * d], vec![1; 2 * d])?;
    Ok(husimi_values(state, &lattice)?[0])
}

/// Closed-form Husimi densities of `Σ w_i |α_i⟩⟨α_i|`:
/// `(2πℏ)^{−D} Σ w_i exp(−|β − α_i|²/(2ℏ))`.
pub fn coherent_mixture_husimi(atoms: &[(PhasePoint, f64)], hbar: f64, lattice: &LatticeSpec) -> Vec<f64> {
    let d = lattice.dim();
    let pref = (2.0 * PI * hbar).powi(-(d as i32));
    (0..lattice.len())
        .into_par_iter()
        .map(|i| {
            let beta = lattice.point(i);
            pref * atoms
                .iter()
                .map(|(a, w)| {
                    let r2: f64 = a.coords().iter().zip(&beta).map(|(u, v)| (u - v).powi(2)).sum();
                    w * (-r2 / (2.0 * hbar)).exp()
                })
                .sum::<f64>()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::state::{cat_state, coherent_state, gaussian_atoms, mix_coherent, random_low_rank};

    fn pt(c: &[f64]) -> PhasePoint {
        PhasePoint::new(c.to_vec()).unwrap()
    }

    #[test]
    fn coherent_peak_and_mass() {
        let g = PhaseSpaceGrid::new(1, 0.1, -8.0, 8.0, 256).unwrap();
        let a = pt(&[0.7, -0.3]);
        let s = coherent_state(&g, &a).unwrap();
        let peak = husimi_at(&s, &a).unwrap();
        assert!((peak - 1.0 / (2.0 * PI * 0.1)).abs() < 1e-10);
        let h = husimi_auto(&s, max_spacing(0.1)).unwrap();
        assert!((h.total_mass() - 1.0).abs() < 1e-6);
        assert!(h.masses().iter().all(|m| *m >= 0.0));
        // closed form on the same lattice
        let lattice = h.lattice().unwrap();
        let exact = coherent_mixture_husimi(&[(a, 1.0)], 0.1, lattice);
        let err = h.density().unwrap().iter().zip(&exact).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn mixture_linearity() {
        let g = PhaseSpaceGrid::new(1, 0.1, -8.0, 8.0, 256).unwrap();
        let atoms = gaussian_atoms(&pt(&[0.0, 0.0]), &[0.4, 0.4], 3).unwrap();
        let mix = mix_coherent(&g, &atoms).unwrap();
        let lattice = covering_lattice(&mix, max_spacing(0.1)).unwrap();
        let h = husimi_values(&mix, &lattice).unwrap();
        let mut sum = vec![0.0; lattice.len()];
        for (a, w) in &atoms {
            let hb = husimi_values(&coherent_state(&g, a).unwrap(), &lattice).unwrap();
            sum.iter_mut().zip(&hb).for_each(|(s, v)| *s += w * v);
        }
        let err = h.iter().zip(&sum).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn cat_and_random_states_are_normalized() {
        let g = PhaseSpaceGrid::new(1, 0.05, -8.0, 8.0, 512).unwrap();
        let cat = cat_state(&g, &pt(&[-1.0, 0.0]), &pt(&[1.0, 0.0])).unwrap();
        assert!((husimi_auto(&cat, max_spacing(0.05)).unwrap().total_mass() - 1.0).abs() < 1e-6);
        let r = random_low_rank(&g, 4, 3, &PhasePoint::origin(1), 1.0).unwrap();
        assert!((husimi_auto(&r, max_spacing(0.05)).unwrap().total_mass() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_coarse_or_short_lattices() {
        let g = PhaseSpaceGrid::new(1, 0.1, -8.0, 8.0, 256).unwrap();
        let s = coherent_state(&g, &PhasePoint::origin(1)).unwrap();
        let coarse = LatticeSpec::new(vec![-2.0, -2.0], vec![0.3, 0.3], vec![14, 14]).unwrap();
        assert!(matches!(husimi(&s, &coarse), Err(Error::LatticeTooCoarse { .. })));
        let short = LatticeSpec::new(vec![0.0, -2.0], vec![0.1, 0.1], vec![20, 40]).unwrap();
        assert!(matches!(husimi(&s, &short), Err(Error::Coverage { .. })));
    }

    #[test]
    fn two_dimensional_coherent_state() {
        let g = PhaseSpaceGrid::new(2, 0.1, -6.0, 6.0, 128).unwrap();
        let a = pt(&[0.5, -0.2, 0.1, 0.3]);
        let s = coherent_state(&g, &a).unwrap();
        let h = husimi_auto(&s, max_spacing(0.1)).unwrap();
        assert!((h.total_mass() - 1.0).abs() < 1e-6);
        let peak = husimi_at(&s, &a).unwrap();
        assert!((peak - (2.0 * PI * 0.1f64).powi(-2)).abs() < 1e-8);
    }
}
