use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::monomial::{apply_factor, apply_word_unchecked, MonomialIndex};
use crate::error::{Error, Result};
use crate::phase::grid::BOUNDARY_LIMIT;
use crate::phase::state::{boundary_mass, norm_sq};
use crate::phase::{PhasePoint, PhaseSpaceGrid, QuantumState};

/// How monomial norms are combined into one number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SobolevForm {
    /// `(Σ_j ‖(α̂_j − α_j)ψ‖²)^{1/2}`; mixtures take the weighted quadratic mean. Degree 1 only.
    Quadratic,
    /// `Σ_{|J|=k} ‖(α̂ − α)_J ψ‖` over canonical words; mixtures take the weighted sum.
    Sum,
}

impl SobolevForm {
    /// Quadratic for `k = 1`, sum form otherwise.
    pub fn default_for(k: usize) -> Self {
        if k == 1 {
            SobolevForm::Quadratic
        } else {
            SobolevForm::Sum
        }
    }
}

/// Norm of a single wavefunction.
pub fn sobolev_norm_psi(grid: &PhaseSpaceGrid, psi: &[Complex64], k: usize, alpha: &PhasePoint, form: SobolevForm) -> Result<f64> {
    if alpha.dim() != grid.dim() {
        return Err(Error::InvalidInput("center dimension does not match the grid".into()));
    }
    let mass = boundary_mass(grid, psi);
    if mass > BOUNDARY_LIMIT {
        return Err(Error::BoundaryLeak { mass, limit: BOUNDARY_LIMIT });
    }
    match form {
        SobolevForm::Quadratic => {
            if k != 1 {
                return Err(Error::Unsupported("the quadratic form is defined for k = 1".into()));
            }
            let s: f64 = (0..2 * grid.dim())
                .map(|a| norm_sq(grid, &apply_factor(grid, psi, a, alpha.coords()[a])))
                .sum();
            Ok(s.sqrt())
        }
        SobolevForm::Sum => Ok(MonomialIndex::all_canonical(grid.dim(), k)?
            .iter()
            .map(|w| norm_sq(grid, &apply_word_unchecked(grid, psi, w.word(), alpha)).sqrt())
            .sum()),
    }
}

/// `‖ρ‖_{H^k_α}` in the given form.
pub fn sobolev_norm_with(state: &QuantumState, k: usize, alpha: &PhasePoint, form: SobolevForm) -> Result<f64> {
    let grid = state.grid();
    let mut acc = 0.0;
    for b in state.branches() {
        let n = sobolev_norm_psi(grid, &b.psi, k, alpha, form)?;
        acc += match form {
            SobolevForm::Quadratic => b.weight * n * n,
            SobolevForm::Sum => b.weight * n,
        };
    }
    Ok(match form {
        SobolevForm::Quadratic => acc.sqrt(),
        SobolevForm::Sum => acc,
    })
}

/// `‖ρ‖_{H^k_α}` with the quadratic form at `k = 1` and the sum form for `k ≥ 2`.
pub fn sobolev_norm(state: &QuantumState, k: usize, alpha: &PhasePoint) -> Result<f64> {
    sobolev_norm_with(state, k, alpha, SobolevForm::default_for(k))
}

/// One link `‖ψ‖_{H^k} ≥ √ℏ‖ψ‖_{H^{k−1}}` of the uncertainty chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainLink {
    pub k: usize,
    pub norm: f64,
    pub lower: f64,
    pub margin: f64,
    pub holds: bool,
}

/// Chain of sum-form norms for `k = 1..=k_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub form: SobolevForm,
    pub links: Vec<ChainLink>,
    pub holds: bool,
}

/// Checks `‖ρ‖_{H^k_α} ≥ √ℏ‖ρ‖_{H^{k−1}_α}` for `k = 1..=k_max` using the sum form throughout
/// (`H^0` is the trace).
pub fn uncertainty_chain_check(state: &QuantumState, alpha: &PhasePoint, k_max: usize) -> Result<ChainReport> {
    if k_max == 0 || k_max > super::monomial::MAX_DEGREE {
        return Err(Error::Unsupported(format!("k_max = {k_max} must lie in 1..=4")));
    }
    let sqrt_h = state.grid().hbar().sqrt();
    let mut prev = state.trace();
    let mut links = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let norm = sobolev_norm_with(state, k, alpha, SobolevForm::Sum)?;
        let lower = sqrt_h * prev;
        let margin = norm - lower;
        links.push(ChainLink { k, norm, lower, margin, holds: margin >= -1e-10 });
        prev = norm;
    }
    let holds = links.iter().all(|l| l.holds);
    Ok(ChainReport { form: SobolevForm::Sum, links, holds })
}

/// `‖(x̂_a − x_a)ψ‖·‖(p̂_a − p_a)ψ‖` for one axis.
pub fn uncertainty_product(grid: &PhaseSpaceGrid, psi: &[Complex64], alpha: &PhasePoint, axis: usize) -> f64 {
    let d = grid.dim();
    let nx = norm_sq(grid, &apply_factor(grid, psi, axis, alpha.x()[axis])).sqrt();
    let np = norm_sq(grid, &apply_factor(grid, psi, d + axis, alpha.p()[axis])).sqrt();
    nx * np
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::state::{coherent_state, random_low_rank};
    use crate::phase::{PhasePoint, PhaseSpaceGrid};
    use std::f64::consts::PI;

    fn pt(c: &[f64]) -> PhasePoint {
        PhasePoint::new(c.to_vec()).unwrap()
    }

    /// Second moments of `|ψ|²` and `|ψ̂|²` by plain quadrature of the closed-form density.
    fn gaussian_h1_oracle(h: f64, alpha: &[f64], beta: &[f64]) -> f64 {
        let n = 4000;
        let (lo, hi) = (-12.0, 12.0);
        let dx = (hi - lo) / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            let x = lo + (i as f64 + 0.5) * dx;
            let dens_x = (-(x - alpha[0]).powi(2) / h).exp() / (PI * h).sqrt();
            let dens_p = (-(x - alpha[1]).powi(2) / h).exp() / (PI * h).sqrt();
            s += dx * (dens_x * (x - beta[0]).powi(2) + dens_p * (x - beta[1]).powi(2));
        }
        s
    }

    #[test]
    fn coherent_h1_matches_quadrature() {
        let g = PhaseSpaceGrid::new(1, 0.1, -8.0, 8.0, 256).unwrap();
        let a = [0.5, -0.4];
        let s = coherent_state(&g, &pt(&a)).unwrap();
        let at = sobolev_norm(&s, 1, &pt(&a)).unwrap();
        assert!((at * at - gaussian_h1_oracle(0.1, &a, &a)).abs() < 1e-8);
        assert!((at * at - 0.1).abs() < 1e-8);
        let b = [1.0, 0.3];
        let off = sobolev_norm(&s, 1, &pt(&b)).unwrap();
        assert!((off * off - gaussian_h1_oracle(0.1, &a, &b)).abs() < 1e-8);
    }

    #[test]
    fn chain_and_heisenberg() {
        let g = PhaseSpaceGrid::new(1, 0.05, -8.0, 8.0, 512).unwrap();
        let s = random_low_rank(&g, 11, 2, &PhasePoint::origin(1), 1.0).unwrap();
        let r = uncertainty_chain_check(&s, &pt(&[0.2, 0.1]), 4).unwrap();
        assert!(r.holds, "{r:?}");
        for b in s.branches() {
            assert!(uncertainty_product(&g, &b.psi, &pt(&[0.0, 0.0]), 0) >= 0.05 / 2.0 - 1e-10);
        }
    }

    #[test]
    fn squeezed_gaussian_saturates_heisenberg() {
        let h = 0.1;
        let g = PhaseSpaceGrid::new(1, h, -8.0, 8.0, 512).unwrap();
        let width = (h / 4.0).sqrt();
        let psi: Vec<Complex64> = g
            .x_axis(0)
            .iter()
            .map(|x| Complex64::new((-(x * x) / (2.0 * width * width)).exp(), 0.0))
            .collect();
        let s = QuantumState::normalized(g.clone(), vec![(1.0, psi)]).unwrap();
        let prod = uncertainty_product(&g, &s.branches()[0].psi, &PhasePoint::origin(1), 0);
        assert!(prod >= h / 2.0 - 1e-10);
        assert!((prod - h / 2.0).abs() < 1e-8);
    }

    #[test]
    fn phase_and_joint_translation_invariance() {
        let g = PhaseSpaceGrid::new(1, 0.1, -8.0, 8.0, 256).unwrap();
        let s = random_low_rank(&g, 2, 1, &PhasePoint::origin(1), 0.8).unwrap();
        let c = pt(&[0.1, 0.2]);
        let phased = s.map_branches(|p| Ok(p.iter().map(|z| z * Complex64::from_polar(1.0, 0.7)).collect())).unwrap();
        for k in 1..=3 {
            let a = sobolev_norm(&s, k, &c).unwrap();
            assert!((a - sobolev_norm(&phased, k, &c).unwrap()).abs() < 1e-8);
            let v = pt(&[0.6, -0.5]);
            let moved = crate::phase::translate(&s, &v).unwrap();
            assert!((a - sobolev_norm(&moved, k, &(&c + &v)).unwrap()).abs() < 1e-8);
        }
    }
}
