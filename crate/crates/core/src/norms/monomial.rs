use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::NdFft;
use crate::phase::state::boundary_mass;
use crate::phase::grid::BOUNDARY_LIMIT;
use crate::phase::{PhasePoint, PhaseSpaceGrid};

/// Highest monomial degree supported.
pub const MAX_DEGREE: usize = 4;

/// Ordered word `m = (m_1, …, m_k)` over phase-space indices `0..2D`
/// (positions `0..D`, momenta `D..2D`).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MonomialIndex {
    word: Vec<usize>,
    dim: usize,
}

impl MonomialIndex {
    pub fn new(dim: usize, word: Vec<usize>) -> Result<Self> {
        if word.len() > MAX_DEGREE {
            return Err(Error::Unsupported(format!("monomial degree {} exceeds {MAX_DEGREE}", word.len())));
        }
        if let Some(bad) = word.iter().find(|a| **a >= 2 * dim) {
            return Err(Error::InvalidInput(format!("index {bad} outside 0..{}", 2 * dim)));
        }
        Ok(Self { word, dim })
    }

    pub fn word(&self) -> &[usize] {
        &self.word
    }

    pub fn degree(&self) -> usize {
        self.word.len()
    }

    /// Sorted copy: positions before momenta, ascending axis within each block.
    pub fn canonical(&self) -> Self {
        let mut word = self.word.clone();
        word.sort_unstable();
        Self { word, dim: self.dim }
    }

    /// Every canonical word of degree `k`, one per multi-index.
    pub fn all_canonical(dim: usize, k: usize) -> Result<Vec<Self>> {
        if k > MAX_DEGREE {
            return Err(Error::Unsupported(format!("monomial degree {k} exceeds {MAX_DEGREE}")));
        }
        let mut out: Vec<Vec<usize>> = vec![Vec::new()];
        for _ in 0..k {
            out = out
                .into_iter()
                .flat_map(|w| {
                    let start = w.last().copied().unwrap_or(0);
                    (start..2 * dim).map(move |a| {
                        let mut v = w.clone();
                        v.push(a);
                        v
                    })
                })
                .collect();
        }
        Ok(out.into_iter().map(|word| Self { word, dim }).collect())
    }
}

/// `(α̂_a − c)ψ` for a single phase-space index `a`.
pub fn apply_factor(grid: &PhaseSpaceGrid, psi: &[Complex64], index: usize, center: f64) -> Vec<Complex64> {
    let d = grid.dim();
    if index < d {
        psi.iter()
            .enumerate()
            .map(|(flat, z)| z * (grid.position(flat)[index] - center))
            .collect()
    } else {
        let axis = index - d;
        let plan = NdFft::cube(grid.n_x(), d);
        let mut spec = psi.to_vec();
        plan.forward(&mut spec);
        for (flat, z) in spec.iter_mut().enumerate() {
            *z *= grid.momentum(flat)[axis] - center;
        }
        plan.inverse(&mut spec);
        spec
    }
}

/// `(α̂_{m_1} − α_{m_1})⋯(α̂_{m_k} − α_{m_k})ψ`; the rightmost factor acts first.
pub fn apply_centered_monomial(
    grid: &PhaseSpaceGrid,
    psi: &[Complex64],
    word: &MonomialIndex,
    alpha: &PhasePoint,
) -> Result<Vec<Complex64>> {
    if alpha.dim() != grid.dim() || word.dim != grid.dim() {
        return Err(Error::InvalidInput("dimension mismatch between grid, word and center".into()));
    }
    let mass = boundary_mass(grid, psi);
    if mass > BOUNDARY_LIMIT {
        return Err(Error::BoundaryLeak { mass, limit: BOUNDARY_LIMIT });
    }
    Ok(apply_word_unchecked(grid, psi, word.word(), alpha))
}

pub(crate) fn apply_word_unchecked(grid: &PhaseSpaceGrid, psi: &[Complex64], word: &[usize], alpha: &PhasePoint) -> Vec<Complex64> {
    let mut out = psi.to_vec();
    for &a in word.iter().rev() {
        out = apply_factor(grid, &out, a, alpha.coords()[a]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::state::{coherent_values, inner};

    fn grid() -> PhaseSpaceGrid {
        PhaseSpaceGrid::new(1, 0.1, -8.0, 8.0, 256).unwrap()
    }

    #[test]
    fn position_factor_is_multiplication() {
        let g = grid();
        let psi = coherent_values(&g, &PhasePoint::origin(1));
        let w = MonomialIndex::new(1, vec![0]).unwrap();
        let out = apply_centered_monomial(&g, &psi, &w, &PhasePoint::origin(1)).unwrap();
        for (j, (o, z)) in out.iter().zip(&psi).enumerate() {
            assert_eq!(*o, z * g.x_axis(0)[j]);
        }
    }

    #[test]
    fn canonical_commutator() {
        let g = grid();
        let a = PhasePoint::new(vec![0.4, -0.3]).unwrap();
        let psi = coherent_values(&g, &PhasePoint::new(vec![0.5, 0.2]).unwrap());
        let xp = apply_centered_monomial(&g, &psi, &MonomialIndex::new(1, vec![0, 1]).unwrap(), &a).unwrap();
        let px = apply_centered_monomial(&g, &psi, &MonomialIndex::new(1, vec![1, 0]).unwrap(), &a).unwrap();
        let err = xp
            .iter()
            .zip(&px)
            .zip(&psi)
            .map(|((u, v), z)| (u - v - Complex64::new(0.0, 0.1) * z).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn momentum_moments_of_coherent_state() {
        let g = grid();
        let alpha = PhasePoint::new(vec![0.3, 0.8]).unwrap();
        let psi = coherent_values(&g, &alpha);
        let p_psi = apply_factor(&g, &psi, 1, 0.0);
        assert!((inner(&g, &psi, &p_psi).re - 0.8).abs() < 1e-10);
        let pp = apply_factor(&g, &p_psi, 1, 0.0);
        assert!((inner(&g, &psi, &pp).re - (0.64 + 0.05)).abs() < 1e-10);
    }

    #[test]
    fn canonical_words_count_multi_indices() {
        assert_eq!(MonomialIndex::all_canonical(1, 2).unwrap().len(), 3);
        assert_eq!(MonomialIndex::all_canonical(2, 2).unwrap().len(), 10);
        assert!(MonomialIndex::new(1, vec![0; 5]).is_err());
        assert_eq!(MonomialIndex::new(1, vec![1, 0]).unwrap().canonical().word(), &[0, 1]);
    }
}
