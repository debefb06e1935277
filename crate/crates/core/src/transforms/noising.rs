use super::husimi::{covering_lattice, husimi, max_spacing};
use super::measure::LatticeSpec;
use crate::error::{Error, Result};
use crate::phase::state::{coherent_values, Branch, CENTER_MARGIN, MAX_BRANCHES};
use crate::phase::{PhasePoint, QuantumState};

/// Branches whose Husimi weight falls below this fraction of the total are dropped.
pub const PRUNE_RELATIVE: f64 = 1e-12;

/// Output of [`noising_channel_with`].
#[derive(Clone, Debug)]
pub struct Noised {
    pub state: QuantumState,
    /// Coherent centers and weights of the branches.
    pub atoms: Vec<(PhasePoint, f64)>,
    /// Husimi mass discarded by pruning and by the boundary margin.
    pub dropped_mass: f64,
    pub lattice: LatticeSpec,
}

/// `N[ρ] = ∫ H_ρ(α)|α⟩⟨α| dα` on a covering lattice with spacing `sqrt(ℏ)/2`.
pub fn noising_channel(state: &QuantumState) -> Result<QuantumState> {
    let lattice = covering_lattice(state, max_spacing(state.grid().hbar()))?;
    Ok(noising_channel_with(state, &lattice)?.state)
}

/// Noising channel with branches at the centers of `lattice`, weights `H_ρ(α)·cell`.
pub fn noising_channel_with(state: &QuantumState, lattice: &LatticeSpec) -> Result<Noised> {
    let grid = state.grid();
    let h = husimi(state, lattice)?;
    let total = h.total_mass();
    let margin = CENTER_MARGIN * grid.hbar().sqrt();
    let d = grid.dim();
    let mut atoms = Vec::new();
    let mut dropped = 0.0;
    for (alpha, m) in h.atoms() {
        let inside = (0..d).all(|a| {
            let x = alpha.x()[a];
            x - grid.x_min(a) >= margin && grid.x_max(a) - x >= margin && alpha.p()[a].abs() + margin <= grid.p_max(a)
        });
        if m <= PRUNE_RELATIVE * total || !inside {
            dropped += m;
            continue;
        }
        atoms.push((alpha, m));
    }
    if atoms.len() > MAX_BRANCHES {
        return Err(Error::CapExceeded { what: "noising branches", count: atoms.len(), cap: MAX_BRANCHES });
    }
    let kept: f64 = atoms.iter().map(|a| a.1).sum();
    atoms.iter_mut().for_each(|a| a.1 /= kept);
    let branches = atoms
        .iter()
        .map(|(alpha, w)| Branch { weight: *w, psi: coherent_values(grid, alpha) })
        .collect();
    let state = QuantumState::mixture(grid.clone(), branches)?;
    Ok(Noised { state, atoms, dropped_mass: dropped / total, lattice: lattice.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::state::coherent_state;
    use crate::phase::PhaseSpaceGrid;
    use crate::transforms::husimi::{coherent_mixture_husimi, husimi_values};

    #[test]
    fn noised_ground_state_has_wider_husimi() {
        let h = 0.1;
        let g = PhaseSpaceGrid::new(1, h, -8.0, 8.0, 256).unwrap();
        let s = coherent_state(&g, &PhasePoint::origin(1)).unwrap();
        let n = noising_channel(&s).unwrap();
        assert!((n.trace() - 1.0).abs() < 1e-6);
        let lattice = covering_lattice(&n, max_spacing(h)).unwrap();
        let got = husimi_values(&n, &lattice).unwrap();
        // H_{|0⟩} ∗ γ_ℏ is a centered Gaussian of covariance 2ℏ
        let expect = coherent_mixture_husimi(&[(PhasePoint::origin(1), 1.0)], 2.0 * h, &lattice);
        let err = got.iter().zip(&expect).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
    }
}
