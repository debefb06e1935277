use serde::{Deserialize, Serialize};

use super::husimi::husimi_values;
use super::measure::LatticeSpec;
use super::noising::noising_channel;
use super::wigner::{gaussian_smooth, wigner_density};
use crate::error::Result;
use crate::phase::QuantumState;

/// Kernel variances (in units of ℏ) written next to the two convolution identities.
pub const DISPLAYED_VARIANCES: [f64; 2] = [1.0, 2.0];
const CANDIDATES: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

/// Outcome of measuring which Gaussian kernels the defining integrals satisfy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConventionReport {
    /// Measured `Var(H) − Var(W)` per coordinate, divided by ℏ.
    pub husimi_variance: f64,
    /// Measured `Var(W_{N[ρ]}) − Var(W_ρ)` per coordinate, divided by ℏ.
    pub noising_variance: f64,
    /// Kernel variances (units of ℏ) selected from the measurement.
    pub resolved: [f64; 2],
    pub displayed: [f64; 2],
    /// Sup-norm errors of `H − W ∗ γ` and `W_{N[ρ]} − W ∗ γ` with the resolved kernels.
    pub resolved_errors: [f64; 2],
    /// The same errors with the displayed kernels.
    pub displayed_errors: [f64; 2],
    pub matches_displayed: bool,
}

fn second_moments(dens: &[f64], lattice: &LatticeSpec) -> Vec<f64> {
    let dims = lattice.origin.len();
    let mut m0 = 0.0;
    let mut m1 = vec![0.0; dims];
    let mut m2 = vec![0.0; dims];
    for (i, v) in dens.iter().enumerate() {
        let z = lattice.point(i);
        m0 += v;
        for c in 0..dims {
            m1[c] += v * z[c];
            m2[c] += v * z[c] * z[c];
        }
    }
    (0..dims).map(|c| m2[c] / m0 - (m1[c] / m0).powi(2)).collect()
}

fn nearest(measured: f64) -> f64 {
    CANDIDATES
        .iter()
        .cloned()
        .min_by(|a, b| (measured / a).ln().abs().total_cmp(&(measured / b).ln().abs()))
        .expect("candidates")
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

/// Measures the kernel variances relating Wigner, Husimi and noised Wigner functions of
/// `state` (D = 1), snaps them to the nearest of `{ℏ/4, ℏ/2, ℏ, 2ℏ, 4ℏ}` and reports the
/// sup-norm residuals of both identities under the measured and the displayed kernels.
pub fn resolve_conventions(state: &QuantumState) -> Result<ConventionReport> {
    let h = state.grid().hbar();
    let (lattice, w) = wigner_density(state)?;
    let hus = husimi_values(state, &lattice)?;
    let noised = noising_channel(state)?;
    let (_, wn) = wigner_density(&noised)?;

    let vw = second_moments(&w, &lattice);
    let vh = second_moments(&hus, &lattice);
    let vn = second_moments(&wn, &lattice);
    let dims = vw.len() as f64;
    let husimi_variance = vh.iter().zip(&vw).map(|(a, b)| a - b).sum::<f64>() / dims / h;
    let noising_variance = vn.iter().zip(&vw).map(|(a, b)| a - b).sum::<f64>() / dims / h;
    let resolved = [nearest(husimi_variance), nearest(noising_variance)];

    let errors = |v: [f64; 2]| {
        [
            sup_diff(&hus, &gaussian_smooth(&w, &lattice, v[0] * h)),
            sup_diff(&wn, &gaussian_smooth(&w, &lattice, v[1] * h)),
        ]
    };
    Ok(ConventionReport {
        husimi_variance,
        noising_variance,
        resolved,
        displayed: DISPLAYED_VARIANCES,
        resolved_errors: errors(resolved),
        displayed_errors: errors(DISPLAYED_VARIANCES),
        matches_displayed: resolved == DISPLAYED_VARIANCES,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::state::coherent_state;
    use crate::phase::{PhasePoint, PhaseSpaceGrid};

    #[test]
    fn coherent_state_conventions() {
        let g = PhaseSpaceGrid::new(1, 0.1, -8.0, 8.0, 256).unwrap();
        let s = coherent_state(&g, &PhasePoint::new(vec![0.4, -0.2]).unwrap()).unwrap();
        let r = resolve_conventions(&s).unwrap();
        assert!((r.husimi_variance - 0.5).abs() < 1e-6, "{r:?}");
        assert!((r.noising_variance - 1.0).abs() < 1e-6, "{r:?}");
        assert_eq!(r.resolved, [0.5, 1.0]);
        assert!(r.resolved_errors[0] < 1e-8 && r.resolved_errors[1] < 1e-8, "{r:?}");
        assert!(r.displayed_errors[0] > 1e-2);
    }
}
