use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::point::euclid;
use crate::transforms::PhaseSpaceMeasure;

/// Largest pruning threshold accepted by [`prune_support`].
pub const MAX_PRUNE_THRESHOLD: f64 = 1e-5;

/// Measure after support reduction, with the data its error certificate needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reduced {
    pub measure: PhaseSpaceMeasure,
    /// Mass removed before renormalization.
    pub dropped_mass: f64,
    /// Diameter of the original support.
    pub diameter: f64,
    /// Largest distance an atom was moved by aggregation.
    pub aggregation_radius: f64,
}

impl Reduced {
    fn identity(measure: &PhaseSpaceMeasure) -> Self {
        Self { measure: measure.clone(), dropped_mass: 0.0, diameter: diameter(measure), aggregation_radius: 0.0 }
    }

    /// Additive bound on the change of any `W_p` distance: `δm^{1/p}·diam + r_agg`.
    pub fn certificate(&self, p: f64) -> f64 {
        self.dropped_mass.powf(1.0 / p) * self.diameter + self.aggregation_radius
    }
}

/// Largest pairwise distance of the support (bounding-box diagonal for large supports).
pub fn diameter(measure: &PhaseSpaceMeasure) -> f64 {
    let n = measure.len();
    if n <= 2000 {
        let mut best: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                best = best.max(euclid(measure.point(i), measure.point(j)));
            }
        }
        return best;
    }
    let w = 2 * measure.dim();
    let mut lo = vec![f64::INFINITY; w];
    let mut hi = vec![f64::NEG_INFINITY; w];
    for i in 0..n {
        for (c, v) in measure.point(i).iter().enumerate() {
            lo[c] = lo[c].min(*v);
            hi[c] = hi[c].max(*v);
        }
    }
    euclid(&lo, &hi)
}

/// Drops atoms lighter than `threshold` and renormalizes.
pub fn prune_support(measure: &PhaseSpaceMeasure, threshold: f64) -> Result<Reduced> {
    if measure.is_signed() {
        return Err(Error::SignedMeasure);
    }
    if threshold <= 0.0 {
        return Ok(Reduced::identity(measure));
    }
    let masses = measure.masses();
    if masses.iter().all(|&m| m < threshold) {
        return Err(Error::EmptyMeasure);
    }
    if threshold > MAX_PRUNE_THRESHOLD {
        return Err(Error::InvalidInput(format!("pruning threshold {threshold:e} exceeds {MAX_PRUNE_THRESHOLD:e}")));
    }
    let total = measure.total_mass();
    let kept = measure.filter(|i| masses[i] >= threshold);
    let dropped_mass = (total - kept.total_mass()).max(0.0) / total;
    let scaled = PhaseSpaceMeasure::from_flat(
        kept.dim(),
        kept.hbar(),
        kept.points().to_vec(),
        kept.masses().iter().map(|m| m * total / kept.total_mass()).collect(),
    )?;
    Ok(Reduced { measure: scaled, dropped_mass, diameter: diameter(measure), aggregation_radius: 0.0 })
}

/// Systematic thinning to at most `max_atoms`: every `s`-th atom is kept and the others
/// hand their mass to the nearest kept atom.
pub fn thin_support(measure: &PhaseSpaceMeasure, max_atoms: usize) -> Result<Reduced> {
    if measure.is_signed() {
        return Err(Error::SignedMeasure);
    }
    let n = measure.len();
    if n <= max_atoms {
        return Ok(Reduced::identity(measure));
    }
    if max_atoms == 0 {
        return Err(Error::EmptyMeasure);
    }
    let stride = n.div_ceil(max_atoms);
    let kept: Vec<usize> = (0..n).step_by(stride).collect();
    let mut masses = vec![0.0; kept.len()];
    let mut radius: f64 = 0.0;
    for i in 0..n {
        let z = measure.point(i);
        let (best, dist) = kept
            .iter()
            .enumerate()
            .map(|(k, &j)| (k, euclid(z, measure.point(j))))
            .fold((0, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
        masses[best] += measure.masses()[i];
        radius = radius.max(dist);
    }
    let w = 2 * measure.dim();
    let points = kept.iter().flat_map(|&j| measure.points()[j * w..(j + 1) * w].to_vec()).collect();
    Ok(Reduced {
        measure: PhaseSpaceMeasure::from_flat(measure.dim(), measure.hbar(), points, masses)?,
        dropped_mass: 0.0,
        diameter: diameter(measure),
        aggregation_radius: radius,
    })
}
