use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sobolev::{sobolev_norm_psi, SobolevForm};
use crate::error::{Error, Result};
use crate::phase::state::{coherent_values, inner};
use crate::phase::PhasePoint;
use crate::transforms::{LatticeSpec, OperatorMatrix};

/// Largest degree accepted by [`z_norm`].
pub const Z_MAX_DEGREE: usize = 3;
const POWER_TOL: f64 = 1e-8;
const POWER_CAP: usize = 200_000;

/// Value of a `Z^k` norm together with the maximizing center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZNorm {
    pub k: usize,
    pub form: SobolevForm,
    pub value: f64,
    pub argmax: Vec<f64>,
    pub centers: usize,
}

/// `sup_α ‖W|α⟩‖_{H^k_α}` over the lattice centers, in the default form for `k`.
pub fn z_norm(w: &OperatorMatrix, k: usize, lattice: &LatticeSpec) -> Result<f64> {
    Ok(z_norm_with(w, k, lattice, SobolevForm::default_for(k))?.value)
}

/// [`z_norm`] with an explicit form; `k = 0` gives `sup_α ‖W|α⟩‖`.
pub fn z_norm_with(w: &OperatorMatrix, k: usize, lattice: &LatticeSpec, form: SobolevForm) -> Result<ZNorm> {
    if k > Z_MAX_DEGREE {
        return Err(Error::Unsupported(format!("Z^k norms are capped at k = {Z_MAX_DEGREE}")));
    }
    let grid = w.grid();
    if lattice.dim() != grid.dim() {
        return Err(Error::InvalidInput("lattice dimension does not match the grid".into()));
    }
    let values = (0..lattice.len())
        .into_par_iter()
        .map(|i| {
            let alpha = PhasePoint::new(lattice.point(i))?;
            crate::phase::state::coherent_state(grid, &alpha)?;
            let image = w.apply(&coherent_values(grid, &alpha));
            if k == 0 {
                Ok(crate::phase::state::norm_sq(grid, &image).sqrt())
            } else {
                sobolev_norm_psi(grid, &image, k, &alpha, form)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let (best, value) = values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    Ok(ZNorm { k, form, value, argmax: lattice.point(best), centers: values.len() })
}

/// `⟨α|W|β⟩` with normalized coherent states.
pub fn coherent_matrix_element(w: &OperatorMatrix, alpha: &PhasePoint, beta: &PhasePoint) -> Complex64 {
    let grid = w.grid();
    inner(grid, &coherent_values(grid, alpha), &w.apply(&coherent_values(grid, beta)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecaySample {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub distance: f64,
    pub element: f64,
    pub ratio: f64,
}

/// Off-diagonal decay measurement `|⟨α|W|β⟩|·|α−β|^k / ‖W‖_{Z^k}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub k: usize,
    pub z_norm: f64,
    pub max_ratio: f64,
    pub samples: Vec<DecaySample>,
}

/// Records the decay ratio on every sampled pair; `‖W‖_{Z^k}` is taken over `z_lattice`.
pub fn offdiagonal_decay_check(
    w: &OperatorMatrix,
    k: usize,
    pairs: &[(PhasePoint, PhasePoint)],
    z_lattice: &LatticeSpec,
) -> Result<DecayReport> {
    let z = z_norm(w, k, z_lattice)?;
    let samples: Vec<DecaySample> = pairs
        .par_iter()
        .map(|(a, b)| {
            let element = coherent_matrix_element(w, a, b).norm();
            let distance = a.distance(b);
            DecaySample {
                alpha: a.coords().to_vec(),
                beta: b.coords().to_vec(),
                distance,
                element,
                ratio: element * distance.powi(k as i32) / z,
            }
        })
        .collect();
    let max_ratio = samples.iter().map(|s| s.ratio).fold(0.0, f64::max);
    Ok(DecayReport { k, z_norm: z, max_ratio, samples })
}

/// Seeded pairs around `center` whose separations range over `[lo, hi]·√ℏ`.
pub fn decay_pairs(center: &PhasePoint, hbar: f64, n: usize, lo: f64, hi: f64, seed: u64) -> Result<Vec<(PhasePoint, PhasePoint)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = center.coords().len();
    let s = hbar.sqrt();
    (0..n)
        .map(|i| {
            let r = s * (lo + (hi - lo) * (i as f64 + 0.5) / n as f64);
            let dir: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect();
            let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            let shift: Vec<f64> = (0..dim).map(|_| s * (rng.gen::<f64>() - 0.5)).collect();
            let a: Vec<f64> = center.coords().iter().zip(&shift).map(|(c, t)| c + t).collect();
            let b: Vec<f64> = a.iter().zip(&dir).map(|(v, u)| v + r * u / len).collect();
            Ok((PhasePoint::new(a)?, PhasePoint::new(b)?))
        })
        .collect()
}

/// Spectral norm by power iteration on `A†A`, stopped once the eigen-residual falls
/// below `1e-8` relative.
pub fn operator_norm(a: &OperatorMatrix) -> Result<f64> {
    let m = a.entries();
    let n = m.ncols();
    if n == 0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v = DVector::from_fn(n, |_, _| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
    v /= Complex64::new(v.norm(), 0.0);
    let adj = m.adjoint();
    for _ in 0..POWER_CAP {
        let av = m * &v;
        let w = &adj * &av;
        let lambda = av.norm_squared();
        let wn = w.norm();
        if wn == 0.0 {
            return Ok(0.0);
        }
        let residual = (&w - &v * Complex64::new(lambda, 0.0)).norm();
        if residual <= POWER_TOL * lambda {
            return Ok(lambda.sqrt());
        }
        v = w / Complex64::new(wn, 0.0);
    }
    Err(Error::NonConvergence("power iteration"))
}

/// One named check in a JSON report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub inputs: serde_json::Value,
    pub measured: f64,
    pub bound: f64,
    /// `bound − measured`; nonnegative when the check passes.
    pub margin: f64,
    pub pass: bool,
}

impl CheckRecord {
    /// Upper-bound check `measured ≤ bound`.
    pub fn upper(name: &str, inputs: serde_json::Value, measured: f64, bound: f64) -> Self {
        Self { name: name.into(), inputs, measured, bound, margin: bound - measured, pass: measured <= bound }
    }

    /// Lower-bound check `measured ≥ bound`.
    pub fn lower(name: &str, inputs: serde_json::Value, measured: f64, bound: f64) -> Self {
        Self { name: name.into(), inputs, measured, bound, margin: measured - bound, pass: measured >= bound }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::state::coherent_overlap;
    use crate::phase::PhaseSpaceGrid;
    use crate::transforms::OperatorMatrix;
    use nalgebra::DMatrix;

    fn grid(h: f64) -> PhaseSpaceGrid {
        PhaseSpaceGrid::new(1, h, -6.0, 6.0, 256).unwrap()
    }

    fn lattice(h: f64) -> LatticeSpec {
        let s = h.sqrt();
        LatticeSpec::covering(&[-1.0, -1.0], &[1.0, 1.0], &[s, s], &[0.0, 0.0]).unwrap()
    }

    fn shift_operator(g: &PhaseSpaceGrid, gamma: &PhasePoint) -> OperatorMatrix {
        let n = g.len();
        let mut m = DMatrix::<Complex64>::zeros(n, n);
        for j in 0..n {
            let mut e = vec![Complex64::new(0.0, 0.0); n];
            e[j] = Complex64::new(1.0, 0.0);
            let col = crate::phase::state::translate_values(g, &e, gamma);
            m.set_column(j, &DVector::from_vec(col));
        }
        OperatorMatrix::new(g.clone(), m).unwrap()
    }

    #[test]
    fn identity_z_norm() {
        let h = 0.1;
        let g = grid(h);
        let id = OperatorMatrix::identity(&g);
        let z1 = z_norm(&id, 1, &lattice(h)).unwrap();
        assert!((z1 - h.sqrt()).abs() < 1e-8, "{z1}");
        let z0 = z_norm_with(&id, 0, &lattice(h), SobolevForm::Sum).unwrap().value;
        assert!((z0 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn translation_z_norm_and_chain() {
        let h = 0.1;
        let g = grid(h);
        let gamma = PhasePoint::new(vec![0.3, -0.4]).unwrap();
        let w = shift_operator(&g, &gamma);
        let z1 = z_norm(&w, 1, &lattice(h)).unwrap();
        assert!((z1 * z1 - (h + 0.25)).abs() < 1e-8, "{z1}");
        let mut prev = z_norm_with(&w, 0, &lattice(h), SobolevForm::Sum).unwrap().value;
        for k in 1..=3 {
            let zk = z_norm_with(&w, k, &lattice(h), SobolevForm::Sum).unwrap().value;
            assert!(zk >= h.sqrt() * prev - 1e-10);
            prev = zk;
        }
    }

    #[test]
    fn matrix_elements_match_overlap() {
        let h = 0.1;
        let g = grid(h);
        let gamma = PhasePoint::new(vec![0.3, -0.4]).unwrap();
        let w = shift_operator(&g, &gamma);
        let a = PhasePoint::new(vec![0.5, 0.1]).unwrap();
        let b = PhasePoint::new(vec![0.1, 0.3]).unwrap();
        let bg = PhasePoint::new(vec![0.4, -0.1]).unwrap();
        let got = coherent_matrix_element(&w, &a, &b).norm();
        let expect = coherent_overlap(h, &a, &bg).norm();
        assert!((got - expect).abs() < 1e-10);
        let id = OperatorMatrix::identity(&g);
        let rep = offdiagonal_decay_check(&id, 1, &decay_pairs(&PhasePoint::origin(1), h, 40, 0.25, 12.0, 1).unwrap(), &lattice(h)).unwrap();
        let far = rep.samples.iter().filter(|s| s.distance > 10.0 * h.sqrt()).map(|s| s.ratio).fold(0.0, f64::max);
        assert!(far < 1e-8 && rep.max_ratio > far);
    }

    #[test]
    fn power_method() {
        let g = PhaseSpaceGrid::new(1, 0.1, -4.0, 4.0, 64).unwrap();
        assert!((operator_norm(&OperatorMatrix::identity(&g)).unwrap() - 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let raw = DMatrix::from_fn(64, 64, |_, _| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let herm = (&raw + raw.adjoint()).map(|z| z * 0.5);
        let exact = herm.symmetric_eigenvalues().iter().map(|v| v.abs()).fold(0.0, f64::max);
        let got = operator_norm(&OperatorMatrix::new(g.clone(), herm).unwrap()).unwrap();
        assert!((got - exact).abs() < 1e-8 * exact, "{got} {exact}");
        let mut diag = DMatrix::<Complex64>::identity(64, 64);
        diag[(1, 1)] = Complex64::new(2.0, 0.0);
        diag[(2, 2)] = Complex64::new(-3.0, 0.0);
        assert!((operator_norm(&OperatorMatrix::new(g, diag).unwrap()).unwrap() - 3.0).abs() < 1e-10);
    }
}
