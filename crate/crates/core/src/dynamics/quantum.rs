use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::NdFft;
use crate::phase::state::{coherent_values, inner, norm_sq, Branch};
use crate::phase::{HamiltonianModel, PhasePoint, PhaseSpaceGrid, QuantumState};
use crate::transforms::weyl::{weyl_quantize, OperatorMatrix};

/// Largest grid accepted by the dense propagator.
pub const DENSE_MAX_N: usize = 1024;
/// Steps between boundary-monitor checks during split-step runs.
const MONITOR_EVERY: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Second-order Strang splitting `V/2 – K – V/2`.
    SplitStep,
    /// Exact exponential from the eigendecomposition of the Weyl-quantized Hamiltonian.
    Dense,
}

enum Engine {
    Split { half_v: Vec<Complex64>, full_v: Vec<Complex64>, kin: Vec<Complex64>, fft: NdFft },
    Dense { vectors: DMatrix<Complex64>, energies: Vec<f64> },
}

/// Time-`dt` propagator `e^{−iĤdt/ℏ}` for one model on one grid.
pub struct QuantumPropagator {
    grid: PhaseSpaceGrid,
    dt: f64,
    method: Method,
    engine: Engine,
}

/// Number of steps of size `dt` in `horizon`, rejecting non-divisors.
pub fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(horizon >= 0.0) {
        return Err(Error::InvalidInput("time step and horizon must be positive".into()));
    }
    let n = (horizon / dt).round();
    if (n * dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(Error::StepMismatch { dt, horizon });
    }
    Ok(n as usize)
}

/// `min(0.01, 0.1·sqrt(ℏ))`, shrunk so that it divides `horizon`.
pub fn default_dt(hbar: f64, horizon: f64) -> f64 {
    let base = 0.01f64.min(0.1 * hbar.sqrt());
    if horizon <= 0.0 {
        return base;
    }
    horizon / (horizon / base).ceil()
}

impl QuantumPropagator {
    pub fn new(model: &HamiltonianModel, grid: &PhaseSpaceGrid, dt: f64, method: Method) -> Result<Self> {
        if model.dim != grid.dim() {
            return Err(Error::InvalidInput("model and grid dimensions differ".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("time step {dt} must be positive")));
        }
        let h = grid.hbar();
        let engine = match method {
            Method::SplitStep => {
                if !model.is_separable() {
                    return Err(Error::MethodMismatch { method: "split-step", model: model.name.clone() });
                }
                let n = grid.len();
                let mut half_v = Vec::with_capacity(n);
                let mut full_v = Vec::with_capacity(n);
                let mut kin = Vec::with_capacity(n);
                for flat in 0..n {
                    let x = grid.position(flat);
                    let p = grid.momentum(flat);
                    let v = model.potential(&x[..grid.dim()]).expect("separable");
                    let k = model.kinetic(&p[..grid.dim()]).expect("separable");
                    half_v.push(Complex64::from_polar(1.0, -v * dt / (2.0 * h)));
                    full_v.push(Complex64::from_polar(1.0, -v * dt / h));
                    kin.push(Complex64::from_polar(1.0, -k * dt / h));
                }
                Engine::Split { half_v, full_v, kin, fft: NdFft::cube(grid.n_x(), grid.dim()) }
            }
            Method::Dense => {
                if grid.dim() != 1 || grid.n_x() > DENSE_MAX_N {
                    return Err(Error::Unsupported(format!("dense propagation needs D = 1 and n_x ≤ {DENSE_MAX_N}")));
                }
                let (vectors, energies) = hamiltonian_eigen(model, grid)?;
                Engine::Dense { vectors, energies }
            }
        };
        Ok(Self { grid: grid.clone(), dt, method, engine })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Applies `steps` steps to one wavefunction.
    pub fn evolve_psi(&self, psi: &[Complex64], steps: usize) -> Result<Vec<Complex64>> {
        if steps == 0 {
            return Ok(psi.to_vec());
        }
        match &self.engine {
            Engine::Split { half_v, full_v, kin, fft } => {
                let mut out: Vec<Complex64> = psi.iter().zip(half_v).map(|(a, b)| a * b).collect();
                for s in 0..steps {
                    fft.forward(&mut out);
                    out.iter_mut().zip(kin).for_each(|(a, b)| *a *= b);
                    fft.inverse(&mut out);
                    let v = if s + 1 == steps { half_v } else { full_v };
                    out.iter_mut().zip(v).for_each(|(a, b)| *a *= b);
                    if (s + 1) % MONITOR_EVERY == 0 {
                        check_psi(&self.grid, &out)?;
                    }
                }
                check_psi(&self.grid, &out)?;
                Ok(out)
            }
            Engine::Dense { vectors, energies } => {
                let t = steps as f64 * self.dt;
                let out = apply_spectral(vectors, energies, t / self.grid.hbar(), psi);
                check_psi(&self.grid, &out)?;
                Ok(out)
            }
        }
    }

    /// Evolves every branch by `steps` steps; weights are untouched.
    pub fn evolve(&self, state: &QuantumState, steps: usize) -> Result<QuantumState> {
        let branches = state
            .branches()
            .par_iter()
            .map(|b| {
                let psi = self.evolve_psi(&b.psi, steps)?;
                let drift = (norm_sq(&self.grid, &psi).sqrt() - norm_sq(&self.grid, &b.psi).sqrt()).abs();
                if drift > 1e-10 {
                    return Err(Error::NonConvergence("norm preservation"));
                }
                Ok(Branch { weight: b.weight, psi })
            })
            .collect::<Result<Vec<_>>>()?;
        QuantumState::mixture(self.grid.clone(), branches)
    }

    /// Dense unitary `e^{−iĤt/ℏ}` (dense method only).
    pub fn unitary(&self, t: f64) -> Result<OperatorMatrix> {
        match &self.engine {
            Engine::Dense { vectors, energies } => {
                let phases = DVector::from_iterator(
                    energies.len(),
                    energies.iter().map(|e| Complex64::from_polar(1.0, -e * t / self.grid.hbar())),
                );
                let scaled = vectors * DMatrix::from_diagonal(&phases);
                OperatorMatrix::new(self.grid.clone(), scaled * vectors.adjoint())
            }
            Engine::Split { .. } => Err(Error::MethodMismatch { method: "split-step unitary", model: "dense only".into() }),
        }
    }

    /// Eigenpairs of the dense Hamiltonian (dense method only).
    pub fn eigen(&self) -> Option<(&DMatrix<Complex64>, &[f64])> {
        match &self.engine {
            Engine::Dense { vectors, energies } => Some((vectors, energies)),
            Engine::Split { .. } => None,
        }
    }
}

fn check_psi(grid: &PhaseSpaceGrid, psi: &[Complex64]) -> Result<()> {
    let mass = crate::phase::state::boundary_mass(grid, psi);
    if mass > crate::phase::grid::BOUNDARY_LIMIT {
        return Err(Error::BoundaryLeak { mass, limit: crate::phase::grid::BOUNDARY_LIMIT });
    }
    Ok(())
}

fn apply_spectral(vectors: &DMatrix<Complex64>, energies: &[f64], t_over_h: f64, psi: &[Complex64]) -> Vec<Complex64> {
    let v = DVector::from_column_slice(psi);
    let mut c = vectors.ad_mul(&v);
    for (ci, e) in c.iter_mut().zip(energies) {
        *ci *= Complex64::from_polar(1.0, -e * t_over_h);
    }
    (vectors * c).iter().copied().collect()
}

/// Eigenvectors (columns) and ascending eigenvalues of `Op_ℏ(H)`.
pub fn hamiltonian_eigen(model: &HamiltonianModel, grid: &PhaseSpaceGrid) -> Result<(DMatrix<Complex64>, Vec<f64>)> {
    let op = weyl_quantize(|x, p| model.value(&[x, p]), grid)?;
    let sym = (op.entries() + op.entries().adjoint()).map(|z| z * 0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
    let n = order.len();
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    let energies = order.iter().map(|k| eig.eigenvalues[*k]).collect();
    Ok((vectors, energies))
}

/// `U_T ρ U_T†` with `T` a multiple of `dt`.
pub fn propagate_quantum(state: &QuantumState, model: &HamiltonianModel, horizon: f64, dt: f64, method: Method) -> Result<QuantumState> {
    let steps = step_count(horizon, dt)?;
    if steps == 0 {
        return Ok(state.clone());
    }
    QuantumPropagator::new(model, state.grid(), dt, method)?.evolve(state, steps)
}

/// Closed-form coherent state evolved by `(p² + x²)/2`: the center rotates clockwise.
pub fn harmonic_coherent_exact(grid: &PhaseSpaceGrid, alpha: &PhasePoint, t: f64) -> Vec<Complex64> {
    let d = grid.dim();
    let (c, s) = (t.cos(), t.sin());
    let mut coords = vec![0.0; 2 * d];
    for a in 0..d {
        coords[a] = alpha.x()[a] * c + alpha.p()[a] * s;
        coords[d + a] = -alpha.x()[a] * s + alpha.p()[a] * c;
    }
    let rotated = PhasePoint::new(coords).expect("finite");
    // zero-point phase e^{−iDt/2}; the dynamical phase of the center is dropped
    coherent_values(grid, &rotated)
}

/// Fidelity `|⟨a|b⟩|` of two unit vectors.
pub fn fidelity(grid: &PhaseSpaceGrid, a: &[Complex64], b: &[Complex64]) -> f64 {
    inner(grid, a, b).norm()
}

/// Halves `dt` from [`default_dt`] until a harmonic coherent state at `α = (1, 0, …)`
/// evolved to `horizon` matches the closed form to `1 − fidelity < 1e-6`.
pub fn calibrate_dt(grid: &PhaseSpaceGrid, horizon: f64) -> Result<f64> {
    let model = HamiltonianModel::harmonic(grid.dim());
    let d = grid.dim();
    let mut coords = vec![0.0; 2 * d];
    coords[0] = 1.0f64.min(0.25 * grid.length(0));
    let alpha = PhasePoint::new(coords)?;
    let start = QuantumState::pure(grid.clone(), coherent_values(grid, &alpha))?;
    let mut dt = default_dt(grid.hbar(), horizon);
    if horizon <= 0.0 {
        return Ok(dt);
    }
    let exact = harmonic_coherent_exact(grid, &alpha, horizon);
    for _ in 0..8 {
        let out = propagate_quantum(&start, &model, horizon, dt, Method::SplitStep)?;
        if 1.0 - fidelity(grid, &out.branches()[0].psi, &exact) < 1e-6 {
            return Ok(dt);
        }
        dt /= 2.0;
    }
    Err(Error::NonConvergence("time-step calibration"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::state::coherent_state;

    fn pt(c: &[f64]) -> PhasePoint {
        PhasePoint::new(c.to_vec()).unwrap()
    }

    #[test]
    fn free_ehrenfest_is_exact() {
        let g = PhaseSpaceGrid::new(1, 0.1, -12.0, 12.0, 512).unwrap();
        let s = coherent_state(&g, &pt(&[-1.0, 0.8])).unwrap();
        let out = propagate_quantum(&s, &HamiltonianModel::free(1), 2.0, 0.01, Method::SplitStep).unwrap();
        let m = out.mean();
        assert!((m.x()[0] - (-1.0 + 1.6)).abs() < 1e-8);
        assert!((m.p()[0] - 0.8).abs() < 1e-8);
        assert!((out.trace() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn harmonic_coherent_fidelity() {
        let g = PhaseSpaceGrid::new(1, 0.1, -8.0, 8.0, 256).unwrap();
        let a = pt(&[1.0, -0.5]);
        let s = coherent_state(&g, &a).unwrap();
        let t = 1.5;
        let out = propagate_quantum(&s, &HamiltonianModel::harmonic(1), t, 0.001, Method::SplitStep).unwrap();
        let f = fidelity(&g, &out.branches()[0].psi, &harmonic_coherent_exact(&g, &a, t));
        assert!(f >= 1.0 - 1e-6, "{f}");
        let dense = propagate_quantum(&s, &HamiltonianModel::harmonic(1), t, 0.5, Method::Dense).unwrap();
        let f = fidelity(&g, &dense.branches()[0].psi, &harmonic_coherent_exact(&g, &a, t));
        assert!(f >= 1.0 - 1e-6, "{f}");
    }

    #[test]
    fn step_rules() {
        assert!(matches!(step_count(1.0, 0.3), Err(Error::StepMismatch { .. })));
        assert_eq!(step_count(1.0, 0.25).unwrap(), 4);
        let g = PhaseSpaceGrid::new(1, 0.1, -8.0, 8.0, 128).unwrap();
        let err = QuantumPropagator::new(&HamiltonianModel::twisted_pendulum(0.2), &g, 0.01, Method::SplitStep);
        assert!(matches!(err, Err(Error::MethodMismatch { .. })));
        let s = coherent_state(&g, &pt(&[0.0, 0.0])).unwrap();
        assert_eq!(propagate_quantum(&s, &HamiltonianModel::pendulum(1), 0.0, 0.01, Method::SplitStep).unwrap(), s);
    }

    #[test]
    fn split_step_matches_dense_on_pendulum() {
        let g = PhaseSpaceGrid::new(1, 0.2, -2.0 * std::f64::consts::PI, 2.0 * std::f64::consts::PI, 128).unwrap();
        let s = coherent_state(&g, &pt(&[0.5, 0.0])).unwrap();
        let m = HamiltonianModel::pendulum(1);
        let a = propagate_quantum(&s, &m, 1.0, 0.001, Method::SplitStep).unwrap();
        let b = propagate_quantum(&s, &m, 1.0, 1.0, Method::Dense).unwrap();
        let f = fidelity(&g, &a.branches()[0].psi, &b.branches()[0].psi);
        assert!(f > 1.0 - 1e-6, "{f}");
    }

    #[test]
    fn leaking_state_is_rejected() {
        let g = PhaseSpaceGrid::new(1, 0.1, -6.0, 6.0, 256).unwrap();
        let s = coherent_state(&g, &pt(&[2.0, 2.0])).unwrap();
        let err = propagate_quantum(&s, &HamiltonianModel::free(1), 2.0, 0.01, Method::SplitStep);
        assert!(matches!(err, Err(Error::BoundaryLeak { .. })));
    }
}
