use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::quantum::step_count;
use crate::error::{Error, Result};
use crate::phase::hamiltonian::ModelKind;
use crate::phase::{HamiltonianModel, PhaseBox, PhasePoint};
use crate::transforms::PhaseSpaceMeasure;

/// Energy drift accepted by [`flow_point`] before the step is halved.
pub const ENERGY_TOL: f64 = 1e-8;
/// Default classical step.
pub const DEFAULT_FLOW_DT: f64 = 1e-3;
const MAX_HALVINGS: usize = 10;
const IMPLICIT_TOL: f64 = 1e-15;
const IMPLICIT_CAP: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowMethod {
    /// Kick–drift–kick Störmer–Verlet for `K(p) + V(x)`.
    Leapfrog,
    /// Implicit midpoint rule solved by fixed-point iteration.
    ImplicitMidpoint,
}

impl FlowMethod {
    pub fn for_model(model: &HamiltonianModel) -> Self {
        if model.is_separable() {
            FlowMethod::Leapfrog
        } else {
            FlowMethod::ImplicitMidpoint
        }
    }
}

/// One-step integrator for Hamilton's equations of a model.
#[derive(Clone, Debug)]
pub struct ClassicalFlow<'a> {
    model: &'a HamiltonianModel,
    method: FlowMethod,
}

impl<'a> ClassicalFlow<'a> {
    pub fn new(model: &'a HamiltonianModel) -> Self {
        Self { model, method: FlowMethod::for_model(model) }
    }

    pub fn with_method(model: &'a HamiltonianModel, method: FlowMethod) -> Result<Self> {
        if method == FlowMethod::Leapfrog && !model.is_separable() {
            return Err(Error::MethodMismatch { method: "leapfrog", model: model.name.clone() });
        }
        Ok(Self { model, method })
    }

    pub fn method(&self) -> FlowMethod {
        self.method
    }

    /// Advances `z` by one step of size `dt` in place.
    pub fn step(&self, z: &mut [f64], dt: f64) -> Result<()> {
        let d = self.model.dim;
        match (self.method, &self.model.kind) {
            (FlowMethod::Leapfrog, ModelKind::Separable { kinetic, potential }) => {
                let gv = potential.gradient(&z[..d]);
                for a in 0..d {
                    z[d + a] -= 0.5 * dt * gv[a];
                }
                let gk = kinetic.gradient(&z[d..]);
                for a in 0..d {
                    z[a] += dt * gk[a];
                }
                let gv = potential.gradient(&z[..d]);
                for a in 0..d {
                    z[d + a] -= 0.5 * dt * gv[a];
                }
                Ok(())
            }
            (FlowMethod::Leapfrog, _) => Err(Error::MethodMismatch { method: "leapfrog", model: self.model.name.clone() }),
            (FlowMethod::ImplicitMidpoint, _) => {
                let start = z.to_vec();
                let mut next = start.clone();
                let f0 = self.model.vector_field(&start);
                next.iter_mut().zip(&f0).for_each(|(n, f)| *n += dt * f);
                let mut mid = vec![0.0; start.len()];
                for _ in 0..IMPLICIT_CAP {
                    mid.iter_mut().zip(start.iter().zip(&next)).for_each(|(m, (a, b))| *m = 0.5 * (a + b));
                    let f = self.model.vector_field(&mid);
                    let mut change: f64 = 0.0;
                    for i in 0..start.len() {
                        let v = start[i] + dt * f[i];
                        change = change.max((v - next[i]).abs());
                        next[i] = v;
                    }
                    if change <= IMPLICIT_TOL * (1.0 + next.iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
                        z.copy_from_slice(&next);
                        return Ok(());
                    }
                }
                Err(Error::NonConvergence("implicit midpoint solve"))
            }
        }
    }

    /// Integrates `steps` steps, failing when the trajectory leaves the model box.
    pub fn run(&self, z0: &[f64], dt: f64, steps: usize) -> Result<Vec<f64>> {
        let mut z = z0.to_vec();
        let bx = &self.model.lipschitz_box;
        for s in 0..steps {
            self.step(&mut z, dt)?;
            if !bx.contains(&z) {
                return Err(Error::BoxExit { time: (s + 1) as f64 * dt });
            }
        }
        Ok(z)
    }
}

/// `Φ_T(α₀)`, halving `dt` until the energy drift is at most [`ENERGY_TOL`].
pub fn flow_point(alpha0: &PhasePoint, model: &HamiltonianModel, horizon: f64, dt: f64) -> Result<PhasePoint> {
    Ok(flow_point_report(alpha0, model, horizon, dt)?.0)
}

/// [`flow_point`] that also returns the step actually used.
pub fn flow_point_report(alpha0: &PhasePoint, model: &HamiltonianModel, horizon: f64, dt: f64) -> Result<(PhasePoint, f64)> {
    if alpha0.dim() != model.dim {
        return Err(Error::InvalidInput("phase point dimension does not match the model".into()));
    }
    if !model.lipschitz_box.contains(alpha0.coords()) {
        return Err(Error::BoxExit { time: 0.0 });
    }
    let mut steps = step_count(horizon, dt)?;
    if steps == 0 {
        return Ok((alpha0.clone(), dt));
    }
    let flow = ClassicalFlow::new(model);
    let e0 = model.value(alpha0.coords());
    let mut h = dt;
    for _ in 0..=MAX_HALVINGS {
        let z = flow.run(alpha0.coords(), h, steps)?;
        if (model.value(&z) - e0).abs() <= ENERGY_TOL * e0.abs().max(1.0) {
            return Ok((PhasePoint::new(z)?, h));
        }
        h /= 2.0;
        steps *= 2;
    }
    Err(Error::NonConvergence("energy-drift refinement"))
}

/// Exact pushforward of a discrete measure: each atom is advected, masses are kept.
pub fn pushforward(measure: &PhaseSpaceMeasure, model: &HamiltonianModel, horizon: f64, dt: f64) -> Result<PhaseSpaceMeasure> {
    if measure.is_signed() {
        return Err(Error::SignedMeasure);
    }
    if horizon == 0.0 {
        return Ok(measure.clone());
    }
    let moved: Vec<Vec<f64>> = (0..measure.len())
        .into_par_iter()
        .map(|i| {
            let a = PhasePoint::new(measure.point(i).to_vec())?;
            Ok(flow_point(&a, model, horizon, dt)?.coords().to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    measure.with_points(moved.concat())
}

/// Trajectory samples `(t, α, H(α))` every `every` steps.
pub fn trajectory(alpha0: &PhasePoint, model: &HamiltonianModel, horizon: f64, dt: f64, every: usize) -> Result<Vec<(f64, PhasePoint, f64)>> {
    let steps = step_count(horizon, dt)?;
    let flow = ClassicalFlow::new(model);
    let mut z = alpha0.coords().to_vec();
    let mut out = vec![(0.0, alpha0.clone(), model.value(&z))];
    for s in 1..=steps {
        flow.step(&mut z, dt)?;
        if !model.lipschitz_box.contains(&z) {
            return Err(Error::BoxExit { time: s as f64 * dt });
        }
        if s % every.max(1) == 0 || s == steps {
            out.push((s as f64 * dt, PhasePoint::new(z.clone())?, model.value(&z)));
        }
    }
    Ok(out)
}

/// CSV with columns `t, x1.., p1.., H`.
pub fn write_trajectory_csv<W: Write>(mut w: W, rows: &[(f64, PhasePoint, f64)]) -> Result<()> {
    let d = rows.first().map(|r| r.1.dim()).unwrap_or(1);
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|a| format!("x{a}")));
    header.extend((1..=d).map(|a| format!("p{a}")));
    header.push("H".into());
    writeln!(w, "{}", header.join(","))?;
    for (t, a, e) in rows {
        let mut cols = vec![format!("{t:.10}")];
        cols.extend(a.coords().iter().map(|v| format!("{v:.17e}")));
        cols.push(format!("{e:.17e}"));
        writeln!(w, "{}", cols.join(","))?;
    }
    Ok(())
}

/// Central-difference Jacobian of `Φ_T` at `z`.
pub fn flow_jacobian(model: &HamiltonianModel, z: &[f64], horizon: f64, dt: f64) -> Result<DMatrix<f64>> {
    let n = z.len();
    let eps = 1e-5;
    let mut jac = DMatrix::zeros(n, n);
    for c in 0..n {
        let mut plus = z.to_vec();
        let mut minus = z.to_vec();
        plus[c] += eps;
        minus[c] -= eps;
        let fp = flow_point(&PhasePoint::new(plus)?, model, horizon, dt)?;
        let fm = flow_point(&PhasePoint::new(minus)?, model, horizon, dt)?;
        for r in 0..n {
            jac[(r, c)] = (fp.coords()[r] - fm.coords()[r]) / (2.0 * eps);
        }
    }
    Ok(jac)
}

/// Jacobian of the discrete time-`T` map, propagated exactly alongside the trajectory:
/// shears for leapfrog, the Cayley transform of `J·∇²H` for implicit midpoint.
pub fn tangent_jacobian(model: &HamiltonianModel, z: &[f64], horizon: f64, dt: f64) -> Result<DMatrix<f64>> {
    let n = z.len();
    let d = n / 2;
    let flow = ClassicalFlow::new(model);
    let steps = if horizon > 0.0 { (horizon / dt).ceil() as usize } else { 0 };
    let h = if steps > 0 { horizon / steps as f64 } else { 0.0 };
    let mut z = z.to_vec();
    let mut jac = DMatrix::<f64>::identity(n, n);
    let hess = |z: &[f64]| {
        let rows = model.hessian(z);
        DMatrix::from_fn(n, n, |r, c| rows[r][c])
    };
    for _ in 0..steps {
        match flow.method() {
            FlowMethod::Leapfrog => {
                let kick = |z: &[f64]| {
                    let hv = hess(z);
                    let mut k = DMatrix::<f64>::identity(n, n);
                    for a in 0..d {
                        for b in 0..d {
                            k[(d + a, b)] = -0.5 * h * hv[(a, b)];
                        }
                    }
                    k
                };
                let k1 = kick(&z);
                let mut half = z.clone();
                let gv = model.gradient(&z);
                for a in 0..d {
                    half[d + a] -= 0.5 * h * gv[a];
                }
                let hk = hess(&half);
                let mut drift = DMatrix::<f64>::identity(n, n);
                for a in 0..d {
                    for b in 0..d {
                        drift[(a, d + b)] = h * hk[(d + a, d + b)];
                    }
                }
                flow.step(&mut z, h)?;
                jac = kick(&z) * drift * k1 * jac;
            }
            FlowMethod::ImplicitMidpoint => {
                let start = z.clone();
                flow.step(&mut z, h)?;
                let mid: Vec<f64> = start.iter().zip(&z).map(|(a, b)| 0.5 * (a + b)).collect();
                let hm = hess(&mid);
                // J·∇²H with J = [[0, I], [−I, 0]]
                let a = DMatrix::from_fn(n, n, |r, c| if r < d { hm[(d + r, c)] } else { -hm[(r - d, c)] });
                let id = DMatrix::<f64>::identity(n, n);
                let lhs = &id - &a * (0.5 * h);
                let rhs = &id + &a * (0.5 * h);
                let step = lhs.lu().solve(&rhs).ok_or(Error::NonConvergence("tangent solve"))?;
                jac = step * jac;
            }
        }
    }
    Ok(jac)
}

/// Empirical Lipschitz constant of `Φ_T` on `sample_box`: the larger of the sampled
/// Jacobian spectral norms and the pairwise ratios `|Φβ − Φα|/|β − α|`.
pub fn flow_lipschitz(model: &HamiltonianModel, horizon: f64, sample_box: &PhaseBox, n_samples: usize, seed: u64) -> Result<f64> {
    let dt = DEFAULT_FLOW_DT.min(horizon.max(1e-12));
    let dt = if horizon > 0.0 { horizon / (horizon / dt).ceil() } else { dt };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..n_samples.max(2))
        .map(|_| sample_box.lo.iter().zip(&sample_box.hi).map(|(l, h)| l + (h - l) * rng.gen::<f64>()).collect())
        .collect();
    let results: Vec<(f64, Vec<f64>)> = points
        .par_iter()
        .map(|z| {
            let jac = flow_jacobian(model, z, horizon, dt)?;
            let sv = jac.singular_values().iter().cloned().fold(0.0, f64::max);
            let image = flow_point(&PhasePoint::new(z.clone())?, model, horizon, dt)?;
            Ok((sv, image.coords().to_vec()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = results.iter().map(|r| r.0).fold(0.0, f64::max);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let num = crate::phase::point::euclid(&results[i].1, &results[j].1);
            let den = crate::phase::point::euclid(&points[i], &points[j]);
            if den > 0.0 {
                best = best.max(num / den);
            }
        }
    }
    Ok(best)
}
