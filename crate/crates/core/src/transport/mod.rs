//! Discrete p-Wasserstein distances with certified primal–dual bounds.

mod entropic;
mod simplex;
pub mod support;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::point::euclid;
use crate::phase::PhasePoint;
use crate::transforms::PhaseSpaceMeasure;

pub use support::{diameter, prune_support, thin_support, Reduced};

/// Tolerance on the difference of total masses.
pub const MASS_TOL: f64 = 1e-8;
/// Largest support per side accepted by any solver.
pub const ENTROPIC_CAP: usize = 5000;
/// Default largest support per side for the exact solver.
pub const EXACT_CAP: usize = 600;

/// `W_p(μ, ν)` with cost `|α − β|^p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportProblem {
    pub mu: PhaseSpaceMeasure,
    pub nu: PhaseSpaceMeasure,
    pub p: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    /// Exact when both sides fit under the exact cap, entropic otherwise.
    Auto,
    Exact,
    Entropic,
}

/// Knobs of [`wasserstein_with`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverPolicy {
    pub solver: SolverChoice,
    pub exact_cap: usize,
    /// Final regularization relative to `diam^p`.
    pub epsilon_final: f64,
    /// Final regularization is never larger than this absolute value, when set.
    pub target_gap: Option<f64>,
    pub levels: usize,
    pub marginal_tol: f64,
    pub keep_plan: bool,
}

impl Default for SolverPolicy {
    fn default() -> Self {
        Self {
            solver: SolverChoice::Auto,
            exact_cap: EXACT_CAP,
            epsilon_final: 2e-4,
            target_gap: None,
            levels: 10,
            marginal_tol: 1e-9,
            keep_plan: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolverInfo {
    Exact { pivots: usize },
    Entropic { epsilon_final: f64, iterations: usize, marginal_error: f64 },
    ClosedForm,
}

/// One coupling entry `π(α_i, β_j)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub i: usize,
    pub j: usize,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportResult {
    pub p: f64,
    /// `cost_upper^{1/p}`.
    pub distance: f64,
    /// Cost of a feasible coupling.
    pub cost_upper: f64,
    /// Kantorovich dual objective of feasible potentials.
    pub cost_lower: f64,
    /// `cost_upper − cost_lower` (in cost units).
    pub cost_gap: f64,
    /// `distance − max(cost_lower, 0)^{1/p}` plus any pruning certificate.
    pub bound_gap: f64,
    pub plan: Option<Vec<PlanEntry>>,
    pub dual_f: Option<Vec<f64>>,
    pub dual_g: Option<Vec<f64>>,
    pub solver: SolverInfo,
}

impl TransportResult {
    /// Certified lower value of the distance.
    pub fn lower(&self) -> f64 {
        (self.distance - self.bound_gap).max(0.0)
    }

    /// Adds an additive distance certificate (pruning, aggregation).
    pub fn with_extra_gap(mut self, extra: f64) -> Self {
        self.bound_gap += extra;
        self
    }
}

fn cost_matrix(mu: &PhaseSpaceMeasure, nu: &PhaseSpaceMeasure, p: f64) -> Vec<f64> {
    let m = nu.len();
    (0..mu.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let a = mu.point(i);
            (0..m).map(move |j| pow_cost(euclid(a, nu.point(j)), p))
        })
        .collect()
}

fn pow_cost(d: f64, p: f64) -> f64 {
    if p == 1.0 {
        d
    } else if p == 2.0 {
        d * d
    } else {
        d.powf(p)
    }
}

fn check_problem(problem: &TransportProblem) -> Result<()> {
    let TransportProblem { mu, nu, p } = problem;
    if mu.is_signed() || nu.is_signed() {
        return Err(Error::SignedMeasure);
    }
    if !(*p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidInput(format!("cost exponent {p} must be at least 1")));
    }
    if mu.dim() != nu.dim() {
        return Err(Error::InvalidInput("measures live in different phase spaces".into()));
    }
    if mu.is_empty() || nu.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    let (a, b) = (mu.total_mass(), nu.total_mass());
    if (a - b).abs() > MASS_TOL {
        return Err(Error::MassMismatch(a, b));
    }
    for side in [mu, nu] {
        if side.len() > ENTROPIC_CAP {
            return Err(Error::CapExceeded { what: "support atoms", count: side.len(), cap: ENTROPIC_CAP });
        }
    }
    Ok(())
}

/// `W_p` with the default policy.
pub fn wasserstein(problem: &TransportProblem) -> Result<TransportResult> {
    wasserstein_with(problem, &SolverPolicy::default())
}

pub fn wasserstein_with(problem: &TransportProblem, policy: &SolverPolicy) -> Result<TransportResult> {
    check_problem(problem)?;
    let TransportProblem { mu, nu, p } = problem;
    let exact = match policy.solver {
        SolverChoice::Exact => true,
        SolverChoice::Entropic => false,
        SolverChoice::Auto => mu.len() <= policy.exact_cap && nu.len() <= policy.exact_cap,
    };
    let cost = cost_matrix(mu, nu, *p);
    if exact {
        solve_exact(mu, nu, &cost, *p, policy)
    } else {
        Ok(solve_entropic(mu, nu, &cost, *p, policy))
    }
}

/// Dual objective after a double c-transform of `f`.
fn certified_dual(a: &[f64], b: &[f64], f: &[f64], cost: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let n = a.len();
    let m = b.len();
    let mut g = vec![f64::INFINITY; m];
    for i in 0..n {
        let row = &cost[i * m..(i + 1) * m];
        for j in 0..m {
            g[j] = g[j].min(row[j] - f[i]);
        }
    }
    let f2: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = &cost[i * m..(i + 1) * m];
            (0..m).map(|j| row[j] - g[j]).fold(f64::INFINITY, f64::min)
        })
        .collect();
    let value = a.iter().zip(&f2).map(|(x, y)| x * y).sum::<f64>() + b.iter().zip(&g).map(|(x, y)| x * y).sum::<f64>();
    (f2, g, value)
}

fn finish(p: f64, upper: f64, lower: f64, plan: Option<Vec<PlanEntry>>, f: Vec<f64>, g: Vec<f64>, solver: SolverInfo) -> TransportResult {
    let upper = upper.max(0.0);
    let lower = lower.min(upper);
    let distance = upper.powf(1.0 / p);
    let bound_gap = distance - lower.max(0.0).powf(1.0 / p);
    TransportResult {
        p,
        distance,
        cost_upper: upper,
        cost_lower: lower,
        cost_gap: upper - lower,
        bound_gap,
        plan,
        dual_f: Some(f),
        dual_g: Some(g),
        solver,
    }
}

fn solve_exact(mu: &PhaseSpaceMeasure, nu: &PhaseSpaceMeasure, cost: &[f64], p: f64, policy: &SolverPolicy) -> Result<TransportResult> {
    let m = nu.len();
    let max_cost = cost.iter().cloned().fold(0.0, f64::max);
    let order = |measure: &PhaseSpaceMeasure| {
        let mut idx: Vec<usize> = (0..measure.len()).collect();
        idx.sort_by(|&x, &y| measure.point(x).partial_cmp(measure.point(y)).unwrap_or(std::cmp::Ordering::Equal));
        idx
    };
    let sol = simplex::solve(mu.masses(), nu.masses(), &order(mu), &order(nu), &|i, j| cost[i * m + j], max_cost)?;
    let a = mu.masses();
    let b = nu.masses();
    let mut plan: Vec<PlanEntry> =
        sol.arcs.iter().filter(|e| e.2 > 0.0).map(|&(i, j, mass)| PlanEntry { i, j, mass }).collect();
    plan.sort_by(|x, y| (x.i, x.j).cmp(&(y.i, y.j)));
    let upper: f64 = plan.iter().map(|e| e.mass * cost[e.i * m + e.j]).sum();
    let (f, g, lower) = certified_dual(a, b, &sol.u, cost);
    let _ = &sol.v;
    Ok(finish(
        p,
        upper,
        lower,
        policy.keep_plan.then_some(plan),
        f,
        g,
        SolverInfo::Exact { pivots: sol.pivots },
    ))
}

fn solve_entropic(mu: &PhaseSpaceMeasure, nu: &PhaseSpaceMeasure, cost: &[f64], p: f64, policy: &SolverPolicy) -> TransportResult {
    let scale = cost.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut end = policy.epsilon_final * scale;
    if let Some(t) = policy.target_gap {
        end = end.min(t.max(1e-12 * scale));
    }
    let schedule = entropic::Schedule {
        start: (scale / 10.0).max(end),
        end,
        levels: policy.levels,
        tol: policy.marginal_tol,
        level_cap: 2000,
        final_cap: 20000,
    };
    let keep = policy.keep_plan && mu.len() * nu.len() <= 1_000_000;
    let sol = entropic::solve(mu.masses(), nu.masses(), cost, &schedule, keep);
    let (f, g, lower) = certified_dual(mu.masses(), nu.masses(), &sol.f, cost);
    let _ = &sol.g;
    let plan = sol.plan.map(|v| v.into_iter().map(|(i, j, mass)| PlanEntry { i, j, mass }).collect());
    finish(
        p,
        sol.primal,
        lower,
        plan,
        f,
        g,
        SolverInfo::Entropic { epsilon_final: sol.epsilon, iterations: sol.iterations, marginal_error: sol.marginal_error },
    )
}

/// Closed form `(∫|z − α|^p dμ)^{1/p}`.
pub fn wasserstein_to_point(measure: &PhaseSpaceMeasure, alpha: &PhasePoint, p: f64) -> Result<f64> {
    if measure.is_signed() {
        return Err(Error::SignedMeasure);
    }
    if alpha.dim() != measure.dim() {
        return Err(Error::InvalidInput("point dimension does not match the measure".into()));
    }
    let total = measure.total_mass();
    if !(total > 0.0) {
        return Err(Error::NotNormalizable(total));
    }
    Ok((measure.integrate(|z| pow_cost(euclid(z, alpha.coords()), p)) / total).powf(1.0 / p))
}

/// Convexity upper bound `(Σ w_i d_i^p)^{1/p}` for a mixture of transport problems.
pub fn convexity_bound(weights: &[f64], distances: &[f64], p: f64) -> Result<f64> {
    if weights.len() != distances.len() || weights.is_empty() {
        return Err(Error::InvalidInput("one weight per component distance is required".into()));
    }
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|w| *w < 0.0) || (total - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidInput(format!("mixture weights must be nonnegative and sum to 1 (got {total})")));
    }
    Ok(weights.iter().zip(distances).map(|(w, d)| w * pow_cost(*d, p)).sum::<f64>().powf(1.0 / p))
}

/// JSON record of one solved instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportRecord {
    pub problem: TransportProblem,
    pub result: TransportResult,
}

impl TransportProblem {
    pub fn new(mu: PhaseSpaceMeasure, nu: PhaseSpaceMeasure, p: f64) -> Self {
        Self { mu, nu, p }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(points: &[[f64; 2]], masses: &[f64]) -> PhaseSpaceMeasure {
        PhaseSpaceMeasure::from_flat(1, 0.1, points.iter().flatten().copied().collect(), masses.to_vec()).unwrap()
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize, uniform: bool) -> PhaseSpaceMeasure {
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]).collect();
        let raw: Vec<f64> = (0..n).map(|_| if uniform { 1.0 } else { rng.gen_range(0.1..1.0) }).collect();
        let t: f64 = raw.iter().sum();
        cloud(&pts, &raw.iter().map(|m| m / t).collect::<Vec<_>>())
    }

    fn exact() -> SolverPolicy {
        SolverPolicy { solver: SolverChoice::Exact, ..Default::default() }
    }

    fn entropic() -> SolverPolicy {
        SolverPolicy { solver: SolverChoice::Entropic, ..Default::default() }
    }

    /// Minimum over all permutations of the assignment cost.
    fn permutation_oracle(mu: &PhaseSpaceMeasure, nu: &PhaseSpaceMeasure, p: f64) -> f64 {
        fn rec(k: usize, used: &mut Vec<bool>, acc: f64, c: &dyn Fn(usize, usize) -> f64, n: usize, best: &mut f64) {
            if k == n {
                *best = best.min(acc);
                return;
            }
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    rec(k + 1, used, acc + c(k, j), c, n, best);
                    used[j] = false;
                }
            }
        }
        let n = mu.len();
        let c = |i: usize, j: usize| euclid(mu.point(i), nu.point(j)).powf(p) / n as f64;
        let mut best = f64::INFINITY;
        rec(0, &mut vec![false; n], 0.0, &c, n, &mut best);
        best.powf(1.0 / p)
    }

    /// Monotone (quantile) coupling of two measures on the line `p = 0`.
    fn quantile_oracle(xs: &[f64], a: &[f64], ys: &[f64], b: &[f64], p: f64) -> f64 {
        let mut u: Vec<(f64, f64)> = xs.iter().cloned().zip(a.iter().cloned()).collect();
        let mut v: Vec<(f64, f64)> = ys.iter().cloned().zip(b.iter().cloned()).collect();
        u.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        v.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        let (mut i, mut j, mut cost) = (0, 0, 0.0);
        while i < u.len() && j < v.len() {
            let m = u[i].1.min(v[j].1);
            cost += m * (u[i].0 - v[j].0).abs().powf(p);
            u[i].1 -= m;
            v[j].1 -= m;
            if u[i].1 <= 1e-15 {
                i += 1;
            } else {
                j += 1;
            }
        }
        cost.powf(1.0 / p)
    }

    #[test]
    fn elementary_instances() {
        let mu = cloud(&[[0.0, 0.0], [1.0, 2.0]], &[0.3, 0.7]);
        assert!(wasserstein(&TransportProblem::new(mu.clone(), mu.clone(), 2.0)).unwrap().distance < 1e-12);
        let a = cloud(&[[0.5, -1.0]], &[1.0]);
        let b = cloud(&[[2.0, 1.0]], &[1.0]);
        for p in [1.0, 2.0, 4.0] {
            let r = wasserstein(&TransportProblem::new(a.clone(), b.clone(), p)).unwrap();
            assert!((r.distance - 2.5).abs() < 1e-12);
        }
        let split = cloud(&[[0.0, 0.0], [2.0, 0.0]], &[0.5, 0.5]);
        let one = cloud(&[[1.0, 0.0]], &[1.0]);
        let r = wasserstein(&TransportProblem::new(split, one, 2.0)).unwrap();
        assert!((r.distance - 1.0).abs() < 1e-12);
    }

    #[test]
    fn assignment_matches_permutations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let mu = random_cloud(&mut rng, 6, true);
            let nu = random_cloud(&mut rng, 6, true);
            for p in [1.0, 2.0] {
                let oracle = permutation_oracle(&mu, &nu, p);
                let prob = TransportProblem::new(mu.clone(), nu.clone(), p);
                let ex = wasserstein_with(&prob, &exact()).unwrap();
                assert!((ex.distance - oracle).abs() < 1e-9, "{} {}", ex.distance, oracle);
                let en = wasserstein_with(&prob, &entropic()).unwrap();
                assert!(en.distance >= oracle - 1e-9 && en.lower() <= oracle + 1e-9);
                assert!((en.distance - oracle).abs() <= 0.01 * oracle);
            }
        }
    }

    #[test]
    fn line_instances_match_quantile_coupling() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for p in [1.0, 2.0, 4.0] {
            let xs: Vec<f64> = (0..30).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let ys: Vec<f64> = (0..40).map(|_| rng.gen_range(-2.0..4.0)).collect();
            let a: Vec<f64> = (0..30).map(|_| rng.gen_range(0.1..1.0)).collect();
            let b: Vec<f64> = (0..40).map(|_| rng.gen_range(0.1..1.0)).collect();
            let (ta, tb): (f64, f64) = (a.iter().sum(), b.iter().sum());
            let a: Vec<f64> = a.iter().map(|v| v / ta).collect();
            let b: Vec<f64> = b.iter().map(|v| v / tb).collect();
            let mu = cloud(&xs.iter().map(|&x| [x, 0.0]).collect::<Vec<_>>(), &a);
            let nu = cloud(&ys.iter().map(|&y| [y, 0.0]).collect::<Vec<_>>(), &b);
            let r = wasserstein_with(&TransportProblem::new(mu, nu, p), &exact()).unwrap();
            let oracle = quantile_oracle(&xs, &a, &ys, &b, p);
            assert!((r.distance - oracle).abs() < 1e-9 * oracle.max(1.0), "{p}: {} {}", r.distance, oracle);
        }
    }

    #[test]
    fn certificates_are_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for solver in [exact(), entropic()] {
            let mu = random_cloud(&mut rng, 25, false);
            let nu = random_cloud(&mut rng, 35, false);
            let r = wasserstein_with(&TransportProblem::new(mu.clone(), nu.clone(), 2.0), &solver).unwrap();
            let (f, g) = (r.dual_f.as_ref().unwrap(), r.dual_g.as_ref().unwrap());
            for i in 0..mu.len() {
                for j in 0..nu.len() {
                    assert!(f[i] + g[j] <= euclid(mu.point(i), nu.point(j)).powi(2) + 1e-8);
                }
            }
            let dual: f64 = mu.masses().iter().zip(f).map(|(a, b)| a * b).sum::<f64>()
                + nu.masses().iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
            assert!(r.distance.powi(2) - dual <= r.cost_gap + 1e-12);
            let plan = r.plan.as_ref().unwrap();
            let mut rows = vec![0.0; mu.len()];
            let mut cols = vec![0.0; nu.len()];
            for e in plan {
                rows[e.i] += e.mass;
                cols[e.j] += e.mass;
            }
            assert!(rows.iter().zip(mu.masses()).all(|(x, y)| (x - y).abs() < 1e-8));
            assert!(cols.iter().zip(nu.masses()).all(|(x, y)| (x - y).abs() < 1e-8));
        }
    }

    #[test]
    fn rejects_bad_input() {
        let mu = cloud(&[[0.0, 0.0]], &[1.0]);
        let nu = cloud(&[[0.0, 0.0]], &[0.5]);
        assert!(matches!(wasserstein(&TransportProblem::new(mu.clone(), nu, 2.0)), Err(Error::MassMismatch(..))));
        let lattice = crate::transforms::LatticeSpec::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![1, 2]).unwrap();
        let signed = PhaseSpaceMeasure::on_lattice(lattice, 0.1, vec![1.5, -0.5], true).unwrap();
        assert!(matches!(wasserstein(&TransportProblem::new(mu, signed, 2.0)), Err(Error::SignedMeasure)));
    }

    #[test]
    fn closed_forms() {
        let alpha = PhasePoint::new(vec![0.3, -0.2]).unwrap();
        assert_eq!(wasserstein_to_point(&PhaseSpaceMeasure::dirac(&alpha, 0.1), &alpha, 2.0).unwrap(), 0.0);
        let mu = cloud(&[[0.0, 0.0], [1.0, 1.0], [-1.0, 0.5]], &[0.2, 0.5, 0.3]);
        let v = [0.7, -0.4];
        let moved = PhasePoint::new(vec![0.3 + v[0], -0.2 + v[1]]).unwrap();
        let d0 = wasserstein_to_point(&mu, &alpha, 2.0).unwrap();
        assert!((wasserstein_to_point(&mu.translated(&v), &moved, 2.0).unwrap() - d0).abs() < 1e-12);
        assert_eq!(convexity_bound(&[1.0], &[0.7], 2.0).unwrap(), 0.7);
        assert!((convexity_bound(&[0.5, 0.5], &[0.7, 0.7], 2.0).unwrap() - 0.7).abs() < 1e-15);
        assert!(convexity_bound(&[0.5, 0.4], &[0.7, 0.7], 2.0).is_err());
    }

    #[test]
    fn support_reduction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mu = random_cloud(&mut rng, 100, true);
        assert_eq!(prune_support(&mu, 0.0).unwrap().measure, mu);
        assert!(matches!(prune_support(&mu, 0.02), Err(Error::EmptyMeasure)));
        let thin = thin_support(&mu, 30).unwrap();
        assert!(thin.measure.len() <= 30);
        assert!((thin.measure.total_mass() - 1.0).abs() < 1e-12);
        let nu = random_cloud(&mut rng, 40, false);
        let full = wasserstein(&TransportProblem::new(mu, nu.clone(), 2.0)).unwrap().distance;
        let reduced = wasserstein(&TransportProblem::new(thin.measure.clone(), nu, 2.0)).unwrap().distance;
        assert!((full - reduced).abs() <= thin.certificate(2.0) + 1e-9);
    }
}
