//! Acceptance gate: one test per criterion, named `criterion_NN_*`.

use std::path::PathBuf;

use num_complex::Complex64;
use qcc::dynamics::classical::tangent_jacobian;
use qcc::dynamics::quantum::{fidelity, harmonic_coherent_exact};
use qcc::dynamics::{propagate_quantum, Method};
use qcc::experiments::{run_scenario, CheckKind, Compression, Scenario, SweepReport, Timing};
use qcc::norms::localization::{decay_pairs, offdiagonal_decay_check};
use qcc::phase::state::{cat_state, random_low_rank, translate_values};
use qcc::phase::{coherent_state, HamiltonianModel, PhasePoint, PhaseSpaceGrid};
use qcc::transforms::husimi::{covering_lattice, max_spacing};
use qcc::transforms::{husimi, resolve_conventions, LatticeSpec, OperatorMatrix, PhaseSpaceMeasure};
use qcc::transport::{wasserstein_to_point, wasserstein_with, SolverChoice, SolverPolicy, TransportProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pt(c: &[f64]) -> PhasePoint {
    PhasePoint::new(c.to_vec()).unwrap()
}

fn bundled(name: &str) -> Scenario {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", name].iter().collect();
    let mut s = Scenario::load(&path).unwrap();
    s.options.plots = false;
    s
}

fn run(s: &Scenario) -> (SweepReport, Timing) {
    let (report, timing) = run_scenario(s).unwrap();
    for g in &report.gates {
        println!("{} {} [{}] measured={:.4e} bound={:.4e}", if g.pass { "PASS" } else { "FAIL" }, g.name, g.detail, g.measured, g.bound);
    }
    for n in &report.notes {
        println!("note: {n}");
    }
    println!("total {:.1} s", timing.total_seconds);
    (report, timing)
}

fn gate<'a>(r: &'a SweepReport, name: &str) -> Vec<&'a qcc::experiments::Gate> {
    r.gates.iter().filter(|g| g.name == name).collect()
}

#[test]
fn criterion_01_meanfield_explicit_constant() {
    let s = bundled("pendulum-meanfield.toml");
    assert_eq!(s.check, CheckKind::Meanfield);
    assert_eq!(s.initial.mixture_atoms().unwrap().unwrap().len(), 9);
    assert!(s.t_list.contains(&0.5) && s.t_list.contains(&1.0));
    assert_eq!(s.hbar_list, vec![0.1, 0.05, 0.025]);
    let (r, timing) = run(&s);
    for row in &r.rows {
        let bound = row.bound.unwrap();
        assert!(row.measured <= bound * 1.1, "hbar={} T={}: {} > 1.1·{}", row.hbar, row.t, row.measured, bound);
    }
    assert!(gate(&r, "explicit_constant").iter().all(|g| g.pass));
    // every hbar runs all its rows in one job
    assert!(timing.rows.iter().all(|(_, secs)| *secs <= 600.0), "{:?}", timing.rows);
    assert!(r.pass);
}

#[test]
fn criterion_02_coherent_state_w2_identity() {
    for (dim, hbar, n) in [(1, 0.1f64, 256), (1, 0.01, 512), (2, 0.1, 64), (2, 0.01, 64)] {
        let half = if dim == 1 { 8.0 } else { 0.3 + 6.0 * hbar.sqrt() };
        let grid = PhaseSpaceGrid::new(dim, hbar, -half, half, n).unwrap();
        let alpha = if dim == 1 { pt(&[0.3, -0.2]) } else { pt(&[0.2, -0.1, 0.1, 0.05]) };
        let state = coherent_state(&grid, &alpha).unwrap();
        let lattice = covering_lattice(&state, max_spacing(hbar)).unwrap();
        let h = husimi(&state, &lattice).unwrap();
        let expected = 2.0 * dim as f64 * hbar;
        let closed = wasserstein_to_point(&h, &alpha, 2.0).unwrap().powi(2);
        assert!((closed / expected - 1.0).abs() <= 0.02, "D={dim} hbar={hbar}: {closed} vs {expected}");
        if dim == 1 {
            let problem = TransportProblem::new(h.clone(), PhaseSpaceMeasure::dirac(&alpha, hbar), 2.0);
            let solved = wasserstein_with(&problem, &SolverPolicy::default()).unwrap().distance.powi(2);
            assert!((solved / expected - 1.0).abs() <= 0.02, "solver: {solved} vs {expected}");
        }
    }
}

#[test]
fn criterion_03_localization_gronwall_and_chain() {
    let s = bundled("pendulum-localization.toml");
    assert_eq!(s.t_list, vec![0.5, 1.0, 2.0]);
    assert_eq!(s.hbar_list, vec![0.05]);
    let (r, _) = run(&s);
    let gronwall = gate(&r, "gronwall");
    assert!(!gronwall.is_empty() && gronwall.iter().all(|g| g.pass));
    let chain = gate(&r, "chain");
    assert!(!chain.is_empty() && chain.iter().all(|g| g.pass && g.bound == -1e-10));
    assert!(r.pass);
}

#[test]
fn criterion_04_egorov_sqrt_hbar_scaling() {
    let mut s = bundled("pendulum-cat-egorov.toml");
    s.options.legs = false;
    assert_eq!(s.p_list, vec![1.0, 2.0]);
    assert!(s.t_list.contains(&1.0));
    let (r, timing) = run(&s);
    let slopes = gate(&r, "slope");
    assert_eq!(slopes.len(), 2);
    assert!(slopes.iter().all(|g| g.pass && g.bound == 0.45));
    let calibrated = gate(&r, "sqrt_hbar");
    assert_eq!(calibrated.len(), 2);
    assert!(calibrated.iter().all(|g| g.pass && g.detail.contains("hbar = 0.2")));
    assert!(timing.total_seconds <= 3600.0);
    assert!(r.pass);
}

#[test]
fn criterion_05_operator_norm_egorov() {
    let s = bundled("pendulum-operator-sin.toml");
    assert_eq!(s.grid.n_x, Some(512));
    assert_eq!(s.hbar_list.first(), Some(&0.2));
    assert_eq!(s.hbar_list.last(), Some(&0.0125));
    assert!(matches!(s.options.compression, Compression::Coherent { .. }));
    let (r, _) = run(&s);
    assert!(gate(&r, "slope").iter().all(|g| g.pass));
    assert!(gate(&r, "mollification")[0].pass);
    let closed = gate(&r, "mollification_closed_form");
    assert!(closed[0].pass && closed[0].bound == 1.1);
    assert!(r.pass);
}

#[test]
fn criterion_06_local_unitary_transport() {
    let mut s = bundled("pendulum-local-unitary.toml");
    s.options.shifts = vec![1.0, 2.0];
    s.options.z_norms = false;
    let (r, _) = run(&s);
    let identity: Vec<_> = r.rows.iter().filter(|row| row.t == 0.0).collect();
    assert_eq!(identity.len(), 2 * s.hbar_list.len());
    for row in identity {
        let alpha = row.values["alpha_norm"];
        assert!((row.measured - alpha).abs() <= row.certificate + 1e-9, "{} vs {}", row.measured, alpha);
    }
    let shape = gate(&r, "shape");
    assert!(!shape.is_empty() && shape.iter().all(|g| g.pass));
    assert!(r.pass);
}

#[test]
fn criterion_07_transform_identities() {
    let grid = PhaseSpaceGrid::new(1, 0.1, -8.0, 8.0, 256).unwrap();
    let states = [
        coherent_state(&grid, &pt(&[0.4, -0.3])).unwrap(),
        cat_state(&grid, &pt(&[-1.0, 0.0]), &pt(&[1.0, 0.0])).unwrap(),
        random_low_rank(&grid, 7, 3, &PhasePoint::origin(1), 0.5).unwrap(),
    ];
    for st in &states {
        let c = resolve_conventions(st).unwrap();
        println!("resolved {:?} displayed {:?} errors {:?}", c.resolved, c.displayed, c.resolved_errors);
        assert!(c.resolved_errors[0] <= 1e-5 && c.resolved_errors[1] <= 1e-5, "{c:?}");
    }
}

fn random_measure(rng: &mut ChaCha8Rng, n: usize) -> PhaseSpaceMeasure {
    let points: Vec<PhasePoint> = (0..n).map(|_| pt(&[rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])).collect();
    let masses: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    PhaseSpaceMeasure::particles(1, 0.1, &points, masses).unwrap().normalized().unwrap()
}

#[test]
fn criterion_08_transport_soundness() {
    let exact = SolverPolicy { solver: SolverChoice::Exact, ..SolverPolicy::default() };
    let entropic = SolverPolicy { solver: SolverChoice::Entropic, ..SolverPolicy::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let start = std::time::Instant::now();
    let mut worst_rel: f64 = 0.0;
    for case in 0..200 {
        let (na, nb, nc) = (rng.gen_range(1..=50), rng.gen_range(1..=50), rng.gen_range(1..=50));
        let (a, b, c) = (random_measure(&mut rng, na), random_measure(&mut rng, nb), random_measure(&mut rng, nc));
        let p = [1.0, 2.0, 3.0][case % 3];
        let solve = |x: &PhaseSpaceMeasure, y: &PhaseSpaceMeasure, p: f64, pol: &SolverPolicy| {
            wasserstein_with(&TransportProblem::new(x.clone(), y.clone(), p), pol).unwrap()
        };
        let ab = solve(&a, &b, p, &exact);
        // metric axioms
        assert!(solve(&a, &a, p, &exact).distance <= 1e-9);
        assert!((solve(&b, &a, p, &exact).distance - ab.distance).abs() <= 1e-9);
        let ac = solve(&a, &c, p, &exact);
        let cb = solve(&c, &b, p, &exact);
        assert!(ab.distance <= ac.distance + cb.distance + 1e-9, "case {case}: triangle");
        // p-monotonicity
        assert!(solve(&a, &b, 1.0, &exact).distance <= solve(&a, &b, 2.0, &exact).distance + 1e-9);
        // dual feasibility and certified gap
        let (f, g) = (ab.dual_f.as_ref().unwrap(), ab.dual_g.as_ref().unwrap());
        for i in 0..a.len() {
            for j in 0..b.len() {
                let d = a.point(i).iter().zip(b.point(j)).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
                assert!(f[i] + g[j] <= d.powf(p) + 1e-9, "case {case}: dual infeasible at ({i}, {j})");
            }
        }
        assert!(ab.cost_gap >= -1e-12 && ab.cost_gap <= 1e-9 * (1.0 + ab.cost_upper), "case {case}: gap {}", ab.cost_gap);
        // exact against entropic
        let en = solve(&a, &b, p, &entropic);
        assert!(en.lower() <= ab.distance + 1e-9 && ab.distance <= en.distance + 1e-9, "case {case}: entropic bracket");
        if ab.distance > 0.0 {
            worst_rel = worst_rel.max((en.distance - ab.distance).abs() / ab.distance);
        }
    }
    println!("worst exact/entropic relative difference {worst_rel:.3e}");
    assert!(worst_rel <= 0.01);
    assert!(start.elapsed().as_secs_f64() <= 300.0);
}

#[test]
fn criterion_09_dynamics_oracles() {
    let grid = PhaseSpaceGrid::new(1, 0.1, -8.0, 8.0, 256).unwrap();
    let alpha = pt(&[1.0, -0.5]);
    let state = coherent_state(&grid, &alpha).unwrap();
    let out = propagate_quantum(&state, &HamiltonianModel::harmonic(1), 1.5, 0.001, Method::SplitStep).unwrap();
    let fid = fidelity(&grid, &out.branches()[0].psi, &harmonic_coherent_exact(&grid, &alpha, 1.5));
    assert!(fid >= 1.0 - 1e-6, "fidelity {fid}");

    let pendulum = HamiltonianModel::pendulum(1);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let z = [rng.gen_range(-3.0..3.0), rng.gen_range(-2.0..2.0)];
        let det = tangent_jacobian(&pendulum, &z, 1.0, 0.01).unwrap().determinant();
        assert!((det - 1.0).abs() <= 1e-10, "det {det}");
    }

    // Strang splitting: errors against a dt/8 reference
    let start = coherent_state(&grid, &pt(&[1.0, 0.3])).unwrap();
    let evolve = |dt: f64| propagate_quantum(&start, &pendulum, 1.0, dt, Method::SplitStep).unwrap().branches()[0].psi.clone();
    let dist = |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>().sqrt();
    let dt = 0.04;
    let reference = evolve(dt / 8.0);
    let e1 = dist(&evolve(dt), &reference);
    let e2 = dist(&evolve(dt / 2.0), &reference);
    // the reference error shrinks the finer difference by (1 - 1/16) / (1 - 1/64)
    let order = ((e1 / e2) * (1.0 - 1.0 / 16.0) / (1.0 - 1.0 / 64.0)).log2();
    println!("self-convergence order {order:.3}");
    assert!(order >= 1.8);
}

fn translation(grid: &PhaseSpaceGrid, gamma: &PhasePoint) -> OperatorMatrix {
    let n = grid.len();
    let mut cols = Vec::with_capacity(n * n);
    for j in 0..n {
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        e[j] = Complex64::new(1.0, 0.0);
        cols.extend(translate_values(grid, &e, gamma));
    }
    OperatorMatrix::new(grid.clone(), nalgebra::DMatrix::from_vec(n, n, cols)).unwrap()
}

#[test]
fn criterion_10_offdiagonal_decay() {
    for k in [1, 2] {
        let mut ratios = Vec::new();
        for hbar in [0.1, 0.05] {
            let grid = PhaseSpaceGrid::new(1, hbar, -6.0, 6.0, 256).unwrap();
            let s = hbar.sqrt();
            let gamma = pt(&[0.5 * s, 0.0]);
            let lattice = LatticeSpec::covering(&[-1.0, -1.0], &[1.0, 1.0], &[s, s], &[0.0, 0.0]).unwrap();
            let pairs = decay_pairs(&PhasePoint::origin(1), hbar, 24, 0.5, 6.0, 5).unwrap();
            let id = OperatorMatrix::new(grid.clone(), nalgebra::DMatrix::identity(grid.len(), grid.len())).unwrap();
            let tau = translation(&grid, &gamma);
            let r_id = offdiagonal_decay_check(&id, k, &pairs, &lattice).unwrap().max_ratio;
            let r_tau = offdiagonal_decay_check(&tau, k, &pairs, &lattice).unwrap().max_ratio;
            ratios.push((r_id, r_tau));
        }
        for pick in [|r: &(f64, f64)| r.0, |r: &(f64, f64)| r.1] {
            let (a, b) = (pick(&ratios[0]), pick(&ratios[1]));
            println!("k={k}: ratios {a:.4} {b:.4}");
            assert!(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0);
            assert!(a.max(b) / a.min(b) < 2.0);
        }
    }
}
