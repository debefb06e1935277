use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::report::{fit_scaling, Gate, SweepReport, SweepRow, Timing};
use super::scenario::{CheckKind, Compression, InitialRecipe, Scenario};
use crate::dynamics::classical::{flow_lipschitz, flow_point, pushforward, ClassicalFlow, FlowMethod, DEFAULT_FLOW_DT};
use crate::dynamics::quantum::{default_dt, propagate_quantum, step_count, Method, QuantumPropagator};
use crate::error::{Error, Result};
use crate::norms::{sobolev_norm, sobolev_norm_with, uncertainty_chain_check, z_norm, SobolevForm};
use crate::phase::state::{coherent_state, coherent_values, translate_values};
use crate::phase::{estimate_lipschitz, HamiltonianModel, PhasePoint, PhaseSpaceGrid, QuantumState};
use crate::transforms::husimi::covering_lattice;
use crate::transforms::{husimi, mollify_symbol, noising_channel_with, weyl_quantize, LatticeSpec, OperatorMatrix, PhaseSpaceMeasure};
use crate::transport::{prune_support, wasserstein_with, Reduced, TransportProblem, TransportResult};

/// Slack of the localization gate for separable models.
pub const LOCALIZATION_SLACK: f64 = 0.05;
/// Chain samples along the trajectory in the localization check.
const CHAIN_SAMPLES: usize = 16;
/// Tolerance of the `k = 2` uncertainty chain.
const CHAIN_TOL: f64 = 1e-10;
/// Step of the backward flow used to tabulate `G∘Φ_{−T}`.
const SYMBOL_FLOW_DT: f64 = 0.01;
/// Extra box reach for the noised state, in units of `sqrt(ℏ)`.
const LEGS_REACH: f64 = 8.0;
/// Spacing of the `Z^M` center lattice in units of `sqrt(ℏ)`.
const Z_LATTICE_SPACING: f64 = 1.0;

/// What the preflight established for one `ℏ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreflightRow {
    pub hbar: f64,
    pub n_x: usize,
    pub half_width: f64,
    pub p_max: f64,
    pub boundary_mass: f64,
    /// Husimi quadrature mass on the covering lattice (absent for operator checks).
    pub husimi_mass: Option<f64>,
    pub lattice_points: Option<usize>,
}

fn build_model(s: &Scenario) -> Result<HamiltonianModel> {
    s.model.build()
}

fn extra_reach(s: &Scenario, hbar: f64) -> f64 {
    match s.check {
        CheckKind::LocalUnitary => s.options.shifts.iter().cloned().fold(0.0, f64::max) * hbar.sqrt(),
        // noised branches sit up to the covering-lattice padding outside the support
        CheckKind::Egorov if s.options.legs => LEGS_REACH * hbar.sqrt(),
        _ => 0.0,
    }
}

fn grid_for(s: &Scenario, model: &HamiltonianModel, hbar: f64) -> Result<PhaseSpaceGrid> {
    if let (CheckKind::OperatorEgorov, Compression::Coherent { x_cut, p_cut }) = (s.check, &s.options.compression) {
        // operator checks cover the compression window instead of the initial state
        let corners = [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)]
            .iter()
            .map(|(a, b)| PhasePoint::new(vec![a * x_cut, b * p_cut]))
            .collect::<Result<Vec<_>>>()?;
        return s.grid.grid_for_anchors(model, &corners, hbar, s.t_max(), 0.0);
    }
    s.grid.grid_for(model, &s.initial, hbar, s.t_max(), extra_reach(s, hbar))
}

fn method_for(model: &HamiltonianModel) -> Method {
    if model.is_separable() {
        Method::SplitStep
    } else {
        Method::Dense
    }
}

/// Boundary, coverage and box checks for every `ℏ` without running the sweep.
pub fn preflight(s: &Scenario) -> Result<Vec<PreflightRow>> {
    s.validate()?;
    let model = build_model(s)?;
    let mut rows = Vec::with_capacity(s.hbar_list.len());
    for &hbar in &s.hbar_list {
        let grid = grid_for(s, &model, hbar)?;
        let mut row = PreflightRow {
            hbar,
            n_x: grid.n_x(),
            half_width: 0.5 * grid.length(0),
            p_max: grid.p_max(0),
            boundary_mass: 0.0,
            husimi_mass: None,
            lattice_points: None,
        };
        if s.check != CheckKind::OperatorEgorov {
            let state = s.initial.build(&grid)?;
            state.check_boundary()?;
            row.boundary_mass = state.boundary_mass();
            let lattice = covering_lattice(&state, s.options.spacing * hbar.sqrt())?;
            let h = husimi(&state, &lattice)?;
            row.husimi_mass = Some(h.total_mass());
            row.lattice_points = Some(lattice.len());
            let flow = ClassicalFlow::new(&model);
            for a in s.initial.anchors(model.dim)? {
                let steps = (s.t_max() / DEFAULT_FLOW_DT).ceil() as usize;
                if steps > 0 {
                    flow.run(a.coords(), s.t_max() / steps as f64, steps)?;
                }
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Husimi measure on the covering lattice, pruned for transport.
pub fn husimi_reduced(state: &QuantumState, spacing_units: f64, prune: f64) -> Result<Reduced> {
    let lattice = covering_lattice(state, spacing_units * state.grid().hbar().sqrt())?;
    husimi_reduced_on(state, &lattice, prune)
}

fn husimi_reduced_on(state: &QuantumState, lattice: &LatticeSpec, prune: f64) -> Result<Reduced> {
    prune_support(&husimi(state, lattice)?, prune)
}

fn transport(mu: &PhaseSpaceMeasure, nu: &PhaseSpaceMeasure, p: f64, s: &Scenario) -> Result<TransportResult> {
    wasserstein_with(&TransportProblem { mu: mu.clone(), nu: nu.clone(), p }, &s.solver)
}

fn propagate(state: &QuantumState, model: &HamiltonianModel, t: f64) -> Result<QuantumState> {
    let hbar = state.grid().hbar();
    propagate_quantum(state, model, t, default_dt(hbar, t), method_for(model))
}

/// Lipschitz constant of `Φ_T`: `e^{Λ_H T}` for separable models, sampled otherwise.
fn flow_lip(model: &HamiltonianModel, lambda: f64, t: f64, seed: u64) -> Result<f64> {
    if t == 0.0 {
        return Ok(1.0);
    }
    if model.is_separable() {
        return Ok((lambda * t).exp());
    }
    flow_lipschitz(model, t, &model.lipschitz_box, 64, seed)
}

fn ordered_jobs<T, F>(hbars: &[f64], job: F) -> Result<(Vec<T>, Vec<(f64, f64)>)>
where
    T: Send,
    F: Fn(f64) -> Result<T> + Sync,
{
    let out: Vec<(Result<T>, f64)> = hbars
        .par_iter()
        .map(|&h| {
            let start = Instant::now();
            let r = job(h);
            (r, start.elapsed().as_secs_f64())
        })
        .collect();
    let mut values = Vec::with_capacity(out.len());
    let mut times = Vec::with_capacity(out.len());
    for ((r, secs), h) in out.into_iter().zip(hbars) {
        values.push(r?);
        times.push((*h, secs));
    }
    Ok((values, times))
}

/// Runs the sweep named by `scenario.check`.
pub fn run_scenario(s: &Scenario) -> Result<(SweepReport, Timing)> {
    let start = Instant::now();
    let (report, rows) = match s.check {
        CheckKind::Egorov => run_egorov_sweep(s)?,
        CheckKind::Meanfield => run_meanfield_check(s)?,
        CheckKind::Localization => run_localization_check(s)?,
        CheckKind::LocalUnitary => run_local_unitary_check(s)?,
        CheckKind::OperatorEgorov => run_operator_egorov_check(s)?,
    };
    Ok((report, Timing { total_seconds: start.elapsed().as_secs_f64(), rows }))
}

fn lambda_of(model: &HamiltonianModel) -> Result<f64> {
    Ok(estimate_lipschitz(model)?.lambda)
}

/// Groups rows by a label in order of first appearance.
fn groups<'a, F: Fn(&SweepRow) -> Option<String>>(rows: &'a [SweepRow], label: F) -> Vec<(String, Vec<&'a SweepRow>)> {
    let mut out: Vec<(String, Vec<&SweepRow>)> = Vec::new();
    for r in rows {
        if let Some(l) = label(r) {
            match out.iter_mut().find(|(k, _)| *k == l) {
                Some((_, v)) => v.push(r),
                None => out.push((l, vec![r])),
            }
        }
    }
    out
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

fn tp_label(r: &SweepRow) -> String {
    match r.p {
        Some(p) => format!("T={},p={}", fmt_num(r.t), fmt_num(p)),
        None => format!("T={}", fmt_num(r.t)),
    }
}

/// Slope gate over one group; a note replaces the gate when the sweep is too short to fit.
fn slope_gate(report: &mut SweepReport, label: &str, rows: &[&SweepRow], key: &str, slope_min: f64) {
    let owned: Vec<SweepRow> = rows.iter().filter(|r| r.measured > 0.0).map(|r| (*r).clone()).collect();
    match fit_scaling(&owned, "hbar", key) {
        Ok(mut fit) => {
            fit.label = label.to_string();
            report.gates.push(Gate::lower(
                "slope",
                format!("{label}: log–log slope of {key} against hbar"),
                fit.slope,
                slope_min,
            ));
            report.fits.push(fit);
        }
        Err(e) => report.notes.push(format!("{label}: no slope gate ({e})")),
    }
}

/// Calibrated gate `y/scale ≤ C_cal` with `C_cal` fitted on the rows at the largest `ℏ`.
#[allow(clippy::too_many_arguments)]
fn calibrated_gate<S, Y, Z>(
    report: &mut SweepReport,
    name: &str,
    label: &str,
    rows: &[&SweepRow],
    slack: f64,
    scale: S,
    calib: Y,
    check: Z,
) where
    S: Fn(&SweepRow) -> f64,
    Y: Fn(&SweepRow) -> f64,
    Z: Fn(&SweepRow) -> f64,
{
    let h_max = rows.iter().map(|r| r.hbar).fold(0.0, f64::max);
    let c_cal = rows.iter().filter(|r| r.hbar == h_max).map(|r| calib(r) / scale(r)).fold(0.0, f64::max);
    report.constants.insert(format!("C_cal[{name};{label}]"), c_cal);
    let finer: Vec<&&SweepRow> = rows.iter().filter(|r| r.hbar < h_max).collect();
    if finer.is_empty() {
        report.notes.push(format!("{label}: no finer hbar to test the {name} constant"));
        return;
    }
    let worst = finer.iter().map(|r| check(r) / scale(r)).fold(0.0, f64::max);
    report.gates.push(Gate::upper(name, format!("{label}: calibrated at hbar = {h_max}"), worst, c_cal * (1.0 + slack)));
}

// ---------------------------------------------------------------- Egorov

struct Legs {
    noise: TransportResult,
    mixture: TransportResult,
    lipschitz: TransportResult,
}

/// `d_{W_p}(H_{U_Tρ}, Φ_T H_ρ)` across the sweep.
pub fn run_egorov_sweep(s: &Scenario) -> Result<(SweepReport, Vec<(f64, f64)>)> {
    let model = build_model(s)?;
    let lambda = lambda_of(&model)?;
    let o = &s.options;
    let (per_h, timing) = ordered_jobs(&s.hbar_list, |hbar| -> Result<Vec<SweepRow>> {
        let grid = grid_for(s, &model, hbar)?;
        let rho = s.initial.build(&grid)?;
        let h0 = husimi_reduced(&rho, o.spacing, o.prune)?;
        let noised = if o.legs {
            let lat = covering_lattice(&rho, o.spacing * hbar.sqrt())?;
            let n = noising_channel_with(&rho, &lat)?;
            let hn = husimi_reduced(&n.state, o.spacing, o.prune)?;
            Some((n, hn))
        } else {
            None
        };
        let mut rows = Vec::new();
        for &t in &s.t_list {
            let rho_t = propagate(&rho, &model, t)?;
            let ht = husimi_reduced(&rho_t, o.spacing, o.prune)?;
            let pushed = pushforward(&h0.measure, &model, t, DEFAULT_FLOW_DT)?;
            let lip = flow_lip(&model, lambda, t, s.seed)?;
            let legs_t = match &noised {
                Some((n, hn)) => {
                    let b = husimi_reduced(&propagate(&n.state, &model, t)?, o.spacing, o.prune)?;
                    let c = pushforward(&hn.measure, &model, t, DEFAULT_FLOW_DT)?;
                    Some((b, c, hn))
                }
                None => None,
            };
            for &p in &s.p_list {
                let cert_extra = ht.certificate(p) + lip * h0.certificate(p);
                let res = transport(&ht.measure, &pushed, p, s)?.with_extra_gap(cert_extra);
                let mut row = SweepRow::new(hbar, t);
                row.p = Some(p);
                row.measured = res.distance;
                row.lower = res.lower();
                row.certificate = res.bound_gap;
                row.values.insert("cost_gap".into(), res.cost_gap);
                row.values.insert("atoms_quantum".into(), ht.measure.len() as f64);
                row.values.insert("atoms_classical".into(), pushed.len() as f64);
                row.values.insert("d_over_sqrt_hbar".into(), res.distance / hbar.sqrt());
                row.values.insert("flow_lipschitz".into(), lip);
                if let (Some((b, c, hn)), Some((n, _))) = (&legs_t, &noised) {
                    let legs = Legs {
                        noise: transport(&ht.measure, &b.measure, p, s)?,
                        mixture: transport(&b.measure, c, p, s)?,
                        lipschitz: transport(c, &pushed, p, s)?,
                    };
                    let sum = legs.noise.distance + legs.mixture.distance + legs.lipschitz.distance;
                    let cert = ht.certificate(p) + b.certificate(p) + lip * (hn.certificate(p) + h0.certificate(p));
                    row.values.insert("leg_noise".into(), legs.noise.distance);
                    row.values.insert("leg_mixture".into(), legs.mixture.distance);
                    row.values.insert("leg_lipschitz".into(), legs.lipschitz.distance);
                    row.values.insert("legs_sum".into(), sum + cert);
                    row.values.insert("noising_branches".into(), n.atoms.len() as f64);
                    if t == s.t_list[0] {
                        let st = transport(&hn.measure, &h0.measure, p, s)?;
                        row.values.insert("noising_static".into(), st.distance);
                    }
                }
                rows.push(row);
            }
        }
        Ok(rows)
    })?;
    let mut report = SweepReport::new(s);
    report.constants.insert("lambda_H".into(), lambda);
    report.rows = per_h.into_iter().flatten().collect();
    let rows = report.rows.clone();
    for (label, g) in groups(&rows, |r| Some(tp_label(r))) {
        if g[0].t == 0.0 {
            let worst = g.iter().map(|r| r.measured - r.certificate).fold(f64::NEG_INFINITY, f64::max);
            report.gates.push(Gate::upper("static", format!("{label}: distance within its certificate"), worst, 1e-9));
            continue;
        }
        slope_gate(&mut report, &label, &g, "measured", o.slope_min);
        calibrated_gate(&mut report, "sqrt_hbar", &label, &g, 0.0, |r| r.hbar.sqrt(), |r| r.measured, |r| r.lower);
        if o.legs {
            let worst = g
                .iter()
                .map(|r| r.lower - r.values["legs_sum"])
                .fold(f64::NEG_INFINITY, f64::max);
            report.gates.push(Gate::upper("triangle", format!("{label}: distance minus the sum of legs"), worst, 0.0));
        }
    }
    if o.legs {
        let statics: Vec<SweepRow> = rows.iter().filter(|r| r.values.contains_key("noising_static")).cloned().collect();
        for (label, g) in groups(&statics, |r| r.p.map(|p| format!("p={}", fmt_num(p)))) {
            let v = |r: &SweepRow| r.values["noising_static"];
            calibrated_gate(&mut report, "noising_leg", &label, &g, o.slack, |r| r.hbar.sqrt(), v, v);
            let p = g[0].p.expect("transport row");
            let c = gaussian_moment_constant(model.dim, p);
            report.constants.insert(format!("noising_constant[{label}]"), c);
            let worst = g.iter().map(|r| v(r) / r.hbar.sqrt()).fold(0.0, f64::max);
            report.gates.push(Gate::upper(
                "noising_leg_closed_form",
                format!("{label}: d / sqrt(hbar) against the Gaussian moment constant"),
                worst,
                c * (1.0 + o.slack),
            ));
        }
    }
    Ok((report.finish(), timing))
}

/// `(E|Z|^p)^{1/p}/sqrt(ℏ)` for `Z ~ N(0, ℏ·Id)` on ℝ^{2D}, which bounds `d_{W_p}(μ, μ ∗ γ_ℏ)/sqrt(ℏ)`.
pub fn gaussian_moment_constant(dim: usize, p: f64) -> f64 {
    let d = dim as f64;
    (2f64.powf(p / 2.0) * (ln_gamma(d + p / 2.0) - ln_gamma(d)).exp()).powf(1.0 / p)
}

// ------------------------------------------------------------ mean field

/// Explicit-constant gate `(1/2D)·d_{W₂}² ≤ (1 + 2e^{Λ_H T})ℏ` for coherent mixtures.
pub fn run_meanfield_check(s: &Scenario) -> Result<(SweepReport, Vec<(f64, f64)>)> {
    let model = build_model(s)?;
    if !model.is_separable() {
        return Err(Error::Unsupported("the mean-field check needs a separable model".into()));
    }
    let atoms = s
        .initial
        .mixture_atoms()
        .ok_or_else(|| Error::Unsupported("the mean-field check needs a coherent or coherent-mixture state".into()))??;
    let lambda = lambda_of(&model)?;
    let d = model.dim as f64;
    let o = &s.options;
    let slack = o.slack;
    let (per_h, timing) = ordered_jobs(&s.hbar_list, |hbar| -> Result<Vec<SweepRow>> {
        let grid = grid_for(s, &model, hbar)?;
        let rho = s.initial.build(&grid)?;
        let h0 = husimi_reduced(&rho, o.spacing, o.prune)?;
        // one coherent component at a time for the convexity cross-check
        let comps: Vec<(f64, QuantumState, Reduced)> = atoms
            .iter()
            .map(|(a, w)| {
                let st = coherent_state(&grid, a)?;
                let h = husimi_reduced(&st, o.spacing, o.prune)?;
                Ok((*w, st, h))
            })
            .collect::<Result<_>>()?;
        let mut rows = Vec::new();
        for &t in &s.t_list {
            let lip = (lambda * t).exp();
            let ht = husimi_reduced(&propagate(&rho, &model, t)?, o.spacing, o.prune)?;
            let pushed = pushforward(&h0.measure, &model, t, DEFAULT_FLOW_DT)?;
            let res = transport(&ht.measure, &pushed, 2.0, s)?.with_extra_gap(ht.certificate(2.0) + lip * h0.certificate(2.0));
            let mut conv = 0.0;
            for (w, st, h) in &comps {
                let hq = husimi_reduced(&propagate(st, &model, t)?, o.spacing, o.prune)?;
                let hc = pushforward(&h.measure, &model, t, DEFAULT_FLOW_DT)?;
                let r = transport(&hq.measure, &hc, 2.0, s)?;
                conv += w * (r.distance + hq.certificate(2.0) + lip * h.certificate(2.0)).powi(2);
            }
            let measured = res.distance.powi(2) / (2.0 * d);
            let bound = (1.0 + 2.0 * (lambda * t).exp()) * hbar;
            let mut row = SweepRow::new(hbar, t);
            row.p = Some(2.0);
            row.measured = measured;
            row.lower = res.lower().powi(2) / (2.0 * d);
            row.bound = Some(bound);
            row.certificate = res.bound_gap;
            row.pass = Some(measured <= bound * (1.0 + slack));
            row.values.insert("distance".into(), res.distance);
            row.values.insert("convexity_bound".into(), conv.sqrt());
            row.values.insert("ratio".into(), measured / bound);
            row.values.insert("atoms_quantum".into(), ht.measure.len() as f64);
            rows.push(row);
        }
        Ok(rows)
    })?;
    let mut report = SweepReport::new(s);
    report.constants.insert("lambda_H".into(), lambda);
    report.constants.insert("slack".into(), slack);
    report.rows = per_h.into_iter().flatten().collect();
    let worst = report.rows.iter().map(|r| r.values["ratio"]).fold(0.0, f64::max);
    report.gates.push(Gate::upper("explicit_constant", "(1/2D) d^2 / ((1 + 2 e^{lambda T}) hbar)".into(), worst, 1.0 + slack));
    let conv = report
        .rows
        .iter()
        .map(|r| (r.values["distance"] - r.certificate) - r.values["convexity_bound"])
        .fold(f64::NEG_INFINITY, f64::max);
    report.gates.push(Gate::upper("convexity", "full-mixture distance minus the component bound".into(), conv, 1e-9));
    Ok((report.finish(), timing))
}

// ---------------------------------------------------------- localization

fn center_of(recipe: &InitialRecipe, state: &QuantumState) -> Result<PhasePoint> {
    match recipe {
        InitialRecipe::Coherent { center } => PhasePoint::new(center.clone()),
        _ => Ok(state.mean()),
    }
}

/// Growth of the re-centered localization norm along the classical trajectory.
pub fn run_localization_check(s: &Scenario) -> Result<(SweepReport, Vec<(f64, f64)>)> {
    let model = build_model(s)?;
    let separable = model.is_separable();
    let lambda = lambda_of(&model)?;
    let k = s.options.k;
    let (per_h, timing) = ordered_jobs(&s.hbar_list, |hbar| -> Result<Vec<SweepRow>> {
        let grid = grid_for(s, &model, hbar)?;
        let rho = s.initial.build(&grid)?;
        let a0 = center_of(&s.initial, &rho)?;
        let norm = |st: &QuantumState, a: &PhasePoint| -> Result<f64> {
            if separable {
                Ok(sobolev_norm_with(st, 1, a, SobolevForm::Quadratic)?.powi(2))
            } else {
                sobolev_norm(st, k, a)
            }
        };
        let q0 = norm(&rho, &a0)?;
        let mut rows = Vec::new();
        for &t in &s.t_list {
            let rho_t = propagate(&rho, &model, t)?;
            let at = flow_point(&a0, &model, t, DEFAULT_FLOW_DT)?;
            let qt = norm(&rho_t, &at)?;
            let chain = uncertainty_chain_check(&rho_t, &at, 2)?;
            let margin = chain.links.iter().map(|l| l.margin).fold(f64::INFINITY, f64::min);
            let mut row = SweepRow::new(hbar, t);
            row.measured = qt / q0;
            row.lower = row.measured;
            row.values.insert("Q_T".into(), qt);
            row.values.insert("Q_0".into(), q0);
            row.values.insert("chain_margin".into(), margin);
            if separable {
                let bound = (2.0 * lambda * t).exp();
                row.bound = Some(bound);
                row.pass = Some(row.measured <= bound * (1.0 + LOCALIZATION_SLACK));
            }
            rows.push(row);
        }
        // the k = 2 chain at evenly spaced times along the trajectory
        let t_max = s.t_max();
        let mut chain_worst = f64::INFINITY;
        if t_max > 0.0 {
            let dt = default_dt(hbar, t_max);
            let total = step_count(t_max, dt)?;
            let stride = (total / CHAIN_SAMPLES).max(1);
            let prop = QuantumPropagator::new(&model, &grid, dt, method_for(&model))?;
            let mut st = rho.clone();
            let mut done = 0;
            while done < total {
                let n = stride.min(total - done);
                st = prop.evolve(&st, n)?;
                done += n;
                let at = flow_point(&a0, &model, done as f64 * dt, DEFAULT_FLOW_DT)?;
                let chain = uncertainty_chain_check(&st, &at, 2)?;
                chain_worst = chain_worst.min(chain.links.iter().map(|l| l.margin).fold(f64::INFINITY, f64::min));
            }
        }
        for r in rows.iter_mut() {
            r.values.insert("chain_margin_trajectory".into(), chain_worst);
        }
        Ok(rows)
    })?;
    let mut report = SweepReport::new(s);
    report.constants.insert("lambda_H".into(), lambda);
    report.rows = per_h.into_iter().flatten().collect();
    let chain = report
        .rows
        .iter()
        .flat_map(|r| [r.values["chain_margin"], r.values["chain_margin_trajectory"]])
        .fold(f64::INFINITY, f64::min);
    report.gates.push(Gate::lower("chain", "min of ||.||_{H^k} - sqrt(hbar) ||.||_{H^{k-1}}, k = 1, 2".into(), chain, -CHAIN_TOL));
    if separable {
        report.constants.insert("slack".into(), LOCALIZATION_SLACK);
        let worst = report.rows.iter().map(|r| r.measured / r.bound.unwrap_or(1.0)).fold(0.0, f64::max);
        report.gates.push(Gate::upper("gronwall", "Q(T) / (e^{2 lambda T} Q(0))".into(), worst, 1.0 + LOCALIZATION_SLACK));
    } else {
        // rate calibrated at the smallest positive T of each hbar
        let rows = report.rows.clone();
        for (label, g) in groups(&rows, |r| Some(format!("hbar={}", fmt_num(r.hbar)))) {
            let positive: Vec<&&SweepRow> = g.iter().filter(|r| r.t > 0.0).collect();
            let Some(first) = positive.iter().min_by(|a, b| a.t.total_cmp(&b.t)) else {
                continue;
            };
            let rate = (first.measured.ln() / first.t).max(0.0);
            report.constants.insert(format!("rate_cal[{label}]"), rate);
            let worst = positive
                .iter()
                .map(|r| r.measured.ln() - rate * r.t)
                .fold(f64::NEG_INFINITY, f64::max);
            report.gates.push(Gate::upper(
                "calibrated_rate",
                format!("{label}: log growth above the calibrated exponential"),
                worst,
                (1.0 + s.options.slack).ln(),
            ));
        }
    }
    Ok((report.finish(), timing))
}

// --------------------------------------------------------- local unitary

/// Dense matrix of `τ_α` on the grid.
pub fn translation_matrix(grid: &PhaseSpaceGrid, alpha: &PhasePoint) -> Result<OperatorMatrix> {
    let n = grid.len();
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for j in 0..n {
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        e[j] = Complex64::new(1.0, 0.0);
        let col = translate_values(grid, &e, alpha);
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    OperatorMatrix::new(grid.clone(), m)
}

/// `W = U_T† τ_α U_T` as a dense matrix.
pub fn local_unitary(model: &HamiltonianModel, grid: &PhaseSpaceGrid, alpha: &PhasePoint, t: f64) -> Result<OperatorMatrix> {
    let tau = translation_matrix(grid, alpha)?;
    if t == 0.0 {
        return Ok(tau);
    }
    let u = QuantumPropagator::new(model, grid, default_dt(grid.hbar(), t), Method::Dense)?.unitary(t)?;
    tau.conjugate_by(&u.adjoint())
}

/// `d_{W_p}(H_ρ, H_{WρW†})` for conjugated translations `W`.
pub fn run_local_unitary_check(s: &Scenario) -> Result<(SweepReport, Vec<(f64, f64)>)> {
    let model = build_model(s)?;
    let o = &s.options;
    let (per_h, timing) = ordered_jobs(&s.hbar_list, |hbar| -> Result<Vec<SweepRow>> {
        let grid = grid_for(s, &model, hbar)?;
        let rho = s.initial.build(&grid)?;
        let lattice = covering_lattice(&rho, o.spacing * hbar.sqrt())?;
        let h0 = husimi_reduced_on(&rho, &lattice, o.prune)?;
        let mut rows = Vec::new();
        for &t in &s.t_list {
            for &shift in &o.shifts {
                let alpha = PhasePoint::new({
                    let mut c = vec![0.0; 2 * grid.dim()];
                    c[0] = shift * hbar.sqrt();
                    c
                })?;
                let w = local_unitary(&model, &grid, &alpha, t)?;
                let moved = w.apply_state(&rho)?;
                moved.check_boundary()?;
                let lat = if t == 0.0 { lattice.translated(alpha.coords()) } else { covering_lattice(&moved, o.spacing * hbar.sqrt())? };
                let h1 = husimi_reduced_on(&moved, &lat, o.prune)?;
                let z = if o.z_norms {
                    let zl = covering_lattice(&rho, Z_LATTICE_SPACING * hbar.sqrt())?;
                    Some((1..=3).map(|m| z_norm(&w, m, &zl)).collect::<Result<Vec<f64>>>()?)
                } else {
                    None
                };
                for &p in &s.p_list {
                    let res = transport(&h0.measure, &h1.measure, p, s)?.with_extra_gap(h0.certificate(p) + h1.certificate(p));
                    let mut row = SweepRow::new(hbar, t);
                    row.p = Some(p);
                    row.shift = Some(shift);
                    row.measured = res.distance;
                    row.lower = res.lower();
                    row.certificate = res.bound_gap;
                    row.values.insert("alpha_norm".into(), alpha.norm());
                    row.values.insert("shape".into(), res.distance / (hbar.sqrt() + alpha.norm()));
                    if t == 0.0 {
                        let err = (res.distance - alpha.norm()).abs();
                        row.values.insert("identity_error".into(), err);
                        row.pass = Some(err <= res.bound_gap + 1e-9);
                    }
                    if let Some(z) = &z {
                        for (m, v) in z.iter().enumerate() {
                            row.values.insert(format!("z{}", m + 1), *v);
                        }
                    }
                    rows.push(row);
                }
            }
        }
        Ok(rows)
    })?;
    let mut report = SweepReport::new(s);
    report.rows = per_h.into_iter().flatten().collect();
    let rows = report.rows.clone();
    for (label, g) in groups(&rows, |r| if r.t > 0.0 { Some(tp_label(r)) } else { None }) {
        let scale = |r: &SweepRow| r.hbar.sqrt() + r.values["alpha_norm"];
        calibrated_gate(&mut report, "shape", &label, &g, o.slack, scale, |r| r.measured, |r| r.lower);
    }
    Ok((report.finish(), timing))
}

// -------------------------------------------------------- operator Egorov

/// `Φ_{−T}(z)`: fourth-order composition of leapfrog steps for separable models,
/// implicit midpoint otherwise.
pub fn backward_flow(model: &HamiltonianModel, z: &mut [f64], t: f64) -> Result<()> {
    if t == 0.0 {
        return Ok(());
    }
    let flow = ClassicalFlow::new(model);
    let n = (t / SYMBOL_FLOW_DT).ceil() as usize;
    let dt = -t / n as f64;
    if flow.method() == FlowMethod::Leapfrog {
        let w1 = 1.0 / (2.0 - 2f64.powf(1.0 / 3.0));
        let w0 = 1.0 - 2.0 * w1;
        for _ in 0..n {
            flow.step(z, w1 * dt)?;
            flow.step(z, w0 * dt)?;
            flow.step(z, w1 * dt)?;
        }
    } else {
        for _ in 0..n * 10 {
            flow.step(z, dt / 10.0)?;
        }
    }
    Ok(())
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<Complex64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Orthonormal basis (columns) of the subspace selected by `c`, or `None` for the whole space.
pub fn compression_basis(grid: &PhaseSpaceGrid, c: &Compression) -> Result<Option<DMatrix<Complex64>>> {
    let n = grid.len();
    let h = grid.hbar();
    match c {
        Compression::None => Ok(None),
        Compression::Coherent { x_cut, p_cut } => {
            let step = 0.5 * h.sqrt();
            let lat = LatticeSpec::covering(&[-x_cut, -p_cut], &[*x_cut, *p_cut], &[step, step], &[0.0, 0.0])?;
            let mut cols = Vec::with_capacity(lat.len());
            for i in 0..lat.len() {
                let a = PhasePoint::new(lat.point(i))?;
                coherent_state(grid, &a)?;
                cols.extend(coherent_values(grid, &a));
            }
            let m = DMatrix::from_vec(n, lat.len(), cols);
            let svd = m.svd(true, false);
            let u = svd.u.expect("left vectors requested");
            let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
            let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > 1e-8 * smax).collect();
            Ok(Some(DMatrix::from_fn(n, keep.len(), |i, j| u[(i, keep[j])])))
        }
    }
}

fn compressed_norm(m: &DMatrix<Complex64>, basis: &Option<DMatrix<Complex64>>) -> f64 {
    match basis {
        None => spectral_norm(m),
        Some(q) => spectral_norm(&(q.adjoint() * m * q)),
    }
}

/// `‖U_T Op(G) U_T† − Op(G∘Φ_{−T})‖` and the mollification term across the sweep.
pub fn run_operator_egorov_check(s: &Scenario) -> Result<(SweepReport, Vec<(f64, f64)>)> {
    let model = build_model(s)?;
    if model.dim != 1 {
        return Err(Error::Unsupported("operator checks are one-dimensional".into()));
    }
    let g = s.options.observable;
    let (per_h, timing) = ordered_jobs(&s.hbar_list, |hbar| -> Result<Vec<SweepRow>> {
        let grid = grid_for(s, &model, hbar)?;
        let basis = compression_basis(&grid, &s.options.compression)?;
        let op_g = weyl_quantize(|x, p| g.value(x, p), &grid)?;
        let moll = weyl_quantize(|x, p| mollify_symbol(|z: &[f64]| g.value(z[0], z[1]), hbar, 1)(&[x, p]), &grid)?;
        let moll_norm = compressed_norm(&(moll.entries() - op_g.entries()), &basis);
        let eig = QuantumPropagator::new(&model, &grid, 1.0, Method::Dense)?;
        let mut rows = Vec::new();
        for &t in &s.t_list {
            let a = op_g.conjugate_by(&eig.unitary(t)?)?;
            let b = weyl_quantize(
                |x, p| {
                    let mut z = [x, p];
                    match backward_flow(&model, &mut z, t) {
                        Ok(()) => g.value(z[0], z[1]),
                        Err(_) => f64::NAN,
                    }
                },
                &grid,
            )?;
            let measured = compressed_norm(&(a.entries() - b.entries()), &basis);
            let mut row = SweepRow::new(hbar, t);
            row.measured = measured;
            row.lower = measured;
            row.values.insert("mollification".into(), moll_norm);
            row.values.insert("basis_size".into(), basis.as_ref().map(|q| q.ncols()).unwrap_or(grid.len()) as f64);
            if matches!(g, super::scenario::Observable::Sin) {
                row.values.insert("mollification_oracle".into(), 1.0 - (-hbar / 2.0).exp());
            }
            rows.push(row);
        }
        Ok(rows)
    })?;
    let mut report = SweepReport::new(s);
    report.rows = per_h.into_iter().flatten().collect();
    let rows = report.rows.clone();
    for (label, grp) in groups(&rows, |r| Some(tp_label(r))) {
        if grp[0].t == 0.0 {
            let worst = grp.iter().map(|r| r.measured).fold(0.0, f64::max);
            report.gates.push(Gate::upper("static", format!("{label}: operators agree at T = 0"), worst, 1e-8));
            continue;
        }
        slope_gate(&mut report, &label, &grp, "measured", s.options.slope_min);
    }
    // one mollification row per hbar
    let first_t = s.t_list[0];
    let moll: Vec<SweepRow> = rows.iter().filter(|r| r.t == first_t).cloned().collect();
    let refs: Vec<&SweepRow> = moll.iter().collect();
    let v = |r: &SweepRow| r.values["mollification"];
    calibrated_gate(&mut report, "mollification", "all hbar", &refs, 0.0, |r| r.hbar.sqrt(), v, v);
    if matches!(g, super::scenario::Observable::Sin) {
        let worst = moll.iter().map(|r| r.values["mollification"] / r.values["mollification_oracle"]).fold(0.0, f64::max);
        report.gates.push(Gate::upper("mollification_closed_form", "||Op(G*gamma - G)|| / (1 - e^{-hbar/2})".into(), worst, 1.1));
    }
    Ok((report.finish(), timing))
}

/// Husimi functions at `T = 0` and `T = T_max` for the smallest `ℏ` (state-based checks only).
pub fn husimi_snapshots(s: &Scenario) -> Result<Vec<(f64, PhaseSpaceMeasure)>> {
    if s.check == CheckKind::OperatorEgorov {
        return Ok(Vec::new());
    }
    let model = build_model(s)?;
    let hbar = s.hbar_list.iter().cloned().fold(f64::INFINITY, f64::min);
    let grid = grid_for(s, &model, hbar)?;
    let rho = s.initial.build(&grid)?;
    let mut out = Vec::new();
    for t in [0.0, s.t_max()] {
        let st = propagate(&rho, &model, t)?;
        let lattice = covering_lattice(&st, s.options.spacing * hbar.sqrt())?;
        out.push((t, husimi(&st, &lattice)?));
        if s.t_max() == 0.0 {
            break;
        }
    }
    Ok(out)
}
