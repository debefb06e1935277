//! Log-domain Sinkhorn iterations with an annealed regularization.

use rayon::prelude::*;

/// Outcome of the annealed Sinkhorn run, with a rounded feasible plan.
pub(crate) struct EntropicSolution {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub epsilon: f64,
    pub iterations: usize,
    pub marginal_error: f64,
    /// Cost of the rounded plan.
    pub primal: f64,
    /// Rounded plan entries above `1e-300`, when requested.
    pub plan: Option<Vec<(usize, usize, f64)>>,
}

pub(crate) struct Schedule {
    pub start: f64,
    pub end: f64,
    pub levels: usize,
    pub tol: f64,
    pub level_cap: usize,
    pub final_cap: usize,
}

fn lse(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `cost` is row-major `n × m`.
pub(crate) fn solve(a: &[f64], b: &[f64], cost: &[f64], schedule: &Schedule, keep_plan: bool) -> EntropicSolution {
    let n = a.len();
    let m = b.len();
    let la: Vec<f64> = a.iter().map(|v| v.ln()).collect();
    let lb: Vec<f64> = b.iter().map(|v| v.ln()).collect();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut iterations = 0;
    let mut err = f64::INFINITY;
    let levels = schedule.levels.max(1);
    let ratio = (schedule.end / schedule.start).powf(1.0 / (levels - 1).max(1) as f64);
    let mut eps = schedule.start;
    for level in 0..levels {
        if level + 1 == levels {
            eps = schedule.end;
        }
        let cap = if level + 1 == levels { schedule.final_cap } else { schedule.level_cap };
        for it in 0..cap {
            f.par_iter_mut().enumerate().for_each(|(i, fi)| {
                let row = &cost[i * m..(i + 1) * m];
                *fi = -eps * lse((0..m).map(|j| (g[j] - row[j]) / eps + lb[j]));
            });
            update_columns(&f, &mut g, cost, &la, eps, m);
            iterations += 1;
            if it % 10 == 9 || it + 1 == cap {
                err = row_error(a, &f, &g, cost, &lb, eps);
                if err <= schedule.tol {
                    break;
                }
            }
        }
        eps *= ratio;
    }
    let eps = schedule.end;
    let (primal, plan) = round(a, b, &f, &g, cost, eps, keep_plan);
    EntropicSolution { f, g, epsilon: eps, iterations, marginal_error: err, primal, plan }
}

fn update_columns(f: &[f64], g: &mut [f64], cost: &[f64], la: &[f64], eps: f64, m: usize) {
    let n = f.len();
    let mut max = vec![f64::NEG_INFINITY; m];
    for i in 0..n {
        let row = &cost[i * m..(i + 1) * m];
        let off = f[i] / eps + la[i];
        for j in 0..m {
            let v = off - row[j] / eps;
            if v > max[j] {
                max[j] = v;
            }
        }
    }
    let mut sum = vec![0.0; m];
    for i in 0..n {
        let row = &cost[i * m..(i + 1) * m];
        let off = f[i] / eps + la[i];
        for j in 0..m {
            sum[j] += (off - row[j] / eps - max[j]).exp();
        }
    }
    for j in 0..m {
        g[j] = -eps * (max[j] + sum[j].ln());
    }
}

fn row_error(a: &[f64], f: &[f64], g: &[f64], cost: &[f64], lb: &[f64], eps: f64) -> f64 {
    let m = g.len();
    (0..a.len())
        .into_par_iter()
        .map(|i| {
            let row = &cost[i * m..(i + 1) * m];
            let s: f64 = (0..m).map(|j| ((f[i] + g[j] - row[j]) / eps + lb[j]).exp()).sum();
            (a[i] * s - a[i]).abs()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

/// Projects the Gibbs plan onto the transport polytope and returns its cost.
fn round(a: &[f64], b: &[f64], f: &[f64], g: &[f64], cost: &[f64], eps: f64, keep_plan: bool) -> (f64, Option<Vec<(usize, usize, f64)>>) {
    let n = a.len();
    let m = b.len();
    let entry = |i: usize, j: usize| a[i] * b[j] * ((f[i] + g[j] - cost[i * m + j]) / eps).exp();
    let rows: Vec<f64> = (0..n).into_par_iter().map(|i| (0..m).map(|j| entry(i, j)).sum()).collect();
    let x: Vec<f64> = rows.iter().zip(a).map(|(r, ai)| if *r > *ai { ai / r } else { 1.0 }).collect();
    let mut cols = vec![0.0; m];
    for i in 0..n {
        for j in 0..m {
            cols[j] += x[i] * entry(i, j);
        }
    }
    let y: Vec<f64> = cols.iter().zip(b).map(|(c, bj)| if *c > *bj { bj / c } else { 1.0 }).collect();
    let scaled = |i: usize, j: usize| x[i] * y[j] * entry(i, j);
    let rows2: Vec<f64> = (0..n).into_par_iter().map(|i| (0..m).map(|j| scaled(i, j)).sum()).collect();
    let mut cols2 = vec![0.0; m];
    for i in 0..n {
        for j in 0..m {
            cols2[j] += scaled(i, j);
        }
    }
    let er: Vec<f64> = a.iter().zip(&rows2).map(|(ai, r)| (ai - r).max(0.0)).collect();
    let ec: Vec<f64> = b.iter().zip(&cols2).map(|(bj, c)| (bj - c).max(0.0)).collect();
    let norm: f64 = er.iter().sum();
    let correction = |i: usize, j: usize| if norm > 0.0 { er[i] * ec[j] / norm } else { 0.0 };
    let primal: f64 = (0..n)
        .into_par_iter()
        .map(|i| (0..m).map(|j| cost[i * m + j] * (scaled(i, j) + correction(i, j))).sum::<f64>())
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    let plan = keep_plan.then(|| {
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..m {
                let v = scaled(i, j) + correction(i, j);
                if v > 1e-300 {
                    out.push((i, j, v));
                }
            }
        }
        out
    });
    (primal, plan)
}
