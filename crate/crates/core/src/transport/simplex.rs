//! Network simplex for the balanced transportation problem.

use crate::error::{Error, Result};

/// Optimal basic solution of a transportation problem.
pub(crate) struct SimplexSolution {
    /// Basis arcs `(source, sink, flow)`.
    pub arcs: Vec<(usize, usize, f64)>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub pivots: usize,
}

struct Tree {
    n: usize,
    arcs: Vec<(usize, usize, f64)>,
    adj: Vec<Vec<usize>>,
    parent_arc: Vec<usize>,
    parent: Vec<usize>,
    depth: Vec<usize>,
    pot: Vec<f64>,
    stack: Vec<usize>,
}

impl Tree {
    fn node_of_sink(&self, j: usize) -> usize {
        self.n + j
    }

    /// Recomputes parents, depths and potentials from the root (source 0).
    fn relabel(&mut self, cost: &dyn Fn(usize, usize) -> f64) {
        let total = self.adj.len();
        self.parent[0] = usize::MAX;
        self.parent_arc[0] = usize::MAX;
        self.depth[0] = 0;
        self.pot[0] = 0.0;
        self.stack.clear();
        self.stack.push(0);
        let mut seen = 1;
        while let Some(node) = self.stack.pop() {
            for k in 0..self.adj[node].len() {
                let a = self.adj[node][k];
                if a == self.parent_arc[node] {
                    continue;
                }
                let (i, j, _) = self.arcs[a];
                let c = cost(i, j);
                let other = if node < self.n { self.n + j } else { i };
                self.parent[other] = node;
                self.parent_arc[other] = a;
                self.depth[other] = self.depth[node] + 1;
                // u_i + v_j = c_ij with u stored for sources and v for sinks.
                self.pot[other] = c - self.pot[node];
                self.stack.push(other);
                seen += 1;
            }
        }
        debug_assert_eq!(seen, total);
    }
}

/// Solves `min Σ c_ij x_ij` subject to row sums `supply` and column sums `demand`.
///
/// `order_s` and `order_d` give the north-west-corner visiting order of the initial basis.
pub(crate) fn solve(
    supply: &[f64],
    demand: &[f64],
    order_s: &[usize],
    order_d: &[usize],
    cost: &dyn Fn(usize, usize) -> f64,
    max_cost: f64,
) -> Result<SimplexSolution> {
    let n = supply.len();
    let m = demand.len();
    if n == 0 || m == 0 {
        return Err(Error::EmptyMeasure);
    }
    let total: f64 = supply.iter().sum();
    // Perturbation against degenerate pivots.
    let delta = 1e-12 * total / n as f64;
    let mut s: Vec<f64> = supply.iter().map(|a| a + delta).collect();
    let mut d = demand.to_vec();
    d[m - 1] += delta * n as f64;

    let mut arcs = Vec::with_capacity(n + m - 1);
    let (mut a, mut b) = (0usize, 0usize);
    loop {
        let (i, j) = (order_s[a], order_d[b]);
        if a == n - 1 && b == m - 1 {
            arcs.push((i, j, s[i].max(d[j]).max(0.0)));
            break;
        }
        if b == m - 1 || (a < n - 1 && s[i] < d[j]) {
            let f = s[i];
            arcs.push((i, j, f));
            d[j] -= f;
            a += 1;
        } else {
            let f = d[j];
            arcs.push((i, j, f));
            s[i] -= f;
            b += 1;
        }
    }
    let mut adj = vec![Vec::new(); n + m];
    for (k, &(i, j, _)) in arcs.iter().enumerate() {
        adj[i].push(k);
        adj[n + j].push(k);
    }
    let mut tree = Tree {
        n,
        arcs,
        adj,
        parent_arc: vec![usize::MAX; n + m],
        parent: vec![usize::MAX; n + m],
        depth: vec![0; n + m],
        pot: vec![0.0; n + m],
        stack: Vec::with_capacity(n + m),
    };
    let tol = 1e-13 * max_cost.max(f64::MIN_POSITIVE);
    let arc_count = n * m;
    let block = ((arc_count as f64).sqrt() as usize).max(32).min(arc_count);
    let mut cursor = 0usize;
    let cap = 1000 * (n + m) + 100_000;
    let mut pivots = 0usize;
    let mut up_j = Vec::new();
    let mut up_i = Vec::new();
    loop {
        tree.relabel(cost);
        // Block pricing.
        let mut best = (0.0, usize::MAX);
        let mut scanned = 0usize;
        while scanned < arc_count {
            let len = block.min(arc_count - scanned);
            for _ in 0..len {
                let (i, j) = (cursor / m, cursor % m);
                let r = cost(i, j) - tree.pot[i] - tree.pot[n + j];
                if r < best.0 {
                    best = (r, cursor);
                }
                cursor += 1;
                if cursor == arc_count {
                    cursor = 0;
                }
            }
            scanned += len;
            if best.0 < -tol {
                break;
            }
        }
        if best.0 >= -tol {
            break;
        }
        pivots += 1;
        if pivots > cap {
            return Err(Error::NonConvergence("network simplex"));
        }
        let (ei, ej) = (best.1 / m, best.1 % m);
        // Tree path from the sink of the entering arc back to its source.
        up_j.clear();
        up_i.clear();
        let mut x = tree.node_of_sink(ej);
        let mut y = ei;
        while tree.depth[x] > tree.depth[y] {
            up_j.push(tree.parent_arc[x]);
            x = tree.parent[x];
        }
        while tree.depth[y] > tree.depth[x] {
            up_i.push(tree.parent_arc[y]);
            y = tree.parent[y];
        }
        while x != y {
            up_j.push(tree.parent_arc[x]);
            x = tree.parent[x];
            up_i.push(tree.parent_arc[y]);
            y = tree.parent[y];
        }
        let path: Vec<usize> = up_j.iter().copied().chain(up_i.iter().rev().copied()).collect();
        let mut theta = f64::INFINITY;
        let mut leave = usize::MAX;
        for (k, &arc) in path.iter().enumerate() {
            if k % 2 == 0 && tree.arcs[arc].2 < theta {
                theta = tree.arcs[arc].2;
                leave = arc;
            }
        }
        for (k, &arc) in path.iter().enumerate() {
            if k % 2 == 0 {
                tree.arcs[arc].2 -= theta;
            } else {
                tree.arcs[arc].2 += theta;
            }
        }
        let (li, lj, _) = tree.arcs[leave];
        let ln = n + lj;
        tree.adj[li].retain(|&a| a != leave);
        tree.adj[ln].retain(|&a| a != leave);
        tree.arcs[leave] = (ei, ej, theta.max(0.0));
        tree.adj[ei].push(leave);
        tree.adj[n + ej].push(leave);
    }
    tree.relabel(cost);
    let u = tree.pot[..n].to_vec();
    let v = tree.pot[n..].to_vec();
    let arcs = exact_flows(&tree, supply, demand);
    Ok(SimplexSolution { arcs, u, v, pivots })
}

/// Flows of the final basis for the unperturbed marginals, by peeling leaves.
fn exact_flows(tree: &Tree, supply: &[f64], demand: &[f64]) -> Vec<(usize, usize, f64)> {
    let n = tree.n;
    let mut arcs = tree.arcs.clone();
    let mut balance: Vec<f64> = supply.iter().chain(demand.iter()).copied().collect();
    let mut degree: Vec<usize> = tree.adj.iter().map(|a| a.len()).collect();
    let mut done = vec![false; arcs.len()];
    let mut leaves: Vec<usize> = (0..degree.len()).filter(|&k| degree[k] == 1).collect();
    while let Some(node) = leaves.pop() {
        if degree[node] != 1 {
            continue;
        }
        let Some(&a) = tree.adj[node].iter().find(|&&a| !done[a]) else { continue };
        let (i, j, _) = arcs[a];
        let flow = balance[node].max(0.0);
        arcs[a].2 = flow;
        done[a] = true;
        let other = if node < n { n + j } else { i };
        balance[other] -= flow;
        degree[node] -= 1;
        degree[other] -= 1;
        if degree[other] == 1 {
            leaves.push(other);
        }
    }
    arcs
}
