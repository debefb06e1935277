//! Gauss–Hermite rules.

use std::f64::consts::PI;

/// Nodes and weights for `∫ f(t) e^{−t²} dt ≈ Σ w_i f(t_i)`, nodes ascending.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0_f64;
    for i in 0..m {
        // Initial guesses for the largest roots, then deflate downward.
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PI.powf(-0.25);
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    let mut pairs: Vec<(f64, f64)> = nodes.into_iter().zip(weights).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Rule for the standard normal density: `E[f(Z)] ≈ Σ w_i f(z_i)`, `Σ w_i = 1`.
pub fn normal_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (t, w) = gauss_hermite(n);
    let nodes = t.iter().map(|x| x * 2f64.sqrt()).collect();
    let weights = w.iter().map(|v| v / PI.sqrt()).collect();
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_moments() {
        for n in [1, 3, 9, 20, 40] {
            let (z, w) = normal_rule(n);
            let m0: f64 = w.iter().sum();
            assert!((m0 - 1.0).abs() < 1e-13, "n={n}");
            if n >= 2 {
                let m2: f64 = z.iter().zip(&w).map(|(z, w)| w * z * z).sum();
                assert!((m2 - 1.0).abs() < 1e-12, "n={n}");
            }
            if n >= 3 {
                let m4: f64 = z.iter().zip(&w).map(|(z, w)| w * z.powi(4)).sum();
                assert!((m4 - 3.0).abs() < 1e-11, "n={n}");
            }
        }
    }

    #[test]
    fn three_point_rule() {
        let (z, w) = normal_rule(3);
        assert!((z[2] - 3f64.sqrt()).abs() < 1e-13);
        assert!((w[1] - 2.0 / 3.0).abs() < 1e-13);
    }
}
