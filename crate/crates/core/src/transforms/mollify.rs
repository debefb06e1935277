use crate::phase::quadrature::normal_rule;

/// Gauss–Hermite nodes per phase-space coordinate used by [`mollify_symbol`].
pub const MOLLIFY_NODES: usize = 10;

/// `G ∗ γ_ℏ`, the convolution with the centered Gaussian of covariance `ℏ·Id` on ℝ^{2D},
/// evaluated pointwise by tensor Gauss–Hermite quadrature.
pub fn mollify_symbol<G>(g: G, hbar: f64, dim: usize) -> impl Fn(&[f64]) -> f64 + Sync
where
    G: Fn(&[f64]) -> f64 + Sync,
{
    mollify_with(g, hbar, dim, MOLLIFY_NODES)
}

/// [`mollify_symbol`] with an explicit node count.
pub fn mollify_with<G>(g: G, hbar: f64, dim: usize, nodes: usize) -> impl Fn(&[f64]) -> f64 + Sync
where
    G: Fn(&[f64]) -> f64 + Sync,
{
    let (z, w) = normal_rule(nodes);
    let s = hbar.sqrt();
    let dims = 2 * dim;
    let total = nodes.pow(dims as u32);
    let mut offsets = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut off = vec![0.0; dims];
        let mut wt = 1.0;
        for c in (0..dims).rev() {
            let k = rem % nodes;
            rem /= nodes;
            off[c] = s * z[k];
            wt *= w[k];
        }
        offsets.push(off);
        weights.push(wt);
    }
    move |point: &[f64]| {
        let mut buf = point.to_vec();
        offsets
            .iter()
            .zip(&weights)
            .map(|(off, wt)| {
                buf.iter_mut().zip(point.iter().zip(off)).for_each(|(b, (p, o))| *b = p + o);
                wt * g(&buf)
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_and_quadratic_symbols() {
        let lin = mollify_symbol(|z: &[f64]| 2.0 * z[0] - z[1] + 0.5, 0.1, 1);
        assert!((lin(&[0.3, 0.7]) - (0.6 - 0.7 + 0.5)).abs() < 1e-14);
        let sq = mollify_symbol(|z: &[f64]| z.iter().map(|v| v * v).sum(), 0.1, 2);
        let at = [0.1, -0.2, 0.3, 0.4];
        let base: f64 = at.iter().map(|v| v * v).sum();
        assert!((sq(&at) - (base + 4.0 * 0.1)).abs() < 1e-13);
    }

    #[test]
    fn cosine_damping() {
        for h in [0.2, 0.05, 0.0125] {
            let m = mollify_symbol(|z: &[f64]| z[0].cos(), h, 1);
            for x in [0.0, 0.4, 2.5] {
                assert!((m(&[x, 1.0]) - (-h / 2.0f64).exp() * x.cos()).abs() < 1e-8);
            }
        }
    }
}
