//! FFT helpers for small row-major arrays (up to four axes).

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::sync::Arc;

/// Planned transforms for a row-major array with the given shape.
pub struct NdFft {
    shape: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl NdFft {
    pub fn new(shape: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = shape
            .iter()
            .map(|&n| planner.plan_fft(n, FftDirection::Forward))
            .collect();
        let inverse = shape
            .iter()
            .map(|&n| planner.plan_fft(n, FftDirection::Inverse))
            .collect();
        Self { shape: shape.to_vec(), forward, inverse }
    }

    /// Square array with `dims` axes of length `n`.
    pub fn cube(n: usize, dims: usize) -> Self {
        Self::new(&vec![n; dims])
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        for axis in 0..self.shape.len() {
            self.along(axis, data, &self.forward[axis]);
        }
    }

    /// Normalized inverse, so `inverse(forward(x)) == x`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        for axis in 0..self.shape.len() {
            self.along(axis, data, &self.inverse[axis]);
        }
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    pub fn forward_axis(&self, axis: usize, data: &mut [Complex64]) {
        self.along(axis, data, &self.forward[axis]);
    }

    pub fn inverse_axis(&self, axis: usize, data: &mut [Complex64]) {
        self.along(axis, data, &self.inverse[axis]);
        let scale = 1.0 / self.shape[axis] as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    fn along(&self, axis: usize, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        debug_assert_eq!(data.len(), self.len());
        let n = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let outer: usize = self.shape[..axis].iter().product();
        if inner == 1 {
            fft.process(data);
            return;
        }
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for o in 0..outer {
            let base = o * n * inner;
            for i in 0..inner {
                for (k, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + k * inner + i];
                }
                fft.process(&mut line);
                for (k, value) in line.iter().enumerate() {
                    data[base + k * inner + i] = *value;
                }
            }
        }
    }
}

/// Signed integer frequency of FFT bin `k` for a transform of length `n`.
pub fn signed_index(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Band-limited upsampling by two along every axis (zero padding in Fourier space).
///
/// The Nyquist bin is split evenly between the two new half-spectrum bins.
pub fn upsample2(data: &[Complex64], n: usize, dims: usize) -> Vec<Complex64> {
    let small = NdFft::cube(n, dims);
    let big = NdFft::cube(2 * n, dims);
    let mut spec = data.to_vec();
    small.forward(&mut spec);
    let m = 2 * n;
    let mut padded = vec![Complex64::new(0.0, 0.0); m.pow(dims as u32)];
    let total = n.pow(dims as u32);
    let mut idx = vec![0usize; dims];
    for flat in 0..total {
        let mut rem = flat;
        for d in (0..dims).rev() {
            idx[d] = rem % n;
            rem /= n;
        }
        // Each axis maps to one or two destination bins (Nyquist splits).
        let mut targets: Vec<(usize, f64)> = vec![(0, 1.0)];
        for &k in idx.iter() {
            let options: Vec<(usize, f64)> = if k == n / 2 {
                vec![(n / 2, 0.5), (m - n / 2, 0.5)]
            } else if k < n / 2 {
                vec![(k, 1.0)]
            } else {
                vec![(m - (n - k), 1.0)]
            };
            let mut next = Vec::with_capacity(targets.len() * options.len());
            for &(t, w) in &targets {
                for &(o, v) in &options {
                    next.push((t * m + o, w * v));
                }
            }
            targets = next;
        }
        for (t, w) in targets {
            padded[t] += spec[flat] * w;
        }
    }
    big.inverse(&mut padded);
    let scale = (m as f64 / n as f64).powi(dims as i32);
    padded.iter_mut().for_each(|z| *z *= scale);
    padded
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_two_axes() {
        let shape = [8, 16];
        let plan = NdFft::new(&shape);
        let data: Vec<Complex64> = (0..128)
            .map(|k| Complex64::new((k as f64 * 0.37).sin(), (k as f64 * 0.11).cos()))
            .collect();
        let mut work = data.clone();
        plan.forward(&mut work);
        plan.inverse(&mut work);
        for (a, b) in data.iter().zip(&work) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn upsample_interpolates_band_limited_signal() {
        let n = 32;
        let f = |x: f64| Complex64::new((2.0 * x).cos(), (3.0 * x).sin());
        let step = 2.0 * std::f64::consts::PI / n as f64;
        let data: Vec<Complex64> = (0..n).map(|k| f(k as f64 * step)).collect();
        let up = upsample2(&data, n, 1);
        for (k, z) in up.iter().enumerate() {
            assert!((z - f(k as f64 * step / 2.0)).norm() < 1e-12);
        }
    }
}
