use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::signed_index;

/// Tail tolerance that sets the width of the boundary band.
pub const BOUNDARY_EPS: f64 = 1e-8;
/// Mass inside the boundary band above which runs abort.
pub const BOUNDARY_LIMIT: f64 = 1e-6;

/// Uniform periodic position grid together with its discrete Fourier dual.
///
/// Position points are `x_min + j·Δx` for `j < n_x`, `Δx = (x_max − x_min)/n_x`;
/// the momentum axis has spacing `2πℏ/(x_max − x_min)` and covers
/// `[−n_x/2, n_x/2)` steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceGrid {
    dim: usize,
    hbar: f64,
    x_min: Vec<f64>,
    x_max: Vec<f64>,
    n_x: usize,
}

impl PhaseSpaceGrid {
    /// Same box on every axis.
    pub fn new(dim: usize, hbar: f64, x_min: f64, x_max: f64, n_x: usize) -> Result<Self> {
        Self::with_box(dim, hbar, &vec![x_min; dim], &vec![x_max; dim], n_x)
    }

    pub fn with_box(dim: usize, hbar: f64, x_min: &[f64], x_max: &[f64], n_x: usize) -> Result<Self> {
        if dim == 0 || dim > 2 {
            return Err(Error::InvalidGrid(format!("dimension {dim} is not supported (1 or 2)")));
        }
        if x_min.len() != dim || x_max.len() != dim {
            return Err(Error::InvalidGrid("box bounds must have one entry per axis".into()));
        }
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::InvalidGrid(format!("hbar must be positive, got {hbar}")));
        }
        if n_x < 16 || !n_x.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("n_x = {n_x} must be a power of two >= 16")));
        }
        for (lo, hi) in x_min.iter().zip(x_max) {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::InvalidGrid(format!("degenerate box [{lo}, {hi})")));
            }
        }
        Ok(Self { dim, hbar, x_min: x_min.to_vec(), x_max: x_max.to_vec(), n_x })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn x_min(&self, axis: usize) -> f64 {
        self.x_min[axis]
    }

    pub fn x_max(&self, axis: usize) -> f64 {
        self.x_max[axis]
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.x_max[axis] - self.x_min[axis]
    }

    /// Total number of position points, `n_x^dim`.
    pub fn len(&self) -> usize {
        self.n_x.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self, axis: usize) -> f64 {
        self.length(axis) / self.n_x as f64
    }

    pub fn dp(&self, axis: usize) -> f64 {
        2.0 * PI * self.hbar / self.length(axis)
    }

    /// Largest resolvable momentum magnitude, `πℏ/Δx`.
    pub fn p_max(&self, axis: usize) -> f64 {
        self.dp(axis) * (self.n_x / 2) as f64
    }

    /// Quadrature weight of one position point.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.dx(a)).product()
    }

    pub fn x_axis(&self, axis: usize) -> Vec<f64> {
        let dx = self.dx(axis);
        (0..self.n_x).map(|j| self.x_min[axis] + j as f64 * dx).collect()
    }

    /// Momentum values in ascending order.
    pub fn p_axis(&self, axis: usize) -> Vec<f64> {
        let dp = self.dp(axis);
        let half = (self.n_x / 2) as f64;
        (0..self.n_x).map(|k| (k as f64 - half) * dp).collect()
    }

    /// Momentum values in FFT bin order.
    pub fn fft_momenta(&self, axis: usize) -> Vec<f64> {
        let dp = self.dp(axis);
        (0..self.n_x).map(|k| signed_index(k, self.n_x) as f64 * dp).collect()
    }

    /// Axis indices of flat position index `flat` (axis 0 slowest).
    pub fn unflatten(&self, flat: usize) -> [usize; 2] {
        match self.dim {
            1 => [flat, 0],
            _ => [flat / self.n_x, flat % self.n_x],
        }
    }

    /// Position coordinates of flat index `flat`.
    pub fn position(&self, flat: usize) -> [f64; 2] {
        let idx = self.unflatten(flat);
        let mut out = [0.0; 2];
        for a in 0..self.dim {
            out[a] = self.x_min[a] + idx[a] as f64 * self.dx(a);
        }
        out
    }

    /// Momentum coordinates of flat FFT index `flat`.
    pub fn momentum(&self, flat: usize) -> [f64; 2] {
        let idx = self.unflatten(flat);
        let mut out = [0.0; 2];
        for a in 0..self.dim {
            out[a] = signed_index(idx[a], self.n_x) as f64 * self.dp(a);
        }
        out
    }

    /// Width of the boundary band watched by the leak monitor: `2·sqrt(ℏ·ln(1/ε))`.
    pub fn boundary_band(&self) -> f64 {
        2.0 * (self.hbar * (1.0 / BOUNDARY_EPS).ln()).sqrt()
    }

    /// Same grid with a different ℏ (box and resolution unchanged).
    pub fn with_hbar(&self, hbar: f64) -> Result<Self> {
        Self::with_box(self.dim, hbar, &self.x_min, &self.x_max, self.n_x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_spacing() {
        let g = PhaseSpaceGrid::new(1, 0.1, -10.0, 10.0, 256).unwrap();
        assert!((g.dx(0) - 20.0 / 256.0).abs() < 1e-15);
        assert!((g.dp(0) - 2.0 * PI * 0.1 / 20.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(PhaseSpaceGrid::new(1, 0.1, -10.0, 10.0, 255).is_err());
        assert!(PhaseSpaceGrid::new(1, 0.1, -10.0, 10.0, 8).is_err());
        assert!(PhaseSpaceGrid::new(1, 0.0, -10.0, 10.0, 256).is_err());
        assert!(PhaseSpaceGrid::new(1, -1.0, -10.0, 10.0, 256).is_err());
        assert!(PhaseSpaceGrid::new(1, 0.1, 3.0, 3.0, 256).is_err());
        assert!(PhaseSpaceGrid::new(3, 0.1, -1.0, 1.0, 16).is_err());
    }

    #[test]
    fn momentum_axis_span() {
        // Span is [-π·n/L, π·n/L)·ℏ with L = 16, n = 128.
        let g = PhaseSpaceGrid::new(1, 1.0, -8.0, 8.0, 128).unwrap();
        let p = g.p_axis(0);
        let edge = PI * 128.0 / 16.0;
        assert!((p[0] + edge).abs() < 1e-12);
        assert!((p[127] - (edge - g.dp(0))).abs() < 1e-12);
        // symmetric about zero up to one step
        assert!((p[0] + p[127]).abs() <= g.dp(0) + 1e-12);
        let fft = g.fft_momenta(0);
        assert_eq!(fft[0], 0.0);
        assert!((fft[64] + edge).abs() < 1e-12);
    }
}
