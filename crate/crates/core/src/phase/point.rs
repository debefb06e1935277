use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point `α = (α_x, α_p)` of phase space ℝ^{2D}, positions first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhasePoint(Vec<f64>);

impl PhasePoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() || coords.len() % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "phase point needs an even, nonzero number of coordinates (got {})",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("phase point"));
        }
        Ok(Self(coords))
    }

    pub fn from_xp(x: &[f64], p: &[f64]) -> Result<Self> {
        if x.len() != p.len() {
            return Err(Error::InvalidInput("position and momentum lengths differ".into()));
        }
        let mut coords = x.to_vec();
        coords.extend_from_slice(p);
        Self::new(coords)
    }

    pub fn origin(dim: usize) -> Self {
        Self(vec![0.0; 2 * dim])
    }

    /// Spatial dimension D.
    pub fn dim(&self) -> usize {
        self.0.len() / 2
    }

    pub fn x(&self) -> &[f64] {
        &self.0[..self.dim()]
    }

    pub fn p(&self) -> &[f64] {
        &self.0[self.dim()..]
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        euclid(&self.0, &other.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|c| c * factor).collect())
    }

    /// Symplectic form `ω(α, β) = α_x·β_p − α_p·β_x`.
    pub fn symplectic(&self, other: &Self) -> f64 {
        let d = self.dim();
        (0..d).map(|j| self.0[j] * other.0[d + j] - self.0[d + j] * other.0[j]).sum()
    }
}

impl AsRef<[f64]> for PhasePoint {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl Add for &PhasePoint {
    type Output = PhasePoint;
    fn add(self, rhs: Self) -> PhasePoint {
        PhasePoint(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &PhasePoint {
    type Output = PhasePoint;
    fn sub(self, rhs: Self) -> PhasePoint {
        PhasePoint(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Neg for &PhasePoint {
    type Output = PhasePoint;
    fn neg(self) -> PhasePoint {
        PhasePoint(self.0.iter().map(|a| -a).collect())
    }
}

impl fmt::Display for PhasePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|c| format!("{c}")).collect();
        write!(f, "({})", parts.join(", "))
    }
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
