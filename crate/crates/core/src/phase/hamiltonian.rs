use serde::{Deserialize, Serialize};

use super::point::PhasePoint;
use crate::error::{Error, Result};

/// Lattice points per axis used for Hessian suprema.
pub const HESSIAN_SAMPLES: usize = 201;
/// Lattice points per axis used for the derivative report.
pub const REPORT_SAMPLES: usize = 41;

/// One-variable profile `f(s)` with closed-form derivatives of every order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum Profile {
    Zero,
    /// `c·s²/2`
    Quadratic { c: f64 },
    /// `amp·cos s`
    Cosine { amp: f64 },
    /// `c·s⁴`
    Quartic { c: f64 },
    /// `slope·s`
    Linear { slope: f64 },
}

impl Profile {
    /// `f^{(n)}(s)`.
    pub fn derivative(&self, s: f64, n: usize) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::Quadratic { c } => match n {
                0 => 0.5 * c * s * s,
                1 => c * s,
                2 => c,
                _ => 0.0,
            },
            Profile::Cosine { amp } => amp * (s + n as f64 * std::f64::consts::FRAC_PI_2).cos(),
            Profile::Quartic { c } => match n {
                0 => c * s.powi(4),
                1 => 4.0 * c * s.powi(3),
                2 => 12.0 * c * s * s,
                3 => 24.0 * c * s,
                4 => 24.0 * c,
                _ => 0.0,
            },
            Profile::Linear { slope } => match n {
                0 => slope * s,
                1 => slope,
                _ => 0.0,
            },
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        self.derivative(s, 0)
    }

    /// True when the profile is a polynomial of degree at most two.
    pub fn is_quadratic(&self) -> bool {
        matches!(self, Profile::Zero | Profile::Quadratic { .. } | Profile::Linear { .. })
    }
}

/// `F(s) = Σ_a f(s_a)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisSum(pub Profile);

impl AxisSum {
    pub fn value(&self, s: &[f64]) -> f64 {
        s.iter().map(|v| self.0.value(*v)).sum()
    }

    pub fn gradient(&self, s: &[f64]) -> Vec<f64> {
        s.iter().map(|v| self.0.derivative(*v, 1)).collect()
    }

    /// Mixed partial along the axes listed in `word`; zero unless all agree.
    pub fn partial(&self, s: &[f64], word: &[usize]) -> f64 {
        match word.split_first() {
            None => self.value(s),
            Some((first, rest)) if rest.iter().all(|a| a == first) => self.0.derivative(s[*first], word.len()),
            _ => 0.0,
        }
    }

    /// Spectral norm of the (diagonal) Hessian.
    pub fn hessian_norm(&self, s: &[f64]) -> f64 {
        s.iter().map(|v| self.0.derivative(*v, 2).abs()).fold(0.0, f64::max)
    }
}

/// Non-separable D = 1 symbols.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "symbol", rename_all = "snake_case")]
pub enum GeneralSymbol {
    /// `p²/2 − cos x + κ·sin x·p/(1 + p²)`
    TwistedPendulum { coupling: f64 },
}

impl GeneralSymbol {
    /// `∂_x^a ∂_p^b H(x, p)`.
    pub fn partial_xp(&self, x: f64, p: f64, a: usize, b: usize) -> f64 {
        match *self {
            GeneralSymbol::TwistedPendulum { coupling } => {
                let kinetic = if a == 0 { Profile::Quadratic { c: 1.0 }.derivative(p, b) } else { 0.0 };
                let potential = if b == 0 { Profile::Cosine { amp: -1.0 }.derivative(x, a) } else { 0.0 };
                let twist = coupling * Profile::Cosine { amp: 1.0 }.derivative(x - std::f64::consts::FRAC_PI_2, a) * lorentz_odd(p, b);
                kinetic + potential + twist
            }
        }
    }
}

/// `g^{(n)}(p)` for `g(p) = p/(1+p²) = Re 1/(p − i)`.
fn lorentz_odd(p: f64, n: usize) -> f64 {
    let z = num_complex::Complex64::new(p, -1.0);
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    (sign * fact * z.powi(-(n as i32 + 1))).re
}

/// Axis-aligned phase-space box `lo ≤ z ≤ hi`, coordinates ordered as in [`PhasePoint`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl PhaseBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.len() % 2 != 0 {
            return Err(Error::InvalidInput("box bounds must have 2D entries each".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l.is_finite() && h.is_finite() && h >= l)) {
            return Err(Error::InvalidInput("box bounds must be finite with lo <= hi".into()));
        }
        Ok(Self { lo, hi })
    }

    /// `[−x_half, x_half]^D × [−p_half, p_half]^D`.
    pub fn symmetric(dim: usize, x_half: f64, p_half: f64) -> Self {
        let mut hi = vec![x_half; dim];
        hi.extend(vec![p_half; dim]);
        Self { lo: hi.iter().map(|v| -v).collect(), hi }
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| v >= l && v <= h)
    }

    /// Regular lattice with `n` points per coordinate listed, endpoints included.
    fn axis(&self, c: usize, n: usize) -> Vec<f64> {
        let (l, h) = (self.lo[c], self.hi[c]);
        if n < 2 || h == l {
            return vec![0.5 * (l + h)];
        }
        (0..n).map(|i| l + (h - l) * i as f64 / (n - 1) as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Separable { kinetic: AxisSum, potential: AxisSum },
    General { symbol: GeneralSymbol },
}

/// A classical Hamiltonian `H(x, p)` together with the box used for its constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianModel {
    pub name: String,
    pub dim: usize,
    pub kind: ModelKind,
    pub lipschitz_box: PhaseBox,
}

impl HamiltonianModel {
    pub fn separable(name: &str, dim: usize, kinetic: Profile, potential: Profile, lipschitz_box: PhaseBox) -> Result<Self> {
        if lipschitz_box.lo.len() != 2 * dim {
            return Err(Error::InvalidInput("lipschitz box dimension does not match the model".into()));
        }
        Ok(Self {
            name: name.into(),
            dim,
            kind: ModelKind::Separable { kinetic: AxisSum(kinetic), potential: AxisSum(potential) },
            lipschitz_box,
        })
    }

    pub fn general(name: &str, symbol: GeneralSymbol, lipschitz_box: PhaseBox) -> Result<Self> {
        if lipschitz_box.lo.len() != 2 {
            return Err(Error::InvalidInput("general symbols are one-dimensional".into()));
        }
        Ok(Self { name: name.into(), dim: 1, kind: ModelKind::General { symbol }, lipschitz_box })
    }

    /// `(p²+x²)/2` in `dim` dimensions.
    pub fn harmonic(dim: usize) -> Self {
        Self::separable("harmonic", dim, Profile::Quadratic { c: 1.0 }, Profile::Quadratic { c: 1.0 }, PhaseBox::symmetric(dim, 12.0, 12.0))
            .expect("valid")
    }

    /// `p²/2`.
    pub fn free(dim: usize) -> Self {
        Self::separable("free", dim, Profile::Quadratic { c: 1.0 }, Profile::Zero, PhaseBox::symmetric(dim, 30.0, 12.0)).expect("valid")
    }

    /// `p²/2 − cos x`.
    pub fn pendulum(dim: usize) -> Self {
        Self::separable("pendulum", dim, Profile::Quadratic { c: 1.0 }, Profile::Cosine { amp: -1.0 }, PhaseBox::symmetric(dim, 12.0, 6.0))
            .expect("valid")
    }

    /// `p²/2 + c·x⁴` with constants taken over `|x| ≤ window`.
    pub fn quartic_window(dim: usize, c: f64, window: f64) -> Self {
        Self::separable("quartic-window", dim, Profile::Quadratic { c: 1.0 }, Profile::Quartic { c }, PhaseBox::symmetric(dim, window, 8.0))
            .expect("valid")
    }

    /// `p²/2 + slope·x`, an affine flow.
    pub fn linear_free(dim: usize, slope: f64) -> Self {
        Self::separable("linear-free", dim, Profile::Quadratic { c: 1.0 }, Profile::Linear { slope }, PhaseBox::symmetric(dim, 30.0, 12.0))
            .expect("valid")
    }

    /// `p²/2 − cos x + κ·sin x·p/(1+p²)`.
    pub fn twisted_pendulum(coupling: f64) -> Self {
        Self::general("twisted-pendulum", GeneralSymbol::TwistedPendulum { coupling }, PhaseBox::symmetric(1, 12.0, 6.0)).expect("valid")
    }

    pub fn is_separable(&self) -> bool {
        matches!(self.kind, ModelKind::Separable { .. })
    }

    /// True for Hamiltonians that are polynomials of degree at most two.
    pub fn is_quadratic(&self) -> bool {
        match &self.kind {
            ModelKind::Separable { kinetic, potential } => kinetic.0.is_quadratic() && potential.0.is_quadratic(),
            ModelKind::General { .. } => false,
        }
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        let d = self.dim;
        match &self.kind {
            ModelKind::Separable { kinetic, potential } => kinetic.value(&z[d..]) + potential.value(&z[..d]),
            ModelKind::General { symbol } => symbol.partial_xp(z[0], z[1], 0, 0),
        }
    }

    /// Kinetic part `K(p)`; `None` for non-separable models.
    pub fn kinetic(&self, p: &[f64]) -> Option<f64> {
        match &self.kind {
            ModelKind::Separable { kinetic, .. } => Some(kinetic.value(p)),
            ModelKind::General { .. } => None,
        }
    }

    /// Potential part `V(x)`; `None` for non-separable models.
    pub fn potential(&self, x: &[f64]) -> Option<f64> {
        match &self.kind {
            ModelKind::Separable { potential, .. } => Some(potential.value(x)),
            ModelKind::General { .. } => None,
        }
    }

    /// Mixed partial `∂^J H` for a word `J` of phase-space indices (`0..D` positions, `D..2D` momenta).
    pub fn partial(&self, z: &[f64], word: &[usize]) -> f64 {
        let d = self.dim;
        match &self.kind {
            ModelKind::Separable { kinetic, potential } => {
                if word.is_empty() {
                    return self.value(z);
                }
                if word.iter().all(|a| *a < d) {
                    potential.partial(&z[..d], word)
                } else if word.iter().all(|a| *a >= d) {
                    let w: Vec<usize> = word.iter().map(|a| a - d).collect();
                    kinetic.partial(&z[d..], &w)
                } else {
                    0.0
                }
            }
            ModelKind::General { symbol } => {
                let a = word.iter().filter(|i| **i == 0).count();
                symbol.partial_xp(z[0], z[1], a, word.len() - a)
            }
        }
    }

    /// `∇H = (∂_x H, ∂_p H)`.
    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        (0..2 * self.dim).map(|a| self.partial(z, &[a])).collect()
    }

    /// Hamiltonian vector field `(∂_p H, −∂_x H)`.
    pub fn vector_field(&self, z: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let g = self.gradient(z);
        let mut out = g[d..].to_vec();
        out.extend(g[..d].iter().map(|v| -v));
        out
    }

    pub fn hessian(&self, z: &[f64]) -> Vec<Vec<f64>> {
        let n = 2 * self.dim;
        (0..n).map(|a| (0..n).map(|b| self.partial(z, &[a, b])).collect()).collect()
    }

    pub fn value_at(&self, alpha: &PhasePoint) -> f64 {
        self.value(alpha.coords())
    }
}

/// Sampled sup of `|∂^J H|` for one derivative order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeSup {
    pub order: usize,
    pub sup: f64,
}

/// Output of [`estimate_lipschitz`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    /// `½(sup‖Hess K‖ + sup‖Hess V‖)` for separable models, `sup‖Hess H‖` otherwise.
    pub lambda: f64,
    pub sup_hess_kinetic: Option<f64>,
    pub sup_hess_potential: Option<f64>,
    pub sup_hess_full: f64,
    pub derivatives: Vec<DerivativeSup>,
    pub samples_per_axis: usize,
    pub form: String,
}

fn lattice(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect();
    }
    out
}

fn symmetric_norm(h: &[Vec<f64>]) -> f64 {
    let n = h.len();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| 0.5 * (h[i][j] + h[j][i]));
    m.symmetric_eigenvalues().iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
}

fn words(n: usize, order: usize) -> Vec<Vec<usize>> {
    // nondecreasing words: one per multi-index
    let mut out = vec![Vec::new()];
    for _ in 0..order {
        out = out
            .into_iter()
            .flat_map(|w: Vec<usize>| {
                let start = w.last().copied().unwrap_or(0);
                (start..n).map(move |a| {
                    let mut v = w.clone();
                    v.push(a);
                    v
                })
            })
            .collect();
    }
    out
}

/// Estimates `Λ_H` by sampling Hessian spectral norms on a lattice over the model box,
/// and reports sampled `sup|∂^J H|` for `|J| = 2, 3, 4`.
pub fn estimate_lipschitz(model: &HamiltonianModel) -> Result<LipschitzReport> {
    let d = model.dim;
    let bx = &model.lipschitz_box;
    let finite = |v: f64| if v.is_finite() { Ok(v) } else { Err(Error::NonFinite("hamiltonian oracle")) };

    let (lambda, sup_k, sup_v, sup_full, form) = match &model.kind {
        ModelKind::Separable { kinetic, potential } => {
            let xs = lattice(&(0..d).map(|a| bx.axis(a, HESSIAN_SAMPLES)).collect::<Vec<_>>());
            let ps = lattice(&(0..d).map(|a| bx.axis(d + a, HESSIAN_SAMPLES)).collect::<Vec<_>>());
            let mut sv = 0.0f64;
            for x in &xs {
                sv = sv.max(finite(potential.hessian_norm(x))?);
            }
            let mut sk = 0.0f64;
            for p in &ps {
                sk = sk.max(finite(kinetic.hessian_norm(p))?);
            }
            (0.5 * (sk + sv), Some(sk), Some(sv), sk.max(sv), "separable: (sup|Hess K| + sup|Hess V|)/2")
        }
        ModelKind::General { .. } => {
            let pts = lattice(&(0..2 * d).map(|c| bx.axis(c, HESSIAN_SAMPLES)).collect::<Vec<_>>());
            let mut s = 0.0f64;
            for z in &pts {
                s = s.max(finite(symmetric_norm(&model.hessian(z)))?);
            }
            (s, None, None, s, "general: sup|Hess H|")
        }
    };

    let coarse = lattice(&(0..2 * d).map(|c| bx.axis(c, REPORT_SAMPLES)).collect::<Vec<_>>());
    let mut derivatives = Vec::new();
    for order in 2..=4 {
        let mut sup = 0.0f64;
        for w in words(2 * d, order) {
            for z in &coarse {
                sup = sup.max(finite(model.partial(z, &w))?.abs());
            }
        }
        derivatives.push(DerivativeSup { order, sup });
    }
    Ok(LipschitzReport {
        lambda,
        sup_hess_kinetic: sup_k,
        sup_hess_potential: sup_v,
        sup_hess_full: sup_full,
        derivatives,
        samples_per_axis: HESSIAN_SAMPLES,
        form: form.into(),
    })
}

/// Named model recipes used by scenario files and the command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// One of `harmonic`, `free`, `pendulum`, `quartic-window`, `linear-free`, `twisted-pendulum`.
    pub name: String,
    #[serde(default = "one")]
    pub dim: usize,
    /// Quartic coefficient, linear slope or twist coupling, depending on `name`.
    #[serde(default)]
    pub strength: Option<f64>,
    /// Half-width of the position window of the quartic model.
    #[serde(default)]
    pub window: Option<f64>,
    /// Overrides the default Lipschitz box as `[x_half, p_half]`.
    #[serde(default)]
    pub lipschitz_half_widths: Option<[f64; 2]>,
}

fn one() -> usize {
    1
}

impl ModelSpec {
    pub fn named(name: &str) -> Self {
        Self { name: name.into(), dim: 1, strength: None, window: None, lipschitz_half_widths: None }
    }

    pub fn build(&self) -> Result<HamiltonianModel> {
        if self.dim == 0 || self.dim > 2 {
            return Err(Error::Config(format!("model dimension {} is not supported", self.dim)));
        }
        let mut model = match self.name.as_str() {
            "harmonic" => HamiltonianModel::harmonic(self.dim),
            "free" => HamiltonianModel::free(self.dim),
            "pendulum" => HamiltonianModel::pendulum(self.dim),
            "quartic-window" => HamiltonianModel::quartic_window(self.dim, self.strength.unwrap_or(0.01), self.window.unwrap_or(3.0)),
            "linear-free" => HamiltonianModel::linear_free(self.dim, self.strength.unwrap_or(0.5)),
            "twisted-pendulum" => {
                if self.dim != 1 {
                    return Err(Error::Config("twisted-pendulum is one-dimensional".into()));
                }
                HamiltonianModel::twisted_pendulum(self.strength.unwrap_or(0.2))
            }
            other => return Err(Error::Config(format!("unknown model `{other}`"))),
        };
        if let Some([xh, ph]) = self.lipschitz_half_widths {
            model.lipschitz_box = PhaseBox::symmetric(self.dim, xh, ph);
        }
        Ok(model)
    }
}
