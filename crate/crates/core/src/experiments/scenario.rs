use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::classical::ClassicalFlow;
use crate::error::{Error, Result};
use crate::phase::state::{cat_state, coherent_state, gaussian_atoms, mix_coherent, random_low_rank};
use crate::phase::{HamiltonianModel, ModelSpec, PhasePoint, PhaseSpaceGrid, QuantumState};
use crate::transport::SolverPolicy;

/// Which sweep a scenario drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Egorov,
    Meanfield,
    Localization,
    LocalUnitary,
    OperatorEgorov,
}

/// Initial state recipe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialRecipe {
    Coherent {
        center: Vec<f64>,
    },
    /// `(|c + s/2·e_x⟩ + |c − s/2·e_x⟩)/‖·‖`.
    Cat {
        separation: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// Tensor Gauss–Hermite mixture of coherent states for `N(mean, diag(sigma²))`.
    CoherentMixture {
        mean: Vec<f64>,
        sigma: Vec<f64>,
        #[serde(default = "three")]
        nodes: usize,
    },
    RandomLowRank {
        seed: u64,
        rank: usize,
        #[serde(default)]
        center: Option<Vec<f64>>,
        #[serde(default = "half")]
        spread: f64,
    },
}

fn three() -> usize {
    3
}

fn half() -> f64 {
    0.5
}

impl InitialRecipe {
    /// Phase-space points that the state's Husimi function concentrates around.
    pub fn anchors(&self, dim: usize) -> Result<Vec<PhasePoint>> {
        let origin = vec![0.0; 2 * dim];
        let pts = match self {
            InitialRecipe::Coherent { center } => vec![center.clone()],
            InitialRecipe::Cat { separation, center } => {
                let c = center.clone().unwrap_or(origin);
                let mut a = c.clone();
                let mut b = c;
                a[0] += separation / 2.0;
                b[0] -= separation / 2.0;
                vec![a, b]
            }
            InitialRecipe::CoherentMixture { mean, sigma, nodes } => {
                return Ok(gaussian_atoms(&PhasePoint::new(mean.clone())?, sigma, *nodes)?.into_iter().map(|a| a.0).collect())
            }
            InitialRecipe::RandomLowRank { center, spread, .. } => {
                let c = center.clone().unwrap_or(origin);
                // corners of the sampling box, widened for Hermite excitations
                let w = spread + 1.0;
                let mut out = Vec::new();
                for mask in 0..(1usize << (2 * dim)) {
                    out.push((0..2 * dim).map(|k| c[k] + if mask >> k & 1 == 1 { w } else { -w }).collect());
                }
                out
            }
        };
        pts.into_iter().map(|p| {
            if p.len() != 2 * dim {
                return Err(Error::Config(format!("initial-state point {p:?} does not have {} coordinates", 2 * dim)));
            }
            PhasePoint::new(p)
        })
        .collect()
    }

    pub fn build(&self, grid: &PhaseSpaceGrid) -> Result<QuantumState> {
        let dim = grid.dim();
        match self {
            InitialRecipe::Coherent { center } => coherent_state(grid, &PhasePoint::new(center.clone())?),
            InitialRecipe::Cat { .. } => {
                let a = self.anchors(dim)?;
                cat_state(grid, &a[0], &a[1])
            }
            InitialRecipe::CoherentMixture { mean, sigma, nodes } => {
                mix_coherent(grid, &gaussian_atoms(&PhasePoint::new(mean.clone())?, sigma, *nodes)?)
            }
            InitialRecipe::RandomLowRank { seed, rank, center, spread } => {
                let c = PhasePoint::new(center.clone().unwrap_or(vec![0.0; 2 * dim]))?;
                random_low_rank(grid, *seed, *rank, &c, *spread)
            }
        }
    }

    /// Coherent atoms of a coherent mixture (single atom for a coherent state).
    pub fn mixture_atoms(&self) -> Option<Result<Vec<(PhasePoint, f64)>>> {
        match self {
            InitialRecipe::Coherent { center } => Some(PhasePoint::new(center.clone()).map(|p| vec![(p, 1.0)])),
            InitialRecipe::CoherentMixture { mean, sigma, nodes } => {
                Some(PhasePoint::new(mean.clone()).and_then(|m| gaussian_atoms(&m, sigma, *nodes)))
            }
            _ => None,
        }
    }
}

/// Box and resolution rule for the position grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridPolicy {
    /// Fixed number of points per axis; chosen from the reachable momenta when absent.
    pub n_x: Option<usize>,
    /// Fixed half-width of the position box; chosen from the reachable positions when absent.
    pub half_width: Option<f64>,
    /// Use the circle `[−π, π)` (for 2π-periodic models and observables).
    pub periodic: bool,
    /// Largest automatic `n_x`.
    pub max_n: usize,
}

impl Default for GridPolicy {
    fn default() -> Self {
        Self { n_x: None, half_width: None, periodic: false, max_n: 4096 }
    }
}

/// Position margin beyond the reachable set, in units of `sqrt(ℏ)`.
const X_MARGIN: f64 = 16.0;
/// Momentum margin beyond the reachable set, in units of `sqrt(ℏ)`.
const P_MARGIN: f64 = 8.0;

impl GridPolicy {
    /// Grid for one `ℏ`: the box holds the classical orbits of the recipe anchors up to
    /// `t_max` plus `extra_reach` and `16·sqrt(ℏ)`, and `n_x` resolves the reached momenta with room for the
    /// momentum-side boundary monitor.
    pub fn grid_for(&self, model: &HamiltonianModel, recipe: &InitialRecipe, hbar: f64, t_max: f64, extra_reach: f64) -> Result<PhaseSpaceGrid> {
        self.grid_for_anchors(model, &recipe.anchors(model.dim)?, hbar, t_max, extra_reach)
    }

    /// [`GridPolicy::grid_for`] with explicit anchor points.
    pub fn grid_for_anchors(&self, model: &HamiltonianModel, anchors: &[PhasePoint], hbar: f64, t_max: f64, extra_reach: f64) -> Result<PhaseSpaceGrid> {
        let dim = model.dim;
        let s = hbar.sqrt();
        if self.periodic {
            let n = self.n_x.ok_or_else(|| Error::Config("periodic grids need an explicit n_x".into()))?;
            return PhaseSpaceGrid::new(dim, hbar, -std::f64::consts::PI, std::f64::consts::PI, n);
        }
        let (mut xr, mut pr) = (0.0f64, 0.0f64);
        let flow = ClassicalFlow::new(model);
        let spread = 4.0 * s;
        for a in anchors {
            // the anchor and a ring of Husimi-scale offsets
            let mut starts = vec![a.coords().to_vec()];
            for c in 0..2 * dim {
                for sign in [-1.0, 1.0] {
                    let mut z = a.coords().to_vec();
                    z[c] += sign * spread;
                    starts.push(z);
                }
            }
            for mut z in starts {
                let steps = (t_max / 0.01).ceil() as usize;
                let dt = if steps > 0 { t_max / steps as f64 } else { 0.0 };
                for k in 0..=steps {
                    if k > 0 {
                        flow.step(&mut z, dt)?;
                    }
                    for c in 0..dim {
                        xr = xr.max(z[c].abs());
                        pr = pr.max(z[dim + c].abs());
                    }
                }
            }
        }
        let half = self.half_width.unwrap_or(xr + extra_reach + X_MARGIN * s);
        let p_need = 4.0 / 3.0 * (pr + extra_reach + P_MARGIN * s);
        let n = match self.n_x {
            Some(n) => n,
            None => {
                let raw = p_need * 2.0 * half / (std::f64::consts::PI * hbar);
                let n = (raw.ceil() as usize).next_power_of_two().max(64);
                if n > self.max_n {
                    return Err(Error::CapExceeded { what: "grid points per axis", count: n, cap: self.max_n });
                }
                n
            }
        };
        PhaseSpaceGrid::new(dim, hbar, -half, half, n)
    }
}

/// Observables for the operator-norm sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Sin,
    Cos,
    X,
}

impl Observable {
    pub fn value(&self, x: f64, _p: f64) -> f64 {
        match self {
            Observable::Sin => x.sin(),
            Observable::Cos => x.cos(),
            Observable::X => x,
        }
    }
}

/// Subspace on which operator differences are measured.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Compression {
    /// Whole grid space.
    None,
    /// Span of coherent states with centers in `|x| ≤ x_cut`, `|p| ≤ p_cut`.
    Coherent { x_cut: f64, p_cut: f64 },
}

/// Check-specific settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckOptions {
    /// Husimi lattice spacing in units of `sqrt(ℏ)`.
    pub spacing: f64,
    /// Atoms lighter than this are pruned before transport.
    pub prune: f64,
    /// Sobolev degree of the localization check.
    pub k: usize,
    /// Translation lengths of the local-unitary check, in units of `sqrt(ℏ)`.
    pub shifts: Vec<f64>,
    pub observable: Observable,
    pub compression: Compression,
    /// Also measure the three legs of the triangle decomposition.
    pub legs: bool,
    /// Also report `Z^M` norms of the local unitary for `M = 1, 2, 3`.
    pub z_norms: bool,
    /// Smallest accepted log–log slope.
    pub slope_min: f64,
    /// Relative slack of explicit-constant gates.
    pub slack: f64,
    /// Write SVG plots next to the report.
    pub plots: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            spacing: 0.5,
            prune: 1e-11,
            k: 1,
            shifts: vec![1.0, 2.0, 4.0],
            observable: Observable::Sin,
            compression: Compression::None,
            legs: false,
            z_norms: false,
            slope_min: 0.45,
            slack: 0.10,
            plots: true,
        }
    }
}

fn experiment_solver() -> SolverPolicy {
    SolverPolicy { exact_cap: 5000, ..SolverPolicy::default() }
}

fn default_p() -> Vec<f64> {
    vec![2.0]
}

/// One experiment: a model, an initial state and the `(ℏ, T, p)` grid to sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub check: CheckKind,
    pub model: ModelSpec,
    pub initial: InitialRecipe,
    #[serde(rename = "T_list")]
    pub t_list: Vec<f64>,
    pub hbar_list: Vec<f64>,
    #[serde(default = "default_p")]
    pub p_list: Vec<f64>,
    #[serde(default)]
    pub grid: GridPolicy,
    #[serde(default = "experiment_solver")]
    pub solver: SolverPolicy,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub options: CheckOptions,
}

impl Scenario {
    /// Parses TOML, reporting the offending line and key on failure.
    pub fn from_toml(text: &str) -> Result<Self> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| {
            let at = e
                .span()
                .map(|s| {
                    let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
                    format!(" (line {line})")
                })
                .unwrap_or_default();
            Error::Config(format!("{}{at}", e.message()))
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.hbar_list.is_empty() || self.hbar_list.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::Config("hbar_list must hold positive values".into()));
        }
        if self.t_list.is_empty() || self.t_list.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::Config("T_list must hold nonnegative values".into()));
        }
        if self.p_list.iter().any(|p| !(*p >= 1.0)) {
            return Err(Error::Config("p_list entries must be at least 1".into()));
        }
        if !(self.options.spacing > 0.0 && self.options.spacing <= 0.5) {
            return Err(Error::Config("options.spacing must lie in (0, 0.5]".into()));
        }
        let model = self.model.build()?;
        if self.check == CheckKind::OperatorEgorov {
            if self.grid.periodic {
                return Err(Error::Config("operator checks need a non-periodic grid".into()));
            }
            if model.dim != 1 || !matches!(self.options.compression, Compression::Coherent { .. }) {
                return Err(Error::Config("operator checks are one-dimensional and need coherent compression".into()));
            }
        }
        Ok(())
    }

    pub fn t_max(&self) -> f64 {
        self.t_list.iter().cloned().fold(0.0, f64::max)
    }

    /// The bundled scenario used as a smoke test: explicit-constant gate on the harmonic oscillator.
    pub fn harmonic_sanity() -> Self {
        Self::from_toml(HARMONIC_SANITY).expect("bundled scenario parses")
    }
}

/// Source of [`Scenario::harmonic_sanity`].
pub const HARMONIC_SANITY: &str = r#"name = "harmonic-sanity"
check = "meanfield"
T_list = [0.0, 0.5, 1.0]
hbar_list = [0.1, 0.05]
p_list = [2.0]
seed = 1

[model]
name = "harmonic"

[initial]
kind = "coherent_mixture"
mean = [1.0, 0.0]
sigma = [0.3, 0.3]
nodes = 3

[options]
plots = false
"#;
