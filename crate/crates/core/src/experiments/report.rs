use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scenario::{CheckKind, Scenario};
use crate::error::{Error, Result};

/// Version of the report JSON layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;
/// Smallest number of points accepted by [`fit_power_law`].
pub const FIT_MIN_POINTS: usize = 4;
/// Smallest `x_max / x_min` accepted by [`fit_power_law`].
pub const FIT_MIN_SPAN: f64 = 10.0;

/// One measurement of a sweep.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub hbar: f64,
    #[serde(rename = "T")]
    pub t: f64,
    /// Cost exponent, for transport rows.
    pub p: Option<f64>,
    /// Translation length of local-unitary rows.
    pub shift: Option<f64>,
    /// Measured quantity (a distance, a norm or a ratio).
    pub measured: f64,
    /// Certified lower value of `measured` (equal to it when the measurement is exact).
    pub lower: f64,
    /// Bound side of the row's gate, when the gate is per row.
    pub bound: Option<f64>,
    /// Additive error certificate: solver gap plus pruning and aggregation terms.
    pub certificate: f64,
    /// Further named values (legs, atom counts, constants).
    pub values: BTreeMap<String, f64>,
    pub pass: Option<bool>,
}

impl SweepRow {
    pub fn new(hbar: f64, t: f64) -> Self {
        Self { hbar, t, ..Self::default() }
    }

    /// Looks up a column by name: `hbar`, `T`, `p`, `shift`, `measured`, `lower`, `bound`,
    /// `certificate`, `sqrt_hbar` or any key of `values`.
    pub fn value(&self, key: &str) -> Option<f64> {
        match key {
            "hbar" => Some(self.hbar),
            "sqrt_hbar" => Some(self.hbar.sqrt()),
            "T" => Some(self.t),
            "p" => self.p,
            "shift" => self.shift,
            "measured" => Some(self.measured),
            "lower" => Some(self.lower),
            "bound" => self.bound,
            "certificate" => Some(self.certificate),
            other => self.values.get(other).copied(),
        }
    }
}

/// Least-squares fit of `log y = slope·log x + intercept`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    /// Which rows were fitted, e.g. `T=1,p=2`.
    pub label: String,
    pub slope: f64,
    pub intercept: f64,
    /// Half-width of the 95% jackknife interval of the slope.
    pub ci: f64,
    pub points: usize,
}

fn least_squares(lx: &[f64], ly: &[f64]) -> (f64, f64) {
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Power-law fit with a leave-one-out jackknife interval.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<ScalingFit> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidInput("x and y columns differ in length".into()));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput("power-law fits need positive finite values".into()));
    }
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(0.0, f64::max);
    if xs.len() < FIT_MIN_POINTS || hi / lo < FIT_MIN_SPAN * (1.0 - 1e-12) {
        return Err(Error::InsufficientSpan { points: xs.len(), span: hi / lo });
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let (slope, intercept) = least_squares(&lx, &ly);
    let n = lx.len();
    let loo: Vec<f64> = (0..n)
        .map(|k| {
            let sx: Vec<f64> = lx.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, v)| *v).collect();
            let sy: Vec<f64> = ly.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, v)| *v).collect();
            least_squares(&sx, &sy).0
        })
        .collect();
    let mean = loo.iter().sum::<f64>() / n as f64;
    let var = (n as f64 - 1.0) / n as f64 * loo.iter().map(|s| (s - mean).powi(2)).sum::<f64>();
    Ok(ScalingFit { label: String::new(), slope, intercept, ci: 1.96 * var.sqrt(), points: n })
}

/// [`fit_power_law`] on two columns of `rows`.
pub fn fit_scaling(rows: &[SweepRow], x_key: &str, y_key: &str) -> Result<ScalingFit> {
    let mut xs = Vec::with_capacity(rows.len());
    let mut ys = Vec::with_capacity(rows.len());
    for r in rows {
        let x = r.value(x_key).ok_or_else(|| Error::InvalidInput(format!("rows have no `{x_key}` column")))?;
        let y = r.value(y_key).ok_or_else(|| Error::InvalidInput(format!("rows have no `{y_key}` column")))?;
        xs.push(x);
        ys.push(y);
    }
    fit_power_law(&xs, &ys)
}

/// Verdict of one pass/fail rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub detail: String,
    /// Worst measured value over the rows the gate covers.
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Gate {
    /// Passes when `measured ≤ bound`.
    pub fn upper(name: &str, detail: String, measured: f64, bound: f64) -> Self {
        Self { name: name.into(), detail, measured, bound, pass: measured <= bound }
    }

    /// Passes when `measured ≥ bound`.
    pub fn lower(name: &str, detail: String, measured: f64, bound: f64) -> Self {
        Self { name: name.into(), detail, measured, bound, pass: measured >= bound }
    }
}

/// Everything a sweep produced, in deterministic order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub scenario: Scenario,
    pub check: CheckKind,
    /// Constants entering the gates (`lambda_H`, calibrated constants, slack).
    pub constants: BTreeMap<String, f64>,
    pub rows: Vec<SweepRow>,
    pub fits: Vec<ScalingFit>,
    pub gates: Vec<Gate>,
    /// Remarks on gates that could not be evaluated.
    pub notes: Vec<String>,
    pub pass: bool,
}

/// Wall-clock times, kept apart from the report so reports stay reproducible byte for byte.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    /// `(ℏ, seconds)` per row job.
    pub rows: Vec<(f64, f64)>,
}

const CSV_FIXED: [&str; 9] = ["hbar", "T", "p", "shift", "measured", "lower", "bound", "certificate", "pass"];

impl SweepReport {
    pub fn new(scenario: &Scenario) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            scenario: scenario.clone(),
            check: scenario.check,
            constants: BTreeMap::new(),
            rows: Vec::new(),
            fits: Vec::new(),
            gates: Vec::new(),
            notes: Vec::new(),
            pass: false,
        }
    }

    /// Sets `pass` from the gates and the per-row verdicts.
    pub fn finish(mut self) -> Self {
        self.pass = self.gates.iter().all(|g| g.pass) && self.rows.iter().all(|r| r.pass != Some(false));
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text)?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "report schema {} is not the supported version {REPORT_SCHEMA_VERSION}",
                report.schema_version
            )));
        }
        Ok(report)
    }

    /// Columns: the fixed fields, then the union of `values` keys in sorted order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut extra: Vec<&String> = self.rows.iter().flat_map(|r| r.values.keys()).collect();
        extra.sort();
        extra.dedup();
        let mut header: Vec<&str> = CSV_FIXED.to_vec();
        header.extend(extra.iter().map(|s| s.as_str()));
        writeln!(w, "{}", header.join(","))?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let mut cells = vec![
                r.hbar.to_string(),
                r.t.to_string(),
                opt(r.p),
                opt(r.shift),
                r.measured.to_string(),
                r.lower.to_string(),
                opt(r.bound),
                r.certificate.to_string(),
                r.pass.map(|b| b.to_string()).unwrap_or_default(),
            ];
            cells.extend(extra.iter().map(|k| opt(r.values.get(*k).copied())));
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    /// Writes `report.json`, `report.csv` and `timing.json` into `dir`.
    pub fn save(&self, dir: &Path, timing: &Timing) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json()? + "\n")?;
        let f = std::fs::File::create(dir.join("report.csv"))?;
        self.write_csv(std::io::BufWriter::new(f))?;
        std::fs::write(dir.join("timing.json"), serde_json::to_string_pretty(timing)? + "\n")?;
        Ok(())
    }
}
