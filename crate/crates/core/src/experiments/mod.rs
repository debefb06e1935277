//! Scenario files, sweep drivers and their reports.

pub mod plots;
pub mod report;
pub mod scenario;
pub mod sweeps;

use std::path::Path;

pub use report::{fit_power_law, fit_scaling, Gate, ScalingFit, SweepReport, SweepRow, Timing};
pub use scenario::{CheckKind, CheckOptions, Compression, GridPolicy, InitialRecipe, Observable, Scenario};
pub use sweeps::{
    husimi_snapshots, preflight, run_egorov_sweep, run_local_unitary_check, run_localization_check, run_meanfield_check,
    run_operator_egorov_check, run_scenario, PreflightRow,
};

use crate::error::Result;

/// Writes the report files and, when the scenario asks for them, the plots
/// `scaling.svg` and `husimi_T<t>.svg`.
pub fn write_outputs(s: &Scenario, report: &SweepReport, timing: &Timing, dir: &Path) -> Result<()> {
    report.save(dir, timing)?;
    if s.options.plots {
        plots::plot_scaling(report, &dir.join("scaling.svg"))?;
        for (t, m) in husimi_snapshots(s)? {
            let title = format!("Husimi, hbar = {}, T = {t}", m.hbar());
            plots::plot_husimi(&m, &title, &dir.join(format!("husimi_T{t}.svg")))?;
        }
    }
    Ok(())
}
