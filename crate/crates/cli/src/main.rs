//! `qcc`: run scenario sweeps and one-shot phase-space tools.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qcc::dynamics::classical::{trajectory, write_trajectory_csv, DEFAULT_FLOW_DT};
use qcc::dynamics::{default_dt, flow_point, propagate_quantum, Method};
use qcc::experiments::sweeps::local_unitary;
use qcc::experiments::{preflight, run_scenario, write_outputs, Scenario};
use qcc::norms::{sobolev_norm_with, z_norm_with, SobolevForm};
use qcc::phase::state::{cat_state, random_low_rank};
use qcc::phase::{coherent_state, ModelSpec, PhasePoint, PhaseSpaceGrid, QuantumState};
use qcc::transforms::husimi::covering_lattice;
use qcc::transforms::{husimi, wigner, LatticeSpec, PhaseSpaceMeasure};
use qcc::transport::{wasserstein_with, SolverChoice, SolverPolicy, TransportProblem, TransportRecord};
use qcc::Error;

const EXIT_GATE: u8 = 2;
const EXIT_ERROR: u8 = 1;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "qcc", version, about = "Quantum-classical correspondence sweeps and phase-space tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write report.json, report.csv, timing.json and plots.
    Run(RunArgs),
    /// One-shot invocation of a single operation.
    #[command(subcommand)]
    Tool(Tool),
    /// Create or inspect state files.
    #[command(subcommand)]
    State(StateCmd),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML).
    scenario: PathBuf,
    /// Output directory [default: $QCC_OUT_DIR/<name>, else qcc-out/<name>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads [default: available cores].
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    /// Largest support per side for the exact solver.
    #[arg(long)]
    exact_cap: Option<usize>,
    /// Final entropic regularization relative to diam^p.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Only run the boundary, coverage and box checks.
    #[arg(long)]
    preflight_only: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Auto,
    Exact,
    Entropic,
}

impl From<SolverArg> for SolverChoice {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Auto => SolverChoice::Auto,
            SolverArg::Exact => SolverChoice::Exact,
            SolverArg::Entropic => SolverChoice::Entropic,
        }
    }
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// harmonic, free, pendulum, quartic-window, linear-free or twisted-pendulum.
    #[arg(long)]
    model: String,
    #[arg(long)]
    strength: Option<f64>,
    #[arg(long)]
    window: Option<f64>,
}

impl ModelArgs {
    fn spec(&self, dim: usize) -> ModelSpec {
        ModelSpec { dim, strength: self.strength, window: self.window, ..ModelSpec::named(&self.model) }
    }
}

#[derive(Args, Clone)]
struct GridArgs {
    #[arg(long)]
    hbar: f64,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    /// Half-width of the position box.
    #[arg(long, default_value_t = 8.0)]
    half_width: f64,
    #[arg(long, default_value_t = 256)]
    n_x: usize,
}

impl GridArgs {
    fn grid(&self) -> qcc::Result<PhaseSpaceGrid> {
        PhaseSpaceGrid::new(self.dim, self.hbar, -self.half_width, self.half_width, self.n_x)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    SplitStep,
    Dense,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormArg {
    Quadratic,
    Sum,
}

#[derive(Subcommand)]
enum Tool {
    /// Husimi function on a covering lattice.
    Husimi {
        state: PathBuf,
        /// Lattice spacing in units of sqrt(hbar), at most 0.5.
        #[arg(long, default_value_t = 0.25)]
        spacing: f64,
        /// .csv, .json or .bin [default: CSV on stdout].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Wigner function on the grid's phase-space lattice (D = 1).
    Wigner {
        state: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quantum propagation of a state file.
    Propagate {
        state: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long = "T")]
        t: f64,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, value_enum, default_value = "split-step")]
        method: MethodArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classical flow of one phase-space point.
    Flow {
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated coordinates x1,..,p1,..
        #[arg(long, allow_hyphen_values = true)]
        alpha: String,
        #[arg(long = "T")]
        t: f64,
        #[arg(long, default_value_t = DEFAULT_FLOW_DT)]
        dt: f64,
        /// Also write the sampled trajectory as CSV.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// W_p distance between two measure files (.json or .bin).
    Wasserstein {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, value_enum, default_value = "auto")]
        solver: SolverArg,
        /// Write the problem and result as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Z^k norm of W = U_T^† tau_shift U_T over a square of coherent centers.
    Znorm {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long = "T", default_value_t = 0.0)]
        t: f64,
        /// Translation x,p.
        #[arg(long, allow_hyphen_values = true, default_value = "0,0")]
        shift: String,
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Centers fill [-c, c]^2.
        #[arg(long, default_value_t = 1.0)]
        centers: f64,
        /// Center spacing in units of sqrt(hbar).
        #[arg(long, default_value_t = 1.0)]
        spacing: f64,
    },
    /// Re-centered Sobolev norm of a state file.
    Sobolev {
        state: PathBuf,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, allow_hyphen_values = true)]
        alpha: String,
        #[arg(long, value_enum)]
        form: Option<FormArg>,
    },
}

#[derive(Subcommand)]
enum StateCmd {
    /// Coherent state |alpha>.
    Coherent {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, allow_hyphen_values = true)]
        alpha: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Normalized superposition of |c + s/2 e_x> and |c - s/2 e_x>.
    Cat {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        separation: f64,
        #[arg(long, allow_hyphen_values = true)]
        center: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded random low-rank mixture.
    Random {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        rank: usize,
        #[arg(long, default_value_t = 0.5)]
        spread: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the header and moments of a state file.
    Info { state: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Tool(t) => cmd_tool(t).map(|_| ExitCode::SUCCESS),
        Command::State(s) => cmd_state(s).map(|_| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(m)) => {
            eprintln!("usage error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

enum Failure {
    Usage(String),
    Domain(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Domain(e.into())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn parse_point(text: &str, dim: Option<usize>) -> CliResult<PhasePoint> {
    let coords = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<f64>, _>>()
        .map_err(|e| Failure::Usage(format!("cannot parse `{text}` as comma-separated numbers: {e}")))?;
    if coords.len() % 2 != 0 || coords.is_empty() {
        return Err(Failure::Usage(format!("`{text}` must hold 2D coordinates")));
    }
    if let Some(d) = dim {
        if coords.len() != 2 * d {
            return Err(Failure::Usage(format!("`{text}` must hold {} coordinates", 2 * d)));
        }
    }
    PhasePoint::new(coords).map_err(|e| Failure::Usage(e.to_string()))
}

fn out_dir(args: &RunArgs, name: &str) -> PathBuf {
    if let Some(o) = &args.out {
        return o.clone();
    }
    match std::env::var_os("QCC_OUT_DIR") {
        Some(base) => PathBuf::from(base).join(name),
        None => PathBuf::from("qcc-out").join(name),
    }
}

fn cmd_run(args: RunArgs) -> CliResult<ExitCode> {
    let mut scenario = Scenario::load(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(s) = args.solver {
        scenario.solver.solver = s.into();
    }
    if let Some(c) = args.exact_cap {
        scenario.solver.exact_cap = c;
    }
    if let Some(e) = args.epsilon {
        scenario.solver.epsilon_final = e;
    }
    let dir = out_dir(&args, &scenario.name);
    std::fs::create_dir_all(&dir)?;
    let probe = dir.join(".qcc-write-test");
    std::fs::write(&probe, b"")?;
    std::fs::remove_file(&probe)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Failure::Usage(e.to_string()))?;
    pool.install(|| {
        let checks = preflight(&scenario)?;
        std::fs::write(dir.join("preflight.json"), serde_json::to_string_pretty(&checks).map_err(Error::from)? + "\n")?;
        for c in &checks {
            println!(
                "preflight hbar={} n_x={} half_width={:.3} boundary_mass={:.2e}{}",
                c.hbar,
                c.n_x,
                c.half_width,
                c.boundary_mass,
                c.husimi_mass.map(|m| format!(" husimi_mass={m:.9}")).unwrap_or_default()
            );
        }
        if args.preflight_only {
            return Ok(ExitCode::SUCCESS);
        }
        let (report, timing) = run_scenario(&scenario)?;
        write_outputs(&scenario, &report, &timing, &dir)?;
        for g in &report.gates {
            println!(
                "{} {} [{}] measured={:.6e} bound={:.6e}",
                if g.pass { "PASS" } else { "FAIL" },
                g.name,
                g.detail,
                g.measured,
                g.bound
            );
        }
        for n in &report.notes {
            println!("note: {n}");
        }
        let failed_rows = report.rows.iter().filter(|r| r.pass == Some(false)).count();
        if failed_rows > 0 {
            println!("FAIL {failed_rows} row(s) exceed their bound");
        }
        println!("report written to {}", dir.display());
        Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::from(EXIT_GATE) })
    })
}

fn load_measure(path: &Path) -> CliResult<PhaseSpaceMeasure> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => {
            let m: PhaseSpaceMeasure = serde_json::from_slice(&std::fs::read(path)?).map_err(Error::from)?;
            // rebuild through the checked constructor
            Ok(PhaseSpaceMeasure::from_flat(m.dim(), m.hbar(), m.points().to_vec(), m.masses().to_vec())?)
        }
        Some("bin") => Ok(PhaseSpaceMeasure::load(path)?),
        _ => Err(Failure::Usage(format!("{}: measure files must end in .json or .bin", path.display()))),
    }
}

fn write_measure(m: &PhaseSpaceMeasure, out: Option<&Path>) -> CliResult<()> {
    match out {
        None => {
            let stdout = std::io::stdout();
            m.write_csv(stdout.lock())?;
        }
        Some(p) => match p.extension().and_then(|e| e.to_str()) {
            Some("csv") => m.write_csv(std::io::BufWriter::new(std::fs::File::create(p)?))?,
            Some("json") => std::fs::write(p, serde_json::to_vec(m).map_err(Error::from)?)?,
            Some("bin") => m.save(p)?,
            _ => return Err(Failure::Usage(format!("{}: output must end in .csv, .json or .bin", p.display()))),
        },
    }
    Ok(())
}

fn cmd_tool(tool: Tool) -> CliResult<()> {
    match tool {
        Tool::Husimi { state, spacing, out } => {
            let st = QuantumState::load(&state)?;
            let lattice = covering_lattice(&st, spacing * st.grid().hbar().sqrt())?;
            write_measure(&husimi(&st, &lattice)?, out.as_deref())
        }
        Tool::Wigner { state, out } => {
            let st = QuantumState::load(&state)?;
            write_measure(&wigner(&st)?, out.as_deref())
        }
        Tool::Propagate { state, model, t, dt, method, out } => {
            let st = QuantumState::load(&state)?;
            let m = model.spec(st.grid().dim()).build()?;
            let dt = dt.unwrap_or_else(|| default_dt(st.grid().hbar(), t));
            let method = match method {
                MethodArg::SplitStep => Method::SplitStep,
                MethodArg::Dense => Method::Dense,
            };
            let next = propagate_quantum(&st, &m, t, dt, method)?;
            next.save(&out)?;
            println!("propagated to T={t} with dt={dt}; trace={:.12}", next.trace());
            Ok(())
        }
        Tool::Flow { model, alpha, t, dt, trajectory: path } => {
            let a = parse_point(&alpha, None)?;
            let m = model.spec(a.dim()).build()?;
            if !(dt > 0.0) {
                return Err(Failure::Usage("--dt must be positive".into()));
            }
            let dt = if t > 0.0 { t / (t / dt).ceil() } else { dt };
            let end = flow_point(&a, &m, t, dt)?;
            let coords: Vec<String> = end.coords().iter().map(|v| format!("{v:.12}")).collect();
            println!("{}", coords.join(","));
            if let Some(p) = path {
                let rows = trajectory(&a, &m, t, dt, 1)?;
                write_trajectory_csv(std::io::BufWriter::new(std::fs::File::create(p)?), &rows)?;
            }
            Ok(())
        }
        Tool::Wasserstein { a, b, p, solver, out } => {
            let mu = load_measure(&a)?;
            let nu = load_measure(&b)?;
            let problem = TransportProblem::new(mu, nu, p);
            let policy = SolverPolicy { solver: solver.into(), exact_cap: 5000, ..SolverPolicy::default() };
            let res = wasserstein_with(&problem, &policy)?;
            println!("distance {:.12e}", res.distance);
            println!("gap {:.3e}", res.bound_gap);
            if let Some(o) = out {
                let rec = TransportRecord { problem, result: res };
                std::fs::write(o, serde_json::to_vec_pretty(&rec).map_err(Error::from)?)?;
            }
            Ok(())
        }
        Tool::Znorm { model, grid, t, shift, k, centers, spacing } => {
            let g = grid.grid()?;
            let a = parse_point(&shift, Some(g.dim()))?;
            let m = model.spec(g.dim()).build()?;
            let w = local_unitary(&m, &g, &a, t)?;
            let step = spacing * g.hbar().sqrt();
            let lattice = LatticeSpec::covering(&[-centers, -centers], &[centers, centers], &[step, step], &[0.0, 0.0])?;
            let z = z_norm_with(&w, k, &lattice, SobolevForm::default_for(k))?;
            println!("Z^{k} {:.12e} at {:?} over {} centers", z.value, z.argmax, z.centers);
            Ok(())
        }
        Tool::Sobolev { state, k, alpha, form } => {
            let st = QuantumState::load(&state)?;
            let a = parse_point(&alpha, Some(st.grid().dim()))?;
            let form = match form {
                Some(FormArg::Quadratic) => SobolevForm::Quadratic,
                Some(FormArg::Sum) => SobolevForm::Sum,
                None => SobolevForm::default_for(k),
            };
            println!("{:.12e}", sobolev_norm_with(&st, k, &a, form)?);
            Ok(())
        }
    }
}

fn cmd_state(cmd: StateCmd) -> CliResult<()> {
    let (st, out) = match cmd {
        StateCmd::Coherent { grid, alpha, out } => {
            let g = grid.grid()?;
            let a = parse_point(&alpha, Some(g.dim()))?;
            (coherent_state(&g, &a)?, out)
        }
        StateCmd::Cat { grid, separation, center, out } => {
            let g = grid.grid()?;
            let c = match center {
                Some(c) => parse_point(&c, Some(g.dim()))?,
                None => PhasePoint::origin(g.dim()),
            };
            let mut a = c.coords().to_vec();
            let mut b = a.clone();
            a[0] += separation / 2.0;
            b[0] -= separation / 2.0;
            (cat_state(&g, &PhasePoint::new(a)?, &PhasePoint::new(b)?)?, out)
        }
        StateCmd::Random { grid, seed, rank, spread, out } => {
            let g = grid.grid()?;
            (random_low_rank(&g, seed, rank, &PhasePoint::origin(g.dim()), spread)?, out)
        }
        StateCmd::Info { state } => {
            let st = QuantumState::load(&state)?;
            let g = st.grid();
            let mut w = std::io::stdout().lock();
            writeln!(w, "dim {}", g.dim())?;
            writeln!(w, "hbar {}", g.hbar())?;
            writeln!(w, "box [{}, {})", g.x_min(0), g.x_max(0))?;
            writeln!(w, "n_x {}", g.n_x())?;
            writeln!(w, "branches {}", st.branches().len())?;
            writeln!(w, "trace {:.12}", st.trace())?;
            writeln!(w, "mean {:?}", st.mean().coords())?;
            writeln!(w, "boundary_mass {:.3e}", st.boundary_mass())?;
            return Ok(());
        }
    };
    st.save(&out)?;
    println!("wrote {}", out.display());
    Ok(())
}
