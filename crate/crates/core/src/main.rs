use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use swgyre::experiment::{
    self, dam_break_transpose_difference, orders_in_window, resolve, write_provenance, ConfigFile, Experiment,
    ExperimentKind, Quantity, ORDER_MIN_N, ORDER_WINDOW,
};
use swgyre::gyre::{StreamKind, DAY};
use swgyre::io::{output_root, OUT_DIR_ENV};
use swgyre::riemann::self_test;
use swgyre::tracer::InitialDistribution;
use swgyre::verification::{convergence_table, eta_table, Sampling};
use swgyre::{Limiter, SolverError, Splitting};

/// Fractional-step finite-volume solver for the reduced-gravity
/// shallow-water equations on a beta plane.
#[derive(Parser, Debug)]
#[command(name = "swgyre", version, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Manufactured-solution verification studies.
    Verify {
        #[command(subcommand)]
        study: VerifyCommand,
    },
    /// Spin up the wind-driven double-gyre basin from rest.
    Gyre(GyreArgs),
    /// Advect a passive tracer through a spun-up basin.
    Tracer(TracerArgs),
    /// Randomized Riemann-solver checks and the transposed dam-break check.
    RiemannSelftest {
        /// Random interface states to test.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand, Debug)]
enum VerifyCommand {
    /// Grid-refinement study of the height error at t = 1.
    Convergence(ConvergenceArgs),
    /// Velocity error and wall time across eta with eta + epsilon = 1.
    Eta(EtaArgs),
}

/// Flags shared by every experiment. Quantities accept unit suffixes
/// (`40km`, `6min`, `2y`); bare numbers are SI.
#[derive(Args, Debug, Default)]
struct Common {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Time step (nondimensional for the verification studies).
    #[arg(long)]
    dt: Option<String>,
    /// Adaptive stepping at this Courant target (conflicts with --dt).
    #[arg(long)]
    cfl: Option<f64>,
    /// Kinematic viscosity in m^2/s (sets Re = 1/nu in the verification studies).
    #[arg(long)]
    nu: Option<f64>,
    /// none, minmod, mc or superbee.
    #[arg(long)]
    limiter: Option<Limiter>,
    /// godunov or strang.
    #[arg(long)]
    splitting: Option<Splitting>,
    /// Output directory [default: $GYRE_OUT_DIR/<experiment>, else out/<experiment>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the compute kernels [default: all cores].
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct ConvergenceArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated grid sizes [default: 10,20,40,80].
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
    /// Step on the coarsest level [default: 0.025]; divided by four per doubling.
    #[arg(long)]
    base_dt: Option<f64>,
    /// point or cell_average sampling of the exact solution.
    #[arg(long)]
    sampling: Option<String>,
}

#[derive(Args, Debug)]
struct EtaArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated eta values [default: 0.1,0.3,0.5,0.7,0.9].
    #[arg(long, value_delimiter = ',')]
    etas: Option<Vec<f64>>,
    /// Cells per direction [default: 50].
    #[arg(long)]
    n: Option<usize>,
    /// Final time [default: 5].
    #[arg(long)]
    t_end: Option<f64>,
    /// Timed repeats per eta; the minimum is reported [default: 1].
    #[arg(long)]
    repeats: Option<usize>,
}

#[derive(Args, Debug)]
struct GyreArgs {
    #[command(flatten)]
    common: Common,
    /// Grid spacing [default: 40km].
    #[arg(long)]
    dx: Option<String>,
    /// Simulated years (added to --days) [default: 1 year in total].
    #[arg(long)]
    years: Option<f64>,
    /// Simulated days (added to --years).
    #[arg(long)]
    days: Option<f64>,
    /// Snapshot cadence [default: 30d].
    #[arg(long)]
    snapshot_every: Option<String>,
    /// velocity or transport stream function in the snapshots.
    #[arg(long)]
    stream: Option<String>,
}

#[derive(Args, Debug)]
struct TracerArgs {
    #[command(flatten)]
    common: Common,
    /// Grid spacing [default: 40km].
    #[arg(long)]
    dx: Option<String>,
    /// Simulated days of the coupled run [default: 360].
    #[arg(long)]
    days: Option<f64>,
    /// Spun-up state dump (h, hu, hv) to start from.
    #[arg(long)]
    state: Option<PathBuf>,
    /// Spin-up length when no --state is given [default: 2y].
    #[arg(long)]
    spinup: Option<String>,
    /// Seed of the initial concentration.
    #[arg(long)]
    seed: Option<u64>,
    /// uniform or truncated_gaussian initial concentration.
    #[arg(long)]
    distribution: Option<String>,
    /// Comma-separated snapshot days [default: 0,50,100,150,240,360].
    #[arg(long, value_delimiter = ',')]
    snapshot_days: Option<Vec<f64>>,
}

fn keyword<T: serde::de::DeserializeOwned>(key: &str, value: &Option<String>) -> Result<Option<T>, SolverError> {
    value
        .as_ref()
        .map(|v| {
            serde_json::from_value(serde_json::Value::String(v.trim().to_ascii_lowercase()))
                .map_err(|_| SolverError::config(key, format!("unknown value `{v}`")))
        })
        .transpose()
}

impl Common {
    fn to_config(&self) -> ConfigFile {
        ConfigFile {
            dt: self.dt.as_deref().map(Quantity::from),
            cfl: self.cfl,
            nu: self.nu,
            limiter: self.limiter,
            splitting: self.splitting,
            out: self.out.clone(),
            workers: self.workers,
            ..ConfigFile::default()
        }
    }
}

fn load(common: &Common, flags: ConfigFile) -> Result<ConfigFile, SolverError> {
    let base = match &common.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    Ok(base.overlay(&common.to_config()).overlay(&flags))
}

fn build(command: &Command) -> Result<(ConfigFile, ExperimentKind), SolverError> {
    Ok(match command {
        Command::Verify { study: VerifyCommand::Convergence(a) } => {
            let flags = ConfigFile {
                levels: a.levels.clone(),
                base_dt: a.base_dt,
                sampling: keyword::<Sampling>("sampling", &a.sampling)?,
                ..ConfigFile::default()
            };
            (load(&a.common, flags)?, ExperimentKind::VerifyConvergence)
        }
        Command::Verify { study: VerifyCommand::Eta(a) } => {
            let flags = ConfigFile {
                etas: a.etas.clone(),
                n: a.n,
                t_end: a.t_end.map(Quantity::from),
                repeats: a.repeats,
                ..ConfigFile::default()
            };
            (load(&a.common, flags)?, ExperimentKind::VerifyEta)
        }
        Command::Gyre(a) => {
            let t_end = match (a.years, a.days) {
                (None, None) => None,
                (y, d) => Some(Quantity::Number(y.unwrap_or(0.0) * 365.0 * DAY + d.unwrap_or(0.0) * DAY)),
            };
            let flags = ConfigFile {
                dx: a.dx.as_deref().map(Quantity::from),
                t_end,
                snapshot_every: a.snapshot_every.as_deref().map(Quantity::from),
                stream: keyword::<StreamKind>("stream", &a.stream)?,
                ..ConfigFile::default()
            };
            (load(&a.common, flags)?, ExperimentKind::Gyre)
        }
        Command::Tracer(a) => {
            let flags = ConfigFile {
                dx: a.dx.as_deref().map(Quantity::from),
                t_end: a.days.map(|d| Quantity::Number(d * DAY)),
                state: a.state.clone(),
                spinup: a.spinup.as_deref().map(Quantity::from),
                seed: a.seed,
                distribution: keyword::<InitialDistribution>("distribution", &a.distribution)?,
                snapshot_days: a.snapshot_days.clone(),
                ..ConfigFile::default()
            };
            (load(&a.common, flags)?, ExperimentKind::Tracer)
        }
        Command::RiemannSelftest { .. } => unreachable!("handled before configuration"),
    })
}

fn out_dir(cfg: &ConfigFile, kind: ExperimentKind) -> PathBuf {
    match &cfg.out {
        Some(p) => p.clone(),
        None => output_root(None).join(kind.name()),
    }
}

fn riemann_selftest(samples: usize, seed: u64) -> Result<bool, SolverError> {
    let report = self_test(samples, seed);
    let tol = 1e-12;
    let roe_ok = report.passed(tol);
    println!(
        "riemann: {} samples, completeness {:.3e}, roe property {:.3e}, x/y symmetry {:.3e} -> {}",
        report.samples,
        report.max_completeness_error,
        report.max_roe_property_error,
        report.max_symmetry_error,
        if roe_ok { "PASS" } else { "FAIL" }
    );
    let diff = dam_break_transpose_difference(100, 50)?;
    let sym_ok = diff == 0.0;
    println!(
        "dam break: x-sweep vs transposed y-sweep max difference {diff:e} -> {}",
        if sym_ok { "PASS" } else { "FAIL" }
    );
    Ok(roe_ok && sym_ok)
}

fn execute(cli: Cli) -> Result<bool, SolverError> {
    if let Command::RiemannSelftest { samples, seed } = cli.command {
        return riemann_selftest(samples, seed);
    }
    let (mut cfg, kind) = build(&cli.command)?;
    let dir = out_dir(&cfg, kind);
    cfg.out = Some(dir.clone());
    let exp = resolve(&cfg, kind)?;
    if let Some(n) = cfg.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| SolverError::config("workers", e.to_string()))?;
    }
    let prov = write_provenance(&dir, &exp)?;
    eprintln!("effective configuration written to {}", prov.display());
    run(&exp, &dir)
}

fn run(exp: &Experiment, dir: &Path) -> Result<bool, SolverError> {
    match exp {
        Experiment::VerifyConvergence(plan) => {
            let rows = experiment::run_convergence(plan, Some(dir), |r| {
                eprintln!("N = {:>4}  error {:.4e}  ({:.2} s)", r.n, r.error, r.seconds);
            })?;
            print!("{}", convergence_table(&rows));
            let ok = orders_in_window(&rows);
            println!(
                "orders for N >= {ORDER_MIN_N} within [{}, {}]: {}",
                ORDER_WINDOW.0,
                ORDER_WINDOW.1,
                if ok { "PASS" } else { "FAIL" }
            );
            Ok(ok)
        }
        Experiment::VerifyEta(plan) => {
            let rows = experiment::run_eta(plan, Some(dir))?;
            print!("{}", eta_table(&rows));
            Ok(true)
        }
        Experiment::Gyre(run) => {
            let steps_per_day = (DAY / run.dt).max(1.0);
            let out = experiment::run_gyre_experiment(run, |rec| {
                if rec.step as f64 % (30.0 * steps_per_day).round() == 0.0 {
                    eprintln!("day {:>7.1}  max wave speed {:.3} m/s  courant {:.3}", rec.t / DAY, rec.max_speed, rec.max_courant);
                }
            })?;
            for s in &out.snapshots {
                let d = &s.diagnostics;
                println!(
                    "day {:>8.2}  |h-H0| max {:>8.3} m at x = {:>6.0} km  psi [{:.0}, {:.0}] m^2/s",
                    s.t / DAY,
                    d.extremum,
                    d.extremum_x / 1e3,
                    s.psi_range.0,
                    s.psi_range.1
                );
            }
            let m0 = run.setup.h0 * run.setup.width * run.setup.length;
            if let Some(last) = out.run.records.last() {
                println!("steps {}  relative mass change {:.3e}", out.run.steps, (last.mass - m0) / m0);
            }
            println!("output in {}", dir.display());
            Ok(true)
        }
        Experiment::Tracer(plan) => {
            let out = experiment::run_tracer_experiment(plan, |m| eprintln!("{m}"))?;
            let violation = out.max_principle_violation();
            println!(
                "steps {}  C range kept within [0, {:.6}] up to {:.3e}",
                out.records.len(),
                out.c_max0,
                violation
            );
            println!(
                "centroid ({:.1}, {:.1}) km -> ({:.1}, {:.1}) km",
                out.centroid0.0 / 1e3,
                out.centroid0.1 / 1e3,
                out.centroid.0 / 1e3,
                out.centroid.1 / 1e3
            );
            println!("output in {}", dir.display());
            Ok(violation <= 1e-13)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            if matches!(e, SolverError::InvalidConfig { .. }) {
                eprintln!("(see `swgyre --help`; the default output root can be set with {OUT_DIR_ENV})");
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
