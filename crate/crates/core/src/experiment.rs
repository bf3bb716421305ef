//! Config files, unit-suffixed quantities and experiment orchestration behind
//! the command-line tool.
//!
//! A config file is a JSON object. Lengths accept `m` or `km`, durations
//! accept `s`, `min`, `h`, `d` and `y` (365 days); bare numbers are SI. The
//! verification studies are nondimensional, so their `dt` and `t_end` must be
//! bare numbers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::boundary::fill_ghosts;
use crate::config::{BoundaryKind, Limiter, Splitting};
use crate::error::{Result, SolverError};
use crate::gyre::{run_gyre, GyreOutput, GyreRun, GyreSetup, StreamKind, DAY, YEAR};
use crate::io::{day_label, FieldDump};
use crate::splitting::{step_count, write_records_csv, Simulation};
use crate::tracer::{
    centroid, default_circles, init_concentration, interior_range, run_coupled, CircleSpec, InitialDistribution,
    TracerField, TracerRecord,
};
use crate::verification::{
    convergence_csv, convergence_study_with, eta_csv, exact_field, height_values, eta_sensitivity_study_with, AnsatzParams, ConvergenceRow, EtaRow,
    EtaStudy, Sampling, StudyOptions, BASE_DT,
};

/// A physical quantity written either as a bare number (SI) or with a unit suffix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Quantity {
    Number(f64),
    Text(String),
}

impl From<f64> for Quantity {
    fn from(v: f64) -> Self {
        Quantity::Number(v)
    }
}

impl From<&str> for Quantity {
    fn from(s: &str) -> Self {
        Quantity::Text(s.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dimension {
    Length,
    Time,
    /// Plain number; any unit suffix is an error.
    None,
}

const LENGTH_UNITS: &[(&str, f64)] = &[("km", 1e3), ("m", 1.0)];
const TIME_UNITS: &[(&str, f64)] = &[
    ("years", YEAR),
    ("year", YEAR),
    ("yr", YEAR),
    ("y", YEAR),
    ("days", DAY),
    ("day", DAY),
    ("d", DAY),
    ("min", 60.0),
    ("h", 3600.0),
    ("s", 1.0),
];

impl Quantity {
    /// Value in SI units, or an error naming `key`.
    pub fn resolve(&self, key: &str, dim: Dimension) -> Result<f64> {
        let value = match self {
            Quantity::Number(v) => *v,
            Quantity::Text(text) => {
                let t = text.trim();
                let split = t
                    .find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
                    .unwrap_or(t.len());
                let (num, unit) = (t[..split].trim(), t[split..].trim());
                let v: f64 = num
                    .parse()
                    .map_err(|_| SolverError::config(key, format!("cannot read a number from `{text}`")))?;
                if unit.is_empty() {
                    v
                } else {
                    let table = match dim {
                        Dimension::Length => LENGTH_UNITS,
                        Dimension::Time => TIME_UNITS,
                        Dimension::None => &[][..],
                    };
                    let scale = table.iter().find(|(u, _)| *u == unit).map(|(_, s)| *s).ok_or_else(|| {
                        let expected = match dim {
                            Dimension::Length => "a length (m, km)",
                            Dimension::Time => "a duration (s, min, h, d, y)",
                            Dimension::None => "a plain number",
                        };
                        SolverError::config(key, format!("unit `{unit}` in `{text}` is not valid here: expected {expected}"))
                    })?;
                    v * scale
                }
            }
        };
        if !value.is_finite() {
            return Err(SolverError::config(key, "must be finite"));
        }
        Ok(value)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    VerifyConvergence,
    VerifyEta,
    Gyre,
    Tracer,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::VerifyConvergence => "verify-convergence",
            ExperimentKind::VerifyEta => "verify-eta",
            ExperimentKind::Gyre => "gyre",
            ExperimentKind::Tracer => "tracer",
        }
    }
}

/// Overrides of the manufactured-solution parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnsatzPatch {
    pub eta: Option<f64>,
    pub epsilon: Option<f64>,
    pub omega: Option<f64>,
    pub fr: Option<f64>,
    pub re: Option<f64>,
    pub r0: Option<f64>,
}

/// Overrides of the basin parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GyrePatch {
    pub f0: Option<f64>,
    pub beta: Option<f64>,
    pub tau0: Option<f64>,
    pub rho: Option<f64>,
    pub g_r: Option<f64>,
    pub h0: Option<f64>,
    pub width: Option<Quantity>,
    pub length: Option<Quantity>,
    pub beta_origin: Option<Quantity>,
}

/// Contents of a config file. Every key is optional; command-line flags
/// override file values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<ExperimentKind>,
    pub dx: Option<Quantity>,
    pub dt: Option<Quantity>,
    pub cfl: Option<f64>,
    pub t_end: Option<Quantity>,
    /// Kinematic viscosity (m^2/s); `1/Re` in the verification studies.
    pub nu: Option<f64>,
    pub limiter: Option<Limiter>,
    pub splitting: Option<Splitting>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub levels: Option<Vec<usize>>,
    pub base_dt: Option<f64>,
    pub sampling: Option<Sampling>,
    pub etas: Option<Vec<f64>>,
    pub n: Option<usize>,
    pub repeats: Option<usize>,
    pub ansatz: Option<AnsatzPatch>,
    pub gyre: Option<GyrePatch>,
    pub snapshot_every: Option<Quantity>,
    pub stream: Option<StreamKind>,
    /// Spun-up state (`h, hu, hv` dump) the tracer run starts from.
    pub state: Option<PathBuf>,
    /// Spin-up length used by the tracer run when no `state` is given.
    pub spinup: Option<Quantity>,
    pub snapshot_days: Option<Vec<f64>>,
    pub distribution: Option<InitialDistribution>,
    pub circles: Option<Vec<CircleSpec>>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($f:ident),+ $(,)?) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )+
    };
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| SolverError::config("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| SolverError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            SolverError::InvalidConfig { key, message } => {
                SolverError::config(key, format!("{}: {message}", path.display()))
            }
            other => other,
        })
    }

    /// Keys set in `top` replace those in `self`; nested records merge per field.
    pub fn overlay(mut self, top: &ConfigFile) -> Self {
        overlay!(
            self,
            top,
            experiment,
            dx,
            dt,
            cfl,
            t_end,
            nu,
            limiter,
            splitting,
            seed,
            out,
            workers,
            levels,
            base_dt,
            sampling,
            etas,
            n,
            repeats,
            snapshot_every,
            stream,
            state,
            spinup,
            snapshot_days,
            distribution,
            circles,
        );
        if let Some(t) = &top.ansatz {
            let mut a = self.ansatz.take().unwrap_or_default();
            overlay!(a, t, eta, epsilon, omega, fr, re, r0);
            self.ansatz = Some(a);
        }
        if let Some(t) = &top.gyre {
            let mut g = self.gyre.take().unwrap_or_default();
            overlay!(g, t, f0, beta, tau0, rho, g_r, h0, width, length, beta_origin);
            self.gyre = Some(g);
        }
        self
    }
}

/// Settings of a grid-refinement study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePlan {
    pub levels: Vec<usize>,
    pub base_dt: f64,
    pub ansatz: AnsatzParams,
    pub options: StudyOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaPlan {
    pub etas: Vec<f64>,
    pub study: EtaStudy,
    pub options: StudyOptions,
    /// Overrides applied on top of each eta's parameters.
    pub fr: f64,
    pub re: f64,
    pub r0: f64,
}

/// A coupled tracer run on top of a spun-up basin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracerPlan {
    /// Basin, grid, step and duration of the coupled run.
    pub run: GyreRun,
    pub state: Option<PathBuf>,
    /// Spin-up length when `state` is absent.
    pub spinup: f64,
    pub seed: u64,
    pub distribution: InitialDistribution,
    pub circles: Vec<CircleSpec>,
    pub snapshot_days: Vec<f64>,
}

/// Fully resolved experiment, echoed as `config.json` into its output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum Experiment {
    VerifyConvergence(ConvergencePlan),
    VerifyEta(EtaPlan),
    Gyre(GyreRun),
    Tracer(TracerPlan),
}

/// Default refinement levels of `verify convergence`.
pub const DEFAULT_LEVELS: [usize; 4] = [10, 20, 40, 80];
pub const DEFAULT_ETAS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
/// Tracer step ("12 minutes").
pub const TRACER_DT: f64 = 720.0;
pub const TRACER_SNAPSHOT_DAYS: [f64; 6] = [0.0, 50.0, 100.0, 150.0, 240.0, 360.0];

fn reject_for(kind: ExperimentKind, keys: &[(&str, bool)]) -> Result<()> {
    for (key, set) in keys {
        if *set {
            return Err(SolverError::config(
                *key,
                format!("not used by the {} experiment", kind.name()),
            ));
        }
    }
    Ok(())
}

fn plain(cfg_value: &Option<Quantity>, key: &str) -> Result<Option<f64>> {
    cfg_value.as_ref().map(|q| q.resolve(key, Dimension::None)).transpose()
}

fn length(cfg_value: &Option<Quantity>, key: &str) -> Result<Option<f64>> {
    cfg_value.as_ref().map(|q| q.resolve(key, Dimension::Length)).transpose()
}

fn duration(cfg_value: &Option<Quantity>, key: &str) -> Result<Option<f64>> {
    cfg_value.as_ref().map(|q| q.resolve(key, Dimension::Time)).transpose()
}

fn setup_from(cfg: &ConfigFile) -> Result<GyreSetup> {
    let mut s = GyreSetup::default();
    if let Some(g) = &cfg.gyre {
        s.f0 = g.f0.unwrap_or(s.f0);
        s.beta = g.beta.unwrap_or(s.beta);
        s.tau0 = g.tau0.unwrap_or(s.tau0);
        s.rho = g.rho.unwrap_or(s.rho);
        s.g_r = g.g_r.unwrap_or(s.g_r);
        s.h0 = g.h0.unwrap_or(s.h0);
        s.width = length(&g.width, "gyre.width")?.unwrap_or(s.width);
        s.length = length(&g.length, "gyre.length")?.unwrap_or(s.length);
        s.beta_origin = length(&g.beta_origin, "gyre.beta_origin")?.unwrap_or(s.beta_origin);
    }
    if let Some(nu) = cfg.nu {
        s.nu = nu;
    }
    s.validate()?;
    Ok(s)
}

fn gyre_run_from(cfg: &ConfigFile, default_dt: f64, default_t_end: f64) -> Result<GyreRun> {
    let dx = length(&cfg.dx, "dx")?.unwrap_or(40e3);
    let mut run = GyreRun::new(dx, default_dt, default_t_end);
    run.setup = setup_from(cfg)?;
    if let Some(dt) = duration(&cfg.dt, "dt")? {
        run.dt = dt;
    }
    run.cfl = cfg.cfl;
    if let Some(t) = duration(&cfg.t_end, "t_end")? {
        run.t_end = t;
    }
    if let Some(l) = cfg.limiter {
        run.limiter = l;
    }
    if let Some(s) = cfg.splitting {
        run.splitting = s;
    }
    if let Some(s) = duration(&cfg.snapshot_every, "snapshot_every")? {
        run.snapshot_every = s;
    }
    if let Some(k) = cfg.stream {
        run.stream = k;
    }
    run.out_dir = cfg.out.clone();
    if !(run.dt > 0.0) {
        return Err(SolverError::config("dt", "time step must be positive"));
    }
    run.run_config()?;
    Ok(run)
}

/// Default gyre step for a grid spacing: 24 minutes at 40 km, scaled with `dx`.
pub fn default_gyre_dt(dx: f64) -> f64 {
    1440.0 * dx / 40e3
}

/// Validate `cfg` and resolve it into an experiment of the given kind.
pub fn resolve(cfg: &ConfigFile, kind: ExperimentKind) -> Result<Experiment> {
    if let Some(k) = cfg.experiment {
        if k != kind {
            return Err(SolverError::config(
                "experiment",
                format!("config selects `{}` but `{}` was requested", k.name(), kind.name()),
            ));
        }
    }
    if cfg.dt.is_some() && cfg.cfl.is_some() {
        return Err(SolverError::config("cfl", "conflicts with `dt`: set exactly one of dt and cfl"));
    }
    if let Some(c) = cfg.cfl {
        if !(c > 0.0 && c <= 1.0) {
            return Err(SolverError::config("cfl", "CFL target must lie in (0, 1]"));
        }
    }
    if cfg.workers == Some(0) {
        return Err(SolverError::config("workers", "must be at least 1"));
    }
    let gyre_keys = |cfg: &ConfigFile| {
        [
            ("dx", cfg.dx.is_some()),
            ("gyre", cfg.gyre.is_some()),
            ("snapshot_every", cfg.snapshot_every.is_some()),
            ("stream", cfg.stream.is_some()),
            ("state", cfg.state.is_some()),
            ("spinup", cfg.spinup.is_some()),
            ("snapshot_days", cfg.snapshot_days.is_some()),
            ("distribution", cfg.distribution.is_some()),
            ("circles", cfg.circles.is_some()),
            ("cfl", cfg.cfl.is_some()),
        ]
    };
    let verify_keys = |cfg: &ConfigFile| {
        [
            ("levels", cfg.levels.is_some()),
            ("base_dt", cfg.base_dt.is_some()),
            ("sampling", cfg.sampling.is_some()),
            ("etas", cfg.etas.is_some()),
            ("n", cfg.n.is_some()),
            ("repeats", cfg.repeats.is_some()),
            ("ansatz", cfg.ansatz.is_some()),
        ]
    };
    match kind {
        ExperimentKind::VerifyConvergence | ExperimentKind::VerifyEta => {
            reject_for(kind, &gyre_keys(cfg))?;
            let mut options = StudyOptions::default();
            if let Some(l) = cfg.limiter {
                options.limiter = l;
            }
            if let Some(s) = cfg.splitting {
                options.splitting = s;
            }
            if let Some(s) = cfg.sampling {
                options.sampling = s;
            }
            let patch = cfg.ansatz.clone().unwrap_or_default();
            let re_from_nu = match cfg.nu {
                Some(nu) if nu > 0.0 => Some(1.0 / nu),
                Some(_) => return Err(SolverError::config("nu", "must be positive (it sets Re = 1/nu)")),
                None => None,
            };
            if kind == ExperimentKind::VerifyConvergence {
                reject_for(
                    kind,
                    &[
                        ("etas", cfg.etas.is_some()),
                        ("n", cfg.n.is_some()),
                        ("repeats", cfg.repeats.is_some()),
                        ("t_end", cfg.t_end.is_some()),
                        ("dt", cfg.dt.is_some()),
                    ],
                )?;
                let base = AnsatzParams::convergence_defaults();
                let ansatz = AnsatzParams {
                    eta: patch.eta.unwrap_or(base.eta),
                    epsilon: patch.epsilon.unwrap_or(base.epsilon),
                    omega: patch.omega.unwrap_or(base.omega),
                    fr: patch.fr.unwrap_or(base.fr),
                    re: re_from_nu.or(patch.re).unwrap_or(base.re),
                    r0: patch.r0.unwrap_or(base.r0),
                };
                ansatz.validate()?;
                let levels = cfg.levels.clone().unwrap_or_else(|| DEFAULT_LEVELS.to_vec());
                if levels.is_empty() || levels.windows(2).any(|w| w[1] <= w[0]) || levels[0] == 0 {
                    return Err(SolverError::config("levels", "must be positive and strictly increasing"));
                }
                let base_dt = cfg.base_dt.unwrap_or(BASE_DT);
                if !(base_dt > 0.0 && base_dt.is_finite()) {
                    return Err(SolverError::config("base_dt", "must be positive"));
                }
                Ok(Experiment::VerifyConvergence(ConvergencePlan {
                    levels,
                    base_dt,
                    ansatz,
                    options,
                }))
            } else {
                reject_for(
                    kind,
                    &[
                        ("levels", cfg.levels.is_some()),
                        ("base_dt", cfg.base_dt.is_some()),
                        ("ansatz.eta", patch.eta.is_some()),
                        ("ansatz.epsilon", patch.epsilon.is_some()),
                        ("ansatz.omega", patch.omega.is_some()),
                    ],
                )?;
                let mut study = EtaStudy::default();
                if let Some(n) = cfg.n {
                    study.n = n;
                }
                if let Some(dt) = plain(&cfg.dt, "dt")? {
                    study.dt = dt;
                }
                if let Some(t) = plain(&cfg.t_end, "t_end")? {
                    study.t_end = t;
                }
                if let Some(r) = cfg.repeats {
                    study.repeats = r;
                }
                if study.n == 0 || !(study.dt > 0.0) || !(study.t_end > 0.0) || study.repeats == 0 {
                    return Err(SolverError::config("n", "n, dt, t_end and repeats must be positive"));
                }
                let base = AnsatzParams::eta_study(0.1);
                let plan = EtaPlan {
                    etas: cfg.etas.clone().unwrap_or_else(|| DEFAULT_ETAS.to_vec()),
                    study,
                    options,
                    fr: patch.fr.unwrap_or(base.fr),
                    re: re_from_nu.or(patch.re).unwrap_or(base.re),
                    r0: patch.r0.unwrap_or(base.r0),
                };
                if plan.etas.is_empty() {
                    return Err(SolverError::config("etas", "must not be empty"));
                }
                for &eta in &plan.etas {
                    plan.params(eta).validate().map_err(|_| SolverError::config("etas", "invalid eta"))?;
                }
                Ok(Experiment::VerifyEta(plan))
            }
        }
        ExperimentKind::Gyre => {
            reject_for(kind, &verify_keys(cfg))?;
            reject_for(
                kind,
                &[
                    ("state", cfg.state.is_some()),
                    ("spinup", cfg.spinup.is_some()),
                    ("snapshot_days", cfg.snapshot_days.is_some()),
                    ("distribution", cfg.distribution.is_some()),
                    ("circles", cfg.circles.is_some()),
                    ("seed", cfg.seed.is_some()),
                        ],
            )?;
            let dx = length(&cfg.dx, "dx")?.unwrap_or(40e3);
            Ok(Experiment::Gyre(gyre_run_from(cfg, default_gyre_dt(dx), YEAR)?))
        }
        ExperimentKind::Tracer => {
            reject_for(kind, &verify_keys(cfg))?;
            reject_for(
                kind,
                &[
                    ("cfl", cfg.cfl.is_some()),
                    ("snapshot_every", cfg.snapshot_every.is_some()),
                        ],
            )?;
            if cfg.state.is_some() && cfg.spinup.is_some() {
                return Err(SolverError::config("spinup", "conflicts with `state`: a stored state needs no spin-up"));
            }
            let run = gyre_run_from(cfg, TRACER_DT, 360.0 * DAY)?;
            let spinup = duration(&cfg.spinup, "spinup")?.unwrap_or(2.0 * YEAR);
            if !(spinup > 0.0) {
                return Err(SolverError::config("spinup", "must be positive"));
            }
            let snapshot_days = cfg.snapshot_days.clone().unwrap_or_else(|| TRACER_SNAPSHOT_DAYS.to_vec());
            if snapshot_days.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
                return Err(SolverError::config("snapshot_days", "days must be non-negative"));
            }
            let circles = cfg.circles.clone().unwrap_or_else(|| default_circles().to_vec());
            if circles.iter().any(|c| !(c.r > 0.0)) {
                return Err(SolverError::config("circles", "radii must be positive"));
            }
            Ok(Experiment::Tracer(TracerPlan {
                run,
                state: cfg.state.clone(),
                spinup,
                seed: cfg.seed.unwrap_or(0),
                distribution: cfg.distribution.unwrap_or_default(),
                circles,
                snapshot_days,
            }))
        }
    }
}

impl EtaPlan {
    pub fn params(&self, eta: f64) -> AnsatzParams {
        AnsatzParams {
            fr: self.fr,
            re: self.re,
            r0: self.r0,
            ..AnsatzParams::eta_study(eta)
        }
    }
}

/// Write the resolved experiment as pretty JSON to `dir/config.json`.
pub fn write_provenance(dir: &Path, experiment: &Experiment) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| SolverError::io(dir, e))?;
    let path = dir.join("config.json");
    let text = serde_json::to_string_pretty(experiment).map_err(|e| SolverError::config("config", e.to_string()))?;
    fs::write(&path, text + "\n").map_err(|e| SolverError::io(&path, e))?;
    Ok(path)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| SolverError::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| SolverError::io(path, e))
}

/// Observed-order window checked on pairs with both levels at least [`ORDER_MIN_N`].
pub const ORDER_WINDOW: (f64, f64) = (1.7, 2.2);
pub const ORDER_MIN_N: usize = 20;

/// Whether every order between levels `>= ORDER_MIN_N` lies in [`ORDER_WINDOW`].
pub fn orders_in_window(rows: &[ConvergenceRow]) -> bool {
    rows.windows(2)
        .filter(|w| w[0].n >= ORDER_MIN_N)
        .filter_map(|w| w[1].order)
        .all(|o| (ORDER_WINDOW.0..=ORDER_WINDOW.1).contains(&o))
}

/// Refinement study. With `out` set, writes `convergence.csv` and the final
/// height field of the finest level next to the exact one (`height_t1.csv`).
pub fn run_convergence(
    plan: &ConvergencePlan,
    out: Option<&Path>,
    mut on_row: impl FnMut(&ConvergenceRow),
) -> Result<Vec<ConvergenceRow>> {
    let mut finest = None;
    let rows = convergence_study_with(&plan.levels, plan.base_dt, &plan.ansatz, plan.options, |row, q| {
        on_row(row);
        finest = Some(q.clone());
    })?;
    if let (Some(dir), Some(q)) = (out, finest) {
        write_text(&dir.join("convergence.csv"), &convergence_csv(&rows))?;
        let exact = exact_field(*q.grid(), 1.0, &plan.ansatz, plan.options.sampling);
        FieldDump::new(*q.grid(), 1.0)
            .with("h", height_values(&q))?
            .with("h_exact", height_values(&exact))?
            .write_csv(&dir.join("height_t1.csv"))?;
    }
    Ok(rows)
}

pub fn run_eta(plan: &EtaPlan, out: Option<&Path>) -> Result<Vec<EtaRow>> {
    let rows = eta_sensitivity_study_with(&plan.etas, plan.study, plan.options, |eta| plan.params(eta))?;
    if let Some(dir) = out {
        write_text(&dir.join("eta.csv"), &eta_csv(&rows))?;
    }
    Ok(rows)
}

/// Spin up a basin; writes snapshots, `records.csv` and the final state
/// `state_final.csv` (h, hu, hv) when `out_dir` is set.
pub fn run_gyre_experiment(run: &GyreRun, on_record: impl FnMut(&crate::splitting::StepRecord)) -> Result<GyreOutput> {
    let out = run_gyre(run, None, on_record)?;
    if let Some(dir) = &run.out_dir {
        write_records_csv(&dir.join("records.csv"), &out.run.records)?;
        FieldDump::conserved(&out.run.state, out.run.t).write_csv(&dir.join("state_final.csv"))?;
    }
    Ok(out)
}

/// Result of a tracer experiment.
#[derive(Clone, Debug)]
pub struct TracerOutcome {
    pub initial: TracerField,
    pub final_tracer: TracerField,
    pub records: Vec<TracerRecord>,
    pub c_max0: f64,
    pub centroid0: (f64, f64),
    pub centroid: (f64, f64),
    pub snapshots: Vec<PathBuf>,
}

impl TracerOutcome {
    /// Worst violation of `0 <= C <= max C0` over all steps.
    pub fn max_principle_violation(&self) -> f64 {
        self.records
            .iter()
            .map(|r| (-r.c_min).max(r.c_max - self.c_max0).max(0.0))
            .fold(0.0, f64::max)
    }
}

fn tracer_dump(c: &TracerField, t: f64) -> Result<FieldDump> {
    let mut d = FieldDump::new(*c.grid(), t);
    d.push_scalar("C", c)?;
    Ok(d)
}

/// Coupled run: load (or spin up) the basin state, seed the circles and
/// advect for `plan.run.t_end` seconds, dumping `tracer_dayNNNNN` snapshots.
pub fn run_tracer_experiment(plan: &TracerPlan, mut log: impl FnMut(&str)) -> Result<TracerOutcome> {
    let config = plan.run.run_config()?;
    let grid = config.grid;
    let q0 = match &plan.state {
        Some(path) => {
            let dump = FieldDump::read_csv(path)?;
            if dump.grid != grid {
                return Err(SolverError::InvalidGrid(format!(
                    "state {} is on a {}x{} grid, the run expects {}x{}",
                    path.display(),
                    dump.grid.nx,
                    dump.grid.ny,
                    grid.nx,
                    grid.ny
                )));
            }
            let mut q = dump.to_conserved()?;
            q.check_positive()?;
            fill_ghosts(&mut q, BoundaryKind::SolidWall);
            q
        }
        None => {
            log(&format!("spinning up for {:.0} days", plan.spinup / DAY));
            let spin = GyreRun {
                t_end: plan.spinup,
                snapshot_every: plan.spinup,
                out_dir: None,
                ..plan.run.clone()
            };
            let out = run_gyre(&spin, None, |_| {})?;
            if let Some(dir) = &plan.run.out_dir {
                FieldDump::conserved(&out.run.state, out.run.t).write_csv(&dir.join("state_spunup.csv"))?;
            }
            out.run.state
        }
    };

    let c0 = init_concentration(grid, &plan.circles, plan.seed, plan.distribution);
    let (_, c_max0) = interior_range(&c0);
    let centroid0 = centroid(&c0).ok_or_else(|| SolverError::config("circles", "no cell center lies inside the circles"))?;
    let dt = plan.run.dt;
    let steps = step_count(plan.run.t_end, dt);
    let out_dir = plan.run.out_dir.clone();
    let mut snapshots = Vec::new();
    let mut pending: Vec<f64> = plan.snapshot_days.iter().map(|d| d * DAY).collect();
    pending.sort_by(f64::total_cmp);
    let mut take = |t: f64, c: &TracerField, pending: &mut Vec<f64>| -> Result<()> {
        while pending.first().is_some_and(|&s| s <= t + 0.5 * dt) {
            pending.remove(0);
            if let Some(dir) = &out_dir {
                let stem = format!("tracer_{}", day_label(t));
                let d = tracer_dump(c, t)?;
                let csv = dir.join(format!("{stem}.csv"));
                d.write_csv(&csv)?;
                d.write_vtk(&dir.join(format!("{stem}.vtk")), &format!("tracer t = {:.3} days", t / DAY))?;
                snapshots.push(csv);
            }
        }
        Ok(())
    };
    take(0.0, &c0, &mut pending)?;

    let mut sim = Simulation::from_config(&config)?;
    let limiter = plan.run.limiter;
    let out = run_coupled(&mut sim, q0, c0.clone(), dt, steps, limiter, |rec, _, c| take(rec.t, c, &mut pending))?;
    let centroid1 = centroid(&out.tracer).unwrap_or((f64::NAN, f64::NAN));
    Ok(TracerOutcome {
        initial: c0,
        final_tracer: out.tracer,
        records: out.records,
        c_max0,
        centroid0,
        centroid: centroid1,
        snapshots,
    })
}

/// Largest difference between a dam break swept along x and the transposed
/// problem swept along y after `steps` steps on an `n x 4` wall-bounded grid.
/// The wave-propagation step is built to make this exactly zero.
pub fn dam_break_transpose_difference(n: usize, steps: usize) -> Result<f64> {
    let grid = crate::grid::Grid::over_domain(n, 4, 0.0, 0.0, 1.0, 4.0 / n as f64)?;
    let mut qx = crate::grid::Field::from_fn(grid, crate::grid::Conserved::ZERO, |x, y| {
        let h = if x < 0.5 { 2.0 } else { 1.0 };
        crate::grid::Conserved::new(h, 0.1 * h, 0.05 * h * y)
    });
    fill_ghosts(&mut qx, BoundaryKind::SolidWall);
    let mut qy = qx.transpose_swap();
    let g_r = 1.0;
    let dt = 0.4 * crate::wave_propagation::stable_dt(&qx, g_r, 1.0)?;
    let mut sx = crate::wave_propagation::HyperbolicSolver::new(grid, g_r, Limiter::Mc, false, BoundaryKind::SolidWall);
    let mut sy =
        crate::wave_propagation::HyperbolicSolver::new(grid.transposed(), g_r, Limiter::Mc, false, BoundaryKind::SolidWall);
    for _ in 0..steps {
        sx.step_in_place(&mut qx, dt)?;
        sy.step_in_place(&mut qy, dt)?;
        fill_ghosts(&mut qx, BoundaryKind::SolidWall);
        fill_ghosts(&mut qy, BoundaryKind::SolidWall);
    }
    let back = qy.transpose_swap();
    let mut diff: f64 = 0.0;
    for (i, j) in grid.interior() {
        diff = diff.max((qx.get(i, j) - back.get(i, j)).max_abs());
        if qx.get(i, j).to_array().map(f64::to_bits) != back.get(i, j).to_array().map(f64::to_bits) {
            diff = diff.max(f64::MIN_POSITIVE);
        }
    }
    Ok(diff)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dam_break_is_transpose_symmetric() {
        assert_eq!(dam_break_transpose_difference(40, 20).unwrap(), 0.0);
    }

    #[test]
    fn quantities() {
        let q = |s: &str, d| Quantity::from(s).resolve("k", d);
        assert_eq!(q("40km", Dimension::Length).unwrap(), 40e3);
        assert_eq!(q("250 m", Dimension::Length).unwrap(), 250.0);
        assert_eq!(q("6min", Dimension::Time).unwrap(), 360.0);
        assert_eq!(q("2y", Dimension::Time).unwrap(), 2.0 * 365.0 * 86400.0);
        assert_eq!(q("1.5d", Dimension::Time).unwrap(), 129600.0);
        assert_eq!(q("1e3", Dimension::Length).unwrap(), 1000.0);
        assert_eq!(q("2.5e1km", Dimension::Length).unwrap(), 25e3);
        assert_eq!(Quantity::Number(7.0).resolve("k", Dimension::Time).unwrap(), 7.0);
        let err = q("40min", Dimension::Length).unwrap_err();
        assert!(err.to_string().contains("`k`"), "{err}");
        assert!(q("5km", Dimension::None).is_err());
        assert!(q("km", Dimension::Length).is_err());
    }

    #[test]
    fn gyre_defaults_are_table_values() {
        let Experiment::Gyre(run) = resolve(&ConfigFile::default(), ExperimentKind::Gyre).unwrap() else {
            panic!()
        };
        assert_eq!(run.setup, GyreSetup::default());
        assert_eq!(run.setup.nu, 300.0);
        assert_eq!(run.setup.g_r, 0.03);
        assert_eq!(run.dx, 40e3);
        assert_eq!(run.limiter, Limiter::Mc);
    }

    #[test]
    fn convergence_defaults() {
        let Experiment::VerifyConvergence(p) = resolve(&ConfigFile::default(), ExperimentKind::VerifyConvergence).unwrap()
        else {
            panic!()
        };
        assert_eq!(p.ansatz, AnsatzParams::convergence_defaults());
        assert_eq!(p.ansatz.omega, std::f64::consts::PI / 20.0);
        assert_eq!(p.options.limiter, Limiter::None);
        assert_eq!(p.options.splitting, Splitting::Strang);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ConfigFile::parse(r#"{"dx": "40km", "viscosity": 3}"#).unwrap_err();
        assert!(err.to_string().contains("viscosity"), "{err}");
        let err = ConfigFile::parse(r#"{"gyre": {"tau": 1}}"#).unwrap_err();
        assert!(err.to_string().contains("tau"), "{err}");
    }

    #[test]
    fn dt_and_cfl_conflict() {
        let cfg = ConfigFile::parse(r#"{"dt": "24min", "cfl": 0.5}"#).unwrap();
        let err = resolve(&cfg, ExperimentKind::Gyre).unwrap_err();
        assert!(err.to_string().contains("`cfl`"), "{err}");
    }

    #[test]
    fn unit_violation_names_key() {
        let cfg = ConfigFile::parse(r#"{"dx": "40min"}"#).unwrap();
        let err = resolve(&cfg, ExperimentKind::Gyre).unwrap_err();
        assert!(err.to_string().contains("`dx`"), "{err}");
        let cfg = ConfigFile::parse(r#"{"dt": "1min"}"#).unwrap();
        assert!(resolve(&cfg, ExperimentKind::VerifyEta).is_err());
    }

    #[test]
    fn overlay_prefers_top() {
        let base = ConfigFile::parse(r#"{"dx": "20km", "nu": 100, "gyre": {"tau0": 0.2, "h0": 400}}"#).unwrap();
        let top = ConfigFile::parse(r#"{"nu": 1000, "gyre": {"h0": 600}}"#).unwrap();
        let m = base.overlay(&top);
        assert_eq!(m.nu, Some(1000.0));
        assert_eq!(m.dx, Some(Quantity::from("20km")));
        let g = m.gyre.unwrap();
        assert_eq!((g.tau0, g.h0), (Some(0.2), Some(600.0)));
    }

    #[test]
    fn experiment_mismatch_and_foreign_keys() {
        let cfg = ConfigFile::parse(r#"{"experiment": "tracer"}"#).unwrap();
        assert!(resolve(&cfg, ExperimentKind::Gyre).is_err());
        let cfg = ConfigFile::parse(r#"{"levels": [10, 20]}"#).unwrap();
        let err = resolve(&cfg, ExperimentKind::Gyre).unwrap_err();
        assert!(err.to_string().contains("`levels`"), "{err}");
        let cfg = ConfigFile::parse(r#"{"levels": [20, 10]}"#).unwrap();
        assert!(resolve(&cfg, ExperimentKind::VerifyConvergence).is_err());
    }

    #[test]
    fn nu_sets_reynolds_number() {
        let cfg = ConfigFile::parse(r#"{"nu": 0.02}"#).unwrap();
        let Experiment::VerifyConvergence(p) = resolve(&cfg, ExperimentKind::VerifyConvergence).unwrap() else {
            panic!()
        };
        assert_eq!(p.ansatz.re, 50.0);
    }

    #[test]
    fn provenance_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ConfigFile::parse(r#"{"dx": "100km", "t_end": "10d"}"#).unwrap();
        let e = resolve(&cfg, ExperimentKind::Tracer).unwrap();
        let path = write_provenance(dir.path(), &e).unwrap();
        let back: Experiment = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(back, e);
    }
}
