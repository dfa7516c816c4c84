//! Run orchestration and artifact files for the command-line front end.

use crate::analysis::{
    cluster_profile, fit_pulse, stability_condition, translating_fraction, wave_solution, AnalysisError, PulseFit,
};
use crate::config::{ConfigError, Mode, RunConfig};
use crate::kinetic::{coupled_kinetic_run, tumbling_rates, CoupledState, KineticError};
use crate::macro_solver::{MacroSolver, SolverError, Trajectory};
use crate::model::{initial_condition_centered, Grid1D, MacroState, ResponseFunction};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Numerical(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    /// Process exit status: 1 configuration, 2 numerical failure, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Numerical(_) => 2,
            RunError::Io { .. } => 3,
        }
    }
}

impl From<SolverError> for RunError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Config(p) => RunError::Config(ConfigError::Invalid(p.violations)),
            other => RunError::Numerical(other.to_string()),
        }
    }
}

impl From<KineticError> for RunError {
    fn from(e: KineticError) -> Self {
        match e {
            KineticError::Config(p) => RunError::Config(ConfigError::Invalid(p.violations)),
            other => RunError::Numerical(other.to_string()),
        }
    }
}

impl From<AnalysisError> for RunError {
    fn from(e: AnalysisError) -> Self {
        RunError::Numerical(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), RunError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunInfo {
    pub mode: String,
    pub wall_clock_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_time: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MassHistory {
    pub initial: f64,
    pub min: f64,
    pub max: f64,
    pub max_relative_drift: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AnalyticSummary {
    pub sigma: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub rho0: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MeasuredSummary {
    pub speed: f64,
    pub speed_r2: f64,
    pub lambda_minus: f64,
    pub lambda_minus_r2: f64,
    pub lambda_plus: f64,
    pub lambda_plus_r2: f64,
    pub peak_mass_fraction: f64,
    pub pulse: bool,
    pub amplitude_nonincreasing: bool,
    pub monotone_translation: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub translating_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Agreement {
    pub speed_ratio: f64,
    pub lambda_minus_ratio: f64,
    pub lambda_plus_ratio: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub run: RunInfo,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass: Option<MassHistory>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic: Option<AnalyticSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measured: Option<MeasuredSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agreement: Option<Agreement>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_distribution: Option<f64>,
}

impl RunSummary {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("summary is always representable in TOML")
    }
}

/// Options that do not belong to the configuration file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ExecOptions {
    pub workers: Option<usize>,
    pub seed: Option<u64>,
}

pub fn initial_state(cfg: &RunConfig) -> Result<MacroState, RunError> {
    initial_condition_centered(
        &cfg.grid,
        &cfg.params,
        cfg.initial.decay_rate,
        cfg.initial.center.unwrap_or(0.0),
    )
    .map_err(|e| RunError::Config(ConfigError::Invalid(e.violations)))
}

pub fn snapshot_csv(state: &MacroState, grid: &Grid1D) -> String {
    let mut out = String::with_capacity(80 * state.len() + 16);
    out.push_str("x,rho,S,N\n");
    for i in 0..state.len() {
        let _ = writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            grid.center(i),
            state.rho[i],
            state.s[i],
            state.n[i]
        );
    }
    out
}

/// Parses a snapshot written by [`snapshot_csv`].
pub fn parse_snapshot_csv(text: &str, t: f64) -> Result<MacroState, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("x,rho,S,N") {
        return Err("missing header x,rho,S,N".into());
    }
    let mut state = MacroState {
        t,
        rho: Vec::new(),
        s: Vec::new(),
        n: Vec::new(),
    };
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("line {}: {e}", k + 2))?;
        if cols.len() != 4 {
            return Err(format!("line {}: expected 4 columns", k + 2));
        }
        state.rho.push(cols[1]);
        state.s.push(cols[2]);
        state.n.push(cols[3]);
    }
    Ok(state)
}

fn snapshot_name(step: usize) -> String {
    format!("snapshot_{step:08}.csv")
}

/// Writes every snapshot plus an index `trajectory.csv` of `step,t,file`.
pub fn write_trajectory(dir: &Path, traj: &Trajectory, grid: &Grid1D, gnuplot: bool) -> Result<(), RunError> {
    let mut index = String::from("step,t,file\n");
    for (step, state) in traj.steps.iter().zip(&traj.snapshots) {
        let name = snapshot_name(*step);
        write_file(&dir.join(&name), &snapshot_csv(state, grid))?;
        let _ = writeln!(index, "{step},{:.16e},{name}", state.t);
        if gnuplot {
            let mut dat = format!("# t = {}\n# x rho S N\n", state.t);
            for i in 0..state.len() {
                let _ = writeln!(dat, "{} {} {} {}", grid.center(i), state.rho[i], state.s[i], state.n[i]);
            }
            write_file(&dir.join(format!("profile_{step:08}.dat")), &dat)?;
        }
    }
    write_file(&dir.join("trajectory.csv"), &index)
}

pub fn read_trajectory(dir: &Path) -> Result<Trajectory, RunError> {
    let index_path = dir.join("trajectory.csv");
    let index = fs::read_to_string(&index_path).map_err(io_err(&index_path))?;
    let mut traj = Trajectory::default();
    for line in index.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        let bad = || RunError::Numerical(format!("malformed index line {line:?}"));
        if cols.len() != 3 {
            return Err(bad());
        }
        let step: usize = cols[0].parse().map_err(|_| bad())?;
        let t: f64 = cols[1].parse().map_err(|_| bad())?;
        let path = dir.join(cols[2]);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let state = parse_snapshot_csv(&text, t).map_err(|e| RunError::Numerical(format!("{}: {e}", path.display())))?;
        traj.steps.push(step);
        traj.snapshots.push(state);
    }
    Ok(traj)
}

fn mass_history(traj: &Trajectory, dx: f64) -> MassHistory {
    let masses: Vec<f64> = traj.snapshots.iter().map(|s| s.mass(dx)).collect();
    let initial = masses.first().copied().unwrap_or(0.0);
    let min = masses.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = masses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let drift = masses.iter().map(|m| (m - initial).abs()).fold(0.0, f64::max);
    MassHistory {
        initial,
        min,
        max,
        max_relative_drift: if initial != 0.0 { drift / initial } else { drift },
    }
}

fn analytic(cfg: &RunConfig) -> Option<AnalyticSummary> {
    wave_solution(&cfg.params).ok().map(|w| AnalyticSummary {
        sigma: w.sigma,
        lambda_minus: w.lambda_minus,
        lambda_plus: w.lambda_plus,
        rho0: w.rho0,
    })
}

fn measured(fit: &PulseFit, translating: Option<f64>) -> MeasuredSummary {
    MeasuredSummary {
        speed: fit.speed,
        speed_r2: fit.speed_r2,
        lambda_minus: fit.lambda_minus,
        lambda_minus_r2: fit.lambda_minus_r2,
        lambda_plus: fit.lambda_plus,
        lambda_plus_r2: fit.lambda_plus_r2,
        peak_mass_fraction: fit.peak_mass_fraction,
        pulse: fit.is_pulse(),
        amplitude_nonincreasing: fit.amplitude_nonincreasing,
        monotone_translation: fit.monotone_translation,
        translating_fraction: translating,
    }
}

/// Fit and analytic comparison of a macroscopic trajectory.
pub fn summarize(cfg: &RunConfig, traj: &Trajectory, summary: &mut RunSummary) {
    summary.mass = Some(mass_history(traj, cfg.grid.dx()));
    summary.analytic = analytic(cfg);
    let predicted = summary.analytic.as_ref().map(|a| (a.lambda_minus, a.lambda_plus));
    match fit_pulse(traj, &cfg.grid, &cfg.fit.options(predicted)) {
        Ok(fit) => {
            let translating = traj
                .last()
                .and_then(|s| translating_fraction(&s.rho, &cfg.grid, 0.01));
            if let Some(a) = &summary.analytic {
                summary.agreement = Some(Agreement {
                    speed_ratio: fit.speed / a.sigma,
                    lambda_minus_ratio: fit.lambda_minus / a.lambda_minus,
                    lambda_plus_ratio: fit.lambda_plus / a.lambda_plus,
                });
            }
            summary.measured = Some(measured(&fit, translating));
        }
        Err(e) => summary.fit_error = Some(e.to_string()),
    }
}

fn run_macro(cfg: &RunConfig, summary: &mut RunSummary) -> Result<(), RunError> {
    let init = initial_state(cfg)?;
    let traj = MacroSolver::new(cfg.grid, cfg.params, cfg.response, cfg.solver)?.run(&init)?;
    summary.run.steps = traj.steps.last().copied();
    summary.run.final_time = traj.last().map(|s| s.t);
    if cfg.out.csv {
        write_trajectory(&cfg.output, &traj, &cfg.grid, cfg.out.gnuplot)?;
    }
    summarize(cfg, &traj, summary);
    Ok(())
}

fn run_kinetic(cfg: &RunConfig, summary: &mut RunSummary) -> Result<(), RunError> {
    let init = initial_state(cfg)?;
    let kp = cfg.kinetic.params(cfg.params.epsilon);
    let kc = cfg.kinetic.config();
    let start = CoupledState::from_macro(&init, kc.velocity_nodes);
    let traj = coupled_kinetic_run(&start, &cfg.grid, &cfg.params, &kp, &cfg.response, &kc)?;
    let macro_traj = traj.to_macro();
    summary.run.steps = traj.steps.last().copied();
    summary.run.final_time = traj.last().map(|s| s.kinetic.t);
    summary.mass = Some(mass_history(&macro_traj, cfg.grid.dx()));
    summary.min_distribution = traj
        .snapshots
        .iter()
        .map(|s| s.kinetic.min_f().0)
        .reduce(f64::min);
    if cfg.out.csv {
        write_trajectory(&cfg.output, &macro_traj, &cfg.grid, cfg.out.gnuplot)?;
        if let Some(last) = traj.last() {
            let mut text = String::from("x,left,right\n");
            for face in 1..cfg.grid.n_cells {
                let (l, r) = tumbling_rates(last, &cfg.params, &cfg.response, &kp, cfg.grid.dx(), face);
                let _ = writeln!(text, "{:.16e},{:.16e},{:.16e}", cfg.grid.face(face), l, r);
            }
            write_file(&cfg.output.join("tumbling.csv"), &text)?;
        }
    }
    Ok(())
}

fn run_speed(cfg: &RunConfig) -> Result<String, RunError> {
    let w = wave_solution(&cfg.params)?;
    #[derive(Serialize)]
    struct Out {
        sigma: f64,
        lambda_minus: f64,
        lambda_plus: f64,
        rho0: f64,
        a1: f64,
        a2: f64,
        a3: f64,
        asymmetry: f64,
    }
    let out = Out {
        sigma: w.sigma,
        lambda_minus: w.lambda_minus,
        lambda_plus: w.lambda_plus,
        rho0: w.rho0,
        a1: w.a1,
        a2: w.a2,
        a3: w.a3,
        asymmetry: w.rates().asymmetry(),
    };
    Ok(toml::to_string(&out).expect("plain table"))
}

fn run_stability(cfg: &RunConfig) -> Result<String, RunError> {
    let delta = match cfg.response {
        ResponseFunction::Arctan { delta } => delta,
        ResponseFunction::Bivaluated { .. } => {
            return Err(RunError::Config(ConfigError::Invalid(vec![
                "stability: needs a response with a stiffness delta".into(),
            ])))
        }
    };
    if !(cfg.params.alpha > 0.0) {
        return Err(RunError::Config(ConfigError::Invalid(vec![
            "stability: alpha must be positive (signal range l = alpha^-1/2)".into(),
        ])));
    }
    let range = 1.0 / cfg.params.alpha.sqrt();
    let rep = stability_condition(cfg.grid.length, range, delta, cfg.params.mass, cfg.stability.k_max)?;
    let mut text = String::new();
    let _ = writeln!(text, "critical_mass = {:e}", rep.critical_mass);
    let _ = writeln!(text, "mass = {:e}", cfg.params.mass);
    let _ = writeln!(text, "stable = {}", rep.stable);
    let _ = writeln!(text, "\n[[eigenvalues]]");
    let rows: Vec<String> = rep
        .eigenvalues
        .iter()
        .map(|(k, l)| format!("k = {k}\nlambda = {l:e}"))
        .collect();
    text.push_str(&rows.join("\n\n[[eigenvalues]]\n"));
    text.push('\n');
    Ok(text)
}

fn run_cluster(cfg: &RunConfig) -> Result<String, RunError> {
    let c = cluster_profile(&cfg.params)?;
    let center = cfg.initial.center.unwrap_or(0.5 * cfg.grid.length);
    if cfg.out.csv {
        let mut csv = String::from("x,rho\n");
        for x in cfg.grid.centers() {
            let _ = writeln!(csv, "{:.16e},{:.16e}", x, c.density(x - center));
        }
        write_file(&cfg.output.join("cluster_profile.csv"), &csv)?;
    }
    Ok(format!("lambda = {:e}\nrho0 = {:e}\ncenter = {:e}\n", c.lambda, c.rho0, center))
}

fn run_fit(cfg: &RunConfig, summary: &mut RunSummary) -> Result<(), RunError> {
    let traj = read_trajectory(&cfg.output)?;
    if let Some(first) = traj.snapshots.first() {
        if first.len() != cfg.grid.n_cells {
            return Err(RunError::Config(ConfigError::Invalid(vec![format!(
                "grid: snapshots hold {} cells, configuration says {}",
                first.len(),
                cfg.grid.n_cells
            )])));
        }
    }
    summarize(cfg, &traj, summary);
    Ok(())
}

/// One sweep row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub index: usize,
    pub labels: Vec<(String, toml::Value)>,
    pub result: Result<RunSummary, String>,
}

fn run_sweep(cfg: &RunConfig, opts: &ExecOptions) -> Result<Vec<SweepRow>, RunError> {
    let points = cfg.sweep_points()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.unwrap_or(0))
        .build()
        .map_err(|e| RunError::Config(ConfigError::Invalid(vec![format!("workers: {e}")])))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        points
            .into_par_iter()
            .enumerate()
            .map(|(index, (labels, mut point))| {
                point.output = cfg.output.join(format!("point_{index:04}"));
                let result = execute(&point, &ExecOptions { workers: Some(1), ..*opts })
                    .map_err(|e| e.to_string());
                SweepRow { index, labels, result }
            })
            .collect()
    });
    let mut csv = String::new();
    let names: Vec<&str> = cfg.sweep.iter().map(|a| a.name.as_str()).collect();
    let _ = writeln!(
        csv,
        "index,{},sigma,speed,lambda_minus,lambda_plus,pulse,error",
        names.join(",")
    );
    for row in &rows {
        let values: Vec<String> = row.labels.iter().map(|(_, v)| v.to_string()).collect();
        let (sigma, speed, lm, lp, pulse, err) = match &row.result {
            Ok(s) => {
                let a = s.analytic.as_ref();
                let m = s.measured.as_ref();
                (
                    a.map_or(String::new(), |a| format!("{:e}", a.sigma)),
                    m.map_or(String::new(), |m| format!("{:e}", m.speed)),
                    m.map_or(String::new(), |m| format!("{:e}", m.lambda_minus)),
                    m.map_or(String::new(), |m| format!("{:e}", m.lambda_plus)),
                    m.map_or("false".into(), |m| m.pulse.to_string()),
                    s.fit_error.clone().unwrap_or_default(),
                )
            }
            Err(e) => (
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                "false".to_string(),
                e.clone(),
            ),
        };
        let _ = writeln!(
            csv,
            "{},{},{sigma},{speed},{lm},{lp},{pulse},{}",
            row.index,
            values.join(","),
            err.replace([',', '\n'], ";")
        );
    }
    write_file(&cfg.output.join("sweep.csv"), &csv)?;
    Ok(rows)
}

/// Runs `cfg` and writes its artifacts under `cfg.output`.
pub fn execute(cfg: &RunConfig, opts: &ExecOptions) -> Result<RunSummary, RunError> {
    let start = Instant::now();
    let mut summary = RunSummary {
        run: RunInfo {
            mode: toml::Value::try_from(cfg.mode)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
            seed: opts.seed,
            ..RunInfo::default()
        },
        ..RunSummary::default()
    };
    fs::create_dir_all(&cfg.output).map_err(io_err(&cfg.output))?;
    write_file(&cfg.output.join("config.toml"), &crate::config::to_toml(cfg))?;
    match cfg.mode {
        Mode::Macro => run_macro(cfg, &mut summary)?,
        Mode::Kinetic => run_kinetic(cfg, &mut summary)?,
        Mode::Fit => run_fit(cfg, &mut summary)?,
        Mode::Speed => write_file(&cfg.output.join("speed.toml"), &run_speed(cfg)?)?,
        Mode::Stability => write_file(&cfg.output.join("stability.toml"), &run_stability(cfg)?)?,
        Mode::Cluster => write_file(&cfg.output.join("cluster.toml"), &run_cluster(cfg)?)?,
        Mode::Sweep => {
            let rows = run_sweep(cfg, opts)?;
            let failed = rows.iter().filter(|r| r.result.is_err()).count();
            summary.fit_error = (failed > 0).then(|| format!("{failed} of {} sweep points failed", rows.len()));
        }
    }
    summary.run.wall_clock_seconds = start.elapsed().as_secs_f64();
    let name = if cfg.mode == Mode::Fit { "fit.toml" } else { "summary.toml" };
    write_file(&cfg.output.join(name), &summary.to_toml())?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip_is_lossless() {
        let grid = Grid1D::new(1.0, 4).unwrap();
        let state = MacroState {
            t: 0.5,
            rho: vec![0.1, 1.0 / 3.0, std::f64::consts::PI, 1e-300],
            s: vec![2.0 / 7.0; 4],
            n: vec![0.0, 1e-17, 5.5, 10.0],
        };
        let text = snapshot_csv(&state, &grid);
        assert!(text.starts_with("x,rho,S,N\n"));
        assert_eq!(parse_snapshot_csv(&text, 0.5).unwrap(), state);
        assert!(parse_snapshot_csv("a,b\n", 0.0).is_err());
    }

    #[test]
    fn exit_codes_by_category() {
        assert_eq!(RunError::Config(ConfigError::Invalid(vec![])).exit_code(), 1);
        assert_eq!(RunError::Numerical("x".into()).exit_code(), 2);
        let io = RunError::Io {
            path: "p".into(),
            source: std::io::Error::other("x"),
        };
        assert_eq!(io.exit_code(), 3);
    }

    #[test]
    fn snapshot_names_are_zero_padded() {
        assert_eq!(snapshot_name(42), "snapshot_00000042.csv");
    }
}
