//! Run configuration: TOML files, bundled presets and `key=value` overrides.

use crate::analysis::FitOptions;
use crate::kinetic::{KineticConfig, KineticParams};
use crate::macro_solver::SolverConfig;
use crate::model::{Grid1D, ModelParams, ResponseFunction};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Macro,
    Kinetic,
    Speed,
    Stability,
    Cluster,
    Fit,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub decay_rate: f64,
    /// Bump centre; the left wall when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            decay_rate: 0.1,
            center: None,
        }
    }
}

/// Kinetic settings; `ε` is shared with the model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KineticSection {
    pub mu: f64,
    pub dt: f64,
    pub t_end: f64,
    pub cfl_safety: f64,
    pub snapshot_every: usize,
    pub velocity_nodes: usize,
}

impl Default for KineticSection {
    fn default() -> Self {
        let c = KineticConfig::default();
        Self {
            mu: KineticParams::default().mu,
            dt: c.dt,
            t_end: c.t_end,
            cfl_safety: c.cfl_safety,
            snapshot_every: c.snapshot_every,
            velocity_nodes: c.velocity_nodes,
        }
    }
}

impl KineticSection {
    pub fn params(&self, epsilon: f64) -> KineticParams {
        KineticParams { epsilon, mu: self.mu }
    }

    pub fn config(&self) -> KineticConfig {
        KineticConfig {
            dt: self.dt,
            t_end: self.t_end,
            cfl_safety: self.cfl_safety,
            snapshot_every: self.snapshot_every,
            velocity_nodes: self.velocity_nodes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub window: f64,
    pub tail_efolds: [f64; 2],
    pub skip_wall_modes: bool,
}

impl Default for FitSection {
    fn default() -> Self {
        let f = FitOptions::default();
        Self {
            window: f.window,
            tail_efolds: [f.tail_efolds.0, f.tail_efolds.1],
            skip_wall_modes: true,
        }
    }
}

impl FitSection {
    pub fn options(&self, predicted: Option<(f64, f64)>) -> FitOptions {
        FitOptions {
            window: self.window,
            tail_efolds: (self.tail_efolds[0], self.tail_efolds[1]),
            predicted,
            skip_wall_modes: self.skip_wall_modes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilitySection {
    pub k_max: u32,
}

impl Default for StabilitySection {
    fn default() -> Self {
        Self { k_max: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub csv: bool,
    pub gnuplot: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            csv: true,
            gnuplot: false,
        }
    }
}

/// One sweep dimension: a dotted parameter path and its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub name: String,
    pub values: Vec<toml::Value>,
}

/// Assigned `(key, value)` pairs and the resulting configuration.
pub type SweepPoint = (Vec<(String, toml::Value)>, RunConfig);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mode: Mode,
    pub output: PathBuf,
    pub params: ModelParams,
    pub grid: Grid1D,
    pub solver: SolverConfig,
    pub response: ResponseFunction,
    pub initial: InitialConfig,
    pub kinetic: KineticSection,
    pub fit: FitSection,
    pub stability: StabilitySection,
    pub out: OutputSection,
    pub sweep: Vec<SweepAxis>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Macro,
            output: PathBuf::from("out"),
            params: ModelParams::default(),
            grid: Grid1D::default(),
            solver: SolverConfig {
                snapshot_every: 500,
                ..SolverConfig::default()
            },
            response: ResponseFunction::default(),
            initial: InitialConfig::default(),
            kinetic: KineticSection::default(),
            fit: FitSection::default(),
            stability: StabilitySection::default(),
            out: OutputSection::default(),
            sweep: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("{origin}:{line}:{column}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("unknown preset {0:?} (expected fig3, fig4, fig5 or cluster)")]
    UnknownPreset(String),
    #[error("bad override {0:?}: {1}")]
    Override(String, String),
}

pub const PRESETS: [&str; 4] = ["fig3", "fig4", "fig5", "cluster"];

/// Bundled configurations. The figure presets share the channel of 200
/// units, 2000 cells and `t_end = 360`.
pub fn preset(name: &str) -> Result<RunConfig, ConfigError> {
    let base = RunConfig::default();
    let cfg = match name {
        "fig3" => base,
        "fig4" => RunConfig {
            response: ResponseFunction::arctan(0.1),
            ..base
        },
        "fig5" => RunConfig {
            params: ModelParams {
                n0: 1.0,
                ..base.params
            },
            ..base
        },
        "cluster" => RunConfig {
            params: ModelParams {
                gamma: 0.0,
                ..base.params
            },
            grid: Grid1D {
                length: 50.0,
                n_cells: 1000,
            },
            solver: SolverConfig {
                t_end: 200.0,
                ..base.solver
            },
            response: ResponseFunction::bivaluated(1.0),
            initial: InitialConfig {
                decay_rate: 1.0,
                center: Some(25.0),
            },
            ..base
        },
        other => return Err(ConfigError::UnknownPreset(other.to_string())),
    };
    Ok(cfg)
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Parses and validates a configuration from TOML text.
pub fn parse_config(text: &str, origin: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
        ConfigError::Parse {
            origin: origin.to_string(),
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    cfg.validate()
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&text, &path.display().to_string())
}

pub fn to_toml(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("configuration is always representable in TOML")
}

/// Parses an override value as a TOML literal, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Sets `path` (dotted) to `value` inside `table`; every segment but the last
/// must already exist so typos surface.
fn set_path(table: &mut toml::Table, path: &str, value: toml::Value) -> Result<(), String> {
    let parts: Vec<&str> = path.split('.').collect();
    let (last, parents) = parts.split_last().ok_or("empty key")?;
    let mut cur = table;
    for p in parents {
        cur = match cur.get_mut(*p) {
            Some(toml::Value::Table(t)) => t,
            _ => return Err(format!("no section {p:?}")),
        };
    }
    // keep float fields floats when given an integer literal
    let value = match (cur.get(*last), value) {
        (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (_, v) => v,
    };
    cur.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Checks every section and lists all violations together.
    pub fn validate(self) -> Result<Self, ConfigError> {
        let mut v = Vec::new();
        let mut collect = |r: Result<(), crate::model::ParamError>, section: &str| {
            if let Err(e) = r {
                v.extend(e.violations.into_iter().map(|m| format!("{section}: {m}")));
            }
        };
        collect(self.params.validate().map(|_| ()), "params");
        collect(self.grid.validate().map(|_| ()), "grid");
        collect(self.solver.validate().map(|_| ()), "solver");
        collect(self.response.validate().map(|_| ()), "response");
        collect(self.kinetic.params(self.params.epsilon).validate().map(|_| ()), "kinetic");
        collect(self.kinetic.config().validate().map(|_| ()), "kinetic");
        if !(self.initial.decay_rate > 0.0 && self.initial.decay_rate.is_finite()) {
            v.push("initial: decay_rate must be positive".into());
        }
        if let Some(c) = self.initial.center {
            if !(0.0..=self.grid.length).contains(&c) {
                v.push("initial: center must lie in the channel".into());
            }
        }
        if !(self.fit.window > 0.0 && self.fit.window <= 1.0) {
            v.push("fit: window out of range (0, 1]".into());
        }
        let [a, b] = self.fit.tail_efolds;
        if !(a >= 0.0 && b > a) {
            v.push("fit: tail_efolds must satisfy 0 <= inner < outer".into());
        }
        if self.stability.k_max == 0 {
            v.push("stability: k_max must be at least 1".into());
        }
        if self.mode == Mode::Sweep && self.sweep.is_empty() {
            v.push("sweep: at least one axis is required".into());
        }
        let base = toml::Table::try_from(&self).ok();
        for axis in &self.sweep {
            if axis.values.is_empty() {
                v.push(format!("sweep: axis {:?} has no values", axis.name));
            }
            if axis.name.starts_with("sweep") || axis.name == "mode" {
                v.push(format!("sweep: axis {:?} cannot be swept", axis.name));
                continue;
            }
            if let (Some(base), Some(first)) = (&base, axis.values.first()) {
                let mut t = base.clone();
                if let Err(e) = set_path(&mut t, &axis.name, first.clone())
                    .and_then(|_| toml::Value::Table(t).try_into::<RunConfig>().map(|_| ()).map_err(|e| e.to_string()))
                {
                    v.push(format!("sweep: axis {:?}: {}", axis.name, e.trim()));
                }
            }
        }
        if v.is_empty() {
            Ok(self)
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    /// Applies one `key=value` override (dotted key) and revalidates.
    pub fn with_override(&self, spec: &str) -> Result<RunConfig, ConfigError> {
        let (key, raw) = spec
            .split_once('=')
            .ok_or_else(|| ConfigError::Override(spec.to_string(), "expected key=value".into()))?;
        self.with_value(key.trim(), parse_value(raw.trim()))
            .map_err(|e| match e {
                ConfigError::Override(_, m) => ConfigError::Override(spec.to_string(), m),
                other => other,
            })
    }

    pub fn with_value(&self, key: &str, value: toml::Value) -> Result<RunConfig, ConfigError> {
        let fail = |m: String| ConfigError::Override(key.to_string(), m);
        let mut table = toml::Table::try_from(self).map_err(|e| fail(e.to_string()))?;
        set_path(&mut table, key, value).map_err(fail)?;
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| fail(e.message().trim().to_string()))?;
        cfg.validate()
    }

    /// Cross product of the sweep axes as `(label, config)` pairs.
    pub fn sweep_points(&self) -> Result<Vec<SweepPoint>, ConfigError> {
        let mut points = vec![(Vec::new(), RunConfig {
            mode: Mode::Macro,
            sweep: Vec::new(),
            ..self.clone()
        })];
        for axis in &self.sweep {
            let mut next = Vec::with_capacity(points.len() * axis.values.len());
            for (labels, cfg) in &points {
                for value in &axis.values {
                    let mut l = labels.clone();
                    l.push((axis.name.clone(), value.clone()));
                    next.push((l, cfg.with_value(&axis.name, value.clone())?));
                }
            }
            points = next;
        }
        Ok(points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_figures() {
        let f3 = preset("fig3").unwrap();
        assert_eq!(f3.response, ResponseFunction::arctan(1e-3));
        assert_eq!(f3.params.n0, 10.0);
        assert_eq!(preset("fig4").unwrap().response, ResponseFunction::arctan(0.1));
        assert_eq!(preset("fig5").unwrap().params.n0, 1.0);
        assert_eq!(preset("cluster").unwrap().params.gamma, 0.0);
        assert!(matches!(preset("fig9"), Err(ConfigError::UnknownPreset(_))));
        for name in PRESETS {
            preset(name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let text = "mode = \"macro\"\n[params]\nchi_s = 1.0\nchi_z = 2.0\n";
        match parse_config(text, "test.toml") {
            Err(ConfigError::Parse { line, message, .. }) => {
                assert_eq!(line, 4);
                assert!(message.contains("chi_z"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn validation_lists_every_violation() {
        let text = "[params]\nd_rho = -1.0\nmass = 0.0\n[grid]\nn_cells = 1\n";
        match parse_config(text, "t") {
            Err(ConfigError::Invalid(v)) => assert!(v.len() >= 3, "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn partial_sections_take_defaults() {
        let cfg = parse_config("[response]\nshape = \"bivaluated\"\nphi0 = 1.0\n[grid]\nn_cells = 100\n", "t").unwrap();
        assert_eq!(cfg.grid.length, 200.0);
        assert_eq!(cfg.grid.n_cells, 100);
        assert_eq!(cfg.params, ModelParams::default());
    }

    #[test]
    fn overrides_follow_dotted_paths() {
        let cfg = preset("fig3").unwrap();
        let c = cfg.with_override("response.delta=0.1").unwrap();
        assert_eq!(c.response, ResponseFunction::arctan(0.1));
        let c = cfg.with_override("params.n0=1").unwrap();
        assert_eq!(c.params.n0, 1.0);
        let c = cfg.with_override("mode=speed").unwrap();
        assert_eq!(c.mode, Mode::Speed);
        assert!(cfg.with_override("params.nope=1").is_err());
        assert!(cfg.with_override("nosection.x=1").is_err());
        assert!(cfg.with_override("params.mass=-1").is_err());
        assert!(cfg.with_override("params.mass").is_err());
    }

    #[test]
    fn sweep_expands_cross_product() {
        let text = "mode = \"sweep\"\n[[sweep]]\nname = \"response.delta\"\nvalues = [1e-3, 1e-2, 1e-1]\n[[sweep]]\nname = \"params.n0\"\nvalues = [1.0, 10.0]\n";
        let cfg = parse_config(text, "t").unwrap();
        let pts = cfg.sweep_points().unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[5].1.response, ResponseFunction::arctan(0.1));
        assert_eq!(pts[5].1.params.n0, 10.0);
        assert!(pts.iter().all(|(_, c)| c.mode == Mode::Macro));
        let bad = "mode = \"sweep\"\n[[sweep]]\nname = \"params.zeta\"\nvalues = [1.0]\n";
        assert!(matches!(parse_config(bad, "t"), Err(ConfigError::Invalid(_))));
        let empty = "mode = \"sweep\"\n[[sweep]]\nname = \"params.n0\"\nvalues = []\n";
        assert!(parse_config(empty, "t").is_err());
    }

    #[test]
    fn round_trip_presets() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            assert_eq!(parse_config(&to_toml(&cfg), "rt").unwrap(), cfg);
        }
    }
}
