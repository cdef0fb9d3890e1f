//! Flat `key = value` experiment configs (a TOML subset).

use std::fmt;
use std::path::Path;

use clap::ValueEnum;
use qdrive_core::jc::{default_fock_truncation, default_truncation};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    JcUnitary,
    JcDissipative,
    ClassicalCompare,
    BkIdentity,
    BkSweep,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Evaluator {
    ClosedForm,
    Matrix,
    Factorized,
}

/// Keys as written in the file; everything optional until resolved.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Option<Experiment>,
    g: Option<f64>,
    theta: Option<f64>,
    alpha: Option<f64>,
    alpha_phase: Option<f64>,
    fock: Option<usize>,
    beta: Option<f64>,
    n_trunc: Option<usize>,
    t_max: Option<f64>,
    step: Option<f64>,
    stride: Option<usize>,
    t_measure: Option<f64>,
    nbar: Option<Vec<f64>>,
    evaluator: Option<Evaluator>,
    out_dir: Option<String>,
}

/// Fully resolved config. Serializes back to a valid config file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub g: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_phase: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fock: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_trunc: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_measure: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nbar: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluator: Option<Evaluator>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

pub const DEFAULT_THETA: f64 = 0.2;
pub const DEFAULT_BETA: f64 = 1.0;
pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_STRIDE: usize = 100;
pub const DEFAULT_DISSIPATIVE_T_MAX: f64 = 150.0;

/// Field-level errors carry the key and, when it appears in the file, its line.
struct Ctx<'a> {
    source: &'a str,
    file: &'a str,
}

impl Ctx<'_> {
    fn line_of(&self, key: &str) -> Option<usize> {
        self.source.lines().position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
    }

    fn err(&self, key: &str, msg: impl fmt::Display) -> CliError {
        match self.line_of(key) {
            Some(i) => CliError::Validation(format!("{}:{}: key `{key}`: {msg}", self.file, i + 1)),
            None => CliError::Validation(format!("{}: key `{key}`: {msg}", self.file)),
        }
    }

    fn positive(&self, key: &str, v: Option<f64>) -> Result<Option<f64>, CliError> {
        match v {
            Some(x) if !(x.is_finite() && x > 0.0) => Err(self.err(key, format!("must be positive, got {x}"))),
            other => Ok(other),
        }
    }

    fn non_negative(&self, key: &str, v: Option<f64>) -> Result<Option<f64>, CliError> {
        match v {
            Some(x) if !(x.is_finite() && x >= 0.0) => Err(self.err(key, format!("must be non-negative, got {x}"))),
            other => Ok(other),
        }
    }

    fn required<T>(&self, key: &str, v: Option<T>, experiment: Experiment) -> Result<T, CliError> {
        v.ok_or_else(|| self.err(key, format!("required by {experiment} but missing")))
    }

    fn unused<T>(&self, key: &str, v: &Option<T>, experiment: Experiment) -> Result<(), CliError> {
        if v.is_some() {
            return Err(self.err(key, format!("not used by {experiment}")));
        }
        Ok(())
    }
}

pub fn load(path: &Path, experiment: Option<Experiment>) -> Result<ExperimentConfig, CliError> {
    let source = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("{}: cannot read config: {e}", path.display())))?;
    parse(&source, &path.display().to_string(), experiment)
}

pub fn parse(source: &str, file: &str, experiment: Option<Experiment>) -> Result<ExperimentConfig, CliError> {
    let raw: RawConfig = toml::from_str(source).map_err(|e| {
        let at = e
            .span()
            .map(|s| format!(":{}", source[..s.start].matches('\n').count() + 1))
            .unwrap_or_default();
        CliError::Validation(format!("{file}{at}: {}", e.message()))
    })?;
    resolve(raw, &Ctx { source, file }, experiment)
}

fn resolve(raw: RawConfig, ctx: &Ctx, requested: Option<Experiment>) -> Result<ExperimentConfig, CliError> {
    let experiment = match (requested, raw.experiment) {
        (Some(a), Some(b)) if a != b => {
            return Err(ctx.err("experiment", format!("file says {b} but {a} was requested")));
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => return Err(ctx.err("experiment", "missing; set it in the file or pass --experiment")),
    };
    let g = ctx.positive("g", Some(ctx.required("g", raw.g, experiment)?))?.unwrap();
    let theta = ctx.positive("theta", raw.theta)?;
    let alpha = ctx.non_negative("alpha", raw.alpha)?;
    let beta = ctx.positive("beta", raw.beta)?;
    let t_max = ctx.positive("t_max", raw.t_max)?;
    let step = ctx.positive("step", raw.step)?;
    let t_measure = ctx.non_negative("t_measure", raw.t_measure)?;
    if let Some(phase) = raw.alpha_phase {
        if !phase.is_finite() {
            return Err(ctx.err("alpha_phase", "must be finite"));
        }
    }
    if raw.stride == Some(0) {
        return Err(ctx.err("stride", "must be at least 1"));
    }
    if raw.n_trunc.is_some_and(|n| n < 2) {
        return Err(ctx.err("n_trunc", "must be at least 2"));
    }
    if alpha.is_some() && raw.fock.is_some() {
        return Err(ctx.err("fock", "give either `alpha` or `fock`, not both"));
    }

    let mut cfg = ExperimentConfig {
        experiment,
        g,
        theta: None,
        alpha: None,
        alpha_phase: None,
        fock: None,
        beta: None,
        n_trunc: None,
        t_max: None,
        step: None,
        stride: None,
        t_measure: None,
        nbar: None,
        evaluator: None,
        out_dir: raw.out_dir.clone(),
    };

    let drive_state = |cfg: &mut ExperimentConfig| {
        if let Some(a) = alpha {
            cfg.alpha = Some(a);
            cfg.alpha_phase = Some(raw.alpha_phase.unwrap_or(0.0));
            cfg.n_trunc = Some(raw.n_trunc.unwrap_or_else(|| default_truncation(a * a)));
        } else {
            let n = raw.fock.unwrap_or(0);
            cfg.fock = Some(n);
            cfg.n_trunc = Some(raw.n_trunc.unwrap_or_else(|| default_fock_truncation(n)));
        }
    };

    match experiment {
        Experiment::JcUnitary | Experiment::JcDissipative => {
            drive_state(&mut cfg);
            if experiment == Experiment::JcDissipative {
                cfg.theta = Some(theta.unwrap_or(DEFAULT_THETA));
                cfg.t_max = Some(t_max.unwrap_or(DEFAULT_DISSIPATIVE_T_MAX));
            } else {
                ctx.unused("theta", &theta, experiment)?;
                cfg.t_max = Some(ctx.required("t_max", t_max, experiment)?);
            }
            cfg.step = Some(step.unwrap_or(DEFAULT_STEP));
            cfg.stride = Some(raw.stride.unwrap_or(DEFAULT_STRIDE));
            for (k, unused) in [("beta", beta.is_some()), ("t_measure", t_measure.is_some())] {
                if unused {
                    return Err(ctx.err(k, format!("not used by {experiment}")));
                }
            }
            ctx.unused("nbar", &raw.nbar, experiment)?;
            ctx.unused("evaluator", &raw.evaluator, experiment)?;
        }
        Experiment::ClassicalCompare => {
            if raw.fock.is_some() {
                return Err(ctx.err("fock", "classical-compare needs a coherent drive; use `alpha`"));
            }
            let a = ctx.required("alpha", alpha, experiment)?;
            drive_state(&mut cfg);
            cfg.t_max = Some(t_max.unwrap_or(a / g));
            if cfg.t_max == Some(0.0) {
                return Err(ctx.err("t_max", "required when alpha = 0"));
            }
            cfg.step = Some(step.unwrap_or(DEFAULT_STEP));
            cfg.stride = Some(raw.stride.unwrap_or(DEFAULT_STRIDE));
            ctx.unused("theta", &theta, experiment)?;
            ctx.unused("beta", &beta, experiment)?;
            ctx.unused("t_measure", &t_measure, experiment)?;
            ctx.unused("nbar", &raw.nbar, experiment)?;
            ctx.unused("evaluator", &raw.evaluator, experiment)?;
        }
        Experiment::BkIdentity => {
            drive_state(&mut cfg);
            cfg.beta = Some(beta.unwrap_or(DEFAULT_BETA));
            let nbar = match (cfg.alpha, cfg.fock) {
                (Some(a), _) => a * a,
                (_, Some(n)) => n as f64,
                _ => 0.0,
            };
            cfg.t_measure = match t_measure {
                Some(t) => Some(t),
                None if nbar > 0.0 => Some(std::f64::consts::PI / (2.0 * g * nbar.sqrt())),
                None => return Err(ctx.err("t_measure", "required for a vacuum drive")),
            };
            ctx.unused("theta", &theta, experiment)?;
            ctx.unused("t_max", &t_max, experiment)?;
            ctx.unused("step", &step, experiment)?;
            ctx.unused("stride", &raw.stride, experiment)?;
            ctx.unused("nbar", &raw.nbar, experiment)?;
            ctx.unused("evaluator", &raw.evaluator, experiment)?;
        }
        Experiment::BkSweep => {
            let list = ctx.required("nbar", raw.nbar.clone(), experiment)?;
            if let Some(x) = list.iter().find(|x| !(x.is_finite() && **x >= 1.0)) {
                return Err(ctx.err("nbar", format!("entries must be ≥ 1, got {x}")));
            }
            cfg.nbar = Some(list);
            cfg.beta = Some(beta.unwrap_or(DEFAULT_BETA));
            cfg.evaluator = Some(raw.evaluator.unwrap_or(Evaluator::ClosedForm));
            ctx.unused("alpha", &alpha, experiment)?;
            ctx.unused("alpha_phase", &raw.alpha_phase, experiment)?;
            ctx.unused("fock", &raw.fock, experiment)?;
            ctx.unused("n_trunc", &raw.n_trunc, experiment)?;
            ctx.unused("theta", &theta, experiment)?;
            ctx.unused("t_max", &t_max, experiment)?;
            ctx.unused("step", &step, experiment)?;
            ctx.unused("stride", &raw.stride, experiment)?;
            ctx.unused("t_measure", &t_measure, experiment)?;
        }
    }
    Ok(cfg)
}

impl ExperimentConfig {
    /// Resolved values in config-file syntax.
    pub fn to_config_string(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }
}
