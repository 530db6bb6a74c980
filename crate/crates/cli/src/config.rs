//! Experiment configuration: a TOML file with `[target]`, `[sampler]`,
//! `[constraint]`, `[run]` and optional `[diagnostics]` / `[certify]`
//! tables. See `docs/config.md` for the schema.

use std::fmt;
use std::path::{Path, PathBuf};

use amcert_core::adapt::{AmConfig, ConstraintSchedule, RecursionVariant, DEFAULT_KAPPA, DEFAULT_SNAPSHOT_EVERY};
use amcert_core::targets::TargetDensity;
use amcert_core::{SpdMatrix, TargetSpec};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub theta: f64,
    pub kappa: f64,
    pub weight_exponent: f64,
    pub recursion_variant: RecursionVariant,
    pub burn_in: u64,
    pub snapshot_every: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub n_steps: u64,
    pub n_chains: usize,
    pub root_seed: u64,
    pub x0: Vec<f64>,
    pub sigma0: Vec<Vec<f64>>,
    /// Number of evenly spaced checkpoints for running averages.
    pub checkpoints: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

/// Test functions available to the running-average and batch-means
/// diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunction {
    /// `‖x‖²`.
    NormSq,
    /// `x[0]`.
    First,
}

impl TestFunction {
    pub fn eval(self, x: &DVector<f64>) -> f64 {
        match self {
            TestFunction::NormSq => x.norm_squared(),
            TestFunction::First => x[0],
        }
    }

    /// `π(f)` when the target's moments are known.
    pub fn reference(self, t: &dyn TargetDensity) -> Option<f64> {
        let (m, c) = t.moments()?;
        Some(match self {
            TestFunction::NormSq => c.trace() + m.norm_squared(),
            TestFunction::First => m[0],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub average: TestFunction,
    pub batch: TestFunction,
    pub n_batches: usize,
    pub burn_frac: f64,
    pub growth_eps: f64,
    pub moment_r: f64,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            average: TestFunction::NormSq,
            batch: TestFunction::First,
            n_batches: 50,
            burn_frac: amcert_core::diagnostics::DEFAULT_BURN_FRAC,
            growth_eps: 0.25,
            moment_r: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    /// A certificate must be found.
    Drift,
    /// The search must end in `NoDriftFound` (negative control).
    NoDrift,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySection {
    pub expect: Expectation,
    pub margin: f64,
    /// Proposal covariance to certify; defaults to `θ Σ_0`.
    pub v: Vec<Vec<f64>>,
    /// Multipliers of `v` for the determinant-scaling audit.
    pub audit_scales: Vec<f64>,
    pub probe_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub target: TargetSpec,
    pub sampler: SamplerSection,
    pub constraint: ConstraintSchedule,
    pub run: RunSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certify: Option<CertifySection>,
}

// What the user may write: everything except the target is optional.

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSampler {
    theta: Option<f64>,
    kappa: Option<f64>,
    weight_exponent: Option<f64>,
    recursion_variant: Option<RecursionVariant>,
    burn_in: Option<u64>,
    snapshot_every: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraint {
    enabled: Option<bool>,
    t: Option<f64>,
    eps_prime: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    n_steps: Option<u64>,
    n_chains: Option<usize>,
    root_seed: Option<u64>,
    x0: Option<Vec<f64>>,
    sigma0: Option<Vec<Vec<f64>>>,
    checkpoints: Option<usize>,
    output_dir: Option<PathBuf>,
    workers: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiagnostics {
    average: Option<TestFunction>,
    batch: Option<TestFunction>,
    n_batches: Option<usize>,
    burn_frac: Option<f64>,
    growth_eps: Option<f64>,
    moment_r: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCertify {
    expect: Option<Expectation>,
    margin: Option<f64>,
    v: Option<Vec<Vec<f64>>>,
    audit_scales: Option<Vec<f64>>,
    probe_max: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    target: TargetSpec,
    #[serde(default)]
    sampler: RawSampler,
    #[serde(default)]
    constraint: RawConstraint,
    #[serde(default)]
    run: RawRun,
    diagnostics: Option<RawDiagnostics>,
    certify: Option<RawCertify>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io(String),
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    Validation(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(m) => write!(f, "cannot read config: {m}"),
            ConfigError::Parse { line, column, message } => {
                write!(f, "config parse error at line {line}, column {column}: {message}")
            }
            ConfigError::Validation(errs) => {
                writeln!(f, "config has {} error(s):", errs.len())?;
                for e in errs {
                    writeln!(f, "  - {e}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((0, 0));
        ConfigError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let cfg = fill_defaults(raw);
    let errs = validate(&cfg);
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Validation(errs))
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, column)
}

fn identity_rows(d: usize) -> Vec<Vec<f64>> {
    (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn fill_defaults(raw: RawConfig) -> RunConfig {
    let d = raw.target.dim().max(1);
    let am = AmConfig::for_dim(d);
    let sampler = SamplerSection {
        theta: raw.sampler.theta.unwrap_or(am.theta),
        kappa: raw.sampler.kappa.unwrap_or(DEFAULT_KAPPA),
        weight_exponent: raw.sampler.weight_exponent.unwrap_or(1.0),
        recursion_variant: raw.sampler.recursion_variant.unwrap_or_default(),
        burn_in: raw.sampler.burn_in.unwrap_or(0),
        snapshot_every: raw.sampler.snapshot_every.unwrap_or(DEFAULT_SNAPSHOT_EVERY),
    };
    let sd = ConstraintSchedule::default();
    let constraint = ConstraintSchedule {
        t: raw.constraint.t.unwrap_or(sd.t),
        eps_prime: raw.constraint.eps_prime.unwrap_or(sd.eps_prime),
        enabled: raw.constraint.enabled.unwrap_or(false),
    };
    let sigma0 = raw.run.sigma0.unwrap_or_else(|| identity_rows(d));
    let run = RunSection {
        n_steps: raw.run.n_steps.unwrap_or(10_000),
        n_chains: raw.run.n_chains.unwrap_or(1),
        root_seed: raw.run.root_seed.unwrap_or(0),
        x0: raw.run.x0.unwrap_or_else(|| vec![0.0; d]),
        sigma0: sigma0.clone(),
        checkpoints: raw.run.checkpoints.unwrap_or(20),
        output_dir: raw.run.output_dir,
        workers: raw.run.workers,
    };
    let diagnostics = raw.diagnostics.map(|r| {
        let dd = DiagnosticsSection::default();
        DiagnosticsSection {
            average: r.average.unwrap_or(dd.average),
            batch: r.batch.unwrap_or(dd.batch),
            n_batches: r.n_batches.unwrap_or(dd.n_batches),
            burn_frac: r.burn_frac.unwrap_or(dd.burn_frac),
            growth_eps: r.growth_eps.unwrap_or(dd.growth_eps),
            moment_r: r.moment_r.unwrap_or(dd.moment_r),
        }
    });
    let certify = raw.certify.map(|r| CertifySection {
        expect: r.expect.unwrap_or(Expectation::Drift),
        margin: r.margin.unwrap_or(amcert_core::certify::DEFAULT_MARGIN),
        v: r.v.unwrap_or_else(|| {
            sigma0
                .iter()
                .map(|row| row.iter().map(|x| x * sampler.theta).collect())
                .collect()
        }),
        audit_scales: r.audit_scales.unwrap_or_else(|| vec![1.0, 2.0, 4.0, 8.0]),
        probe_max: r.probe_max.unwrap_or(1e3),
    });
    RunConfig {
        target: raw.target,
        sampler,
        constraint,
        run,
        diagnostics,
        certify,
    }
}

fn validate(cfg: &RunConfig) -> Vec<String> {
    let mut errs = Vec::new();
    let target = match cfg.target.build() {
        Ok(t) => Some(t),
        Err(e) => {
            errs.push(format!("target: {e}"));
            None
        }
    };
    let d = cfg.target.dim();
    if let Err(e) = cfg.am_config().validate() {
        errs.push(format!("sampler: {e}"));
    }
    if cfg.sampler.snapshot_every == 0 {
        errs.push("sampler.snapshot_every must be ≥ 1".into());
    }
    if cfg.constraint.enabled {
        if let Err(e) = cfg.constraint.validate() {
            errs.push(format!("constraint: {e}"));
        }
    }
    if cfg.run.n_steps == 0 {
        errs.push("run.n_steps must be ≥ 1".into());
    }
    if cfg.run.n_chains == 0 {
        errs.push("run.n_chains must be ≥ 1".into());
    }
    if cfg.run.workers == Some(0) {
        errs.push("run.workers must be ≥ 1".into());
    }
    if cfg.run.checkpoints == 0 {
        errs.push("run.checkpoints must be ≥ 1".into());
    }
    if cfg.run.x0.len() != d {
        errs.push(format!(
            "run.x0 has length {}, target dimension is {d}",
            cfg.run.x0.len()
        ));
    }
    match SpdMatrix::from_rows(&cfg.run.sigma0) {
        Err(e) => errs.push(format!("run.sigma0: {e}")),
        Ok(s) => {
            if s.dim() != d {
                errs.push(format!("run.sigma0 is {0}×{0}, target dimension is {d}", s.dim()));
            }
            if s.min_eigenvalue() < cfg.sampler.kappa {
                errs.push(format!(
                    "run.sigma0: eigenvalue floor violated, smallest eigenvalue {} is below kappa = {} \
                     (the initial covariance must satisfy Σ0 ⪰ κI)",
                    s.min_eigenvalue(),
                    cfg.sampler.kappa
                ));
            }
            if cfg.constraint.enabled && s.dim() == d && cfg.run.x0.len() == d {
                let norm = DVector::from_vec(cfg.run.x0.clone()).norm().max(s.frobenius_norm());
                if norm > cfg.constraint.t {
                    errs.push(format!("constraint.t = {} is below |s0| = {norm}", cfg.constraint.t));
                }
            }
        }
    }
    if let (Some(t), true) = (&target, cfg.run.x0.len() == d) {
        if !t.log_density(&DVector::from_vec(cfg.run.x0.clone())).is_finite() {
            errs.push("run.x0: target density vanishes at the starting point".into());
        }
    }
    if let Some(dg) = &cfg.diagnostics {
        if dg.n_batches < amcert_core::diagnostics::MIN_BATCHES {
            errs.push(format!(
                "diagnostics.n_batches must be ≥ {}",
                amcert_core::diagnostics::MIN_BATCHES
            ));
        }
        if !(0.0..1.0).contains(&dg.burn_frac) {
            errs.push("diagnostics.burn_frac must lie in [0, 1)".into());
        }
        if !(dg.growth_eps > 0.0) {
            errs.push("diagnostics.growth_eps must be positive".into());
        }
        if !(dg.moment_r > 0.0 && dg.moment_r <= 1.0) {
            errs.push("diagnostics.moment_r must lie in (0, 1]".into());
        }
    }
    if let Some(c) = &cfg.certify {
        if !(c.margin > 0.0 && c.margin < 1.0) {
            errs.push("certify.margin must lie in (0, 1)".into());
        }
        match SpdMatrix::from_rows(&c.v) {
            Err(e) => errs.push(format!("certify.v: {e}")),
            Ok(v) if v.dim() != d => errs.push(format!("certify.v is {0}×{0}, target dimension is {d}", v.dim())),
            Ok(v) => {
                let smallest = c.audit_scales.iter().copied().fold(1.0, f64::min);
                if v.certified_floor() * smallest < cfg.sampler.kappa {
                    errs.push(format!(
                        "certify.v: eigenvalue floor {} (times the smallest audit scale {smallest}) is below kappa = {}",
                        v.certified_floor(),
                        cfg.sampler.kappa
                    ));
                }
            }
        }
        if c.audit_scales.iter().any(|s| !(*s > 0.0)) {
            errs.push("certify.audit_scales must be positive".into());
        }
        if !(c.probe_max > 1.0) {
            errs.push("certify.probe_max must exceed 1".into());
        }
    }
    errs
}

impl RunConfig {
    pub fn am_config(&self) -> AmConfig {
        AmConfig {
            theta: self.sampler.theta,
            kappa: self.sampler.kappa,
            weight_exponent: self.sampler.weight_exponent,
            recursion_variant: self.sampler.recursion_variant,
            burn_in: self.sampler.burn_in,
        }
    }

    /// The fully explicit TOML form; parsing it yields `self` again.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("RunConfig serializes to TOML")
    }

    pub fn x0(&self) -> DVector<f64> {
        DVector::from_vec(self.run.x0.clone())
    }

    pub fn sigma0(&self) -> SpdMatrix {
        SpdMatrix::from_rows(&self.run.sigma0).expect("validated")
    }
}
