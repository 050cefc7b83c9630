//! Experiment configuration: a single TOML file describing the kernel,
//! the manifold, the algorithm hyperparameters, an optional sweep, and
//! the oracle options. Unknown keys are hard errors so sweep typos
//! cannot pass silently.

use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use qsnash_core::dynamics::{Algorithm, RunConfig};
use qsnash_core::kernel::Kernel;
use qsnash_core::manifold::{Initializer, Manifold};
use qsnash_core::metrics::EstimatorConfig;

use crate::error::CliError;

fn default_metric() -> String {
    "kl10".to_string()
}

fn default_record_every() -> usize {
    100
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Strategy space, `torus:d` or `sphere:d`; must agree with the kernel.
    pub manifold: String,
    /// `lgda` or `qslgd`; required by the `run` subcommand.
    pub algorithm: Option<String>,
    /// `kl<B>` (histogram KL with B bins) or `ni`.
    #[serde(default = "default_metric")]
    pub metric: String,
    /// Metric recording cadence in outer iterations.
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Directory the CSV outputs are written into.
    pub output_dir: Option<String>,
    /// Parallel sweep cells; the QSNASH_WORKERS variable overrides this.
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub kernel: KernelSection,
    pub run: Option<RunSection>,
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub ni: NiSection,
    pub oracle: Option<OracleSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    /// `sine_torus` or `poly_sphere`.
    #[serde(rename = "type")]
    pub kind: String,
    /// Ambient dimension (poly_sphere).
    pub d: Option<usize>,
    /// Seed of the Gaussian matrix generator (poly_sphere).
    pub matrix_seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub n_x: usize,
    pub n_y: usize,
    #[serde(default)]
    pub k0: usize,
    #[serde(default)]
    pub k1: usize,
    #[serde(default)]
    pub k2: usize,
    pub t: usize,
    pub h_x: f64,
    pub h_y: f64,
    pub beta: f64,
    pub seed: u64,
    pub init_x: InitSection,
    pub init_y: InitSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSection {
    Uniform,
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl InitSection {
    pub fn to_initializer(&self) -> Initializer {
        match self {
            InitSection::Uniform => Initializer::Uniform,
            InitSection::Box { lo, hi } => Initializer::Box {
                lo: lo.clone(),
                hi: hi.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// One of `beta`, `h`, `n`, `k1`, `t`.
    pub parameter: String,
    pub values: Vec<f64>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

fn default_repeats() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NiSection {
    pub starts: usize,
    pub steps: usize,
    pub step_size: f64,
    pub seed: u64,
    pub torus_grid: usize,
}

impl Default for NiSection {
    fn default() -> Self {
        let d = EstimatorConfig::default();
        NiSection {
            starts: d.starts,
            steps: d.steps,
            step_size: d.step_size,
            seed: d.seed,
            torus_grid: d.torus_grid,
        }
    }
}

impl NiSection {
    pub fn to_estimator(&self) -> EstimatorConfig {
        EstimatorConfig {
            starts: self.starts,
            steps: self.steps,
            step_size: self.step_size,
            seed: self.seed,
            torus_grid: self.torus_grid,
            torus_grid_offset: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default = "default_cells")]
    pub n_cells: usize,
    pub beta: f64,
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    pub pde: Option<PdeSection>,
}

fn default_cells() -> usize {
    qsnash_core::gridref::DEFAULT_CELLS
}

fn default_damping() -> f64 {
    0.5
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    100_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSection {
    /// `uniform` or `bump`.
    #[serde(default = "default_pde_init")]
    pub init: String,
    pub steps: usize,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

fn default_pde_init() -> String {
    "bump".to_string()
}

/// The metric recorded per observation row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Histogram KL against the uniform reference with this bin count.
    Kl(usize),
    Ni,
}

impl Metric {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        if s == "ni" {
            return Ok(Metric::Ni);
        }
        if let Some(bins) = s.strip_prefix("kl") {
            if let Ok(b) = bins.parse::<usize>() {
                if b >= 1 {
                    return Ok(Metric::Kl(b));
                }
            }
        }
        Err(CliError::config(format!(
            "metric: expected `kl<B>` (B >= 1) or `ni`, got `{s}`"
        )))
    }

    pub fn column_name(&self) -> String {
        match self {
            Metric::Kl(b) => format!("kl{b}"),
            Metric::Ni => "ni".to_string(),
        }
    }
}

/// Sweepable hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    Beta,
    StepSize,
    Particles,
    InnerIters,
    OuterIters,
}

impl SweepParameter {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "beta" => Ok(SweepParameter::Beta),
            "h" => Ok(SweepParameter::StepSize),
            "n" => Ok(SweepParameter::Particles),
            "k1" => Ok(SweepParameter::InnerIters),
            "t" => Ok(SweepParameter::OuterIters),
            _ => Err(CliError::config(format!(
                "sweep.parameter: expected one of `beta`, `h`, `n`, `k1`, `t`, got `{s}`"
            ))),
        }
    }

    /// Applies one sweep value to a run configuration.
    pub fn apply(&self, cfg: &mut RunConfig, value: f64) -> Result<(), CliError> {
        let as_count = |value: f64, name: &str| -> Result<usize, CliError> {
            if value.fract() != 0.0 || value < 0.0 || value > usize::MAX as f64 {
                return Err(CliError::config(format!(
                    "sweep.values: `{name}` values must be nonnegative integers, got {value}"
                )));
            }
            Ok(value as usize)
        };
        match self {
            SweepParameter::Beta => {
                if value <= 0.0 || value.is_nan() {
                    return Err(CliError::config(
                        "sweep.values: beta values must be positive",
                    ));
                }
                cfg.beta = value;
            }
            SweepParameter::StepSize => {
                if value <= 0.0 || value.is_nan() {
                    return Err(CliError::config("sweep.values: h values must be positive"));
                }
                cfg.h_x = value;
                cfg.h_y = value;
            }
            SweepParameter::Particles => {
                let n = as_count(value, "n")?;
                cfg.n_x = n;
                cfg.n_y = n;
            }
            SweepParameter::InnerIters => cfg.k1 = as_count(value, "k1")?,
            SweepParameter::OuterIters => cfg.outer_iters = as_count(value, "t")?,
        }
        Ok(())
    }
}

/// Everything validated and ready to execute.
#[derive(Debug, Clone)]
pub struct ValidatedConfig {
    pub manifold: Manifold,
    pub kernel: Kernel,
    pub algorithm: Option<Algorithm>,
    pub metric: Metric,
    pub record_every: usize,
    pub output_dir: Option<String>,
    pub workers: usize,
    pub base_run: Option<RunConfig>,
    pub sweep: Option<(SweepParameter, Vec<f64>, usize)>,
    pub estimator: EstimatorConfig,
    pub oracle: Option<OracleSection>,
}

pub fn load_config(path: &Path) -> Result<ValidatedConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read `{}`: {e}", path.display())))?;
    let cfg: ExperimentConfig =
        toml::from_str(&text).map_err(|e| CliError::config(format!("parse error: {e}")))?;
    validate(cfg)
}

fn validate(cfg: ExperimentConfig) -> Result<ValidatedConfig, CliError> {
    let manifold = Manifold::from_str(&cfg.manifold)
        .map_err(|e| CliError::config(format!("manifold: {e}")))?;

    let kernel = match cfg.kernel.kind.as_str() {
        "sine_torus" => {
            if cfg.kernel.d.is_some() || cfg.kernel.matrix_seed.is_some() {
                return Err(CliError::config(
                    "kernel.d/kernel.matrix_seed: only valid for poly_sphere",
                ));
            }
            Kernel::sine_torus()
        }
        "poly_sphere" => {
            let d = cfg
                .kernel
                .d
                .ok_or_else(|| CliError::config("kernel.d: required for poly_sphere"))?;
            let seed = cfg
                .kernel
                .matrix_seed
                .ok_or_else(|| CliError::config("kernel.matrix_seed: required for poly_sphere"))?;
            Kernel::poly_sphere_gaussian(d, seed)
                .map_err(|e| CliError::config(format!("kernel: {e}")))?
        }
        other => {
            return Err(CliError::config(format!(
                "kernel.type: expected `sine_torus` or `poly_sphere`, got `{other}`"
            )))
        }
    };
    if kernel.manifold() != manifold {
        return Err(CliError::config(format!(
            "manifold: `{}` does not match the kernel's strategy space `{}`",
            cfg.manifold,
            kernel.manifold()
        )));
    }

    let metric = Metric::parse(&cfg.metric)?;
    if matches!(metric, Metric::Kl(_)) && manifold != Manifold::Torus(1) {
        return Err(CliError::config(
            "metric: histogram KL is only defined on torus:1; use `ni`",
        ));
    }
    if cfg.record_every == 0 {
        return Err(CliError::config("record_every: must be >= 1"));
    }
    if cfg.workers == 0 {
        return Err(CliError::config("workers: must be >= 1"));
    }

    let algorithm = cfg
        .algorithm
        .as_deref()
        .map(|s| Algorithm::from_str(s).map_err(|e| CliError::config(format!("algorithm: {e}"))))
        .transpose()?;

    let base_run = cfg
        .run
        .as_ref()
        .map(|r| {
            let rc = RunConfig {
                n_x: r.n_x,
                n_y: r.n_y,
                k0: r.k0,
                k1: r.k1,
                k2: r.k2,
                outer_iters: r.t,
                h_x: r.h_x,
                h_y: r.h_y,
                beta: r.beta,
                seed: r.seed,
                init_x: r.init_x.to_initializer(),
                init_y: r.init_y.to_initializer(),
            };
            if let Some(algo) = algorithm {
                rc.validate_for(algo)
                    .map_err(|e| CliError::config(format!("run: {e}")))?;
            }
            Ok::<_, CliError>(rc)
        })
        .transpose()?;

    let sweep = cfg
        .sweep
        .as_ref()
        .map(|s| {
            let param = SweepParameter::parse(&s.parameter)?;
            if s.values.is_empty() {
                return Err(CliError::config("sweep.values: must be nonempty"));
            }
            if s.repeats == 0 {
                return Err(CliError::config("sweep.repeats: must be >= 1"));
            }
            // every sweep value must produce a valid run configuration
            if let (Some(base), Some(algo)) = (&base_run, algorithm) {
                for &v in &s.values {
                    let mut probe = base.clone();
                    param.apply(&mut probe, v)?;
                    probe
                        .validate_for(algo)
                        .map_err(|e| CliError::config(format!("sweep.values ({v}): {e}")))?;
                }
            }
            Ok((param, s.values.clone(), s.repeats))
        })
        .transpose()?;

    if let Some(o) = &cfg.oracle {
        if o.n_cells < 2 {
            return Err(CliError::config("oracle.n_cells: must be >= 2"));
        }
        if o.beta <= 0.0 || o.beta.is_nan() {
            return Err(CliError::config("oracle.beta: must be positive"));
        }
        if o.damping <= 0.0 || o.damping > 1.0 || o.damping.is_nan() {
            return Err(CliError::config("oracle.damping: must lie in (0, 1]"));
        }
        if o.tol <= 0.0 || o.tol.is_nan() {
            return Err(CliError::config("oracle.tol: must be positive"));
        }
        if manifold != Manifold::Torus(1) {
            return Err(CliError::config("oracle: the grid oracle is torus:1 only"));
        }
        if let Some(p) = &o.pde {
            if p.steps == 0 {
                return Err(CliError::config("oracle.pde.steps: must be >= 1"));
            }
            if p.record_every == 0 {
                return Err(CliError::config("oracle.pde.record_every: must be >= 1"));
            }
            if p.init != "uniform" && p.init != "bump" {
                return Err(CliError::config(format!(
                    "oracle.pde.init: expected `uniform` or `bump`, got `{}`",
                    p.init
                )));
            }
        }
    }

    Ok(ValidatedConfig {
        manifold,
        kernel,
        algorithm,
        metric,
        record_every: cfg.record_every,
        output_dir: cfg.output_dir,
        workers: cfg.workers,
        base_run,
        sweep,
        estimator: cfg.ni.to_estimator(),
        oracle: cfg.oracle,
    })
}
