use std::path::{Path, PathBuf};

use brsl::pipeline::FitSettings;
use brsl::posterior::HorseshoeMode;
use brsl::recursion::{RecursionConfig, ViolationPolicy};
use brsl::simulate::{LorenzCoefficients, LorenzConfig, NoisePlacement, SparseRegressionConfig};
use clap::Parser;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Fit,
    Simulate,
    Stream,
    Monitor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    #[default]
    Case1,
    Lorenz,
}

/// Every key of the JSON config file. Command-line flags override the
/// matching key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub case: Case,
    pub input: Option<PathBuf>,
    pub output: PathBuf,
    pub truth: Option<PathBuf>,
    pub seed: u64,

    pub window: usize,
    pub batch_in: usize,
    /// Defaults to `batch_in`.
    pub forget: Option<usize>,
    pub xi: f64,
    pub degree: usize,
    pub bias: bool,
    pub policy: ViolationPolicy,
    pub theta_mode: HorseshoeMode,
    pub refresh_every: Option<usize>,
    pub noise_variance: f64,
    pub local_scale: f64,
    pub global_scale: f64,
    /// Coefficients with absolute mean below this are left out of the
    /// equations report.
    pub threshold: f64,
    pub single_thread: bool,

    pub alpha1: f64,
    pub idle_timeout_ms: u64,

    pub m: usize,
    pub n: usize,
    pub nonzero_fraction: f64,
    pub switch_at: Option<usize>,
    pub t_end: f64,
    pub dt: f64,
    pub noise_std: f64,
    pub noise_placement: NoisePlacement,
    pub lorenz_coefficients: LorenzCoefficients,
}

impl Default for RunConfig {
    fn default() -> Self {
        let rec = RecursionConfig::default();
        let sparse = SparseRegressionConfig::default();
        let lorenz = LorenzConfig::default();
        Self {
            mode: Mode::default(),
            case: Case::default(),
            input: None,
            output: PathBuf::from("out"),
            truth: None,
            seed: 0,
            window: rec.window,
            batch_in: rec.batch_in,
            forget: None,
            xi: rec.forgetting_factor,
            degree: 1,
            bias: false,
            policy: rec.violation_policy,
            theta_mode: rec.horseshoe_mode,
            refresh_every: None,
            noise_variance: 0.1,
            local_scale: 1.0,
            global_scale: 1.0,
            threshold: 0.1,
            single_thread: false,
            alpha1: 0.0,
            idle_timeout_ms: 2000,
            m: sparse.dim_m,
            n: sparse.n_samples,
            nonzero_fraction: sparse.nonzero_fraction,
            switch_at: None,
            t_end: lorenz.t_end,
            dt: lorenz.dt,
            noise_std: 1.0,
            noise_placement: lorenz.noise_placement,
            lorenz_coefficients: lorenz.coefficients,
        }
    }
}

/// Online sparse-dynamics identification with a windowed Bayesian recursion.
#[derive(Debug, Parser)]
#[command(name = "brsl", version)]
pub struct Flags {
    /// simulate | fit | stream | monitor
    #[arg(long, value_parser = parse_enum::<Mode>)]
    pub mode: Option<Mode>,
    /// Scenario for simulate: case1 | lorenz
    #[arg(long, value_parser = parse_enum::<Case>)]
    pub case: Option<Case>,
    /// JSON file with any of the keys below; flags win
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input CSV (`-` reads stdin)
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Ground-truth JSON written by simulate; enables errors.csv
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,

    /// Window length
    #[arg(long)]
    pub window: Option<usize>,
    /// Samples added per step
    #[arg(long)]
    pub batch_in: Option<usize>,
    /// Samples divided out per step (default: batch-in)
    #[arg(long)]
    pub forget: Option<usize>,
    /// Forgetting factor in (0, 1]
    #[arg(long)]
    pub xi: Option<f64>,
    /// Polynomial degree of the dictionary
    #[arg(long)]
    pub degree: Option<usize>,
    /// Include the constant term
    #[arg(long)]
    pub bias: bool,
    /// reject | warn | defer
    #[arg(long, value_parser = parse_enum::<ViolationPolicy>)]
    pub policy: Option<ViolationPolicy>,
    /// adaptive | fixed
    #[arg(long, value_parser = parse_enum::<HorseshoeMode>)]
    pub theta_mode: Option<HorseshoeMode>,
    #[arg(long)]
    pub refresh_every: Option<usize>,
    #[arg(long)]
    pub noise_variance: Option<f64>,
    #[arg(long)]
    pub local_scale: Option<f64>,
    #[arg(long)]
    pub global_scale: Option<f64>,
    /// Smallest |coefficient| printed in equations.txt
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Run ingest, stepping and output on one thread
    #[arg(long)]
    pub single_thread: bool,

    /// Excitation level required by monitor
    #[arg(long)]
    pub alpha1: Option<f64>,
    /// Stream mode stops after this long without new rows
    #[arg(long)]
    pub idle_timeout_ms: Option<u64>,

    /// case1: number of regressors
    #[arg(long)]
    pub m: Option<usize>,
    /// case1: number of samples
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub nonzero_fraction: Option<f64>,
    /// case1: row at which the coefficients are redrawn
    #[arg(long)]
    pub switch_at: Option<usize>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// lorenz: noise standard deviation on every component
    #[arg(long)]
    pub noise_std: Option<f64>,
    /// lorenz: targets | path | both
    #[arg(long, value_parser = parse_enum::<NoisePlacement>)]
    pub noise_placement: Option<NoisePlacement>,
}

/// Accepts the same spellings as the JSON config.
fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

macro_rules! override_fields {
    ($cfg:ident, $flags:ident; $($field:ident),* $(,)?) => {
        $(if let Some(v) = $flags.$field.clone() { $cfg.$field = v.into(); })*
    };
}

impl RunConfig {
    pub fn load(flags: &Flags) -> Result<Self, CliError> {
        let mut cfg = match &flags.config {
            Some(path) => read_config(path)?,
            None => RunConfig::default(),
        };
        override_fields!(cfg, flags;
            mode, case, output, seed, window, batch_in, xi, degree, policy, theta_mode,
            noise_variance, local_scale, global_scale, threshold, alpha1, idle_timeout_ms,
            m, n, nonzero_fraction, t_end, dt, noise_std, noise_placement,
        );
        if flags.input.is_some() {
            cfg.input = flags.input.clone();
        }
        if flags.truth.is_some() {
            cfg.truth = flags.truth.clone();
        }
        if flags.forget.is_some() {
            cfg.forget = flags.forget;
        }
        if flags.refresh_every.is_some() {
            cfg.refresh_every = flags.refresh_every;
        }
        if flags.switch_at.is_some() {
            cfg.switch_at = flags.switch_at;
        }
        cfg.bias |= flags.bias;
        cfg.single_thread |= flags.single_thread;
        Ok(cfg)
    }

    pub fn fit_settings(&self) -> FitSettings {
        FitSettings {
            degree: self.degree,
            bias: self.bias,
            recursion: RecursionConfig {
                window: self.window,
                batch_in: self.batch_in,
                forget: self.forget.unwrap_or(self.batch_in),
                forgetting_factor: self.xi,
                violation_policy: self.policy,
                horseshoe_mode: self.theta_mode,
                refresh_every: self.refresh_every,
                ..Default::default()
            },
            noise_variance: self.noise_variance,
            initial_local_scale: self.local_scale,
            initial_global_scale: self.global_scale,
        }
    }

    pub fn sparse_config(&self) -> SparseRegressionConfig {
        SparseRegressionConfig {
            dim_m: self.m,
            n_samples: self.n,
            nonzero_fraction: self.nonzero_fraction,
            noise_variance: self.noise_variance,
            switch_at: self.switch_at,
            seed: self.seed,
            ..Default::default()
        }
    }

    pub fn lorenz_config(&self) -> LorenzConfig {
        LorenzConfig {
            dt: self.dt,
            t_end: self.t_end,
            process_noise_std: [self.noise_std; 3],
            seed: self.seed,
            coefficients: self.lorenz_coefficients,
            noise_placement: self.noise_placement,
            ..Default::default()
        }
    }

    /// Input path, required to exist unless it is stdin.
    pub fn input_path(&self) -> Result<&Path, CliError> {
        let path = self
            .input
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("--input is required in {:?} mode", self.mode)))?;
        if !is_stdin(path) && !path.is_file() {
            return Err(CliError::Config(format!("input {} does not exist", path.display())));
        }
        Ok(path)
    }

    pub fn check_truth_path(&self) -> Result<(), CliError> {
        match &self.truth {
            Some(p) if !p.is_file() => Err(CliError::Config(format!("truth file {} does not exist", p.display()))),
            _ => Ok(()),
        }
    }

    pub fn check_output_dir(&self) -> Result<(), CliError> {
        if self.output.exists() && !self.output.is_dir() {
            return Err(CliError::Config(format!("output {} is not a directory", self.output.display())));
        }
        Ok(())
    }
}

pub fn is_stdin(path: &Path) -> bool {
    path.as_os_str() == "-"
}

fn read_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
}
