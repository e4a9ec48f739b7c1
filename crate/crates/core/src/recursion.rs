//! Online windowed recursion with probability division and forgetting.
//!
//! Each accepted step applies, block by block,
//!
//! ```text
//! S ← ξ·S + σ⁻²·(Ψ_newᵀΨ_new − Ψ_oldᵀΨ_old) + (1 − ξ)·θ⁻¹
//! b ← ξ·b + σ⁻²·(Ψ_newᵀY_new − Ψ_oldᵀY_old)
//! ```
//!
//! where "old" are the `k` oldest buffered samples. The `(1 − ξ)·θ⁻¹` term
//! keeps the prior from being discounted away so that `S ⪰ θ⁻¹` holds at
//! every step.
//!
//! The buffer holds at most `υ` samples. When `ι > k` the surplus oldest
//! samples leave the buffer without being divided out; their information
//! stays in `S` and decays through `ξ` only.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dictionary::{DictionarySpec, Sample};
use crate::error::{BrslError, Result};
use crate::gaussian::{symmetrize, InformationForm};
use crate::monitor::{self, UtilityReport};
use crate::posterior::{
    data_statistics, fit_adaptive, refresh_horseshoe_with, validate_samples, HorseshoeMode,
    HorseshoeState, NoiseModel, PosteriorState, RefreshSettings,
};

/// What to do with a batch that fails the recursive condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ViolationPolicy {
    /// Drop the batch; the posterior is unchanged.
    Reject,
    /// Apply the batch anyway and flag the step.
    #[default]
    Warn,
    /// Hold the batch and merge it with the next one.
    Defer,
}

impl FromStr for ViolationPolicy {
    type Err = BrslError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reject" => Ok(Self::Reject),
            "warn" => Ok(Self::Warn),
            "defer" => Ok(Self::Defer),
            other => Err(BrslError::InvalidConfig(format!("unknown policy {other:?}"))),
        }
    }
}

impl fmt::Display for ViolationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Reject => "reject",
            Self::Warn => "warn",
            Self::Defer => "defer",
        })
    }
}

/// Where the recursive condition is evaluated relative to the `ξ` discount.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConditionTiming {
    /// On `Ψ_newᵀΨ_new − Ψ_oldᵀΨ_old` alone.
    #[default]
    PreDiscount,
    /// On the net change of data information per output,
    /// `σ⁻²·(Ψ_newᵀΨ_new − Ψ_oldᵀΨ_old) − (1 − ξ)·(S − θ⁻¹)`.
    PostDiscount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecursionConfig {
    /// Window length `υ` (buffer capacity).
    pub window: usize,
    /// New samples per update `ι`.
    pub batch_in: usize,
    /// Old samples divided out per update `k`.
    pub forget: usize,
    /// Forgetting factor `ξ ∈ (0, 1]`.
    pub forgetting_factor: f64,
    pub violation_policy: ViolationPolicy,
    pub horseshoe_mode: HorseshoeMode,
    /// Accepted steps between horseshoe refreshes; `None` means one window
    /// refill, `⌈υ/ι⌉`.
    pub refresh_every: Option<usize>,
    /// Refresh/correct rounds per scheduled refresh.
    pub refresh_iterations: usize,
    /// Refresh/refit rounds on the warmup window.
    pub warmup_iterations: usize,
    pub condition_timing: ConditionTiming,
    pub refresh_settings: RefreshSettings,
}

impl Default for RecursionConfig {
    fn default() -> Self {
        Self {
            window: 200,
            batch_in: 10,
            forget: 10,
            forgetting_factor: 1.0,
            violation_policy: ViolationPolicy::Warn,
            horseshoe_mode: HorseshoeMode::Adaptive,
            refresh_every: None,
            refresh_iterations: 1,
            warmup_iterations: 10,
            condition_timing: ConditionTiming::PreDiscount,
            refresh_settings: RefreshSettings::default(),
        }
    }
}

impl RecursionConfig {
    pub fn validate(&self, n_terms: usize) -> Result<()> {
        let bad = |m: String| Err(BrslError::InvalidConfig(m));
        if self.window == 0 {
            return bad("window must be at least 1".into());
        }
        if self.forget > self.window {
            return bad(format!("forget {} exceeds window {}", self.forget, self.window));
        }
        if !(self.forgetting_factor > 0.0 && self.forgetting_factor <= 1.0) {
            return bad(format!("forgetting factor {} outside (0, 1]", self.forgetting_factor));
        }
        if self.window + self.batch_in <= self.forget + n_terms {
            return bad(format!(
                "window + batch_in - forget = {} must exceed the {} dictionary terms",
                self.window as i64 + self.batch_in as i64 - self.forget as i64,
                n_terms
            ));
        }
        if self.refresh_every == Some(0) {
            return bad("refresh_every must be positive".into());
        }
        Ok(())
    }

    pub fn refresh_period(&self) -> usize {
        self.refresh_every
            .unwrap_or_else(|| self.window.div_ceil(self.batch_in.max(1)))
            .max(1)
    }
}

/// FIFO ring of the most recent samples.
#[derive(Debug, Clone)]
pub struct WindowBuffer {
    samples: VecDeque<Sample>,
    capacity: usize,
    total_ingested: u64,
}

impl WindowBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            samples: VecDeque::with_capacity(capacity),
            capacity,
            total_ingested: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total_ingested(&self) -> u64 {
        self.total_ingested
    }

    pub fn iter(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter()
    }

    pub fn last_timestamp(&self) -> Option<f64> {
        self.samples.back().map(|s| s.timestamp)
    }

    /// Appends a sample, returning whatever falls off the front.
    pub fn push(&mut self, sample: Sample) -> Option<Sample> {
        self.total_ingested += 1;
        let evicted = if self.samples.len() == self.capacity {
            self.samples.pop_front()
        } else {
            None
        };
        self.samples.push_back(sample);
        evicted
    }

    pub fn pop_oldest(&mut self, k: usize) -> Vec<Sample> {
        let k = k.min(self.samples.len());
        self.samples.drain(..k).collect()
    }

    pub fn to_vec(&self) -> Vec<Sample> {
        self.samples.iter().cloned().collect()
    }
}

/// Result of one call to [`RecursionState::step`].
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub step: u64,
    /// Timestamp of the newest sample involved.
    pub timestamp: f64,
    pub accepted: bool,
    /// Applied even though the recursive condition failed.
    pub flagged: bool,
    /// Held back for the next call.
    pub deferred: bool,
    /// Horseshoe scales were refreshed after this step.
    pub refreshed: bool,
    pub reason: Option<String>,
    pub utility: UtilityReport,
    pub posterior_before: u64,
    pub posterior_after: u64,
    pub new_samples: usize,
    pub forgotten: usize,
    pub wall_time: Duration,
}

/// Estimator state: window buffer plus current posterior.
#[derive(Debug, Clone)]
pub struct RecursionState {
    spec: Arc<DictionarySpec>,
    config: RecursionConfig,
    buffer: WindowBuffer,
    posterior: Arc<PosteriorState>,
    pending: Vec<Sample>,
    version: u64,
    steps: u64,
    accepted_since_refresh: usize,
    init_report: UtilityReport,
}

impl RecursionState {
    /// Fits the last `υ` warmup samples in batch and fills the buffer.
    ///
    /// The warmup block must satisfy the recursive condition
    /// `Ψᵀ(1:υ)Ψ(1:υ) − Ψᵀ(1:k)Ψ(1:k) ≻ 0`. A violation is an error under the
    /// `reject` and `defer` policies; under `warn` the state is created and
    /// [`RecursionState::init_report`] carries the failing eigenvalues.
    pub fn init(
        spec: Arc<DictionarySpec>,
        config: RecursionConfig,
        warmup: &[Sample],
        noise: NoiseModel,
        horseshoe: HorseshoeState,
    ) -> Result<Self> {
        config.validate(spec.n_terms())?;
        if warmup.len() < config.window {
            return Err(BrslError::InsufficientWarmup {
                needed: config.window,
                got: warmup.len(),
            });
        }
        validate_samples(&spec, noise.n_outputs(), warmup)?;
        check_increasing(warmup, None)?;
        let window = &warmup[warmup.len() - config.window..];
        let all: Vec<&[f64]> = window.iter().map(|s| s.state.as_slice()).collect();
        let report = monitor::utility(&spec, &all, &all[..config.forget])?;
        if !report.is_informative() && config.violation_policy != ViolationPolicy::Warn {
            return Err(BrslError::ConditionViolated(format!(
                "warmup window is {} (smallest kappa {:e})",
                report.classification.as_str(),
                report.kappa_min()
            )));
        }
        let iterations = match config.horseshoe_mode {
            HorseshoeMode::Adaptive => config.warmup_iterations,
            HorseshoeMode::Fixed => 0,
        };
        let posterior = fit_adaptive(&spec, window, &noise, &horseshoe, iterations)?;
        let mut buffer = WindowBuffer::new(config.window);
        for s in window {
            buffer.push(s.clone());
        }
        Ok(Self {
            spec,
            config,
            buffer,
            posterior: Arc::new(posterior),
            pending: Vec::new(),
            version: 0,
            steps: 0,
            accepted_since_refresh: 0,
            init_report: report,
        })
    }

    pub fn config(&self) -> &RecursionConfig {
        &self.config
    }

    pub fn spec(&self) -> &Arc<DictionarySpec> {
        &self.spec
    }

    pub fn buffer(&self) -> &WindowBuffer {
        &self.buffer
    }

    /// Samples currently held in the window, oldest first.
    pub fn window_samples(&self) -> Vec<Sample> {
        self.buffer.to_vec()
    }

    pub fn pending(&self) -> &[Sample] {
        &self.pending
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn init_report(&self) -> &UtilityReport {
        &self.init_report
    }

    /// Immutable view of the current posterior.
    pub fn snapshot(&self) -> Arc<PosteriorState> {
        Arc::clone(&self.posterior)
    }

    /// Advances the recursion by one batch of new samples.
    ///
    /// Malformed input (wrong dimensions, non-increasing timestamps) is an
    /// error and leaves the state untouched. Condition violations are routed
    /// through the configured policy and reported in the outcome.
    pub fn step(&mut self, new_samples: Vec<Sample>) -> Result<StepOutcome> {
        let started = Instant::now();
        validate_samples(&self.spec, self.posterior.n_outputs(), &new_samples)?;
        let after = self.pending.last().map(|s| s.timestamp).or(self.buffer.last_timestamp());
        check_increasing(&new_samples, after)?;

        let mut batch = std::mem::take(&mut self.pending);
        batch.extend(new_samples);
        self.steps += 1;

        let k = self.config.forget.min(self.buffer.len());
        let old: Vec<Sample> = self.buffer.iter().take(k).cloned().collect();
        let new_states: Vec<&[f64]> = batch.iter().map(|s| s.state.as_slice()).collect();
        let old_states: Vec<&[f64]> = old.iter().map(|s| s.state.as_slice()).collect();
        let utility = monitor::utility(&self.spec, &new_states, &old_states)?;

        let n_out = self.posterior.n_outputs();
        let (g_new, c_new) = data_statistics(&self.spec, n_out, &batch)?;
        let (g_old, c_old) = data_statistics(&self.spec, n_out, &old)?;
        let d_gram = symmetrize(g_new - g_old);

        let gate = match self.config.condition_timing {
            ConditionTiming::PreDiscount => utility.clone(),
            ConditionTiming::PostDiscount => self.post_discount_report(&d_gram, utility.tolerance),
        };

        let before = self.version;
        let timestamp = batch
            .last()
            .map(|s| s.timestamp)
            .or(self.buffer.last_timestamp())
            .unwrap_or(0.0);
        let mut outcome = StepOutcome {
            step: self.steps,
            timestamp,
            accepted: false,
            flagged: false,
            deferred: false,
            refreshed: false,
            reason: None,
            utility,
            posterior_before: before,
            posterior_after: before,
            new_samples: batch.len(),
            forgotten: 0,
            wall_time: Duration::ZERO,
        };

        if !gate.is_informative() {
            let why = format!(
                "recursive condition failed: batch is {} (smallest kappa {:e}, tolerance {:e})",
                gate.classification.as_str(),
                gate.kappa_min(),
                gate.tolerance
            );
            match self.config.violation_policy {
                ViolationPolicy::Reject => {
                    outcome.reason = Some(why);
                    outcome.wall_time = started.elapsed();
                    return Ok(outcome);
                }
                ViolationPolicy::Defer => {
                    outcome.deferred = true;
                    outcome.reason = Some(why);
                    self.pending = batch;
                    outcome.wall_time = started.elapsed();
                    return Ok(outcome);
                }
                ViolationPolicy::Warn => {
                    outcome.flagged = true;
                    outcome.reason = Some(why);
                }
            }
        }

        let xi = self.config.forgetting_factor;
        let post = &self.posterior;
        let candidate = (0..n_out)
            .map(|j| {
                let w = post.noise().precision(j);
                let block = &post.blocks()[j];
                let prior = DMatrix::from_diagonal(&post.horseshoe().block_precision(j));
                let s = block.info_matrix() * xi + &d_gram * w + prior * (1.0 - xi);
                let b = block.info_vector() * xi + (c_new.column(j) - c_old.column(j)) * w;
                InformationForm::new(symmetrize(s), b)
            })
            .collect::<Result<Vec<_>>>()
            .and_then(|blocks| {
                PosteriorState::from_blocks(
                    Arc::clone(&self.spec),
                    post.noise().clone(),
                    post.horseshoe().clone(),
                    blocks,
                    (post.sample_count() + batch.len()).saturating_sub(k),
                )
            });
        let updated = match candidate {
            Ok(p) => p,
            Err(e) => {
                // Never publish an improper posterior, whatever the policy.
                outcome.flagged = false;
                outcome.reason = Some(format!("update rejected: {e}"));
                outcome.wall_time = started.elapsed();
                return Ok(outcome);
            }
        };

        self.buffer.pop_oldest(k);
        for s in batch {
            self.buffer.push(s);
        }
        self.posterior = Arc::new(updated);
        self.version += 1;
        self.accepted_since_refresh += 1;
        outcome.accepted = true;
        outcome.forgotten = k;

        if self.config.horseshoe_mode == HorseshoeMode::Adaptive
            && self.accepted_since_refresh >= self.config.refresh_period()
        {
            outcome.refreshed = self.refresh();
            self.accepted_since_refresh = 0;
        }
        outcome.posterior_after = self.version;
        outcome.wall_time = started.elapsed();
        Ok(outcome)
    }

    /// Re-estimates the horseshoe scales and corrects the information
    /// matrix by the change in prior precision. Returns whether any round
    /// was applied.
    pub fn refresh(&mut self) -> bool {
        let mut applied = false;
        for _ in 0..self.config.refresh_iterations.max(1) {
            let hs = refresh_horseshoe_with(&self.posterior, &self.config.refresh_settings);
            match self.posterior.with_horseshoe(hs) {
                Ok(p) => {
                    self.posterior = Arc::new(p);
                    applied = true;
                }
                Err(_) => break,
            }
        }
        if applied {
            self.version += 1;
        }
        applied
    }

    fn post_discount_report(&self, d_gram: &DMatrix<f64>, tolerance: f64) -> UtilityReport {
        let xi = self.config.forgetting_factor;
        let post = &self.posterior;
        (0..post.n_outputs())
            .map(|j| {
                let prior = DMatrix::from_diagonal(&post.horseshoe().block_precision(j));
                let data = post.blocks()[j].info_matrix() - prior;
                let net = d_gram * post.noise().precision(j) - data * (1.0 - xi);
                monitor::report_from_differential(symmetrize(net), tolerance)
            })
            .min_by(|a, b| a.kappa_min().total_cmp(&b.kappa_min()))
            .expect("at least one output")
    }
}

fn check_increasing(samples: &[Sample], after: Option<f64>) -> Result<()> {
    let mut prev = after;
    for s in samples {
        if let Some(p) = prev {
            if s.timestamp <= p {
                return Err(BrslError::TimestampMismatch(format!(
                    "timestamp {} does not follow {}",
                    s.timestamp, p
                )));
            }
        }
        prev = Some(s.timestamp);
    }
    Ok(())
}
