//! Diagnostics over posterior snapshots: estimation error against a known
//! truth, the drift tracking bound, per-term contributions and plain-text
//! equations.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{BrslError, Result};
use crate::posterior::PosteriorState;
use crate::simulate::CoefficientTrajectory;

/// Relative jump in the true coefficients that counts as a regime switch.
/// Smooth drift (for example the Lorenz coefficients sampled every `dt`)
/// stays far below it.
pub const REGIME_SWITCH_RELATIVE_JUMP: f64 = 0.1;

/// Posterior means at one instant, indexed `[output][term]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEstimate {
    pub timestamp: f64,
    pub means: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub timestamp: f64,
    /// `‖μ − β*‖₂` over every output and term.
    pub error_norm: f64,
    /// `|μ − β*|` indexed `[output][term]`.
    pub abs_errors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTrace {
    /// Sorted by timestamp.
    pub records: Vec<ErrorRecord>,
    /// Indices into `records` at which the true coefficients jumped.
    pub regime_switches: Vec<usize>,
}

impl ErrorTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn norms(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.error_norm).collect()
    }
}

/// Scores each estimate against the truth in force at its timestamp.
pub fn score_errors(estimates: &[TimedEstimate], truth: &CoefficientTrajectory) -> Result<ErrorTrace> {
    let mut sorted: Vec<&TimedEstimate> = estimates.iter().collect();
    sorted.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));

    let mut records = Vec::with_capacity(sorted.len());
    let mut regime_switches = Vec::new();
    let mut previous: Option<&Vec<Vec<f64>>> = None;
    for (idx, est) in sorted.into_iter().enumerate() {
        let seg = truth.at(est.timestamp).ok_or_else(|| {
            BrslError::TimestampMismatch(format!(
                "estimate at t={} precedes the first truth segment",
                est.timestamp
            ))
        })?;
        let star = &seg.coefficients;
        if star.len() != est.means.len() || star.iter().zip(&est.means).any(|(a, b)| a.len() != b.len()) {
            return Err(BrslError::DimensionMismatch(format!(
                "estimate at t={} does not match the truth layout",
                est.timestamp
            )));
        }
        let abs_errors: Vec<Vec<f64>> = est
            .means
            .iter()
            .zip(star)
            .map(|(m, s)| m.iter().zip(s).map(|(a, b)| (a - b).abs()).collect())
            .collect();
        let error_norm = abs_errors.iter().flatten().map(|e| e * e).sum::<f64>().sqrt();
        if let Some(prev) = previous {
            if is_jump(prev, star) {
                regime_switches.push(idx);
            }
        }
        previous = Some(star);
        records.push(ErrorRecord {
            timestamp: est.timestamp,
            error_norm,
            abs_errors,
        });
    }
    Ok(ErrorTrace {
        records,
        regime_switches,
    })
}

fn is_jump(prev: &[Vec<f64>], next: &[Vec<f64>]) -> bool {
    let diff: f64 = prev
        .iter()
        .flatten()
        .zip(next.iter().flatten())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let base: f64 = prev.iter().flatten().map(|a| a * a).sum::<f64>().sqrt();
    diff > REGIME_SWITCH_RELATIVE_JUMP * base.max(f64::MIN_POSITIVE)
}

/// Asymptotic bound `δ·H/(1 − ξ)` on the tracking error when the true
/// coefficients move by at most `δ` per step.
pub fn tracking_bound(delta: f64, xi: f64, h: f64) -> Result<f64> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(BrslError::Domain(format!("xi must lie in (0, 1), got {xi}")));
    }
    if !(delta >= 0.0 && delta.is_finite()) || !(h >= 0.0 && h.is_finite()) {
        return Err(BrslError::Domain(format!(
            "delta and h must be finite and non-negative, got {delta} and {h}"
        )));
    }
    Ok(delta * h / (1.0 - xi))
}

/// Running estimate of `Ĥ = max_t ‖Ξ_{t+1}·Ξ_t⁻¹‖₂` over observed posteriors.
/// This is an empirical surrogate, not the constant of the bound itself.
#[derive(Debug, Clone, Default)]
pub struct EmpiricalH {
    previous: Option<Vec<DMatrix<f64>>>,
    max: f64,
    observations: usize,
}

impl EmpiricalH {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feeds the next posterior and returns the current maximum.
    pub fn observe(&mut self, post: &PosteriorState) -> f64 {
        let infos: Vec<DMatrix<f64>> = post.blocks().iter().map(|b| b.info_matrix().clone()).collect();
        if let Some(prev) = &self.previous {
            for (j, s_prev) in prev.iter().enumerate() {
                let product = post.covariance(j) * s_prev;
                let norm = product.singular_values().max();
                self.max = self.max.max(norm);
            }
        }
        self.previous = Some(infos);
        self.observations += 1;
        self.max
    }

    /// `None` until two posteriors have been observed.
    pub fn value(&self) -> Option<f64> {
        (self.observations >= 2).then_some(self.max)
    }
}

/// Additive decomposition of the predictive mean over dictionary terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionRecord {
    pub labels: Vec<String>,
    /// `ψ_j(x)·μ_j`, indexed `[output][term]`.
    pub raw: Vec<Vec<f64>>,
    /// `(ψ_j(x) − ψ̄_j)·μ_j` against a background mean `ψ̄`; all zeros
    /// when no background was supplied.
    pub centered: Vec<Vec<f64>>,
    /// `Σ_j ψ̄_j·μ_j` per output, so that `Σ centered + offset` is the
    /// prediction.
    pub centered_offset: Vec<f64>,
    /// Per-output sum of `raw` in term order.
    pub prediction: Vec<f64>,
}

impl ContributionRecord {
    /// Term indices for one output sorted by decreasing `|raw|`.
    pub fn ranked_terms(&self, output: usize) -> Vec<usize> {
        let c = &self.raw[output];
        let mut idx: Vec<usize> = (0..c.len()).collect();
        idx.sort_by(|a, b| c[*b].abs().total_cmp(&c[*a].abs()).then(a.cmp(b)));
        idx
    }
}

/// Exact per-term contributions at `state`. With a non-empty `background`
/// the centered variant uses its mean dictionary row as the baseline.
pub fn contributions<S: AsRef<[f64]>>(
    post: &PosteriorState,
    state: &[f64],
    background: &[S],
) -> Result<ContributionRecord> {
    let spec = post.spec();
    let row = spec.build_row(state)?;
    let n_p = spec.n_terms();
    let baseline = if background.is_empty() {
        None
    } else {
        let mut acc = nalgebra::DVector::zeros(n_p);
        for s in background {
            acc += spec.build_row(s.as_ref())?;
        }
        Some(acc / background.len() as f64)
    };

    let means = post.means();
    let mut raw = Vec::with_capacity(post.n_outputs());
    let mut centered = Vec::with_capacity(post.n_outputs());
    let mut centered_offset = Vec::with_capacity(post.n_outputs());
    let mut prediction = Vec::with_capacity(post.n_outputs());
    for j in 0..post.n_outputs() {
        let mu = means.column(j);
        let r: Vec<f64> = (0..n_p).map(|i| row[i] * mu[i]).collect();
        prediction.push(r.iter().sum());
        match &baseline {
            Some(base) => {
                centered.push((0..n_p).map(|i| (row[i] - base[i]) * mu[i]).collect());
                centered_offset.push((0..n_p).map(|i| base[i] * mu[i]).sum());
            }
            None => {
                centered.push(vec![0.0; n_p]);
                centered_offset.push(0.0);
            }
        }
        raw.push(r);
    }
    Ok(ContributionRecord {
        labels: spec.labels().to_vec(),
        raw,
        centered,
        centered_offset,
        prediction,
    })
}

/// Formats `v` with four significant digits, switching to exponent notation
/// outside `[1e-4, 1e6)`.
pub fn format_sig4(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let a = v.abs();
    if !(1e-4..1e6).contains(&a) {
        return format!("{v:.3e}");
    }
    let mut decimals = (3 - a.log10().floor() as i32).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // Rounding can carry into a new leading digit (9.9996 -> 10.000).
    let digits = s.trim_start_matches('-').replace('.', "");
    if digits.trim_start_matches('0').len() > 4 && decimals > 0 {
        decimals -= 1;
        return format!("{v:.decimals$}");
    }
    s
}

fn term_text(label: &str, coef: &str) -> String {
    if label == "1" {
        coef.to_string()
    } else {
        format!("{coef}·{label}")
    }
}

/// One line per output listing the terms whose posterior mean has magnitude
/// at least `threshold`, in dictionary order.
pub fn render_equations(post: &PosteriorState, threshold: f64) -> Result<Vec<String>> {
    render(post, threshold, false)
}

/// Like [`render_equations`] with each coefficient shown as
/// `(mean ± std)`.
pub fn render_equations_with_uncertainty(post: &PosteriorState, threshold: f64) -> Result<Vec<String>> {
    render(post, threshold, true)
}

fn render(post: &PosteriorState, threshold: f64, with_std: bool) -> Result<Vec<String>> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(BrslError::Domain(format!("threshold must be >= 0, got {threshold}")));
    }
    let labels = post.spec().labels();
    let means = post.means();
    let stds = post.std_devs();
    let mut lines = Vec::with_capacity(post.n_outputs());
    for j in 0..post.n_outputs() {
        let mut body = String::new();
        for (i, label) in labels.iter().enumerate() {
            let m = means[(i, j)];
            if m.abs() < threshold || m == 0.0 {
                continue;
            }
            let text = if with_std {
                term_text(label, &format!("({} ± {})", format_sig4(m), format_sig4(stds[(i, j)])))
            } else {
                term_text(label, &format_sig4(m.abs()))
            };
            if with_std {
                if !body.is_empty() {
                    body.push_str(" + ");
                }
            } else if body.is_empty() {
                if m < 0.0 {
                    body.push('-');
                }
            } else {
                body.push_str(if m < 0.0 { " - " } else { " + " });
            }
            body.push_str(&text);
        }
        if body.is_empty() {
            body.push('0');
        }
        lines.push(format!("dx{}/dt = {}", j + 1, body));
    }
    Ok(lines)
}
