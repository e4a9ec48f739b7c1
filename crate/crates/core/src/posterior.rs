//! Batch Bayesian regression over the dictionary with a horseshoe-induced
//! Gaussian prior.
//!
//! With a diagonal output-noise covariance the information matrix
//! `Σ_p⁻¹ ⊗ ΨᵀΨ + θ⁻¹` is block diagonal, one `n_p × n_p` block per output,
//! so every posterior is stored and solved blockwise. Coefficients are
//! vectorized column-major: entry `(i, j)` of the `n_p × n_y` coefficient
//! matrix sits at `j·n_p + i`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dictionary::{DictionarySpec, Sample};
use crate::error::{BrslError, Result};
use crate::gaussian::{symmetrize, InformationForm};

/// Diagonal output-noise covariance `Σ_p = diag(σᵢ²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    output_variances: Vec<f64>,
}

impl NoiseModel {
    pub fn new(output_variances: Vec<f64>) -> Result<Self> {
        if output_variances.is_empty() {
            return Err(BrslError::InvalidConfig("noise model needs at least one output".into()));
        }
        if output_variances.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(BrslError::InvalidConfig(format!(
                "noise variances must be finite and positive, got {output_variances:?}"
            )));
        }
        Ok(Self { output_variances })
    }

    pub fn isotropic(n_outputs: usize, variance: f64) -> Result<Self> {
        Self::new(vec![variance; n_outputs])
    }

    pub fn n_outputs(&self) -> usize {
        self.output_variances.len()
    }

    pub fn variances(&self) -> &[f64] {
        &self.output_variances
    }

    pub fn precision(&self, output: usize) -> f64 {
        1.0 / self.output_variances[output]
    }

    pub fn min_precision(&self) -> f64 {
        self.output_variances.iter().map(|v| 1.0 / v).fold(f64::INFINITY, f64::min)
    }

    pub fn max_precision(&self) -> f64 {
        self.output_variances.iter().map(|v| 1.0 / v).fold(0.0, f64::max)
    }
}

/// Whether horseshoe scales are re-estimated or held at their initial values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HorseshoeMode {
    #[default]
    Adaptive,
    Fixed,
}

/// Local scales `λᵢⱼ`, global scale `τ` and the implied prior precision
/// `1/(λᵢⱼ²τ²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorseshoeState {
    local_scales: DMatrix<f64>,
    global_scale: f64,
    prior_precision: DVector<f64>,
    /// Terms whose local scales are never refreshed.
    pinned_terms: Vec<bool>,
}

impl HorseshoeState {
    pub fn new(local_scales: DMatrix<f64>, global_scale: f64) -> Result<Self> {
        if local_scales.is_empty() {
            return Err(BrslError::InvalidConfig("horseshoe state has no coefficients".into()));
        }
        check_scale(global_scale)?;
        for &l in local_scales.iter() {
            check_scale(l)?;
        }
        let pinned_terms = vec![false; local_scales.nrows()];
        let mut state = Self {
            prior_precision: DVector::zeros(local_scales.len()),
            local_scales,
            global_scale,
            pinned_terms,
        };
        state.recompute_precision();
        Ok(state)
    }

    /// Every local scale set to `local`.
    pub fn uniform(n_terms: usize, n_outputs: usize, local: f64, global: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(n_terms, n_outputs, local), global)
    }

    /// Fixes the local scale of one dictionary term (all outputs) and
    /// excludes it from refreshes.
    pub fn with_term_override(mut self, term: usize, local: f64) -> Result<Self> {
        if term >= self.n_terms() {
            return Err(BrslError::DimensionMismatch(format!(
                "term {term} out of range for {} terms",
                self.n_terms()
            )));
        }
        check_scale(local)?;
        for j in 0..self.n_outputs() {
            self.local_scales[(term, j)] = local;
        }
        self.pinned_terms[term] = true;
        self.recompute_precision();
        Ok(self)
    }

    fn recompute_precision(&mut self) {
        let t2 = self.global_scale * self.global_scale;
        // Column-major iteration matches the vectorization order.
        for (p, l) in self.prior_precision.iter_mut().zip(self.local_scales.iter()) {
            *p = 1.0 / (l * l * t2);
        }
    }

    pub fn n_terms(&self) -> usize {
        self.local_scales.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.local_scales.ncols()
    }

    pub fn local_scales(&self) -> &DMatrix<f64> {
        &self.local_scales
    }

    pub fn global_scale(&self) -> f64 {
        self.global_scale
    }

    pub fn pinned_terms(&self) -> &[bool] {
        &self.pinned_terms
    }

    /// Diagonal of `θ⁻¹` in vectorization order.
    pub fn prior_precision(&self) -> &DVector<f64> {
        &self.prior_precision
    }

    /// Prior precision for the coefficients of one output.
    pub fn block_precision(&self, output: usize) -> DVector<f64> {
        let n = self.n_terms();
        self.prior_precision.rows(output * n, n).into_owned()
    }
}

fn check_scale(s: f64) -> Result<()> {
    if !s.is_finite() || s <= 0.0 {
        return Err(BrslError::InvalidConfig(format!(
            "horseshoe scales must be finite and positive, got {s}"
        )));
    }
    Ok(())
}

/// Stopping rule and clamping for [`refresh_horseshoe_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefreshSettings {
    pub tolerance: f64,
    pub max_sweeps: usize,
    pub min_scale: f64,
    pub max_scale: f64,
}

impl Default for RefreshSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_sweeps: 100,
            min_scale: 1e-6,
            max_scale: 1e6,
        }
    }
}

/// Gaussian posterior over the vectorized coefficients, stored per output
/// block in information form with the moment form cached.
#[derive(Debug, Clone)]
pub struct PosteriorState {
    spec: Arc<DictionarySpec>,
    noise: NoiseModel,
    horseshoe: HorseshoeState,
    blocks: Vec<InformationForm>,
    means: DMatrix<f64>,
    covariances: Vec<DMatrix<f64>>,
    sample_count: usize,
}

impl PosteriorState {
    /// Assembles a posterior from per-output information blocks.
    ///
    /// Every block must be positive definite; the moment form is computed
    /// here once.
    pub fn from_blocks(
        spec: Arc<DictionarySpec>,
        noise: NoiseModel,
        horseshoe: HorseshoeState,
        blocks: Vec<InformationForm>,
        sample_count: usize,
    ) -> Result<Self> {
        check_shapes(&spec, &noise, &horseshoe)?;
        if blocks.len() != noise.n_outputs() || blocks.iter().any(|b| b.dim() != spec.n_terms()) {
            return Err(BrslError::DimensionMismatch(format!(
                "expected {} blocks of dimension {}",
                noise.n_outputs(),
                spec.n_terms()
            )));
        }
        let n_p = spec.n_terms();
        let mut means = DMatrix::zeros(n_p, blocks.len());
        let mut covariances = Vec::with_capacity(blocks.len());
        for (j, block) in blocks.iter().enumerate() {
            let chol = block.cholesky()?;
            let mu = chol.solve(block.info_vector());
            if mu.iter().any(|v| !v.is_finite()) {
                return Err(BrslError::SingularInformation(format!(
                    "non-finite posterior mean for output {j}"
                )));
            }
            means.set_column(j, &mu);
            covariances.push(symmetrize(chol.inverse()));
        }
        Ok(Self {
            spec,
            noise,
            horseshoe,
            blocks,
            means,
            covariances,
            sample_count,
        })
    }

    pub fn spec(&self) -> &Arc<DictionarySpec> {
        &self.spec
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn horseshoe(&self) -> &HorseshoeState {
        &self.horseshoe
    }

    pub fn blocks(&self) -> &[InformationForm] {
        &self.blocks
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn n_terms(&self) -> usize {
        self.spec.n_terms()
    }

    pub fn n_outputs(&self) -> usize {
        self.noise.n_outputs()
    }

    /// Posterior mean as the `n_p × n_y` coefficient matrix.
    pub fn means(&self) -> &DMatrix<f64> {
        &self.means
    }

    /// Posterior mean in vectorization order.
    pub fn mean_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(self.means.as_slice())
    }

    /// Covariance block of one output.
    pub fn covariance(&self, output: usize) -> &DMatrix<f64> {
        &self.covariances[output]
    }

    /// Posterior standard deviation of every coefficient (`n_p × n_y`).
    pub fn std_devs(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_terms(), self.n_outputs(), |i, j| {
            self.covariances[j][(i, i)].max(0.0).sqrt()
        })
    }

    /// `E[β²] = μ² + Var(β)` per coefficient.
    pub fn second_moments(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_terms(), self.n_outputs(), |i, j| {
            self.means[(i, j)].powi(2) + self.covariances[j][(i, i)]
        })
    }

    /// Full block-diagonal information form of dimension `n_p·n_y`.
    pub fn info(&self) -> InformationForm {
        let n = self.n_terms();
        let d = n * self.n_outputs();
        let mut s = DMatrix::zeros(d, d);
        let mut b = DVector::zeros(d);
        for (j, block) in self.blocks.iter().enumerate() {
            s.view_mut((j * n, j * n), (n, n)).copy_from(block.info_matrix());
            b.rows_mut(j * n, n).copy_from(block.info_vector());
        }
        InformationForm::from_parts_unchecked(s, b)
    }

    /// Predictive mean and variance for every output at `state`.
    pub fn predict(&self, state: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let row = self.spec.build_row(state)?;
        let mut mean = Vec::with_capacity(self.n_outputs());
        let mut var = Vec::with_capacity(self.n_outputs());
        for j in 0..self.n_outputs() {
            mean.push(row.dot(&self.means.column(j)));
            let v = row.dot(&(&self.covariances[j] * &row));
            var.push(v.max(0.0) + self.noise.variances()[j]);
        }
        Ok((mean, var))
    }

    /// Swaps the prior, correcting the information matrix by
    /// `diag(θ_new⁻¹ − θ_old⁻¹)`.
    pub fn with_horseshoe(&self, horseshoe: HorseshoeState) -> Result<Self> {
        check_shapes(&self.spec, &self.noise, &horseshoe)?;
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(j, block)| {
                let delta = horseshoe.block_precision(j) - self.horseshoe.block_precision(j);
                let s = block.info_matrix() + DMatrix::from_diagonal(&delta);
                InformationForm::new(s, block.info_vector().clone())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_blocks(
            Arc::clone(&self.spec),
            self.noise.clone(),
            horseshoe,
            blocks,
            self.sample_count,
        )
    }

    /// Serializable summary of the posterior.
    pub fn snapshot(&self) -> PosteriorSnapshot {
        let stds = self.std_devs();
        PosteriorSnapshot {
            labels: self.spec.labels().to_vec(),
            means: columns(&self.means),
            std_devs: columns(&stds),
            local_scales: columns(self.horseshoe.local_scales()),
            global_scale: self.horseshoe.global_scale(),
            noise_variances: self.noise.variances().to_vec(),
            sample_count: self.sample_count,
        }
    }
}

fn columns(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

fn check_shapes(spec: &DictionarySpec, noise: &NoiseModel, horseshoe: &HorseshoeState) -> Result<()> {
    if horseshoe.n_terms() != spec.n_terms() || horseshoe.n_outputs() != noise.n_outputs() {
        return Err(BrslError::DimensionMismatch(format!(
            "horseshoe scales {}x{} for {} terms and {} outputs",
            horseshoe.n_terms(),
            horseshoe.n_outputs(),
            spec.n_terms(),
            noise.n_outputs()
        )));
    }
    Ok(())
}

/// JSON snapshot of a posterior. Nested vectors are indexed by output, then
/// by dictionary term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSnapshot {
    pub labels: Vec<String>,
    pub means: Vec<Vec<f64>>,
    pub std_devs: Vec<Vec<f64>>,
    pub local_scales: Vec<Vec<f64>>,
    pub global_scale: f64,
    pub noise_variances: Vec<f64>,
    pub sample_count: usize,
}

pub(crate) fn validate_samples(spec: &DictionarySpec, n_outputs: usize, samples: &[Sample]) -> Result<()> {
    for s in samples {
        if s.state.len() != spec.state_dim() || s.observation.len() != n_outputs {
            return Err(BrslError::DimensionMismatch(format!(
                "sample at t={} has state length {} and observation length {}, expected {} and {}",
                s.timestamp,
                s.state.len(),
                s.observation.len(),
                spec.state_dim(),
                n_outputs
            )));
        }
        if !s.timestamp.is_finite() || s.observation.iter().any(|v| !v.is_finite()) {
            return Err(BrslError::NonFiniteInput(format!("sample at t={}", s.timestamp)));
        }
    }
    Ok(())
}

/// Data sufficient statistics `(ΨᵀΨ, Ψᵀ Y)` over a set of samples.
pub(crate) fn data_statistics(
    spec: &DictionarySpec,
    n_outputs: usize,
    samples: &[Sample],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = spec.n_terms();
    let mut gram = DMatrix::zeros(n, n);
    let mut cross = DMatrix::zeros(n, n_outputs);
    for s in samples {
        let row = spec.build_row(&s.state)?;
        gram.ger(1.0, &row, &row, 1.0);
        for (j, y) in s.observation.iter().enumerate() {
            cross.column_mut(j).axpy(*y, &row, 1.0);
        }
    }
    Ok((gram, cross))
}

/// Posterior over the coefficients given `samples`, blockwise per output:
/// `S_j = σ_j⁻² ΨᵀΨ + diag(θ_j⁻¹)`, `b_j = σ_j⁻² Ψᵀ y_j`.
pub fn batch_fit(
    spec: &Arc<DictionarySpec>,
    samples: &[Sample],
    noise: &NoiseModel,
    horseshoe: &HorseshoeState,
) -> Result<PosteriorState> {
    if samples.is_empty() {
        return Err(BrslError::InvalidConfig("batch fit needs at least one sample".into()));
    }
    check_shapes(spec, noise, horseshoe)?;
    validate_samples(spec, noise.n_outputs(), samples)?;
    let (gram, cross) = data_statistics(spec, noise.n_outputs(), samples)?;
    let blocks = (0..noise.n_outputs())
        .map(|j| {
            let w = noise.precision(j);
            let s = &gram * w + DMatrix::from_diagonal(&horseshoe.block_precision(j));
            let b = cross.column(j) * w;
            InformationForm::new(s, b)
        })
        .collect::<Result<Vec<_>>>()?;
    PosteriorState::from_blocks(
        Arc::clone(spec),
        noise.clone(),
        horseshoe.clone(),
        blocks,
        samples.len(),
    )
}

/// Alternates `batch_fit` with horseshoe refreshes `iterations` times.
pub fn fit_adaptive(
    spec: &Arc<DictionarySpec>,
    samples: &[Sample],
    noise: &NoiseModel,
    horseshoe: &HorseshoeState,
    iterations: usize,
) -> Result<PosteriorState> {
    let mut post = batch_fit(spec, samples, noise, horseshoe)?;
    for _ in 0..iterations {
        let hs = refresh_horseshoe(&post);
        post = post.with_horseshoe(hs)?;
    }
    Ok(post)
}

/// Re-estimates the horseshoe scales from the posterior second moments with
/// default settings.
pub fn refresh_horseshoe(post: &PosteriorState) -> HorseshoeState {
    refresh_horseshoe_with(post, &RefreshSettings::default())
}

/// Deterministic fixed point on the inverse-gamma auxiliary form of the
/// half-Cauchy hierarchy:
///
/// ```text
/// λ² | ν ~ IG(½, 1/ν),  ν ~ IG(½, 1)      τ² | ζ ~ IG(½, 1/ζ),  ζ ~ IG(½, 1)
/// ```
///
/// Each scale is set to rate/shape of its conditional with `β²` replaced by
/// `E[β²] = μ² + Var(β)`. For fixed `τ` the coupled `(λ², ν)` update has the
/// closed-form root `λ² = (c + √(c² + 4c))/2` with `c = E[β²]/(2τ²)`; for
/// fixed `λ` the `(τ², ζ)` update is the positive root of
/// `a·T² + (a − 1 − s)·T − s = 0` with `a = (p+1)/2`, `s = Σ E[β²]/(2λ²)`.
/// Sweeps alternate the two until the largest relative change falls below
/// the tolerance.
pub fn refresh_horseshoe_with(post: &PosteriorState, settings: &RefreshSettings) -> HorseshoeState {
    let moments = post.second_moments();
    let mut hs = post.horseshoe.clone();
    let clamp = |v: f64| v.clamp(settings.min_scale, settings.max_scale);
    let free: Vec<(usize, usize)> = (0..hs.n_outputs())
        .flat_map(|j| (0..hs.n_terms()).map(move |i| (i, j)))
        .filter(|(i, _)| !hs.pinned_terms[*i])
        .collect();
    if free.is_empty() {
        return hs;
    }
    let a = (free.len() as f64 + 1.0) / 2.0;

    for _ in 0..settings.max_sweeps {
        let mut max_rel = 0.0f64;
        let t2 = hs.global_scale * hs.global_scale;
        for &(i, j) in &free {
            let c = moments[(i, j)] / (2.0 * t2);
            let l2 = 0.5 * (c + (c * c + 4.0 * c).sqrt());
            let new = clamp(l2.sqrt());
            let old = hs.local_scales[(i, j)];
            max_rel = max_rel.max((new - old).abs() / old);
            hs.local_scales[(i, j)] = new;
        }
        let s: f64 = free
            .iter()
            .map(|&(i, j)| moments[(i, j)] / (2.0 * hs.local_scales[(i, j)].powi(2)))
            .sum();
        let lin = a - 1.0 - s;
        let t2_new = (-lin + (lin * lin + 4.0 * a * s).sqrt()) / (2.0 * a);
        let new_tau = clamp(t2_new.sqrt());
        max_rel = max_rel.max((new_tau - hs.global_scale).abs() / hs.global_scale);
        hs.global_scale = new_tau;
        if max_rel < settings.tolerance {
            break;
        }
    }
    hs.recompute_precision();
    hs
}

/// Windowed mean squared residual per output, floored at `floor`.
pub fn estimate_noise(post: &PosteriorState, samples: &[Sample], floor: f64) -> Result<NoiseModel> {
    if samples.is_empty() {
        return Err(BrslError::InvalidConfig("noise estimate needs samples".into()));
    }
    validate_samples(&post.spec, post.n_outputs(), samples)?;
    let mut sums = vec![0.0; post.n_outputs()];
    for s in samples {
        let row = post.spec.build_row(&s.state)?;
        for (j, acc) in sums.iter_mut().enumerate() {
            let r = s.observation[j] - row.dot(&post.means.column(j));
            *acc += r * r;
        }
    }
    let n = samples.len() as f64;
    NoiseModel::new(sums.into_iter().map(|v| (v / n).max(floor)).collect())
}
