//! Synthetic data for the two reference scenarios: sparse linear-Gaussian
//! regression (optionally with one abrupt coefficient switch) and the Lorenz
//! system with time-varying coefficients.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dictionary::{DictionarySpec, Sample};
use crate::error::{BrslError, Result};

const STREAM_COEFFICIENTS: u64 = 0;
const STREAM_INPUTS: u64 = 1;
const STREAM_NOISE: u64 = 2;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw on the half-open interval `(lo, hi]`.
fn uniform_left_open<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    lo + (hi - lo) * (1.0 - u)
}

/// Ground-truth coefficients, piecewise constant between segment starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSegment {
    pub start: f64,
    /// Indexed by output, then by dictionary term.
    pub coefficients: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTrajectory {
    pub labels: Vec<String>,
    pub segments: Vec<TruthSegment>,
}

impl CoefficientTrajectory {
    /// Index of the segment in force at `t`, if `t` is not before the first.
    pub fn segment_index(&self, t: f64) -> Option<usize> {
        let idx = self.segments.partition_point(|s| s.start <= t);
        idx.checked_sub(1)
    }

    pub fn at(&self, t: f64) -> Option<&TruthSegment> {
        self.segment_index(t).map(|i| &self.segments[i])
    }

    /// Count of non-zero coefficients in every segment.
    pub fn nonzero_counts(&self) -> Vec<usize> {
        self.segments
            .iter()
            .map(|s| s.coefficients.iter().flatten().filter(|c| **c != 0.0).count())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SparseRegressionConfig {
    pub dim_m: usize,
    pub n_samples: usize,
    pub nonzero_fraction: f64,
    pub nonzero_range: (f64, f64),
    pub noise_variance: f64,
    pub input_range: (f64, f64),
    /// Sample index at which a second, independently drawn coefficient
    /// vector takes over.
    pub switch_at: Option<usize>,
    pub seed: u64,
}

impl Default for SparseRegressionConfig {
    fn default() -> Self {
        Self {
            dim_m: 50,
            n_samples: 600,
            nonzero_fraction: 0.30,
            nonzero_range: (5.0, 10.0),
            noise_variance: 0.1,
            input_range: (-0.5, 0.5),
            switch_at: None,
            seed: 0,
        }
    }
}

impl SparseRegressionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BrslError::InvalidConfig(m));
        if self.dim_m == 0 || self.n_samples == 0 {
            return bad("dim_m and n_samples must be positive".into());
        }
        if !(self.nonzero_fraction > 0.0 && self.nonzero_fraction <= 1.0) {
            return bad(format!("nonzero_fraction {} outside (0, 1]", self.nonzero_fraction));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return bad(format!("noise_variance {} must be finite and >= 0", self.noise_variance));
        }
        for (lo, hi) in [self.nonzero_range, self.input_range] {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return bad(format!("empty interval ({lo}, {hi}]"));
            }
        }
        if let Some(s) = self.switch_at {
            if s == 0 || s >= self.n_samples {
                return bad(format!("switch_at {s} outside 1..{}", self.n_samples));
            }
        }
        Ok(())
    }

    /// Number of non-zero coefficients per regime.
    pub fn nonzero_count(&self) -> usize {
        (self.nonzero_fraction * self.dim_m as f64).round() as usize
    }

    /// The matching dictionary: the raw inputs, no bias.
    pub fn dictionary(&self) -> Result<DictionarySpec> {
        DictionarySpec::polynomial(self.dim_m, 1, false)
    }
}

#[derive(Debug, Clone)]
pub struct SparseRegressionData {
    /// `n × m` design.
    pub x: DMatrix<f64>,
    /// `n × 1` responses.
    pub y: DMatrix<f64>,
    pub truth: CoefficientTrajectory,
}

impl SparseRegressionData {
    /// One sample per row, timestamped by row index.
    pub fn samples(&self) -> Vec<Sample> {
        (0..self.x.nrows())
            .map(|i| {
                Sample::new(
                    i as f64,
                    self.x.row(i).iter().copied().collect(),
                    self.y.row(i).iter().copied().collect(),
                )
            })
            .collect()
    }
}

fn draw_sparse_coefficients<R: Rng>(rng: &mut R, config: &SparseRegressionConfig) -> Vec<f64> {
    let mut beta = vec![0.0; config.dim_m];
    let (lo, hi) = config.nonzero_range;
    for i in index::sample(rng, config.dim_m, config.nonzero_count()).into_iter() {
        beta[i] = uniform_left_open(rng, lo, hi);
    }
    beta
}

/// Draws `y ~ N(Xβ, σ²I)` with uniform inputs and a sparse `β`.
pub fn gen_sparse_regression(config: &SparseRegressionConfig) -> Result<SparseRegressionData> {
    config.validate()?;
    let mut coef_rng = stream_rng(config.seed, STREAM_COEFFICIENTS);
    let mut input_rng = stream_rng(config.seed, STREAM_INPUTS);
    let mut noise_rng = stream_rng(config.seed, STREAM_NOISE);

    let first = draw_sparse_coefficients(&mut coef_rng, config);
    let mut segments = vec![TruthSegment {
        start: 0.0,
        coefficients: vec![first],
    }];
    if let Some(s) = config.switch_at {
        segments.push(TruthSegment {
            start: s as f64,
            coefficients: vec![draw_sparse_coefficients(&mut coef_rng, config)],
        });
    }

    let (lo, hi) = config.input_range;
    let (n, m) = (config.n_samples, config.dim_m);
    let mut x = DMatrix::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            x[(i, j)] = uniform_left_open(&mut input_rng, lo, hi);
        }
    }

    let sd = config.noise_variance.sqrt();
    let mut y = DMatrix::zeros(n, 1);
    for (seg_idx, seg) in segments.iter().enumerate() {
        let start = seg.start as usize;
        let end = segments.get(seg_idx + 1).map_or(n, |s| s.start as usize);
        let beta = DVector::from_column_slice(&seg.coefficients[0]);
        let rows = x.rows(start, end - start) * beta;
        y.view_mut((start, 0), (end - start, 1)).copy_from(&rows);
    }
    if sd > 0.0 {
        for v in y.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut noise_rng);
            *v += sd * z;
        }
    }
    let labels = config.dictionary()?.labels().to_vec();
    Ok(SparseRegressionData {
        x,
        y,
        truth: CoefficientTrajectory { labels, segments },
    })
}

/// Time-varying Lorenz coefficients `(k1, k3)`.
pub fn lorenz_coefficients(t: f64) -> (f64, f64) {
    (0.5 * (0.1 * t).sin() + 10.0, (0.1 * t).atan() + 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LorenzCoefficients {
    #[default]
    TimeVarying,
    Constant { k1: f64, k3: f64 },
}

impl LorenzCoefficients {
    pub fn at(&self, t: f64) -> (f64, f64) {
        match *self {
            LorenzCoefficients::TimeVarying => lorenz_coefficients(t),
            LorenzCoefficients::Constant { k1, k3 } => (k1, k3),
        }
    }
}

/// Where the process noise enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoisePlacement {
    /// Added to the observed derivatives; the integrated path is clean.
    #[default]
    Targets,
    /// Added to the integrated path (additive Euler–Maruyama increment).
    Path,
    /// Drives the path as in `Path` and, independently drawn, corrupts the
    /// observed derivatives as in `Targets`.
    Both,
}

/// How the regression targets are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeSource {
    /// The right-hand side evaluated at the sampled state.
    #[default]
    Exact,
    /// Central differences of the sampled path.
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LorenzConfig {
    pub x0: [f64; 3],
    pub dt: f64,
    pub t_end: f64,
    pub process_noise_std: [f64; 3],
    pub seed: u64,
    pub coefficients: LorenzCoefficients,
    pub noise_placement: NoisePlacement,
    pub derivative_source: DerivativeSource,
}

impl Default for LorenzConfig {
    fn default() -> Self {
        Self {
            x0: [-8.0, 7.0, 27.0],
            dt: 0.01,
            t_end: 100.0,
            process_noise_std: [1.0; 3],
            seed: 0,
            coefficients: LorenzCoefficients::TimeVarying,
            noise_placement: NoisePlacement::Targets,
            derivative_source: DerivativeSource::Exact,
        }
    }
}

impl LorenzConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(BrslError::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(BrslError::InvalidConfig(format!("t_end must be positive, got {}", self.t_end)));
        }
        if self.process_noise_std.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(BrslError::InvalidConfig("process noise std must be finite and >= 0".into()));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(BrslError::InvalidConfig("x0 must be finite".into()));
        }
        Ok(())
    }

    /// Number of integration steps; the trajectory has one more sample.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Lorenz right-hand side with coefficients `(k1, k3)`.
pub fn lorenz_rhs(x: &[f64; 3], k1: f64, k3: f64) -> [f64; 3] {
    [
        k1 * (x[1] - x[0]),
        x[0] * (28.0 - x[2]) - x[1],
        x[0] * x[1] - k3 * x[2],
    ]
}

fn rk4_step(t: f64, x: &[f64; 3], dt: f64, coeffs: &LorenzCoefficients) -> [f64; 3] {
    let f = |t: f64, x: &[f64; 3]| {
        let (k1, k3) = coeffs.at(t);
        lorenz_rhs(x, k1, k3)
    };
    let add = |x: &[f64; 3], k: &[f64; 3], h: f64| [x[0] + h * k[0], x[1] + h * k[1], x[2] + h * k[2]];
    let a = f(t, x);
    let b = f(t + dt / 2.0, &add(x, &a, dt / 2.0));
    let c = f(t + dt / 2.0, &add(x, &b, dt / 2.0));
    let d = f(t + dt, &add(x, &c, dt));
    [
        x[0] + dt / 6.0 * (a[0] + 2.0 * b[0] + 2.0 * c[0] + d[0]),
        x[1] + dt / 6.0 * (a[1] + 2.0 * b[1] + 2.0 * c[1] + d[1]),
        x[2] + dt / 6.0 * (a[2] + 2.0 * b[2] + 2.0 * c[2] + d[2]),
    ]
}

/// True coefficients of the three Lorenz equations in the degree-2
/// dictionary over three variables with bias, indexed `[output][term]`.
pub fn lorenz_true_coefficients(spec: &DictionarySpec, k1: f64, k3: f64) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; spec.n_terms()]; 3];
    let mut set = |o: usize, exps: [u32; 3], v: f64| {
        if let Some(i) = spec.monomial_index(&exps) {
            out[o][i] = v;
        }
    };
    set(0, [1, 0, 0], -k1);
    set(0, [0, 1, 0], k1);
    set(1, [1, 0, 0], 28.0);
    set(1, [0, 1, 0], -1.0);
    set(1, [1, 0, 1], -1.0);
    set(2, [1, 1, 0], 1.0);
    set(2, [0, 0, 1], -k3);
    out
}

#[derive(Debug, Clone)]
pub struct LorenzData {
    pub samples: Vec<Sample>,
    /// Truth in the degree-2 dictionary, one segment per sample time.
    pub truth: CoefficientTrajectory,
}

/// Integrates the Lorenz system with classical RK4 and returns states with
/// (noisy) derivative observations.
pub fn simulate_lorenz(config: &LorenzConfig) -> Result<LorenzData> {
    config.validate()?;
    let n = config.n_steps();
    let dt = config.dt;
    let mut noise_rng = stream_rng(config.seed, STREAM_NOISE);
    let normal3 = |rng: &mut ChaCha8Rng| -> [f64; 3] {
        let mut z = [0.0; 3];
        for (zi, sd) in z.iter_mut().zip(config.process_noise_std) {
            let e: f64 = StandardNormal.sample(rng);
            *zi = sd * e;
        }
        z
    };

    let mut path = Vec::with_capacity(n + 1);
    let mut x = config.x0;
    path.push(x);
    for i in 0..n {
        let t = i as f64 * dt;
        x = rk4_step(t, &x, dt, &config.coefficients);
        if matches!(config.noise_placement, NoisePlacement::Path | NoisePlacement::Both) {
            let z = normal3(&mut noise_rng);
            for (xi, zi) in x.iter_mut().zip(z) {
                *xi += dt.sqrt() * zi;
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(BrslError::NonFiniteState((i + 1) as f64 * dt));
        }
        path.push(x);
    }

    let spec = DictionarySpec::polynomial(3, 2, true)?;
    let mut samples = Vec::with_capacity(n + 1);
    let mut segments = Vec::with_capacity(n + 1);
    for (i, xi) in path.iter().enumerate() {
        let t = i as f64 * dt;
        let (k1, k3) = config.coefficients.at(t);
        let mut y = match config.derivative_source {
            DerivativeSource::Exact => lorenz_rhs(xi, k1, k3),
            DerivativeSource::FiniteDifference => finite_difference(&path, i, dt),
        };
        if matches!(config.noise_placement, NoisePlacement::Targets | NoisePlacement::Both) {
            let z = normal3(&mut noise_rng);
            for (yi, zi) in y.iter_mut().zip(z) {
                *yi += zi;
            }
        }
        samples.push(Sample::new(t, xi.to_vec(), y.to_vec()));
        segments.push(TruthSegment {
            start: t,
            coefficients: lorenz_true_coefficients(&spec, k1, k3),
        });
    }
    Ok(LorenzData {
        samples,
        truth: CoefficientTrajectory {
            labels: spec.labels().to_vec(),
            segments,
        },
    })
}

fn finite_difference(path: &[[f64; 3]], i: usize, dt: f64) -> [f64; 3] {
    let last = path.len() - 1;
    let (a, b, h) = if last == 0 {
        return [0.0; 3];
    } else if i == 0 {
        (0, 1, dt)
    } else if i == last {
        (last - 1, last, dt)
    } else {
        (i - 1, i + 1, 2.0 * dt)
    };
    [
        (path[b][0] - path[a][0]) / h,
        (path[b][1] - path[a][1]) / h,
        (path[b][2] - path[a][2]) / h,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_rule() {
        let cfg = SparseRegressionConfig {
            dim_m: 10,
            n_samples: 20,
            seed: 4,
            ..Default::default()
        };
        let data = gen_sparse_regression(&cfg).unwrap();
        let beta = &data.truth.segments[0].coefficients[0];
        let nz: Vec<f64> = beta.iter().copied().filter(|b| *b != 0.0).collect();
        assert_eq!(nz.len(), 3);
        assert!(nz.iter().all(|b| *b > 5.0 && *b <= 10.0));
        assert!(data.x.iter().all(|v| *v > -0.5 && *v <= 0.5));
    }

    #[test]
    fn noiseless_is_exact() {
        let cfg = SparseRegressionConfig {
            dim_m: 8,
            n_samples: 30,
            noise_variance: 0.0,
            seed: 11,
            ..Default::default()
        };
        let data = gen_sparse_regression(&cfg).unwrap();
        let beta = DVector::from_column_slice(&data.truth.segments[0].coefficients[0]);
        assert_eq!(data.y.column(0).into_owned(), &data.x * beta);
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SparseRegressionConfig {
            dim_m: 12,
            n_samples: 40,
            switch_at: Some(20),
            seed: 99,
            ..Default::default()
        };
        let a = gen_sparse_regression(&cfg).unwrap();
        let b = gen_sparse_regression(&cfg).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.truth.segments.len(), 2);
        assert_eq!(a.truth.nonzero_counts(), vec![4, 4]);
    }

    #[test]
    fn noise_toggle_keeps_coefficients() {
        let mut cfg = SparseRegressionConfig {
            dim_m: 12,
            n_samples: 10,
            seed: 5,
            ..Default::default()
        };
        let a = gen_sparse_regression(&cfg).unwrap();
        cfg.noise_variance = 0.0;
        let b = gen_sparse_regression(&cfg).unwrap();
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.x, b.x);
    }

    #[test]
    fn coefficient_formulas() {
        assert_eq!(lorenz_coefficients(0.0), (10.0, 3.0));
        for i in 0..1000 {
            let (k1, _) = lorenz_coefficients(i as f64 * 0.37);
            assert!((9.5..=10.5).contains(&k1));
        }
        let (_, k3) = lorenz_coefficients(1e9);
        assert!((k3 - (3.0 + std::f64::consts::FRAC_PI_2)).abs() < 1e-7);
    }

    #[test]
    fn rhs_at_initial_state() {
        let (k1, k3) = lorenz_coefficients(0.0);
        assert_eq!(lorenz_rhs(&[-8.0, 7.0, 27.0], k1, k3), [150.0, -15.0, -137.0]);
    }

    #[test]
    fn truth_trajectory_lookup() {
        let traj = CoefficientTrajectory {
            labels: vec!["x1".into()],
            segments: vec![
                TruthSegment { start: 0.0, coefficients: vec![vec![1.0]] },
                TruthSegment { start: 5.0, coefficients: vec![vec![2.0]] },
            ],
        };
        assert_eq!(traj.segment_index(-1.0), None);
        assert_eq!(traj.segment_index(4.9), Some(0));
        assert_eq!(traj.segment_index(5.0), Some(1));
    }

    #[test]
    fn invalid_configs() {
        let cfg = LorenzConfig { dt: 0.0, ..Default::default() };
        assert!(simulate_lorenz(&cfg).is_err());
        let cfg = SparseRegressionConfig { nonzero_fraction: 0.0, ..Default::default() };
        assert!(gen_sparse_regression(&cfg).is_err());
    }

    #[test]
    fn blow_up_is_reported() {
        let cfg = LorenzConfig {
            dt: 0.5,
            t_end: 50.0,
            process_noise_std: [0.0; 3],
            ..Default::default()
        };
        assert!(matches!(simulate_lorenz(&cfg), Err(BrslError::NonFiniteState(_))));
    }
}
