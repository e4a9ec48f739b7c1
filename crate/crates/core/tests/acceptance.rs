//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

use std::sync::Arc;
use std::time::{Duration, Instant};

use brsl::analyze::{contributions, tracking_bound};
use brsl::dictionary::{DictionarySpec, Sample};
use brsl::gaussian::{
    divide_gaussian, divide_information, multiply_information, sorted_eigenvalues, InformationForm, Moment1D,
};
use brsl::io::{read_samples_csv, write_samples_csv};
use brsl::monitor::{self, Classification};
use brsl::pipeline::{run_fit, FitSettings, Threading};
use brsl::posterior::{batch_fit, HorseshoeMode, HorseshoeState, NoiseModel};
use brsl::recursion::{RecursionConfig, RecursionState, ViolationPolicy};
use brsl::simulate::{gen_sparse_regression, lorenz_coefficients, simulate_lorenz, LorenzConfig, SparseRegressionConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// Induced ∞-norm: largest absolute row sum.
fn norm_inf(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn random_spd<R: Rng>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(d, d) * 0.5
}

fn random_info<R: Rng>(rng: &mut R, d: usize) -> InformationForm {
    let s = random_spd(rng, d);
    let b = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
    InformationForm::new(s, b).unwrap()
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut exact = true;
    for _ in 0..1000 {
        let d = rng.random_range(1..=5);
        let a = random_info(&mut rng, d);
        let b = random_info(&mut rng, d);
        let back = divide_information(&multiply_information(&a, &b).unwrap(), &b).unwrap();
        worst = worst
            .max((back.info_matrix() - a.info_matrix()).amax())
            .max((back.info_vector() - a.info_vector()).amax());

        let v2 = rng.random_range(0.1..5.0);
        let num = Moment1D::new(rng.random_range(-3.0..3.0), rng.random_range(0.01..v2 * 0.99)).unwrap();
        let den = Moment1D::new(rng.random_range(-3.0..3.0), v2).unwrap();
        let m = divide_gaussian(&num, &den).unwrap();
        let q = divide_information(&num.to_information(), &den.to_information()).unwrap();
        let (s3, b3) = (q.info_matrix()[(0, 0)], q.info_vector()[0]);
        exact &= m.variance() == 1.0 / s3 && m.mean() == b3 / s3;
    }
    let elapsed = start.elapsed();
    verdict(
        worst < 1e-12 && exact && within(elapsed, 1.0),
        format!("max roundtrip error {worst:.2e}, 1-D agreement exact={exact}, {elapsed:.2?}"),
    )
}

/// Literal dense form: `Ψ = I⊗Ψ_d`, `W = Σ_p⁻¹⊗I_t`, `S = ΨᵀWΨ + diag(θ⁻¹)`.
fn dense_oracle(psi_d: &DMatrix<f64>, y: &DMatrix<f64>, variances: &[f64], theta_inv: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let (t, n_p) = psi_d.shape();
    let n_y = variances.len();
    let eye_y = DMatrix::<f64>::identity(n_y, n_y);
    let psi = eye_y.kronecker(psi_d);
    let sigma_inv = DMatrix::from_diagonal(&DVector::from_iterator(n_y, variances.iter().map(|v| 1.0 / v)));
    let w = sigma_inv.kronecker(&DMatrix::<f64>::identity(t, t));
    let s = psi.transpose() * &w * &psi + DMatrix::from_diagonal(theta_inv);
    let vec_y = DVector::from_column_slice(y.as_slice());
    let b = psi.transpose() * &w * vec_y;
    let mu = s.clone().lu().solve(&b).unwrap();
    assert_eq!(mu.len(), n_p * n_y);
    (s, mu)
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n_x = rng.random_range(1..=3);
        let degree = rng.random_range(1..=2);
        let spec = DictionarySpec::polynomial(n_x, degree, rng.random_bool(0.5)).unwrap();
        if spec.n_terms() > 6 {
            continue;
        }
        let spec = Arc::new(spec);
        let n_p = spec.n_terms();
        let n_y = rng.random_range(1..=3);
        let t = rng.random_range(1..=40);
        let samples: Vec<Sample> = (0..t)
            .map(|i| {
                Sample::new(
                    i as f64,
                    (0..n_x).map(|_| rng.random_range(-1.5..1.5)).collect(),
                    (0..n_y).map(|_| rng.random_range(-3.0..3.0)).collect(),
                )
            })
            .collect();
        let variances: Vec<f64> = (0..n_y).map(|_| rng.random_range(0.1..2.0)).collect();
        let local = DMatrix::from_fn(n_p, n_y, |_, _| rng.random_range(0.2..3.0));
        let hs = HorseshoeState::new(local, rng.random_range(0.5..2.0)).unwrap();
        let noise = NoiseModel::new(variances.clone()).unwrap();
        let post = batch_fit(&spec, &samples, &noise, &hs).unwrap();

        let states: Vec<&[f64]> = samples.iter().map(|s| s.state.as_slice()).collect();
        let psi_d = spec.build_matrix(&states).unwrap();
        let y = DMatrix::from_fn(t, n_y, |i, j| samples[i].observation[j]);
        let (s, mu) = dense_oracle(&psi_d, &y, &variances, hs.prior_precision());
        worst = worst
            .max(norm_inf(&(post.info().info_matrix() - &s)))
            .max((post.mean_vec() - &mu).amax());
    }
    let elapsed = start.elapsed();
    verdict(
        worst < 1e-10 && within(elapsed, 5.0),
        format!("max |blockwise - dense| {worst:.2e}, {elapsed:.2?}"),
    )
}

fn random_stream<R: Rng>(rng: &mut R, n_x: usize, n_y: usize, n: usize) -> Vec<Sample> {
    let coef: Vec<f64> = (0..n_x * n_y).map(|_| rng.random_range(-2.0..2.0)).collect();
    (0..n)
        .map(|i| {
            let x: Vec<f64> = (0..n_x).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = (0..n_y)
                .map(|j| (0..n_x).map(|k| coef[j * n_x + k] * x[k]).sum::<f64>() + rng.random_range(-0.1..0.1))
                .collect();
            Sample::new(i as f64, x, y)
        })
        .collect()
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let layouts = [(3usize, 1usize, true), (2, 2, true), (7, 1, true), (4, 1, false)];
    let (mut worst_mu, mut worst_s, mut accepted, mut total) = (0.0f64, 0.0f64, 0usize, 0usize);
    for (n_x, degree, bias) in layouts {
        let spec = Arc::new(DictionarySpec::polynomial(n_x, degree, bias).unwrap());
        let n_y = rng.random_range(1..=3);
        let batch = rng.random_range(1..=5);
        let window = 30;
        let steps = 500;
        let data = random_stream(&mut rng, n_x, n_y, window + steps * batch);
        let noise = NoiseModel::new((0..n_y).map(|_| rng.random_range(0.2..1.0)).collect()).unwrap();
        let hs = HorseshoeState::uniform(spec.n_terms(), n_y, 1.0, 1.0).unwrap();
        let config = RecursionConfig {
            window,
            batch_in: batch,
            forget: batch,
            forgetting_factor: 1.0,
            horseshoe_mode: HorseshoeMode::Fixed,
            violation_policy: ViolationPolicy::Warn,
            ..Default::default()
        };
        let mut state = RecursionState::init(Arc::clone(&spec), config, &data[..window], noise.clone(), hs.clone()).unwrap();
        for chunk in data[window..].chunks(batch) {
            let out = state.step(chunk.to_vec()).unwrap();
            total += 1;
            if !out.accepted {
                continue;
            }
            accepted += 1;
            let rec = state.snapshot();
            let oracle = batch_fit(&spec, &state.window_samples(), &noise, &hs).unwrap();
            let s_rec = rec.info();
            let s_bat = oracle.info();
            let scale = 1.0 + norm_inf(s_bat.info_matrix());
            worst_mu = worst_mu.max((rec.mean_vec() - oracle.mean_vec()).amax());
            worst_s = worst_s.max(norm_inf(&(s_rec.info_matrix() - s_bat.info_matrix())) / scale);
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst_mu < 1e-8 && worst_s < 1e-8 && accepted == total && within(elapsed, 10.0),
        format!(
            "{accepted}/{total} steps accepted, max |dmu| {worst_mu:.2e}, max relative |dS| {worst_s:.2e}, {elapsed:.2?}"
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn fit_stream(spec: &Arc<DictionarySpec>, samples: &[Sample], config: RecursionConfig, noise: NoiseModel, hs: HorseshoeState) -> (RecursionState, Vec<brsl::StepOutcome>, Vec<Arc<brsl::PosteriorState>>) {
    let window = config.window;
    let batch = config.batch_in;
    let mut state = RecursionState::init(Arc::clone(spec), config, &samples[..window], noise, hs).unwrap();
    let mut outcomes = Vec::new();
    let mut posts = Vec::new();
    for chunk in samples[window..].chunks_exact(batch) {
        outcomes.push(state.step(chunk.to_vec()).unwrap());
        posts.push(state.snapshot());
    }
    (state, outcomes, posts)
}

fn case1_config(window: usize, batch: usize) -> RecursionConfig {
    RecursionConfig {
        window,
        batch_in: batch,
        forget: batch,
        forgetting_factor: 1.0,
        horseshoe_mode: HorseshoeMode::Adaptive,
        violation_policy: ViolationPolicy::Warn,
        ..Default::default()
    }
}

fn criterion_4() -> Verdict {
    let start = Instant::now();
    let mut worst_nz = 0.0f64;
    let mut worst_zero = 0.0f64;
    let mut failures = 0;
    for seed in 0..20 {
        let cfg = SparseRegressionConfig {
            dim_m: 50,
            n_samples: 600,
            nonzero_fraction: 0.3,
            nonzero_range: (5.0, 10.0),
            noise_variance: 0.1,
            seed,
            ..Default::default()
        };
        let data = gen_sparse_regression(&cfg).unwrap();
        let spec = Arc::new(cfg.dictionary().unwrap());
        let noise = NoiseModel::isotropic(1, 0.1).unwrap();
        let hs = HorseshoeState::uniform(50, 1, 1.0, 1.0).unwrap();
        let (state, _, _) = fit_stream(&spec, &data.samples(), case1_config(300, 20), noise, hs);
        let mu = state.snapshot().means().column(0).into_owned();
        let beta = &data.truth.segments[0].coefficients[0];
        let nz: Vec<f64> = (0..50).filter(|i| beta[*i] != 0.0).map(|i| (mu[i] - beta[i]).abs()).collect();
        let zero: Vec<f64> = (0..50).filter(|i| beta[*i] == 0.0).map(|i| mu[i].abs()).collect();
        let (m_nz, m_zero) = (median(nz), median(zero));
        if !(m_nz < 0.2 && m_zero < 0.05) {
            failures += 1;
        }
        worst_nz = worst_nz.max(m_nz);
        worst_zero = worst_zero.max(m_zero);
    }
    let elapsed = start.elapsed();
    verdict(
        failures == 0,
        format!(
            "worst per-seed median |err| on non-zeros {worst_nz:.4}, on zeros {worst_zero:.4}, {failures}/20 seeds failing, {elapsed:.2?}"
        ),
    )
}

fn moving_average(v: &[f64], w: usize) -> Vec<f64> {
    (0..v.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            v[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

fn criterion_5() -> Verdict {
    let start = Instant::now();
    let (window, batch, switch_step, total_steps) = (250usize, 10usize, 50usize, 250usize);
    let switch_sample = window + switch_step * batch;
    let cfg = SparseRegressionConfig {
        dim_m: 50,
        n_samples: window + total_steps * batch,
        switch_at: Some(switch_sample),
        seed: 5,
        ..Default::default()
    };
    let data = gen_sparse_regression(&cfg).unwrap();
    let spec = Arc::new(cfg.dictionary().unwrap());
    let noise = NoiseModel::isotropic(1, cfg.noise_variance).unwrap();
    let hs = HorseshoeState::uniform(50, 1, 1.0, 1.0).unwrap();
    let (_, outcomes, posts) = fit_stream(&spec, &data.samples(), case1_config(window, batch), noise, hs);

    let all_pd = posts
        .iter()
        .all(|p| p.blocks().iter().all(|b| b.is_positive_definite()))
        && outcomes.iter().all(|o| o.accepted);
    let post_truth = DVector::from_column_slice(&data.truth.segments[1].coefficients[0]);
    let errors: Vec<f64> = posts
        .iter()
        .skip(switch_step)
        .map(|p| (p.means().column(0) - &post_truth).norm())
        .collect();
    let smooth = moving_average(&errors, 10);
    let steady = median(smooth[smooth.len() - 50..].to_vec());
    let limit = 5 * window / batch;
    let reached = smooth.iter().position(|e| *e < 2.0 * steady);
    let pass = all_pd && reached.is_some_and(|s| s <= limit);
    verdict(
        pass,
        format!(
            "steady smoothed error {steady:.4}, below 2x after {} steps (limit {limit}), all steps proper={all_pd}, {:.2?}",
            reached.map_or("never".into(), |s| s.to_string()),
            start.elapsed()
        ),
    )
}

fn criterion_6() -> Verdict {
    let start = Instant::now();
    let lcfg = LorenzConfig {
        dt: 0.01,
        t_end: 100.0,
        process_noise_std: [1.0; 3],
        seed: 6,
        ..Default::default()
    };
    let data = simulate_lorenz(&lcfg).unwrap();
    let spec = Arc::new(DictionarySpec::polynomial(3, 2, true).unwrap());
    let noise = NoiseModel::isotropic(3, 1.0).unwrap();
    let hs = HorseshoeState::uniform(spec.n_terms(), 3, 1.0, 10.0).unwrap();
    let config = RecursionConfig {
        window: 200,
        batch_in: 10,
        forget: 10,
        forgetting_factor: 1.0,
        horseshoe_mode: HorseshoeMode::Adaptive,
        violation_policy: ViolationPolicy::Warn,
        ..Default::default()
    };
    let (_, outcomes, posts) = fit_stream(&spec, &data.samples, config, noise, hs);

    let idx = |l: &str| spec.label_index(l).unwrap();
    let supports = [
        vec![idx("x1"), idx("x2")],
        vec![idx("x1"), idx("x2"), idx("x1*x3")],
        vec![idx("x3"), idx("x1*x2")],
    ];
    let (mut k1_err, mut k3_err, mut support_misses, mut checked) = (0.0f64, 0.0f64, 0usize, 0usize);
    let mut contribution_ok = true;
    for (out, post) in outcomes.iter().zip(&posts) {
        let t = out.timestamp;
        if !(20.0..=100.0).contains(&t) {
            continue;
        }
        checked += 1;
        let mu = post.means();
        let (k1, k3) = lorenz_coefficients(t);
        k1_err = k1_err.max(((mu[(idx("x2"), 0)] - mu[(idx("x1"), 0)]) / 2.0 - k1).abs());
        k3_err = k3_err.max((-mu[(idx("x3"), 2)] - k3).abs());
        for (j, truth) in supports.iter().enumerate() {
            let mut order: Vec<usize> = (0..spec.n_terms()).collect();
            order.sort_by(|a, b| mu[(*b, j)].abs().total_cmp(&mu[(*a, j)].abs()));
            let mut top = order[..truth.len()].to_vec();
            top.sort();
            let mut want = truth.clone();
            want.sort();
            if top != want {
                support_misses += 1;
            }
        }
    }
    if let Some(last) = posts.last() {
        let state = &data.samples.last().unwrap().state;
        let rec = contributions(last, state, &[] as &[Vec<f64>]).unwrap();
        let mut top2 = rec.ranked_terms(0)[..2].to_vec();
        top2.sort();
        contribution_ok = top2 == vec![idx("x1"), idx("x2")];
    }
    // Spread of each state over the last 200 samples: near zero means the
    // trajectory has settled on an equilibrium and carries no excitation.
    let tail = &data.samples[data.samples.len() - 200..];
    let spread: Vec<String> = (0..3)
        .map(|d| {
            let m = tail.iter().map(|s| s.state[d]).sum::<f64>() / tail.len() as f64;
            let v = tail.iter().map(|s| (s.state[d] - m).powi(2)).sum::<f64>() / tail.len() as f64;
            format!("{:.1e}", v.sqrt())
        })
        .collect();
    let elapsed = start.elapsed();
    verdict(
        support_misses == 0 && k1_err < 0.5 && k3_err < 0.5 && contribution_ok && within(elapsed, 60.0),
        format!(
            "{checked} steps in t in [20, 100]: support misses {support_misses}, max |k1 err| {k1_err:.4}, max |k3 err| {k3_err:.4}, top-2 contributions ok={contribution_ok}, final-window state std [{}], {elapsed:.2?}",
            spread.join(", ")
        ),
    )
}

fn criterion_7() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut redundant, mut degrading, mut pe_fail) = (0, 0, 0);
    let trials = 100;
    for trial in 0..trials {
        let n_x = rng.random_range(1..=3);
        let spec = Arc::new(DictionarySpec::polynomial(n_x, rng.random_range(1..=2), false).unwrap());
        let window = spec.n_terms() + 10;
        let k = rng.random_range(1..=5);
        let warm = random_stream(&mut rng, n_x, 1, window);
        let config = RecursionConfig {
            window,
            batch_in: k,
            forget: k,
            horseshoe_mode: HorseshoeMode::Fixed,
            violation_policy: ViolationPolicy::Reject,
            ..Default::default()
        };
        let hs = HorseshoeState::uniform(spec.n_terms(), 1, 1.0, 1.0).unwrap();
        let noise = NoiseModel::isotropic(1, 0.5).unwrap();
        let mut state = RecursionState::init(Arc::clone(&spec), config, &warm, noise, hs).unwrap();

        // Re-inject the states about to be forgotten.
        let t0 = window as f64;
        let dup: Vec<Sample> = warm[..k]
            .iter()
            .enumerate()
            .map(|(i, s)| Sample::new(t0 + i as f64, s.state.clone(), s.observation.clone()))
            .collect();
        let out = state.step(dup).unwrap();
        if out.utility.classification == Classification::Redundant
            && out.utility.kappa_min().abs() <= out.utility.tolerance
            && !out.accepted
        {
            redundant += 1;
        }

        // Zero dictionary rows against informative forgets.
        let zeros: Vec<Sample> = (0..k)
            .map(|i| Sample::new(t0 + 100.0 + i as f64, vec![0.0; n_x], vec![rng.random_range(-1.0..1.0)]))
            .collect();
        let out = state.step(zeros).unwrap();
        if out.utility.classification == Classification::Degrading && !out.accepted {
            degrading += 1;
        }

        // Rank-deficient windows: fewer samples than terms, or one repeated state.
        let n_p = spec.n_terms();
        let few: Vec<Vec<f64>> = (0..n_p.saturating_sub(1).max(1))
            .map(|_| (0..n_x).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let repeated = vec![few[0].clone(); 3 * n_p];
        let deficient: Vec<&Vec<Vec<f64>>> = if n_p > 1 { vec![&few, &repeated] } else { vec![] };
        let alphas = [f64::MIN_POSITIVE, 1e-300, 1e-200, 1e-100, 1e-30, 1e-15, 1e-8, 1e-3, 1.0, 1e3];
        let all_fail = deficient.iter().all(|w| {
            alphas
                .iter()
                .all(|a| !monitor::check_pe(&spec, w, *a).unwrap().satisfied)
        });
        if all_fail {
            pe_fail += 1;
        }
        let _ = trial;
    }
    verdict(
        redundant == trials && degrading == trials && pe_fail == trials,
        format!("redundant {redundant}/{trials}, degrading {degrading}/{trials}, rank-deficient PE failures {pe_fail}/{trials}"),
    )
}

fn criterion_8() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let xi: f64 = 0.95;
    let (batch, window, steps, burn_in) = (5usize, 50usize, 1200usize, 200usize);
    let spec = Arc::new(DictionarySpec::polynomial(2, 1, true).unwrap());
    let variances = [0.5, 2.0];
    let noise = NoiseModel::new(variances.to_vec()).unwrap();
    let hs = HorseshoeState::uniform(spec.n_terms(), 2, 1.0, 1e3).unwrap();
    let data = random_stream(&mut rng, 2, 2, window + steps * batch);
    let config = RecursionConfig {
        window,
        batch_in: batch,
        forget: 0,
        forgetting_factor: xi,
        horseshoe_mode: HorseshoeMode::Fixed,
        violation_policy: ViolationPolicy::Reject,
        ..Default::default()
    };
    let (_, outcomes, posts) = fit_stream(&spec, &data, config, noise, hs);
    let accepted = outcomes.iter().filter(|o| o.accepted).count();

    // Per-step excitation: ι × the per-sample window average over
    // N = 1/(1−ξ) steps.
    let n_steps = (1.0 / (1.0 - xi)).round() as usize;
    let stream = &data[window..];
    let (mut a1, mut a2) = (f64::INFINITY, 0.0f64);
    for start in 0..=(steps - n_steps) {
        let states: Vec<&[f64]> = stream[start * batch..(start + n_steps) * batch]
            .iter()
            .map(|s| s.state.as_slice())
            .collect();
        let pe = monitor::check_pe(&spec, &states, 0.0).unwrap();
        a1 = a1.min(pe.min_avg_eig * batch as f64);
        a2 = a2.max(pe.max_avg_eig * batch as f64);
    }
    let prec: Vec<f64> = variances.iter().map(|v| 1.0 / v).collect();
    let (p_min, p_max) = (prec.iter().cloned().fold(f64::INFINITY, f64::min), prec.iter().cloned().fold(0.0, f64::max));
    let lower = p_min * a1 / (1.0 - xi) * 0.9;
    let upper = p_max * a2 / (1.0 - xi) * 1.1;
    let (mut lo_seen, mut hi_seen) = (f64::INFINITY, 0.0f64);
    for post in posts.iter().skip(burn_in) {
        for block in post.blocks() {
            let ev = sorted_eigenvalues(block.info_matrix());
            lo_seen = lo_seen.min(ev[0]);
            hi_seen = hi_seen.max(*ev.last().unwrap());
        }
    }
    verdict(
        accepted == steps && lo_seen >= lower && hi_seen <= upper,
        format!(
            "{accepted}/{steps} accepted; eigenvalues in [{lo_seen:.3}, {hi_seen:.3}], band with slack [{lower:.3}, {upper:.3}]"
        ),
    )
}

fn criterion_9() -> Verdict {
    let cfg = SparseRegressionConfig {
        dim_m: 10,
        n_samples: 400,
        seed: 9,
        ..Default::default()
    };
    let data = gen_sparse_regression(&cfg).unwrap();
    let mut csv = Vec::new();
    write_samples_csv(&mut csv, &data.samples()).unwrap();
    let settings = FitSettings {
        recursion: RecursionConfig {
            window: 100,
            batch_in: 10,
            forget: 10,
            refresh_every: Some(3),
            ..Default::default()
        },
        ..Default::default()
    };
    let run = |threading| {
        let (layout, samples) = read_samples_csv(csv.as_slice()).unwrap();
        let mut out = Vec::new();
        run_fit(&settings, layout, samples.into_iter().map(Ok), &mut out, threading).unwrap();
        out
    };
    let a = run(Threading::Pipelined);
    let b = run(Threading::Pipelined);
    let c = run(Threading::SingleThread);
    let lines = String::from_utf8_lossy(&a).lines().count();
    verdict(
        a == b && a == c && lines == 30,
        format!("{lines} JSONL lines, repeat identical={}, single-thread identical={}", a == b, a == c),
    )
}

fn main() {
    // The tracking bound helper is exercised here only as a sanity check on
    // the closed form used in the reports.
    assert_eq!(tracking_bound(0.0, 0.5, 1.0).unwrap(), 0.0);

    type Criterion = (&'static str, fn() -> Verdict);
    let criteria: [Criterion; 9] = [
        ("gaussian algebra roundtrip", criterion_1),
        ("blockwise posterior equals dense oracle", criterion_2),
        ("recursion equals sliding-window batch fit", criterion_3),
        ("sparse regression recovery over 20 seeds", criterion_4),
        ("regime switch reconvergence", criterion_5),
        ("lorenz structure and coefficient tracking", criterion_6),
        ("monitor classification and excitation", criterion_7),
        ("information eigenvalue band under forgetting", criterion_8),
        ("deterministic fit output", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let v = f();
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {} [{}] {}: {}",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            name,
            v.detail
        );
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
