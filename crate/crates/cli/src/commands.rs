use std::collections::VecDeque;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use brsl::analyze::{contributions, render_equations, render_equations_with_uncertainty, score_errors};
use brsl::io::{write_contributions_csv, write_error_trace_csv, write_json, write_samples_csv, CsvLayout};
use brsl::monitor::{check_pe, utility, PeReport};
use brsl::pipeline::{run_fit, FitSummary, Threading};
use brsl::simulate::{gen_sparse_regression, simulate_lorenz, CoefficientTrajectory};
use brsl::{DictionarySpec, Sample};
use serde::Serialize;

use crate::config::{Case, RunConfig};
use crate::error::CliError;
use crate::input;

/// Creates its file (and parent directories) on first use, so a run that
/// fails before producing output leaves nothing behind.
struct LazyFile {
    path: PathBuf,
    file: Option<BufWriter<File>>,
}

impl LazyFile {
    fn new(path: PathBuf) -> Self {
        Self { path, file: None }
    }

    fn get(&mut self) -> io::Result<&mut BufWriter<File>> {
        if self.file.is_none() {
            if let Some(dir) = self.path.parent() {
                fs::create_dir_all(dir)?;
            }
            self.file = Some(BufWriter::new(File::create(&self.path)?));
        }
        Ok(self.file.as_mut().expect("just opened"))
    }

    fn finish(mut self) -> io::Result<()> {
        self.get()?.flush()
    }
}

impl Write for LazyFile {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.get()?.write(buf)
    }

    fn flush(&mut self) -> io::Result<()> {
        match &mut self.file {
            Some(f) => f.flush(),
            None => Ok(()),
        }
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.check_output_dir()?;
    let (samples, truth) = match cfg.case {
        Case::Case1 => {
            let sim = cfg.sparse_config();
            sim.validate()?;
            let data = gen_sparse_regression(&sim)?;
            (data.samples(), data.truth)
        }
        Case::Lorenz => {
            let sim = cfg.lorenz_config();
            sim.validate()?;
            let data = simulate_lorenz(&sim)?;
            (data.samples, data.truth)
        }
    };
    let mut data = create(&cfg.output, "data.csv")?;
    write_samples_csv(&mut data, &samples)?;
    data.flush()?;
    let mut truth_file = create(&cfg.output, "truth.json")?;
    write_json(&mut truth_file, &truth)?;
    truth_file.flush()?;
    eprintln!(
        "wrote {} samples and {} truth segments to {} (nonzero coefficients at t0: {})",
        samples.len(),
        truth.segments.len(),
        cfg.output.display(),
        truth.nonzero_counts().first().copied().unwrap_or(0)
    );
    Ok(())
}

/// Batch `fit` (read to end of file) and `stream` (tail until idle).
pub fn fit(cfg: &RunConfig, streaming: bool) -> Result<(), CliError> {
    let path = cfg.input_path()?;
    cfg.check_truth_path()?;
    cfg.check_output_dir()?;
    let lines = if streaming {
        input::tail_lines(path, Duration::from_millis(cfg.idle_timeout_ms))?
    } else {
        input::read_lines(path)?
    };
    let (layout, rows) = input::samples(lines)?;
    let settings = cfg.fit_settings();
    settings.validate(&layout)?;
    let spec = settings.dictionary(&layout)?;
    let truth = cfg.truth.as_deref().map(|p| load_truth(p, &spec, &layout)).transpose()?;

    let threading = if cfg.single_thread { Threading::SingleThread } else { Threading::Pipelined };
    let mut steps = LazyFile::new(cfg.output.join("steps.jsonl"));
    let summary = run_fit(&settings, layout, rows, &mut steps, threading)?;
    steps.finish()?;

    write_reports(cfg, &summary, truth.as_ref())?;
    eprintln!(
        "{} steps, {} accepted; outputs in {}",
        summary.steps,
        summary.accepted,
        cfg.output.display()
    );
    Ok(())
}

fn load_truth(path: &Path, spec: &DictionarySpec, layout: &CsvLayout) -> Result<CoefficientTrajectory, CliError> {
    let truth: CoefficientTrajectory = brsl::io::read_json(File::open(path)?)?;
    if truth.labels != spec.labels() {
        return Err(CliError::Config(format!(
            "truth terms {:?} do not match the dictionary {:?}; check --degree and --bias",
            truth.labels,
            spec.labels()
        )));
    }
    if truth.segments.iter().any(|s| s.coefficients.len() != layout.n_outputs) {
        return Err(CliError::Config("truth has a different number of outputs than the input".into()));
    }
    Ok(truth)
}

fn write_reports(cfg: &RunConfig, summary: &FitSummary, truth: Option<&CoefficientTrajectory>) -> Result<(), CliError> {
    let post = &summary.posterior;
    let mut eq = create(&cfg.output, "equations.txt")?;
    for line in render_equations(post, cfg.threshold)? {
        writeln!(eq, "{line}")?;
    }
    writeln!(eq)?;
    for line in render_equations_with_uncertainty(post, cfg.threshold)? {
        writeln!(eq, "{line}")?;
    }
    eq.flush()?;

    if let Some(truth) = truth {
        let trace = score_errors(&summary.estimates, truth)?;
        let mut out = create(&cfg.output, "errors.csv")?;
        write_error_trace_csv(&mut out, &trace, &truth.labels)?;
        out.flush()?;
    }

    let background: Vec<&[f64]> = summary.window.iter().map(|s| s.state.as_slice()).collect();
    let rows = summary
        .window
        .iter()
        .map(|s| Ok((s.timestamp, contributions(post, &s.state, &background)?)))
        .collect::<brsl::Result<Vec<_>>>()?;
    let mut out = create(&cfg.output, "contributions.csv")?;
    write_contributions_csv(&mut out, &rows)?;
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct MonitorRecord {
    step: u64,
    timestamp: f64,
    classification: &'static str,
    kappa_min: f64,
    kappa_max: f64,
    kappa_tolerance: f64,
    kappas: Vec<f64>,
    new_samples: usize,
    forgotten: usize,
    pe: PeReport,
}

/// Runs the information checks over the sliding window without estimating
/// anything.
pub fn monitor(cfg: &RunConfig) -> Result<(), CliError> {
    let path = cfg.input_path()?;
    cfg.check_output_dir()?;
    if !(cfg.alpha1 >= 0.0 && cfg.alpha1.is_finite()) {
        return Err(CliError::Config(format!("alpha1 must be finite and >= 0, got {}", cfg.alpha1)));
    }
    let (layout, rows) = input::samples(input::read_lines(path)?)?;
    let settings = cfg.fit_settings();
    settings.validate(&layout)?;
    let spec = Arc::new(settings.dictionary(&layout)?);
    let rec = &settings.recursion;

    let mut rows = rows;
    let mut window: VecDeque<Sample> = VecDeque::with_capacity(rec.window + rec.batch_in);
    for row in rows.by_ref().take(rec.window) {
        window.push_back(row?);
    }
    if window.len() < rec.window {
        return Err(brsl::BrslError::InsufficientWarmup {
            needed: rec.window,
            got: window.len(),
        }
        .into());
    }

    let mut out = LazyFile::new(cfg.output.join("monitor.jsonl"));
    let mut batch = Vec::with_capacity(rec.batch_in);
    let mut step = 0u64;
    for row in rows {
        batch.push(row?);
        if batch.len() < rec.batch_in {
            continue;
        }
        step += 1;
        let forgotten = rec.forget.min(window.len());
        let old: Vec<&[f64]> = window.iter().take(forgotten).map(|s| s.state.as_slice()).collect();
        let new: Vec<&[f64]> = batch.iter().map(|s| s.state.as_slice()).collect();
        let report = utility(&spec, &new, &old)?;
        let n_new = new.len();
        window.drain(..forgotten);
        window.extend(batch.drain(..));
        while window.len() > rec.window {
            window.pop_front();
        }
        let states: Vec<&[f64]> = window.iter().map(|s| s.state.as_slice()).collect();
        let record = MonitorRecord {
            step,
            timestamp: window.back().map_or(f64::NAN, |s| s.timestamp),
            classification: report.classification.as_str(),
            kappa_min: report.kappa_min(),
            kappa_max: report.kappa_max(),
            kappa_tolerance: report.tolerance,
            kappas: report.kappas.clone(),
            new_samples: n_new,
            forgotten,
            pe: check_pe(&spec, &states, cfg.alpha1)?,
        };
        serde_json::to_writer(&mut out, &record).map_err(io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.finish()?;
    eprintln!("{step} monitor records in {}", cfg.output.display());
    Ok(())
}
