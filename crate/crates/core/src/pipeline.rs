//! End-to-end fitting over a stream of samples: warmup, batched recursion
//! steps and JSONL emission.
//!
//! The work can run on the calling thread or as three stages (ingest, step,
//! emit) joined by bounded channels. The recursion stage is the only owner
//! of the estimator, so both layouts emit identical bytes.

use std::io::Write;
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::sync::Arc;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::analyze::TimedEstimate;
use crate::dictionary::{DictionarySpec, Sample};
use crate::error::{BrslError, Result};
use crate::io::{CsvLayout, StepRecord};
use crate::monitor::UtilityReport;
use crate::posterior::{HorseshoeState, NoiseModel, PosteriorState};
use crate::recursion::{RecursionConfig, RecursionState, StepOutcome};

const QUEUE_DEPTH: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSettings {
    pub degree: usize,
    pub bias: bool,
    pub recursion: RecursionConfig,
    /// Observation noise variance, shared by all outputs.
    pub noise_variance: f64,
    /// Initial local scale `λ` for every coefficient.
    pub initial_local_scale: f64,
    /// Initial global scale `τ`.
    pub initial_global_scale: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            degree: 1,
            bias: false,
            recursion: RecursionConfig::default(),
            noise_variance: 0.1,
            initial_local_scale: 1.0,
            initial_global_scale: 1.0,
        }
    }
}

impl FitSettings {
    pub fn dictionary(&self, layout: &CsvLayout) -> Result<DictionarySpec> {
        DictionarySpec::polynomial(layout.n_states, self.degree, self.bias)
    }

    /// Checks everything that can be checked without data.
    pub fn validate(&self, layout: &CsvLayout) -> Result<()> {
        let spec = self.dictionary(layout)?;
        self.recursion.validate(spec.n_terms())?;
        NoiseModel::isotropic(layout.n_outputs, self.noise_variance)?;
        HorseshoeState::uniform(
            spec.n_terms(),
            layout.n_outputs,
            self.initial_local_scale,
            self.initial_global_scale,
        )?;
        Ok(())
    }
}

/// How the stages are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Threading {
    SingleThread,
    #[default]
    Pipelined,
}

#[derive(Debug, Clone)]
pub struct FitSummary {
    pub steps: u64,
    pub accepted: u64,
    pub init_report: UtilityReport,
    /// Posterior means after every step, for error scoring.
    pub estimates: Vec<TimedEstimate>,
    pub posterior: Arc<PosteriorState>,
    /// Buffer contents after the last step.
    pub window: Vec<Sample>,
}

struct StepMessage {
    outcome: StepOutcome,
    posterior: Arc<PosteriorState>,
    batch: Vec<Sample>,
}

/// Runs warmup plus `⌊(rows − υ)/ι⌋` steps over `rows`, writing one JSONL
/// record per step to `out`. A trailing partial batch is ignored.
pub fn run_fit<I, W>(
    settings: &FitSettings,
    layout: CsvLayout,
    rows: I,
    out: W,
    threading: Threading,
) -> Result<FitSummary>
where
    I: IntoIterator<Item = Result<Sample>>,
    I::IntoIter: Send,
    W: Write + Send,
{
    settings.validate(&layout)?;
    let mut rows = rows.into_iter();
    let spec = Arc::new(settings.dictionary(&layout)?);
    let window = settings.recursion.window;
    let mut warmup = Vec::with_capacity(window);
    for row in rows.by_ref().take(window) {
        warmup.push(row?);
    }
    let noise = NoiseModel::isotropic(layout.n_outputs, settings.noise_variance)?;
    let hs = HorseshoeState::uniform(
        spec.n_terms(),
        layout.n_outputs,
        settings.initial_local_scale,
        settings.initial_global_scale,
    )?;
    let state = RecursionState::init(spec, settings.recursion.clone(), &warmup, noise, hs)?;
    let batch_in = settings.recursion.batch_in;

    match threading {
        Threading::SingleThread => {
            let mut stepper = Stepper::new(state);
            let mut emitter = Emitter::new(out);
            for batch in Batches::new(rows, batch_in) {
                let msg = stepper.step(batch?)?;
                emitter.emit(msg)?;
            }
            emitter.finish()?;
            Ok(stepper.finish())
        }
        Threading::Pipelined => thread::scope(|scope| {
            let (batch_tx, batch_rx) = sync_channel::<Result<Vec<Sample>>>(QUEUE_DEPTH);
            let (step_tx, step_rx) = sync_channel::<StepMessage>(QUEUE_DEPTH);

            scope.spawn(move || ingest(rows, batch_in, batch_tx));
            let emit = scope.spawn(move || -> Result<()> {
                let mut emitter = Emitter::new(out);
                for msg in step_rx {
                    emitter.emit(msg)?;
                }
                emitter.finish()
            });

            let stepped = run_steps(state, batch_rx, step_tx);
            // The emitter ends once the step sender is dropped; its error
            // wins because it explains why stepping stopped early.
            let emitted = emit
                .join()
                .map_err(|_| BrslError::Io("emitter thread panicked".into()))?;
            emitted?;
            stepped
        }),
    }
}

fn ingest<I: Iterator<Item = Result<Sample>>>(rows: I, batch_in: usize, tx: SyncSender<Result<Vec<Sample>>>) {
    for batch in Batches::new(rows, batch_in) {
        let stop = batch.is_err();
        if tx.send(batch).is_err() || stop {
            return;
        }
    }
}

fn run_steps(
    state: RecursionState,
    rx: Receiver<Result<Vec<Sample>>>,
    tx: SyncSender<StepMessage>,
) -> Result<FitSummary> {
    let mut stepper = Stepper::new(state);
    for batch in rx {
        let msg = stepper.step(batch?)?;
        if tx.send(msg).is_err() {
            break;
        }
    }
    Ok(stepper.finish())
}

/// Groups rows into full batches of `size`; the remainder is dropped and the
/// first row error ends iteration.
struct Batches<I> {
    rows: I,
    size: usize,
    done: bool,
}

impl<I> Batches<I> {
    fn new(rows: I, size: usize) -> Self {
        Self { rows, size, done: false }
    }
}

impl<I: Iterator<Item = Result<Sample>>> Iterator for Batches<I> {
    type Item = Result<Vec<Sample>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut batch = Vec::with_capacity(self.size);
        for row in self.rows.by_ref() {
            match row {
                Ok(s) => {
                    batch.push(s);
                    if batch.len() == self.size {
                        return Some(Ok(batch));
                    }
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            }
        }
        self.done = true;
        None
    }
}

struct Stepper {
    state: RecursionState,
    accepted: u64,
    estimates: Vec<TimedEstimate>,
}

impl Stepper {
    fn new(state: RecursionState) -> Self {
        Self {
            state,
            accepted: 0,
            estimates: Vec::new(),
        }
    }

    fn step(&mut self, batch: Vec<Sample>) -> Result<StepMessage> {
        let outcome = self.state.step(batch.clone())?;
        if outcome.accepted {
            self.accepted += 1;
        }
        let posterior = self.state.snapshot();
        self.estimates.push(TimedEstimate {
            timestamp: outcome.timestamp,
            means: posterior.snapshot().means,
        });
        Ok(StepMessage {
            outcome,
            posterior,
            batch,
        })
    }

    fn finish(self) -> FitSummary {
        FitSummary {
            steps: self.state.steps(),
            accepted: self.accepted,
            init_report: self.state.init_report().clone(),
            estimates: self.estimates,
            posterior: self.state.snapshot(),
            window: self.state.window_samples(),
        }
    }
}

struct Emitter<W: Write> {
    out: std::io::BufWriter<W>,
}

impl<W: Write> Emitter<W> {
    fn new(out: W) -> Self {
        Self {
            out: std::io::BufWriter::new(out),
        }
    }

    fn emit(&mut self, msg: StepMessage) -> Result<()> {
        let record = StepRecord::new(&msg.outcome, &msg.posterior, &msg.batch)?;
        record.write_line(&mut self.out)
    }

    fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}
