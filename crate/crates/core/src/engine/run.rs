use std::time::Instant;

use super::{initialize, InitConfig, InitReport, Learner, StreamSettings, StreamStepReport};
use crate::data::{DenseMatrix, SparseDataset};
use crate::error::{shape_err, Result, SllError};
use crate::evaluation::{evaluate, train_br_baseline, EvalSummary};
use crate::io::StreamSchedule;
use crate::model::{ArrivalRecord, Hyperparams, ModelState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Sll,
    /// Independent ridge classifiers, no structure.
    Br,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub init: InitConfig,
    pub stream: StreamSettings,
    pub eval_ks: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            method: Method::Sll,
            init: InitConfig::default(),
            stream: StreamSettings::default(),
            eval_ks: vec![1, 3, 5],
        }
    }
}

impl RunConfig {
    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            lambda: self.stream.lambda,
            beta: self.stream.beta,
            lambda1: self.init.lambda1,
            lambda2: self.init.lambda2,
            lambda3: self.init.lambda3,
        }
    }
}

/// One row of a streaming run. Step 0 is the initial model evaluated on the
/// past labels; step `t ≥ 1` is batch `t` evaluated on its own labels.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub batch_size: usize,
    pub labels_seen: usize,
    pub eval: EvalSummary,
    pub report: Option<StreamStepReport>,
    pub lasso_time_s: f64,
    pub train_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub method: Method,
    pub init: Option<InitReport>,
    pub steps: Vec<StepRecord>,
    /// Every label seen, evaluated with the final model.
    pub final_eval: EvalSummary,
    /// Solver calls that stopped before their tolerance.
    pub unconverged: usize,
    pub state: ModelState,
}

impl RunReport {
    /// Mean of `P@k` over the arriving batches of the nominal (first) batch
    /// size where it is defined. A trailing short batch is left out.
    pub fn mean_arrived_precision(&self, k: usize) -> Option<f64> {
        let nominal = self.steps.get(1)?.batch_size;
        let vals: Vec<f64> = self
            .steps
            .iter()
            .filter(|s| s.step > 0 && s.batch_size == nominal)
            .filter_map(|s| s.eval.precision_at(k))
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

fn check_compatible(train: &SparseDataset, test: &SparseDataset, schedule: &StreamSchedule) -> Result<()> {
    if test.n_features() != train.n_features() || test.n_labels() != train.n_labels() {
        return Err(shape_err(format!(
            "train is {}x{} (features x labels), test is {}x{}",
            train.n_features(),
            train.n_labels(),
            test.n_features(),
            test.n_labels()
        )));
    }
    if schedule.n_labels() != train.n_labels() {
        return Err(shape_err(format!(
            "schedule covers {} labels, data has {}",
            schedule.n_labels(),
            train.n_labels()
        )));
    }
    Ok(())
}

/// Initial model over `schedule.initial_labels`.
fn initial_model(
    train: &SparseDataset,
    schedule: &StreamSchedule,
    cfg: &RunConfig,
) -> Result<(ModelState, Option<InitReport>, usize, f64, f64)> {
    match cfg.method {
        Method::Sll => {
            let (learner, report) = initialize(train, &schedule.initial_labels, &cfg.init, cfg.hyperparams())?;
            let bad = report.lasso_unconverged + report.train_unconverged;
            let (lt, tt) = (report.lasso_time_s, report.train_time_s);
            Ok((learner.into_state(), Some(report), bad, lt, tt))
        }
        Method::Br => {
            let t = Instant::now();
            let fit = train_br_baseline(train, &schedule.initial_labels, cfg.stream.beta, &cfg.stream.cg)?;
            let mut state = fit.state;
            state.hyper = cfg.hyperparams();
            Ok((state, None, fit.unconverged.len(), 0.0, t.elapsed().as_secs_f64()))
        }
    }
}

fn stream_from(
    train: &SparseDataset,
    test: &SparseDataset,
    schedule: &StreamSchedule,
    cfg: &RunConfig,
    state: ModelState,
    init: Option<InitReport>,
    init_unconverged: usize,
    init_times: (f64, f64),
) -> Result<RunReport> {
    let mut steps = vec![StepRecord {
        step: 0,
        batch_size: 0,
        labels_seen: state.n_labels(),
        eval: evaluate(&state, test, state.label_ids(), &cfg.eval_ks)?,
        report: None,
        lasso_time_s: init_times.0,
        train_time_s: init_times.1,
    }];
    let mut unconverged = init_unconverged;
    let mut learner = Learner::new(train, state)?;

    for (t, batch) in schedule.batches.iter().enumerate() {
        let (report, lasso_time_s, train_time_s) = match cfg.method {
            Method::Sll => {
                let r = if batch.len() == 1 {
                    learner.stream_single(batch[0], &cfg.stream)?
                } else {
                    learner.stream_batch(batch, &cfg.stream)?
                };
                if !r.converged() {
                    unconverged += 1;
                }
                let (lt, tt) = (r.lasso_time_s, r.train_time_s);
                (Some(r), lt, tt)
            }
            Method::Br => {
                let t0 = Instant::now();
                let fit = train_br_baseline(train, batch, cfg.stream.beta, &cfg.stream.cg)?;
                unconverged += fit.unconverged.len();
                let mut state = learner.into_state();
                let record = ArrivalRecord {
                    arrived: batch.clone(),
                    basis: Vec::new(),
                    coeffs: vec![Vec::new(); batch.len()],
                };
                let w: DenseMatrix = fit.state.weights().clone();
                state.register(record, &w)?;
                learner = Learner::new(train, state)?;
                (None, 0.0, t0.elapsed().as_secs_f64())
            }
        };
        steps.push(StepRecord {
            step: t + 1,
            batch_size: batch.len(),
            labels_seen: learner.state().n_labels(),
            eval: evaluate(learner.state(), test, batch, &cfg.eval_ks)?,
            report,
            lasso_time_s,
            train_time_s,
        });
    }

    let state = learner.into_state();
    let final_eval = evaluate(&state, test, state.label_ids(), &cfg.eval_ks)?;
    Ok(RunReport {
        method: cfg.method,
        init,
        steps,
        final_eval,
        unconverged,
        state,
    })
}

/// Initializes on the schedule's past labels, streams every batch in order
/// and evaluates after each one.
pub fn run_stream(
    train: &SparseDataset,
    test: &SparseDataset,
    schedule: &StreamSchedule,
    cfg: &RunConfig,
) -> Result<RunReport> {
    check_compatible(train, test, schedule)?;
    cfg.stream.validate()?;
    let (state, init, bad, lt, tt) = initial_model(train, schedule, cfg)?;
    stream_from(train, test, schedule, cfg, state, init, bad, (lt, tt))
}

/// Streams from an already initialized model; its registry must be exactly
/// the schedule's past labels.
pub fn resume_stream(
    train: &SparseDataset,
    test: &SparseDataset,
    schedule: &StreamSchedule,
    cfg: &RunConfig,
    state: ModelState,
) -> Result<RunReport> {
    check_compatible(train, test, schedule)?;
    cfg.stream.validate()?;
    let mut have = state.label_ids().to_vec();
    let mut want = schedule.initial_labels.clone();
    have.sort_unstable();
    want.sort_unstable();
    if have != want {
        return Err(shape_err("model labels do not match the schedule's initial labels"));
    }
    stream_from(train, test, schedule, cfg, state, None, 0, (0.0, 0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaSelection {
    pub chosen: f64,
    /// `(β, validation score)` in grid order.
    pub scores: Vec<(f64, f64)>,
}

/// Examples held out for hyperparameter selection: every tenth, starting at 9.
pub fn validation_split(n: usize) -> (Vec<usize>, Vec<usize>) {
    (0..n).partition(|i| i % 10 != 9)
}

/// Picks `β` from `grid` by mean validation `P@1` on the arriving labels
/// (all labels when nothing arrives). Ties keep the earlier grid value.
pub fn select_beta(train: &SparseDataset, schedule: &StreamSchedule, cfg: &RunConfig, grid: &[f64]) -> Result<BetaSelection> {
    if grid.is_empty() {
        return Err(SllError::InvalidConfig("beta grid is empty".into()));
    }
    let (fit_idx, val_idx) = validation_split(train.n_examples());
    if fit_idx.is_empty() || val_idx.is_empty() {
        return Err(SllError::InvalidConfig(format!(
            "{} training examples are too few for a validation split",
            train.n_examples()
        )));
    }
    let fit = train.subset(&fit_idx);
    let val = train.subset(&val_idx);
    let ks = [1];

    let base = match cfg.method {
        Method::Sll => {
            let (state, ..) = initial_model(&fit, schedule, cfg)?;
            Some(state)
        }
        Method::Br => None,
    };
    let mut scores = Vec::with_capacity(grid.len());
    for &beta in grid {
        let mut c = cfg.clone();
        c.stream.beta = beta;
        c.eval_ks = ks.to_vec();
        let report = match &base {
            Some(state) => {
                let mut st = state.clone();
                st.hyper.beta = beta;
                stream_from(&fit, &val, schedule, &c, st, None, 0, (0.0, 0.0))?
            }
            None => run_stream(&fit, &val, schedule, &c)?,
        };
        let score = report
            .mean_arrived_precision(1)
            .or(report.final_eval.precision_at(1))
            .unwrap_or(0.0);
        scores.push((beta, score));
    }
    let mut chosen = scores[0];
    for &s in &scores[1..] {
        if s.1 > chosen.1 {
            chosen = s;
        }
    }
    Ok(BetaSelection {
        chosen: chosen.0,
        scores,
    })
}
