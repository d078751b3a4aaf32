use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use log::info;
use serde::Serialize;

use sll_core::data::SparseDataset;
use sll_core::engine::{
    initialize, resume_stream, run_stream, select_beta, BetaSelection, InitConfig, Method, RunConfig, RunReport,
    StreamSettings,
};
use sll_core::evaluation::{evaluate, EvalSummary};
use sll_core::io::{make_schedule, parse_xmlc, write_xmlc, StreamSchedule};
use sll_core::lasso::LassoSettings;
use sll_core::model::ModelState;
use sll_core::solvers::CgConfig;
use sll_core::synthetic::{planted_dataset, PlantedSpec};
use sll_core::theory::{theorem1_terms, theorem2_sweep, Theorem1Terms, Theorem2Settings};

use crate::config::Config;
use crate::error::{CliError, EXIT_NOT_CONVERGED};

pub const DEFAULT_BETA_GRID: [f64; 3] = [0.1, 1.0, 10.0];
const CSV_KS: [usize; 3] = [1, 3, 5];

/// What a command leaves behind besides its files.
pub struct Outcome {
    pub converged: bool,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.converged {
            0
        } else {
            EXIT_NOT_CONVERGED
        }
    }
}

fn load_dataset(cfg: &Config, key: &str) -> Result<SparseDataset, CliError> {
    let path = cfg.input_path(key)?;
    let file = File::open(&path).map_err(|e| CliError::config(format!("{}: {}", path.display(), e)))?;
    parse_xmlc(BufReader::new(file)).map_err(|e| CliError::with_path(e, &path))
}

fn load_model(path: &Path) -> Result<ModelState, CliError> {
    if !path.is_file() {
        return Err(CliError::config(format!("model file not found: {}", path.display())));
    }
    let file = File::open(path).map_err(|e| CliError::config(format!("{}: {}", path.display(), e)))?;
    ModelState::load(BufReader::new(file)).map_err(|e| CliError::with_path(e, path))
}

fn save_model(state: &ModelState, path: &Path) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::config(format!("cannot create {}: {}", path.display(), e)))?;
    state.save(BufWriter::new(file))?;
    Ok(())
}

/// Writes to the path under `key`, or to stdout when it is unset.
fn output(cfg: &Config, key: &str) -> Result<Box<dyn Write>, CliError> {
    match cfg.path(key) {
        Some(p) => {
            let f = File::create(&p).map_err(|e| CliError::config(format!("cannot create {}: {}", p.display(), e)))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn write_json<T: Serialize>(cfg: &Config, key: &str, value: &T) -> Result<(), CliError> {
    let mut out = output(cfg, key)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::config(e.to_string()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn run_config(cfg: &Config, method: Method) -> Result<RunConfig, CliError> {
    let lambda = cfg.f64_or("lambda", 1.0)?;
    let lambda2 = cfg.f64_or("lambda2", 1.0)?;
    let lasso = LassoSettings {
        tol: cfg.f64_or("lasso_tol", sll_core::lasso::DEFAULT_TOL)?,
        max_sweeps: cfg.usize_or("lasso_max_sweeps", sll_core::lasso::DEFAULT_MAX_SWEEPS)?,
    };
    let cg = CgConfig {
        rel_tol: cfg.f64_or("cg_rel_tol", 1e-8)?,
        max_iters: cfg.usize_opt("cg_max_iters")?,
    };
    if !(lasso.tol > 0.0) || !(cg.rel_tol > 0.0) {
        return Err(CliError::config("lasso_tol and cg_rel_tol must be > 0"));
    }
    let init = InitConfig {
        lambda1: cfg.f64_or("lambda1", lambda)?,
        lambda2,
        lambda3: cfg.f64_or("lambda3", 10.0 * lambda2)?,
        max_alt_iters: cfg.usize_or("init_max_iters", 50)?,
        rel_obj_tol: cfg.f64_or("init_rel_tol", 1e-5)?,
        staged: cfg.bool_or("staged", false)?,
        lasso,
        cg,
    };
    init.validate()?;
    let stream = StreamSettings {
        lambda,
        beta: cfg.f64_or("beta", 1.0)?,
        dict_limit: cfg.usize_opt("dict_limit")?,
        dict_seed: cfg.u64_or("seed", 0)?,
        lasso,
        cg,
    };
    stream.validate()?;
    let mut eval_ks = cfg.usize_list_or("eval_ks", &CSV_KS)?;
    if eval_ks.iter().any(|&k| k == 0) {
        return Err(CliError::config("eval_ks entries must be >= 1"));
    }
    for k in CSV_KS {
        if !eval_ks.contains(&k) {
            eval_ks.push(k);
        }
    }
    Ok(RunConfig {
        method,
        init,
        stream,
        eval_ks,
    })
}

fn check_ks(cfg: &Config, n_labels: usize) -> Result<(), CliError> {
    if let Some(&k) = cfg.usize_list_or("eval_ks", &[])?.iter().find(|&&k| k > n_labels) {
        return Err(CliError::config(format!("eval k = {} exceeds the {} labels", k, n_labels)));
    }
    Ok(())
}

fn schedule(cfg: &Config, n_labels: usize) -> Result<StreamSchedule, CliError> {
    let ratio = cfg.f64_or("initial_ratio", 0.5)?;
    let batch = cfg.usize_or("batch_size", 15)?;
    let seed = cfg.u64_or("seed", 0)?;
    Ok(make_schedule(n_labels, ratio, batch, seed)?)
}

/// Uses `beta` when configured, otherwise the validation grid.
fn resolve_beta(
    cfg: &Config,
    train: &SparseDataset,
    sched: &StreamSchedule,
    run: &mut RunConfig,
) -> Result<Option<BetaSelection>, CliError> {
    if cfg.get("beta").is_some() {
        return Ok(None);
    }
    let grid = cfg.f64_list_or("beta_grid", &DEFAULT_BETA_GRID)?;
    if grid.iter().any(|b| !(*b > 0.0)) {
        return Err(CliError::config("beta_grid entries must be > 0"));
    }
    let sel = select_beta(train, sched, run, &grid)?;
    info!("selected beta = {} from {:?}", sel.chosen, sel.scores);
    run.stream.beta = sel.chosen;
    Ok(Some(sel))
}

pub fn cmd_convert(cfg: &Config) -> Result<Outcome, CliError> {
    let data = load_dataset(cfg, "input")?;
    let path = cfg.required_path("output")?;
    let file = File::create(&path).map_err(|e| CliError::config(format!("cannot create {}: {}", path.display(), e)))?;
    write_xmlc(&data, BufWriter::new(file))?;
    Ok(Outcome { converged: true })
}

pub fn cmd_synth(cfg: &Config) -> Result<Outcome, CliError> {
    let seed = cfg.u64_or("seed", 0)?;
    let spec = match cfg.get("preset").unwrap_or("small") {
        "small" => PlantedSpec::small(seed),
        "bibtex" => PlantedSpec::bibtex_like(seed),
        other => return Err(CliError::config(format!("unknown preset '{}' (small, bibtex)", other))),
    };
    let (train, test) = planted_dataset(&spec)?;
    for (key, data) in [("train_out", &train), ("test_out", &test)] {
        let path = cfg.required_path(key)?;
        let file = File::create(&path).map_err(|e| CliError::config(format!("cannot create {}: {}", path.display(), e)))?;
        write_xmlc(data, BufWriter::new(file))?;
    }
    Ok(Outcome { converged: true })
}

#[derive(Serialize)]
struct InitJson {
    labels: usize,
    initial_labels: Vec<usize>,
    objective_trace: Vec<f64>,
    alternations: usize,
    converged: bool,
    lasso_unconverged: usize,
    train_unconverged: usize,
}

pub fn cmd_init(cfg: &Config) -> Result<Outcome, CliError> {
    let train = load_dataset(cfg, "train")?;
    let out = cfg
        .path("model_out")
        .or_else(|| cfg.path("model"))
        .ok_or_else(|| CliError::config("missing required key 'model_out'"))?;
    let run = run_config(cfg, Method::Sll)?;
    let sched = schedule(cfg, train.n_labels())?;
    let (learner, report) = initialize(&train, &sched.initial_labels, &run.init, run.hyperparams())?;
    let state = learner.into_state();
    save_model(&state, &out)?;
    write_json(
        cfg,
        "report",
        &InitJson {
            labels: state.n_labels(),
            initial_labels: sched.initial_labels.clone(),
            objective_trace: report.objective_trace.clone(),
            alternations: report.alternations,
            converged: report.converged,
            lasso_unconverged: report.lasso_unconverged,
            train_unconverged: report.train_unconverged,
        },
    )?;
    Ok(Outcome {
        converged: report.solvers_converged(),
    })
}

#[derive(Serialize)]
struct CsvRow {
    step: usize,
    batch_size: usize,
    labels_seen: usize,
    p_at_1: Option<f64>,
    p_at_3: Option<f64>,
    p_at_5: Option<f64>,
    hamming: f64,
    avg_auc: Option<f64>,
    lasso_time_s: f64,
    train_time_s: f64,
}

fn write_csv(cfg: &Config, report: &RunReport) -> Result<(), CliError> {
    let timings = cfg.bool_or("record_timings", true)?;
    let mut w = csv::Writer::from_writer(output(cfg, "csv")?);
    for s in &report.steps {
        let row = CsvRow {
            step: s.step,
            batch_size: s.batch_size,
            labels_seen: s.labels_seen,
            p_at_1: s.eval.precision_at(1),
            p_at_3: s.eval.precision_at(3),
            p_at_5: s.eval.precision_at(5),
            hamming: s.eval.hamming,
            avg_auc: s.eval.avg_auc,
            lasso_time_s: if timings { s.lasso_time_s } else { 0.0 },
            train_time_s: if timings { s.train_time_s } else { 0.0 },
        };
        w.serialize(row).map_err(|e| CliError::config(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct EvalJson {
    labels: usize,
    precision_at: Vec<(usize, Option<f64>)>,
    hamming: f64,
    avg_auc: Option<f64>,
}

impl From<&EvalSummary> for EvalJson {
    fn from(e: &EvalSummary) -> Self {
        EvalJson {
            labels: e.n_labels,
            precision_at: e.precision.clone(),
            hamming: e.hamming,
            avg_auc: e.avg_auc,
        }
    }
}

#[derive(Serialize)]
struct StreamJson {
    method: &'static str,
    beta: f64,
    beta_scores: Option<Vec<(f64, f64)>>,
    batches: usize,
    unconverged: usize,
    mean_arrived_p_at_1: Option<f64>,
    mean_arrived_p_at_3: Option<f64>,
    mean_arrived_p_at_5: Option<f64>,
    final_eval: EvalJson,
}

fn stream_with(cfg: &Config, method: Method) -> Result<Outcome, CliError> {
    let train = load_dataset(cfg, "train")?;
    let test = load_dataset(cfg, "test")?;
    if test.n_labels() != train.n_labels() || test.n_features() != train.n_features() {
        return Err(CliError::mismatch("train and test disagree on feature or label counts"));
    }
    check_ks(cfg, train.n_labels())?;
    let mut run = run_config(cfg, method)?;
    let sched = schedule(cfg, train.n_labels())?;
    let selection = resolve_beta(cfg, &train, &sched, &mut run)?;
    let report = match (method, cfg.path("model")) {
        (Method::Sll, Some(p)) => {
            let mut state = load_model(&p)?;
            if state.dim() != train.n_features() {
                return Err(CliError::mismatch(format!(
                    "model dimension {} does not match data dimension {}",
                    state.dim(),
                    train.n_features()
                )));
            }
            state.hyper.beta = run.stream.beta;
            state.hyper.lambda = run.stream.lambda;
            resume_stream(&train, &test, &sched, &run, state).map_err(|e| match e {
                sll_core::SllError::Shape(m) => CliError::mismatch(m),
                e => e.into(),
            })?
        }
        _ => run_stream(&train, &test, &sched, &run)?,
    };
    write_csv(cfg, &report)?;
    if let Some(p) = cfg.path("model_out") {
        save_model(&report.state, &p)?;
    }
    if cfg.get("report").is_some() {
        write_json(
            cfg,
            "report",
            &StreamJson {
                method: match method {
                    Method::Sll => "sll",
                    Method::Br => "br",
                },
                beta: run.stream.beta,
                beta_scores: selection.map(|s| s.scores),
                batches: sched.batches.len(),
                unconverged: report.unconverged,
                mean_arrived_p_at_1: report.mean_arrived_precision(1),
                mean_arrived_p_at_3: report.mean_arrived_precision(3),
                mean_arrived_p_at_5: report.mean_arrived_precision(5),
                final_eval: (&report.final_eval).into(),
            },
        )?;
    }
    Ok(Outcome {
        converged: report.unconverged == 0,
    })
}

pub fn cmd_stream(cfg: &Config) -> Result<Outcome, CliError> {
    let method = match cfg.get("method").unwrap_or("sll") {
        "sll" => Method::Sll,
        "br" => Method::Br,
        other => return Err(CliError::config(format!("unknown method '{}' (sll, br)", other))),
    };
    stream_with(cfg, method)
}

pub fn cmd_br(cfg: &Config) -> Result<Outcome, CliError> {
    stream_with(cfg, Method::Br)
}

pub fn cmd_eval(cfg: &Config) -> Result<Outcome, CliError> {
    let model_path = cfg.required_path("model")?;
    let state = load_model(&model_path)?;
    let test = load_dataset(cfg, "test")?;
    if state.dim() != test.n_features() {
        return Err(CliError::mismatch(format!(
            "model dimension {} does not match test dimension {}",
            state.dim(),
            test.n_features()
        )));
    }
    if let Some(&l) = state.label_ids().iter().find(|&&l| l >= test.n_labels()) {
        return Err(CliError::mismatch(format!("model label {} is outside the test label range", l)));
    }
    check_ks(cfg, state.n_labels())?;
    let ks: Vec<usize> = cfg
        .usize_list_or("eval_ks", &CSV_KS)?
        .into_iter()
        .filter(|&k| k <= state.n_labels())
        .collect();
    let summary = evaluate(&state, &test, state.label_ids(), &ks)?;
    write_json(cfg, "report", &EvalJson::from(&summary))?;
    Ok(Outcome { converged: true })
}

#[derive(Serialize)]
struct InstanceJson {
    seed: u64,
    lhs: Option<f64>,
    rhs: Option<f64>,
    holds: Option<bool>,
    error: Option<String>,
}

#[derive(Serialize)]
struct Theorem1Json {
    source: String,
    epsilon: f64,
    lambda_cap: f64,
    c: f64,
    k: usize,
    n: usize,
    delta: f64,
    term_main: f64,
    term_conf: f64,
}

impl Theorem1Json {
    fn new(source: String, t: Theorem1Terms) -> Self {
        Theorem1Json {
            source,
            epsilon: t.epsilon,
            lambda_cap: t.lambda_cap,
            c: t.c,
            k: t.k,
            n: t.n,
            delta: t.delta,
            term_main: t.term_main,
            term_conf: t.term_conf,
        }
    }
}

#[derive(Serialize)]
struct VerifyJson {
    instances_checked: usize,
    violations: usize,
    errors: usize,
    instances: Vec<InstanceJson>,
    theorem1: Theorem1Json,
}

/// Bound terms of the newest arrival recorded in `state`.
pub fn last_step_terms(state: &ModelState, n: usize, delta: f64) -> Result<Theorem1Terms, CliError> {
    let rec = state
        .log()
        .last()
        .ok_or_else(|| CliError::mismatch("model has no recorded arrivals"))?;
    let past: Vec<usize> = (0..rec.basis.len()).filter(|&i| !rec.arrived.contains(&rec.basis[i])).collect();
    let past_ids: Vec<usize> = past.iter().map(|&i| rec.basis[i]).collect();
    let dense = rec.to_dense();
    let s = dense.transpose().select_columns(&past).transpose();
    let w = state.weights_for(&rec.arrived)?;
    let w_old = state.weights_for(&past_ids)?;
    Ok(theorem1_terms(&w, &w_old, &s, n, delta)?)
}

pub fn cmd_verify(cfg: &Config) -> Result<Outcome, CliError> {
    let delta = cfg.f64_or("delta", 0.05)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(CliError::config(format!("delta must lie in (0, 1), got {}", delta)));
    }
    let count = cfg.usize_or("sweep_count", 100)?;
    let base_seed = cfg.u64_or("sweep_seed", 0)?;
    let lambda_struct = cfg.f64_or("lambda_struct", 1.0)?;
    let settings = Theorem2Settings {
        lambda_struct,
        lambda: cfg.f64_or("lambda", 1.0)?,
        beta: cfg.f64_or("beta", lambda_struct)?,
        ..Theorem2Settings::default()
    };
    if !(settings.lambda > 0.0 && settings.beta > 0.0 && lambda_struct >= 0.0) {
        return Err(CliError::config("lambda and beta must be > 0, lambda_struct >= 0"));
    }

    let results = theorem2_sweep(count, base_seed, &settings);
    let mut violations = 0;
    let mut errors = 0;
    let mut unconverged = false;
    let instances = results
        .into_iter()
        .map(|(seed, r)| match r {
            Ok(rep) => {
                if !rep.holds {
                    violations += 1;
                }
                InstanceJson {
                    seed,
                    lhs: Some(rep.lhs),
                    rhs: Some(rep.rhs),
                    holds: Some(rep.holds),
                    error: None,
                }
            }
            Err(e) => {
                errors += 1;
                unconverged |= matches!(e, sll_core::SllError::NotConverged { .. });
                InstanceJson {
                    seed,
                    lhs: None,
                    rhs: None,
                    holds: None,
                    error: Some(e.to_string()),
                }
            }
        })
        .collect();

    let theorem1 = match cfg.path("model") {
        Some(p) => {
            let state = load_model(&p)?;
            let train = load_dataset(cfg, "train")?;
            let t = last_step_terms(&state, train.n_examples(), delta)?;
            Theorem1Json::new(format!("model {}", p.display()), t)
        }
        None => {
            let seed = cfg.u64_or("seed", 0)?;
            let (train, test) = planted_dataset(&PlantedSpec::small(seed))?;
            let run = run_config(cfg, Method::Sll)?;
            let sched = schedule(cfg, train.n_labels())?;
            let report = run_stream(&train, &test, &sched, &run)?;
            unconverged |= report.unconverged > 0;
            let t = last_step_terms(&report.state, train.n_examples(), delta)?;
            Theorem1Json::new(format!("synthetic small stream, seed {}", seed), t)
        }
    };

    write_json(
        cfg,
        "report",
        &VerifyJson {
            instances_checked: count,
            violations,
            errors,
            instances,
            theorem1,
        },
    )?;
    Ok(Outcome {
        converged: !unconverged,
    })
}
