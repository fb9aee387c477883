use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::{dependent_split, loso_split, stratified_kfold, SubjectSplit, TestSessionFilter};
use super::metrics::Metrics;
use super::train::{evaluate, train, StopReason, TrainHistory};
use super::TrainConfig;
use crate::dataio::{augment_pool, AugmentConfig, EpochedDataset};
use crate::error::{Error, Result};
use crate::model::{checkpoint_save, Min2NetConfig};
use crate::seed::derive_seed;
use crate::Network;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Dependent,
    Independent,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dependent" => Ok(Scheme::Dependent),
            "independent" => Ok(Scheme::Independent),
            _ => Err(Error::InvalidArg {
                arg: "scheme",
                reason: format!("`{s}` is neither dependent nor independent"),
            }),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Dependent => "dependent",
            Scheme::Independent => "independent",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    pub test_session: TestSessionFilter,
    pub inner_folds: usize,
    /// Folds trained concurrently.
    pub jobs: usize,
    pub augment: AugmentConfig,
    pub save_checkpoints: bool,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(scheme: Scheme, seed: u64) -> Self {
        ExperimentConfig {
            scheme,
            test_session: TestSessionFilter::Auto,
            inner_folds: 5,
            jobs: 1,
            augment: AugmentConfig::default(),
            save_checkpoints: false,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldRow {
    pub subject: u32,
    pub fold: usize,
    pub metrics: Option<Metrics>,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub stop: Option<StopReason>,
    /// Set when the fold could not produce metrics.
    pub failure: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub accuracy_mean: f64,
    pub accuracy_sd: f64,
    pub macro_f1_mean: f64,
    pub macro_f1_sd: f64,
}

/// Mean and population standard deviation.
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

impl Summary {
    fn of(acc: &[f64], f1: &[f64]) -> Self {
        let (am, asd) = mean_sd(acc);
        let (fm, fsd) = mean_sd(f1);
        Summary {
            count: acc.len(),
            accuracy_mean: am,
            accuracy_sd: asd,
            macro_f1_mean: fm,
            macro_f1_sd: fsd,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub scheme: Scheme,
    pub class_names: Vec<String>,
    pub rows: Vec<FoldRow>,
    /// Spread over every (subject, fold) evaluation.
    pub over_folds: Summary,
    /// Spread over per-subject means.
    pub over_subjects: Summary,
    #[serde(skip)]
    pub histories: Vec<TrainHistory>,
}

impl ExperimentResult {
    fn assemble(scheme: Scheme, class_names: Vec<String>, rows: Vec<FoldRow>, histories: Vec<TrainHistory>) -> Self {
        let ok: Vec<(&FoldRow, &Metrics)> = rows.iter().filter_map(|r| r.metrics.as_ref().map(|m| (r, m))).collect();
        let acc: Vec<f64> = ok.iter().map(|(_, m)| m.accuracy).collect();
        let f1: Vec<f64> = ok.iter().map(|(_, m)| m.macro_f1).collect();
        let mut subjects: Vec<u32> = ok.iter().map(|(r, _)| r.subject).collect();
        subjects.dedup();
        let per_subject = |pick: fn(&Metrics) -> f64| -> Vec<f64> {
            subjects
                .iter()
                .map(|&s| {
                    let v: Vec<f64> = ok.iter().filter(|(r, _)| r.subject == s).map(|(_, m)| pick(m)).collect();
                    mean_sd(&v).0
                })
                .collect()
        };
        ExperimentResult {
            scheme,
            class_names,
            over_folds: Summary::of(&acc, &f1),
            over_subjects: Summary::of(&per_subject(|m| m.accuracy), &per_subject(|m| m.macro_f1)),
            rows,
            histories,
        }
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.failure.is_some()).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("scheme,subject,fold,status,accuracy,macro_f1");
        for c in &self.class_names {
            out.push_str(&format!(",f1_{c}"));
        }
        out.push_str(",epochs_run,best_epoch\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}", self.scheme, r.subject, r.fold));
            match &r.metrics {
                Some(m) => {
                    out.push_str(&format!(",ok,{},{}", m.accuracy, m.macro_f1));
                    for f in &m.f1 {
                        out.push_str(&format!(",{f}"));
                    }
                }
                None => {
                    out.push_str(",failed,,");
                    out.push_str(&",".repeat(self.class_names.len()));
                }
            }
            out.push_str(&format!(",{},{}\n", r.epochs_run, r.best_epoch));
        }
        out
    }

    /// Writes `results.json`, `results.csv` and one `history_<subject>_<fold>.csv` per row.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        crate::dataio::io::write_json(&dir.join("results.json"), self)?;
        write_file(&dir.join("results.csv"), &self.to_csv())?;
        for (r, h) in self.rows.iter().zip(&self.histories) {
            write_file(&dir.join(format!("history_{}_{}.csv", r.subject, r.fold)), &h.to_csv())?;
        }
        Ok(())
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

struct Task<'a> {
    split: &'a SubjectSplit,
    fold: usize,
    train: Vec<usize>,
    val: Vec<usize>,
}

/// The (subject, fold) trainings the scheme calls for, with leakage-free index sets.
pub fn plan_folds(ds: &EpochedDataset, cfg: &ExperimentConfig) -> Result<Vec<(SubjectSplit, Vec<(Vec<usize>, Vec<usize>)>)>> {
    let splits = match cfg.scheme {
        Scheme::Dependent => dependent_split(ds, cfg.test_session)?,
        Scheme::Independent => loso_split(ds, cfg.test_session)?,
    };
    splits
        .into_iter()
        .map(|s| {
            let labels: Vec<usize> = s.train.iter().map(|&i| ds.labels()[i]).collect();
            let inner = stratified_kfold(&labels, cfg.inner_folds, derive_seed(cfg.seed, s.subject as u64))?;
            let folds = inner
                .into_iter()
                .map(|(tr, va)| (tr.iter().map(|&k| s.train[k]).collect(), va.iter().map(|&k| s.train[k]).collect()))
                .collect();
            Ok((s, folds))
        })
        .collect()
}

fn run_task(
    ds: &EpochedDataset,
    model_cfg: &Min2NetConfig,
    train_cfg: &TrainConfig,
    cfg: &ExperimentConfig,
    task: &Task,
    checkpoint_dir: Option<&Path>,
) -> (FoldRow, TrainHistory) {
    let subject = task.split.subject;
    let task_seed = derive_seed(cfg.seed, ((subject as u64) << 16) | task.fold as u64);
    let mut row = FoldRow {
        subject,
        fold: task.fold,
        metrics: None,
        epochs_run: 0,
        best_epoch: 0,
        stop: None,
        failure: None,
    };
    let started = Instant::now();
    let attempt = || -> Result<(Metrics, super::train::TrainOutcome)> {
        let mut mc = model_cfg.clone();
        train_cfg.apply_overrides(&mut mc);
        let net = Network::build(&mc, task_seed)?;
        let train_set = augment_pool(&ds.subset(&task.train), &cfg.augment, derive_seed(task_seed, 1))?;
        let val_set = ds.subset(&task.val);
        let tc = TrainConfig {
            seed: derive_seed(task_seed, 2),
            ..train_cfg.clone()
        };
        let outcome = train(net, &train_set, &val_set, &tc)?;
        let metrics = evaluate(&outcome.net, &ds.subset(&task.split.test))?;
        if let Some(dir) = checkpoint_dir {
            checkpoint_save(&outcome.net, &dir.join(format!("fold_{subject}_{}.mn2c", task.fold)))?;
        }
        Ok((metrics, outcome))
    };
    let history = match attempt() {
        Ok((m, outcome)) => {
            log::info!(
                "subject {subject} fold {}: accuracy {:.4} macro-F1 {:.4}, {} epochs (best {}) in {:.1}s",
                task.fold,
                m.accuracy,
                m.macro_f1,
                outcome.epochs_run(),
                outcome.best_epoch,
                started.elapsed().as_secs_f64()
            );
            row.epochs_run = outcome.epochs_run();
            row.best_epoch = outcome.best_epoch;
            if let StopReason::NonFinite(msg) = &outcome.stop {
                row.failure = Some(format!("non-finite training: {msg}"));
            }
            row.stop = Some(outcome.stop);
            row.metrics = Some(m);
            outcome.history
        }
        Err(e) => {
            log::error!("subject {subject} fold {} failed: {e}", task.fold);
            row.failure = Some(e.to_string());
            TrainHistory::default()
        }
    };
    (row, history)
}

/// Runs every (subject, fold) training of the scheme and aggregates test metrics. Folds that
/// fail are recorded and the rest continue. When `out_dir` is given, result and history files
/// are written there.
pub fn run_experiment(
    ds: &EpochedDataset,
    model_cfg: &Min2NetConfig,
    train_cfg: &TrainConfig,
    cfg: &ExperimentConfig,
    out_dir: Option<&Path>,
) -> Result<ExperimentResult> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    if ds.n_channels() != model_cfg.channels || ds.n_samples() != model_cfg.samples {
        return Err(Error::Config(format!(
            "dataset trials are {}×{} but the model is configured for {}×{}",
            ds.n_channels(),
            ds.n_samples(),
            model_cfg.channels,
            model_cfg.samples
        )));
    }
    if ds.n_classes() > model_cfg.classes {
        return Err(Error::Config(format!(
            "dataset has {} classes, model has {}",
            ds.n_classes(),
            model_cfg.classes
        )));
    }
    let plan = plan_folds(ds, cfg)?;
    let tasks: Vec<Task> = plan
        .iter()
        .flat_map(|(split, folds)| {
            folds.iter().enumerate().map(move |(f, (tr, va))| Task {
                split,
                fold: f,
                train: tr.clone(),
                val: va.clone(),
            })
        })
        .collect();
    let ckpt_dir = match (out_dir, cfg.save_checkpoints) {
        (Some(d), true) => {
            let p = d.join("checkpoints");
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
            Some(p)
        }
        _ => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outputs: Vec<(FoldRow, TrainHistory)> = pool.install(|| {
        tasks
            .par_iter()
            .map(|t| run_task(ds, model_cfg, train_cfg, cfg, t, ckpt_dir.as_deref()))
            .collect()
    });
    let (rows, histories): (Vec<_>, Vec<_>) = outputs.into_iter().unzip();
    let result = ExperimentResult::assemble(cfg.scheme, ds.class_names.clone(), rows, histories);
    if let Some(dir) = out_dir {
        result.write(dir)?;
    }
    Ok(result)
}
