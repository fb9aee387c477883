use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::Metrics;
use super::sampler::{shuffled_batches, stratified_batches};
use super::schedule::PlateauSchedule;
use super::TrainConfig;
use crate::dataio::EpochedDataset;
use crate::error::{Error, Result};
use crate::model::{Batch, LossComponents};
use crate::nncore::{adam_step, Mode};
use crate::{Adam, Network};

/// Loss terms averaged over the trials of an epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub mse: f64,
    pub triplet: f64,
    pub cross_entropy: f64,
    pub total: f64,
}

#[derive(Default)]
struct LossAccumulator {
    sum: LossSummary,
    weight: f64,
}

impl LossAccumulator {
    fn add(&mut self, c: &LossComponents, total: f64, n: usize) {
        let w = n as f64;
        self.sum.mse += w * c.mse;
        self.sum.triplet += w * c.triplet;
        self.sum.cross_entropy += w * c.cross_entropy;
        self.sum.total += w * total;
        self.weight += w;
    }

    fn mean(&self) -> LossSummary {
        let w = self.weight.max(1.0);
        LossSummary {
            mse: self.sum.mse / w,
            triplet: self.sum.triplet / w,
            cross_entropy: self.sum.cross_entropy / w,
            total: self.sum.total / w,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Learning rate used during the epoch.
    pub lr: f64,
    pub train: LossSummary,
    pub val: LossSummary,
    pub improved: bool,
    #[serde(skip)]
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn learning_rates(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.lr).collect()
    }

    pub fn csv_header() -> &'static str {
        "epoch,lr,train_mse,train_triplet,train_ce,train_total,val_mse,val_triplet,val_ce,val_total"
    }

    /// Per-epoch losses; timing is left out so the file is reproducible.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::csv_header());
        out.push('\n');
        for e in &self.epochs {
            let (t, v) = (&e.train, &e.val);
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                e.epoch, e.lr, t.mse, t.triplet, t.cross_entropy, t.total, v.mse, v.triplet, v.cross_entropy, v.total
            ));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
    /// A loss or gradient became non-finite; the best parameters up to then are kept.
    NonFinite(String),
}

pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub net: Network,
    pub history: TrainHistory,
    /// 0 when no epoch completed.
    pub best_epoch: usize,
    pub stop: StopReason,
}

impl TrainOutcome {
    pub fn epochs_run(&self) -> usize {
        self.history.epochs.len()
    }
}

fn batch_of(ds: &EpochedDataset, idx: &[usize]) -> Batch<f32> {
    Batch {
        x: ds.batch_tensor(idx),
        y: idx.iter().map(|&i| ds.labels()[i]).collect(),
    }
}

/// Mean loss terms over `ds` with frozen parameters, in fixed stratified batches.
pub fn validation_losses(net: &Network, ds: &EpochedDataset, batch_size: usize, mode: Mode) -> Result<LossSummary> {
    let mut acc = LossAccumulator::default();
    for idx in stratified_batches(ds.labels(), batch_size, None)? {
        let c = net.evaluate_losses(&batch_of(ds, &idx), mode)?;
        acc.add(&c, c.total(net.config()), idx.len());
    }
    Ok(acc.mean())
}

fn finite(s: &LossSummary) -> bool {
    [s.mse, s.triplet, s.cross_entropy, s.total].iter().all(|v| v.is_finite())
}

/// Adam with reduce-on-plateau and early stopping on the validation total loss.
pub fn train(mut net: Network, train_set: &EpochedDataset, val_set: &EpochedDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mc = net.config().clone();
    for (name, ds) in [("training", train_set), ("validation", val_set)] {
        if ds.n_channels() != mc.channels || ds.n_samples() != mc.samples {
            return Err(Error::dim(format!(
                "{name} trials are {}×{}, the network expects {}×{}",
                ds.n_channels(),
                ds.n_samples(),
                mc.channels,
                mc.samples
            )));
        }
    }
    // fail early on sets that cannot be batched
    stratified_batches(train_set.labels(), cfg.batch_size, None)?;
    stratified_batches(val_set.labels(), cfg.batch_size, None)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.lr_start);
    let mut sched = PlateauSchedule::new(
        cfg.lr_start,
        cfg.lr_floor,
        cfg.lr_decay_factor,
        cfg.plateau_patience,
        cfg.earlystop_patience,
    );
    let mut best = net.clone();
    let mut best_epoch = 0;
    let mut history = TrainHistory::default();
    let mut stop = StopReason::MaxEpochs;

    'epochs: for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        let lr = sched.lr;
        adam.learning_rate = lr as f32;
        let mut acc = LossAccumulator::default();
        for idx in shuffled_batches(train_set.labels(), cfg.batch_size, &mut rng)? {
            let step = net
                .accumulate_gradients(&batch_of(train_set, &idx))
                .and_then(|c| adam_step(net.params_mut(), &mut adam).map(|_| c));
            match step {
                Ok(c) => acc.add(&c, c.total(&mc), idx.len()),
                Err(Error::NonFinite(msg)) => {
                    stop = StopReason::NonFinite(format!("epoch {epoch}: {msg}"));
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        let train_loss = acc.mean();
        let val = validation_losses(&net, val_set, cfg.batch_size, Mode::Infer)?;
        if !finite(&val) || !finite(&train_loss) {
            stop = StopReason::NonFinite(format!("epoch {epoch}: validation losses {val:?}"));
            break;
        }
        let step = sched.observe(val.total);
        if step.improved {
            best = net.clone();
            best_epoch = epoch;
        }
        let wall = started.elapsed().as_secs_f64();
        log::debug!(
            "epoch {epoch}: lr {lr:.2e} train {:.4} val {:.4} ce {:.4}/{:.4} ({wall:.1}s)",
            train_loss.total,
            val.total,
            train_loss.cross_entropy,
            val.cross_entropy
        );
        history.epochs.push(EpochRecord {
            epoch,
            lr,
            train: train_loss,
            val,
            improved: step.improved,
            wall_time_s: wall,
        });
        if step.stop {
            stop = StopReason::EarlyStop;
            break;
        }
    }
    if let StopReason::NonFinite(msg) = &stop {
        log::warn!("training aborted: {msg}; keeping epoch {best_epoch}");
    }
    Ok(TrainOutcome {
        net: best,
        history,
        best_epoch,
        stop,
    })
}

/// Infer-mode predictions and exact counting metrics on `ds`.
pub fn evaluate(net: &Network, ds: &EpochedDataset) -> Result<Metrics> {
    let mut predicted = Vec::with_capacity(ds.len());
    let all: Vec<usize> = (0..ds.len()).collect();
    for chunk in all.chunks(64) {
        predicted.extend(net.predict(&ds.batch_tensor(chunk))?);
    }
    Metrics::from_predictions(ds.labels(), &predicted, net.config().classes)
}
