//! Truncated-BPTT training with ADADELTA and Nesterov momentum.

mod batch;
mod checkpoint;
mod gradcheck;
mod optimizer;

use std::time::Instant;

use rayon::prelude::*;

pub use batch::{batch_sequences, Batch, BatchStream, Window};
pub use checkpoint::Checkpoint;
pub use gradcheck::{gradient_check, relative_error, sequence_loss, GradCheckReport, REL_ERROR_FLOOR};
pub use optimizer::{adadelta_nesterov_update, OptimizerConfig, OptimizerState};

use crate::corpus::TokenSequence;
use crate::error::{Error, Result};
use crate::eval::score_many;
use crate::hierarchy::{Network, NetworkParams, NetworkSpec, NetworkState, INIT_SCALE};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub bptt_length: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub max_epochs: usize,
    pub seed: u64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub init_scale: f64,
    /// Worker threads for the batch dimension; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            bptt_length: 128,
            batch_size: 64,
            optimizer: OptimizerConfig::default(),
            max_epochs: 10,
            seed: 1,
            clip_norm: Some(5.0),
            init_scale: INIT_SCALE,
            threads: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bptt_length == 0 || self.batch_size == 0 {
            return Err(Error::Config("bptt_length and batch_size must be at least 1".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip_norm must be positive, got {c}")));
            }
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config(format!("init_scale must be non-negative, got {}", self.init_scale)));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        self.optimizer.validate()
    }
}

/// Metrics of one finished epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    /// Mean bits per target over the epoch, measured while the weights were updated.
    pub train_bpc: f64,
    pub heldout_bpc: Option<f64>,
    pub seconds: f64,
}

impl EpochMetrics {
    pub const CSV_HEADER: &'static str = "epoch,train_bpc,heldout_bpc,seconds";

    /// A CSV line; with `timing` off the seconds column is written as 0 so
    /// repeated runs produce identical files.
    pub fn csv_row(&self, timing: bool) -> String {
        let held = self.heldout_bpc.map(|b| format!("{b:.6}")).unwrap_or_default();
        let secs = if timing { self.seconds } else { 0.0 };
        format!("{},{:.6},{},{:.3}", self.epoch, self.train_bpc, held, secs)
    }

    fn key(&self) -> f64 {
        self.heldout_bpc.unwrap_or(self.train_bpc)
    }
}

/// Owns a network and its optimizer state and applies one update per batch.
pub struct Trainer {
    pub net: Network,
    opt: OptimizerState,
    cfg: TrainConfig,
    names: Vec<String>,
    pool: Option<rayon::ThreadPool>,
}

struct StreamResult {
    loss: f64,
    targets: usize,
    grads: NetworkParams,
    state: NetworkState,
}

impl Trainer {
    pub fn new(net: Network, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let opt = OptimizerState::new(net.params.blocks());
        let names = net.params.named_blocks(net.wiring()).into_iter().map(|(n, _)| n).collect();
        let pool = match cfg.threads {
            Some(n) => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?,
            ),
            None => None,
        };
        Ok(Self {
            net,
            opt,
            cfg,
            names,
            pool,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Fresh per-stream states for an epoch.
    pub fn initial_states(&self) -> Vec<NetworkState> {
        vec![self.net.initial_state(); self.cfg.batch_size]
    }

    fn run_streams(&self, states: &[NetworkState], batch: &Batch) -> Result<Vec<Option<StreamResult>>> {
        let net = &self.net;
        let work = |i: usize| -> Result<Option<StreamResult>> {
            let Some(w) = &batch[i] else { return Ok(None) };
            let init = if w.reset { net.initial_state() } else { states[i].clone() };
            let out = net.forward_from(&init, &w.inputs, &w.clocks, true)?;
            let mut grads = net.params.zeros_like();
            let loss = net.backward(&out.tape, &w.targets, &mut grads)?;
            Ok(Some(StreamResult {
                loss,
                targets: w.targets.len(),
                grads,
                state: out.state,
            }))
        };
        let run = || (0..batch.len()).into_par_iter().map(work).collect::<Result<Vec<_>>>();
        match &self.pool {
            Some(pool) => pool.install(run),
            None => run(),
        }
    }

    /// Forward, backward and one optimizer update over a batch. Stream states are
    /// carried in `states`. Returns the summed loss in nats and the number of targets.
    pub fn step(&mut self, states: &mut [NetworkState], batch: &Batch) -> Result<(f64, usize)> {
        if states.len() != batch.len() {
            return Err(Error::Argument(format!("{} states for {} streams", states.len(), batch.len())));
        }
        let results = self.run_streams(states, batch)?;
        let mut total = self.net.params.zeros_like();
        let (mut loss, mut targets) = (0.0, 0);
        for (i, r) in results.into_iter().enumerate() {
            if let Some(r) = r {
                total.add_assign(&r.grads);
                loss += r.loss;
                targets += r.targets;
                states[i] = r.state;
            }
        }
        if targets == 0 {
            return Ok((0.0, 0));
        }
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("loss is {loss}")));
        }
        total.scale(1.0 / targets as f64);
        if let Some(clip) = self.cfg.clip_norm {
            let norm = total.norm();
            if norm > clip {
                total.scale(clip / norm);
            }
        }
        adadelta_nesterov_update(
            self.net.params.blocks_mut(),
            total.blocks(),
            &self.names,
            &mut self.opt,
            &self.cfg.optimizer,
        )?;
        Ok((loss, targets))
    }

    /// One pass over `corpus`; returns the mean training bits per target.
    pub fn epoch(&mut self, corpus: &[TokenSequence]) -> Result<f64> {
        let mut states = self.initial_states();
        let (mut loss, mut targets) = (0.0, 0usize);
        let boundaries = self.net.boundaries();
        let levels = self.net.spec().levels();
        for batch in batch_sequences(corpus, self.cfg.batch_size, self.cfg.bptt_length, boundaries, levels) {
            let (l, n) = self.step(&mut states, &batch)?;
            loss += l;
            targets += n;
        }
        if targets == 0 {
            return Err(Error::EmptyCorpus);
        }
        Ok(loss / targets as f64 / std::f64::consts::LN_2)
    }
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest held-out BPC (train BPC without held-out data).
    pub best: Network,
    pub best_epoch: usize,
    pub last: Network,
    pub metrics: Vec<EpochMetrics>,
}

/// Trains a freshly initialised network built from `spec` with `cfg.seed`.
pub fn train(
    spec: NetworkSpec,
    corpus: &[TokenSequence],
    heldout: &[TokenSequence],
    cfg: &TrainConfig,
    observer: impl FnMut(&EpochMetrics, &Network, bool) -> Result<()>,
) -> Result<TrainOutcome> {
    let net = Network::random(spec, cfg.init_scale, cfg.seed)?;
    train_network(net, corpus, heldout, cfg, observer)
}

/// Trains `net` for `cfg.max_epochs` epochs. After every epoch `observer` gets the
/// metrics, the current network and whether it is the best so far. A non-finite
/// loss or gradient stops training with [`Error::Divergence`]; whatever the
/// observer saved up to then is left in place.
pub fn train_network(
    net: Network,
    corpus: &[TokenSequence],
    heldout: &[TokenSequence],
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochMetrics, &Network, bool) -> Result<()>,
) -> Result<TrainOutcome> {
    if corpus.iter().all(|s| s.ids.len() < 2) {
        return Err(Error::EmptyCorpus);
    }
    let mut trainer = Trainer::new(net, cfg.clone())?;
    let mut metrics: Vec<EpochMetrics> = Vec::with_capacity(cfg.max_epochs);
    let mut best = trainer.net.clone();
    let mut best_epoch = 0;
    let mut best_key = f64::INFINITY;
    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let train_bpc = trainer.epoch(corpus).map_err(|e| match e {
            Error::Numeric(detail) => Error::Divergence { epoch, detail },
            other => other,
        })?;
        let heldout_bpc = if heldout.is_empty() {
            None
        } else {
            Some(score_many(&trainer.net, heldout)?.bpc())
        };
        let m = EpochMetrics {
            epoch,
            train_bpc,
            heldout_bpc,
            seconds: start.elapsed().as_secs_f64(),
        };
        if !m.key().is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: format!("bpc is {}", m.key()),
            });
        }
        let improved = m.key() < best_key;
        if improved {
            best_key = m.key();
            best = trainer.net.clone();
            best_epoch = epoch;
        }
        observer(&m, &trainer.net, improved)?;
        metrics.push(m);
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        last: trainer.net,
        metrics,
    })
}
