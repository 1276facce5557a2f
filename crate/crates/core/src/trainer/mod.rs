//! Sequential task training: projected steps per task, evaluation on every
//! task seen so far, then a memory update.

mod metrics;

pub use metrics::{compute_acc, compute_bwt, compute_metrics, compute_relative_fwt, AccuracyMatrix, Metrics};

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::data::{Split, TaskSequence};
use crate::error::{Error, Result};
use crate::gpm::{update_memory_after_task, BasisMemory, LayerUpdate, ProjectionMode, RepresentationConfig, ScaleConfig};
use crate::math;
use crate::net::{batch_from_samples, Network};
use crate::optim::{AdamParams, OptimizerKind, OptimizerState};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Sgp,
    Gpm,
    /// No projection and no memory.
    Finetune,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Sgp => "sgp",
            Method::Gpm => "gpm",
            Method::Finetune => "finetune",
        }
    }

    pub fn projection(self) -> Option<ProjectionMode> {
        match self {
            Method::Sgp => Some(ProjectionMode::Sgp),
            Method::Gpm => Some(ProjectionMode::Gpm),
            Method::Finetune => None,
        }
    }
}

impl core::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgp" => Ok(Method::Sgp),
            "gpm" => Ok(Method::Gpm),
            "finetune" => Ok(Method::Finetune),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    /// Epoch cap per task.
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Validation accuracy gain that counts as improvement.
    pub min_improvement: f64,
    /// Restore the best-validation weights when a task ends.
    pub restore_best: bool,
    pub seed: u64,
    /// `alpha`, thresholds and increment; `mode` is taken from `method`.
    pub scale: ScaleConfig,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    /// Learning rate for task `τ` is `lr · lr_decay^(τ−1)`.
    pub lr_decay: f64,
    pub adam: AdamParams,
    pub representation: RepresentationConfig,
}

impl TrainConfig {
    pub fn new(method: Method, scale: ScaleConfig) -> Self {
        Self {
            method,
            epochs: 50,
            batch_size: 64,
            patience: 6,
            min_improvement: 1e-3,
            restore_best: true,
            seed: 0,
            scale,
            optimizer: OptimizerKind::Sgd,
            lr: 0.05,
            lr_decay: 1.0,
            adam: AdamParams::default(),
            representation: RepresentationConfig::default(),
        }
    }

    pub fn validate(&self, layers: usize, tasks: usize) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.representation.samples == 0 || self.representation.max_columns == 0 {
            return Err(Error::Config("epochs, batch_size, n_s and max_columns must be positive".into()));
        }
        if !(self.lr_decay > 0.0) || !self.lr_decay.is_finite() {
            return Err(Error::Config("lr_decay must be positive".into()));
        }
        if self.method != Method::Finetune {
            self.scale.validate(layers, tasks)?;
        }
        OptimizerState::new(self.optimizer, self.lr, self.adam)?;
        Ok(())
    }

    fn effective_scale(&self) -> ScaleConfig {
        let mut s = self.scale.clone();
        if let Some(mode) = self.method.projection() {
            s.mode = mode;
        }
        s
    }
}

/// Passed to the step observer after every optimizer step.
pub struct StepEvent<'a> {
    pub task: usize,
    /// Steps taken so far across all tasks.
    pub step: usize,
    pub loss: f64,
    pub net: &'a Network,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub net: Network,
    pub memory: BasisMemory,
    pub accuracy: AccuracyMatrix,
    /// Memory after each task.
    pub snapshots: Vec<BasisMemory>,
    /// Per-task, per-layer update reports (empty for finetune).
    pub updates: Vec<Vec<LayerUpdate>>,
    pub epochs_run: Vec<usize>,
}

impl RunResult {
    /// `[task][layer]` importance vectors.
    pub fn lambda_history(&self) -> Vec<Vec<Vec<f64>>> {
        self.snapshots
            .iter()
            .map(|m| m.layers.iter().map(|l| l.lambda().to_vec()).collect())
            .collect()
    }

    pub fn metrics(&self) -> Result<Metrics> {
        compute_metrics(&self.accuracy)
    }
}

/// Fraction of `split` classified correctly with `task`'s head.
pub fn evaluate(net: &Network, split: &Split, task: usize) -> Result<f64> {
    if split.is_empty() {
        return Err(Error::Config(format!("task {} has an empty evaluation split", task + 1)));
    }
    let mut correct = 0usize;
    for (xs, ys) in split.inputs.chunks(256).zip(split.labels.chunks(256)) {
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let pred = net.predict(&batch_from_samples(&refs)?, task)?;
        correct += pred.iter().zip(ys).filter(|(p, y)| p == y).count();
    }
    Ok(correct as f64 / split.len() as f64)
}

pub fn train_continual(net: Network, tasks: &TaskSequence, config: &TrainConfig) -> Result<RunResult> {
    train_continual_with(net, tasks, config, |_| {})
}

/// [`train_continual`] with a callback after every optimizer step.
pub fn train_continual_with(
    mut net: Network,
    tasks: &TaskSequence,
    config: &TrainConfig,
    mut observer: impl FnMut(StepEvent<'_>),
) -> Result<RunResult> {
    tasks.validate()?;
    if net.input_len() != tasks.input_shape.len() {
        return Err(Error::Config(format!(
            "network input {} does not match data {}",
            net.input_len(),
            tasks.input_shape.len()
        )));
    }
    if !net.heads().is_empty() {
        return Err(Error::Config("expected a fresh network without heads".into()));
    }
    config.validate(net.layers().len(), tasks.tasks.len())?;
    let scale = config.effective_scale();

    let mut head_rng = stream(config.seed, Stream::Heads);
    let mut shuffle_rng = stream(config.seed, Stream::Shuffle);
    let mut sampling_rng = stream(config.seed, Stream::Sampling);

    let t_count = tasks.tasks.len();
    let mut memory = BasisMemory::for_network(&net);
    let mut accuracy = AccuracyMatrix::new(t_count);
    let mut snapshots = Vec::with_capacity(t_count);
    let mut updates = Vec::with_capacity(t_count);
    let mut epochs_run = Vec::with_capacity(t_count);
    let mut opt = OptimizerState::new(config.optimizer, config.lr, config.adam)?;
    let mut step = 0usize;

    for (ti, task) in tasks.tasks.iter().enumerate() {
        let head = net.add_head(task.class_count, &mut head_rng);
        debug_assert_eq!(head, ti);
        opt.reset();
        opt.lr = config.lr * math::powi(config.lr_decay, ti as i32);

        let monitor = if task.validation.is_empty() { &task.train } else { &task.validation };
        let mut order: Vec<usize> = (0..task.train.len()).collect();
        let mut best_acc = f64::NEG_INFINITY;
        let mut best_net: Option<Network> = None;
        let mut stale = 0usize;
        let mut epochs = 0usize;
        for _ in 0..config.epochs {
            epochs += 1;
            order.shuffle(&mut shuffle_rng);
            for chunk in order.chunks(config.batch_size) {
                let xs: Vec<&[f64]> = chunk.iter().map(|&i| task.train.inputs[i].as_slice()).collect();
                let ys: Vec<usize> = chunk.iter().map(|&i| task.train.labels[i]).collect();
                let grads = net.backward(&batch_from_samples(&xs)?, &ys, ti).map_err(|e| match e {
                    Error::Numerical(msg) => Error::Numerical(format!("task {} step {step}: {msg}", ti + 1)),
                    other => other,
                })?;
                opt.step(&mut net, &grads, &memory)?;
                step += 1;
                observer(StepEvent {
                    task: ti,
                    step,
                    loss: grads.loss,
                    net: &net,
                });
            }
            let val = evaluate(&net, monitor, ti)?;
            if val > best_acc + config.min_improvement {
                best_acc = val;
                if config.restore_best {
                    best_net = Some(net.clone());
                }
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        }
        if let Some(best) = best_net {
            net = best;
        }
        epochs_run.push(epochs);

        for (j, earlier) in tasks.tasks[..=ti].iter().enumerate() {
            accuracy.set(ti, j, evaluate(&net, &earlier.test, j)?)?;
        }

        if config.method == Method::Finetune {
            updates.push(Vec::new());
        } else {
            let (next, reports) = update_memory_after_task(
                &net,
                &task.train.inputs,
                &memory,
                &scale,
                config.representation,
                ti,
                &mut sampling_rng,
            )?;
            memory = next;
            updates.push(reports);
        }
        snapshots.push(memory.clone());
    }

    Ok(RunResult {
        net,
        memory,
        accuracy,
        snapshots,
        updates,
        epochs_run,
    })
}
