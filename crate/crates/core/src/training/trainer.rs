use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::{accuracy, cross_entropy_loss, mse_loss, LossKind};
use super::noise::add_gradient_noise;
use crate::diagnostics::grad_norm_total;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::network::{pathway_magnitudes, Network, PathwayMagnitude};
use crate::rng::{shuffle, substream};
use crate::scalar::Scalar;
use crate::tasks::{Split, Targets};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Epochs(usize),
    Steps(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub schedule: Schedule,
    pub seed: u64,
    pub loss: LossKind,
    pub grad_noise_sigma: f64,
    /// Samples of the evaluation split used for pathway magnitudes.
    pub probe_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 128,
            schedule: Schedule::Steps(2000),
            seed: 0,
            loss: LossKind::Mse,
            grad_noise_sigma: 0.0,
            probe_samples: 512,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Precondition(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Precondition("batch_size must be ≥ 1".into()));
        }
        if !(self.grad_noise_sigma >= 0.0) {
            return Err(Error::Precondition(format!("grad_noise_sigma must be ≥ 0, got {}", self.grad_noise_sigma)));
        }
        Ok(())
    }
}

/// One row of the training log. With a step schedule an "epoch" is one pass
/// over the training split (the last one may be partial).
#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub steps: usize,
    /// Sample-weighted mean of the batch losses seen during the epoch.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub accuracy: Option<f64>,
    /// Mean over the epoch's steps of the total gradient L2 norm (before noise).
    pub grad_norm: f64,
    pub pathways: Vec<PathwayMagnitude<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsLog {
    pub seed: u64,
    pub rows: Vec<EpochMetrics>,
    pub wall_time_s: f64,
}

impl MetricsLog {
    pub fn train_losses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.train_loss).collect()
    }

    pub fn last(&self) -> Option<&EpochMetrics> {
        self.rows.last()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: Option<f64>,
}

fn batch_loss<T: Scalar>(logits: &DenseMatrix<T>, targets: &Targets<T>, kind: LossKind) -> Result<(T, DenseMatrix<T>)> {
    match (kind, targets) {
        (LossKind::Mse, Targets::Regression(y)) => mse_loss(logits, y),
        (LossKind::Mse, t @ Targets::Classes { .. }) => mse_loss(logits, &t.as_rows().transpose()),
        (LossKind::CrossEntropy, Targets::Classes { labels, .. }) => cross_entropy_loss(logits, labels),
        (LossKind::CrossEntropy, Targets::Regression(_)) => {
            Err(Error::Precondition("cross-entropy needs class labels".into()))
        }
    }
}

const EVAL_CHUNK: usize = 1024;

/// Loss (and accuracy for labelled data) over a whole split, in chunks.
pub fn evaluate<T: Scalar>(net: &Network<T>, data: &Split<T>, kind: LossKind) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::Precondition("evaluation split is empty".into()));
    }
    let n = data.len();
    let (mut loss, mut hits) = (0.0, 0.0);
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let chunk = data.range(start, end);
        let logits = net.forward(&chunk.inputs)?.logits;
        let (l, _) = batch_loss(&logits, &chunk.targets, kind)?;
        let w = (end - start) as f64;
        loss += l.as_f64() * w;
        if let Targets::Classes { labels, .. } = &chunk.targets {
            hits += accuracy(&logits, labels) * w;
        }
        start = end;
    }
    let accuracy = matches!(data.targets, Targets::Classes { .. }).then_some(hits / n as f64);
    Ok(Evaluation {
        loss: loss / n as f64,
        accuracy,
    })
}

fn as_divergence(err: Error, epoch: usize) -> Error {
    match err {
        Error::Numerical { context, .. } => Error::Divergence { step: epoch, context },
        e => e,
    }
}

/// Shuffled mini-batch Adam training. Deterministic for a given
/// `(network, data, cfg)`.
pub fn train<T: Scalar>(
    mut net: Network<T>,
    data: &Split<T>,
    eval: Option<&Split<T>>,
    cfg: &TrainConfig,
) -> Result<(Network<T>, MetricsLog)> {
    cfg.validate()?;
    let started = Instant::now();
    let mut log = MetricsLog {
        seed: cfg.seed,
        rows: Vec::new(),
        wall_time_s: 0.0,
    };
    let total_steps = match cfg.schedule {
        Schedule::Epochs(0) | Schedule::Steps(0) => return Ok((net, log)),
        Schedule::Epochs(e) => e * data.len().div_ceil(cfg.batch_size),
        Schedule::Steps(s) => s,
    };
    if data.is_empty() {
        return Err(Error::Precondition("training split is empty".into()));
    }
    if data.input_dim() != net.input_dim() || data.targets.output_dim() != net.output_dim() {
        return Err(Error::shape(
            "train data vs network",
            (data.input_dim(), data.targets.output_dim()),
            (net.input_dim(), net.output_dim()),
        ));
    }

    let mut shuffle_rng = substream(cfg.seed, "shuffle");
    let mut noise_rng = substream(cfg.seed, "grad-noise");
    let mut adam = AdamState::new(&net, AdamConfig::default());
    let lr = T::of(cfg.learning_rate);
    let probe = eval.unwrap_or(data).head(cfg.probe_samples);
    let mut order: Vec<usize> = (0..data.len()).collect();
    // sample-major copy so a batch is a gather of contiguous rows
    let by_sample = data.inputs.transpose();
    let mut step = 0;
    let mut epoch = 0;

    while step < total_steps {
        epoch += 1;
        shuffle(&mut shuffle_rng, &mut order);
        let (mut loss_sum, mut seen, mut norm_sum, mut epoch_steps) = (0.0, 0usize, 0.0, 0usize);
        for idx in order.chunks(cfg.batch_size) {
            if step == total_steps {
                break;
            }
            let inputs = by_sample.select_rows(idx).transpose();
            let targets = data.targets.select(idx);
            let trace = net.forward(&inputs).map_err(|e| as_divergence(e, epoch))?;
            let (loss, d_logits) = batch_loss(&trace.logits, &targets, cfg.loss)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    step: epoch,
                    context: format!("loss became {loss} at optimizer step {}", step + 1),
                });
            }
            let mut grads = net.backward_params(&trace, &d_logits)?;
            norm_sum += grad_norm_total(&grads).as_f64();
            add_gradient_noise(&mut grads, cfg.grad_noise_sigma, &mut noise_rng);
            adam_step(&mut net, &grads, &mut adam, lr).map_err(|e| as_divergence(e, epoch))?;
            loss_sum += loss.as_f64() * idx.len() as f64;
            seen += idx.len();
            epoch_steps += 1;
            step += 1;
        }

        let ev = eval.map(|e| evaluate(&net, e, cfg.loss)).transpose().map_err(|e| as_divergence(e, epoch))?;
        let pathways = if net.has_pgnn() {
            let trace = net.forward(&probe.inputs).map_err(|e| as_divergence(e, epoch))?;
            pathway_magnitudes(&trace)?
                .into_iter()
                .map(|p| PathwayMagnitude {
                    layer: p.layer,
                    structured: p.structured.as_f64(),
                    correction: p.correction.as_f64(),
                })
                .collect()
        } else {
            Vec::new()
        };
        log.rows.push(EpochMetrics {
            epoch,
            steps: step,
            train_loss: loss_sum / seen as f64,
            val_loss: ev.map(|e| e.loss),
            accuracy: ev.and_then(|e| e.accuracy),
            grad_norm: norm_sum / epoch_steps as f64,
            pathways,
        });
    }
    log.wall_time_s = started.elapsed().as_secs_f64();
    Ok((net, log))
}

/// Sample standard deviation of the first differences of `losses` over the
/// final quarter of the series (at least three points).
pub fn oscillation_metric(losses: &[f64]) -> Result<f64> {
    let n = losses.len();
    if n < 3 {
        return Err(Error::Undefined(format!("oscillation needs ≥ 3 loss values, got {n}")));
    }
    let tail = n.div_ceil(4).max(3);
    let diffs: Vec<f64> = losses[n - tail..].windows(2).map(|w| w[1] - w[0]).collect();
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64;
    Ok(var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oscillation_of_linear_decay_is_zero() {
        let l: Vec<f64> = (0..20).map(|i| 1.0 - 0.01 * i as f64).collect();
        assert!(oscillation_metric(&l).unwrap() < 1e-12);
        let zig: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
        assert!(oscillation_metric(&zig).unwrap() > 1.0);
        assert!(oscillation_metric(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = TrainConfig::default();
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }
}
