use std::collections::BTreeMap;

use pgnn_core::diagnostics::DiagnosticsReport;
use pgnn_core::training::MetricsLog;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

/// One epoch of a model's training log, as written to the metrics CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub loss: f64,
    pub val_loss: Option<f64>,
    pub accuracy: Option<f64>,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelLog {
    pub model: String,
    pub rows: Vec<LogRow>,
}

impl ModelLog {
    pub fn from_metrics(model: impl Into<String>, log: &MetricsLog) -> Self {
        Self {
            model: model.into(),
            rows: log
                .rows
                .iter()
                .map(|r| LogRow {
                    epoch: r.epoch,
                    loss: r.train_loss,
                    val_loss: r.val_loss,
                    accuracy: r.accuracy,
                    grad_norm: r.grad_norm,
                })
                .collect(),
        }
    }
}

/// A point of a per-epoch (or per-step) curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub metric: String,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub logs: Vec<ModelLog>,
    /// Named scalar outcomes; keys are `model.metric` style.
    pub scalars: BTreeMap<String, f64>,
    pub curves: Vec<CurvePoint>,
    pub diagnostics: BTreeMap<String, DiagnosticsReport>,
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl SeedResult {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            ..Default::default()
        }
    }

    pub fn scalar(&mut self, key: impl Into<String>, value: f64) {
        self.scalars.insert(key.into(), value);
    }

    pub fn curve(&mut self, metric: impl Into<String>, epoch: usize, value: f64) {
        self.curves.push(CurvePoint {
            epoch,
            metric: metric.into(),
            value,
        });
    }

    /// Adds the log plus its loss/accuracy/grad-norm curves under `model`.
    pub fn record_log(&mut self, model: &str, log: &MetricsLog) {
        let ml = ModelLog::from_metrics(model, log);
        for r in &ml.rows {
            self.curve(format!("{model}.loss"), r.epoch, r.loss);
            if let Some(v) = r.val_loss {
                self.curve(format!("{model}.val_loss"), r.epoch, v);
            }
            if let Some(a) = r.accuracy {
                self.curve(format!("{model}.accuracy"), r.epoch, a);
            }
            self.curve(format!("{model}.grad_norm"), r.epoch, r.grad_norm);
        }
        self.logs.push(ml);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunResult {
    pub fingerprint: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedResult>,
    /// Trainable parameters per model label.
    pub param_counts: BTreeMap<String, usize>,
    /// CLI flags that replaced config values, as `key=value`.
    pub overrides: Vec<String>,
}

impl RunResult {
    /// Per-seed values of one scalar metric, in seed order.
    pub fn values(&self, metric: &str) -> Vec<f64> {
        self.seeds.iter().filter_map(|s| s.scalars.get(metric).copied()).collect()
    }
}
