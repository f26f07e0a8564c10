//! Experiment configuration: JSON text merged onto per-kind defaults, then
//! deserialized strictly so unknown keys and type errors name their path.

use std::fmt;

use pgnn_core::network::Activation;
use pgnn_core::shaping::ShapingSpec;
use pgnn_core::training::LossKind;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Alignment,
    LinearNoiseCka,
    Fmnist,
    RankAblation,
    GradNoise,
    Decoupling,
    RecursiveDynamics,
    AlignmentSensitivity,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Alignment,
        ExperimentKind::LinearNoiseCka,
        ExperimentKind::Fmnist,
        ExperimentKind::RankAblation,
        ExperimentKind::GradNoise,
        ExperimentKind::Decoupling,
        ExperimentKind::RecursiveDynamics,
        ExperimentKind::AlignmentSensitivity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Alignment => "alignment",
            ExperimentKind::LinearNoiseCka => "linear_noise_cka",
            ExperimentKind::Fmnist => "fmnist",
            ExperimentKind::RankAblation => "rank_ablation",
            ExperimentKind::GradNoise => "grad_noise",
            ExperimentKind::Decoupling => "decoupling",
            ExperimentKind::RecursiveDynamics => "recursive_dynamics",
            ExperimentKind::AlignmentSensitivity => "alignment_sensitivity",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Exactly one of `steps` / `epochs` is set.
    pub steps: Option<usize>,
    pub epochs: Option<usize>,
    pub loss: LossKind,
    pub grad_noise_sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    /// Activation of the baseline dense layers.
    pub activation: Activation,
    pub correction_activation: Activation,
    pub correction_scale: f64,
    /// One structured model per entry.
    pub shapings: Vec<ShapingSpec>,
    pub include_mlp: bool,
    /// Widen the baseline until its parameter count matches the first
    /// structured model (within 2%).
    pub budget_match: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub d: usize,
    pub m: usize,
    pub sigma: f64,
    pub classes: usize,
    pub noise_var: f64,
    pub signal_dims: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Directory with the four FMNIST IDX files.
    pub fmnist_dir: Option<String>,
    /// Use only the first `n` training images (smoke runs).
    pub train_limit: Option<usize>,
}

/// What hidden activations are compared against by CKA and the ridge probe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// Regression targets, or one-hot labels for classification.
    Targets,
    /// The generator's latent `z` (synthetic tasks only).
    Latents,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub enabled: bool,
    pub reference: Reference,
    pub k: usize,
    pub holdout_batch: usize,
    pub jacobian_samples: usize,
    pub ridge_lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub ranks: Vec<usize>,
    pub sigmas: Vec<f64>,
    /// Loss threshold for the epochs-to-threshold convergence measure.
    pub loss_threshold: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    /// Orthogonal `W`, tanh correction: gamma = 1.2.
    Orthogonal,
    /// Same with `‖W‖ = 0.7`: gamma = 0.9.
    OrthogonalScaled,
    /// Low-rank projection, ReLU correction: gamma ≤ 0.8.
    LowRank,
    DiagonalSoftsign,
    DiagonalElu,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    pub systems: Vec<SystemKind>,
    pub dim: usize,
    /// Recorded iterations of the contraction curve.
    pub steps: usize,
    pub verify_steps: usize,
    pub trials: usize,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seeds: Vec<u64>,
    pub output_dir: String,
    pub train: TrainSection,
    pub model: ModelSection,
    pub data: DataSection,
    pub diagnostics: DiagnosticsSection,
    pub sweep: SweepSection,
    pub dynamics: DynamicsSection,
}

fn defaults(kind: ExperimentKind) -> Value {
    let mut v = json!({
        "kind": kind,
        "seeds": [0, 1, 2, 3, 4],
        "output_dir": "out",
        "train": {
            "learning_rate": 1e-3,
            "batch_size": 128,
            "steps": 2000,
            "epochs": null,
            "loss": "mse",
            "grad_noise_sigma": 0.0
        },
        "model": {
            "hidden": [64, 64],
            "activation": "relu",
            "correction_activation": "relu",
            "correction_scale": 1.0,
            "shapings": [{"kind": "identity"}],
            "include_mlp": true,
            "budget_match": true
        },
        "data": {
            "d": 16,
            "m": 4,
            "sigma": 0.05,
            "classes": 2,
            "noise_var": pgnn_core::tasks::CLASSIFICATION_NOISE_VAR,
            "signal_dims": 4,
            "n_train": 8192,
            "n_test": 512,
            "fmnist_dir": null,
            "train_limit": null
        },
        "diagnostics": {
            "enabled": true,
            "reference": "targets",
            "k": 16,
            "holdout_batch": 512,
            "jacobian_samples": 32,
            "ridge_lambda": 1e-3
        },
        "sweep": {
            "ranks": [],
            "sigmas": [],
            "loss_threshold": 0.1
        },
        "dynamics": {
            "systems": [],
            "dim": 16,
            "steps": 20,
            "verify_steps": 100,
            "trials": 10,
            "tol": 1e-6
        }
    });
    let patch = match kind {
        ExperimentKind::Alignment => json!({"diagnostics": {"reference": "latents"}}),
        ExperimentKind::LinearNoiseCka => json!({"train": {"loss": "cross_entropy"}}),
        ExperimentKind::Fmnist => json!({
            "train": {"steps": null, "epochs": 20, "loss": "cross_entropy"},
            "model": {"hidden": [128, 128], "shapings": [{"kind": "identity"}, {"kind": "dct_low_pass", "keep_fraction": 0.25}]},
            "data": {"fmnist_dir": "data/fashion-mnist"}
        }),
        ExperimentKind::RankAblation => json!({
            "model": {"hidden": [16, 16], "shapings": [], "include_mlp": false, "budget_match": false},
            "sweep": {"ranks": [16, 12, 8, 4, 2]}
        }),
        ExperimentKind::GradNoise => json!({
            "train": {"loss": "cross_entropy"},
            "sweep": {"sigmas": [0.0, 0.01, 0.05]}
        }),
        ExperimentKind::Decoupling => json!({
            "train": {"steps": null, "epochs": 20},
            "model": {"include_mlp": false, "budget_match": false}
        }),
        ExperimentKind::RecursiveDynamics => json!({
            "dynamics": {"systems": ["orthogonal", "orthogonal_scaled", "low_rank", "diagonal_softsign", "diagonal_elu"]}
        }),
        ExperimentKind::AlignmentSensitivity => json!({
            "train": {"steps": null, "epochs": 30},
            "model": {"hidden": [16], "include_mlp": false, "budget_match": false},
            "data": {"m": 1, "n_train": 4096}
        }),
    };
    merge(&mut v, patch);
    v
}

/// Recursively overlays `patch` onto `base`; objects merge key by key,
/// everything else is replaced.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

fn config_error(path: impl Into<String>, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        path: path.into(),
        message: message.into(),
    }
}

/// Parses a JSON config, fills every default for its kind and validates it.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, HarnessError> {
    let user: Value = serde_json::from_str(text).map_err(|e| config_error("$", e.to_string()))?;
    let obj = user
        .as_object()
        .ok_or_else(|| config_error("$", "config must be a JSON object"))?;
    let kind_value = obj.get("kind").ok_or_else(|| config_error("kind", "missing required field"))?;
    let kind: ExperimentKind =
        serde_json::from_value(kind_value.clone()).map_err(|e| config_error("kind", e.to_string()))?;
    let mut resolved = defaults(kind);
    merge(&mut resolved, user);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(resolved).map_err(|e| {
        let path = e.path().to_string();
        config_error(path, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() {
            return Err(config_error("seeds", "at least one seed is required"));
        }
        match (self.train.steps, self.train.epochs) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err(config_error("train", "set exactly one of `steps` and `epochs`")),
        }
        if !(self.train.learning_rate > 0.0) {
            return Err(config_error("train.learning_rate", "must be > 0"));
        }
        if self.train.batch_size == 0 {
            return Err(config_error("train.batch_size", "must be ≥ 1"));
        }
        if !(self.train.grad_noise_sigma >= 0.0) || self.sweep.sigmas.iter().any(|s| !(*s >= 0.0)) {
            return Err(config_error("train.grad_noise_sigma", "noise levels must be ≥ 0"));
        }
        if self.model.hidden.is_empty() || self.model.hidden.contains(&0) {
            return Err(config_error("model.hidden", "need at least one positive width"));
        }
        let needs_models = !matches!(
            self.kind,
            ExperimentKind::RankAblation | ExperimentKind::RecursiveDynamics | ExperimentKind::AlignmentSensitivity
        );
        if needs_models && self.model.shapings.is_empty() && !self.model.include_mlp {
            return Err(config_error("model", "no models selected"));
        }
        if self.data.m == 0 || self.data.m > self.data.d {
            return Err(config_error("data.m", "need 1 ≤ m ≤ d"));
        }
        match self.kind {
            ExperimentKind::Fmnist if self.data.fmnist_dir.is_none() => {
                return Err(config_error("data.fmnist_dir", "required for fmnist runs"));
            }
            ExperimentKind::RankAblation if self.sweep.ranks.is_empty() => {
                return Err(config_error("sweep.ranks", "rank ablation needs ranks"));
            }
            ExperimentKind::GradNoise if self.sweep.sigmas.is_empty() => {
                return Err(config_error("sweep.sigmas", "gradient-noise runs need sigmas"));
            }
            ExperimentKind::RecursiveDynamics if self.dynamics.systems.is_empty() => {
                return Err(config_error("dynamics.systems", "no systems selected"));
            }
            ExperimentKind::Decoupling if self.model.shapings.is_empty() => {
                return Err(config_error("model.shapings", "decoupling needs a structured model"));
            }
            ExperimentKind::AlignmentSensitivity if self.model.hidden != [self.data.d] => {
                return Err(config_error("model.hidden", "alignment sensitivity uses one hidden layer of width d"));
            }
            ExperimentKind::AlignmentSensitivity if self.data.signal_dims == 0 || self.data.signal_dims > self.data.d => {
                return Err(config_error("data.signal_dims", "need 1 ≤ signal_dims ≤ d"));
            }
            _ => {}
        }
        if self.diagnostics.k == 0 || self.diagnostics.jacobian_samples == 0 || self.diagnostics.holdout_batch <= self.diagnostics.k {
            return Err(config_error("diagnostics", "need k ≥ 1, jacobian_samples ≥ 1, holdout_batch > k"));
        }
        Ok(())
    }

    /// Sorted-key JSON of the fully resolved config.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&self.canonical_value()).expect("config serializes")
    }

    fn canonical_value(&self) -> Value {
        // serde_json's default map is ordered by key
        serde_json::to_value(self).expect("config serializes")
    }

    /// SHA-256 (first 16 hex digits) of the canonical config, ignoring
    /// where outputs are written.
    pub fn fingerprint(&self) -> String {
        let mut v = self.canonical_value();
        if let Value::Object(m) = &mut v {
            m.remove("output_dir");
        }
        let digest = Sha256::digest(serde_json::to_string(&v).expect("serializes").as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_map(&self) -> Map<String, Value> {
        match self.canonical_value() {
            Value::Object(m) => m,
            _ => unreachable!("config is an object"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_alignment_fills_defaults() {
        let cfg = parse_config(r#"{"kind": "alignment"}"#).unwrap();
        assert_eq!((cfg.data.d, cfg.data.m, cfg.data.sigma), (16, 4, 0.05));
        assert_eq!(cfg.train.steps, Some(2000));
        assert_eq!(cfg.train.learning_rate, 1e-3);
        assert_eq!(cfg.train.batch_size, 128);
        assert_eq!(cfg.diagnostics.k, 16);
        assert_eq!(cfg.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(cfg.model.hidden, vec![64, 64]);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config(r#"{"kind": "alignment", "model": {"widht": 3}}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("widht") && msg.contains("model"), "{msg}");
    }

    #[test]
    fn type_mismatch_names_path() {
        let err = parse_config(r#"{"kind": "alignment", "train": {"batch_size": "big"}}"#).unwrap_err();
        assert!(err.to_string().contains("train.batch_size"), "{err}");
        assert!(parse_config(r#"{"seeds": [1]}"#).unwrap_err().to_string().contains("kind"));
    }

    #[test]
    fn canonical_round_trip_and_stable_fingerprint() {
        for kind in ExperimentKind::ALL {
            let cfg = parse_config(&format!(r#"{{"kind": "{kind}", "seeds": [3, 4]}}"#)).unwrap();
            let again = parse_config(&cfg.canonical_json()).unwrap();
            assert_eq!(cfg, again);
            assert_eq!(cfg.fingerprint(), again.fingerprint());
        }
        let a = parse_config(r#"{"kind": "alignment", "seeds": [1, 2], "train": {"batch_size": 64, "learning_rate": 0.01}}"#).unwrap();
        let b = parse_config(r#"{"train": {"learning_rate": 0.01, "batch_size": 64}, "seeds": [1, 2], "kind": "alignment"}"#).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = parse_config(r#"{"kind": "alignment", "seeds": [1, 2], "output_dir": "elsewhere", "train": {"batch_size": 64, "learning_rate": 0.01}}"#).unwrap();
        assert_eq!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn schedule_must_be_unambiguous() {
        assert!(parse_config(r#"{"kind": "alignment", "train": {"epochs": 3}}"#).is_err());
        assert!(parse_config(r#"{"kind": "alignment", "train": {"epochs": 3, "steps": null}}"#).is_ok());
        assert!(parse_config(r#"{"kind": "alignment", "seeds": []}"#).is_err());
    }
}
