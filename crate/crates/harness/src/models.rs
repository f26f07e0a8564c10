use pgnn_core::network::{init_params, BlockSpec, InitScheme, Network, NetworkSpec};
use pgnn_core::rng::derive_seed;
use pgnn_core::shaping::ShapingSpec;

use crate::config::ModelSection;
use crate::error::HarnessError;

/// A named architecture to instantiate once per seed.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelPlan {
    pub label: String,
    pub spec: NetworkSpec,
}

impl ModelPlan {
    /// Initialization is seeded per label so paired models never share a stream.
    pub fn init(&self, seed: u64) -> pgnn_core::Result<Network<f64>> {
        init_params(&self.spec, derive_seed(&self.label, seed), InitScheme::UniformFanIn)
    }

    pub fn is_pgnn(&self) -> bool {
        self.spec.block.is_pgnn()
    }
}

/// Short identifier used in metric names.
pub fn shaping_slug(s: &ShapingSpec) -> String {
    match s {
        ShapingSpec::Identity => "pgnn".into(),
        ShapingSpec::DctLowPass { .. } => "pgnn_dct".into(),
        ShapingSpec::LowRank { rank, .. } => format!("pgnn_rank{rank}"),
        ShapingSpec::Diagonal { .. } => "pgnn_diag".into(),
    }
}

pub fn pgnn_spec(model: &ModelSection, input_dim: usize, output_dim: usize, shaping: ShapingSpec) -> NetworkSpec {
    NetworkSpec {
        input_dim,
        hidden: model.hidden.clone(),
        output_dim,
        block: BlockSpec::Pgnn {
            shaping,
            correction_activation: model.correction_activation,
            correction_scale: model.correction_scale,
        },
    }
}

/// Structured models in config order, then the baseline. A budget-matched
/// baseline keeps the depth and picks the width whose parameter count is
/// closest to the first structured model's.
pub fn plan_models(model: &ModelSection, input_dim: usize, output_dim: usize) -> Result<Vec<ModelPlan>, HarnessError> {
    let mut plans: Vec<ModelPlan> = Vec::new();
    for s in &model.shapings {
        let label = shaping_slug(s);
        if plans.iter().any(|p| p.label == label) {
            return Err(HarnessError::Config {
                path: "model.shapings".into(),
                message: format!("two shapings map to the model name `{label}`"),
            });
        }
        plans.push(ModelPlan {
            label,
            spec: pgnn_spec(model, input_dim, output_dim, s.clone()),
        });
    }
    if model.include_mlp {
        let spec = match plans.first() {
            Some(reference) if model.budget_match => NetworkSpec::budget_matched_mlp(
                input_dim,
                model.hidden.len(),
                output_dim,
                reference.spec.param_count(),
                model.activation,
            ),
            _ => NetworkSpec {
                input_dim,
                hidden: model.hidden.clone(),
                output_dim,
                block: BlockSpec::Mlp {
                    activation: model.activation,
                },
            },
        };
        plans.push(ModelPlan { label: "mlp".into(), spec });
    }
    Ok(plans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn baseline_within_two_percent() {
        for (kind, d, out) in [("alignment", 16, 4), ("fmnist", 784, 10)] {
            let cfg = parse_config(&format!(r#"{{"kind": "{kind}"}}"#)).unwrap();
            let plans = plan_models(&cfg.model, d, out).unwrap();
            let mlp = plans.iter().find(|p| p.label == "mlp").unwrap();
            let target = plans[0].spec.param_count() as f64;
            let got = mlp.spec.param_count() as f64;
            assert!((got - target).abs() / target <= 0.02, "{kind}: {got} vs {target}");
        }
    }

    #[test]
    fn labels_and_seeding() {
        let cfg = parse_config(r#"{"kind": "fmnist"}"#).unwrap();
        let plans = plan_models(&cfg.model, 784, 10).unwrap();
        let labels: Vec<_> = plans.iter().map(|p| p.label.as_str()).collect();
        assert_eq!(labels, ["pgnn", "pgnn_dct", "mlp"]);
        let small = parse_config(r#"{"kind": "alignment"}"#).unwrap();
        let p = &plan_models(&small.model, 16, 4).unwrap()[0];
        assert_eq!(p.init(1).unwrap(), p.init(1).unwrap());
        assert_ne!(p.init(1).unwrap(), p.init(2).unwrap());
    }
}
