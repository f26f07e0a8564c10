//! Per-seed bodies of the eight experiment kinds.

use std::collections::BTreeMap;
use std::path::Path;

use pgnn_core::diagnostics::{
    cka_linear, correction_load, jacobian_spectrum_batch, layerwise_gap, sov, spectrum_tail_ratio, DiagnosticsReport,
};
use pgnn_core::dynamics::{
    contraction_metric, example_diagonal, example_low_rank, example_orthogonal, iterate, lipschitz_upper_bound,
    verify_unique_fixed_point, ContractionCertificate, RecursiveSystem,
};
use pgnn_core::linalg::ridge_fit_r2;
use pgnn_core::network::{Activation, Layer, Network};
use pgnn_core::rng::{derive_seed, gaussian_vec, substream};
use pgnn_core::shaping::ShapingSpec;
use pgnn_core::tasks::{
    gen_aligned_regression, gen_alignment, gen_linear_noise_classification, load_fmnist, AlignmentParams, Dataset,
    Split,
};
use pgnn_core::training::{evaluate, oscillation_metric, train, MetricsLog, Schedule, TrainConfig};
use pgnn_core::{Error as CoreError, Matrix};
use serde::Serialize;

use crate::config::{DynamicsSection, ExperimentConfig, ExperimentKind, Reference, SystemKind};
use crate::error::{HarnessError, RunContext};
use crate::models::{pgnn_spec, plan_models, ModelPlan};
use crate::results::SeedResult;

/// Data shared by all seeds of a run.
#[derive(Default)]
pub struct Shared {
    pub fmnist: Option<Dataset<f64>>,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Shared, HarnessError> {
    if cfg.kind != ExperimentKind::Fmnist {
        return Ok(Shared::default());
    }
    let dir = cfg.data.fmnist_dir.as_deref().unwrap_or_default();
    let mut ds = load_fmnist::<f64>(Path::new(dir))?;
    if let Some(limit) = cfg.data.train_limit {
        ds.train = ds.train.head(limit);
    }
    Ok(Shared { fmnist: Some(ds) })
}

type ParamCounts = BTreeMap<String, usize>;

pub fn run_seed(cfg: &ExperimentConfig, shared: &Shared, seed: u64, counts: &mut ParamCounts) -> Result<SeedResult, HarnessError> {
    let mut out = SeedResult::new(seed);
    let kind = cfg.kind;
    match kind {
        ExperimentKind::Alignment => {
            let data = alignment_data(cfg, seed).ctx(kind, seed)?;
            supervised(cfg, &data, seed, &mut out, counts).ctx(kind, seed)?;
        }
        ExperimentKind::LinearNoiseCka => {
            let data = classification_data(cfg, seed).ctx(kind, seed)?;
            supervised(cfg, &data, seed, &mut out, counts).ctx(kind, seed)?;
        }
        ExperimentKind::Fmnist => {
            let data = shared.fmnist.as_ref().expect("fmnist data prepared");
            supervised(cfg, data, seed, &mut out, counts).ctx(kind, seed)?;
        }
        ExperimentKind::RankAblation => rank_ablation(cfg, seed, &mut out, counts).ctx(kind, seed)?,
        ExperimentKind::GradNoise => grad_noise(cfg, seed, &mut out, counts).ctx(kind, seed)?,
        ExperimentKind::Decoupling => decoupling(cfg, seed, &mut out, counts).ctx(kind, seed)?,
        ExperimentKind::RecursiveDynamics => {
            for &system in &cfg.dynamics.systems {
                let rep = analyze_system(system, &cfg.dynamics, seed).ctx(kind, seed)?;
                rep.record(&mut out);
            }
        }
        ExperimentKind::AlignmentSensitivity => alignment_sensitivity(cfg, seed, &mut out, counts).ctx(kind, seed)?,
    }
    Ok(out)
}

fn alignment_data(cfg: &ExperimentConfig, seed: u64) -> pgnn_core::Result<Dataset<f64>> {
    let d = &cfg.data;
    gen_alignment(
        AlignmentParams {
            d: d.d,
            m: d.m,
            sigma: d.sigma,
            n_train: d.n_train,
            n_test: d.n_test,
        },
        seed,
    )
}

fn classification_data(cfg: &ExperimentConfig, seed: u64) -> pgnn_core::Result<Dataset<f64>> {
    let d = &cfg.data;
    gen_linear_noise_classification(d.d, d.classes, d.n_train, d.n_test, d.noise_var, seed)
}

fn train_config(cfg: &ExperimentConfig, seed: u64, sigma: f64) -> TrainConfig {
    let t = &cfg.train;
    TrainConfig {
        learning_rate: t.learning_rate,
        batch_size: t.batch_size,
        schedule: match (t.steps, t.epochs) {
            (Some(s), _) => Schedule::Steps(s),
            (None, e) => Schedule::Epochs(e.unwrap_or(0)),
        },
        seed,
        loss: t.loss,
        grad_noise_sigma: sigma,
        probe_samples: cfg.diagnostics.holdout_batch,
    }
}

fn fit(
    cfg: &ExperimentConfig,
    plan: &ModelPlan,
    data: &Dataset<f64>,
    seed: u64,
    sigma: f64,
    counts: &mut ParamCounts,
) -> pgnn_core::Result<(Network<f64>, MetricsLog)> {
    counts.insert(plan.label.clone(), plan.spec.param_count());
    let eval = data.val.as_ref().unwrap_or(&data.test);
    train(plan.init(seed)?, &data.train, Some(eval), &train_config(cfg, seed, sigma))
}

/// Batches the activation diagnostics look at.
pub struct Probe {
    pub train_x: Matrix,
    pub holdout_x: Matrix,
    /// Reference representation of the held-out samples, samples as rows.
    pub holdout_z: Matrix,
    pub jacobian_x: Matrix,
}

impl Probe {
    /// Held-out activations come from the validation split when there is
    /// one, the Jacobian batch from the test split.
    pub fn new(data: &Dataset<f64>, batch: usize, jacobian_samples: usize, reference: Reference) -> pgnn_core::Result<Self> {
        let holdout = data.val.as_ref().unwrap_or(&data.test).head(batch);
        let reference = |s: &Split<f64>| match (reference, &s.latents) {
            (Reference::Latents, Some(z)) => Ok(z.transpose()),
            (Reference::Latents, None) => Err(CoreError::Precondition("this task has no latents".into())),
            (Reference::Targets, _) => Ok(s.targets.as_rows()),
        };
        let jac = data.test.head(jacobian_samples);
        if jac.len() < jacobian_samples {
            return Err(CoreError::Precondition(format!(
                "test split has {} samples, Jacobian batch needs {jacobian_samples}",
                jac.len()
            )));
        }
        Ok(Self {
            train_x: data.train.head(batch).inputs,
            holdout_z: reference(&holdout)?,
            holdout_x: holdout.inputs,
            jacobian_x: jac.inputs,
        })
    }
}

pub fn diagnose(net: &Network<f64>, probe: &Probe, k: usize, ridge_lambda: f64) -> pgnn_core::Result<DiagnosticsReport> {
    let tr = net.forward(&probe.train_x)?;
    let ho = net.forward(&probe.holdout_x)?;
    let mut rep = DiagnosticsReport::default();
    for l in 0..ho.layers.len() {
        let h_ho = ho.activations(l);
        rep.cka.push(cka_linear(&h_ho, &probe.holdout_z)?);
        rep.sov.push(sov(&tr.activations(l), &h_ho, k)?);
        rep.ridge_r2.push(ridge_fit_r2(&h_ho, &probe.holdout_z, ridge_lambda)?);
    }
    rep.jacobian_spectrum = jacobian_spectrum_batch(net, &probe.jacobian_x, probe.jacobian_x.cols())?;
    rep.layerwise_gap = layerwise_gap(net, &probe.train_x, &probe.holdout_x)?;
    if net.has_pgnn() {
        rep.correction_load = correction_load(&ho)?;
    }
    rep.check()?;
    Ok(rep)
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn mean_of(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn record_report(out: &mut SeedResult, model: &str, rep: &DiagnosticsReport) {
    let per_layer = [
        ("cka", &rep.cka),
        ("sov", &rep.sov),
        ("r2", &rep.ridge_r2),
        ("gap", &rep.layerwise_gap),
        ("load", &rep.correction_load),
    ];
    for (name, vals) in per_layer {
        for (i, v) in vals.iter().enumerate() {
            out.scalar(format!("{model}.{name}_l{}", i + 1), *v);
        }
    }
    // best hidden layer per seed
    for (name, vals) in [("cka", &rep.cka), ("sov", &rep.sov), ("r2", &rep.ridge_r2)] {
        if !vals.is_empty() {
            out.scalar(format!("{model}.{name}_best"), max_of(vals));
        }
    }
    for (i, s) in rep.jacobian_spectrum.iter().take(3).enumerate() {
        out.scalar(format!("{model}.jac_s{}", i + 1), *s);
    }
    if rep.jacobian_spectrum.len() > 9 {
        out.scalar(format!("{model}.jac_tail"), spectrum_tail_ratio(&rep.jacobian_spectrum, 9));
    }
    out.diagnostics.insert(model.to_string(), rep.clone());
}

/// Epoch index after which gradient norms count as "late" in training.
pub const LATE_EPOCH: usize = 5;

fn supervised(
    cfg: &ExperimentConfig,
    data: &Dataset<f64>,
    seed: u64,
    out: &mut SeedResult,
    counts: &mut ParamCounts,
) -> pgnn_core::Result<()> {
    let plans = plan_models(&cfg.model, data.input_dim(), data.output_dim())
        .map_err(|e| CoreError::Precondition(e.to_string()))?;
    let probe = if cfg.diagnostics.enabled {
        Some(Probe::new(
            data,
            cfg.diagnostics.holdout_batch,
            cfg.diagnostics.jacobian_samples,
            cfg.diagnostics.reference,
        )?)
    } else {
        None
    };
    for plan in &plans {
        let label = plan.label.as_str();
        let (net, log) = fit(cfg, plan, data, seed, cfg.train.grad_noise_sigma, counts)?;
        out.record_log(label, &log);
        let test = evaluate(&net, &data.test, cfg.train.loss)?;
        out.scalar(format!("{label}.test_loss"), test.loss);
        if let Some(a) = test.accuracy {
            out.scalar(format!("{label}.test_accuracy"), a);
        }
        if let Some(last) = log.last() {
            out.scalar(format!("{label}.final_train_loss"), last.train_loss);
        }
        let late: Vec<f64> = log.rows.iter().filter(|r| r.epoch > LATE_EPOCH).map(|r| r.grad_norm).collect();
        if !late.is_empty() {
            out.scalar(format!("{label}.grad_norm_late"), mean_of(&late));
        }
        if let Some(p) = &probe {
            let rep = diagnose(&net, p, cfg.diagnostics.k, cfg.diagnostics.ridge_lambda)?;
            record_report(out, label, &rep);
        }
    }
    Ok(())
}

fn rank_ablation(cfg: &ExperimentConfig, seed: u64, out: &mut SeedResult, counts: &mut ParamCounts) -> pgnn_core::Result<()> {
    let data = alignment_data(cfg, seed)?;
    let holdout = data.test.head(cfg.diagnostics.holdout_batch);
    for &rank in &cfg.sweep.ranks {
        let shaping = ShapingSpec::LowRank {
            rank,
            scale: 1.0,
            seed: derive_seed("shaping", seed),
        };
        let plan = ModelPlan {
            label: format!("rank{rank}"),
            spec: pgnn_spec(&cfg.model, data.input_dim(), data.output_dim(), shaping),
        };
        let (net, log) = fit(cfg, &plan, &data, seed, cfg.train.grad_noise_sigma, counts)?;
        out.record_log(&plan.label, &log);
        out.scalar(format!("{}.train_loss", plan.label), evaluate(&net, &data.train, cfg.train.loss)?.loss);
        out.scalar(format!("{}.test_loss", plan.label), evaluate(&net, &data.test, cfg.train.loss)?.loss);
        let load = correction_load(&net.forward(&holdout.inputs)?)?;
        for (i, v) in load.iter().enumerate() {
            out.scalar(format!("{}.load_l{}", plan.label, i + 1), *v);
        }
        out.scalar(format!("{}.load", plan.label), mean_of(&load));
    }
    Ok(())
}

/// Metric-name form of a noise level (`0`, `0.01`, ...).
pub fn sigma_tag(sigma: f64) -> String {
    format!("sigma{sigma}")
}

fn grad_noise(cfg: &ExperimentConfig, seed: u64, out: &mut SeedResult, counts: &mut ParamCounts) -> pgnn_core::Result<()> {
    let data = classification_data(cfg, seed)?;
    let plans = plan_models(&cfg.model, data.input_dim(), data.output_dim())
        .map_err(|e| CoreError::Precondition(e.to_string()))?;
    for plan in &plans {
        for &sigma in &cfg.sweep.sigmas {
            let label = format!("{}.{}", plan.label, sigma_tag(sigma));
            let (net, log) = fit(cfg, plan, &data, seed, sigma, counts)?;
            out.record_log(&label, &log);
            out.scalar(format!("{label}.oscillation"), oscillation_metric(&log.train_losses())?);
            let test = evaluate(&net, &data.test, cfg.train.loss)?;
            out.scalar(format!("{label}.test_loss"), test.loss);
            if let Some(a) = test.accuracy {
                out.scalar(format!("{label}.test_accuracy"), a);
            }
        }
    }
    Ok(())
}

fn decoupling(cfg: &ExperimentConfig, seed: u64, out: &mut SeedResult, counts: &mut ParamCounts) -> pgnn_core::Result<()> {
    let data = alignment_data(cfg, seed)?;
    let plans = plan_models(&cfg.model, data.input_dim(), data.output_dim())
        .map_err(|e| CoreError::Precondition(e.to_string()))?;
    for plan in plans.iter().filter(|p| p.is_pgnn()) {
        let label = plan.label.as_str();
        let (_, log) = fit(cfg, plan, &data, seed, cfg.train.grad_noise_sigma, counts)?;
        out.record_log(label, &log);
        let mut means = Vec::with_capacity(log.rows.len());
        for row in &log.rows {
            for p in &row.pathways {
                out.curve(format!("{label}.structured_l{}", p.layer + 1), row.epoch, p.structured);
                out.curve(format!("{label}.correction_l{}", p.layer + 1), row.epoch, p.correction);
            }
            let s = mean_of(&row.pathways.iter().map(|p| p.structured).collect::<Vec<_>>());
            let c = mean_of(&row.pathways.iter().map(|p| p.correction).collect::<Vec<_>>());
            out.curve(format!("{label}.structured"), row.epoch, s);
            out.curve(format!("{label}.correction"), row.epoch, c);
            means.push((s, c));
        }
        if let (Some(first), Some(last)) = (means.first(), means.last()) {
            out.scalar(format!("{label}.structured_first"), first.0);
            out.scalar(format!("{label}.structured_final"), last.0);
            out.scalar(format!("{label}.correction_first"), first.1);
            out.scalar(format!("{label}.correction_final"), last.1);
        }
    }
    Ok(())
}

/// Epochs until the training loss first reaches `threshold`; one past the
/// schedule when it never does.
pub fn epochs_to_threshold(log: &MetricsLog, threshold: f64) -> f64 {
    log.rows
        .iter()
        .find(|r| r.train_loss <= threshold)
        .map_or(log.rows.len() + 1, |r| r.epoch) as f64
}

fn alignment_sensitivity(cfg: &ExperimentConfig, seed: u64, out: &mut SeedResult, counts: &mut ParamCounts) -> pgnn_core::Result<()> {
    let d = cfg.data.d;
    let k = cfg.data.signal_dims;
    let mask: Vec<f64> = (0..d).map(|i| if i < k { 1.0 } else { 0.0 }).collect();
    for (variant, permuted) in [("aligned", false), ("permuted", true)] {
        let data = gen_aligned_regression::<f64>(d, k, permuted, cfg.data.n_train, cfg.data.n_test, seed)?;
        for (name, shaping) in [
            ("structured", ShapingSpec::Diagonal { entries: mask.clone() }),
            ("unstructured", ShapingSpec::Identity),
        ] {
            let plan = ModelPlan {
                label: name.to_string(),
                spec: pgnn_spec(&cfg.model, d, 1, shaping),
            };
            counts.insert(plan.label.clone(), plan.spec.param_count());
            let mut net = plan.init(seed)?;
            if name == "structured" {
                // the prior: signal coordinates pass straight through the mask
                if let Some(Layer::Pgnn(b)) = net.layers.first_mut() {
                    b.weight = Matrix::identity(d);
                }
            }
            let (_, log) = train(net, &data.train, Some(&data.test), &train_config(cfg, seed, 0.0))?;
            let label = format!("{name}.{variant}");
            out.record_log(&label, &log);
            out.scalar(
                format!("{label}.epochs_to_threshold"),
                epochs_to_threshold(&log, cfg.sweep.loss_threshold),
            );
            if let Some(last) = log.last() {
                out.scalar(format!("{label}.final_train_loss"), last.train_loss);
            }
        }
    }
    Ok(())
}

/// Outcome of one recursive system: its certificate, the contraction curve
/// and the multi-start verdict (`None` when verification was refused).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SystemReport {
    pub system: SystemKind,
    pub certificate: ContractionCertificate,
    pub contraction_curve: Vec<f64>,
    pub verified: Option<bool>,
    /// Largest excess of `‖x_t − x*‖` over the geometric rate bound.
    pub banach_excess: Option<f64>,
}

impl SystemReport {
    fn name(&self) -> String {
        serde_json::to_value(self.system)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default()
    }

    pub fn record(&self, out: &mut SeedResult) {
        let n = self.name();
        let c = &self.certificate;
        out.scalar(format!("{n}.l1"), c.l1);
        out.scalar(format!("{n}.l2"), c.l2);
        out.scalar(format!("{n}.gamma"), c.gamma);
        out.scalar(format!("{n}.contractive"), f64::from(u8::from(c.contractive)));
        out.scalar(format!("{n}.refused"), f64::from(u8::from(self.verified.is_none())));
        out.scalar(format!("{n}.verified"), f64::from(u8::from(self.verified == Some(true))));
        if let Some(e) = self.banach_excess {
            out.scalar(format!("{n}.banach_excess"), e);
        }
        for (t, v) in self.contraction_curve.iter().enumerate() {
            out.curve(format!("{n}.contraction"), t + 1, *v);
        }
    }
}

pub fn build_system(kind: SystemKind, dim: usize, seed: u64) -> pgnn_core::Result<RecursiveSystem<f64>> {
    match kind {
        SystemKind::Orthogonal => example_orthogonal(dim, 1.0, seed),
        SystemKind::OrthogonalScaled => example_orthogonal(dim, 0.7, seed),
        SystemKind::LowRank => example_low_rank(dim, seed),
        SystemKind::DiagonalSoftsign => example_diagonal(dim, Activation::Softsign, seed),
        SystemKind::DiagonalElu => example_diagonal(dim, Activation::Elu, seed),
    }
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn analyze_system(kind: SystemKind, cfg: &DynamicsSection, seed: u64) -> pgnn_core::Result<SystemReport> {
    let sys = build_system(kind, cfg.dim, seed)?;
    let certificate = lipschitz_upper_bound(&sys)?;
    let x0: Vec<f64> = gaussian_vec(&mut substream(seed, "x0"), cfg.dim, 1.0);
    let traj = iterate(&sys, &x0, cfg.steps)?;
    let contraction_curve = contraction_metric(&traj);
    let verified = match verify_unique_fixed_point(&sys, cfg.trials, cfg.verify_steps, cfg.tol, seed) {
        Ok(v) => Some(v),
        Err(CoreError::Precondition(_)) => None,
        Err(e) => return Err(e),
    };
    let banach_excess = if certificate.contractive {
        let long = iterate(&sys, &x0, cfg.verify_steps)?;
        let star = long.last();
        let g = certificate.gamma;
        let step0 = norm_diff(&long.states[1], &long.states[0]);
        let worst = long
            .states
            .iter()
            .enumerate()
            .map(|(t, x)| norm_diff(x, star) - g.powi(t as i32) / (1.0 - g) * step0)
            .fold(f64::NEG_INFINITY, f64::max);
        Some(worst)
    } else {
        None
    };
    Ok(SystemReport {
        system: kind,
        certificate,
        contraction_curve,
        verified,
        banach_excess,
    })
}
