use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::HarnessError;
use crate::results::RunResult;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRow {
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveAggregateRow {
    pub epoch: usize,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AggregateResult {
    pub seeds: usize,
    pub scalars: Vec<AggregateRow>,
    pub curves: Vec<CurveAggregateRow>,
}

impl AggregateResult {
    pub fn get(&self, metric: &str) -> Option<&AggregateRow> {
        self.scalars.iter().find(|r| r.metric == metric)
    }
}

/// Mean and sample (n − 1) standard deviation, two-pass.
pub fn mean_sd(values: &[f64]) -> Result<(f64, f64), HarnessError> {
    let n = values.len();
    if n < 2 {
        return Err(HarnessError::Aggregate(format!("standard deviation needs ≥ 2 values, got {n}")));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    Ok((mean, (ss / (n - 1) as f64).sqrt()))
}

/// Scalars and curves are aggregated over seeds; every seed must report
/// the same metric set.
pub fn aggregate(result: &RunResult) -> Result<AggregateResult, HarnessError> {
    let n = result.seeds.len();
    if n < 2 {
        return Err(HarnessError::Aggregate(format!("aggregation needs ≥ 2 seeds, got {n}")));
    }
    let first = &result.seeds[0];
    let mut scalars = Vec::with_capacity(first.scalars.len());
    for metric in first.scalars.keys() {
        let vals = result.values(metric);
        if vals.len() != n {
            return Err(HarnessError::Aggregate(format!("metric {metric} missing for some seeds")));
        }
        let (mean, sd) = mean_sd(&vals)?;
        scalars.push(AggregateRow {
            metric: metric.clone(),
            mean,
            sd,
        });
    }

    // pointwise over seeds; points reported by fewer than two seeds are dropped
    let mut pooled: BTreeMap<(&str, usize), Vec<f64>> = BTreeMap::new();
    for s in &result.seeds {
        for p in &s.curves {
            pooled.entry((p.metric.as_str(), p.epoch)).or_default().push(p.value);
        }
    }
    let curves = pooled
        .into_iter()
        .filter(|(_, v)| v.len() >= 2)
        .map(|((metric, epoch), v)| {
            let (mean, sd) = mean_sd(&v)?;
            Ok(CurveAggregateRow {
                epoch,
                metric: metric.to_string(),
                mean,
                sd,
            })
        })
        .collect::<Result<_, HarnessError>>()?;
    Ok(AggregateResult { seeds: n, scalars, curves })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use crate::results::SeedResult;
    use proptest::prelude::*;

    fn run_with(values: &[f64]) -> RunResult {
        let config = parse_config(r#"{"kind": "alignment"}"#).unwrap();
        let seeds = values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let mut s = SeedResult::new(i as u64);
                s.scalar("m", v);
                s.curve("c", 1, v * 2.0);
                s
            })
            .collect();
        RunResult {
            fingerprint: config.fingerprint(),
            config,
            seeds,
            param_counts: Default::default(),
            overrides: vec![],
        }
    }

    #[test]
    fn hand_values() {
        let (m, sd) = mean_sd(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((m, sd), (2.0, 1.0));
        assert_eq!(mean_sd(&[4.5; 5]).unwrap().1, 0.0);
        assert!(mean_sd(&[1.0]).is_err());
    }

    #[test]
    fn single_seed_rejected_and_rows_counted() {
        assert!(aggregate(&run_with(&[1.0])).is_err());
        let agg = aggregate(&run_with(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(agg.scalars.len(), 1);
        assert_eq!(agg.curves.len(), 1);
        assert_eq!(agg.curves[0].mean, 4.0);
    }

    proptest! {
        #[test]
        fn agrees_with_welford(v in proptest::collection::vec(-1e3f64..1e3, 2..20)) {
            let (m, sd) = mean_sd(&v).unwrap();
            let (mut mean, mut m2) = (0.0, 0.0);
            for (i, &x) in v.iter().enumerate() {
                let delta = x - mean;
                mean += delta / (i + 1) as f64;
                m2 += delta * (x - mean);
            }
            let sd_ref = (m2 / (v.len() - 1) as f64).sqrt();
            prop_assert!((m - mean).abs() <= 1e-12 * mean.abs().max(1.0));
            prop_assert!((sd - sd_ref).abs() <= 1e-12 * sd_ref.max(1.0));
        }
    }
}
