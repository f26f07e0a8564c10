//! Writing runs to disk and reading them back.
//!
//! Floats are written with 17 significant digits so every value re-parses
//! to the identical `f64`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::aggregate::AggregateResult;
use crate::error::HarnessError;
use crate::results::RunResult;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

pub const METRICS_HEADER: [&str; 6] = ["epoch", "loss", "val_loss", "accuracy", "grad_norm", "model"];

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn run_dir(out_dir: &Path, fingerprint: &str) -> PathBuf {
    out_dir.join("runs").join(fingerprint)
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>, HarnessError> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| HarnessError::csv(path, e))
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), HarnessError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| HarnessError::csv(path, e))?;
    for r in rows {
        let rec: Vec<String> = r.into_iter().collect();
        w.write_record(&rec).map_err(|e| HarnessError::csv(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).expect("json value serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn metrics_file(seed: u64) -> String {
    format!("seed{seed}_metrics.csv")
}

fn manifest(result: &RunResult, format: Format, aggregated: bool) -> serde_json::Value {
    json!({
        "fingerprint": result.fingerprint,
        "kind": result.config.kind,
        "config": result.config,
        "prng": pgnn_core::rng::PRNG_NAME,
        "scalar": "f64",
        "param_counts": result.param_counts,
        "overrides": result.overrides,
        "format": format,
        "aggregated": aggregated,
        "crate_version": env!("CARGO_PKG_VERSION"),
        "wall_time_s": result.seeds.iter().map(|s| (s.seed.to_string(), s.wall_time_s)).collect::<BTreeMap<_, _>>(),
    })
}

/// Writes a run under `out_dir/runs/<fingerprint>/` and returns that directory.
pub fn emit(
    result: &RunResult,
    aggregate: Option<&AggregateResult>,
    format: Format,
    out_dir: &Path,
) -> Result<PathBuf, HarnessError> {
    let dir = run_dir(out_dir, &result.fingerprint);
    fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    match format {
        Format::Csv => {
            for s in &result.seeds {
                let rows = s.logs.iter().flat_map(|log| {
                    log.rows.iter().map(move |r| {
                        vec![
                            r.epoch.to_string(),
                            fmt_f64(r.loss),
                            fmt_opt(r.val_loss),
                            fmt_opt(r.accuracy),
                            fmt_f64(r.grad_norm),
                            log.model.clone(),
                        ]
                    })
                });
                write_rows(&dir.join(metrics_file(s.seed)), &METRICS_HEADER, rows)?;
            }
            let scalars = result.seeds.iter().flat_map(|s| {
                s.scalars
                    .iter()
                    .map(move |(k, v)| vec![s.seed.to_string(), k.clone(), fmt_f64(*v)])
            });
            write_rows(&dir.join("scalars.csv"), &["seed", "metric", "value"], scalars)?;
            let curves = result.seeds.iter().flat_map(|s| {
                s.curves
                    .iter()
                    .map(move |p| vec![p.epoch.to_string(), s.seed.to_string(), p.metric.clone(), fmt_f64(p.value)])
            });
            write_rows(&dir.join("curves.csv"), &["epoch", "seed", "metric", "value"], curves)?;
            if let Some(agg) = aggregate {
                let rows = agg.scalars.iter().map(|r| vec![r.metric.clone(), fmt_f64(r.mean), fmt_f64(r.sd)]);
                write_rows(&dir.join("aggregate.csv"), &["metric", "mean", "sd"], rows)?;
                let rows = agg
                    .curves
                    .iter()
                    .map(|r| vec![r.epoch.to_string(), r.metric.clone(), fmt_f64(r.mean), fmt_f64(r.sd)]);
                write_rows(&dir.join("curves_aggregate.csv"), &["epoch", "metric", "mean", "sd"], rows)?;
            }
        }
        Format::Json => {
            let body = json!({
                "fingerprint": result.fingerprint,
                "seeds": result.seeds,
                "aggregate": aggregate,
            });
            write_json(&dir.join("results.json"), &body)?;
        }
    }
    write_json(&dir.join("manifest.json"), &manifest(result, format, aggregate.is_some()))?;
    Ok(dir)
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>, HarnessError> {
    if !path.exists() {
        return Err(HarnessError::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)));
    }
    csv::Reader::from_path(path).map_err(|e| HarnessError::csv(path, e))
}

fn parse_f64(path: &Path, s: &str) -> Result<f64, HarnessError> {
    s.parse().map_err(|_| HarnessError::csv(path, format!("not a number: {s:?}")))
}

/// `scalars.csv` as seed → metric → value.
pub fn read_scalars(dir: &Path) -> Result<BTreeMap<u64, BTreeMap<String, f64>>, HarnessError> {
    let path = dir.join("scalars.csv");
    let mut out: BTreeMap<u64, BTreeMap<String, f64>> = BTreeMap::new();
    for rec in reader(&path)?.records() {
        let rec = rec.map_err(|e| HarnessError::csv(&path, e))?;
        let seed = rec[0].parse().map_err(|_| HarnessError::csv(&path, "bad seed"))?;
        out.entry(seed).or_default().insert(rec[1].to_string(), parse_f64(&path, &rec[2])?);
    }
    Ok(out)
}

/// `aggregate.csv` as metric → (mean, sd).
pub fn read_aggregate(dir: &Path) -> Result<BTreeMap<String, (f64, f64)>, HarnessError> {
    let path = dir.join("aggregate.csv");
    let mut out = BTreeMap::new();
    for rec in reader(&path)?.records() {
        let rec = rec.map_err(|e| HarnessError::csv(&path, e))?;
        out.insert(rec[0].to_string(), (parse_f64(&path, &rec[1])?, parse_f64(&path, &rec[2])?));
    }
    Ok(out)
}

/// Rows of one seed's metrics file, as (model, row).
pub fn read_metrics(path: &Path) -> Result<Vec<(String, crate::results::LogRow)>, HarnessError> {
    let opt = |s: &str| -> Result<Option<f64>, HarnessError> {
        if s.is_empty() {
            Ok(None)
        } else {
            parse_f64(path, s).map(Some)
        }
    };
    let mut out = Vec::new();
    for rec in reader(path)?.records() {
        let rec = rec.map_err(|e| HarnessError::csv(path, e))?;
        out.push((
            rec[5].to_string(),
            crate::results::LogRow {
                epoch: rec[0].parse().map_err(|_| HarnessError::csv(path, "bad epoch"))?,
                loss: parse_f64(path, &rec[1])?,
                val_loss: opt(&rec[2])?,
                accuracy: opt(&rec[3])?,
                grad_norm: parse_f64(path, &rec[4])?,
            },
        ));
    }
    Ok(out)
}

pub fn read_manifest(dir: &Path) -> Result<serde_json::Value, HarnessError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::csv(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, f64::MIN_POSITIVE, 0.0] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
    }

    #[test]
    fn header_only_when_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_rows(&p, &METRICS_HEADER, Vec::<Vec<String>>::new()).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "epoch,loss,val_loss,accuracy,grad_norm,model\n");
    }
}
