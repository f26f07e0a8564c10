//! Markdown summary of a finished FMNIST run, rebuilt from its CSV files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::emit::{read_aggregate, read_manifest, read_scalars};
use crate::error::HarnessError;

pub const REPORT_FILE: &str = "fmnist_report.md";

fn cell(agg: &BTreeMap<String, (f64, f64)>, key: &str) -> String {
    agg.get(key)
        .map_or_else(|| "n/a".to_string(), |(m, s)| format!("{m:.4} ± {s:.4}"))
}

/// Seeds where `pred(a, b)` holds for metric `key` of models `a` and `b`.
fn count_seeds(
    scalars: &BTreeMap<u64, BTreeMap<String, f64>>,
    a: &str,
    b: &str,
    key: &str,
    pred: impl Fn(f64, f64) -> bool,
) -> (usize, usize) {
    let mut hits = 0;
    let mut total = 0;
    for per_seed in scalars.values() {
        if let (Some(&x), Some(&y)) = (per_seed.get(&format!("{a}.{key}")), per_seed.get(&format!("{b}.{key}"))) {
            total += 1;
            hits += usize::from(pred(x, y));
        }
    }
    (hits, total)
}

pub fn fmnist_report(dir: &Path) -> Result<String, HarnessError> {
    let manifest = read_manifest(dir)?;
    if manifest["kind"] != "fmnist" {
        return Err(HarnessError::Config {
            path: "kind".into(),
            message: format!("{} is not an fmnist run (kind {})", dir.display(), manifest["kind"]),
        });
    }
    let agg = read_aggregate(dir)?;
    let scalars = read_scalars(dir)?;
    let counts: BTreeMap<String, u64> = serde_json::from_value(manifest["param_counts"].clone()).unwrap_or_default();
    let layers = (1..).take_while(|l| counts.keys().any(|m| agg.contains_key(&format!("{m}.cka_l{l}")))).count();

    let mut out = String::new();
    let _ = writeln!(out, "# FMNIST run {}\n", manifest["fingerprint"].as_str().unwrap_or("?"));
    let _ = writeln!(out, "Seeds: {}. Values are mean ± sd over seeds.\n", scalars.len());
    let mut header = String::from("| model | params | test accuracy |");
    for l in 1..=layers {
        let _ = write!(header, " CKA L{l} | SOV L{l} |");
    }
    header.push_str(" σ1 | σ2 | σ3 | σ10/σ1 | grad norm (late) |");
    let _ = writeln!(out, "{header}");
    let _ = writeln!(out, "|{}", "---|".repeat(header.matches('|').count() - 1));
    for (model, params) in &counts {
        let mut row = format!("| {model} | {params} | {} |", cell(&agg, &format!("{model}.test_accuracy")));
        for l in 1..=layers {
            let _ = write!(
                row,
                " {} | {} |",
                cell(&agg, &format!("{model}.cka_l{l}")),
                cell(&agg, &format!("{model}.sov_l{l}"))
            );
        }
        for key in ["jac_s1", "jac_s2", "jac_s3", "jac_tail", "grad_norm_late"] {
            let _ = write!(row, " {} |", cell(&agg, &format!("{model}.{key}")));
        }
        let _ = writeln!(out, "{row}");
    }
    if counts.contains_key("mlp") {
        let _ = writeln!(out, "\nPer-seed comparisons against the MLP:\n");
        for model in counts.keys().filter(|m| *m != "mlp") {
            let (a, n) = count_seeds(&scalars, model, "mlp", "jac_s1", |x, y| x > y);
            let (b, _) = count_seeds(&scalars, model, "mlp", "jac_tail", |x, y| x < y);
            let (c, _) = count_seeds(&scalars, model, "mlp", "grad_norm_late", |x, y| x < y);
            let _ = writeln!(
                out,
                "- {model}: larger σ1 in {a}/{n} seeds, smaller σ10/σ1 in {b}/{n}, lower late gradient norm in {c}/{n}"
            );
        }
    }
    let path = dir.join(REPORT_FILE);
    fs::write(&path, &out).map_err(|e| HarnessError::io(&path, e))?;
    Ok(out)
}
