//! Report serialization. Floats are rounded to six significant digits and
//! object keys are sorted, so identical results give identical bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::CallPosterior;
use crate::error::{Error, Result};
use crate::model::Params;
use crate::pipeline::{ComparisonRow, TrueValues};
use crate::sampler::Diagnostics;

pub const SIGNIFICANT_DIGITS: usize = 6;

/// Rounds to `digits` significant decimal digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x)
        .parse()
        .expect("formatted float parses")
}

fn fmt_sig(x: f64) -> String {
    if x.is_finite() {
        format!("{}", round_sig(x, SIGNIFICANT_DIGITS))
    } else {
        String::new()
    }
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            *v = serde_json::Number::from_f64(round_sig(x, SIGNIFICANT_DIGITS)).map_or(Value::Null, Value::Number);
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with rounded floats and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value)?)
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Input(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// `call_id, post_mean, post_lo95, post_hi95`.
pub fn per_call_csv(rows: &[CallPosterior]) -> Result<String> {
    csv_string(
        &["call_id", "post_mean", "post_lo95", "post_hi95"],
        rows.iter().map(|c| {
            vec![
                c.call_id.clone(),
                fmt_sig(c.post_mean),
                fmt_sig(c.post_lo95),
                fmt_sig(c.post_hi95),
            ]
        }),
    )
}

/// `method, corr, fpr, fnr, tau, eta`; a missing value is an empty field.
pub fn comparison_csv(rows: &[ComparisonRow]) -> Result<String> {
    csv_string(
        &["method", "corr", "fpr", "fnr", "tau", "eta"],
        rows.iter().map(|r| {
            vec![
                r.method.clone(),
                fmt_sig(r.corr),
                fmt_sig(r.fpr),
                fmt_sig(r.fnr),
                fmt_sig(r.tau),
                r.eta.map(fmt_sig).unwrap_or_default(),
            ]
        }),
    )
}

/// A named sample of posterior draws for one method.
pub struct Series<'a> {
    pub method: &'a str,
    pub quantity: &'a str,
    pub values: &'a [f64],
}

/// Equal-width histograms, one block per series:
/// `method, quantity, bin_lo, bin_hi, count, density`.
pub fn histogram_csv(series: &[Series<'_>], bins: usize) -> Result<String> {
    let mut rows = Vec::new();
    for s in series {
        if s.values.is_empty() {
            continue;
        }
        let lo = s.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = s.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let mut counts = vec![0usize; bins];
        for &v in s.values {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let n = s.values.len() as f64;
        for (b, &count) in counts.iter().enumerate() {
            let left = lo + b as f64 * width;
            rows.push(vec![
                s.method.to_string(),
                s.quantity.to_string(),
                fmt_sig(left),
                fmt_sig(left + width),
                count.to_string(),
                fmt_sig(count as f64 / (n * width)),
            ]);
        }
    }
    csv_string(&["method", "quantity", "bin_lo", "bin_hi", "count", "density"], rows)
}

/// Per-call posterior means next to the true state: `method, call_id, d_true, post_mean`.
pub fn posterior_by_state_csv(entries: &[(&str, &[CallPosterior])], states: &[u8]) -> Result<String> {
    let mut rows = Vec::new();
    for (method, calls) in entries {
        for (c, d) in calls.iter().zip(states) {
            rows.push(vec![
                method.to_string(),
                c.call_id.clone(),
                d.to_string(),
                fmt_sig(c.post_mean),
            ]);
        }
    }
    csv_string(&["method", "call_id", "d_true", "post_mean"], rows)
}

/// Written next to simulated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimManifest {
    pub software_version: String,
    pub seed: u64,
    pub config_digest: String,
    pub dataset_digest: String,
    pub effective_config: String,
    pub truth: Params,
    pub true_values: TrueValues,
    pub notes: Vec<String>,
}

impl SimManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSummary {
    pub max_rhat: Option<f64>,
    pub min_ess: Option<f64>,
    pub divergences: usize,
    pub passed: bool,
}

impl From<&Diagnostics> for DiagnosticsSummary {
    fn from(d: &Diagnostics) -> Self {
        DiagnosticsSummary {
            max_rhat: d.max_rhat(),
            min_ess: d.min_ess(),
            divergences: d.divergences,
            passed: d.passed(),
        }
    }
}

/// Per-invocation record. Kept apart from the reports because it carries the
/// wall-clock duration, which differs between otherwise identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub software_version: String,
    pub master_seed: u64,
    pub config_digest: String,
    pub dataset_digest: String,
    pub wall_clock_seconds: f64,
    pub diagnostics: Vec<(String, DiagnosticsSummary)>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(round_sig(0.123_456_789, 6), 0.123_457);
        assert_eq!(round_sig(-1234.5678, 6), -1234.57);
        assert_eq!(round_sig(0.0, 6), 0.0);
        assert_eq!(round_sig(1e-20 * 3.333_333_3, 6), 3.33333e-20);
    }

    #[test]
    fn json_is_rounded_and_stable() {
        #[derive(Serialize)]
        struct T {
            b: f64,
            a: Vec<f64>,
            n: u32,
        }
        let t = T {
            b: 2.0 / 3.0,
            a: vec![1.0 / 7.0],
            n: 3,
        };
        let s = to_json(&t).unwrap();
        assert_eq!(s, to_json(&t).unwrap());
        assert!(s.contains("0.666667"), "{s}");
        assert!(s.contains("0.142857"));
        assert!(s.find("\"a\"").unwrap() < s.find("\"b\"").unwrap());
    }

    #[test]
    fn comparison_csv_has_one_row_per_method() {
        let row = |m: &str| ComparisonRow {
            method: m.into(),
            corr: 0.9,
            auc: None,
            fpr: 0.1,
            fnr: 0.2,
            tau: -0.7,
            eta: None,
            converged: None,
        };
        let csv = comparison_csv(&[row("base-5"), row("ext-5"), row("mv-5")]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "method,corr,fpr,fnr,tau,eta");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[3], "mv-5,0.9,0.1,0.2,-0.7,");
    }

    #[test]
    fn histogram_counts_every_value() {
        let v: Vec<f64> = (0..100).map(|i| i as f64 / 10.0).collect();
        let csv = histogram_csv(&[Series { method: "m", quantity: "tau", values: &v }], 10).unwrap();
        let total: usize = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(4).unwrap().parse::<usize>().unwrap())
            .sum();
        assert_eq!(total, 100);
    }
}
