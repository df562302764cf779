//! Ratings and truth CSV files.
//!
//! Long format has one row per rating round: `call_id, round, rating`, then
//! optional `treatment` and `difficulty` columns; every other column is a
//! covariate. Wide format has one row per call with `call_id, k, n` in place of
//! the round columns. Column order is free on input.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{CallRecord, RatingDataset};
use crate::simulator::SimTruth;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CsvFormat {
    Long,
    Wide,
}

impl std::str::FromStr for CsvFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "long" => Ok(CsvFormat::Long),
            "wide" => Ok(CsvFormat::Wide),
            _ => Err(Error::Config(format!("unknown CSV format {s:?} (expected long or wide)"))),
        }
    }
}

const LONG_KEYS: [&str; 3] = ["call_id", "round", "rating"];
const WIDE_KEYS: [&str; 3] = ["call_id", "k", "n"];
const OPTIONAL_KEYS: [&str; 2] = ["treatment", "difficulty"];

struct Columns {
    format: CsvFormat,
    call_id: usize,
    a: usize,
    b: usize,
    treatment: Option<usize>,
    difficulty: Option<usize>,
    covariates: Vec<(usize, String)>,
}

impl Columns {
    fn resolve(headers: &csv::StringRecord, format: Option<CsvFormat>) -> Result<Self> {
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let has = |keys: &[&str]| keys.iter().all(|k| find(k).is_some());
        let format = match format {
            Some(f) => f,
            None if has(&LONG_KEYS) => CsvFormat::Long,
            None if has(&WIDE_KEYS) => CsvFormat::Wide,
            None => {
                return Err(Error::Ingest {
                    row: 1,
                    message: "header must contain either call_id, round, rating or call_id, k, n".into(),
                })
            }
        };
        let keys = match format {
            CsvFormat::Long => LONG_KEYS,
            CsvFormat::Wide => WIDE_KEYS,
        };
        let need = |name: &str| {
            find(name).ok_or_else(|| Error::Ingest {
                row: 1,
                message: format!("missing required column {name:?}"),
            })
        };
        // without a treatment column every call counts as untreated
        let treatment = find("treatment");
        let covariates = headers
            .iter()
            .enumerate()
            .filter(|(_, h)| {
                let h = h.trim();
                !keys.contains(&h) && !OPTIONAL_KEYS.contains(&h)
            })
            .map(|(i, h)| (i, h.trim().to_string()))
            .collect();
        Ok(Columns {
            format,
            call_id: need(keys[0])?,
            a: need(keys[1])?,
            b: need(keys[2])?,
            treatment,
            difficulty: find("difficulty"),
            covariates,
        })
    }
}

fn field<'a>(rec: &'a csv::StringRecord, idx: usize, row: usize, name: &str) -> Result<&'a str> {
    rec.get(idx).map(str::trim).ok_or_else(|| Error::Ingest {
        row,
        message: format!("missing value for {name}"),
    })
}

fn parse_f64(s: &str, row: usize, name: &str) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| Error::Ingest {
        row,
        message: format!("{name} value {s:?} is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Ingest {
            row,
            message: format!("{name} value {s:?} is not finite"),
        });
    }
    Ok(v)
}

fn parse_u32(s: &str, row: usize, name: &str) -> Result<u32> {
    s.parse().map_err(|_| Error::Ingest {
        row,
        message: format!("{name} value {s:?} is not a non-negative integer"),
    })
}

fn parse_binary(s: &str, row: usize, name: &str) -> Result<bool> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(Error::Ingest {
            row,
            message: format!("{name} must be 0 or 1, got {s:?}"),
        }),
    }
}

/// Accumulates the rows of one call in long format.
struct PartialCall {
    rounds: Vec<(u32, u8, usize)>,
    covariates: Vec<f64>,
    treatment: bool,
    difficulty: Vec<f64>,
}

/// Reads a ratings CSV; the format is detected from the header when `format` is `None`.
pub fn read_ratings<R: Read>(input: R, format: Option<CsvFormat>) -> Result<RatingDataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    let cols = Columns::resolve(&headers, format)?;
    let names: Vec<String> = cols.covariates.iter().map(|(_, n)| n.clone()).collect();

    let mut order: Vec<String> = Vec::new();
    let mut calls: HashMap<String, PartialCall> = HashMap::new();
    let mut wide_records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        // header is row 1
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Ingest {
            row,
            message: e.to_string(),
        })?;
        let call_id = field(&rec, cols.call_id, row, "call_id")?.to_string();
        if call_id.is_empty() {
            return Err(Error::Ingest {
                row,
                message: "empty call_id".into(),
            });
        }
        let covariates = cols
            .covariates
            .iter()
            .map(|(idx, name)| parse_f64(field(&rec, *idx, row, name)?, row, name))
            .collect::<Result<Vec<_>>>()?;
        let treatment = match cols.treatment {
            Some(idx) => parse_binary(field(&rec, idx, row, "treatment")?, row, "treatment")?,
            None => false,
        };
        let difficulty = match cols.difficulty {
            Some(idx) => Some(parse_f64(field(&rec, idx, row, "difficulty")?, row, "difficulty")?),
            None => None,
        };
        match cols.format {
            CsvFormat::Wide => {
                let k = parse_u32(field(&rec, cols.a, row, "k")?, row, "k")?;
                let n = parse_u32(field(&rec, cols.b, row, "n")?, row, "n")?;
                if n == 0 || k > n {
                    return Err(Error::Ingest {
                        row,
                        message: format!("need 0 <= k <= n and n >= 1, got k={k}, n={n}"),
                    });
                }
                let mut r = CallRecord::new(call_id, k, n, covariates, treatment);
                r.difficulty = difficulty;
                wide_records.push((row, r));
            }
            CsvFormat::Long => {
                let round = parse_u32(field(&rec, cols.a, row, "round")?, row, "round")?;
                let rating = u8::from(parse_binary(field(&rec, cols.b, row, "rating")?, row, "rating")?);
                match calls.get_mut(&call_id) {
                    None => {
                        order.push(call_id.clone());
                        calls.insert(
                            call_id,
                            PartialCall {
                                rounds: vec![(round, rating, row)],
                                covariates,
                                treatment,
                                difficulty: difficulty.into_iter().collect(),
                            },
                        );
                    }
                    Some(call) => {
                        if call.treatment != treatment {
                            return Err(Error::Ingest {
                                row,
                                message: format!("treatment varies within call {call_id}"),
                            });
                        }
                        if let Some(j) = (0..covariates.len()).find(|&j| call.covariates[j] != covariates[j]) {
                            return Err(Error::Ingest {
                                row,
                                message: format!("covariate {:?} varies within call {call_id}", names[j]),
                            });
                        }
                        call.rounds.push((round, rating, row));
                        call.difficulty.extend(difficulty);
                    }
                }
            }
        }
    }

    let records = match cols.format {
        CsvFormat::Wide => {
            let mut seen = HashMap::new();
            for (row, r) in &wide_records {
                if let Some(first) = seen.insert(r.call_id.clone(), *row) {
                    return Err(Error::Ingest {
                        row: *row,
                        message: format!("call {} already appeared on row {first}", r.call_id),
                    });
                }
            }
            wide_records.into_iter().map(|(_, r)| r).collect()
        }
        CsvFormat::Long => order
            .into_iter()
            .map(|id| {
                let mut call = calls.remove(&id).expect("recorded call");
                call.rounds.sort_by_key(|&(round, _, _)| round);
                if let Some(w) = call.rounds.windows(2).find(|w| w[0].0 == w[1].0) {
                    return Err(Error::Ingest {
                        row: w[1].2,
                        message: format!("round {} repeated for call {id}", w[1].0),
                    });
                }
                let rounds: Vec<u8> = call.rounds.iter().map(|&(_, r, _)| r).collect();
                let mut r = CallRecord::from_rounds(id, rounds, call.covariates, call.treatment);
                r.difficulty = average_difficulty(&call.difficulty);
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()?,
    };
    if records.is_empty() {
        return Err(Error::Ingest {
            row: 1,
            message: "no data rows".into(),
        });
    }
    RatingDataset::new(records, names)
}

/// Mean of the per-round reports; identical reports are kept exactly.
fn average_difficulty(values: &[f64]) -> Option<f64> {
    let first = *values.first()?;
    if values.iter().all(|&v| v == first) {
        return Some(first);
    }
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

pub fn read_ratings_file(path: &Path, format: Option<CsvFormat>) -> Result<RatingDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_ratings(std::io::BufReader::new(file), format)
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Writes a dataset in long format; requires per-round ratings.
pub fn write_long<W: Write>(data: &RatingDataset, out: W) -> Result<()> {
    if !data.has_rounds() {
        return Err(Error::Input(
            "long format needs per-round ratings; write the wide format instead".into(),
        ));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["call_id".to_string(), "round".into(), "rating".into(), "treatment".into()];
    if data.has_difficulty() {
        header.push("difficulty".into());
    }
    header.extend(data.covariate_names().iter().cloned());
    w.write_record(&header)?;
    for r in data.records() {
        let rounds = r.rounds.as_ref().expect("checked above");
        for (i, rating) in rounds.iter().enumerate() {
            let mut row = vec![r.call_id.clone(), (i + 1).to_string(), rating.to_string()];
            row.push(u8::from(r.treatment).to_string());
            if let Some(h) = r.difficulty {
                row.push(fmt_f64(h));
            }
            row.extend(r.covariates.iter().map(|&x| fmt_f64(x)));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io(Path::new("<ratings>"), e))?;
    Ok(())
}

pub fn write_wide<W: Write>(data: &RatingDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["call_id".to_string(), "k".into(), "n".into(), "treatment".into()];
    if data.has_difficulty() {
        header.push("difficulty".into());
    }
    header.extend(data.covariate_names().iter().cloned());
    w.write_record(&header)?;
    for r in data.records() {
        let mut row = vec![
            r.call_id.clone(),
            r.k_positive.to_string(),
            r.n_ratings.to_string(),
            u8::from(r.treatment).to_string(),
        ];
        if let Some(h) = r.difficulty {
            row.push(fmt_f64(h));
        }
        row.extend(r.covariates.iter().map(|&x| fmt_f64(x)));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(Path::new("<ratings>"), e))?;
    Ok(())
}

pub fn write_ratings_file(data: &RatingDataset, path: &Path, format: CsvFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let out = std::io::BufWriter::new(file);
    match format {
        CsvFormat::Long => write_long(data, out),
        CsvFormat::Wide => write_wide(data, out),
    }
}

/// SHA-256 of the dataset's wide-format serialization, plus the rounds when present.
pub fn dataset_digest(data: &RatingDataset) -> String {
    let mut buf = Vec::new();
    write_wide(data, &mut buf).expect("writing to memory");
    if data.has_rounds() {
        write_long(data, &mut buf).expect("writing to memory");
    }
    hex::encode(Sha256::digest(&buf))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Ground truth keyed by call.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTable {
    pub call_ids: Vec<String>,
    pub latent_states: Vec<u8>,
    pub theta_values: Vec<f64>,
    pub per_call_error_rates: Option<Vec<(f64, f64)>>,
}

impl From<&SimTruth> for TruthTable {
    fn from(t: &SimTruth) -> Self {
        TruthTable {
            call_ids: t.call_ids.clone(),
            latent_states: t.latent_states.clone(),
            theta_values: t.theta_values.clone(),
            per_call_error_rates: t.per_call_error_rates.clone(),
        }
    }
}

impl TruthTable {
    /// Latent states in the dataset's call order.
    pub fn states_for(&self, data: &RatingDataset) -> Result<Vec<u8>> {
        let index: HashMap<&str, usize> = self
            .call_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        data.records()
            .iter()
            .map(|r| {
                index
                    .get(r.call_id.as_str())
                    .map(|&i| self.latent_states[i])
                    .ok_or_else(|| Error::Input(format!("truth file has no row for call {}", r.call_id)))
            })
            .collect()
    }
}

pub fn write_truth<W: Write>(truth: &TruthTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["call_id", "D_true", "theta_true"];
    if truth.per_call_error_rates.is_some() {
        header.extend(["eps0_c", "eps1_c"]);
    }
    w.write_record(&header)?;
    for i in 0..truth.call_ids.len() {
        let mut row = vec![
            truth.call_ids[i].clone(),
            truth.latent_states[i].to_string(),
            fmt_f64(truth.theta_values[i]),
        ];
        if let Some(rates) = &truth.per_call_error_rates {
            row.push(fmt_f64(rates[i].0));
            row.push(fmt_f64(rates[i].1));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(Path::new("<truth>"), e))?;
    Ok(())
}

pub fn read_truth<R: Read>(input: R) -> Result<TruthTable> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| {
        find(name).ok_or_else(|| Error::Ingest {
            row: 1,
            message: format!("truth file is missing column {name:?}"),
        })
    };
    let (id_col, d_col) = (need("call_id")?, need("D_true")?);
    let theta_col = find("theta_true");
    let rate_cols = match (find("eps0_c"), find("eps1_c")) {
        (Some(a), Some(b)) => Some((a, b)),
        _ => None,
    };
    let mut t = TruthTable {
        call_ids: Vec::new(),
        latent_states: Vec::new(),
        theta_values: Vec::new(),
        per_call_error_rates: rate_cols.map(|_| Vec::new()),
    };
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Ingest {
            row,
            message: e.to_string(),
        })?;
        t.call_ids.push(field(&rec, id_col, row, "call_id")?.to_string());
        t.latent_states
            .push(u8::from(parse_binary(field(&rec, d_col, row, "D_true")?, row, "D_true")?));
        t.theta_values.push(match theta_col {
            Some(c) => parse_f64(field(&rec, c, row, "theta_true")?, row, "theta_true")?,
            None => f64::NAN,
        });
        if let (Some((a, b)), Some(v)) = (rate_cols, t.per_call_error_rates.as_mut()) {
            v.push((
                parse_f64(field(&rec, a, row, "eps0_c")?, row, "eps0_c")?,
                parse_f64(field(&rec, b, row, "eps1_c")?, row, "eps1_c")?,
            ));
        }
    }
    Ok(t)
}

pub fn read_truth_file(path: &Path) -> Result<TruthTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_truth(std::io::BufReader::new(file))
}

pub fn write_truth_file(truth: &TruthTable, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_truth(truth, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<RatingDataset> {
        read_ratings(s.as_bytes(), None)
    }

    #[test]
    fn long_format_aggregates_rounds() {
        let csv = "call_id,round,rating,treatment,x1\n\
                   a,1,1,0,0.5\na,2,0,0,0.5\na,3,1,0,0.5\na,4,1,0,0.5\na,5,0,0,0.5\n\
                   b,1,0,1,-1\nb,2,0,1,-1\nb,3,0,1,-1\nb,4,1,1,-1\nb,5,0,1,-1\n";
        let d = parse(csv).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!((d.records()[0].k_positive, d.records()[0].n_ratings), (3, 5));
        assert_eq!((d.records()[1].k_positive, d.records()[1].n_ratings), (1, 5));
        assert_eq!(d.covariate_names(), ["x1"]);
        assert!(d.records()[1].treatment);
    }

    #[test]
    fn treatment_varying_within_call_is_rejected() {
        let csv = "call_id,round,rating,treatment\nz9,1,1,0\nz9,2,1,1\n";
        match parse(csv) {
            Err(Error::Ingest { row, message }) => {
                assert_eq!(row, 3);
                assert!(message.contains("z9"), "{message}");
            }
            other => panic!("expected ingest error, got {other:?}"),
        }
    }

    #[test]
    fn wide_row_passes_through() {
        let d = parse("call_id,k,n,treatment\nq,3,5,1\n").unwrap();
        assert_eq!((d.records()[0].k_positive, d.records()[0].n_ratings), (3, 5));
    }

    #[test]
    fn bad_values_report_rows() {
        let e = parse("call_id,round,rating,treatment\na,1,1,0\na,2,2,0\n").unwrap_err();
        assert!(matches!(e, Error::Ingest { row: 3, .. }), "{e:?}");
        let e = parse("call_id,k,n,treatment\na,6,5,0\n").unwrap_err();
        assert!(matches!(e, Error::Ingest { row: 2, .. }));
        let e = parse("call_id,rating,treatment\na,1,0\n").unwrap_err();
        assert!(matches!(e, Error::Ingest { row: 1, .. }));
    }

    #[test]
    fn difficulty_is_averaged() {
        let csv = "call_id,round,rating,treatment,difficulty\na,1,1,0,0.2\na,2,0,0,0.4\n";
        let d = parse(csv).unwrap();
        assert!((d.records()[0].difficulty.unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn truth_round_trip() {
        let t = TruthTable {
            call_ids: vec!["a".into(), "b".into()],
            latent_states: vec![1, 0],
            theta_values: vec![0.25, 0.1],
            per_call_error_rates: Some(vec![(0.1, 0.2), (0.3, 0.4)]),
        };
        let mut buf = Vec::new();
        write_truth(&t, &mut buf).unwrap();
        assert_eq!(read_truth(buf.as_slice()).unwrap(), t);
    }
}
