//! Reading marginals, similarity scores and matrices from CSV files.

use std::fs::File;
use std::path::Path;

use ndarray::Array2;
use renyi_ot::{Histogram, OtError};

use crate::error::IngestError;

/// Tolerance on the total mass before a marginal is renormalized.
pub const MASS_TOL: f64 = 1e-9;
/// Any score above this marks a similarity file as percent data.
pub const PERCENT_THRESHOLD: f64 = 1.5;

pub const OTHERS: &str = "Others";
pub const NON_VOTERS: &str = "NV";

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> IngestError {
    IngestError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> IngestError {
    let line = e.position().map_or(0, |p| p.line());
    parse_error(path, line, e.to_string())
}

fn number(path: &Path, line: u64, field: &str) -> Result<f64, IngestError> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_error(path, line, format!("not a number: {field:?}")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(parse_error(path, line, format!("not a finite number: {field:?}")))
    }
}

/// Scales weights to unit mass, warning when they were off by more than
/// [`MASS_TOL`].
fn normalized(path: &Path, name: &str, weights: Vec<f64>) -> Result<Histogram, IngestError> {
    let invalid = |source| IngestError::Invalid {
        path: path.to_path_buf(),
        source,
    };
    if let Some(index) = weights.iter().position(|&w| w < 0.0) {
        return Err(invalid(OtError::NegativeMass {
            index,
            value: weights[index],
        }));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(invalid(OtError::ZeroTotalMass));
    }
    let weights = if (total - 1.0).abs() > MASS_TOL {
        log::warn!("{}: column {name} sums to {total}; renormalizing", path.display());
        weights.into_iter().map(|w| w / total).collect()
    } else {
        weights
    };
    Histogram::new(weights).map_err(invalid)
}

/// Reads a CSV with header `index,r,c` into the two marginals.
pub fn ingest_marginals(path: &Path) -> Result<(Histogram, Histogram), IngestError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_error(path, 1, format!("missing column {name:?} (expected header index,r,c)")))
    };
    let (ix, ir, ic) = (column("index")?, column("r")?, column("c")?);
    let (mut r, mut c) = (Vec::new(), Vec::new());
    let mut last_index: Option<i64> = None;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |k: usize| record.get(k).ok_or_else(|| parse_error(path, line, "missing field"));
        let index: i64 = field(ix)?
            .parse()
            .map_err(|_| parse_error(path, line, format!("index is not an integer: {:?}", &record[ix])))?;
        if last_index.is_some_and(|prev| index <= prev) {
            return Err(parse_error(path, line, "rows are not in increasing index order"));
        }
        last_index = Some(index);
        r.push(number(path, line, field(ir)?)?);
        c.push(number(path, line, field(ic)?)?);
    }
    if r.is_empty() {
        return Err(IngestError::Invalid {
            path: path.to_path_buf(),
            source: OtError::EmptyInput,
        });
    }
    Ok((normalized(path, "r", r)?, normalized(path, "c", c)?))
}

/// Party labels and similarity vectors in `[0, 1]`, including the appended
/// `Others` and `NV` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Similarity {
    pub labels: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

/// Reads a square similarity table (party names in the first row and
/// column) and appends `Others`, whose score to a party is the mean of that
/// party's scores to all other listed parties, and `NV`, similar to
/// everything with score 1. Percent data is detected and rescaled.
pub fn ingest_similarity(path: &Path) -> Result<Similarity, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let mut rows = reader.records().map(|r| r.map_err(|e| csv_error(path, e)));
    let header = rows.next().ok_or_else(|| parse_error(path, 1, "empty file"))??;
    let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let k = labels.len();
    let mut scores = Vec::new();
    for record in rows {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != k + 1 {
            return Err(IngestError::NonSquare {
                path: path.to_path_buf(),
                rows: scores.len() + 1,
                cols: record.len().saturating_sub(1),
            });
        }
        let values = record.iter().skip(1).map(|f| number(path, line, f)).collect::<Result<Vec<_>, _>>()?;
        scores.push(values);
    }
    if scores.len() != k || k == 0 {
        return Err(IngestError::NonSquare {
            path: path.to_path_buf(),
            rows: scores.len(),
            cols: k,
        });
    }
    if k < 2 {
        return Err(IngestError::LengthMismatch {
            path: path.to_path_buf(),
            message: "at least two parties are needed".into(),
        });
    }
    let percent = scores.iter().flatten().any(|&v| v > PERCENT_THRESHOLD);
    let scale = if percent { 100.0 } else { 1.0 };
    for (i, row) in scores.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            if !(0.0..=scale).contains(v) {
                return Err(IngestError::OutOfRangeScore {
                    path: path.to_path_buf(),
                    row: labels[i].clone(),
                    col: labels[j].clone(),
                    value: *v,
                });
            }
            *v /= scale;
        }
    }
    let others: Vec<f64> = (0..k)
        .map(|i| (0..k).filter(|&j| j != i).map(|j| scores[i][j]).sum::<f64>() / (k - 1) as f64)
        .collect();
    let mut vectors: Vec<Vec<f64>> = scores
        .iter()
        .zip(&others)
        .map(|(row, &o)| row.iter().copied().chain([o, 1.0]).collect())
        .collect();
    vectors.push(others.iter().copied().chain([1.0, 1.0]).collect());
    vectors.push(vec![1.0; k + 2]);
    let mut labels = labels;
    labels.extend([OTHERS.to_string(), NON_VOTERS.to_string()]);
    Ok(Similarity { labels, vectors })
}

/// Reads a square matrix, either as plain numeric rows or as `i,j,mass`
/// triplets with that header (the plan dump format).
pub fn read_matrix(path: &Path) -> Result<Array2<f64>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let records = reader
        .records()
        .map(|r| r.map_err(|e| csv_error(path, e)))
        .collect::<Result<Vec<_>, _>>()?;
    let triplets = records.first().is_some_and(|h| h.iter().eq(["i", "j", "mass"]));
    if triplets {
        let mut entries = Vec::new();
        for record in &records[1..] {
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != 3 {
                return Err(parse_error(path, line, "expected three fields i,j,mass"));
            }
            let index = |k: usize| {
                record[k]
                    .parse::<usize>()
                    .map_err(|_| parse_error(path, line, format!("bad index {:?}", &record[k])))
            };
            entries.push((index(0)?, index(1)?, number(path, line, &record[2])?));
        }
        let n = (entries.len() as f64).sqrt().round() as usize;
        if n * n != entries.len() || n == 0 {
            return Err(IngestError::LengthMismatch {
                path: path.to_path_buf(),
                message: format!("{} entries do not form a square matrix", entries.len()),
            });
        }
        let mut m = Array2::from_elem((n, n), f64::NAN);
        for (k, (i, j, v)) in entries.into_iter().enumerate() {
            if i >= n || j >= n || !m[[i, j]].is_nan() {
                return Err(parse_error(path, k as u64 + 2, format!("index ({i}, {j}) out of range or repeated")));
            }
            m[[i, j]] = v;
        }
        return Ok(m);
    }
    let n = records.len();
    let mut values = Vec::with_capacity(n * n);
    for record in &records {
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != n {
            return Err(IngestError::LengthMismatch {
                path: path.to_path_buf(),
                message: format!("line {line} has {} entries, expected {n}", record.len()),
            });
        }
        for field in record.iter() {
            values.push(number(path, line, field)?);
        }
    }
    if n == 0 {
        return Err(IngestError::Invalid {
            path: path.to_path_buf(),
            source: OtError::EmptyInput,
        });
    }
    Ok(Array2::from_shape_vec((n, n), values).expect("square by construction"))
}
