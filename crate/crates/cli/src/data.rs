//! Dataset ingestion: delimited text with a header row, and a little-endian
//! binary matrix format (`u64 rows, u64 cols, rows*cols f64`, row-major).

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use udrn::{Error, Matrix, Result};

/// Attribute matrix plus optional integer-coded labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub feature_names: Vec<String>,
    pub labels: Option<Vec<usize>>,
    /// Original label text for each class id.
    pub class_names: Vec<String>,
}

const MAX_LISTED_CELLS: usize = 20;

pub fn load(path: &Path, label_column: Option<&str>, delimiter: char) -> Result<Dataset> {
    if path.extension().is_some_and(|e| e == "bin") {
        if label_column.is_some() {
            return Err(Error::config("binary inputs carry no label column"));
        }
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
        let x = decode_binary(&bytes)?;
        let feature_names = (0..x.cols()).map(|j| format!("f{j}")).collect();
        return Ok(Dataset {
            x,
            feature_names,
            labels: None,
            class_names: Vec::new(),
        });
    }
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    parse_delimited(&text, label_column, delimiter)
}

pub fn parse_delimited(text: &str, label_column: Option<&str>, delimiter: char) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter as u8)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::data(format!("line 1: cannot read header: {e}")))?
        .clone();
    let label_idx = match label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::data(format!("label column {name:?} not found in header")))?,
        ),
        None => None,
    };
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&c| Some(c) != label_idx).collect();
    if feature_cols.is_empty() {
        return Err(Error::data("input has no feature columns"));
    }

    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    let mut non_finite = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::data(format!("line {line}: malformed record: {e}"))
        })?;
        let line = record.position().map_or(rows as u64 + 2, |p| p.line());
        for &c in &feature_cols {
            let cell = &record[c];
            let v: f64 = cell.parse().map_err(|_| {
                Error::data(format!("line {line}, column {} ({}): cannot parse {cell:?} as a number", c + 1, &headers[c]))
            })?;
            if !v.is_finite() {
                non_finite.push(format!("line {line} column {} ({}) = {cell}", c + 1, &headers[c]));
            }
            values.push(v);
        }
        if let Some(l) = label_idx {
            raw_labels.push(record[l].to_string());
        }
        rows += 1;
    }
    if !non_finite.is_empty() {
        let total = non_finite.len();
        non_finite.truncate(MAX_LISTED_CELLS);
        let more = if total > MAX_LISTED_CELLS {
            format!(" (and {} more)", total - MAX_LISTED_CELLS)
        } else {
            String::new()
        };
        return Err(Error::data(format!("{total} non-finite cells: {}{more}", non_finite.join("; "))));
    }
    if rows == 0 {
        return Err(Error::data("input has a header but no data rows"));
    }
    let x = Matrix::new(rows, feature_cols.len(), values)?;
    let feature_names = feature_cols.iter().map(|&c| headers[c].to_string()).collect();
    let (labels, class_names) = match label_idx {
        Some(_) => {
            let (ids, names) = encode_labels(&raw_labels);
            (Some(ids), names)
        }
        None => (None, Vec::new()),
    };
    Ok(Dataset {
        x,
        feature_names,
        labels,
        class_names,
    })
}

/// Class ids in ascending label order; numeric labels sort numerically.
pub fn encode_labels(raw: &[String]) -> (Vec<usize>, Vec<String>) {
    let mut distinct: Vec<&String> = raw.iter().collect();
    distinct.sort();
    distinct.dedup();
    if distinct.iter().all(|s| s.parse::<f64>().is_ok()) {
        distinct.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    }
    let ids: BTreeMap<&String, usize> = distinct.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    (raw.iter().map(|s| ids[s]).collect(), distinct.into_iter().cloned().collect())
}

pub fn encode_binary(x: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * x.len());
    out.extend_from_slice(&(x.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(x.cols() as u64).to_le_bytes());
    for v in x.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < 16 {
        return Err(Error::data("binary matrix shorter than its 16-byte header"));
    }
    let rows = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let cols = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::data("binary matrix header overflows"))?;
    let body = &bytes[16..];
    if body.len() != expected {
        return Err(Error::data(format!(
            "binary matrix declares {rows}x{cols} ({expected} bytes) but carries {} bytes",
            body.len()
        )));
    }
    let values: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::data(format!("non-finite value at row {}, column {}", i / cols.max(1), i % cols.max(1))));
    }
    Matrix::new(rows, cols, values)
}

/// Delimited text with a header; labels (if any) in a trailing `label` column.
pub fn to_delimited(x: &Matrix, names: &[String], labels: Option<&[usize]>) -> String {
    let mut s = names.join(",");
    if labels.is_some() {
        s.push_str(",label");
    }
    s.push('\n');
    for (i, row) in x.iter_rows().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&cells.join(","));
        if let Some(l) = labels {
            s.push_str(&format!(",{}", l[i]));
        }
        s.push('\n');
    }
    s
}
