use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use super::{Dataset, DatasetError, Result, FEATURES, STATUS_COLUMN};

/// CSV ingestion settings.
#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub schema: Vec<String>,
    pub status_column: String,
    /// Accept `1.234,5`-style numbers (thousands `.`, decimal `,`).
    pub decimal_comma: bool,
    pub delimiter: u8,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            schema: FEATURES.iter().map(|s| s.to_string()).collect(),
            status_column: STATUS_COLUMN.to_string(),
            decimal_comma: false,
            delimiter: b',',
        }
    }
}

#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: Dataset,
    /// Rows removed by listwise deletion.
    pub dropped_rows: usize,
}

pub fn load_csv<S: AsRef<str>>(path: impl AsRef<Path>, schema: &[S]) -> Result<Loaded> {
    let opts = CsvOptions {
        schema: schema.iter().map(|s| s.as_ref().to_string()).collect(),
        ..CsvOptions::default()
    };
    load_csv_with(path, &opts)
}

fn parse_number(raw: &str, decimal_comma: bool) -> Option<f64> {
    let s = raw.trim();
    if s.is_empty() {
        return None;
    }
    let v = if decimal_comma {
        s.replace('.', "").replace(',', ".").parse::<f64>().ok()?
    } else {
        s.parse::<f64>().ok()?
    };
    v.is_finite().then_some(v)
}

/// Reads the schema columns plus the 0/1 status column. Rows with a missing
/// or non-numeric value in any of them are dropped and counted; a numeric
/// status other than 0/1 is an error.
pub fn load_csv_with(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Loaded> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let locate = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    };
    let cols: Vec<usize> = opts.schema.iter().map(|c| locate(c)).collect::<Result<_>>()?;
    let status_col = locate(&opts.status_column)?;

    let p = cols.len();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut dropped = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let status = record.get(status_col).and_then(|s| parse_number(s, opts.decimal_comma));
        let label = match status {
            None => {
                dropped += 1;
                continue;
            }
            Some(0.0) => 0u8,
            Some(1.0) => 1u8,
            Some(_) => {
                return Err(DatasetError::InvalidLabel {
                    row: row + 1,
                    value: record.get(status_col).unwrap_or("").to_string(),
                })
            }
        };
        let parsed: Option<Vec<f64>> = cols
            .iter()
            .map(|&c| record.get(c).and_then(|s| parse_number(s, opts.decimal_comma)))
            .collect();
        match parsed {
            Some(vals) => {
                values.extend(vals);
                labels.push(label);
            }
            None => dropped += 1,
        }
    }
    if labels.is_empty() {
        return Err(DatasetError::NoUsableRows { dropped });
    }
    let features =
        Array2::from_shape_vec((labels.len(), p), values).map_err(|e| DatasetError::Invalid(e.to_string()))?;
    let dataset = Dataset::new(features, labels, opts.schema.clone())?;
    Ok(Loaded {
        dataset,
        dropped_rows: dropped,
    })
}

/// Writes features and status with shortest round-trip float formatting.
pub fn write_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
    let mut header = d.feature_names().join(",");
    header.push(',');
    header.push_str(STATUS_COLUMN);
    writeln!(out, "{header}").map_err(io_err)?;
    for (row, y) in d.features().outer_iter().zip(d.labels()) {
        let mut line = String::new();
        for v in row.iter() {
            line.push_str(&format!("{v},"));
        }
        line.push_str(&y.to_string());
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
