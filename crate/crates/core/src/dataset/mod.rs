//! Tabular ingestion: delimiter-separated text with a header row goes in,
//! a validated [`RawDataset`] with typed columns comes out. Rows with any
//! empty cell are dropped and counted; a column is continuous when every
//! surviving cell parses as a finite number, categorical otherwise.

mod discretize;

pub use discretize::{
    discretize_dataset, discretize_equipotent, discretize_shifted, DiscreteMatrix,
    DiscretizationSpec, DiscretizeError, VariableWarning,
};

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed input: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing response column '{0}'")]
    MissingResponseColumn(String),
    #[error("duplicate column name '{0}'")]
    DuplicateColumnName(String),
    #[error("no usable rows after dropping {dropped} incomplete rows")]
    ZeroUsableRows { dropped: usize },
    #[error("input has no header row")]
    EmptyInput,
    #[error("response column must be accompanied by at least one descriptor")]
    NoDescriptors,
    #[error("too many rows: {0} (limit 2^31 - 1)")]
    TooManyRows(usize),
}

/// One column of raw data.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Continuous(Vec<f64>),
    Categorical(Vec<String>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Continuous(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedColumn {
    pub name: String,
    pub data: Column,
}

/// A validated table: descriptors plus one designated response column,
/// all of identical length with no missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub descriptors: Vec<NamedColumn>,
    pub response: NamedColumn,
    pub n_objects: usize,
    pub dropped_rows: usize,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Field delimiter; `None` sniffs tab vs comma from the header line
    /// (a `.tsv` path also selects tab).
    pub delimiter: Option<u8>,
}

/// Reads a delimited file and splits out the response column.
pub fn ingest(
    path: impl AsRef<Path>,
    response_name: &str,
    options: &IngestOptions,
) -> Result<RawDataset, DatasetError> {
    let path = path.as_ref();
    let delimiter = options.delimiter.or_else(|| {
        path.extension()
            .and_then(|e| e.to_str())
            .and_then(|e| e.eq_ignore_ascii_case("tsv").then_some(b'\t'))
    });
    let file = File::open(path)?;
    ingest_reader(file, response_name, &IngestOptions { delimiter })
}

/// Reads delimited text from any reader and splits out the response column.
pub fn ingest_reader(
    mut reader: impl Read,
    response_name: &str,
    options: &IngestOptions,
) -> Result<RawDataset, DatasetError> {
    let mut raw = Vec::new();
    reader.read_to_end(&mut raw)?;
    let delimiter = options.delimiter.unwrap_or_else(|| sniff_delimiter(&raw));

    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_reader(raw.as_slice());

    let headers: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() {
        return Err(DatasetError::EmptyInput);
    }
    for (i, name) in headers.iter().enumerate() {
        if headers[..i].contains(name) {
            return Err(DatasetError::DuplicateColumnName(name.clone()));
        }
    }
    let response_idx = headers
        .iter()
        .position(|h| h == response_name)
        .ok_or_else(|| DatasetError::MissingResponseColumn(response_name.to_string()))?;
    if headers.len() < 2 {
        return Err(DatasetError::NoDescriptors);
    }

    let n_cols = headers.len();
    let mut cells: Vec<Vec<String>> = vec![Vec::new(); n_cols];
    let mut dropped = 0usize;
    for record in rdr.records() {
        let record = record?;
        let complete = record.iter().all(|cell| !cell.trim().is_empty());
        if !complete || record.len() != n_cols {
            dropped += 1;
            continue;
        }
        for (col, cell) in cells.iter_mut().zip(record.iter()) {
            col.push(cell.trim().to_string());
        }
    }
    let n_objects = cells[0].len();
    if n_objects == 0 {
        return Err(DatasetError::ZeroUsableRows { dropped });
    }
    if n_objects >= (1usize << 31) {
        return Err(DatasetError::TooManyRows(n_objects));
    }

    let mut columns: Vec<NamedColumn> = Vec::with_capacity(n_cols);
    for (name, values) in headers.into_iter().zip(cells) {
        columns.push(NamedColumn {
            name,
            data: infer_column(values),
        });
    }
    let response = columns.remove(response_idx);

    Ok(RawDataset {
        descriptors: columns,
        response,
        n_objects,
        dropped_rows: dropped,
    })
}

fn sniff_delimiter(raw: &[u8]) -> u8 {
    let first_line = raw.split(|&b| b == b'\n').next().unwrap_or(&[]);
    if first_line.contains(&b'\t') {
        b'\t'
    } else {
        b','
    }
}

fn infer_column(values: Vec<String>) -> Column {
    let mut parsed = Vec::with_capacity(values.len());
    for v in &values {
        match v.parse::<f64>() {
            Ok(x) if x.is_finite() => parsed.push(x),
            _ => return Column::Categorical(values),
        }
    }
    Column::Continuous(parsed)
}

/// Writes a dataset back out as delimited text (descriptors first, response
/// last); a `.tsv` extension selects tabs, anything else commas. Floats use
/// the shortest round-trip representation.
pub fn write_csv(dataset: &RawDataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let delimiter = match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("tsv") => b'\t',
        _ => b',',
    };
    let file = File::create(path)?;
    write_csv_to(dataset, file, delimiter)
}

pub fn write_csv_to(
    dataset: &RawDataset,
    writer: impl Write,
    delimiter: u8,
) -> Result<(), DatasetError> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_writer(writer);
    let mut header: Vec<&str> = dataset
        .descriptors
        .iter()
        .map(|c| c.name.as_str())
        .collect();
    header.push(&dataset.response.name);
    w.write_record(&header)?;

    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..dataset.n_objects {
        row.clear();
        for col in &dataset.descriptors {
            row.push(cell_string(&col.data, i));
        }
        row.push(cell_string(&dataset.response.data, i));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn cell_string(column: &Column, i: usize) -> String {
    match column {
        Column::Continuous(v) => format!("{}", v[i]),
        Column::Categorical(v) => v[i].clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> IngestOptions {
        IngestOptions::default()
    }

    #[test]
    fn parses_small_csv() {
        let data = "a,b,c,Y\n1,2,x,0\n2,3,y,1\n3,4,x,0\n4,5,y,1\n5,6,x,0\n\
                    6,7,y,1\n7,8,x,0\n8,9,y,1\n9,10,x,0\n10,11,y,1\n";
        let ds = ingest_reader(data.as_bytes(), "Y", &opts()).unwrap();
        assert_eq!(ds.descriptors.len(), 3);
        assert_eq!(ds.n_objects, 10);
        assert_eq!(ds.dropped_rows, 0);
        assert!(matches!(ds.descriptors[0].data, Column::Continuous(_)));
        assert!(matches!(ds.descriptors[2].data, Column::Categorical(_)));
        assert!(matches!(ds.response.data, Column::Continuous(_)));
    }

    #[test]
    fn drops_rows_with_empty_cells() {
        let data = "a,Y\n1,0\n,1\n3,\n4,1\n";
        let ds = ingest_reader(data.as_bytes(), "Y", &opts()).unwrap();
        assert_eq!(ds.n_objects, 2);
        assert_eq!(ds.dropped_rows, 2);
    }

    #[test]
    fn missing_response_is_an_error() {
        let data = "a,b\n1,2\n";
        let err = ingest_reader(data.as_bytes(), "Y", &opts()).unwrap_err();
        assert!(matches!(err, DatasetError::MissingResponseColumn(_)));
    }

    #[test]
    fn duplicate_columns_rejected() {
        let data = "a,a,Y\n1,2,0\n";
        let err = ingest_reader(data.as_bytes(), "Y", &opts()).unwrap_err();
        assert!(matches!(err, DatasetError::DuplicateColumnName(_)));
    }

    #[test]
    fn all_rows_dropped_is_an_error() {
        let data = "a,Y\n,0\n,1\n";
        let err = ingest_reader(data.as_bytes(), "Y", &opts()).unwrap_err();
        assert!(matches!(
            err,
            DatasetError::ZeroUsableRows { dropped: 2 }
        ));
    }

    #[test]
    fn tsv_sniffing() {
        let data = "a\tY\n1\t0\n2\t1\n";
        let ds = ingest_reader(data.as_bytes(), "Y", &opts()).unwrap();
        assert_eq!(ds.n_objects, 2);
    }

    #[test]
    fn non_finite_numerics_become_categorical() {
        let data = "a,Y\nnan,0\n1.5,1\n";
        let ds = ingest_reader(data.as_bytes(), "Y", &opts()).unwrap();
        assert!(matches!(ds.descriptors[0].data, Column::Categorical(_)));
    }

    #[test]
    fn csv_roundtrip_preserves_floats() {
        let ds = RawDataset {
            descriptors: vec![NamedColumn {
                name: "a".into(),
                data: Column::Continuous(vec![0.1 + 0.2, 1.0 / 3.0, -1e-17]),
            }],
            response: NamedColumn {
                name: "Y".into(),
                data: Column::Continuous(vec![0.0, 1.0, 0.0]),
            },
            n_objects: 3,
            dropped_rows: 0,
        };
        let mut buf = Vec::new();
        write_csv_to(&ds, &mut buf, b',').unwrap();
        let back = ingest_reader(buf.as_slice(), "Y", &opts()).unwrap();
        assert_eq!(back, ds);
    }
}
