//! Design and candidate-run CSV files.
//!
//! A design file has a header of factor names, a required `y` column and an
//! optional `block` column. Factor cells are `-1`, `+1`, `1`, `-` or `+`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use obayes_core::factorial::{Block, InteractionOrder};
use obayes_core::{CandidateTable, DesignTable, FactorSpace};

use crate::error::{CliError, Result};

const RESPONSE: &str = "y";
const BLOCK: &str = "block";
const RUN: &str = "run";

/// Parses one coded factor level.
pub fn parse_level(cell: &str) -> Option<i8> {
    match cell.trim() {
        "-1" | "-" | "\u{2212}1" | "\u{2212}" | "-1.0" => Some(-1),
        "1" | "+1" | "+" | "1.0" | "+1.0" => Some(1),
        _ => None,
    }
}

/// A parsed design file, columns in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignFile {
    pub names: Vec<String>,
    pub rows: Vec<Vec<i8>>,
    pub y: Vec<f64>,
    pub block: Option<Vec<String>>,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    CliError::input(path, format!("malformed CSV near line {line}: {e}"))
}

struct Header {
    factors: Vec<(usize, String)>,
    response: Option<usize>,
    block: Option<usize>,
    run: Option<usize>,
}

fn read_header(path: &Path, headers: &csv::StringRecord) -> Result<Header> {
    let mut h = Header {
        factors: Vec::new(),
        response: None,
        block: None,
        run: None,
    };
    for (i, raw) in headers.iter().enumerate() {
        let name = raw.trim();
        let slot = match name.to_ascii_lowercase().as_str() {
            RESPONSE => &mut h.response,
            BLOCK => &mut h.block,
            RUN => &mut h.run,
            "" => {
                return Err(CliError::input(path, format!("column {} has an empty header", i + 1)));
            }
            _ => {
                if h.factors.iter().any(|(_, n)| n == name) {
                    return Err(CliError::input(path, format!("duplicate factor column {name:?}")));
                }
                h.factors.push((i, name.to_string()));
                continue;
            }
        };
        if slot.replace(i).is_some() {
            return Err(CliError::input(path, format!("duplicate {name:?} column")));
        }
    }
    if h.factors.is_empty() {
        return Err(CliError::input(path, "no factor columns in header"));
    }
    Ok(h)
}

fn reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(source)
}

fn cell_error(path: &Path, record: &csv::StringRecord, column: usize, name: &str, message: String) -> CliError {
    CliError::Cell {
        path: path.to_path_buf(),
        line: record.position().map_or(0, |p| p.line()),
        column: column + 1,
        name: name.to_string(),
        message,
    }
}

fn levels(path: &Path, record: &csv::StringRecord, factors: &[(usize, String)]) -> Result<Vec<i8>> {
    factors
        .iter()
        .map(|(col, name)| {
            let cell = record.get(*col).unwrap_or("");
            parse_level(cell).ok_or_else(|| {
                cell_error(path, record, *col, name, format!("expected -1/+1 or -/+, found {cell:?}"))
            })
        })
        .collect()
}

impl DesignFile {
    pub fn read(path: &Path) -> Result<Self> {
        Self::from_reader(open(path)?, path)
    }

    /// Parses CSV text; `path` only labels error messages.
    pub fn from_reader<R: Read>(source: R, path: &Path) -> Result<Self> {
        let mut rdr = reader(source);
        let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
        let header = read_header(path, &headers)?;
        let Some(response) = header.response else {
            return Err(CliError::input(path, "missing required \"y\" column"));
        };
        let mut out = Self {
            names: header.factors.iter().map(|(_, n)| n.clone()).collect(),
            rows: Vec::new(),
            y: Vec::new(),
            block: header.block.map(|_| Vec::new()),
        };
        for record in rdr.records() {
            let record = record.map_err(|e| csv_error(path, e))?;
            out.rows.push(levels(path, &record, &header.factors)?);
            let cell = record.get(response).unwrap_or("");
            let y: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| {
                    cell_error(path, &record, response, RESPONSE, format!("expected a finite number, found {cell:?}"))
                })?;
            out.y.push(y);
            if let (Some(col), Some(labels)) = (header.block, out.block.as_mut()) {
                let label = record.get(col).unwrap_or("");
                if label.is_empty() {
                    return Err(cell_error(path, &record, col, BLOCK, "empty block label".to_string()));
                }
                labels.push(label.to_string());
            }
        }
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn space(&self, order: InteractionOrder) -> Result<FactorSpace> {
        Ok(FactorSpace::new(self.names.clone(), order)?)
    }

    /// The design table, carrying the block column when present.
    pub fn design(&self) -> Result<DesignTable> {
        let block = match &self.block {
            Some(labels) => Some(Block::from_labels(labels)?),
            None => None,
        };
        Ok(DesignTable::new(
            self.names.len(),
            self.rows.concat(),
            self.y.clone(),
            block,
        )?)
    }

    /// Reorders the factor columns to `names`; errors unless the sets agree.
    pub fn aligned_to(&self, names: &[String], path: &Path) -> Result<Self> {
        if names.len() != self.names.len() || names.iter().any(|n| !self.names.contains(n)) {
            return Err(CliError::input(
                path,
                format!(
                    "factor columns [{}] do not match [{}]",
                    self.names.join(", "),
                    names.join(", ")
                ),
            ));
        }
        let perm: Vec<usize> = names
            .iter()
            .map(|n| self.names.iter().position(|m| m == n).expect("checked above"))
            .collect();
        Ok(Self {
            names: names.to_vec(),
            rows: self.rows.iter().map(|r| perm.iter().map(|&j| r[j]).collect()).collect(),
            y: self.y.clone(),
            block: self.block.clone(),
        })
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header: Vec<&str> = self.names.iter().map(String::as_str).collect();
        if self.block.is_some() {
            header.push(BLOCK);
        }
        header.push(RESPONSE);
        w.write_record(&header).map_err(serialize)?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|&v| format!("{v:+}")).collect();
            if let Some(labels) = &self.block {
                rec.push(labels[i].clone());
            }
            rec.push(self.y[i].to_string());
            w.write_record(&rec).map_err(serialize)?;
        }
        w.flush().map_err(|e| CliError::Serialize(e.to_string()))
    }
}

fn serialize(e: csv::Error) -> CliError {
    CliError::Serialize(e.to_string())
}

/// Reads a candidate table whose factor columns match `names` in any order.
/// An optional `run` column must number the rows 1, 2, ...
pub fn read_candidates(path: &Path, names: &[String]) -> Result<CandidateTable> {
    candidates_from_reader(open(path)?, path, names)
}

pub fn candidates_from_reader<R: Read>(source: R, path: &Path, names: &[String]) -> Result<CandidateTable> {
    let mut rdr = reader(source);
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let header = read_header(path, &headers)?;
    let file_names: Vec<String> = header.factors.iter().map(|(_, n)| n.clone()).collect();
    if file_names.len() != names.len() || names.iter().any(|n| !file_names.contains(n)) {
        return Err(CliError::input(
            path,
            format!(
                "candidate factors [{}] do not match the design factors [{}]",
                file_names.join(", "),
                names.join(", ")
            ),
        ));
    }
    let ordered: Vec<(usize, String)> = names
        .iter()
        .map(|n| header.factors.iter().find(|(_, m)| m == n).cloned().expect("checked above"))
        .collect();
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if let Some(col) = header.run {
            let cell = record.get(col).unwrap_or("");
            if cell.parse::<usize>().ok() != Some(i + 1) {
                return Err(cell_error(path, &record, col, RUN, format!("expected run number {}, found {cell:?}", i + 1)));
            }
        }
        rows.extend(levels(path, &record, &ordered)?);
    }
    if rows.is_empty() {
        return Err(CliError::input(path, "candidate table has no rows"));
    }
    Ok(CandidateTable::from_rows(names.len(), rows)?)
}

/// Writes a candidate table with a leading 1-based `run` column.
pub fn write_candidates<W: Write>(table: &CandidateTable, names: &[String], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec![RUN.to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(serialize)?;
    for (i, row) in table.iter().enumerate() {
        let mut rec = vec![(i + 1).to_string()];
        rec.extend(row.iter().map(|v| format!("{v:+}")));
        w.write_record(&rec).map_err(serialize)?;
    }
    w.flush().map_err(|e| CliError::Serialize(e.to_string()))
}
