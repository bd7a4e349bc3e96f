//! Counts documents and record files.
//!
//! A counts document is a flat key-value map with keys `n15, n2, n4, n6,
//! n37, n_tot`, written either as TOML (`n15 = 169`) or as a JSON object.
//! A records file is comma-delimited text with a header naming at least
//! `id, stream1_positive, in_anchor, anchor_result`.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{CaptureRecord, CellCounts5, Count};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CountsDoc {
    n15: Option<Count>,
    n2: Option<Count>,
    n4: Option<Count>,
    n6: Option<Count>,
    n37: Option<Count>,
    n_tot: Option<Count>,
}

impl CountsDoc {
    fn into_counts(self) -> Result<CellCounts5> {
        CellCounts5::new(
            self.n15.ok_or(Error::MissingKey("n15"))?,
            self.n2.ok_or(Error::MissingKey("n2"))?,
            self.n4.ok_or(Error::MissingKey("n4"))?,
            self.n6.ok_or(Error::MissingKey("n6"))?,
            self.n37.ok_or(Error::MissingKey("n37"))?,
            self.n_tot.ok_or(Error::MissingKey("n_tot"))?,
        )
    }
}

/// Parses a counts document; JSON when the first non-blank character is `{`,
/// TOML otherwise.
pub fn parse_counts(text: &str) -> Result<CellCounts5> {
    let doc: CountsDoc = if text.trim_start().starts_with('{') {
        serde_json::from_str(text)?
    } else {
        toml::from_str(text).map_err(|e| Error::invalid(format!("counts document: {}", e.message())))?
    };
    doc.into_counts()
}

pub fn read_counts(path: &Path) -> Result<CellCounts5> {
    parse_counts(&std::fs::read_to_string(path)?)
}

/// TOML rendering in canonical key order; `parse_counts` reads it back.
pub fn render_counts(c: &CellCounts5) -> String {
    format!(
        "n15 = {}\nn2 = {}\nn4 = {}\nn6 = {}\nn37 = {}\nn_tot = {}\n",
        c.n15(),
        c.n2(),
        c.n4(),
        c.n6(),
        c.n37(),
        c.n_tot()
    )
}

/// Data-quality notes about a table that do not prevent estimation.
pub fn counts_warnings(c: &CellCounts5) -> Vec<String> {
    let mut out = Vec::new();
    if c.n6() == 0 {
        out.push("n6 = 0: zero-cell fallbacks engage for the FPC variances".to_string());
    }
    if c.anchor_unrecorded() <= 1 {
        out.push("n15 + n6 <= 1: FPC variances fall back to the unadjusted variance".to_string());
    }
    if c.has_zero_cell() {
        out.push("empty cell: delta-method variance uses smoothed proportions".to_string());
    }
    out
}

fn parse_bool(field: &str, value: &str, line: u64) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(Error::Malformed {
            line,
            message: format!("`{field}` must be one of 0, 1, true, false; got `{other}`"),
        }),
    }
}

/// Records plus per-record notes (e.g. unvalidated Stream-1 positives).
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRecords {
    pub records: Vec<CaptureRecord>,
    pub diagnostics: Vec<String>,
}

/// Parses a records file. `stratum_column` names the column used as the
/// stratum label (default `stratum`, optional). An optional `validated`
/// column set to false drops that record's Stream-1 positive.
pub fn parse_records(text: &str, stratum_column: Option<&str>) -> Result<ParsedRecords> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &'static str| {
        col(name).ok_or_else(|| Error::Malformed {
            line: 1,
            message: format!("missing column `{name}`"),
        })
    };
    let id_col = need("id")?;
    let s1_col = need("stream1_positive")?;
    let anchor_col = need("in_anchor")?;
    let result_col = need("anchor_result")?;
    let stratum_col = match stratum_column {
        Some(name) => Some(col(name).ok_or_else(|| Error::Malformed {
            line: 1,
            message: format!("missing stratum column `{name}`"),
        })?),
        None => col("stratum"),
    };
    let validated_col = col("validated");

    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    let mut ids = HashSet::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let id = row[id_col].to_string();
        if id.is_empty() {
            return Err(Error::Malformed {
                line,
                message: "empty id".into(),
            });
        }
        let mut stream1_positive = parse_bool("stream1_positive", &row[s1_col], line)?;
        let in_anchor = parse_bool("in_anchor", &row[anchor_col], line)?;
        let anchor_result = match row[result_col].trim() {
            "" => None,
            v => Some(parse_bool("anchor_result", v, line)?),
        };
        if let Some(c) = validated_col {
            let v = row[c].trim();
            if !v.is_empty() && !parse_bool("validated", v, line)? && stream1_positive {
                stream1_positive = false;
                diagnostics.push(format!(
                    "record `{id}` (line {line}): unvalidated Stream-1 positive ignored"
                ));
            }
        }
        let stratum = stratum_col.map(|c| row[c].to_string()).filter(|s| !s.is_empty());
        let record = CaptureRecord {
            id,
            stream1_positive,
            in_anchor,
            anchor_result,
            stratum,
        };
        record.validate().map_err(|e| match e {
            Error::MissingAnchorResult(_) => e,
            other => Error::Malformed {
                line,
                message: other.to_string(),
            },
        })?;
        if !ids.insert(record.id.clone()) {
            return Err(Error::DuplicateId(record.id));
        }
        records.push(record);
    }
    Ok(ParsedRecords { records, diagnostics })
}

pub fn read_records(path: &Path, stratum_column: Option<&str>) -> Result<ParsedRecords> {
    parse_records(&std::fs::read_to_string(path)?, stratum_column)
}

/// Parses a population size specification: either one integer, or
/// `label=N` pairs separated by commas.
pub fn parse_population_sizes(spec: &str) -> Result<PopulationSizes> {
    let spec = spec.trim();
    if let Ok(n) = spec.parse::<Count>() {
        return Ok(PopulationSizes::Total(n));
    }
    let mut map = BTreeMap::new();
    for part in spec.split(',') {
        let (label, n) = part
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("population size `{part}` is not `label=N`")))?;
        let n: Count = n
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("population size `{n}` is not a non-negative integer")))?;
        if map.insert(label.trim().to_string(), n).is_some() {
            return Err(Error::invalid(format!("stratum `{label}` given twice")));
        }
    }
    Ok(PopulationSizes::Strata(map))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PopulationSizes {
    Total(Count),
    Strata(BTreeMap<String, Count>),
}
