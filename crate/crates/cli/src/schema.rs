//! Row types of every CSV the tool writes, and a reader that checks the
//! header before deserializing. Floats are written in shortest round-trip
//! form, so reading a file back gives the exact values that were computed.
//! Failed sweep points leave their result columns empty.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

pub trait CsvRow: Serialize + DeserializeOwned {
    const HEADER: &'static [&'static str];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub omega: f64,
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Row {
    pub delta: f64,
    pub sz: Option<f64>,
    pub gamma: Option<f64>,
    pub delta_mod: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub w: f64,
    pub delta: f64,
    pub n: u64,
    pub sz: Option<f64>,
    pub gamma: Option<f64>,
    pub delta_mod: Option<f64>,
    pub synchronized: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: u64,
    pub w_n: f64,
    pub w_c: f64,
    pub offset_rel: f64,
    pub gamma_at_wn: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub n: u64,
    pub w: f64,
    pub delta: f64,
    pub sz_oracle: f64,
    pub sz_cumulant: f64,
    pub gamma_oracle: f64,
    pub gamma_cumulant: f64,
    pub delta_oracle: f64,
    pub delta_cumulant: f64,
}

impl CsvRow for SpectrumRow {
    const HEADER: &'static [&'static str] = &["omega", "intensity"];
}

impl CsvRow for Fig2Row {
    const HEADER: &'static [&'static str] = &["delta", "sz", "gamma", "delta_mod"];
}

impl CsvRow for PhaseRow {
    const HEADER: &'static [&'static str] = &["w", "delta", "n", "sz", "gamma", "delta_mod", "synchronized"];
}

impl CsvRow for ScalingRow {
    const HEADER: &'static [&'static str] = &["n", "w_n", "w_c", "offset_rel", "gamma_at_wn"];
}

impl CsvRow for OracleRow {
    const HEADER: &'static [&'static str] = &[
        "n",
        "w",
        "delta",
        "sz_oracle",
        "sz_cumulant",
        "gamma_oracle",
        "gamma_cumulant",
        "delta_oracle",
        "delta_cumulant",
    ];
}

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("unexpected header {found:?}, expected {expected:?}")]
    Header { found: Vec<String>, expected: Vec<String> },
}

pub fn write_csv<R: CsvRow, W: Write>(rows: &[R], out: W) -> Result<(), csv::Error> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    writer.write_record(R::HEADER)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_csv<R: CsvRow, I: Read>(input: I) -> Result<Vec<R>, SchemaError> {
    let mut reader = csv::Reader::from_reader(input);
    let found: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if found != R::HEADER {
        return Err(SchemaError::Header {
            found,
            expected: R::HEADER.iter().map(|s| s.to_string()).collect(),
        });
    }
    Ok(reader.deserialize().collect::<Result<_, _>>()?)
}
