//! Trace CSV and binary field snapshots.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{FunctionalSample, FunctionalTrace};
use crate::grid::{Grid, ScalarField, VectorField};

const REL_PREFIX: &str = "rel_entropy_L";

fn decode_err(what: &'static str, detail: impl Into<String>) -> Error {
    Error::Decode { what, detail: detail.into() }
}

pub fn trace_header(l_values: &[u32]) -> Vec<String> {
    FunctionalSample::FIXED_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(l_values.iter().map(|l| format!("{REL_PREFIX}{l}")))
        .collect()
}

/// Serialises the samples, one row each, with shortest round-trip floats.
pub fn trace_to_csv(trace: &FunctionalTrace) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(trace_header(&trace.meta.l_values))?;
    for s in &trace.samples {
        let row: Vec<String> = s.fixed_values().iter().chain(&s.rel_entropy).map(|v| v.to_string()).collect();
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Columns of a trace file read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub l_values: Vec<u32>,
    pub samples: Vec<FunctionalSample>,
}

pub fn parse_trace_csv(bytes: &[u8]) -> Result<TraceTable> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = r.headers().map_err(|e| decode_err("trace csv", e.to_string()))?.clone();
    let fixed = FunctionalSample::FIXED_COLUMNS.len();
    if header.len() < fixed {
        return Err(decode_err("trace csv", format!("expected at least {fixed} columns, found {}", header.len())));
    }
    for (k, (got, want)) in header.iter().zip(FunctionalSample::FIXED_COLUMNS).enumerate() {
        if got != want {
            return Err(decode_err("trace csv", format!("column {k} is `{got}`, expected `{want}`")));
        }
    }
    let l_values = header
        .iter()
        .skip(fixed)
        .map(|name| {
            name.strip_prefix(REL_PREFIX)
                .and_then(|l| l.parse::<u32>().ok())
                .ok_or_else(|| decode_err("trace csv", format!("unexpected column `{name}`")))
        })
        .collect::<Result<Vec<u32>>>()?;
    let mut samples = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| decode_err("trace csv", e.to_string()))?;
        if rec.len() != header.len() {
            return Err(decode_err(
                "trace csv",
                format!("row {} has {} fields, expected {}", row + 1, rec.len(), header.len()),
            ));
        }
        let vals = rec
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| decode_err("trace csv", format!("row {}: `{f}` is not a number", row + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        let s = FunctionalSample::from_values(&vals[..fixed], vals[fixed..].to_vec())
            .ok_or_else(|| decode_err("trace csv", format!("row {} has the wrong shape", row + 1)))?;
        samples.push(s);
    }
    Ok(TraceTable { l_values, samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Cell,
    UFace,
    VFace,
}

impl Location {
    pub fn len(self, nx: usize, ny: usize) -> Option<usize> {
        match self {
            Location::Cell => nx.checked_mul(ny),
            Location::UFace => (nx.checked_add(1)?).checked_mul(ny),
            Location::VFace => nx.checked_mul(ny.checked_add(1)?),
        }
    }
}

/// JSON sidecar of a snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotMeta {
    pub field: String,
    pub location: Location,
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub t: f64,
    pub len: usize,
    /// Always `f64le`.
    pub encoding: String,
}

/// One field as raw little-endian `f64` plus metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub meta: SnapshotMeta,
    pub data: Vec<f64>,
}

impl Snapshot {
    fn new(field: &str, location: Location, grid: Grid, t: f64, data: Vec<f64>) -> Self {
        let meta = SnapshotMeta {
            field: field.into(),
            location,
            nx: grid.nx,
            ny: grid.ny,
            lx: grid.lx,
            ly: grid.ly,
            t,
            len: data.len(),
            encoding: "f64le".into(),
        };
        Snapshot { meta, data }
    }

    pub fn scalar(field: &str, f: &ScalarField, t: f64) -> Self {
        Snapshot::new(field, Location::Cell, f.grid, t, f.data.clone())
    }

    /// The two velocity components as separate snapshots.
    pub fn velocity(field: &str, v: &VectorField, t: f64) -> [Self; 2] {
        [
            Snapshot::new(&format!("{field}_u"), Location::UFace, v.grid, t, v.u.clone()),
            Snapshot::new(&format!("{field}_v"), Location::VFace, v.grid, t, v.v.clone()),
        ]
    }

    pub fn encode(&self) -> (Vec<u8>, String) {
        let bytes = self.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        (bytes, serde_json::to_string_pretty(&self.meta).expect("sidecar serialises"))
    }

    pub fn decode(bytes: &[u8], sidecar: &str) -> Result<Self> {
        let meta: SnapshotMeta =
            serde_json::from_str(sidecar).map_err(|e| decode_err("snapshot sidecar", e.to_string()))?;
        if meta.encoding != "f64le" {
            return Err(decode_err("snapshot sidecar", format!("unsupported encoding `{}`", meta.encoding)));
        }
        Grid::new(meta.nx, meta.ny, meta.lx, meta.ly).map_err(|e| decode_err("snapshot sidecar", e.to_string()))?;
        if !meta.t.is_finite() {
            return Err(decode_err("snapshot sidecar", "time must be finite"));
        }
        let expected = meta.location.len(meta.nx, meta.ny).filter(|&n| n == meta.len);
        let Some(len) = expected else {
            return Err(decode_err(
                "snapshot sidecar",
                format!("len {} does not match the {:?} layout", meta.len, meta.location),
            ));
        };
        if len.checked_mul(8) != Some(bytes.len()) {
            return Err(decode_err(
                "snapshot",
                format!("expected {} bytes, found {}", len.saturating_mul(8), bytes.len()),
            ));
        }
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
        Ok(Snapshot { meta, data })
    }

    /// Writes `<field>.f64` and `<field>.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let (bytes, sidecar) = self.encode();
        fs::write(dir.join(format!("{}.f64", self.meta.field)), bytes)?;
        fs::write(dir.join(format!("{}.json", self.meta.field)), sidecar)?;
        Ok(())
    }

    pub fn read(dir: &Path, field: &str) -> Result<Self> {
        let bytes = fs::read(dir.join(format!("{field}.f64")))?;
        let sidecar = fs::read_to_string(dir.join(format!("{field}.json")))?;
        Snapshot::decode(&bytes, &sidecar)
    }
}
