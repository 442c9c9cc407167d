//! Versioned JSON report listing every acceptance criterion once.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, ErrorCategory};

pub const SCHEMA_VERSION: u32 = 1;

/// Criterion identifiers and short names, in report order.
pub const CRITERIA: [(u8, &str); 15] = [
    (1, "positive root of the log-square crossing"),
    (2, "power bound constants for l = 3 and l = 4"),
    (3, "sign of the gap functions over random exponent pairs"),
    (4, "gap function turns positive when m < n/2"),
    (5, "kinetic energy stays below its viscous envelope"),
    (6, "kinetic energy balance converges at first order in dt"),
    (7, "functional derivative formulas match finite differences"),
    (8, "Y and kinetic energy decay over the default run"),
    (9, "relative entropy norm decays over the default run"),
    (10, "differential inequality holds along the trace"),
    (11, "integrability and sampled inequality for Y and H"),
    (12, "discrete Korn identity against the continuum value"),
    (13, "steady solver exactness and maximum principle"),
    (14, "alternative temperature scale identities"),
    (15, "identical traces for identical seeds"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    NotEvaluated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub status: Status,
    pub measured: Value,
    pub threshold: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    /// `input` or `numerical`.
    pub class: String,
    /// Finer tag such as `positivity violation`.
    pub category: String,
    pub message: String,
}

impl From<&Error> for ErrorRecord {
    fn from(e: &Error) -> Self {
        let class = match e.category() {
            ErrorCategory::Input => "input",
            ErrorCategory::Numerical => "numerical",
        };
        ErrorRecord { class: class.into(), category: e.kind().into(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub criteria: Vec<CriterionResult>,
    pub metadata: BTreeMap<String, Value>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
    /// Raw numbers behind the criteria, for offline plotting.
    pub data: BTreeMap<String, Value>,
    pub error: Option<ErrorRecord>,
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        let criteria = CRITERIA
            .iter()
            .map(|&(id, name)| CriterionResult {
                id,
                name: name.into(),
                status: Status::NotEvaluated,
                measured: Value::Null,
                threshold: String::new(),
                detail: String::new(),
            })
            .collect();
        let mut metadata = BTreeMap::new();
        metadata.insert("crate_version".into(), Value::from(env!("CARGO_PKG_VERSION")));
        metadata.insert("rng".into(), Value::from("ChaCha8 (rand_chacha), seed_from_u64"));
        RunReport {
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            criteria,
            metadata,
            timings: BTreeMap::new(),
            data: BTreeMap::new(),
            error: None,
        }
    }

    /// Records the outcome of criterion `id`.
    pub fn record(&mut self, id: u8, passed: bool, measured: Value, threshold: &str, detail: impl Into<String>) {
        let c = self.criteria.iter_mut().find(|c| c.id == id).expect("criterion id in range");
        c.status = if passed { Status::Pass } else { Status::Fail };
        c.measured = measured;
        c.threshold = threshold.into();
        c.detail = detail.into();
    }

    pub fn criterion(&self, id: u8) -> &CriterionResult {
        self.criteria.iter().find(|c| c.id == id).expect("criterion id in range")
    }

    pub fn set_error(&mut self, e: &Error) {
        self.error = Some(ErrorRecord::from(e));
    }

    pub fn meta(&mut self, key: &str, value: impl Into<Value>) {
        self.metadata.insert(key.into(), value.into());
    }

    pub fn all_passed(&self) -> bool {
        self.error.is_none() && self.criteria.iter().all(|c| c.status != Status::Fail)
    }

    /// 0 all pass, 1 criterion failure, 2 input error, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match &self.error {
            Some(e) if e.class == "numerical" => 3,
            Some(_) => 2,
            None if self.criteria.iter().any(|c| c.status == Status::Fail) => 1,
            None => 0,
        }
    }

    /// One line per evaluated criterion.
    pub fn summary_lines(&self) -> Vec<String> {
        self.criteria
            .iter()
            .filter(|c| c.status != Status::NotEvaluated)
            .map(|c| {
                let tag = if c.status == Status::Pass { "PASS" } else { "FAIL" };
                format!("criterion {:>2} {tag}  {}  measured={}  threshold={}", c.id, c.name, c.measured, c.threshold)
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}
