//! The JSON envelope shared by every report.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::experiments::ExperimentSpec;
use crate::{TOOL_NAME, TOOL_VERSION};

/// Named tolerances, kept sorted so reports serialize deterministically.
pub type Tolerances = BTreeMap<String, f64>;

pub fn tolerances<const N: usize>(items: [(&str, f64); N]) -> Tolerances {
    items.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Report<T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub spec: ExperimentSpec,
    pub tolerances: Tolerances,
    pub passed: bool,
    pub result: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(spec: &ExperimentSpec, tolerances: Tolerances, passed: bool, result: T) -> Self {
        Self {
            tool: TOOL_NAME,
            version: TOOL_VERSION,
            spec: spec.clone(),
            tolerances,
            passed,
            result,
        }
    }
}
