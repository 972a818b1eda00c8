use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Estimation method, in the column order used by comparison reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "SO")]
    StrongOakley,
    #[serde(rename = "SAD")]
    Sadatsafavi,
    #[serde(rename = "GP")]
    GaussianProcess,
    #[serde(rename = "GAM")]
    Gam,
    #[serde(rename = "MC")]
    NestedMonteCarlo,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::StrongOakley,
        Method::Sadatsafavi,
        Method::GaussianProcess,
        Method::Gam,
        Method::NestedMonteCarlo,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::StrongOakley => "SO",
            Method::Sadatsafavi => "SAD",
            Method::GaussianProcess => "GP",
            Method::Gam => "GAM",
            Method::NestedMonteCarlo => "MC",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// An EVPPI value with its method, uncertainty and diagnostics.
///
/// `value` is the raw estimate; regression estimators may produce values a
/// rounding error below zero, which [`EvppiEstimate::reported_value`] clamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvppiEstimate {
    pub value: f64,
    pub method: Method,
    pub std_error: Option<f64>,
    pub diagnostics: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl EvppiEstimate {
    pub fn new(method: Method, value: f64) -> Self {
        Self {
            value,
            method,
            std_error: None,
            diagnostics: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn with_diagnostic(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.diagnostics.insert(key.to_string(), value.into());
        self
    }

    pub fn set_diagnostic(&mut self, key: &str, value: impl Into<Value>) {
        self.diagnostics.insert(key.to_string(), value.into());
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }

    pub fn reported_value(&self) -> f64 {
        self.value.max(0.0)
    }
}
