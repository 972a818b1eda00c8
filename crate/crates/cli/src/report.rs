//! Report types and their text tables.

use std::fmt::Write as _;

use evppi::{EvppiEstimate, Method};
use serde::Serialize;
use serde_json::Value;

/// Rounds for display; negative zero prints as zero.
pub fn fmt_value(v: f64, decimals: u8) -> String {
    let s = format!("{:.*}", decimals as usize, v);
    match s.strip_prefix('-') {
        Some(rest) if rest.chars().all(|c| c == '0' || c == '.') => rest.to_string(),
        _ => s,
    }
}

fn fmt_cell(value: f64, se: Option<f64>, decimals: u8) -> String {
    match se {
        Some(se) => format!("{} ({})", fmt_value(value, decimals), fmt_value(se, decimals)),
        None => fmt_value(value, decimals),
    }
}

fn render(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |cells: &[String], out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| {
                if i == 0 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(header, &mut out);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&rule, &mut out);
    for r in rows {
        line(r, &mut out);
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct EvppiReport {
    pub command: &'static str,
    pub source: Value,
    pub n_sims: usize,
    pub wtp: f64,
    pub subset: Vec<String>,
    pub evpi: f64,
    pub settings: Value,
    pub estimate: EvppiEstimate,
}

impl EvppiReport {
    pub fn table(&self, decimals: u8) -> String {
        let header = vec![
            "subset".to_string(),
            self.estimate.method.tag().to_string(),
            "EVPI".to_string(),
        ];
        let row = vec![
            self.subset.join(","),
            fmt_cell(self.estimate.reported_value(), self.estimate.std_error, decimals),
            fmt_value(self.evpi, decimals),
        ];
        render(&header, &[row])
    }
}

/// One cell of a comparison: an estimate, a failure, or a method that does
/// not apply to the row.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Cell {
    Ok { estimate: EvppiEstimate },
    Failed { method: Method, error: String },
    NotApplicable { method: Method, reason: String },
}

impl Cell {
    pub fn estimate(&self) -> Option<&EvppiEstimate> {
        match self {
            Cell::Ok { estimate } => Some(estimate),
            _ => None,
        }
    }

    fn text(&self, decimals: u8) -> String {
        match self {
            Cell::Ok { estimate } => fmt_cell(estimate.reported_value(), estimate.std_error, decimals),
            Cell::Failed { .. } => "error".into(),
            Cell::NotApplicable { .. } => "-".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub subset: Vec<String>,
    /// One cell per entry of [`CompareReport::methods`].
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub command: &'static str,
    pub source: Value,
    pub n_sims: usize,
    pub wtp: f64,
    pub evpi: f64,
    pub settings: Value,
    pub methods: Vec<Method>,
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    pub fn cell(&self, row: usize, method: Method) -> Option<&Cell> {
        let j = self.methods.iter().position(|&m| m == method)?;
        self.rows.get(row)?.cells.get(j)
    }

    pub fn table(&self, decimals: u8) -> String {
        let mut header = vec!["subset".to_string()];
        header.extend(self.methods.iter().map(|m| m.tag().to_string()));
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut cells = vec![r.subset.join(",")];
                cells.extend(r.cells.iter().map(|c| c.text(decimals)));
                cells
            })
            .collect();
        let mut out = render(&header, &rows);
        let _ = writeln!(
            out,
            "\nEVPI {}  (k = {}, S = {}; standard errors in parentheses)",
            fmt_value(self.evpi, decimals),
            self.wtp,
            self.n_sims
        );
        for (r, row) in self.rows.iter().enumerate() {
            for c in &row.cells {
                if let Cell::Failed { method, error } = c {
                    let _ = writeln!(out, "row {} {method}: {error}", r + 1);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSeries {
    pub subset: Vec<String>,
    pub method: Method,
    pub values: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_errors: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub command: &'static str,
    pub source: Value,
    pub n_sims: usize,
    pub settings: Value,
    pub grid: Vec<f64>,
    pub evpi: Vec<f64>,
    /// Treatment with the highest mean net benefit at each grid value.
    pub optimal_treatment: Vec<String>,
    /// Where the two treatments' mean net benefits cross.
    pub decision_flip_wtp: Option<f64>,
    /// The same crossing computed from the model's prior means.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_decision_flip_wtp: Option<f64>,
    pub evpi_argmax_wtp: f64,
    pub series: Vec<SweepSeries>,
}

impl SweepResult {
    pub fn table(&self, decimals: u8) -> String {
        let mut header = vec!["k".to_string(), "EVPI".to_string()];
        header.extend(
            self.series
                .iter()
                .map(|s| format!("{} {}", s.method.tag(), s.subset.join(","))),
        );
        let rows: Vec<Vec<String>> = (0..self.grid.len())
            .map(|i| {
                let mut r = vec![self.grid[i].to_string(), fmt_value(self.evpi[i], decimals)];
                r.extend(self.series.iter().map(|s| {
                    fmt_cell(
                        s.values[i].max(0.0),
                        s.std_errors.as_ref().map(|e| e[i]),
                        decimals,
                    )
                }));
                r
            })
            .collect();
        let mut out = render(&header, &rows);
        if let Some(k) = self.decision_flip_wtp {
            let _ = writeln!(out, "\ndecision flips at k = {}", fmt_value(k, decimals));
        }
        out
    }
}
