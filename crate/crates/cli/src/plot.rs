//! Aggregation of `results.csv` into plot-ready series.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::Serialize;

use crate::config::Method;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Figure {
    /// Rate versus per-antenna power.
    Power,
    /// Rate versus RF chains, labelled `D`, `D+1`, …
    Rfchains,
    /// Rate versus BS antenna count.
    Antennas,
}

impl Figure {
    pub fn column(self) -> &'static str {
        match self {
            Figure::Power => "power_dbm",
            Figure::Rfchains => "n_rf_offset",
            Figure::Antennas => "n_antennas",
        }
    }

    fn label(self, x: f64) -> String {
        match self {
            Figure::Rfchains if x == 0.0 => "D".into(),
            Figure::Rfchains => format!("D+{x}"),
            _ => format!("{x}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRow {
    pub x: f64,
    pub label: String,
    pub method: String,
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

/// Mean and standard error of the mean (sample standard deviation over √n);
/// a single value has zero error.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Groups rows by the figure's x column and method and averages `metric`.
/// Rows with an empty metric (e.g. infeasible baselines) are skipped. Output
/// is ordered by x, then by method in canonical order.
pub fn aggregate(input: impl Read, figure: Figure, metric: &str) -> Result<Vec<PlotRow>, CliError> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers().map_err(|e| CliError::Schema(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Schema(format!("results have no `{name}` column")))
    };
    let (xi, mi, vi) = (col(figure.column())?, col("method")?, col(metric)?);
    let mut groups: HashMap<(u64, String), Vec<f64>> = HashMap::new();
    let mut method_order: Vec<String> = Vec::new();
    let mut xs: Vec<f64> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Schema(e.to_string()))?;
        let parse = |j: usize| -> Result<Option<f64>, CliError> {
            let s = rec.get(j).unwrap_or("");
            if s.is_empty() {
                return Ok(None);
            }
            s.parse()
                .map(Some)
                .map_err(|_| CliError::Schema(format!("row {}: `{}` is not a number", i + 2, s)))
        };
        let x = parse(xi)?
            .ok_or_else(|| CliError::Schema(format!("row {}: empty `{}`", i + 2, figure.column())))?;
        let method = rec.get(mi).unwrap_or("").to_string();
        if !method_order.contains(&method) {
            method_order.push(method.clone());
            method_order.sort_by_key(|m| (Method::parse(m).map_or(Method::ALL.len(), |k| k as usize), m.clone()));
        }
        if !xs.contains(&x) {
            xs.push(x);
        }
        if let Some(v) = parse(vi)? {
            groups.entry((x.to_bits(), method)).or_default().push(v);
        }
    }
    xs.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    for &x in &xs {
        for method in &method_order {
            if let Some(vals) = groups.get(&(x.to_bits(), method.clone())) {
                let (mean, stderr) = mean_stderr(vals);
                out.push(PlotRow {
                    x,
                    label: figure.label(x),
                    method: method.clone(),
                    mean,
                    stderr,
                    count: vals.len(),
                });
            }
        }
    }
    Ok(out)
}

pub fn write_plot(w: impl Write, rows: &[PlotRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(w);
    if rows.is_empty() {
        w.write_record(["x", "label", "method", "mean", "stderr", "count"])
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(())
}
