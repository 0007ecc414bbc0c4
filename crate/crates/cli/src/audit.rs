//! Constraint audit over a results file.

use std::io::Read;

use crate::CliError;

/// Margins checked by the audit; empty cells (not applicable) are skipped.
pub const MARGIN_COLUMNS: [&str; 4] = [
    "digital_power_margin",
    "hybrid_power_margin",
    "constant_modulus_margin",
    "antenna_margin",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// 1-based data row.
    pub row: usize,
    pub method: String,
    pub column: &'static str,
    pub margin: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditSummary {
    pub rows: usize,
    pub violations: Vec<Violation>,
    /// Rows whose status is not `ok`.
    pub flagged: usize,
    pub worst_margin: Option<f64>,
}

/// Checks every margin column against `-tol`.
pub fn audit_results(input: impl Read, tol: f64) -> Result<AuditSummary, CliError> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers().map_err(|e| CliError::Schema(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Schema(format!("results have no `{name}` column")))
    };
    let method_col = col("method")?;
    let status_col = col("status")?;
    let margin_cols = MARGIN_COLUMNS
        .iter()
        .map(|&c| col(c).map(|i| (c, i)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut summary = AuditSummary::default();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Schema(e.to_string()))?;
        summary.rows += 1;
        if rec.get(status_col) != Some("ok") {
            summary.flagged += 1;
        }
        for &(name, j) in &margin_cols {
            let cell = rec.get(j).unwrap_or("");
            if cell.is_empty() {
                continue;
            }
            let m: f64 = cell
                .parse()
                .map_err(|_| CliError::Schema(format!("row {}: `{name}` = `{cell}` is not a number", i + 1)))?;
            summary.worst_margin = Some(summary.worst_margin.map_or(m, |w| w.min(m)));
            if !(m >= -tol) {
                summary.violations.push(Violation {
                    row: i + 1,
                    method: rec.get(method_col).unwrap_or("").to_string(),
                    column: name,
                    margin: m,
                });
            }
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_margin_is_reported() {
        let csv = "method,status,digital_power_margin,hybrid_power_margin,constant_modulus_margin,antenna_margin\n\
                   zf,ok,0.1,,,0\n\
                   model1,ok,-0.5,0,0,0\n\
                   zf,infeasible,,,,\n";
        let s = audit_results(csv.as_bytes(), 1e-9).unwrap();
        assert_eq!(s.rows, 3);
        assert_eq!(s.flagged, 1);
        assert_eq!(s.violations.len(), 1);
        assert_eq!((s.violations[0].row, s.violations[0].column), (2, "digital_power_margin"));
        assert_eq!(s.worst_margin, Some(-0.5));
    }

    #[test]
    fn missing_margin_column_is_schema_error() {
        assert!(matches!(
            audit_results("method,status\n".as_bytes(), 1e-9),
            Err(CliError::Schema(_))
        ));
    }
}
