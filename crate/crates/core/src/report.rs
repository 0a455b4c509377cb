//! Run reports, post-hoc residual recomputation and the plain-text matrix
//! format used by the command-line tool.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::projector::kkt_residuals;
use crate::qpsolver::{qp_kkt_residual, QOperator};
use crate::{DenseMatrix, Error, Result, Vector};

/// Column order of the CSV output.
pub const CSV_COLUMNS: [&str; 9] = [
    "name",
    "n",
    "solver",
    "outer_iters",
    "inner_iters",
    "eta",
    "etaP",
    "time_s",
    "status",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Converged,
    Unconverged,
    Failed,
}

impl RowStatus {
    /// Same spelling as the serialized form.
    pub fn as_str(self) -> &'static str {
        match self {
            RowStatus::Converged => "converged",
            RowStatus::Unconverged => "unconverged",
            RowStatus::Failed => "failed",
        }
    }
}

/// One solved instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub n: usize,
    pub solver: String,
    /// Newton (or gradient) iterations for projections, ALM iterations for QPs.
    pub outer_iters: usize,
    /// CG iterations for projections, inner Newton iterations for QPs.
    pub inner_iters: usize,
    pub eta: Option<f64>,
    #[serde(rename = "etaP")]
    pub eta_p: Option<f64>,
    pub time_s: f64,
    pub status: RowStatus,
    /// `⟨X, 𝒬X⟩` at the returned point (QP rows only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    /// `⟨X, 𝒬X⟩ + Σs̄ + Σt̄` (QAP rows only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ReportRow {
    /// A row for an instance whose solve returned an error.
    pub fn failed(name: impl Into<String>, n: usize, solver: impl Into<String>, time_s: f64, err: &Error) -> Self {
        Self {
            name: name.into(),
            n,
            solver: solver.into(),
            outer_iters: 0,
            inner_iters: 0,
            eta: None,
            eta_p: None,
            time_s,
            status: RowStatus::Failed,
            bound: None,
            lower_bound: None,
            error: Some(err.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Resolved settings: tolerances, seeds, sizes and parameter overrides.
    pub config: serde_json::Value,
    pub rows: Vec<ReportRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<serde_json::Value>,
}

impl RunReport {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            rows: Vec::new(),
            summary: None,
        }
    }

    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.status == RowStatus::Converged)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_COLUMNS).map_err(csv_err)?;
        let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| format!("{x:e}"));
        for r in &self.rows {
            w.write_record([
                r.name.clone(),
                r.n.to_string(),
                r.solver.clone(),
                r.outer_iters.to_string(),
                r.inner_iters.to_string(),
                opt(r.eta),
                opt(r.eta_p),
                format!("{:.6}", r.time_s),
                r.status.as_str().to_string(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Invalid(e.to_string()))
    }

    /// Writes JSON when `path` ends in `.json`, CSV otherwise.
    pub fn write(&self, path: &Path) -> Result<()> {
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let text = if is_json { self.to_json()? } else { self.to_csv()? };
        std::fs::write(path, text)?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Invalid(format!("csv: {e}"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    Projection,
    Qp,
}

/// Solver outputs handed to [`recompute_eta`].
#[derive(Clone, Copy, Debug, Default)]
pub struct Artifacts<'a> {
    pub g: Option<&'a DenseMatrix>,
    pub x: Option<&'a DenseMatrix>,
    pub y: Option<&'a Vector>,
    pub q: Option<&'a QOperator>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Recomputed {
    pub eta: f64,
    /// Only for projections.
    pub eta_p: Option<f64>,
    pub eta_c: Option<f64>,
}

/// Re-evaluates the relative KKT residual from the returned iterates alone.
pub fn recompute_eta(kind: ProblemKind, art: &Artifacts<'_>) -> Result<Recomputed> {
    let missing = |what: &str| Error::Invalid(format!("missing artifact: {what}"));
    let g = art.g.ok_or_else(|| missing("G"))?;
    let x = art.x.ok_or_else(|| missing("X"))?;
    match kind {
        ProblemKind::Projection => {
            let y = art.y.ok_or_else(|| missing("y"))?;
            let k = kkt_residuals(g, x, y)?;
            Ok(Recomputed {
                eta: k.eta,
                eta_p: Some(k.eta_p),
                eta_c: Some(k.eta_c),
            })
        }
        ProblemKind::Qp => {
            let q = art.q.ok_or_else(|| missing("Q"))?;
            let (eta, _) = qp_kkt_residual(g, q, x, None)?;
            Ok(Recomputed {
                eta,
                eta_p: None,
                eta_c: None,
            })
        }
    }
}

/// Parses the text matrix format: the size `n`, then `n` rows of `n` numbers.
pub fn parse_matrix(text: &str) -> Result<DenseMatrix> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (line, first) = lines.next().ok_or(Error::Parse {
        line: 0,
        msg: "empty matrix file".into(),
    })?;
    let n: usize = first.trim().parse().map_err(|_| Error::Parse {
        line: line + 1,
        msg: format!("expected matrix size, found {:?}", first.trim()),
    })?;
    if n == 0 {
        return Err(Error::Parse {
            line: line + 1,
            msg: "matrix size must be positive".into(),
        });
    }
    let mut m = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let (line, row) = lines.next().ok_or(Error::Parse {
            line: 0,
            msg: format!("expected {n} rows, found {i}"),
        })?;
        let vals: Vec<&str> = row.split_whitespace().collect();
        if vals.len() != n {
            return Err(Error::Parse {
                line: line + 1,
                msg: format!("expected {n} entries, found {}", vals.len()),
            });
        }
        for (j, tok) in vals.iter().enumerate() {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                line: line + 1,
                msg: format!("bad number {tok:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line + 1,
                    msg: format!("non-finite entry {tok:?}"),
                });
            }
            m[(i, j)] = v;
        }
    }
    if let Some((line, _)) = lines.next() {
        return Err(Error::Parse {
            line: line + 1,
            msg: "trailing data after matrix".into(),
        });
    }
    Ok(m)
}

/// Formats a square matrix with shortest round-trip floats.
pub fn format_matrix(m: &DenseMatrix) -> String {
    let mut out = format!("{}\n", m.nrows());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:e}", m[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn load_matrix(path: &Path) -> Result<DenseMatrix> {
    parse_matrix(&std::fs::read_to_string(path)?)
}

pub fn save_matrix(path: &Path, m: &DenseMatrix) -> Result<()> {
    std::fs::write(path, format_matrix(m))?;
    Ok(())
}

/// Least-squares fit `log t = c + p log n`; returns `(p, c)`.
///
/// Needs at least two distinct sizes and positive times.
pub fn loglog_fit(ns: &[f64], times: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .zip(times)
        .filter(|(n, t)| **n > 0.0 && **t > 0.0)
        .map(|(n, t)| (n.ln(), t.ln()))
        .collect();
    let k = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}
