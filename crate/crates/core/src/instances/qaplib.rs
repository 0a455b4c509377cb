use std::fmt::Write as _;
use std::path::Path;

use crate::{DenseMatrix, Error, Result};

/// Asymmetry above which a warning is logged before symmetrizing.
pub const ASYMMETRY_WARN: f64 = 1e-8;

/// A quadratic assignment instance with symmetric flow and distance data.
#[derive(Clone, Debug, PartialEq)]
pub struct QapInstance {
    pub name: String,
    pub n: usize,
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    /// `max(‖A − Aᵀ‖, ‖B − Bᵀ‖)` of the raw data, before symmetrization.
    pub raw_asymmetry: f64,
}

impl QapInstance {
    /// Builds an instance, replacing `A` and `B` by their symmetric parts.
    pub fn new(name: impl Into<String>, a: DenseMatrix, b: DenseMatrix) -> Result<Self> {
        let n = crate::check_square(&a)?;
        if crate::check_square(&b)? != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: b.nrows(),
            });
        }
        if n == 0 {
            return Err(Error::Invalid("instance dimension must be positive".into()));
        }
        crate::check_finite_matrix(&a, "A")?;
        crate::check_finite_matrix(&b, "B")?;
        let name = name.into();
        let asym = (&a - a.transpose()).norm().max((&b - b.transpose()).norm());
        if asym > ASYMMETRY_WARN {
            log::warn!("{name}: asymmetric data (‖M − Mᵀ‖ = {asym:.3e}), using symmetric parts");
        }
        let sym = |m: &DenseMatrix| (m + m.transpose()) * 0.5;
        Ok(Self {
            name,
            n,
            a: sym(&a),
            b: sym(&b),
            raw_asymmetry: asym,
        })
    }

    /// QAP objective `tr(A X B Xᵀ)` at the permutation `i ↦ perm[i]`.
    pub fn permutation_cost(&self, perm: &[usize]) -> f64 {
        let n = self.n;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                total += self.a[(i, j)] * self.b[(perm[i], perm[j])];
            }
        }
        total
    }
}

/// Parses QAPLIB text: `n`, then `n²` entries of `A` row by row, then `n²`
/// entries of `B`.
///
/// Tokens may be spread over lines arbitrarily. Blank lines and lines whose
/// first non-blank character is `#` or `%` are skipped; any other
/// non-numeric token is an error.
pub fn parse_qaplib(text: &str) -> Result<QapInstance> {
    parse_qaplib_named(text, "unnamed")
}

pub fn parse_qaplib_named(text: &str, name: &str) -> Result<QapInstance> {
    let mut tokens = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim_start();
        if trimmed.starts_with('#') || trimmed.starts_with('%') {
            continue;
        }
        for tok in trimmed.split_whitespace() {
            tokens.push((idx + 1, tok));
        }
    }
    let Some(&(line, first)) = tokens.first() else {
        return Err(Error::Parse {
            line: 0,
            msg: "empty input".into(),
        });
    };
    let n: i64 = first.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("expected instance size, found {first:?}"),
    })?;
    if n <= 0 {
        return Err(Error::Parse {
            line,
            msg: format!("instance size must be positive, found {n}"),
        });
    }
    let n = n as usize;
    let expected = 1 + 2 * n * n;
    if tokens.len() != expected {
        let last = tokens.last().map_or(0, |t| t.0);
        return Err(Error::Parse {
            line: last,
            msg: format!(
                "expected {} matrix entries for n = {n}, found {}",
                2 * n * n,
                tokens.len() - 1
            ),
        });
    }
    let mut values = Vec::with_capacity(2 * n * n);
    for &(line, tok) in &tokens[1..] {
        let v: f64 = tok.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("non-numeric token {tok:?}"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                line,
                msg: format!("non-finite entry {tok:?}"),
            });
        }
        values.push(v);
    }
    let a = DenseMatrix::from_row_slice(n, n, &values[..n * n]);
    let b = DenseMatrix::from_row_slice(n, n, &values[n * n..]);
    QapInstance::new(name, a, b)
}

/// Reads a QAPLIB file; the instance is named after the file stem.
pub fn load_qaplib(path: &Path) -> Result<QapInstance> {
    let text = std::fs::read_to_string(path)?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("unnamed");
    parse_qaplib_named(&text, name)
}

/// Writes an instance back in QAPLIB layout.
pub fn serialize_qaplib(inst: &QapInstance) -> String {
    let mut out = format!("{}\n", inst.n);
    for m in [&inst.a, &inst.b] {
        out.push('\n');
        for i in 0..inst.n {
            let row: Vec<String> = (0..inst.n).map(|j| format_entry(m[(i, j)])).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    }
    out
}

fn format_entry(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}
