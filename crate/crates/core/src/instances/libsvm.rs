use crate::{DenseMatrix, Error, Result};

/// Rows of sparse features read from `label idx:val idx:val …` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureSet {
    /// `(index, value)` pairs with 1-based, strictly increasing indices.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub labels: Vec<f64>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Largest feature index in use.
    pub fn dim(&self) -> usize {
        self.rows
            .iter()
            .filter_map(|r| r.last().map(|p| p.0))
            .max()
            .unwrap_or(0)
    }
}

pub fn parse_libsvm(text: &str) -> Result<FeatureSet> {
    let mut fs = FeatureSet::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: line_no, msg };
        let mut parts = line.split_whitespace();
        let label_tok = parts.next().expect("non-empty line has a token");
        let label: f64 = label_tok.parse().map_err(|_| err(format!("bad label {label_tok:?}")))?;
        let mut row = Vec::new();
        let mut prev = 0usize;
        for pair in parts {
            let (i, v) = pair
                .split_once(':')
                .ok_or_else(|| err(format!("malformed pair {pair:?}")))?;
            let i: usize = i.parse().map_err(|_| err(format!("bad index in {pair:?}")))?;
            let v: f64 = v.parse().map_err(|_| err(format!("bad value in {pair:?}")))?;
            if i == 0 {
                return Err(err("feature indices are 1-based".into()));
            }
            if i <= prev {
                return Err(err(format!("indices must increase strictly ({prev} then {i})")));
            }
            if !v.is_finite() {
                return Err(err(format!("non-finite value in {pair:?}")));
            }
            prev = i;
            row.push((i, v));
        }
        fs.rows.push(row);
        fs.labels.push(label);
    }
    Ok(fs)
}

/// `G_ij = exp(−‖xᵢ − xⱼ‖²)` after scaling every row to unit length, i.e.
/// `exp(−2 + 2⟨xᵢ, xⱼ⟩)`. No bandwidth parameter.
pub fn gaussian_kernel(fs: &FeatureSet) -> Result<DenseMatrix> {
    let m = fs.len();
    if m == 0 {
        return Err(Error::Invalid("feature set is empty".into()));
    }
    let mut rows = Vec::with_capacity(m);
    for (k, r) in fs.rows.iter().enumerate() {
        let norm = r.iter().map(|p| p.1 * p.1).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Invalid(format!("row {} has zero norm", k + 1)));
        }
        rows.push(r.iter().map(|&(i, v)| (i, v / norm)).collect::<Vec<_>>());
    }
    let mut scatter = vec![0.0; fs.dim() + 1];
    let mut g = DenseMatrix::identity(m, m);
    for i in 0..m {
        for &(k, v) in &rows[i] {
            scatter[k] = v;
        }
        for j in i + 1..m {
            let dot: f64 = rows[j].iter().map(|&(k, v)| scatter[k] * v).sum();
            let val = (-2.0 + 2.0 * dot.min(1.0)).exp();
            g[(i, j)] = val;
            g[(j, i)] = val;
        }
        for &(k, _) in &rows[i] {
            scatter[k] = 0.0;
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_examples() {
        let fs = parse_libsvm("1 1:0.5 3:0.5").unwrap();
        assert_eq!(fs.len(), 1);
        assert_eq!(fs.rows[0], vec![(1, 0.5), (3, 0.5)]);
        assert_eq!(fs.labels, vec![1.0]);
        let fs = parse_libsvm("\n-1 2:1\n\n+1 1:2 4:1\n").unwrap();
        assert_eq!(fs.len(), 2);
        assert_eq!(fs.dim(), 4);
        assert!(matches!(parse_libsvm("1 3:1 2:1"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_libsvm("1 3:1 3:1"), Err(Error::Parse { .. })));
        assert!(matches!(parse_libsvm("1 3-1"), Err(Error::Parse { .. })));
        assert!(matches!(parse_libsvm("1 0:1"), Err(Error::Parse { .. })));
        assert!(matches!(parse_libsvm("a 1:1"), Err(Error::Parse { .. })));
    }

    #[test]
    fn kernel_examples() {
        let fs = parse_libsvm("1 1:2\n1 1:5\n1 2:1\n1 1:1 2:1").unwrap();
        let g = gaussian_kernel(&fs).unwrap();
        assert_eq!(g[(0, 1)], 1.0);
        assert!((g[(0, 2)] - (-2.0f64).exp()).abs() < 1e-15);
        // ‖e₁ − (e₁ + e₂)/√2‖² = 2 − √2
        assert!((g[(0, 3)] - (-(2.0 - 2f64.sqrt())).exp()).abs() < 1e-15);
        assert!((0..4).all(|i| g[(i, i)] == 1.0));
        assert_eq!(g, g.transpose());
        assert!(g.iter().all(|&v| v > 0.0 && v <= 1.0));
        assert!(gaussian_kernel(&parse_libsvm("1 1:0").unwrap()).is_err());
        assert!(gaussian_kernel(&FeatureSet::default()).is_err());
    }
}
