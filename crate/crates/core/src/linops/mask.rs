use crate::DenseMatrix;

/// Bit-packed n×n 0/1 matrix with cached popcount and row/column sums.
///
/// Bits are stored column by column; each column occupies
/// `ceil(n / 64)` words and the unused high bits of the last word are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMask {
    n: usize,
    words_per_col: usize,
    bits: Vec<u64>,
    popcount: usize,
    row_sums: Vec<usize>,
    col_sums: Vec<usize>,
}

impl BinaryMask {
    pub fn zeros(n: usize) -> Self {
        Self::from_fn(n, |_, _| false)
    }

    pub fn ones(n: usize) -> Self {
        Self::from_fn(n, |_, _| true)
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let words_per_col = n.div_ceil(64).max(1);
        let mut bits = vec![0u64; words_per_col * n];
        let mut row_sums = vec![0usize; n];
        let mut col_sums = vec![0usize; n];
        let mut popcount = 0;
        for j in 0..n {
            let col = &mut bits[j * words_per_col..(j + 1) * words_per_col];
            for i in 0..n {
                if f(i, j) {
                    col[i / 64] |= 1u64 << (i % 64);
                    row_sums[i] += 1;
                    col_sums[j] += 1;
                    popcount += 1;
                }
            }
        }
        Self {
            n,
            words_per_col,
            bits,
            popcount,
            row_sums,
            col_sums,
        }
    }

    /// Mask of entries where `pred(z_ij)` holds.
    pub fn from_matrix(z: &DenseMatrix, pred: impl Fn(f64) -> bool) -> Self {
        let n = z.nrows();
        let data = z.as_slice();
        Self::from_fn(n, |i, j| pred(data[i + j * n]))
    }

    /// Mask of a 0/1 matrix (any nonzero counts as one).
    pub fn from_01(z: &DenseMatrix) -> Self {
        Self::from_matrix(z, |v| v != 0.0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of ones (γ).
    pub fn popcount(&self) -> usize {
        self.popcount
    }

    /// Ωe: number of ones in each row.
    pub fn row_sums(&self) -> &[usize] {
        &self.row_sums
    }

    /// Ωᵀe: number of ones in each column.
    pub fn col_sums(&self) -> &[usize] {
        &self.col_sums
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[j * self.words_per_col + i / 64] >> (i % 64) & 1 == 1
    }

    pub fn complement(&self) -> Self {
        Self::from_fn(self.n, |i, j| !self.get(i, j))
    }

    pub fn to_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n, self.n, |i, j| if self.get(i, j) { 1.0 } else { 0.0 })
    }

    /// Calls `f(i)` for every row index `i` with `mask[i, j] == value`.
    #[inline]
    pub(crate) fn for_each_in_col(&self, j: usize, value: bool, mut f: impl FnMut(usize)) {
        let col = &self.bits[j * self.words_per_col..(j + 1) * self.words_per_col];
        for (w, &word) in col.iter().enumerate() {
            let mut word = if value { word } else { !word };
            if !value && w + 1 == self.words_per_col && !self.n.is_multiple_of(64) {
                word &= (1u64 << (self.n % 64)) - 1;
            }
            while word != 0 {
                let b = word.trailing_zeros() as usize;
                f(w * 64 + b);
                word &= word - 1;
            }
        }
    }

    /// Entrywise product `mask ∘ h`.
    pub fn hadamard(&self, h: &DenseMatrix) -> DenseMatrix {
        let n = self.n;
        let mut out = DenseMatrix::zeros(n, n);
        let src = h.as_slice();
        let dst = out.as_mut_slice();
        for j in 0..n {
            self.for_each_in_col(j, true, |i| dst[i + j * n] = src[i + j * n]);
        }
        out
    }
}
