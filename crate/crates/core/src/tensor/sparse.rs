use super::TensorError;

/// Constant weighted CSR matrix used for neighbor aggregation.
///
/// Row `r` holds entries `cols[offsets[r]..offsets[r + 1]]` with matching
/// `weights`. Entry positions double as arc ids for per-arc tensors
/// (attention logits and coefficients).
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRows {
    n_cols: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
}

impl SparseRows {
    pub fn new(
        n_cols: usize,
        offsets: Vec<usize>,
        cols: Vec<usize>,
        weights: Vec<f64>,
    ) -> Result<Self, TensorError> {
        let nnz = offsets.last().copied().unwrap_or(0);
        if offsets.is_empty()
            || offsets[0] != 0
            || offsets.windows(2).any(|w| w[0] > w[1])
            || nnz != cols.len()
            || cols.len() != weights.len()
        {
            return Err(TensorError::ShapeMismatch {
                op: "sparse_rows",
                lhs: vec![offsets.len(), nnz],
                rhs: vec![cols.len(), weights.len()],
            });
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= n_cols) {
            return Err(TensorError::Index {
                op: "sparse_rows",
                index: bad,
                len: n_cols,
            });
        }
        Ok(Self {
            n_cols,
            offsets,
            cols,
            weights,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Arc range of row `r`.
    pub fn range(&self, r: usize) -> std::ops::Range<usize> {
        self.offsets[r]..self.offsets[r + 1]
    }

    /// Row index owning each arc, in arc order.
    pub fn row_of_arcs(&self) -> Vec<usize> {
        let mut rows = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows() {
            rows.extend(std::iter::repeat_n(r, self.range(r).len()));
        }
        rows
    }
}
