use crate::scalar::Real;

/// Row-major `rows × dim` matrix of per-point attribute vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeMatrix<T> {
    rows: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> AttributeMatrix<T> {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            rows,
            dim,
            data: vec![T::zero(); rows * dim],
        }
    }

    /// Panics if `data.len() != rows * dim`.
    pub fn from_vec(rows: usize, dim: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * dim, "attribute buffer has wrong length");
        Self { rows, dim, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            assert_eq!(r.len(), dim, "ragged attribute rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            dim,
            data,
        }
    }

    pub fn from_points(points: &[[T; 3]]) -> Self {
        Self {
            rows: points.len(),
            dim: 3,
            data: points.iter().flatten().copied().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.dim.max(1)).take(self.rows)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn column(&self, d: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.data[i * self.dim + d]).collect()
    }

    /// Rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            dim: self.dim,
            data,
        }
    }

    /// Columns side by side: `[self | other]`.
    pub fn hstack(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows);
        let dim = self.dim + other.dim;
        let mut data = Vec::with_capacity(self.rows * dim);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Self {
            rows: self.rows,
            dim,
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}
