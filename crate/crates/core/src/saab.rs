//! One-stage Saab transform: a constant DC filter, PCA-derived AC filters and
//! a single shared bias that keeps every response on the training set
//! non-negative.
//!
//! Fitting is streaming. Samples are folded into a [`SaabFitter`] (Welford
//! updates in `f64`) and partial fitters can be merged, so descriptor
//! matrices never have to be materialized.

use std::cmp::Ordering;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::attributes::AttributeMatrix;
use crate::scalar::{cast, Real};

#[derive(Debug, Error, PartialEq)]
pub enum SaabError {
    #[error("{found} samples cannot support {n_ac} AC filters (need at least {})", n_ac + 1)]
    TooFewSamples { found: u64, n_ac: usize },
    #[error("{n_ac} AC filters requested for input dimension {dim} (at most {})", dim.saturating_sub(1))]
    TooManyFilters { n_ac: usize, dim: usize },
    #[error("expected a vector of dimension {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cannot merge fitters of different configuration")]
    IncompatibleMerge,
    #[error("non-finite statistics in covariance")]
    NonFinite,
}

pub type Result<T, E = SaabError> = std::result::Result<T, E>;

/// How a stage reduces its descriptors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum Reduction {
    /// DC filter, AC principal components and a shared non-negativity bias.
    #[default]
    Saab,
    /// Plain principal components of the centered input, no DC split, no bias.
    Pca,
}

/// Streaming first and second moments of a vector population.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceAccumulator {
    dim: usize,
    count: u64,
    mean: Vec<f64>,
    // Upper triangle (row-major, j >= i) of the centered scatter matrix.
    scatter: Vec<f64>,
    delta: Vec<f64>,
}

impl CovarianceAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            count: 0,
            mean: vec![0.0; dim],
            scatter: vec![0.0; dim * dim],
            delta: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        self.count += 1;
        let inv = 1.0 / self.count as f64;
        for d in 0..self.dim {
            self.delta[d] = x[d] - self.mean[d];
            self.mean[d] += self.delta[d] * inv;
        }
        // scatter += delta_old * (x - mean_new)^T, symmetric by construction.
        for i in 0..self.dim {
            let di = self.delta[i];
            if di == 0.0 {
                continue;
            }
            let row = &mut self.scatter[i * self.dim..(i + 1) * self.dim];
            for j in i..self.dim {
                row[j] += di * (x[j] - self.mean[j]);
            }
        }
    }

    /// Chan et al. pairwise combination; `self` then holds both populations.
    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.dim, other.dim);
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta: Vec<f64> = (0..self.dim).map(|d| other.mean[d] - self.mean[d]).collect();
        let w = na * nb / n;
        for i in 0..self.dim {
            for j in i..self.dim {
                let k = i * self.dim + j;
                self.scatter[k] += other.scatter[k] + delta[i] * delta[j] * w;
            }
        }
        for d in 0..self.dim {
            self.mean[d] += delta[d] * nb / n;
        }
        self.count += other.count;
    }

    /// Population covariance (divided by `count`). With `centered == false`
    /// the raw second moment is returned instead.
    pub fn covariance(&self, centered: bool) -> DMatrix<f64> {
        let n = self.count.max(1) as f64;
        DMatrix::from_fn(self.dim, self.dim, |i, j| {
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            let c = self.scatter[a * self.dim + b] / n;
            if centered {
                c
            } else {
                c + self.mean[i] * self.mean[j]
            }
        })
    }
}

/// Descending eigenvalues of the reduced covariance and cumulative energy ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyCurve {
    pub eigenvalues: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl EnergyCurve {
    pub fn from_eigenvalues(mut eigenvalues: Vec<f64>) -> Self {
        eigenvalues.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
        for e in &mut eigenvalues {
            *e = e.max(0.0);
        }
        let total: f64 = eigenvalues.iter().sum();
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = eigenvalues
            .iter()
            .map(|&e| {
                acc += e;
                if total > 0.0 {
                    (acc / total).min(1.0)
                } else {
                    1.0
                }
            })
            .collect();
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Self {
            eigenvalues,
            cumulative,
        }
    }
}

/// Suggested filter count at the knee of a cumulative energy curve.
///
/// Both axes are rescaled to `[0, 1]` and the point farthest above the chord
/// joining the endpoints wins, lowest count on ties. Curves with fewer than
/// three eigenvalues, or with no point measurably above the chord, give 1.
pub fn energy_knee(curve: &EnergyCurve) -> usize {
    let n = curve.cumulative.len();
    if n < 3 {
        return 1;
    }
    let first = curve.cumulative[0];
    let span = curve.cumulative[n - 1] - first;
    if !(span > 0.0) {
        return 1;
    }
    let mut best = 1;
    let mut best_gap = 1e-9;
    for (k, &r) in curve.cumulative.iter().enumerate() {
        let x = k as f64 / (n - 1) as f64;
        let y = (r - first) / span;
        if y - x > best_gap {
            best_gap = y - x;
            best = k + 1;
        }
    }
    best
}

/// Fitted filters of one stage. Row 0 is the DC filter for [`Reduction::Saab`].
#[derive(Debug, Clone, PartialEq)]
pub struct SaabFilterBank<T> {
    reduction: Reduction,
    input_dim: usize,
    output_dim: usize,
    /// `output_dim × input_dim`, row-major.
    filters: Vec<T>,
    bias: T,
    /// Input offset subtracted before filtering (PCA only).
    offset: Option<Vec<T>>,
    /// Number of AC filters with nonzero energy; the rest are zero rows.
    valid_ac: usize,
    energy: EnergyCurve,
}

impl<T: Real> SaabFilterBank<T> {
    /// Assemble a bank from raw parts (used by deserialization and tests).
    pub fn from_parts(
        reduction: Reduction,
        input_dim: usize,
        filters: Vec<T>,
        bias: T,
        offset: Option<Vec<T>>,
        valid_ac: usize,
        energy: EnergyCurve,
    ) -> Result<Self> {
        if input_dim == 0 || !filters.len().is_multiple_of(input_dim) {
            return Err(SaabError::DimensionMismatch {
                expected: input_dim,
                found: filters.len(),
            });
        }
        if let Some(o) = &offset {
            if o.len() != input_dim {
                return Err(SaabError::DimensionMismatch {
                    expected: input_dim,
                    found: o.len(),
                });
            }
        }
        Ok(Self {
            reduction,
            input_dim,
            output_dim: filters.len() / input_dim,
            filters,
            bias,
            offset,
            valid_ac,
            energy,
        })
    }

    pub fn reduction(&self) -> Reduction {
        self.reduction
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn n_ac(&self) -> usize {
        match self.reduction {
            Reduction::Saab => self.output_dim - 1,
            Reduction::Pca => self.output_dim,
        }
    }

    pub fn valid_ac(&self) -> usize {
        self.valid_ac
    }

    pub fn bias(&self) -> T {
        self.bias
    }

    pub fn offset(&self) -> Option<&[T]> {
        self.offset.as_deref()
    }

    pub fn filters(&self) -> &[T] {
        &self.filters
    }

    pub fn filter(&self, k: usize) -> &[T] {
        &self.filters[k * self.input_dim..(k + 1) * self.input_dim]
    }

    pub fn dc_filter(&self) -> Option<&[T]> {
        (self.reduction == Reduction::Saab).then(|| self.filter(0))
    }

    pub fn ac_filters(&self) -> impl Iterator<Item = &[T]> {
        let skip = usize::from(self.reduction == Reduction::Saab);
        (skip..self.output_dim).map(move |k| self.filter(k))
    }

    pub fn energy(&self) -> &EnergyCurve {
        &self.energy
    }

    /// `out[k] = a_k · v + b`.
    pub fn apply_into(&self, v: &[T], out: &mut [T]) -> Result<()> {
        if v.len() != self.input_dim {
            return Err(SaabError::DimensionMismatch {
                expected: self.input_dim,
                found: v.len(),
            });
        }
        if out.len() != self.output_dim {
            return Err(SaabError::DimensionMismatch {
                expected: self.output_dim,
                found: out.len(),
            });
        }
        for (k, o) in out.iter_mut().enumerate() {
            let a = self.filter(k);
            let mut acc = T::zero();
            match &self.offset {
                None => {
                    for (&w, &x) in a.iter().zip(v) {
                        acc = acc + w * x;
                    }
                }
                Some(mu) => {
                    for ((&w, &x), &m) in a.iter().zip(v).zip(mu) {
                        acc = acc + w * (x - m);
                    }
                }
            }
            *o = acc + self.bias;
        }
        Ok(())
    }

    pub fn apply(&self, v: &[T]) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.output_dim];
        self.apply_into(v, &mut out)?;
        Ok(out)
    }

    pub fn apply_matrix(&self, m: &AttributeMatrix<T>) -> Result<AttributeMatrix<T>> {
        let mut out = AttributeMatrix::zeros(m.rows(), self.output_dim);
        for i in 0..m.rows() {
            self.apply_into(m.row(i), out.row_mut(i))?;
        }
        Ok(out)
    }
}

/// Streaming fitter for one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SaabFitter {
    reduction: Reduction,
    center: bool,
    acc: CovarianceAccumulator,
    max_norm2: f64,
    scratch: Vec<f64>,
}

impl SaabFitter {
    pub fn new(dim: usize, reduction: Reduction) -> Self {
        Self {
            reduction,
            center: true,
            acc: CovarianceAccumulator::new(dim),
            max_norm2: 0.0,
            scratch: vec![0.0; dim],
        }
    }

    /// Skip mean-centering before the eigen-decomposition (Saab only).
    pub fn uncentered(mut self) -> Self {
        self.center = false;
        self
    }

    pub fn dim(&self) -> usize {
        self.acc.dim()
    }

    pub fn count(&self) -> u64 {
        self.acc.count()
    }

    pub fn push<T: Real>(&mut self, v: &[T]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(SaabError::DimensionMismatch {
                expected: self.dim(),
                found: v.len(),
            });
        }
        let mut norm2 = 0.0;
        let mut sum = 0.0;
        for (s, &x) in self.scratch.iter_mut().zip(v) {
            let x = x.to_f64_lossy();
            *s = x;
            norm2 += x * x;
            sum += x;
        }
        self.max_norm2 = self.max_norm2.max(norm2);
        if self.reduction == Reduction::Saab {
            // Remove the projection onto the DC direction: v - (a0·v) a0 = v - mean(v).
            let m = sum / self.scratch.len() as f64;
            self.scratch.iter_mut().for_each(|s| *s -= m);
        }
        let scratch = std::mem::take(&mut self.scratch);
        self.acc.push(&scratch);
        self.scratch = scratch;
        Ok(())
    }

    pub fn push_matrix<T: Real>(&mut self, m: &AttributeMatrix<T>) -> Result<()> {
        m.iter_rows().try_for_each(|r| self.push(r))
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.reduction != other.reduction || self.center != other.center || self.dim() != other.dim() {
            return Err(SaabError::IncompatibleMerge);
        }
        self.acc.merge(&other.acc);
        self.max_norm2 = self.max_norm2.max(other.max_norm2);
        Ok(())
    }

    /// Solve for a bank with `n_ac` AC filters (Saab) or `n_ac` components (PCA).
    pub fn finish<T: Real>(&self, n_ac: usize) -> Result<SaabFilterBank<T>> {
        let dim = self.dim();
        let max_filters = match self.reduction {
            Reduction::Saab => dim.saturating_sub(1),
            Reduction::Pca => dim,
        };
        if n_ac > max_filters {
            return Err(SaabError::TooManyFilters { n_ac, dim });
        }
        if self.count() < n_ac as u64 + 1 {
            return Err(SaabError::TooFewSamples {
                found: self.count(),
                n_ac,
            });
        }
        let cov = self.acc.covariance(self.center || self.reduction == Reduction::Pca);
        if cov.iter().any(|x| !x.is_finite()) {
            return Err(SaabError::NonFinite);
        }
        let (values, vectors) = sorted_eigen(cov);

        let dc = 1.0 / (dim as f64).sqrt();
        let scale = values.first().copied().unwrap_or(0.0).max(0.0);
        let tol = scale * 1e-10;
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n_ac + 1);
        if self.reduction == Reduction::Saab {
            rows.push(vec![dc; dim]);
        }
        let mut valid = 0;
        for (k, &lambda) in values.iter().enumerate() {
            if valid == n_ac {
                break;
            }
            if !(lambda > tol) {
                break;
            }
            let mut v: Vec<f64> = vectors.column(k).iter().copied().collect();
            if self.reduction == Reduction::Saab {
                let p: f64 = v.iter().sum::<f64>() * dc;
                v.iter_mut().for_each(|x| *x -= p * dc);
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm < 1e-6 {
                    continue;
                }
                v.iter_mut().for_each(|x| *x /= norm);
            }
            fix_sign(&mut v);
            rows.push(v);
            valid += 1;
        }
        if valid < n_ac {
            log::warn!("rank deficient stage: {valid} of {n_ac} filters carry energy, padding with zero filters");
            let zeros = vec![0.0; dim];
            rows.resize(n_ac + usize::from(self.reduction == Reduction::Saab), zeros);
        }

        let (bias, offset) = match self.reduction {
            Reduction::Saab => (cast::<T>(self.max_norm2.sqrt()), None),
            Reduction::Pca => (T::zero(), Some(self.acc.mean().iter().map(|&m| cast::<T>(m)).collect())),
        };
        let mut bias = bias;
        // Rounding to T must not move the bias below the largest training norm.
        while bias.to_f64_lossy() < self.max_norm2.sqrt() && self.reduction == Reduction::Saab {
            bias = bias + bias * T::epsilon();
        }
        let filters = rows.iter().flatten().map(|&x| cast::<T>(x)).collect();
        SaabFilterBank::from_parts(
            self.reduction,
            dim,
            filters,
            bias,
            offset,
            valid,
            EnergyCurve::from_eigenvalues(values),
        )
    }
}

/// Fit a stage from an in-memory sample set.
pub fn fit_saab<T: Real>(samples: &AttributeMatrix<T>, n_ac: usize) -> Result<SaabFilterBank<T>> {
    let mut fitter = SaabFitter::new(samples.dim(), Reduction::Saab);
    fitter.push_matrix(samples)?;
    fitter.finish(n_ac)
}

/// Plain PCA counterpart of [`fit_saab`] keeping `n_components` components.
pub fn fit_pca<T: Real>(samples: &AttributeMatrix<T>, n_components: usize) -> Result<SaabFilterBank<T>> {
    let mut fitter = SaabFitter::new(samples.dim(), Reduction::Pca);
    fitter.push_matrix(samples)?;
    fitter.finish(n_components)
}

/// Eigenpairs sorted by descending eigenvalue (ties by original position).
fn sorted_eigen(cov: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

/// Make the largest-magnitude entry positive (first such entry on ties).
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}
