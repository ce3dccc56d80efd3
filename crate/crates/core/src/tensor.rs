//! Dense tensors and CP (canonical polyadic) factorizations.
//!
//! Every flat layout in the crate is last-index-fastest: the element at
//! `(j_1, ..., j_K)` lives at `((j_1 * M_2 + j_2) * M_3 + j_3) ...`.

use std::fmt;

use crate::error::{Error, Result};

/// Mode sizes `(M_1, ..., M_K)` of a tensor of order `K >= 2`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    dims: Vec<usize>,
    len: usize,
}

impl Shape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Structural(format!(
                "tensor order must be at least 2, got {}",
                dims.len()
            )));
        }
        if let Some(k) = dims.iter().position(|&m| m == 0) {
            return Err(Error::Structural(format!("mode {k} has size 0")));
        }
        let len = dims
            .iter()
            .try_fold(1usize, |acc, &m| acc.checked_mul(m))
            .ok_or_else(|| Error::Structural(format!("element count of {dims:?} overflows")))?;
        Ok(Self { dims, len })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Tensor order `K`.
    pub fn order(&self) -> usize {
        self.dims.len()
    }

    /// Total element count `M_1 * ... * M_K`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `M_1 + ... + M_K`.
    pub fn dim_sum(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn check_index(&self, index: &[usize]) -> Result<()> {
        if index.len() != self.dims.len() {
            return Err(Error::Structural(format!(
                "index {index:?} has {} coordinates, shape has order {}",
                index.len(),
                self.dims.len()
            )));
        }
        for (k, (&j, &m)) in index.iter().zip(&self.dims).enumerate() {
            if j >= m {
                return Err(Error::Structural(format!(
                    "index {j} out of range for mode {k} of size {m}"
                )));
            }
        }
        Ok(())
    }

    /// Flat offset of a multi-index.
    pub fn flat_index(&self, index: &[usize]) -> Result<usize> {
        self.check_index(index)?;
        Ok(self.flat_index_unchecked(index))
    }

    pub(crate) fn flat_index_unchecked(&self, index: &[usize]) -> usize {
        index
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&j, &m)| acc * m + j)
    }

    /// Multi-index of a flat offset.
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut index = vec![0; self.dims.len()];
        for (slot, &m) in index.iter_mut().zip(&self.dims).rev() {
            *slot = flat % m;
            flat /= m;
        }
        index
    }

    /// Steps `index` to the next multi-index in canonical order.
    /// Returns false after the last one.
    pub(crate) fn advance(&self, index: &mut [usize]) -> bool {
        for (slot, &m) in index.iter_mut().zip(&self.dims).rev() {
            *slot += 1;
            if *slot < m {
                return true;
            }
            *slot = 0;
        }
        false
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.dims.iter().map(|m| m.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::InvalidArgument(format!(
            "{what} has non-finite entry {} at offset {i}",
            values[i]
        ))),
        None => Ok(()),
    }
}

/// A real tensor stored densely in canonical layout.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    shape: Shape,
    values: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Shape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::Structural(format!(
                "{} values supplied for shape {shape} with {} elements",
                values.len(),
                shape.len()
            )));
        }
        check_finite(&values, "tensor")?;
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: Shape) -> Self {
        let values = vec![0.0; shape.len()];
        Self { shape, values }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(shape.len());
        let mut index = vec![0; shape.order()];
        loop {
            values.push(f(&index));
            if !shape.advance(&mut index) {
                break;
            }
        }
        Self::new(shape, values)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.values[self.shape.flat_index(index)?])
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub(crate) fn ensure_same_shape(&self, other: &DenseTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Structural(format!(
                "shape mismatch: {} vs {}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    /// Elementwise `self - other`.
    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.ensure_same_shape(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(DenseTensor {
            shape: self.shape.clone(),
            values,
        })
    }

    pub fn scaled(&self, c: f64) -> DenseTensor {
        DenseTensor {
            shape: self.shape.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }
}

/// Factor matrices `U^(1), ..., U^(K)` of a rank-`d` CP decomposition.
///
/// Factor `k` is a `d x M_k` matrix stored row-major, so row `r` is the
/// `r`-th component's mode-`k` vector. A rank of zero is allowed and
/// composes to the zero tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct CpFactors {
    shape: Shape,
    rank: usize,
    factors: Vec<Vec<f64>>,
}

impl CpFactors {
    pub fn new(shape: Shape, rank: usize, factors: Vec<Vec<f64>>) -> Result<Self> {
        if factors.len() != shape.order() {
            return Err(Error::Structural(format!(
                "{} factor matrices supplied for an order-{} shape",
                factors.len(),
                shape.order()
            )));
        }
        for (k, (factor, &m)) in factors.iter().zip(shape.dims()).enumerate() {
            if factor.len() != rank * m {
                return Err(Error::Structural(format!(
                    "factor {k} has {} entries, expected {rank} x {m}",
                    factor.len()
                )));
            }
            check_finite(factor, "factor matrix")?;
        }
        Ok(Self {
            shape,
            rank,
            factors,
        })
    }

    pub fn zeros(shape: Shape, rank: usize) -> Self {
        let factors = shape.dims().iter().map(|&m| vec![0.0; rank * m]).collect();
        Self {
            shape,
            rank,
            factors,
        }
    }

    /// Builds factors by evaluating `f(k, r, j)` for every entry.
    pub fn from_fn(
        shape: Shape,
        rank: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let factors = shape
            .dims()
            .iter()
            .enumerate()
            .map(|(k, &m)| {
                (0..rank)
                    .flat_map(|r| (0..m).map(move |j| (r, j)))
                    .map(|(r, j)| f(k, r, j))
                    .collect()
            })
            .collect();
        Self::new(shape, rank, factors)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn order(&self) -> usize {
        self.shape.order()
    }

    /// Row-major `d x M_k` matrix of mode `k`.
    pub fn factor(&self, k: usize) -> &[f64] {
        &self.factors[k]
    }

    pub fn factors(&self) -> &[Vec<f64>] {
        &self.factors
    }

    /// Mode-`k` vector of component `r`.
    pub fn row(&self, k: usize, r: usize) -> &[f64] {
        let m = self.shape.dims()[k];
        &self.factors[k][r * m..(r + 1) * m]
    }

    pub fn entry(&self, k: usize, r: usize, j: usize) -> f64 {
        self.factors[k][r * self.shape.dims()[k] + j]
    }

    /// Number of free coordinates, `d * (M_1 + ... + M_K)`.
    pub fn n_coordinates(&self) -> usize {
        self.rank * self.shape.dim_sum()
    }

    pub(crate) fn set_factor(&mut self, k: usize, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.rank * self.shape.dims()[k]);
        self.factors[k] = values;
    }

    pub(crate) fn all_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.factors.iter().flatten().copied()
    }

    /// Sum of squared Frobenius norms of all factor matrices.
    pub fn frob_sq_sum(&self) -> f64 {
        self.all_values().map(|v| v * v).sum()
    }

    /// Multiplies every factor entry by `c`.
    pub fn scale_all(&mut self, c: f64) {
        for factor in &mut self.factors {
            factor.iter_mut().for_each(|v| *v *= c);
        }
    }

    /// Inserts a component at position `at`; `rows[k]` is its mode-k vector.
    pub fn insert_component(&mut self, at: usize, rows: &[Vec<f64>]) -> Result<()> {
        if at > self.rank || rows.len() != self.order() {
            return Err(Error::Structural(format!(
                "cannot insert component at {at} into rank {}",
                self.rank
            )));
        }
        for (k, row) in rows.iter().enumerate() {
            let m = self.shape.dims()[k];
            if row.len() != m {
                return Err(Error::Structural(format!(
                    "mode-{k} row has length {}, expected {m}",
                    row.len()
                )));
            }
            let pos = at * m;
            self.factors[k].splice(pos..pos, row.iter().copied());
        }
        self.rank += 1;
        Ok(())
    }

    /// Removes component `r` and returns its per-mode rows.
    pub fn remove_component(&mut self, r: usize) -> Result<Vec<Vec<f64>>> {
        if r >= self.rank {
            return Err(Error::Structural(format!(
                "component {r} out of range for rank {}",
                self.rank
            )));
        }
        let dims = self.shape.dims().to_vec();
        let removed = self
            .factors
            .iter_mut()
            .zip(dims)
            .map(|(factor, m)| factor.drain(r * m..(r + 1) * m).collect())
            .collect();
        self.rank -= 1;
        Ok(removed)
    }

    /// Single element `sum_r prod_k U^(k)[r, j_k]` without materializing.
    pub fn element(&self, index: &[usize]) -> Result<f64> {
        self.shape.check_index(index)?;
        Ok(self.element_unchecked(index))
    }

    pub(crate) fn element_unchecked(&self, index: &[usize]) -> f64 {
        (0..self.rank)
            .map(|r| {
                index
                    .iter()
                    .enumerate()
                    .map(|(k, &j)| self.entry(k, r, j))
                    .product::<f64>()
            })
            .sum()
    }

    /// Dense tensor `[[U^(1), ..., U^(K)]]`.
    pub fn compose(&self) -> DenseTensor {
        let mut values = vec![0.0; self.shape.len()];
        self.accumulate_into(&mut values, 0, None);
        DenseTensor {
            shape: self.shape.clone(),
            values,
        }
    }

    /// Adds the sub-tensor with the leading modes fixed to `values`.
    ///
    /// `weights[r]` multiplies component `r` (the product over the fixed
    /// leading modes); `first_free` is the first mode that is expanded.
    fn accumulate_into(&self, values: &mut [f64], first_free: usize, weights: Option<&[f64]>) {
        let dims = self.shape.dims();
        let mut outer = Vec::with_capacity(values.len());
        for r in 0..self.rank {
            let w = weights.map_or(1.0, |w| w[r]);
            if w == 0.0 {
                continue;
            }
            outer.clear();
            outer.extend(self.row(first_free, r).iter().map(|u| u * w));
            for k in first_free + 1..dims.len() {
                let row = self.row(k, r);
                let prev = std::mem::take(&mut outer);
                outer.reserve(prev.len() * row.len());
                for a in &prev {
                    outer.extend(row.iter().map(|u| a * u));
                }
            }
            for (v, o) in values.iter_mut().zip(&outer) {
                *v += o;
            }
        }
    }

    /// Visits mode-1 slices of the composed tensor one at a time.
    /// The callback receives the mode-1 index and the slice values.
    pub(crate) fn for_each_slice(&self, mut f: impl FnMut(usize, &[f64])) {
        let slice_len = self.shape.len() / self.shape.dims()[0];
        let mut slice = vec![0.0; slice_len];
        let mut weights = vec![0.0; self.rank];
        for j in 0..self.shape.dims()[0] {
            slice.iter_mut().for_each(|v| *v = 0.0);
            for (r, w) in weights.iter_mut().enumerate() {
                *w = self.entry(0, r, j);
            }
            self.accumulate_into(&mut slice, 1, Some(&weights));
            f(j, &slice);
        }
    }

    /// Largest Euclidean norm of a factor column `U^(k)[:, j]`.
    ///
    /// This is the max-norm of this particular decomposition and hence an
    /// upper bound on the max-norm of the composed tensor.
    pub fn max2_upper_bound(&self) -> f64 {
        let dims = self.shape.dims();
        let mut best = 0.0f64;
        for (k, &m) in dims.iter().enumerate() {
            for j in 0..m {
                let sq: f64 = (0..self.rank).map(|r| self.entry(k, r, j).powi(2)).sum();
                best = best.max(sq.sqrt());
            }
        }
        best
    }
}
