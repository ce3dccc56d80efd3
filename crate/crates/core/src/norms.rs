//! Norms, inner products and the two prediction-error metrics.

use crate::designs::{DesignSet, SparseMeasurement};
use crate::error::{Error, Result};
use crate::tensor::{CpFactors, DenseTensor};

/// Above this many terms sums switch from naive to pairwise accumulation.
pub const PAIRWISE_THRESHOLD: usize = 1_000_000;

const PAIRWISE_BLOCK: usize = 4096;

/// Sums `f(x)` over `values`, pairwise for long inputs.
pub fn sum_mapped(values: &[f64], f: impl Fn(f64) -> f64 + Copy) -> f64 {
    if values.len() <= PAIRWISE_THRESHOLD {
        values.iter().map(|&v| f(v)).sum()
    } else {
        pairwise(values, f)
    }
}

fn pairwise(values: &[f64], f: impl Fn(f64) -> f64 + Copy) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        return values.iter().map(|&v| f(v)).sum();
    }
    let (lo, hi) = values.split_at(values.len() / 2);
    pairwise(lo, f) + pairwise(hi, f)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormKind {
    /// Entrywise l_p norm, `p >= 1`.
    Lp(f64),
    /// Largest absolute entry.
    Infinity,
    /// Factor-level max-norm; only available on [`CpFactors`].
    Max2UpperBound,
}

/// Norm of a dense tensor.
pub fn norm(a: &DenseTensor, kind: NormKind) -> Result<f64> {
    let values = a.values();
    match kind {
        NormKind::Lp(p) if !(p >= 1.0 && p.is_finite()) => Err(Error::InvalidArgument(format!(
            "l_p norm requires finite p >= 1, got {p}"
        ))),
        NormKind::Lp(p) if p == 1.0 => Ok(sum_mapped(values, f64::abs)),
        NormKind::Lp(p) if p == 2.0 => Ok(sum_mapped(values, |v| v * v).sqrt()),
        NormKind::Lp(p) => {
            // scale by the max entry so large p does not overflow
            let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if scale == 0.0 {
                return Ok(0.0);
            }
            Ok(scale * sum_mapped(values, |v| (v.abs() / scale).powf(p)).powf(1.0 / p))
        }
        NormKind::Infinity => Ok(values.iter().fold(0.0f64, |m, v| m.max(v.abs()))),
        NormKind::Max2UpperBound => Err(Error::Unsupported(
            "max-norm upper bound needs a CP decomposition, not a dense tensor".into(),
        )),
    }
}

/// Norm of the tensor represented by `factors`.
///
/// `Max2UpperBound` is computed from the factors directly; other kinds
/// compose the dense tensor first.
pub fn factor_norm(factors: &CpFactors, kind: NormKind) -> Result<f64> {
    match kind {
        NormKind::Max2UpperBound => Ok(factors.max2_upper_bound()),
        other => norm(&factors.compose(), other),
    }
}

/// Largest absolute entry of `[[U]]`, computed one mode-1 slice at a time.
pub fn streamed_infinity_norm(factors: &CpFactors) -> f64 {
    let mut best = 0.0f64;
    factors.for_each_slice(|_, slice| {
        best = slice.iter().fold(best, |m, v| m.max(v.abs()));
    });
    best
}

/// Something that can be paired with a dense tensor in `<A, X>`.
pub trait TensorOperand {
    fn inner_with(&self, a: &DenseTensor) -> Result<f64>;
}

impl TensorOperand for DenseTensor {
    fn inner_with(&self, a: &DenseTensor) -> Result<f64> {
        a.ensure_same_shape(self)?;
        let products: Vec<f64> = a
            .values()
            .iter()
            .zip(self.values())
            .map(|(x, y)| x * y)
            .collect();
        Ok(sum_mapped(&products, |v| v))
    }
}

impl TensorOperand for SparseMeasurement {
    fn inner_with(&self, a: &DenseTensor) -> Result<f64> {
        self.dot_dense(a)
    }
}

/// `<A, X> = sum over all indices of A * X`; sparse operands only touch
/// their stored entries.
pub fn inner_product(a: &DenseTensor, x: &impl TensorOperand) -> Result<f64> {
    x.inner_with(a)
}

/// In-sample squared distance `(1/n) sum_i <X_i, a - b>^2`.
pub fn empirical_sq_norm(a: &DenseTensor, b: &DenseTensor, design: &DesignSet) -> Result<f64> {
    if design.is_empty() {
        return Err(Error::InvalidArgument(
            "empirical norm needs at least one measurement".into(),
        ));
    }
    a.ensure_same_shape(b)?;
    if a.shape() != design.shape() {
        return Err(Error::Structural(format!(
            "tensor shape {} does not match design shape {}",
            a.shape(),
            design.shape()
        )));
    }
    let diff = a.sub(b)?;
    let squares = design
        .observations()
        .iter()
        .map(|obs| obs.x.dot_dense(&diff).map(|v| v * v))
        .collect::<Result<Vec<f64>>>()?;
    Ok(sum_mapped(&squares, |v| v) / design.len() as f64)
}

/// Population squared distance under uniform single-cell sampling,
/// `||a - b||_2^2 / (M_1 ... M_K)`.
pub fn population_sq_norm_uniform(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let diff = a.sub(b)?;
    Ok(sum_mapped(diff.values(), |v| v * v) / a.shape().len() as f64)
}
