//! Exact Gibbs updates of one factor matrix.
//!
//! With every other mode fixed, `<[[U]], X_i>` is linear in `U^(k)`:
//! `<[[U]], X_i> = <B_i, U^(k)>` where
//! `B_i[r, j] = sum over entries of X_i with j_k = j of w * prod_{k' != k} U^(k')[r, j_k']`.
//! The Gaussian prior is conjugate, so `vec(U^(k))` has a Gaussian full
//! conditional with precision `(d / sigma_p^2) I + sum_i b_i b_i^T / sigma^2`
//! and mean `precision^{-1} sum_i y_i b_i / sigma^2`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Hyperparams, SamplerState};
use crate::designs::{DesignKind, DesignSet};
use crate::error::{Error, Result};
use crate::tensor::CpFactors;

const JITTER_RETRIES: usize = 3;
const JITTER_SCALE: f64 = 1e-10;

/// A Gaussian over a subset of the coordinates of `vec(U^(k))`.
struct Block {
    /// Offsets into the row-major `d x M_k` factor.
    positions: Vec<usize>,
    chol: Cholesky<f64, Dyn>,
    mean: DVector<f64>,
}

/// Cholesky of a symmetric positive definite matrix, adding a small
/// diagonal jitter on failure.
fn cholesky_with_jitter(mut precision: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let dim = precision.nrows();
    let jitter = JITTER_SCALE * precision.trace() / dim as f64;
    for attempt in 0..=JITTER_RETRIES {
        if attempt > 0 {
            for i in 0..dim {
                precision[(i, i)] += jitter;
            }
        }
        if let Some(chol) = Cholesky::new(precision.clone()) {
            return Ok(chol);
        }
    }
    Err(Error::Numerical(format!(
        "conditional precision of dimension {dim} is not positive definite"
    )))
}

fn finish_block(positions: Vec<usize>, precision: DMatrix<f64>, rhs: DVector<f64>) -> Result<Block> {
    let chol = cholesky_with_jitter(precision)?;
    let mean = chol.solve(&rhs);
    Ok(Block {
        positions,
        chol,
        mean,
    })
}

/// Coefficients `prod_{k' != k} U^(k')[r, j_k']` of one cell, for every `r`.
fn cell_coefficients(factors: &CpFactors, k: usize, index: &[usize], weight: f64, out: &mut [f64]) {
    for (r, slot) in out.iter_mut().enumerate() {
        let mut prod = weight;
        for (kk, &j) in index.iter().enumerate() {
            if kk != k {
                prod *= factors.entry(kk, r, j);
            }
        }
        *slot = prod;
    }
}

/// True when every measurement touches a single mode-`k` index, which makes
/// the conditional precision block-diagonal across the columns of `U^(k)`.
fn columns_decouple(design: &DesignSet, k: usize) -> bool {
    design.kind() == DesignKind::ElementIndicator
        || design
            .observations()
            .iter()
            .all(|o| o.x.entries().is_empty() || o.x.shared_mode_index(k).is_some())
}

fn conditional_blocks(
    factors: &CpFactors,
    k: usize,
    design: &DesignSet,
    hp: &Hyperparams,
) -> Result<Vec<Block>> {
    let shape = factors.shape();
    if k >= shape.order() {
        return Err(Error::InvalidArgument(format!(
            "mode {k} out of range for order {}",
            shape.order()
        )));
    }
    if design.shape() != shape {
        return Err(Error::Structural(format!(
            "design shape {} does not match factor shape {shape}",
            design.shape()
        )));
    }
    let d = factors.rank();
    let m = shape.dims()[k];
    let tau = hp.prior_precision(d);
    let inv_var = 1.0 / (hp.sigma * hp.sigma);
    let mut coef = vec![0.0; d];

    if columns_decouple(design, k) {
        let mut precisions = vec![DMatrix::<f64>::identity(d, d) * tau; m];
        let mut rhs = vec![DVector::<f64>::zeros(d); m];
        let mut b = vec![0.0; d];
        for obs in design.observations() {
            let Some(j) = obs.x.shared_mode_index(k) else {
                continue;
            };
            b.iter_mut().for_each(|v| *v = 0.0);
            for e in obs.x.entries() {
                cell_coefficients(factors, k, &e.index, e.weight, &mut coef);
                b.iter_mut().zip(&coef).for_each(|(acc, c)| *acc += c);
            }
            let p = &mut precisions[j];
            for r in 0..d {
                let br = b[r] * inv_var;
                for s in 0..d {
                    p[(r, s)] += br * b[s];
                }
                rhs[j][r] += br * obs.y;
            }
        }
        precisions
            .into_iter()
            .zip(rhs)
            .enumerate()
            .map(|(j, (p, h))| finish_block((0..d).map(|r| r * m + j).collect(), p, h))
            .collect()
    } else {
        let dim = d * m;
        let mut precision = DMatrix::<f64>::identity(dim, dim) * tau;
        let mut rhs = DVector::<f64>::zeros(dim);
        let mut b = vec![0.0; dim];
        let mut touched: Vec<usize> = Vec::new();
        for obs in design.observations() {
            for &pos in &touched {
                b[pos] = 0.0;
            }
            touched.clear();
            for e in obs.x.entries() {
                let j = e.index[k];
                cell_coefficients(factors, k, &e.index, e.weight, &mut coef);
                for (r, c) in coef.iter().enumerate() {
                    let pos = r * m + j;
                    if b[pos] == 0.0 && !touched.contains(&pos) {
                        touched.push(pos);
                    }
                    b[pos] += c;
                }
            }
            for &p in &touched {
                let bp = b[p] * inv_var;
                for &q in &touched {
                    precision[(p, q)] += bp * b[q];
                }
                rhs[p] += bp * obs.y;
            }
        }
        Ok(vec![finish_block((0..dim).collect(), precision, rhs)?])
    }
}

/// Mean and covariance of the full conditional of `vec(U^(k))`, where
/// coordinate `r * M_k + j` is `U^(k)[r, j]`.
#[derive(Clone, Debug)]
pub struct ModeConditional {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// The conditional moments used by [`gibbs_update_mode`].
pub fn conditional_moments(
    factors: &CpFactors,
    k: usize,
    design: &DesignSet,
    hp: &Hyperparams,
) -> Result<ModeConditional> {
    let dim = factors.rank() * factors.shape().dims().get(k).copied().unwrap_or(0);
    let blocks = conditional_blocks(factors, k, design, hp)?;
    let mut mean = DVector::zeros(dim);
    let mut covariance = DMatrix::zeros(dim, dim);
    for block in blocks {
        let cov = block.chol.inverse();
        for (a, &p) in block.positions.iter().enumerate() {
            mean[p] = block.mean[a];
            for (b, &q) in block.positions.iter().enumerate() {
                covariance[(p, q)] = cov[(a, b)];
            }
        }
    }
    Ok(ModeConditional { mean, covariance })
}

/// Replaces `U^(k)` with an exact draw from its full conditional.
pub fn gibbs_update_mode(
    state: &mut SamplerState,
    k: usize,
    design: &DesignSet,
    hp: &Hyperparams,
) -> Result<()> {
    let blocks = conditional_blocks(&state.factors, k, design, hp)?;
    let mut values = state.factors.factor(k).to_vec();
    for block in blocks {
        let z = DVector::from_fn(block.positions.len(), |_, _| {
            state.rng.sample::<f64, _>(StandardNormal)
        });
        // x = mean + L^{-T} z has covariance (L L^T)^{-1}
        let noise = block
            .chol
            .l_dirty()
            .tr_solve_lower_triangular(&z)
            .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
        for (a, &p) in block.positions.iter().enumerate() {
            values[p] = block.mean[a] + noise[a];
        }
    }
    state.factors.set_factor(k, values);
    Ok(())
}
