//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use bayestensor::{CpFactors, DenseTensor, DesignSet, Hyperparams, Observation, Shape, SparseMeasurement};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Every multi-index of `dims` in last-index-fastest order.
pub fn all_indices(dims: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &m in dims {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<usize>| {
                (0..m).map(move |j| {
                    let mut v = prefix.clone();
                    v.push(j);
                    v
                })
            })
            .collect();
    }
    out
}

pub fn brute_element(f: &CpFactors, idx: &[usize]) -> f64 {
    (0..f.rank())
        .map(|r| idx.iter().enumerate().map(|(k, &j)| f.entry(k, r, j)).product::<f64>())
        .sum()
}

pub fn brute_compose(f: &CpFactors) -> Vec<f64> {
    all_indices(f.shape().dims()).iter().map(|idx| brute_element(f, idx)).collect()
}

/// Dense copy of a sparse measurement, indexed by `all_indices` order.
pub fn densify(x: &SparseMeasurement) -> Vec<f64> {
    all_indices(x.shape().dims())
        .iter()
        .map(|idx| x.entries().iter().filter(|e| &e.index == idx).map(|e| e.weight).sum())
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

pub fn random_shape<R: Rng>(rng: &mut R, orders: &[usize], max_dim: usize, max_len: usize) -> Shape {
    loop {
        let k = orders[rng.random_range(0..orders.len())];
        let dims: Vec<usize> = (0..k).map(|_| rng.random_range(1..=max_dim)).collect();
        if dims.iter().product::<usize>() <= max_len {
            return Shape::new(dims).unwrap();
        }
    }
}

pub fn random_factors<R: Rng>(rng: &mut R, shape: &Shape, rank: usize) -> CpFactors {
    CpFactors::from_fn(shape.clone(), rank, |_, _, _| rng.random_range(-1.5..1.5)).unwrap()
}

pub fn random_index<R: Rng>(rng: &mut R, shape: &Shape) -> Vec<usize> {
    shape.dims().iter().map(|&m| rng.random_range(0..m)).collect()
}

/// Indicator or generic measurement with `||X||_1 <= 1`.
pub fn random_measurement<R: Rng>(rng: &mut R, shape: &Shape) -> SparseMeasurement {
    if rng.random_bool(0.5) {
        return SparseMeasurement::indicator(shape.clone(), random_index(rng, shape)).unwrap();
    }
    let m = rng.random_range(1..=4);
    let raw: Vec<(Vec<usize>, f64)> = (0..m)
        .map(|_| (random_index(rng, shape), rng.random_range(-1.0..1.0)))
        .collect();
    let l1: f64 = raw.iter().map(|(_, w)| w.abs()).sum();
    let scale = rng.random_range(0.2..1.0) / l1.max(1e-3);
    SparseMeasurement::new(shape.clone(), raw.into_iter().map(|(i, w)| (i, w * scale)).collect()).unwrap()
}

pub fn random_design<R: Rng>(rng: &mut R, shape: &Shape, n: usize) -> DesignSet {
    let obs = (0..n)
        .map(|_| Observation {
            x: random_measurement(rng, shape),
            y: rng.random_range(-2.0..2.0),
        })
        .collect();
    DesignSet::new(shape.clone(), obs).unwrap()
}

/// Posterior of `vec(U^(k))` (coordinate `r * M_k + j`) as an ordinary
/// Bayesian linear regression: every design row is obtained by replacing
/// `U^(k)` with a unit matrix and evaluating `<X_i, A>` over all cells.
pub fn blr_oracle(f: &CpFactors, k: usize, design: &DesignSet, hp: &Hyperparams) -> (DVector<f64>, DMatrix<f64>) {
    let m = f.shape().dims()[k];
    let d = f.rank();
    let dim = d * m;
    let rows: Vec<Vec<f64>> = design
        .observations()
        .iter()
        .map(|obs| {
            let x = densify(&obs.x);
            (0..dim)
                .map(|pos| {
                    let mut factors = f.factors().to_vec();
                    factors[k] = vec![0.0; dim];
                    factors[k][pos] = 1.0;
                    let unit = CpFactors::new(f.shape().clone(), d, factors).unwrap();
                    dot(&x, &brute_compose(&unit))
                })
                .collect()
        })
        .collect();
    let s2 = hp.sigma * hp.sigma;
    let mut precision = DMatrix::<f64>::identity(dim, dim) * (d as f64 / (hp.sigma_p * hp.sigma_p));
    let mut rhs = DVector::<f64>::zeros(dim);
    for (row, obs) in rows.iter().zip(design.observations()) {
        let b = DVector::from_vec(row.clone());
        precision += &b * b.transpose() / s2;
        rhs += b * (obs.y / s2);
    }
    let cov = precision.try_inverse().expect("oracle precision is positive definite");
    (&cov * rhs, cov)
}

pub fn dense(shape: &Shape, values: Vec<f64>) -> DenseTensor {
    DenseTensor::new(shape.clone(), values).unwrap()
}
