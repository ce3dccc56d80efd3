use std::f64::consts::PI;

use super::Hyperparams;
use crate::designs::DesignSet;
use crate::error::Result;
use crate::tensor::CpFactors;

/// Gaussian log-likelihood of the data under `A = [[U]]`, normalizer included.
pub fn log_likelihood(factors: &CpFactors, design: &DesignSet, hp: &Hyperparams) -> Result<f64> {
    let mut rss = 0.0;
    for obs in design.observations() {
        let r = obs.y - obs.x.dot_cp(factors)?;
        rss += r * r;
    }
    let var = hp.sigma * hp.sigma;
    Ok(-rss / (2.0 * var) - 0.5 * design.len() as f64 * (2.0 * PI * var).ln())
}

/// Log prior density of a rank-`d` decomposition.
///
/// Sum of the normalized `N(0, sigma_p^2 / d)` log-densities of all
/// `d * sum_k M_k` coordinates and the unnormalized rank term
/// `d * sum_k M_k * log(xi)`.
pub fn log_prior(factors: &CpFactors, hp: &Hyperparams) -> f64 {
    let coords = factors.n_coordinates() as f64;
    if coords == 0.0 {
        return 0.0;
    }
    let precision = hp.prior_precision(factors.rank());
    0.5 * coords * (precision / (2.0 * PI)).ln() - 0.5 * precision * factors.frob_sq_sum()
        + coords * hp.xi.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{Observation, SparseMeasurement};
    use crate::tensor::Shape;

    fn hp(sigma: f64) -> Hyperparams {
        Hyperparams {
            sigma,
            sigma_p: 1.0,
            xi: 0.5,
            d_max: 4,
            radius: None,
        }
    }

    fn design_for(f: &CpFactors, cells: &[Vec<usize>], offsets: &[f64]) -> DesignSet {
        let obs = cells
            .iter()
            .zip(offsets)
            .map(|(c, off)| Observation {
                x: SparseMeasurement::indicator(f.shape().clone(), c.clone()).unwrap(),
                y: f.element(c).unwrap() + off,
            })
            .collect();
        DesignSet::new(f.shape().clone(), obs).unwrap()
    }

    #[test]
    fn perfect_fit_likelihood() {
        let f = CpFactors::from_fn(Shape::new(vec![2, 2]).unwrap(), 1, |k, _, j| (k + j) as f64).unwrap();
        let cells = vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]];
        let d = design_for(&f, &cells, &[0.0; 4]);
        let ll = log_likelihood(&f, &d, &hp(1.0)).unwrap();
        assert!((ll + 2.0 * (2.0 * PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn single_residual_likelihood() {
        let f = CpFactors::zeros(Shape::new(vec![2, 2]).unwrap(), 1);
        let d = design_for(&f, &[vec![1, 0]], &[2.0]);
        let ll = log_likelihood(&f, &d, &hp(1.0)).unwrap();
        assert!((ll - (-2.0 - 0.5 * (2.0 * PI).ln())).abs() < 1e-12);
    }

    #[test]
    fn zero_factors_prior() {
        let shape = Shape::new(vec![1, 1]).unwrap();
        let h = hp(1.0);
        let one = CpFactors::zeros(shape.clone(), 1);
        let expected = 2.0 * (0.5 * (1.0 / (2.0 * PI)).ln()) + 2.0 * h.xi.ln();
        assert!((log_prior(&one, &h) - expected).abs() < 1e-12);
        // rank 2: four coordinates at precision 2, rank term doubles
        let two = CpFactors::zeros(shape, 2);
        let expected2 = 4.0 * 0.5 * (2.0 / (2.0 * PI)).ln() + 4.0 * h.xi.ln();
        assert!((log_prior(&two, &h) - expected2).abs() < 1e-12);
    }

    #[test]
    fn prior_matches_coordinate_sum() {
        let shape = Shape::new(vec![3, 2, 2]).unwrap();
        let f = CpFactors::from_fn(shape, 3, |k, r, j| 0.4 * k as f64 - 0.3 * r as f64 + 0.2 * j as f64)
            .unwrap();
        let h = Hyperparams { sigma_p: 1.7, xi: 0.3, ..hp(1.0) };
        let var = h.sigma_p * h.sigma_p / 3.0;
        let oracle: f64 = f
            .factors()
            .iter()
            .flatten()
            .map(|u| -0.5 * (2.0 * PI * var).ln() - u * u / (2.0 * var) + h.xi.ln())
            .sum();
        assert!((log_prior(&f, &h) - oracle).abs() < 1e-10);
    }
}
