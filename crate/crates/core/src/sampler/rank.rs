//! Birth/death Metropolis-Hastings moves on the rank.
//!
//! Birth `d -> d + 1`: every existing coordinate is multiplied by
//! `c = sqrt(d / (d + 1))` and a new component, drawn from the rank-`(d + 1)`
//! prior, is inserted at a uniformly chosen position. Death `d -> d - 1`
//! removes a uniformly chosen component and rescales the rest by
//! `sqrt(d / (d - 1))`; it is the exact inverse of a birth. Birth and death
//! are each proposed with probability 1/2; proposals leaving `[1, d_max]`
//! are rejected outright.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{log_likelihood, log_prior, Hyperparams, SamplerState};
use crate::designs::DesignSet;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RankMove {
    Birth { accepted: bool },
    Death { accepted: bool },
    /// Birth at `d_max` or death at rank 1.
    Blocked,
}

impl RankMove {
    pub fn accepted(self) -> bool {
        matches!(
            self,
            RankMove::Birth { accepted: true } | RankMove::Death { accepted: true }
        )
    }
}

/// Log-density of `N(0, var)` summed over `values`.
fn gaussian_log_density<'a>(values: impl Iterator<Item = &'a f64>, var: f64) -> f64 {
    values
        .map(|v| -0.5 * (2.0 * PI * var).ln() - v * v / (2.0 * var))
        .sum()
}

pub fn rank_move(state: &mut SamplerState, design: &DesignSet, hp: &Hyperparams) -> Result<RankMove> {
    let d = state.factors.rank();
    if d == 0 || d > hp.d_max {
        return Err(Error::InvalidArgument(format!(
            "rank {d} outside [1, {}]",
            hp.d_max
        )));
    }
    let birth = state.rng.random_bool(0.5);
    if (birth && d == hp.d_max) || (!birth && d == 1) {
        return Ok(RankMove::Blocked);
    }
    let dim_sum = state.factors.shape().dim_sum() as f64;
    let ll = log_likelihood(&state.factors, design, hp)?;
    let lp = log_prior(&state.factors, hp);

    let mut proposal = state.factors.clone();
    let log_ratio = if birth {
        let new_rank = d + 1;
        let var = hp.sigma_p * hp.sigma_p / new_rank as f64;
        let normal = Normal::new(0.0, var.sqrt()).map_err(|e| Error::Config(e.to_string()))?;
        let rows: Vec<Vec<f64>> = proposal
            .shape()
            .dims()
            .iter()
            .map(|&m| (0..m).map(|_| normal.sample(&mut state.rng)).collect())
            .collect();
        let at = state.rng.random_range(0..=d);
        let c = (d as f64 / new_rank as f64).sqrt();
        proposal.scale_all(c);
        proposal.insert_component(at, &rows)?;
        let log_q = gaussian_log_density(rows.iter().flatten(), var);
        let log_jacobian = d as f64 * dim_sum * c.ln();
        log_likelihood(&proposal, design, hp)? - ll + log_prior(&proposal, hp) - lp - log_q
            + log_jacobian
    } else {
        let var = hp.sigma_p * hp.sigma_p / d as f64;
        let at = state.rng.random_range(0..d);
        let removed = proposal.remove_component(at)?;
        let c = (d as f64 / (d - 1) as f64).sqrt();
        proposal.scale_all(c);
        let log_q = gaussian_log_density(removed.iter().flatten(), var);
        let log_jacobian = (d - 1) as f64 * dim_sum * c.ln();
        log_likelihood(&proposal, design, hp)? - ll + log_prior(&proposal, hp) - lp + log_q
            + log_jacobian
    };

    let u: f64 = state.rng.random();
    let accepted = u.ln() < log_ratio;
    if accepted {
        state.factors = proposal;
    }
    Ok(if birth {
        RankMove::Birth { accepted }
    } else {
        RankMove::Death { accepted }
    })
}
