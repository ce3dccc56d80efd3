//! Posterior simulation for the Bayesian CP model.
//!
//! The prior places `N(0, sigma_p^2 / d)` on every factor coordinate of a
//! rank-`d` decomposition and `xi^(d * (M_1 + ... + M_K))` on the rank.
//! Factor matrices are updated by exact Gibbs draws from their Gaussian
//! full conditionals; the rank moves by birth/death Metropolis-Hastings
//! steps.

mod chain;
mod checkpoint;
mod density;
mod gibbs;
mod rank;

pub use chain::{merge_summaries, passes_rejection, run_chain, run_chains, Chain, PosteriorSummary};
pub use checkpoint::{rng_from_token, rng_token, Checkpoint};
pub use density::{log_likelihood, log_prior};
pub use gibbs::{conditional_moments, gibbs_update_mode, ModeConditional};
pub use rank::{rank_move, RankMove};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{CpFactors, Shape};

/// Model hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparams {
    /// Noise standard deviation.
    pub sigma: f64,
    /// Prior scale; coordinates of a rank-`d` draw have variance `sigma_p^2 / d`.
    pub sigma_p: f64,
    /// Rank prior base, `0 < xi < 1`.
    pub xi: f64,
    pub d_max: usize,
    /// Rejection radius `R`, if one is known.
    pub radius: Option<f64>,
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.sigma) {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !positive(self.sigma_p) {
            return Err(Error::Config(format!("sigma_p must be positive, got {}", self.sigma_p)));
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(Error::Config(format!("xi must lie in (0, 1), got {}", self.xi)));
        }
        if self.d_max == 0 {
            return Err(Error::Config("d_max must be at least 1".into()));
        }
        if let Some(r) = self.radius {
            if !positive(r) {
                return Err(Error::Config(format!("radius must be positive, got {r}")));
            }
        }
        Ok(())
    }

    /// Prior precision of each factor coordinate at rank `d`.
    pub fn prior_precision(&self, rank: usize) -> f64 {
        rank as f64 / (self.sigma_p * self.sigma_p)
    }
}

/// Which retained draws enter the posterior mean.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Rejection {
    #[default]
    None,
    /// Keep draws with `||A||_inf <= R`.
    InfinityNorm(f64),
    /// Keep draws whose factor columns all have Euclidean norm `<= R`.
    MaxNorm(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainConfig {
    pub burn_in: usize,
    /// Number of post-burn-in draws kept (before rejection).
    pub n_samples: usize,
    pub thin: usize,
    /// Probability of attempting a rank move after each Gibbs sweep.
    pub rank_move_prob: f64,
    pub rejection: Rejection,
    /// Cells at which the mean is tracked when the tensor is too large to
    /// accumulate densely.
    pub probes: Vec<Vec<usize>>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self::with_samples(1000)
    }
}

impl ChainConfig {
    /// Defaults with `burn_in = n_samples`.
    pub fn with_samples(n_samples: usize) -> Self {
        Self {
            burn_in: n_samples,
            n_samples,
            thin: 1,
            rank_move_prob: 0.2,
            rejection: Rejection::None,
            probes: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be at least 1".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.rank_move_prob) {
            return Err(Error::Config(format!(
                "rank_move_prob must lie in [0, 1], got {}",
                self.rank_move_prob
            )));
        }
        match self.rejection {
            Rejection::InfinityNorm(r) | Rejection::MaxNorm(r) if !(r > 0.0) => {
                Err(Error::Config(format!("rejection radius must be positive, got {r}")))
            }
            _ => Ok(()),
        }
    }
}

/// Current position of a chain.
#[derive(Clone, Debug)]
pub struct SamplerState {
    pub factors: CpFactors,
    pub rng: ChaCha20Rng,
    pub sweep_count: u64,
}

impl SamplerState {
    /// Starts at rank `min(2, d_max)` with factors drawn from the prior.
    pub fn from_prior(shape: Shape, hp: &Hyperparams, mut rng: ChaCha20Rng) -> Result<Self> {
        hp.validate()?;
        let rank = hp.d_max.min(2);
        let normal = Normal::new(0.0, (1.0 / hp.prior_precision(rank)).sqrt())
            .map_err(|e| Error::Config(e.to_string()))?;
        let factors = CpFactors::from_fn(shape, rank, |_, _, _| normal.sample(&mut rng))?;
        Ok(Self {
            factors,
            rng,
            sweep_count: 0,
        })
    }

    pub fn seeded(shape: Shape, hp: &Hyperparams, seed: u64) -> Result<Self> {
        Self::from_prior(shape, hp, ChaCha20Rng::seed_from_u64(seed))
    }
}
