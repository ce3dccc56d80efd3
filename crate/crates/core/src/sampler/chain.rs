use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;
use rayon::prelude::*;

use super::{
    gibbs_update_mode, rank_move, Checkpoint, ChainConfig, Hyperparams, Rejection, SamplerState,
};
use crate::designs::DesignSet;
use crate::error::{Error, Result};
use crate::norms::{streamed_infinity_norm, PAIRWISE_THRESHOLD};
use crate::tensor::{CpFactors, DenseTensor};

/// Above this many cells the posterior mean is only tracked at probe cells.
pub const DENSE_MEAN_LIMIT: usize = 10_000_000;

/// Whether a draw survives the configured rejection filter.
pub fn passes_rejection(factors: &CpFactors, rejection: &Rejection) -> bool {
    match *rejection {
        Rejection::None => true,
        Rejection::InfinityNorm(r) => {
            if factors.shape().len() > PAIRWISE_THRESHOLD {
                streamed_infinity_norm(factors) <= r
            } else {
                max_abs(factors.compose().values()) <= r
            }
        }
        Rejection::MaxNorm(r) => factors.max2_upper_bound() <= r,
    }
}

fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Monte Carlo summary of a chain (or of several merged chains).
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSummary {
    /// Mean of the accepted draws; `None` when only probe cells were tracked.
    pub mean: Option<DenseTensor>,
    pub probes: Vec<Vec<usize>>,
    pub probe_means: Vec<f64>,
    /// Post-burn-in draws considered for the mean.
    pub n_kept: usize,
    /// Kept draws that passed the rejection filter.
    pub n_accepted: usize,
    pub n_proposed_rank_moves: u64,
    pub n_accepted_rank_moves: u64,
    /// Rank of every accepted draw.
    pub rank_histogram: BTreeMap<usize, u64>,
    pub rejection_rate: f64,
}

impl PosteriorSummary {
    /// Most frequent rank among accepted draws; ties go to the smaller rank.
    pub fn rank_mode(&self) -> Option<usize> {
        self.rank_histogram
            .iter()
            .fold(None, |best: Option<(usize, u64)>, (&r, &c)| match best {
                Some((_, bc)) if bc >= c => best,
                _ => Some((r, c)),
            })
            .map(|(r, _)| r)
    }

    /// `rank,count` rows.
    pub fn rank_csv(&self) -> String {
        let mut out = String::from("rank,count\n");
        for (r, c) in &self.rank_histogram {
            let _ = writeln!(out, "{r},{c}");
        }
        out
    }

    /// `key,value` rows of the scalar diagnostics.
    pub fn stats_csv(&self) -> String {
        let mut out = String::from("key,value\n");
        let _ = writeln!(out, "n_kept,{}", self.n_kept);
        let _ = writeln!(out, "n_accepted,{}", self.n_accepted);
        let _ = writeln!(out, "rejection_rate,{:?}", self.rejection_rate);
        let _ = writeln!(out, "n_proposed_rank_moves,{}", self.n_proposed_rank_moves);
        let _ = writeln!(out, "n_accepted_rank_moves,{}", self.n_accepted_rank_moves);
        if let Some(mode) = self.rank_mode() {
            let _ = writeln!(out, "rank_mode,{mode}");
        }
        for (cell, v) in self.probes.iter().zip(&self.probe_means) {
            let cell: Vec<String> = cell.iter().map(|j| j.to_string()).collect();
            let _ = writeln!(out, "probe_{},{v:?}", cell.join("_"));
        }
        out
    }
}

enum MeanAccumulator {
    Dense(DenseTensor),
    Probes(Vec<f64>),
}

/// One Markov chain over `(d, U)`.
pub struct Chain<'a> {
    design: &'a DesignSet,
    hp: Hyperparams,
    cfg: ChainConfig,
    state: SamplerState,
    n_proposed_rank_moves: u64,
    n_accepted_rank_moves: u64,
}

impl<'a> Chain<'a> {
    /// A chain started from the prior. The design may be empty, in which case
    /// the chain samples the prior itself.
    pub fn new(design: &'a DesignSet, hp: Hyperparams, cfg: ChainConfig, rng: ChaCha20Rng) -> Result<Self> {
        let state = SamplerState::from_prior(design.shape().clone(), &hp, rng)?;
        Self::from_state(design, hp, cfg, state)
    }

    pub fn from_state(
        design: &'a DesignSet,
        hp: Hyperparams,
        cfg: ChainConfig,
        state: SamplerState,
    ) -> Result<Self> {
        hp.validate()?;
        cfg.validate()?;
        if state.factors.shape() != design.shape() {
            return Err(Error::Structural(format!(
                "state shape {} does not match design shape {}",
                state.factors.shape(),
                design.shape()
            )));
        }
        let rank = state.factors.rank();
        if rank == 0 || rank > hp.d_max {
            return Err(Error::Config(format!("state rank {rank} outside [1, {}]", hp.d_max)));
        }
        Ok(Self {
            design,
            hp,
            cfg,
            state,
            n_proposed_rank_moves: 0,
            n_accepted_rank_moves: 0,
        })
    }

    pub fn resume(design: &'a DesignSet, cfg: ChainConfig, checkpoint: &Checkpoint) -> Result<Self> {
        let state = checkpoint.to_state()?;
        Self::from_state(design, checkpoint.hp.clone(), cfg, state)
    }

    pub fn state(&self) -> &SamplerState {
        &self.state
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_state(&self.hp, &self.state)
    }

    /// Gibbs updates of every mode, then a rank move with probability
    /// `rank_move_prob`.
    pub fn step(&mut self) -> Result<()> {
        for k in 0..self.state.factors.order() {
            gibbs_update_mode(&mut self.state, k, self.design, &self.hp)?;
        }
        if self.cfg.rank_move_prob > 0.0 && self.state.rng.random_bool(self.cfg.rank_move_prob) {
            self.n_proposed_rank_moves += 1;
            if rank_move(&mut self.state, self.design, &self.hp)?.accepted() {
                self.n_accepted_rank_moves += 1;
            }
        }
        self.state.sweep_count += 1;
        Ok(())
    }

    /// Runs burn-in plus `n_samples * thin` steps and averages the kept
    /// draws that pass the rejection filter. `observe` sees every accepted
    /// draw.
    pub fn run_observed(&mut self, mut observe: impl FnMut(&CpFactors)) -> Result<PosteriorSummary> {
        let shape = self.design.shape().clone();
        for probe in &self.cfg.probes {
            shape.check_index(probe)?;
        }
        let mut acc = if shape.len() <= DENSE_MEAN_LIMIT {
            MeanAccumulator::Dense(DenseTensor::zeros(shape.clone()))
        } else if !self.cfg.probes.is_empty() {
            MeanAccumulator::Probes(vec![0.0; self.cfg.probes.len()])
        } else {
            return Err(Error::Config(format!(
                "tensor with {} cells is too large for a dense mean; supply probe cells",
                shape.len()
            )));
        };

        for _ in 0..self.cfg.burn_in {
            self.step()?;
        }
        let mut n_kept = 0usize;
        let mut n_accepted = 0usize;
        let mut rank_histogram = BTreeMap::new();
        for _ in 0..self.cfg.n_samples {
            for _ in 0..self.cfg.thin {
                self.step()?;
            }
            n_kept += 1;
            let factors = &self.state.factors;
            let composed = match (&acc, self.cfg.rejection) {
                (MeanAccumulator::Dense(_), Rejection::InfinityNorm(r)) => {
                    let dense = factors.compose();
                    if max_abs(dense.values()) > r {
                        continue;
                    }
                    Some(dense)
                }
                (MeanAccumulator::Dense(_), rejection) => {
                    if !passes_rejection(factors, &rejection) {
                        continue;
                    }
                    Some(factors.compose())
                }
                (MeanAccumulator::Probes(_), rejection) => {
                    if !passes_rejection(factors, &rejection) {
                        continue;
                    }
                    None
                }
            };
            n_accepted += 1;
            *rank_histogram.entry(factors.rank()).or_insert(0) += 1;
            let weight = 1.0 / n_accepted as f64;
            match (&mut acc, composed) {
                (MeanAccumulator::Dense(mean), Some(draw)) => {
                    for (m, x) in mean.values_mut().iter_mut().zip(draw.values()) {
                        *m += (x - *m) * weight;
                    }
                }
                (MeanAccumulator::Probes(means), _) => {
                    for (m, cell) in means.iter_mut().zip(&self.cfg.probes) {
                        let x = factors.element_unchecked(cell);
                        *m += (x - *m) * weight;
                    }
                }
                (MeanAccumulator::Dense(_), None) => unreachable!("dense accumulation composes every draw"),
            }
            observe(factors);
        }

        if n_accepted == 0 {
            return Err(Error::EstimationFailure(format!(
                "none of {n_kept} kept draws passed {:?}; increase the radius or the sample budget",
                self.cfg.rejection
            )));
        }
        let (mean, probe_means) = match acc {
            MeanAccumulator::Dense(mean) => {
                let probe_means = self
                    .cfg
                    .probes
                    .iter()
                    .map(|p| mean.values()[shape.flat_index_unchecked(p)])
                    .collect();
                (Some(mean), probe_means)
            }
            MeanAccumulator::Probes(values) => (None, values),
        };
        Ok(PosteriorSummary {
            mean,
            probes: self.cfg.probes.clone(),
            probe_means,
            n_kept,
            n_accepted,
            n_proposed_rank_moves: self.n_proposed_rank_moves,
            n_accepted_rank_moves: self.n_accepted_rank_moves,
            rank_histogram,
            rejection_rate: 1.0 - n_accepted as f64 / n_kept as f64,
        })
    }

    pub fn run(&mut self) -> Result<PosteriorSummary> {
        self.run_observed(|_| {})
    }
}

/// Monte Carlo estimate of the (conditional) posterior mean from one chain.
pub fn run_chain(
    design: &DesignSet,
    hp: &Hyperparams,
    cfg: &ChainConfig,
    rng: ChaCha20Rng,
) -> Result<PosteriorSummary> {
    if design.is_empty() {
        return Err(Error::InvalidArgument("cannot fit an empty design".into()));
    }
    Chain::new(design, hp.clone(), cfg.clone(), rng)?.run()
}

/// Runs one chain per seed in parallel and merges the results.
pub fn run_chains(
    design: &DesignSet,
    hp: &Hyperparams,
    cfg: &ChainConfig,
    seeds: &[u64],
) -> Result<PosteriorSummary> {
    let summaries: Vec<Result<PosteriorSummary>> = seeds
        .par_iter()
        .map(|&seed| run_chain(design, hp, cfg, ChaCha20Rng::seed_from_u64(seed)))
        .collect();
    let ok: Vec<PosteriorSummary> = summaries
        .into_iter()
        .filter_map(|s| match s {
            Err(Error::EstimationFailure(_)) => None,
            other => Some(other),
        })
        .collect::<Result<_>>()?;
    merge_summaries(&ok)
}

/// Combines chains: means weighted by accepted counts, counts summed.
pub fn merge_summaries(summaries: &[PosteriorSummary]) -> Result<PosteriorSummary> {
    let total: usize = summaries.iter().map(|s| s.n_accepted).sum();
    let n_kept: usize = summaries.iter().map(|s| s.n_kept).sum();
    if total == 0 {
        return Err(Error::EstimationFailure(
            "no accepted draws in any chain; increase the radius or the sample budget".into(),
        ));
    }
    let first = &summaries[0];
    if summaries.iter().any(|s| s.probes != first.probes) {
        return Err(Error::Structural("chains tracked different probe cells".into()));
    }
    let mut mean: Option<DenseTensor> = None;
    let mut probe_means = vec![0.0; first.probes.len()];
    let mut rank_histogram = BTreeMap::new();
    for s in summaries.iter().filter(|s| s.n_accepted > 0) {
        let w = s.n_accepted as f64 / total as f64;
        match (&mut mean, &s.mean) {
            (None, Some(m)) => mean = Some(m.scaled(w)),
            (Some(acc), Some(m)) => {
                acc.ensure_same_shape(m)?;
                for (a, v) in acc.values_mut().iter_mut().zip(m.values()) {
                    *a += w * v;
                }
            }
            _ => {}
        }
        for (a, v) in probe_means.iter_mut().zip(&s.probe_means) {
            *a += w * v;
        }
        for (&r, &c) in &s.rank_histogram {
            *rank_histogram.entry(r).or_insert(0) += c;
        }
    }
    Ok(PosteriorSummary {
        mean,
        probes: first.probes.clone(),
        probe_means,
        n_kept,
        n_accepted: total,
        n_proposed_rank_moves: summaries.iter().map(|s| s.n_proposed_rank_moves).sum(),
        n_accepted_rank_moves: summaries.iter().map(|s| s.n_accepted_rank_moves).sum(),
        rank_histogram,
        rejection_rate: 1.0 - total as f64 / n_kept as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{generate_responses, make_completion_design, NoiseSpec};
    use crate::norms::{empirical_sq_norm, norm, NormKind};
    use crate::tensor::Shape;

    fn hp() -> Hyperparams {
        Hyperparams {
            sigma: 0.5,
            sigma_p: 2.0,
            xi: 0.5,
            d_max: 3,
            radius: None,
        }
    }

    fn small_problem(seed: u64) -> (CpFactors, DesignSet) {
        let shape = Shape::new(vec![3, 3, 3]).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let truth = CpFactors::from_fn(shape.clone(), 1, |_, _, _| rng.random_range(-1.0..1.0)).unwrap();
        let xs = make_completion_design(&shape, 30, &mut rng).unwrap();
        let design = generate_responses(&truth, xs, NoiseSpec::new(0.5).unwrap(), &mut rng).unwrap();
        (truth, design)
    }

    fn cfg() -> ChainConfig {
        ChainConfig {
            burn_in: 50,
            n_samples: 100,
            ..ChainConfig::default()
        }
    }

    #[test]
    fn rejection_filters() {
        let shape = Shape::new(vec![2, 2, 2]).unwrap();
        let ones = CpFactors::from_fn(shape, 1, |_, _, _| 1.0).unwrap();
        assert!(passes_rejection(&ones, &Rejection::None));
        assert!(passes_rejection(&ones, &Rejection::InfinityNorm(2.0)));
        assert!(!passes_rejection(&ones, &Rejection::InfinityNorm(0.5)));
        assert!(passes_rejection(&ones, &Rejection::MaxNorm(1.0)));
        assert!(!passes_rejection(&ones, &Rejection::MaxNorm(0.99)));
    }

    #[test]
    fn same_seed_same_summary() {
        let (_, design) = small_problem(1);
        let a = run_chain(&design, &hp(), &cfg(), ChaCha20Rng::seed_from_u64(5)).unwrap();
        let b = run_chain(&design, &hp(), &cfg(), ChaCha20Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_kept, 100);
        assert_eq!(a.rank_histogram.values().sum::<u64>(), a.n_accepted as u64);
    }

    #[test]
    fn infinity_rejection_bounds_every_draw_and_the_mean() {
        let (_, design) = small_problem(2);
        let r = 0.8;
        let c = ChainConfig {
            rejection: Rejection::InfinityNorm(r),
            ..cfg()
        };
        let mut retained = Vec::new();
        let mut chain = Chain::new(&design, hp(), c, ChaCha20Rng::seed_from_u64(3)).unwrap();
        let summary = chain.run_observed(|f| retained.push(f.clone())).unwrap();
        assert_eq!(retained.len(), summary.n_accepted);
        assert!(retained.iter().all(|f| passes_rejection(f, &Rejection::InfinityNorm(r))));
        let mean = summary.mean.unwrap();
        assert!(norm(&mean, NormKind::Infinity).unwrap() <= r);
    }

    #[test]
    fn posterior_mean_is_no_worse_than_average_draw() {
        let (truth, design) = small_problem(4);
        let truth = truth.compose();
        let mut draw_errors = Vec::new();
        let mut chain = Chain::new(&design, hp(), cfg(), ChaCha20Rng::seed_from_u64(6)).unwrap();
        let summary = chain
            .run_observed(|f| draw_errors.push(empirical_sq_norm(&f.compose(), &truth, &design).unwrap()))
            .unwrap();
        let mean_err = empirical_sq_norm(summary.mean.as_ref().unwrap(), &truth, &design).unwrap();
        let avg = draw_errors.iter().sum::<f64>() / draw_errors.len() as f64;
        assert!(mean_err <= avg * (1.0 + 1e-12));
    }

    #[test]
    fn impossible_radius_is_an_estimation_failure() {
        let (_, design) = small_problem(5);
        let c = ChainConfig {
            rejection: Rejection::MaxNorm(1e-9),
            ..cfg()
        };
        let err = run_chain(&design, &hp(), &c, ChaCha20Rng::seed_from_u64(1)).unwrap_err();
        assert!(matches!(err, Error::EstimationFailure(_)));
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn empty_design_cannot_be_fit() {
        let design = DesignSet::new(Shape::new(vec![2, 2]).unwrap(), vec![]).unwrap();
        assert!(run_chain(&design, &hp(), &cfg(), ChaCha20Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn merged_chains_weight_by_accepted_counts() {
        let (_, design) = small_problem(7);
        let a = run_chain(&design, &hp(), &cfg(), ChaCha20Rng::seed_from_u64(1)).unwrap();
        let b = run_chain(&design, &hp(), &cfg(), ChaCha20Rng::seed_from_u64(2)).unwrap();
        let merged = merge_summaries(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(merged.n_accepted, a.n_accepted + b.n_accepted);
        let (ma, mb, mm) = (a.mean.clone().unwrap(), b.mean.clone().unwrap(), merged.mean.clone().unwrap());
        let wa = a.n_accepted as f64 / merged.n_accepted as f64;
        for ((x, y), z) in ma.values().iter().zip(mb.values()).zip(mm.values()) {
            assert!((wa * x + (1.0 - wa) * y - z).abs() < 1e-12);
        }
        let parallel = run_chains(&design, &hp(), &cfg(), &[1, 2]).unwrap();
        assert_eq!(parallel, merged);
    }

    #[test]
    fn probes_follow_the_dense_mean() {
        let (_, design) = small_problem(8);
        let c = ChainConfig {
            probes: vec![vec![0, 1, 2], vec![2, 2, 2]],
            ..cfg()
        };
        let s = run_chain(&design, &hp(), &c, ChaCha20Rng::seed_from_u64(9)).unwrap();
        let mean = s.mean.as_ref().unwrap();
        assert_eq!(s.probe_means[0], mean.get(&[0, 1, 2]).unwrap());
        assert!(s.stats_csv().contains("probe_2_2_2,"));
        assert!(s.rank_csv().starts_with("rank,count\n"));
    }

    #[test]
    fn resume_from_checkpoint_continues_identically() {
        let (_, design) = small_problem(10);
        let mut chain = Chain::new(&design, hp(), cfg(), ChaCha20Rng::seed_from_u64(12)).unwrap();
        for _ in 0..7 {
            chain.step().unwrap();
        }
        let text = chain.checkpoint().to_string();
        let restored = text.parse::<Checkpoint>().unwrap();
        let mut resumed = Chain::resume(&design, cfg(), &restored).unwrap();
        for _ in 0..5 {
            chain.step().unwrap();
            resumed.step().unwrap();
        }
        assert_eq!(chain.state().factors, resumed.state().factors);
        assert_eq!(chain.state().sweep_count, 12);
        assert_eq!(resumed.state().sweep_count, 12);
    }
}
