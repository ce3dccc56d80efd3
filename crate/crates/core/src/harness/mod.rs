//! Synthetic data generation, fitting, evaluation and experiment sweeps
//! behind the `bayestensor` command-line tool.

mod experiment;
mod keyvalue;

pub use experiment::{
    average_records, results_csv, run_experiment, AccuracyRecord, ExperimentPlan, RESULTS_HEADER,
};
pub use keyvalue::{format_list, parse_list, parse_rejection, rejection_kind, KeyValues};

use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::bounds::{in_sample_bounds, theorem_bounds, BoundReport, ProblemProfile};
use crate::designs::{
    generate_responses, make_completion_design, read_observations_csv, write_observations_csv,
    DesignSet, GatePolicy, NoiseSpec,
};
use crate::error::{Error, Result};
use crate::norms::{empirical_sq_norm, population_sq_norm_uniform};
use crate::sampler::{merge_summaries, Chain, ChainConfig, Checkpoint, Hyperparams, PosteriorSummary, Rejection};
use crate::tensor::{CpFactors, DenseTensor, Shape};
use crate::textio::{read_dense, read_factors, write_dense, write_factors};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const OBSERVATIONS_FILE: &str = "observations.csv";
pub const TRUTH_FILE: &str = "truth.factors";
pub const MEAN_FILE: &str = "mean.tensor";
pub const RANK_FILE: &str = "rank_hist.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";

/// Prior scale used by every benchmark setting.
pub const SETTING_SIGMA_P: f64 = 5.0;
/// Rejection radius used by every benchmark setting.
pub const SETTING_RADIUS: f64 = 10.0;
pub const SETTING_NOISE_SIGMA: f64 = 1.0;
pub const DEFAULT_XI: f64 = 0.5;
/// `d_max` when fitting data without a known generating rank.
pub const DEFAULT_EXTERNAL_D_MAX: usize = 10;

const BENCHMARK_SETTINGS: [(&[usize], usize); 5] = [
    (&[10, 10, 10], 4),
    (&[10, 10, 40], 5),
    (&[20, 20, 30], 8),
    (&[20, 30, 40], 5),
    (&[30, 30, 40], 6),
];

/// One of the five benchmark problems, optionally shrunk.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSetting {
    pub id: usize,
    pub dims: Vec<usize>,
    pub d_star: usize,
    pub sigma_p: f64,
    pub radius: f64,
    pub noise_sigma: f64,
}

impl ExperimentSetting {
    /// Setting `id` (1-based). `scale` multiplies every mode size and the
    /// rank, rounding up.
    pub fn benchmark(id: usize, scale: f64) -> Result<Self> {
        let (dims, d_star) = BENCHMARK_SETTINGS
            .get(id.wrapping_sub(1))
            .ok_or_else(|| Error::Config(format!("unknown setting {id}; expected 1..=5")))?;
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(Error::Config(format!("scale must lie in (0, 1], got {scale}")));
        }
        let shrink = |v: usize| ((v as f64 * scale).ceil() as usize).max(1);
        Ok(Self {
            id,
            dims: dims.iter().map(|&m| shrink(m)).collect(),
            d_star: shrink(*d_star),
            sigma_p: SETTING_SIGMA_P,
            radius: SETTING_RADIUS,
            noise_sigma: SETTING_NOISE_SIGMA,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.dims.iter().product()
    }

    /// Sample count `round(ns * prod M_k)`.
    pub fn sample_count(&self, ns: f64) -> Result<usize> {
        let n = (ns * self.n_cells() as f64).round();
        if !(n >= 1.0) {
            return Err(Error::Config(format!("ns = {ns} gives no observations")));
        }
        Ok(n as usize)
    }

    /// `prod M_k / (d* sum M_k)`.
    pub fn accuracy_scale(&self) -> f64 {
        accuracy_scale(&self.dims, self.d_star)
    }
}

pub fn accuracy_scale(dims: &[usize], d_star: usize) -> f64 {
    let prod: usize = dims.iter().product();
    let sum: usize = dims.iter().sum();
    prod as f64 / (d_star * sum) as f64
}

/// Deterministic per-job seed from a master seed and job coordinates.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

/// Truth factors with entries uniform on `[-1, 1]`.
pub fn uniform_truth<R: Rng + ?Sized>(shape: Shape, rank: usize, rng: &mut R) -> Result<CpFactors> {
    CpFactors::from_fn(shape, rank, |_, _, _| rng.random_range(-1.0..=1.0))
}

/// A synthetic completion problem.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub truth: CpFactors,
    pub design: DesignSet,
}

pub fn generate_dataset(dims: &[usize], d_star: usize, n: usize, noise_sigma: f64, seed: u64) -> Result<Dataset> {
    let shape = Shape::new(dims.to_vec())?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let truth = uniform_truth(shape.clone(), d_star, &mut rng)?;
    let xs = make_completion_design(&shape, n, &mut rng)?;
    let design = generate_responses(&truth, xs, NoiseSpec::new(noise_sigma)?, &mut rng)?;
    Ok(Dataset { truth, design })
}

/// Everything a fit needs besides the data.
#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub hp: Hyperparams,
    pub chain: ChainConfig,
    pub chains: usize,
    pub seed: u64,
    pub gate: GatePolicy,
}

impl FitConfig {
    /// Reads hyperparameters and the sampling budget from flat settings,
    /// filling unspecified values with defaults.
    pub fn from_settings(kv: &KeyValues) -> Result<Self> {
        let d_star: Option<usize> = kv.get("d_star")?;
        let noise: Option<f64> = kv.get("noise_sigma")?;
        let radius: Option<f64> = match kv.raw("radius") {
            Some("none") => None,
            _ => kv.get("radius")?,
        };
        let hp = Hyperparams {
            sigma: kv.get("sigma")?.or(noise).unwrap_or(1.0),
            sigma_p: kv.get_or("sigma_p", SETTING_SIGMA_P)?,
            xi: kv.get_or("xi", DEFAULT_XI)?,
            d_max: match kv.get("d_max")? {
                Some(d) => d,
                None => d_star.map_or(DEFAULT_EXTERNAL_D_MAX, |d| 2 * d),
            },
            radius,
        };
        hp.validate()?;
        let default_kind = if radius.is_some() { "inf" } else { "none" };
        let rejection = parse_rejection(kv.raw("rejection").unwrap_or(default_kind), radius)?;
        let n_samples = kv.get_or("n_samples", 500)?;
        let chain = ChainConfig {
            burn_in: kv.get_or("burn_in", n_samples)?,
            n_samples,
            thin: kv.get_or("thin", 1)?,
            rank_move_prob: kv.get_or("rank_move_prob", 0.2)?,
            rejection,
            probes: Vec::new(),
        };
        chain.validate()?;
        let chains = kv.get_or("chains", 1)?;
        if chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        let gate = match kv.raw("gate").unwrap_or("reject") {
            "reject" => GatePolicy::Reject,
            "rescale" => GatePolicy::Rescale,
            other => return Err(Error::Config(format!("unknown gate policy {other:?}"))),
        };
        Ok(Self {
            hp,
            chain,
            chains,
            seed: kv.get_or("seed", 0)?,
            gate,
        })
    }

    /// Writes the settings read by [`FitConfig::from_settings`].
    pub fn write_settings(&self, kv: &mut KeyValues) {
        kv.set("sigma", format!("{:?}", self.hp.sigma))
            .set("sigma_p", format!("{:?}", self.hp.sigma_p))
            .set("xi", format!("{:?}", self.hp.xi))
            .set("d_max", self.hp.d_max)
            .set_opt("radius", self.hp.radius.map(|r| format!("{r:?}")))
            .set("rejection", rejection_kind(&self.chain.rejection))
            .set("burn_in", self.chain.burn_in)
            .set("n_samples", self.chain.n_samples)
            .set("thin", self.chain.thin)
            .set("rank_move_prob", format!("{:?}", self.chain.rank_move_prob))
            .set("chains", self.chains)
            .set("seed", self.seed)
            .set(
                "gate",
                match self.gate {
                    GatePolicy::Reject => "reject",
                    GatePolicy::Rescale => "rescale",
                },
            );
    }

    pub fn chain_seeds(&self) -> Vec<u64> {
        (0..self.chains as u64).map(|i| derive_seed(self.seed, &[0xf17, i])).collect()
    }
}

/// Posterior summary plus the final state of every chain.
#[derive(Clone, Debug)]
pub struct FitOutput {
    pub summary: PosteriorSummary,
    pub checkpoints: Vec<Checkpoint>,
}

/// Runs the configured chains in parallel and merges them.
pub fn fit(design: &DesignSet, cfg: &FitConfig) -> Result<FitOutput> {
    if design.is_empty() {
        return Err(Error::InvalidArgument("cannot fit an empty design".into()));
    }
    let results: Vec<Result<(PosteriorSummary, Checkpoint)>> = cfg
        .chain_seeds()
        .into_par_iter()
        .map(|seed| {
            let mut chain = Chain::new(design, cfg.hp.clone(), cfg.chain.clone(), ChaCha20Rng::seed_from_u64(seed))?;
            let summary = chain.run()?;
            Ok((summary, chain.checkpoint()))
        })
        .collect();
    let mut summaries = Vec::new();
    let mut checkpoints = Vec::new();
    let mut failure = None;
    for r in results {
        match r {
            Ok((s, c)) => {
                summaries.push(s);
                checkpoints.push(c);
            }
            Err(e @ Error::EstimationFailure(_)) => failure = Some(e),
            Err(e) => return Err(e),
        }
    }
    if summaries.is_empty() {
        return Err(failure.unwrap_or_else(|| Error::EstimationFailure("no chain finished".into())));
    }
    Ok(FitOutput {
        summary: merge_summaries(&summaries)?,
        checkpoints,
    })
}

/// The four accuracy numbers of a fitted mean.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Accuracy {
    pub in_sample: f64,
    pub out_sample: f64,
    pub scaled_in: f64,
    pub scaled_out: f64,
}

/// In-sample error on the fitting design, population error under uniform
/// sampling, and both scaled by `prod M_k / (d* sum M_k)`.
pub fn evaluate(mean: &DenseTensor, truth: &DenseTensor, design: &DesignSet, d_star: usize) -> Result<Accuracy> {
    if d_star == 0 {
        return Err(Error::InvalidArgument("d_star must be positive".into()));
    }
    let in_sample = empirical_sq_norm(mean, truth, design)?;
    let out_sample = population_sq_norm_uniform(mean, truth)?;
    let scale = accuracy_scale(mean.shape().dims(), d_star);
    Ok(Accuracy {
        in_sample,
        out_sample,
        scaled_in: in_sample * scale,
        scaled_out: out_sample * scale,
    })
}

pub fn accuracy_csv(a: &Accuracy) -> String {
    format!(
        "in_sample,out_sample,scaled_in,scaled_out\n{:?},{:?},{:?},{:?}\n",
        a.in_sample, a.out_sample, a.scaled_in, a.scaled_out
    )
}

/// What `generate` should produce.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerateRequest {
    pub setting: Option<usize>,
    pub dims: Vec<usize>,
    pub d_star: usize,
    pub n: usize,
    pub ns: Option<f64>,
    pub noise_sigma: f64,
    pub seed: u64,
    pub scale: f64,
}

impl GenerateRequest {
    /// Resolves a benchmark setting or custom shape from flat settings.
    pub fn from_settings(kv: &KeyValues) -> Result<Self> {
        let scale: f64 = kv.get_or("scale", 1.0)?;
        let setting: Option<usize> = kv.get("setting")?;
        let (dims, d_star, default_noise) = match setting {
            Some(id) => {
                let s = ExperimentSetting::benchmark(id, scale)?;
                (s.dims, s.d_star, s.noise_sigma)
            }
            None => (
                kv.get_list("dims")?
                    .ok_or_else(|| Error::Config("need either `setting` or `dims`".into()))?,
                kv.require("d_star")?,
                SETTING_NOISE_SIGMA,
            ),
        };
        let cells: usize = dims.iter().product();
        let ns: Option<f64> = kv.get("ns")?;
        let n = match (kv.get::<usize>("n")?, ns) {
            (Some(n), _) => n,
            (None, Some(ns)) => (ns * cells as f64).round() as usize,
            (None, None) => return Err(Error::Config("need either `n` or `ns`".into())),
        };
        if n == 0 {
            return Err(Error::Config("sample count must be at least 1".into()));
        }
        Ok(Self {
            setting,
            dims,
            d_star,
            n,
            ns,
            noise_sigma: kv.get_or("noise_sigma", default_noise)?,
            seed: kv.get_or("seed", 0)?,
            scale,
        })
    }
}

/// Writes truth, observations and a manifest that `fit` can run from.
pub fn cmd_generate(settings: &KeyValues, out: &Path) -> Result<KeyValues> {
    let req = GenerateRequest::from_settings(settings)?;
    let data = generate_dataset(&req.dims, req.d_star, req.n, req.noise_sigma, req.seed)?;

    let mut fit_settings = settings.clone();
    fit_settings.set("d_star", req.d_star).set("noise_sigma", format!("{:?}", req.noise_sigma));
    if fit_settings.raw("radius").is_none() && req.setting.is_some() {
        fit_settings.set("radius", format!("{SETTING_RADIUS:?}"));
    }
    let fit_cfg = FitConfig::from_settings(&fit_settings)?;

    let mut manifest = KeyValues::new();
    manifest
        .set_opt("setting", req.setting)
        .set("dims", format_list(&req.dims))
        .set("d_star", req.d_star)
        .set("n", req.n)
        .set_opt("ns", req.ns.map(|v| format!("{v:?}")))
        .set("noise_sigma", format!("{:?}", req.noise_sigma))
        .set("scale", format!("{:?}", req.scale))
        .set("design", "completion")
        .set("truth_distribution", "uniform[-1,1]");
    fit_cfg.write_settings(&mut manifest);
    // the generating seed and the fitting seed share the `seed` key
    manifest.set("seed", req.seed);

    fs::create_dir_all(out)?;
    write_factors(&out.join(TRUTH_FILE), &data.truth)?;
    write_observations_csv(File::create(out.join(OBSERVATIONS_FILE))?, &data.design)?;
    manifest.save(&out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Loads observations for a known shape.
pub fn load_observations(path: &Path, shape: &Shape, gate: GatePolicy) -> Result<DesignSet> {
    read_observations_csv(BufReader::new(File::open(path)?), shape, gate)
}

/// Fits the observations described by `settings` (which must carry `dims`)
/// and writes the mean, rank histogram, diagnostics and checkpoints.
pub fn cmd_fit(settings: &KeyValues, observations: &Path, out: &Path) -> Result<PosteriorSummary> {
    let dims: Vec<usize> = settings
        .get_list("dims")?
        .ok_or_else(|| Error::Config("fit needs `dims` (from a manifest or --dims)".into()))?;
    let shape = Shape::new(dims)?;
    let cfg = FitConfig::from_settings(settings)?;
    let design = load_observations(observations, &shape, cfg.gate)?;
    let output = fit(&design, &cfg)?;

    fs::create_dir_all(out)?;
    let summary = output.summary;
    if let Some(mean) = &summary.mean {
        write_dense(&out.join(MEAN_FILE), mean)?;
    }
    fs::write(out.join(RANK_FILE), summary.rank_csv())?;
    fs::write(out.join(DIAGNOSTICS_FILE), summary.stats_csv())?;
    for (i, c) in output.checkpoints.iter().enumerate() {
        fs::write(out.join(format!("checkpoint_{i}.txt")), c.to_string())?;
    }
    let mut used = KeyValues::new();
    used.set("dims", format_list(shape.dims()));
    cfg.write_settings(&mut used);
    used.save(&out.join("fit_settings.txt"))?;
    Ok(summary)
}

/// Scores a mean tensor against truth factors on the fitting observations.
pub fn cmd_eval(mean: &Path, truth: &Path, observations: &Path, d_star: Option<usize>) -> Result<Accuracy> {
    let mean = read_dense(mean)?;
    let truth = read_factors(truth)?;
    if mean.shape() != truth.shape() {
        return Err(Error::Structural(format!(
            "mean shape {} does not match truth shape {}",
            mean.shape(),
            truth.shape()
        )));
    }
    let design = load_observations(observations, mean.shape(), GatePolicy::Reject)?;
    evaluate(&mean, &truth.compose(), &design, d_star.unwrap_or(truth.rank()))
}

/// Header of the `bounds` CSV.
pub const BOUNDS_HEADER: &str =
    "dims,n,d_star,sigma_p,xi,d_max,R,frob_sq_sum,max2,xi_1,c_nk,c_eps,t1,t2,t3";

/// One profile per requested sample size.
pub fn bound_profiles(kv: &KeyValues) -> Result<Vec<ProblemProfile>> {
    let scale: f64 = kv.get_or("scale", 1.0)?;
    let setting: Option<usize> = kv.get("setting")?;
    let (dims, d_star, default_radius) = match setting {
        Some(id) => {
            let s = ExperimentSetting::benchmark(id, scale)?;
            (s.dims, s.d_star, Some(s.radius))
        }
        None => (
            kv.get_list("dims")?.ok_or_else(|| Error::Config("need either `setting` or `dims`".into()))?,
            kv.require("d_star")?,
            None,
        ),
    };
    let shape = Shape::new(dims.clone())?;
    let (frob_sq_sum, max2) = match (kv.get("frob_sq_sum")?, kv.get("max2")?) {
        (Some(f), Some(m)) => (f, m),
        _ => {
            // summaries of a synthetic uniform truth
            let mut rng = ChaCha20Rng::seed_from_u64(kv.get_or("seed", 0)?);
            let truth = uniform_truth(shape.clone(), d_star, &mut rng)?;
            (
                kv.get("frob_sq_sum")?.unwrap_or(truth.frob_sq_sum()),
                kv.get("max2")?.unwrap_or(truth.max2_upper_bound()),
            )
        }
    };
    let ns: Vec<usize> = match (kv.get_list::<usize>("n")?, kv.get_list::<f64>("ns")?) {
        (Some(n), _) => n,
        (None, Some(ns)) => ns.iter().map(|v| (v * shape.len() as f64).round() as usize).collect(),
        (None, None) => return Err(Error::Config("need `n` or `ns`".into())),
    };
    let radius = match kv.raw("radius") {
        Some("none") => None,
        Some(_) => kv.get("radius")?,
        None => default_radius,
    };
    let hp = Hyperparams {
        sigma: kv.get_or("sigma", SETTING_NOISE_SIGMA)?,
        sigma_p: kv.get_or("sigma_p", SETTING_SIGMA_P)?,
        xi: kv.get_or("xi", DEFAULT_XI)?,
        d_max: kv.get_or("d_max", 2 * d_star)?,
        radius,
    };
    ns.into_iter()
        .map(|n| {
            let p = ProblemProfile {
                dims: dims.clone(),
                n,
                d_star,
                frob_sq_sum,
                max2,
                hp: hp.clone(),
            };
            p.validate()?;
            Ok(p)
        })
        .collect()
}

pub fn profile_report(profile: &ProblemProfile) -> Result<BoundReport> {
    match profile.hp.radius {
        Some(_) => theorem_bounds(profile),
        None => in_sample_bounds(profile),
    }
}

pub fn bounds_row(p: &ProblemProfile, r: &BoundReport) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:?}"));
    let dims: Vec<String> = p.dims.iter().map(|m| m.to_string()).collect();
    format!(
        "{},{},{},{:?},{:?},{},{},{:?},{:?},{:?},{:?},{:?},{:?},{},{}",
        dims.join("x"),
        p.n,
        p.d_star,
        p.hp.sigma_p,
        p.hp.xi,
        p.hp.d_max,
        opt(p.hp.radius),
        p.frob_sq_sum,
        p.max2,
        r.xi_at[0].1,
        r.c_nk,
        r.c_eps,
        r.t1_bound,
        opt(r.t2_bound),
        opt(r.t3_bound),
    )
}

pub fn cmd_bounds(kv: &KeyValues) -> Result<String> {
    let mut out = String::from(BOUNDS_HEADER);
    out.push('\n');
    for p in bound_profiles(kv)? {
        out.push_str(&bounds_row(&p, &profile_report(&p)?));
        out.push('\n');
    }
    Ok(out)
}

/// Rejection used by the benchmark protocol.
pub fn benchmark_rejection() -> Rejection {
    Rejection::InfinityNorm(SETTING_RADIUS)
}
