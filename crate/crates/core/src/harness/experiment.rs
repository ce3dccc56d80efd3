//! The scaled-accuracy sweep: every (setting, n_s, repetition) cell is
//! generated, fitted and scored independently.

use std::time::Instant;

use rayon::prelude::*;

use super::{derive_seed, evaluate, fit, generate_dataset, ExperimentSetting, FitConfig};
use crate::error::{Error, Result};
use crate::sampler::{ChainConfig, Hyperparams, Rejection};

pub const RESULTS_HEADER: &str =
    "setting,ns,rep,n,in_sample,out_sample,scaled_in,scaled_out,rank_mode,wall_s,error";

/// The sweep and its per-fit sampling budget.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPlan {
    pub settings: Vec<usize>,
    pub ns: Vec<f64>,
    pub reps: usize,
    pub scale: f64,
    pub seed: u64,
    pub xi: f64,
    pub chain: ChainConfig,
    pub chains: usize,
    /// Fill the `wall_s` column. Off by default so reruns are byte-identical.
    pub timing: bool,
}

impl ExperimentPlan {
    /// Desk-scale defaults: settings 1 and 2 at half size.
    pub fn desk_scale(seed: u64) -> Self {
        Self {
            settings: vec![1, 2],
            ns: vec![0.3, 0.5, 0.7, 0.9],
            reps: 3,
            scale: 0.5,
            seed,
            xi: super::DEFAULT_XI,
            chain: ChainConfig::with_samples(1000),
            chains: 1,
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.settings.is_empty() || self.ns.is_empty() || self.reps == 0 {
            return Err(Error::Config("experiment needs settings, an ns grid and reps >= 1".into()));
        }
        if self.ns.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("every ns must be positive".into()));
        }
        for &id in &self.settings {
            let s = ExperimentSetting::benchmark(id, self.scale)?;
            for &ns in &self.ns {
                s.sample_count(ns)?;
            }
        }
        self.chain.validate()
    }
}

/// One row of the results table. `rep` is `None` for an average row.
#[derive(Clone, Debug, PartialEq)]
pub struct AccuracyRecord {
    pub setting: usize,
    pub ns: f64,
    pub rep: Option<usize>,
    pub n: usize,
    pub in_sample: f64,
    pub out_sample: f64,
    pub scaled_in: f64,
    pub scaled_out: f64,
    pub rank_mode: Option<usize>,
    pub wall_s: Option<f64>,
    pub error: Option<String>,
}

impl AccuracyRecord {
    fn failed(setting: usize, ns: f64, rep: usize, n: usize, error: &Error) -> Self {
        Self {
            setting,
            ns,
            rep: Some(rep),
            n,
            in_sample: f64::NAN,
            out_sample: f64::NAN,
            scaled_in: f64::NAN,
            scaled_out: f64::NAN,
            rank_mode: None,
            wall_s: None,
            error: Some(error.to_string()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

fn run_cell(plan: &ExperimentPlan, setting: &ExperimentSetting, ns: f64, rep: usize) -> AccuracyRecord {
    let start = Instant::now();
    let n = setting.sample_count(ns).unwrap_or(0);
    let cell_seed = derive_seed(plan.seed, &[setting.id as u64, ns.to_bits(), rep as u64]);
    let result = (|| -> Result<AccuracyRecord> {
        let data = generate_dataset(&setting.dims, setting.d_star, n, setting.noise_sigma, cell_seed)?;
        let cfg = FitConfig {
            hp: Hyperparams {
                sigma: setting.noise_sigma,
                sigma_p: setting.sigma_p,
                xi: plan.xi,
                d_max: 2 * setting.d_star,
                radius: Some(setting.radius),
            },
            chain: ChainConfig {
                rejection: Rejection::InfinityNorm(setting.radius),
                ..plan.chain.clone()
            },
            chains: plan.chains,
            seed: derive_seed(cell_seed, &[1]),
            gate: Default::default(),
        };
        let summary = fit(&data.design, &cfg)?.summary;
        let mean = summary
            .mean
            .as_ref()
            .ok_or_else(|| Error::Unsupported("experiment cells need a dense mean".into()))?;
        let acc = evaluate(mean, &data.truth.compose(), &data.design, setting.d_star)?;
        Ok(AccuracyRecord {
            setting: setting.id,
            ns,
            rep: Some(rep),
            n,
            in_sample: acc.in_sample,
            out_sample: acc.out_sample,
            scaled_in: acc.scaled_in,
            scaled_out: acc.scaled_out,
            rank_mode: summary.rank_mode(),
            wall_s: None,
            error: None,
        })
    })();
    let mut record = result.unwrap_or_else(|e| AccuracyRecord::failed(setting.id, ns, rep, n, &e));
    if plan.timing {
        record.wall_s = Some(start.elapsed().as_secs_f64());
    }
    record
}

/// Arithmetic mean over the successful repetitions of one (setting, n_s).
pub fn average_records(rows: &[AccuracyRecord]) -> Option<AccuracyRecord> {
    let first = rows.first()?;
    let ok: Vec<&AccuracyRecord> = rows.iter().filter(|r| r.is_ok()).collect();
    let mean = |f: fn(&AccuracyRecord) -> f64| {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
        }
    };
    let failed = rows.len() - ok.len();
    Some(AccuracyRecord {
        setting: first.setting,
        ns: first.ns,
        rep: None,
        n: first.n,
        in_sample: mean(|r| r.in_sample),
        out_sample: mean(|r| r.out_sample),
        scaled_in: mean(|r| r.scaled_in),
        scaled_out: mean(|r| r.scaled_out),
        rank_mode: None,
        wall_s: if ok.iter().all(|r| r.wall_s.is_some()) && !ok.is_empty() {
            Some(mean(|r| r.wall_s.unwrap_or(0.0)))
        } else {
            None
        },
        error: (failed > 0).then(|| format!("{failed} of {} repetitions failed", rows.len())),
    })
}

/// Runs the full cross product. Detail rows come in (setting, n_s, rep)
/// order, each (setting, n_s) group followed by its average row.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<Vec<AccuracyRecord>> {
    plan.validate()?;
    let settings: Vec<ExperimentSetting> = plan
        .settings
        .iter()
        .map(|&id| ExperimentSetting::benchmark(id, plan.scale))
        .collect::<Result<_>>()?;
    let cells: Vec<(usize, f64, usize)> = settings
        .iter()
        .enumerate()
        .flat_map(|(i, _)| {
            plan.ns
                .iter()
                .flat_map(move |&ns| (0..plan.reps).map(move |rep| (i, ns, rep)))
        })
        .collect();
    let detail: Vec<AccuracyRecord> = cells
        .par_iter()
        .map(|&(i, ns, rep)| run_cell(plan, &settings[i], ns, rep))
        .collect();
    let mut out = Vec::with_capacity(detail.len() + detail.len() / plan.reps);
    for group in detail.chunks(plan.reps) {
        out.extend_from_slice(group);
        out.extend(average_records(group));
    }
    Ok(out)
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:?}")
    }
}

fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

pub fn results_csv(rows: &[AccuracyRecord]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{:?},{},{},{},{},{},{},{},{},{}\n",
            r.setting,
            r.ns,
            r.rep.map_or("avg".to_string(), |v| v.to_string()),
            r.n,
            fmt_f64(r.in_sample),
            fmt_f64(r.out_sample),
            fmt_f64(r.scaled_in),
            fmt_f64(r.scaled_out),
            r.rank_mode.map_or(String::new(), |v| v.to_string()),
            r.wall_s.map_or(String::new(), |v| format!("{v:.3}")),
            r.error.as_deref().map_or(String::new(), csv_field),
        ));
    }
    out
}
