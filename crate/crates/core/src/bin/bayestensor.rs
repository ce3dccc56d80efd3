use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bayestensor::harness::{
    self, accuracy_csv, parse_list, results_csv, ExperimentPlan, KeyValues, MANIFEST_FILE, OBSERVATIONS_FILE,
};
use bayestensor::sampler::ChainConfig;
use bayestensor::{Error, Result};

#[derive(Parser)]
#[command(name = "bayestensor", version, about = "Bayesian low-rank tensor regression")]
struct Cli {
    /// Master random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Flat key=value settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic truth and completion observations.
    Generate(GenerateArgs),
    /// Run the sampler on an observations file.
    Fit(FitArgs),
    /// Score a posterior mean against truth factors.
    Eval(EvalArgs),
    /// Run the scaled-accuracy sweep.
    Experiment(ExperimentArgs),
    /// Evaluate the rate bounds for a problem profile.
    Bounds(BoundsArgs),
}

#[derive(Args)]
struct ShapeArgs {
    /// Benchmark setting 1..=5.
    #[arg(long)]
    setting: Option<usize>,
    /// Comma-separated mode sizes (instead of --setting).
    #[arg(long)]
    dims: Option<String>,
    #[arg(long)]
    d_star: Option<usize>,
    /// Shrink factor applied to a benchmark setting.
    #[arg(long)]
    scale: Option<f64>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    /// Number of observations.
    #[arg(long)]
    n: Option<usize>,
    /// Observations as a fraction of the tensor size.
    #[arg(long)]
    ns: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
}

#[derive(Args)]
struct HyperArgs {
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    sigma_p: Option<f64>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    d_max: Option<usize>,
    /// Rejection radius, or `none`.
    #[arg(long)]
    radius: Option<String>,
}

#[derive(Args)]
struct FitArgs {
    /// Observations CSV (default: <out>/observations.csv).
    #[arg(long)]
    observations: Option<PathBuf>,
    /// Manifest to read settings from (default: manifest.txt next to the observations, if present).
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    dims: Option<String>,
    #[command(flatten)]
    hyper: HyperArgs,
    /// none, inf or max.
    #[arg(long)]
    rejection: Option<String>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    rank_move_prob: Option<f64>,
    #[arg(long)]
    chains: Option<usize>,
    /// reject or rescale measurements with l1 norm above 1.
    #[arg(long)]
    gate: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    mean: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    observations: PathBuf,
    /// Rank used for scaling (default: rank of the truth factors).
    #[arg(long)]
    d_star: Option<usize>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Comma-separated setting ids.
    #[arg(long)]
    settings: Option<String>,
    /// Comma-separated n_s grid.
    #[arg(long)]
    ns: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    rank_move_prob: Option<f64>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    chains: Option<usize>,
    /// Record wall-clock seconds per cell (makes the output non-reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    /// Comma-separated sample sizes.
    #[arg(long)]
    n: Option<String>,
    /// Comma-separated sample fractions.
    #[arg(long)]
    ns: Option<String>,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long)]
    frob_sq_sum: Option<f64>,
    #[arg(long)]
    max2: Option<f64>,
}

fn fmt_opt_f64(v: Option<f64>) -> Option<String> {
    v.map(|v| format!("{v:?}"))
}

impl ShapeArgs {
    fn apply(&self, kv: &mut KeyValues) {
        kv.set_opt("setting", self.setting)
            .set_opt("dims", self.dims.clone())
            .set_opt("d_star", self.d_star)
            .set_opt("scale", fmt_opt_f64(self.scale));
    }
}

impl HyperArgs {
    fn apply(&self, kv: &mut KeyValues) {
        kv.set_opt("sigma", fmt_opt_f64(self.sigma))
            .set_opt("sigma_p", fmt_opt_f64(self.sigma_p))
            .set_opt("xi", fmt_opt_f64(self.xi))
            .set_opt("d_max", self.d_max)
            .set_opt("radius", self.radius.clone());
    }
}

/// Config file settings overlaid with the global seed.
fn base_settings(cli: &Cli) -> Result<KeyValues> {
    let mut kv = match &cli.config {
        Some(path) => KeyValues::load(path)?,
        None => KeyValues::new(),
    };
    kv.set_opt("seed", cli.seed);
    Ok(kv)
}

fn write_output(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn generate(cli: &Cli, args: &GenerateArgs) -> Result<()> {
    let mut kv = base_settings(cli)?;
    args.shape.apply(&mut kv);
    kv.set_opt("n", args.n)
        .set_opt("ns", fmt_opt_f64(args.ns))
        .set_opt("noise_sigma", fmt_opt_f64(args.noise_sigma));
    let manifest = harness::cmd_generate(&kv, &cli.out)?;
    eprintln!(
        "wrote {} observations to {}",
        manifest.raw("n").unwrap_or("?"),
        cli.out.join(OBSERVATIONS_FILE).display()
    );
    Ok(())
}

fn fit(cli: &Cli, args: &FitArgs) -> Result<()> {
    let observations = args.observations.clone().unwrap_or_else(|| cli.out.join(OBSERVATIONS_FILE));
    let manifest_path = match &args.manifest {
        Some(p) => Some(p.clone()),
        None => observations
            .parent()
            .map(|dir| dir.join(MANIFEST_FILE))
            .filter(|p| p.is_file()),
    };
    // manifest < config file < flags
    let mut kv = match &manifest_path {
        Some(p) => KeyValues::load(p)?,
        None => KeyValues::new(),
    };
    kv.overlay(&base_settings(cli)?);
    kv.set_opt("dims", args.dims.clone());
    args.hyper.apply(&mut kv);
    kv.set_opt("rejection", args.rejection.clone())
        .set_opt("n_samples", args.n_samples)
        .set_opt("burn_in", args.burn_in)
        .set_opt("thin", args.thin)
        .set_opt("rank_move_prob", fmt_opt_f64(args.rank_move_prob))
        .set_opt("chains", args.chains)
        .set_opt("gate", args.gate.clone());
    let summary = harness::cmd_fit(&kv, &observations, &cli.out)?;
    print!("{}", summary.stats_csv());
    Ok(())
}

fn eval(cli: &Cli, args: &EvalArgs) -> Result<()> {
    let acc = harness::cmd_eval(&args.mean, &args.truth, &args.observations, args.d_star)?;
    let text = accuracy_csv(&acc);
    write_output(&cli.out, "accuracy.csv", &text)?;
    print!("{text}");
    Ok(())
}

fn list<T: std::str::FromStr>(key: &str, text: &str) -> Result<Vec<T>> {
    parse_list(text).map_err(|_| Error::Config(format!("cannot parse {key} list {text:?}")))
}

fn experiment(cli: &Cli, args: &ExperimentArgs) -> Result<()> {
    let kv = base_settings(cli)?;
    let mut plan = ExperimentPlan::desk_scale(kv.get_or("seed", 0)?);
    if let Some(v) = kv.get_list("settings")? {
        plan.settings = v;
    }
    if let Some(v) = kv.get_list("ns")? {
        plan.ns = v;
    }
    plan.reps = kv.get_or("reps", plan.reps)?;
    plan.scale = kv.get_or("scale", plan.scale)?;
    plan.xi = kv.get_or("xi", plan.xi)?;
    plan.chains = kv.get_or("chains", plan.chains)?;
    let n_samples = args.n_samples.unwrap_or(kv.get_or("n_samples", plan.chain.n_samples)?);
    plan.chain = ChainConfig {
        burn_in: args.burn_in.unwrap_or(kv.get_or("burn_in", n_samples)?),
        n_samples,
        rank_move_prob: args
            .rank_move_prob
            .unwrap_or(kv.get_or("rank_move_prob", plan.chain.rank_move_prob)?),
        ..plan.chain
    };

    if let Some(s) = &args.settings {
        plan.settings = list("settings", s)?;
    }
    if let Some(s) = &args.ns {
        plan.ns = list("ns", s)?;
    }
    plan.reps = args.reps.unwrap_or(plan.reps);
    plan.scale = args.scale.unwrap_or(plan.scale);
    plan.xi = args.xi.unwrap_or(plan.xi);
    plan.chains = args.chains.unwrap_or(plan.chains);
    plan.timing = args.timing;

    let rows = harness::run_experiment(&plan)?;
    let text = results_csv(&rows);
    write_output(&cli.out, "results.csv", &text)?;
    print!("{text}");
    Ok(())
}

fn bounds(cli: &Cli, args: &BoundsArgs) -> Result<()> {
    let mut kv = base_settings(cli)?;
    args.shape.apply(&mut kv);
    args.hyper.apply(&mut kv);
    kv.set_opt("n", args.n.clone())
        .set_opt("ns", args.ns.clone())
        .set_opt("frob_sq_sum", fmt_opt_f64(args.frob_sq_sum))
        .set_opt("max2", fmt_opt_f64(args.max2));
    let text = harness::cmd_bounds(&kv)?;
    write_output(&cli.out, "bounds.csv", &text)?;
    print!("{text}");
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => generate(cli, a),
        Command::Fit(a) => fit(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Experiment(a) => experiment(cli, a),
        Command::Bounds(a) => bounds(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
