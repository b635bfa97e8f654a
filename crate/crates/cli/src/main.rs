//! Command-line front end: single searches, experiment grids, diagnostics.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use noise_search::harness::{
    audit_experiment, parse_shape, run_experiment, run_similarity_diagnostics, run_space_comparison,
    write_candidate_rows, write_similarity_csv, ExperimentFile, FlatConfig, PipelineSettings, PipelineSpec,
    SearchSettings, SpaceComparisonSpec, SummaryReport,
};
use noise_search::search::{run_search, Algorithm};
use noise_search::{Error, MixtureModel};

#[derive(Parser)]
#[command(name = "noise-search", version, about = "Verifier-guided search over initial sampler noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one search and write its trace.
    Search(SearchArgs),
    /// Run every (config, seed) cell of an experiment file.
    Experiment(ExperimentArgs),
    /// Rebuild an experiment's report from its traces and compare.
    Audit {
        /// Experiment output directory.
        dir: PathBuf,
    },
    /// Singular-vector similarity under singular-value perturbation.
    Diagnostics(DiagnosticsArgs),
    /// Score perturbations around shared pivots in both search spaces.
    CompareSpaces(CompareArgs),
    /// Write a random Gaussian-mixture model to a JSON file.
    MakeMixture(MixtureArgs),
}

/// Search keys settable from the command line; they override file values.
#[derive(Args, Default)]
struct SearchFlags {
    #[arg(long)]
    algorithm: Option<Algorithm>,
    #[arg(long)]
    candidates: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    nfe_budget: Option<u64>,
    /// Disable Gaussian normalization.
    #[arg(long)]
    no_gn: bool,
    /// Search the full tensor instead of singular values (also disables reset).
    #[arg(long)]
    no_css: bool,
    /// Disable singular space reset.
    #[arg(long)]
    no_ssr: bool,
}

impl SearchFlags {
    fn settings(&self, seed: Option<u64>) -> SearchSettings {
        let off = |b: bool| if b { Some(false) } else { None };
        SearchSettings {
            algorithm: self.algorithm,
            candidates: self.candidates,
            iterations: self.iterations,
            lambda: self.lambda,
            eta: self.eta,
            zeta: self.zeta,
            nfe_budget: self.nfe_budget,
            use_gn: off(self.no_gn),
            use_css: off(self.no_css),
            use_ssr: off(self.no_ssr),
            seed,
            ..Default::default()
        }
    }
}

#[derive(Args, Default)]
struct PipelineFlags {
    /// synthetic, fk, or external:<command line>
    #[arg(long)]
    verifier: Option<String>,
    /// toy, trellis, gaussian_cube, or SxNxN
    #[arg(long)]
    shape: Option<String>,
    #[arg(long)]
    mixture: Option<PathBuf>,
    #[arg(long)]
    context: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
}

impl PipelineFlags {
    fn settings(&self) -> PipelineSettings {
        PipelineSettings {
            verifier: self.verifier.clone(),
            shape: self.shape.clone(),
            mixture: self.mixture.clone(),
            context: self.context.clone(),
            steps: self.steps,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct SearchArgs {
    /// Flat TOML file with search and pipeline keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Trace file (JSON lines).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    search: SearchFlags,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the file).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Concurrent cells.
    #[arg(long)]
    jobs: Option<usize>,
    /// Comma-separated seeds (overrides the file).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[command(flatten)]
    search: SearchFlags,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

#[derive(Args)]
struct DiagnosticsArgs {
    #[arg(long, default_value = "trellis")]
    shape: String,
    #[arg(long, value_delimiter = ',', default_value = "0.1,1,2")]
    lambdas: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Flat TOML file; only pipeline keys are read.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.01,1,2,3")]
    radii: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pivots: usize,
    #[arg(long, default_value_t = 10)]
    candidates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Normalize candidates before scoring.
    #[arg(long)]
    gn: bool,
    /// Output directory for candidates.csv and report.json.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

#[derive(Args)]
struct MixtureArgs {
    /// Dimension, or a shape name whose element count is used.
    #[arg(long, default_value = "toy")]
    dim: String,
    #[arg(long, default_value_t = 4)]
    components: usize,
    #[arg(long, default_value_t = 1.0)]
    mean_scale: f64,
    #[arg(long, default_value_t = 0.5)]
    std: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ITS_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> ExitCode {
    let config = e.chain().any(|c| {
        matches!(
            c.downcast_ref::<Error>(),
            Some(Error::Config(_) | Error::Argument(_) | Error::Toml(_))
        )
    });
    ExitCode::from(if config { 2 } else { 3 })
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Search(a) => search(a),
        Command::Experiment(a) => experiment(a),
        Command::Audit { dir } => {
            let report = audit_experiment(&dir)?;
            println!("audit ok: {} configs", report.configs.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Diagnostics(a) => diagnostics(a),
        Command::CompareSpaces(a) => compare_spaces(a),
        Command::MakeMixture(a) => make_mixture(a),
    }
}

fn search(a: SearchArgs) -> Result<ExitCode> {
    let file = match &a.config {
        Some(path) => FlatConfig::load(path)?,
        None => FlatConfig::default(),
    };
    let cfg = file.search.overlay(&a.search.settings(a.seed)).resolve()?;
    let pipeline = PipelineSpec::from_settings(&file.pipeline.overlay(&a.pipeline.settings()))?;
    let objective = pipeline.objective()?;
    let trace = run_search(&cfg, &pipeline.shape, objective.as_ref())?;
    if let Some(out) = a.out.or(file.out) {
        ensure_parent(&out)?;
        trace.save(&out).with_context(|| format!("writing {}", out.display()))?;
    }
    println!(
        "best_score={} evaluations={} nfe={} resets={}",
        trace.final_score(),
        trace.best.evaluations,
        trace.total_nfe(),
        trace.reset_count()
    );
    Ok(ExitCode::SUCCESS)
}

fn experiment(a: ExperimentArgs) -> Result<ExitCode> {
    let mut file = ExperimentFile::load(&a.config)?;
    if let Some(out) = a.out {
        file.out = Some(out);
    }
    if let Some(jobs) = a.jobs {
        file.jobs = Some(jobs);
    }
    if let Some(seeds) = a.seeds {
        file.seeds = seeds;
    }
    let spec = file.resolve(&a.pipeline.settings(), &a.search.settings(None))?;
    let report = run_experiment(&spec)?;
    print_report(&report);
    if report.failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("{} cell(s) failed", report.failures.len());
        Ok(ExitCode::from(3))
    }
}

fn print_report(r: &SummaryReport) {
    println!("{:<24} {:>12} {:>12} {:>10} {:>6}", "config", "median", "mean", "std", "runs");
    for c in &r.configs {
        println!(
            "{:<24} {:>12} {:>12} {:>10} {:>6}",
            c.label,
            fmt_stat(c.median),
            fmt_stat(c.mean),
            fmt_stat(c.std),
            c.final_scores.len()
        );
    }
    for p in &r.paired {
        let rate = p.win_rate.map_or("-".to_string(), |w| format!("{w:.2}"));
        println!("{} vs {}: win rate {rate} over {} seeds", p.a, p.b, p.pairs);
    }
}

fn fmt_stat(x: Option<f64>) -> String {
    x.map_or("-".to_string(), |v| format!("{v:.6}"))
}

fn diagnostics(a: DiagnosticsArgs) -> Result<ExitCode> {
    let shape = parse_shape(&a.shape)?;
    let rows = run_similarity_diagnostics(&shape, &a.lambdas, a.pairs, a.seed)?;
    match &a.out {
        Some(out) => {
            ensure_parent(out)?;
            write_similarity_csv(&rows, out)?;
        }
        None => {
            println!("lambda,mean_abs_cos,std_abs_cos,n_pairs");
            for r in &rows {
                println!("{},{},{},{}", r.lambda, r.mean_abs_cos, r.std_abs_cos, r.n_pairs);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn compare_spaces(a: CompareArgs) -> Result<ExitCode> {
    let file = match &a.config {
        Some(path) => FlatConfig::load(path)?,
        None => FlatConfig::default(),
    };
    let pipeline = PipelineSpec::from_settings(&file.pipeline.overlay(&a.pipeline.settings()))?;
    let objective = pipeline.objective()?;
    let spec = SpaceComparisonSpec {
        radii: a.radii,
        pivots: a.pivots,
        candidates: a.candidates,
        seed: a.seed,
        use_gn: a.gn,
    };
    let (summary, rows) = run_space_comparison(objective.as_ref(), &pipeline.shape, &spec)?;
    fs::create_dir_all(&a.out)?;
    write_candidate_rows(&rows, &a.out.join("candidates.csv"))?;
    fs::write(a.out.join("report.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    println!("{:>8} {:>14} {:>14}", "radius", "vanilla", "compressed");
    for r in &summary.radii {
        println!("{:>8} {:>14.6} {:>14.6}", r.radius, r.vanilla_mean, r.compressed_mean);
    }
    println!("compressed >= vanilla at {}/{} radii", summary.compressed_wins, summary.radii.len());
    Ok(ExitCode::SUCCESS)
}

fn make_mixture(a: MixtureArgs) -> Result<ExitCode> {
    let dim = match a.dim.parse::<usize>() {
        Ok(d) => d,
        Err(_) => parse_shape(&a.dim)?.len(),
    };
    let model = MixtureModel::toy(dim, a.components, a.mean_scale, a.std, a.seed)?;
    ensure_parent(&a.out)?;
    model.save(&a.out)?;
    println!("wrote {} ({} components, dim {dim})", a.out.display(), a.components);
    Ok(ExitCode::SUCCESS)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}
