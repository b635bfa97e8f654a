//! Experiment grids: every (config, seed) cell runs one search; the results
//! land in per-cell traces, a curves CSV and a summary report that can be
//! rebuilt from the traces alone.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::settings::{split, take, PipelineSettings, SearchSettings};
use super::toy::PipelineSpec;
use crate::error::{Error, Result};
use crate::pipeline::Objective;
use crate::search::{run_search, SearchConfig, SearchTrace};
use crate::stats;

pub const REPORT_FILE: &str = "report.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const TRACE_DIR: &str = "traces";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledConfig {
    pub label: String,
    pub config: SearchConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub pipeline: PipelineSpec,
    pub configs: Vec<LabeledConfig>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub jobs: usize,
    /// Score used for the NFE-to-threshold column of the report.
    pub threshold: Option<f64>,
}

/// An experiment file before defaults and overrides are applied.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentFile {
    pub name: Option<String>,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub threshold: Option<f64>,
    pub pipeline: PipelineSettings,
    /// Search keys given at the top level; they apply to every config.
    pub defaults: SearchSettings,
    pub configs: Vec<SearchSettings>,
}

impl ExperimentFile {
    /// Top-level `name`, `seeds`, `out`, `jobs`, `threshold`, any pipeline
    /// key, any search key, and a `[[configs]]` array of search keys with a `label`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text)?;
        let name = take(&mut table, "name")?;
        let seeds = take(&mut table, "seeds")?.unwrap_or_default();
        let out = take(&mut table, "out")?;
        let jobs = take(&mut table, "jobs")?;
        let threshold = take(&mut table, "threshold")?;
        let configs = take(&mut table, "configs")?.unwrap_or_default();
        let (pipeline, defaults) = split(table)?;
        Ok(Self {
            name,
            seeds,
            out,
            jobs,
            threshold,
            pipeline,
            defaults,
            configs,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Resolves every config as file defaults, then the entry, then `search`
    /// overrides; pipeline overrides likewise win over the file.
    pub fn resolve(&self, pipeline: &PipelineSettings, search: &SearchSettings) -> Result<ExperimentSpec> {
        let configs = self
            .configs
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let merged = self.defaults.overlay(e).overlay(search);
                let label = merged.label.clone().unwrap_or_else(|| format!("config-{i}"));
                Ok(LabeledConfig {
                    label,
                    config: merged.resolve()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = ExperimentSpec {
            name: self.name.clone().unwrap_or_else(|| "experiment".into()),
            pipeline: PipelineSpec::from_settings(&self.pipeline.overlay(pipeline))?,
            configs,
            seeds: self.seeds.clone(),
            out: self
                .out
                .clone()
                .ok_or_else(|| Error::Config("experiment needs an `out` directory".into()))?,
            jobs: self.jobs.unwrap_or(1),
            threshold: self.threshold,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self> {
        ExperimentFile::parse(text)?.resolve(&PipelineSettings::default(), &SearchSettings::default())
    }

    pub fn load(path: &Path) -> Result<Self> {
        ExperimentFile::load(path)?.resolve(&PipelineSettings::default(), &SearchSettings::default())
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("experiment needs at least one seed".into()));
        }
        if self.configs.is_empty() {
            return Err(Error::Config("experiment needs at least one [[configs]] entry".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be >= 1".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.configs {
            let ok = !c.label.is_empty()
                && c.label.chars().all(|ch| ch.is_ascii_alphanumeric() || "-_.".contains(ch));
            if !ok {
                return Err(Error::Config(format!(
                    "config label {:?} must be non-empty and use only letters, digits, '-', '_' or '.'",
                    c.label
                )));
            }
            if !seen.insert(&c.label) {
                return Err(Error::Config(format!("duplicate config label {:?}", c.label)));
            }
            c.config.validate()?;
        }
        Ok(())
    }
}

pub fn trace_path(out: &Path, label: &str, seed: u64) -> PathBuf {
    out.join(TRACE_DIR).join(format!("{label}-seed{seed}.jsonl"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub label: String,
    /// Seeds whose cell finished, in the order the experiment lists them.
    pub seeds: Vec<u64>,
    pub final_scores: Vec<f64>,
    pub total_nfe: Vec<u64>,
    pub resets: Vec<usize>,
    /// First cumulative NFE at which the best score reached the threshold.
    pub nfe_to_threshold: Vec<Option<u64>>,
    /// Statistics of `final_scores`; absent when no cell finished.
    pub median: Option<f64>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

/// How often `a` finished ahead of `b` on the same seed. Ties count half.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub a: String,
    pub b: String,
    pub pairs: usize,
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
    /// Absent when the two configs share no finished seed.
    pub win_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub label: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub name: String,
    pub threshold: Option<f64>,
    pub configs: Vec<ConfigSummary>,
    pub paired: Vec<PairedComparison>,
    pub failures: Vec<CellFailure>,
}

impl SummaryReport {
    pub fn config(&self, label: &str) -> Option<&ConfigSummary> {
        self.configs.iter().find(|c| c.label == label)
    }

    pub fn paired(&self, a: &str, b: &str) -> Option<&PairedComparison> {
        self.paired.iter().find(|p| p.a == a && p.b == b)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Aggregates finished traces. `cells` maps each label to `(seed, trace)`
/// pairs; `labels` fixes the report order.
pub fn summarize(
    name: &str,
    threshold: Option<f64>,
    labels: &[String],
    cells: &BTreeMap<String, Vec<(u64, SearchTrace)>>,
    failures: Vec<CellFailure>,
) -> SummaryReport {
    let empty = Vec::new();
    let configs: Vec<ConfigSummary> = labels
        .iter()
        .map(|label| {
            let runs = cells.get(label).unwrap_or(&empty);
            let final_scores: Vec<f64> = runs.iter().map(|(_, t)| t.final_score()).collect();
            ConfigSummary {
                label: label.clone(),
                seeds: runs.iter().map(|(s, _)| *s).collect(),
                total_nfe: runs.iter().map(|(_, t)| t.total_nfe()).collect(),
                resets: runs.iter().map(|(_, t)| t.reset_count()).collect(),
                nfe_to_threshold: runs
                    .iter()
                    .map(|(_, t)| threshold.and_then(|th| nfe_to_reach(t, th)))
                    .collect(),
                median: nonempty(&final_scores, stats::median),
                mean: nonempty(&final_scores, stats::mean),
                std: nonempty(&final_scores, stats::population_std),
                final_scores,
            }
        })
        .collect();

    let mut paired = Vec::new();
    for (i, a) in configs.iter().enumerate() {
        for b in &configs[i + 1..] {
            paired.push(compare(a, b));
        }
    }
    SummaryReport {
        name: name.to_string(),
        threshold,
        configs,
        paired,
        failures,
    }
}

fn nonempty(xs: &[f64], f: fn(&[f64]) -> f64) -> Option<f64> {
    (!xs.is_empty()).then(|| f(xs))
}

fn nfe_to_reach(trace: &SearchTrace, threshold: f64) -> Option<u64> {
    trace.records.iter().find(|r| r.best_score >= threshold).map(|r| r.nfe)
}

fn compare(a: &ConfigSummary, b: &ConfigSummary) -> PairedComparison {
    let (mut wins, mut ties, mut losses) = (0, 0, 0);
    for (seed, sa) in a.seeds.iter().zip(&a.final_scores) {
        let Some(j) = b.seeds.iter().position(|s| s == seed) else { continue };
        let sb = b.final_scores[j];
        if sa > &sb {
            wins += 1;
        } else if sa < &sb {
            losses += 1;
        } else {
            ties += 1;
        }
    }
    let pairs = wins + ties + losses;
    PairedComparison {
        a: a.label.clone(),
        b: b.label.clone(),
        pairs,
        wins,
        ties,
        losses,
        win_rate: (pairs > 0).then(|| (wins as f64 + 0.5 * ties as f64) / pairs as f64),
    }
}

/// Runs every cell against a shared objective and writes the artifacts.
pub fn run_experiment_with(spec: &ExperimentSpec, objective: &dyn Objective) -> Result<SummaryReport> {
    spec.validate()?;
    fs::create_dir_all(spec.out.join(TRACE_DIR))?;
    let cells: Vec<(&LabeledConfig, u64)> = spec
        .configs
        .iter()
        .flat_map(|c| spec.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    let results: Vec<Result<SearchTrace>> = pool.install(|| {
        cells
            .par_iter()
            .map(|(c, seed)| {
                // Paired comparisons rely on every config drawing the same
                // initial noise for a given seed.
                let cfg = SearchConfig {
                    seed: *seed,
                    ..c.config.clone()
                };
                let trace = run_search(&cfg, &spec.pipeline.shape, objective)?;
                trace.save(&trace_path(&spec.out, &c.label, *seed))?;
                log::info!("{} seed {}: best {:.6} at {} NFE", c.label, seed, trace.final_score(), trace.total_nfe());
                Ok(trace)
            })
            .collect()
    });

    let mut finished: BTreeMap<String, Vec<(u64, SearchTrace)>> = BTreeMap::new();
    let mut failures = Vec::new();
    for ((c, seed), r) in cells.iter().zip(results) {
        match r {
            Ok(t) => finished.entry(c.label.clone()).or_default().push((*seed, t)),
            Err(e) => {
                log::error!("{} seed {} failed: {e}", c.label, seed);
                failures.push(CellFailure {
                    label: c.label.clone(),
                    seed: *seed,
                    error: e.to_string(),
                })
            }
        }
    }
    let labels: Vec<String> = spec.configs.iter().map(|c| c.label.clone()).collect();
    write_curves(&spec.out.join(CURVES_FILE), &labels, &finished)?;
    let report = summarize(&spec.name, spec.threshold, &labels, &finished, failures);
    fs::write(spec.out.join(REPORT_FILE), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}

/// Builds the experiment pipeline and runs the grid.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<SummaryReport> {
    let objective = spec.pipeline.objective()?;
    run_experiment_with(spec, objective.as_ref())
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub config: String,
    pub seed: u64,
    pub nfe: u64,
    pub best_score: f64,
}

fn curve_rows(labels: &[String], cells: &BTreeMap<String, Vec<(u64, SearchTrace)>>) -> Vec<CurveRow> {
    let mut rows = Vec::new();
    for label in labels {
        for (seed, t) in cells.get(label).into_iter().flatten() {
            rows.extend(t.records.iter().map(|r| CurveRow {
                config: label.clone(),
                seed: *seed,
                nfe: r.nfe,
                best_score: r.best_score,
            }));
        }
    }
    rows
}

fn write_curves(path: &Path, labels: &[String], cells: &BTreeMap<String, Vec<(u64, SearchTrace)>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in curve_rows(labels, cells) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_curves(path: &Path) -> Result<Vec<CurveRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Rebuilds the report and curves of the experiment in `out` from its trace
/// files and checks that both match what was written.
pub fn audit_experiment(out: &Path) -> Result<SummaryReport> {
    let report = SummaryReport::load(&out.join(REPORT_FILE))?;
    let labels: Vec<String> = report.configs.iter().map(|c| c.label.clone()).collect();
    let mut cells: BTreeMap<String, Vec<(u64, SearchTrace)>> = BTreeMap::new();
    for c in &report.configs {
        for &seed in &c.seeds {
            let trace = SearchTrace::load(&trace_path(out, &c.label, seed))?;
            cells.entry(c.label.clone()).or_default().push((seed, trace));
        }
    }
    let rebuilt = summarize(&report.name, report.threshold, &labels, &cells, report.failures.clone());
    // NaN never equals itself; compare the serialized forms instead.
    if serde_json::to_string(&rebuilt)? != serde_json::to_string(&report)? {
        return Err(Error::Audit("report does not match the trace files".into()));
    }
    let curves = read_curves(&out.join(CURVES_FILE))?;
    if curves != curve_rows(&labels, &cells) {
        return Err(Error::Audit("curves.csv does not match the trace files".into()));
    }
    Ok(rebuilt)
}
