//! Flat key-value configuration. One TOML document holds both the search
//! knobs and the pipeline settings; keys are routed by name, and anything
//! unrecognised is rejected.

use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search::{Algorithm, FireflyMode, SearchConfig};

/// Search keys. Every field is optional so files and flags can be layered.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSettings {
    pub label: Option<String>,
    pub algorithm: Option<Algorithm>,
    pub candidates: Option<usize>,
    pub iterations: Option<usize>,
    pub lambda: Option<f64>,
    pub eta: Option<f64>,
    pub zeta: Option<f64>,
    pub beta0: Option<f64>,
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
    pub use_gn: Option<bool>,
    pub use_css: Option<bool>,
    pub use_ssr: Option<bool>,
    pub seed: Option<u64>,
    pub nfe_budget: Option<u64>,
    pub elitism: Option<bool>,
    pub reset_on_new_best: Option<bool>,
    pub reset_on_variance: Option<bool>,
    pub firefly_mode: Option<FireflyMode>,
    pub record_time: Option<bool>,
}

macro_rules! overlay_fields {
    ($base:expr, $top:expr, $($f:ident),*) => {
        SearchSettings { $($f: $top.$f.clone().or_else(|| $base.$f.clone())),* }
    };
}

impl SearchSettings {
    /// Values set in `top` win over values set here.
    pub fn overlay(&self, top: &SearchSettings) -> SearchSettings {
        overlay_fields!(
            self, top, label, algorithm, candidates, iterations, lambda, eta, zeta, beta0, gamma, alpha, use_gn,
            use_css, use_ssr, seed, nfe_budget, elitism, reset_on_new_best, reset_on_variance, firefly_mode,
            record_time
        )
    }

    /// Fills unset keys from the algorithm's defaults. Turning the compressed
    /// space off also turns reset off unless reset was set explicitly.
    pub fn resolve(&self) -> Result<SearchConfig> {
        let algorithm = self
            .algorithm
            .ok_or_else(|| Error::Config("`algorithm` is required (random, zero_order or firefly)".into()))?;
        let d = SearchConfig::defaults(algorithm);
        let use_css = self.use_css.unwrap_or(d.use_css);
        let cfg = SearchConfig {
            algorithm,
            candidates: self.candidates.unwrap_or(d.candidates),
            iterations: self.iterations.unwrap_or(d.iterations),
            lambda: self.lambda.unwrap_or(d.lambda),
            eta: self.eta.unwrap_or(d.eta),
            zeta: self.zeta.unwrap_or(d.zeta),
            beta0: self.beta0.unwrap_or(d.beta0),
            gamma: self.gamma.unwrap_or(d.gamma),
            alpha: self.alpha.unwrap_or(d.alpha),
            use_gn: self.use_gn.unwrap_or(d.use_gn),
            use_css,
            use_ssr: self.use_ssr.unwrap_or(d.use_ssr && use_css),
            seed: self.seed.unwrap_or(d.seed),
            nfe_budget: self.nfe_budget.or(d.nfe_budget),
            elitism: self.elitism.unwrap_or(d.elitism),
            reset_on_new_best: self.reset_on_new_best.unwrap_or(d.reset_on_new_best),
            reset_on_variance: self.reset_on_variance.unwrap_or(d.reset_on_variance),
            firefly_mode: self.firefly_mode.unwrap_or(d.firefly_mode),
            record_time: self.record_time.unwrap_or(d.record_time),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Pipeline keys: what generates samples and what scores them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSettings {
    /// `toy`, `trellis`, `gaussian_cube`, or `SxNxN` for a custom `(S, N, N)` tensor.
    pub shape: Option<String>,
    /// Mixture JSON file; the built-in toy mixture when absent.
    pub mixture: Option<PathBuf>,
    /// `synthetic`, `fk`, or `external:<command line>`.
    pub verifier: Option<String>,
    pub context: Option<String>,
    pub steps: Option<usize>,
    pub beta: Option<f64>,
    /// Class label to guide toward; `none` disables conditioning.
    pub condition: Option<String>,
    pub modes: Option<usize>,
    pub sharpness: Option<f64>,
    pub height_step: Option<f64>,
}

const PIPELINE_KEYS: &[&str] = &[
    "shape",
    "mixture",
    "verifier",
    "context",
    "steps",
    "beta",
    "condition",
    "modes",
    "sharpness",
    "height_step",
];

impl PipelineSettings {
    pub fn overlay(&self, top: &PipelineSettings) -> PipelineSettings {
        PipelineSettings {
            shape: top.shape.clone().or_else(|| self.shape.clone()),
            mixture: top.mixture.clone().or_else(|| self.mixture.clone()),
            verifier: top.verifier.clone().or_else(|| self.verifier.clone()),
            context: top.context.clone().or_else(|| self.context.clone()),
            steps: top.steps.or(self.steps),
            beta: top.beta.or(self.beta),
            condition: top.condition.clone().or_else(|| self.condition.clone()),
            modes: top.modes.or(self.modes),
            sharpness: top.sharpness.or(self.sharpness),
            height_step: top.height_step.or(self.height_step),
        }
    }
}

/// Contents of a flat config file for a single search.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlatConfig {
    pub pipeline: PipelineSettings,
    pub search: SearchSettings,
    pub out: Option<PathBuf>,
}

impl FlatConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text)?;
        let out = take::<PathBuf>(&mut table, "out")?;
        let (pipeline, search) = split(table)?;
        Ok(Self { pipeline, search, out })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Removes `key` from `table` and deserializes it, if present.
pub(crate) fn take<T: DeserializeOwned>(table: &mut toml::Table, key: &str) -> Result<Option<T>> {
    table
        .remove(key)
        .map(|v| v.try_into().map_err(|e: toml::de::Error| Error::Config(format!("`{key}`: {e}"))))
        .transpose()
}

/// Routes the remaining keys to the pipeline or search settings.
pub(crate) fn split(table: toml::Table) -> Result<(PipelineSettings, SearchSettings)> {
    let (pipe, search): (toml::Table, toml::Table) =
        table.into_iter().partition(|(k, _)| PIPELINE_KEYS.contains(&k.as_str()));
    Ok((into(pipe)?, into(search)?))
}

fn into<T: DeserializeOwned>(table: toml::Table) -> Result<T> {
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
}
