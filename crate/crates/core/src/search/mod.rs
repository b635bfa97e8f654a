//! Random, zero-order and firefly search over initial noise, each in a
//! vanilla form (operating on the full tensor) and a compressed form
//! (operating on singular values with frozen singular vectors).

mod firefly;
mod random;
mod trace;
mod zero_order;

pub use trace::{BestNoise, SearchTrace, TraceHeader, TraceRecord};

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{gaussian_normalize, NoiseTensor, NormalizeMode, TensorShape};
use crate::pipeline::{Evaluation, Objective};
use crate::singular::{DEFAULT_ETA, DEFAULT_ZETA};
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Random,
    #[serde(alias = "zero-order")]
    ZeroOrder,
    Firefly,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Algorithm::Random),
            "zero_order" | "zero-order" => Ok(Algorithm::ZeroOrder),
            "firefly" | "heuristic" => Ok(Algorithm::Firefly),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Firefly pair-update semantics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FireflyMode {
    /// Ascending `(i, j)` with immediate position and brightness updates.
    #[default]
    Sequential,
    /// Each firefly moves against the sweep-start snapshot; fireflies run in parallel.
    Snapshot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub algorithm: Algorithm,
    /// Candidates per iteration (random: total draws; firefly: swarm size).
    pub candidates: usize,
    pub iterations: usize,
    /// Zero-order perturbation scale, in whichever space is searched.
    pub lambda: f64,
    /// Perturbation scale for sampling singular values (random and firefly).
    pub eta: f64,
    /// Reset threshold on candidate-score variance.
    pub zeta: f64,
    pub beta0: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub use_gn: bool,
    pub use_css: bool,
    pub use_ssr: bool,
    pub seed: u64,
    pub nfe_budget: Option<u64>,
    /// Keep the zero-order pivot when no candidate beats it.
    pub elitism: bool,
    /// Compressed random search: re-anchor the space on every new best.
    pub reset_on_new_best: bool,
    /// Compressed random search: also reset when the last few scores collapse.
    pub reset_on_variance: bool,
    pub firefly_mode: FireflyMode,
    /// Write wall-clock times into the trace (breaks byte-identical reruns).
    pub record_time: bool,
}

/// Window of recent scores used by the random-search variance trigger.
pub const RANDOM_VARIANCE_WINDOW: usize = 10;

impl SearchConfig {
    /// Defaults per algorithm, sized so `iterations * candidates == 1000`.
    pub fn defaults(algorithm: Algorithm) -> Self {
        let (candidates, iterations) = match algorithm {
            Algorithm::Random => (1000, 1),
            Algorithm::ZeroOrder => (5, 200),
            Algorithm::Firefly => (10, 100),
        };
        Self {
            algorithm,
            candidates,
            iterations,
            lambda: 2.0,
            eta: DEFAULT_ETA,
            zeta: DEFAULT_ZETA,
            beta0: 1.0,
            gamma: 1e-5,
            alpha: 0.97,
            use_gn: true,
            use_css: true,
            use_ssr: true,
            seed: 0,
            nfe_budget: None,
            elitism: true,
            reset_on_new_best: true,
            reset_on_variance: false,
            firefly_mode: FireflyMode::Sequential,
            record_time: false,
        }
    }

    /// Plain algorithm without normalization or compression.
    pub fn vanilla(algorithm: Algorithm) -> Self {
        Self {
            use_gn: false,
            use_css: false,
            use_ssr: false,
            ..Self::defaults(algorithm)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.candidates == 0 {
            return bad("candidates must be >= 1".into());
        }
        if self.iterations == 0 {
            return bad("iterations must be >= 1".into());
        }
        if !(self.lambda >= 0.0) || !(self.eta >= 0.0) || !(self.alpha >= 0.0) {
            return bad("lambda, eta and alpha must be >= 0".into());
        }
        if !(self.zeta > 0.0) {
            return bad(format!("zeta must be > 0, got {}", self.zeta));
        }
        if !(self.beta0 >= 0.0) || !(self.gamma >= 0.0) {
            return bad("beta0 and gamma must be >= 0".into());
        }
        if self.use_ssr && !self.use_css {
            return bad("singular space reset requires the compressed search space".into());
        }
        Ok(())
    }
}

/// Index of the highest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::Argument("cannot select from an empty candidate list".into()));
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] || (scores[best].is_nan() && !s.is_nan()) {
            best = i;
        }
    }
    Ok(best)
}

/// Highest-scoring candidate, lowest index on ties.
pub fn select_best<T: Clone>(candidates: &[(T, f64)]) -> Result<(T, f64)> {
    let scores: Vec<f64> = candidates.iter().map(|(_, s)| *s).collect();
    let i = argmax(&scores)?;
    Ok(candidates[i].clone())
}

/// Firefly attractiveness `beta0 * exp(-gamma * r^2)`.
pub fn attractiveness(beta0: f64, gamma: f64, r_squared: f64) -> f64 {
    beta0 * (-gamma * r_squared).exp()
}

/// Runs the configured algorithm until its iterations or the NFE budget run out.
pub fn run_search(cfg: &SearchConfig, shape: &TensorShape, objective: &dyn Objective) -> Result<SearchTrace> {
    cfg.validate()?;
    let mut tracker = Tracker::new(cfg, shape, objective);
    match cfg.algorithm {
        Algorithm::Random if cfg.use_css => random::run_compressed(cfg, shape, &mut tracker)?,
        Algorithm::Random => random::run_vanilla(cfg, shape, &mut tracker)?,
        Algorithm::ZeroOrder => zero_order::run(cfg, shape, &mut tracker)?,
        Algorithm::Firefly => firefly::run(cfg, shape, &mut tracker)?,
    }
    tracker.finish()
}

pub fn run_random(cfg: &SearchConfig, shape: &TensorShape, objective: &dyn Objective) -> Result<SearchTrace> {
    expect(cfg, Algorithm::Random)?;
    run_search(cfg, shape, objective)
}

pub fn run_zero_order(cfg: &SearchConfig, shape: &TensorShape, objective: &dyn Objective) -> Result<SearchTrace> {
    expect(cfg, Algorithm::ZeroOrder)?;
    run_search(cfg, shape, objective)
}

pub fn run_firefly(cfg: &SearchConfig, shape: &TensorShape, objective: &dyn Objective) -> Result<SearchTrace> {
    expect(cfg, Algorithm::Firefly)?;
    run_search(cfg, shape, objective)
}

fn expect(cfg: &SearchConfig, algorithm: Algorithm) -> Result<()> {
    if cfg.algorithm != algorithm {
        return Err(Error::Config(format!(
            "expected algorithm {algorithm:?}, config says {:?}",
            cfg.algorithm
        )));
    }
    Ok(())
}

pub(crate) fn maybe_normalize(x: NoiseTensor, use_gn: bool) -> Result<NoiseTensor> {
    if use_gn {
        gaussian_normalize(&x, NormalizeMode::Std)
    } else {
        Ok(x)
    }
}

/// Budget-aware evaluation, best-so-far tracking and trace recording.
pub(crate) struct Tracker<'a> {
    objective: &'a dyn Objective,
    budget: Option<u64>,
    record_time: bool,
    nfe: u64,
    evaluations: u64,
    exhausted: bool,
    best: Option<(f64, NoiseTensor)>,
    records: Vec<TraceRecord>,
    header: TraceHeader,
    start: Instant,
    // per-iteration accumulators
    pending_std: Vec<f64>,
    last_recorded_nfe: u64,
}

impl<'a> Tracker<'a> {
    fn new(cfg: &SearchConfig, shape: &TensorShape, objective: &'a dyn Objective) -> Self {
        Self {
            objective,
            budget: cfg.nfe_budget,
            record_time: cfg.record_time,
            nfe: 0,
            evaluations: 0,
            exhausted: false,
            best: None,
            records: Vec::new(),
            header: TraceHeader {
                config: cfg.clone(),
                shape: shape.clone(),
                seed: cfg.seed,
            },
            start: Instant::now(),
            pending_std: Vec::new(),
            last_recorded_nfe: 0,
        }
    }

    pub fn exhausted(&self) -> bool {
        self.exhausted
    }

    /// How many of `wanted` evaluations the remaining budget allows.
    fn affordable(&mut self, wanted: usize) -> usize {
        let Some(budget) = self.budget else { return wanted };
        let per = self.objective.nfe_per_evaluation().max(1);
        let left = budget.saturating_sub(self.nfe) / per;
        let n = wanted.min(left as usize);
        if n < wanted {
            self.exhausted = true;
        }
        n
    }

    /// Evaluates as many of `noises` as the budget allows, in parallel, without
    /// touching the best-so-far state. Callers must [`Tracker::absorb`] each result.
    pub fn compute(&mut self, noises: &[NoiseTensor]) -> Result<Vec<Evaluation>> {
        let n = self.affordable(noises.len());
        let objective = self.objective;
        noises[..n].par_iter().map(|x| objective.evaluate(x)).collect()
    }

    /// Evaluates a prefix of `noises` (as far as the budget allows) and
    /// returns one score per evaluated tensor.
    pub fn evaluate_batch(&mut self, noises: &[NoiseTensor]) -> Result<Vec<f64>> {
        let evals = self.compute(noises)?;
        let mut scores = Vec::with_capacity(evals.len());
        for (x, e) in noises.iter().zip(evals) {
            self.absorb(x, e)?;
            scores.push(e.score);
        }
        Ok(scores)
    }

    pub fn evaluate_one(&mut self, noise: &NoiseTensor) -> Result<Option<f64>> {
        if self.affordable(1) == 0 {
            return Ok(None);
        }
        let e = self.objective.evaluate(noise)?;
        self.absorb(noise, e)?;
        Ok(Some(e.score))
    }

    pub fn absorb(&mut self, x: &NoiseTensor, e: Evaluation) -> Result<()> {
        let Evaluation { score, nfe } = e;
        if !score.is_finite() {
            return Err(Error::Numeric(format!("objective returned non-finite score {score}")));
        }
        self.nfe += nfe;
        self.evaluations += 1;
        self.pending_std.push(x.population_std());
        let better = match &self.best {
            None => true,
            Some((b, _)) => score > *b,
        };
        if better {
            self.best = Some((score, x.clone()));
        }
        Ok(())
    }

    /// Whether `evaluations` more calls fit in the budget.
    pub fn can_afford(&self, evaluations: u64) -> bool {
        match self.budget {
            None => true,
            Some(b) => self.nfe + evaluations * self.objective.nfe_per_evaluation() <= b,
        }
    }

    pub fn objective(&self) -> &'a dyn Objective {
        self.objective
    }

    pub fn best_score(&self) -> Option<f64> {
        self.best.as_ref().map(|(s, _)| *s)
    }

    pub fn best_noise(&self) -> Option<&NoiseTensor> {
        self.best.as_ref().map(|(_, x)| x)
    }

    /// Closes an iteration. Skipped when nothing was evaluated since the last record.
    pub fn record(&mut self, iter: usize, score_var: f64, reset: bool) {
        if self.nfe == self.last_recorded_nfe {
            return;
        }
        let noise_std = stats::mean(&self.pending_std);
        self.pending_std.clear();
        self.last_recorded_nfe = self.nfe;
        let elapsed_ms = if self.record_time {
            self.start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        self.records.push(TraceRecord {
            iter,
            best_score: self.best_score().unwrap_or(f64::NEG_INFINITY),
            nfe: self.nfe,
            score_var,
            reset,
            elapsed_ms,
            noise_std,
        });
    }

    fn finish(self) -> Result<SearchTrace> {
        let (score, noise) = self
            .best
            .ok_or_else(|| Error::Config("budget allows no evaluation at all".into()))?;
        Ok(SearchTrace {
            header: self.header,
            records: self.records,
            best: BestNoise {
                best_score: score,
                evaluations: self.evaluations,
                nfe: self.nfe,
                best_noise: noise,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::rng_from_seed;
    use rand::Rng;

    #[test]
    fn argmax_and_ties() {
        assert_eq!(argmax(&[0.2, 0.9, 0.4]).unwrap(), 1);
        assert_eq!(argmax(&[0.7, 0.7]).unwrap(), 0);
        assert!(argmax(&[]).is_err());
        let picked = select_best(&[("a", 0.7), ("b", 0.7), ("c", 0.1)]).unwrap();
        assert_eq!(picked, ("a", 0.7));
    }

    #[test]
    fn argmax_matches_exhaustive_scan() {
        let mut rng = rng_from_seed(4);
        let scores: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let mut best = 0;
        for i in 0..scores.len() {
            if scores[i] > scores[best] {
                best = i;
            }
        }
        assert_eq!(argmax(&scores).unwrap(), best);
    }

    #[test]
    fn attractiveness_values() {
        assert_eq!(attractiveness(1.0, 1e-5, 0.0), 1.0);
        assert!((attractiveness(1.0, 1e-5, 1e5) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((attractiveness(1.0, 1e-5, 1e5) - 0.367879).abs() < 1e-6);
        // fireflies at [0,0] and [3,4]
        let r2: f64 = [3.0f64, 4.0].iter().map(|x| x * x).sum();
        assert_eq!(r2.sqrt(), 5.0);
    }

    #[test]
    fn default_hyperparameters() {
        let zo = SearchConfig::defaults(Algorithm::ZeroOrder);
        assert_eq!((zo.candidates, zo.lambda), (5, 2.0));
        let ff = SearchConfig::defaults(Algorithm::Firefly);
        assert_eq!((ff.candidates, ff.beta0, ff.gamma, ff.alpha), (10, 1.0, 0.00001, 0.97));
        assert_eq!(ff.zeta, 0.001);
        for a in [Algorithm::Random, Algorithm::ZeroOrder, Algorithm::Firefly] {
            let c = SearchConfig::defaults(a);
            assert_eq!(c.candidates * c.iterations, 1000);
        }
    }

    #[test]
    fn validation() {
        let mut c = SearchConfig::defaults(Algorithm::ZeroOrder);
        c.candidates = 0;
        assert!(c.validate().is_err());
        let mut c = SearchConfig::defaults(Algorithm::ZeroOrder);
        c.zeta = 0.0;
        assert!(c.validate().is_err());
        let mut c = SearchConfig::vanilla(Algorithm::ZeroOrder);
        c.use_ssr = true;
        assert!(c.validate().is_err());
        assert!("simplex".parse::<Algorithm>().is_err());
        assert_eq!("zero_order".parse::<Algorithm>().unwrap(), Algorithm::ZeroOrder);
    }
}
