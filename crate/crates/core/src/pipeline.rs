//! Noise -> sample -> score. The search algorithms only see [`Objective`].

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::flow::{integrate, FlowSchedule, GuidanceConfig, MixtureModel, NfeCounter};
use crate::noise::NoiseTensor;
use crate::verifier::{ScoreRequest, Verifier};

/// Score of one generated candidate and the compute it cost.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub score: f64,
    pub nfe: u64,
}

/// A black-box reward over initial noise. Higher is better.
pub trait Objective: Sync {
    fn evaluate(&self, noise: &NoiseTensor) -> Result<Evaluation>;

    /// NFE charged by one call to [`Objective::evaluate`].
    fn nfe_per_evaluation(&self) -> u64;
}

/// Maps initial noise to a generated sample.
pub trait Generator: Sync {
    fn generate(&self, noise: &NoiseTensor) -> Result<Vec<f64>>;
    fn nfe_per_sample(&self) -> u64;
}

/// The analytic mixture flow with a fixed schedule and guidance.
#[derive(Clone, Debug)]
pub struct ToyFlow {
    pub model: MixtureModel,
    pub schedule: FlowSchedule,
    pub guidance: GuidanceConfig,
    counter: NfeCounter,
}

impl ToyFlow {
    pub fn new(model: MixtureModel, schedule: FlowSchedule, guidance: GuidanceConfig) -> Result<Self> {
        if let Some(label) = &guidance.condition {
            if !model.labels().contains(&label.as_str()) {
                return Err(Error::Argument(format!("unknown class label {label:?}")));
            }
        }
        Ok(Self {
            model,
            schedule,
            guidance,
            counter: NfeCounter::new(),
        })
    }

    /// Instrumented count of every velocity evaluation made through this flow.
    pub fn counter(&self) -> &NfeCounter {
        &self.counter
    }

    fn check_dim(&self, noise: &NoiseTensor) -> Result<()> {
        if noise.values().len() != self.model.dim() {
            return Err(Error::Shape(format!(
                "noise has {} elements, flow dimension is {}",
                noise.values().len(),
                self.model.dim()
            )));
        }
        Ok(())
    }

    pub fn fk_log_weight(&self, noise: &NoiseTensor) -> Result<f64> {
        self.check_dim(noise)?;
        if self.guidance.condition.is_none() {
            return Err(Error::Argument("FK weight needs a condition label".into()));
        }
        Ok(integrate(&self.model, &self.schedule, &self.guidance, noise.values(), &self.counter)?.log_weight)
    }
}

impl Generator for ToyFlow {
    fn generate(&self, noise: &NoiseTensor) -> Result<Vec<f64>> {
        self.check_dim(noise)?;
        Ok(integrate(&self.model, &self.schedule, &self.guidance, noise.values(), &self.counter)?.sample)
    }

    fn nfe_per_sample(&self) -> u64 {
        self.schedule.steps as u64
    }
}

/// Passes the noise through untouched; one NFE per call. Useful for testing
/// search behaviour on a landscape defined directly over noise.
#[derive(Clone, Debug, Default)]
pub struct IdentityGenerator;

impl Generator for IdentityGenerator {
    fn generate(&self, noise: &NoiseTensor) -> Result<Vec<f64>> {
        Ok(noise.values().to_vec())
    }

    fn nfe_per_sample(&self) -> u64 {
        1
    }
}

/// Generator followed by a verifier scoring the sample under a fixed context.
pub struct GeneratedObjective<G, V> {
    pub generator: G,
    pub verifier: V,
    pub context: String,
    next_id: AtomicU64,
}

impl<G: Generator, V: Verifier> GeneratedObjective<G, V> {
    pub fn new(generator: G, verifier: V, context: impl Into<String>) -> Self {
        Self {
            generator,
            verifier,
            context: context.into(),
            next_id: AtomicU64::new(0),
        }
    }
}

impl<G: Generator, V: Verifier> Objective for GeneratedObjective<G, V> {
    fn evaluate(&self, noise: &NoiseTensor) -> Result<Evaluation> {
        let sample = self.generator.generate(noise)?;
        let req = ScoreRequest {
            sample,
            context: self.context.clone(),
            request_id: self.next_id.fetch_add(1, Ordering::Relaxed),
        };
        let score = self.verifier.score(&req)?;
        Ok(Evaluation {
            score: score.value,
            nfe: self.generator.nfe_per_sample(),
        })
    }

    fn nfe_per_evaluation(&self) -> u64 {
        self.generator.nfe_per_sample()
    }
}

impl<T: Objective + ?Sized> Objective for &T {
    fn evaluate(&self, noise: &NoiseTensor) -> Result<Evaluation> {
        (**self).evaluate(noise)
    }

    fn nfe_per_evaluation(&self) -> u64 {
        (**self).nfe_per_evaluation()
    }
}

impl<T: Objective + ?Sized + Send> Objective for Box<T> {
    fn evaluate(&self, noise: &NoiseTensor) -> Result<Evaluation> {
        (**self).evaluate(noise)
    }

    fn nfe_per_evaluation(&self) -> u64 {
        (**self).nfe_per_evaluation()
    }
}
