//! Scoring contract and its implementations.

mod external;
mod fk;
mod synthetic;

pub use external::{ExternalVerifier, Handshake, ProcessEndpoint, DEFAULT_TIMEOUT};
pub use fk::{score_fk, FkObjective, FkSign};
pub use synthetic::{context_seed, score_synthetic, Bowl, SyntheticLandscape};

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub sample: Vec<f64>,
    pub context: String,
    pub request_id: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifierScore {
    /// Higher is better.
    pub value: f64,
    pub verifier_name: String,
}

pub trait Verifier: Sync {
    fn name(&self) -> &str;
    fn score(&self, req: &ScoreRequest) -> Result<VerifierScore>;
}

impl<T: Verifier + ?Sized> Verifier for &T {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn score(&self, req: &ScoreRequest) -> Result<VerifierScore> {
        (**self).score(req)
    }
}

impl<T: Verifier + ?Sized + Send> Verifier for Box<T> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn score(&self, req: &ScoreRequest) -> Result<VerifierScore> {
        (**self).score(req)
    }
}
