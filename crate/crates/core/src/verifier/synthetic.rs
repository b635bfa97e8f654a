use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ScoreRequest, Verifier, VerifierScore};
use crate::error::{Error, Result};
use crate::noise::{rng_from_seed, sample_standard_noise, standard_normal, TensorShape};
use crate::pipeline::Generator;
use crate::stats::squared_distance;

/// One quadratic bowl: `height - sharpness * |sample - target|^2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bowl {
    pub target: Vec<f64>,
    pub sharpness: f64,
    #[serde(default)]
    pub height: f64,
}

impl Bowl {
    pub fn new(target: Vec<f64>, sharpness: f64) -> Result<Self> {
        if !(sharpness > 0.0) {
            return Err(Error::Argument(format!("sharpness must be positive, got {sharpness}")));
        }
        Ok(Self {
            target,
            sharpness,
            height: 0.0,
        })
    }

    fn value(&self, sample: &[f64]) -> f64 {
        self.height - self.sharpness * squared_distance(sample, &self.target)
    }
}

/// Negative squared distance to the target point.
pub fn score_synthetic(bowl: &Bowl, req: &ScoreRequest) -> Result<VerifierScore> {
    if req.sample.len() != bowl.target.len() {
        return Err(Error::Shape(format!(
            "sample has {} entries, landscape target has {}",
            req.sample.len(),
            bowl.target.len()
        )));
    }
    Ok(VerifierScore {
        value: -bowl.sharpness * squared_distance(&req.sample, &bowl.target),
        verifier_name: "synthetic".into(),
    })
}

/// Upper envelope of one or more bowls. A single bowl with height 0 is the
/// canonical landscape; several bowls with staggered heights give local optima.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLandscape {
    pub bowls: Vec<Bowl>,
}

/// Stable 64-bit seed derived from a context string.
pub fn context_seed(context: &str) -> u64 {
    let digest = Sha256::digest(context.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

impl SyntheticLandscape {
    pub fn single(target: Vec<f64>, sharpness: f64) -> Result<Self> {
        Ok(Self {
            bowls: vec![Bowl::new(target, sharpness)?],
        })
    }

    /// Bowls centred on samples the generator can actually produce: reference
    /// noises are drawn from a stream keyed by `context` and pushed through
    /// `generator`. Mode `m` sits at height `-m * height_step`, so mode 0 is
    /// the global optimum and the others are local traps.
    pub fn realizable<G: Generator + ?Sized>(
        context: &str,
        generator: &G,
        shape: &TensorShape,
        modes: usize,
        sharpness: f64,
        height_step: f64,
    ) -> Result<Self> {
        if modes == 0 {
            return Err(Error::Argument("landscape needs at least one mode".into()));
        }
        let mut rng = rng_from_seed(context_seed(context));
        let mut bowls = Vec::with_capacity(modes);
        for m in 0..modes {
            let reference = sample_standard_noise(shape, &mut rng);
            let mut bowl = Bowl::new(generator.generate(&reference)?, sharpness)?;
            bowl.height = -(m as f64) * height_step;
            bowls.push(bowl);
        }
        Ok(Self { bowls })
    }

    /// Bowls at random points `N(0, spread^2 I)` keyed by `context`.
    pub fn random(context: &str, dim: usize, modes: usize, spread: f64, sharpness: f64, height_step: f64) -> Result<Self> {
        let mut rng = rng_from_seed(context_seed(context));
        let bowls = (0..modes)
            .map(|m| {
                let target = (0..dim).map(|_| spread * standard_normal(&mut rng)).collect();
                Bowl::new(target, sharpness).map(|mut b| {
                    b.height = -(m as f64) * height_step;
                    b
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if bowls.is_empty() {
            return Err(Error::Argument("landscape needs at least one mode".into()));
        }
        Ok(Self { bowls })
    }

    pub fn dim(&self) -> usize {
        self.bowls[0].target.len()
    }

    pub fn value(&self, sample: &[f64]) -> Result<f64> {
        if sample.len() != self.dim() {
            return Err(Error::Shape(format!(
                "sample has {} entries, landscape has {}",
                sample.len(),
                self.dim()
            )));
        }
        Ok(self
            .bowls
            .iter()
            .map(|b| b.value(sample))
            .fold(f64::NEG_INFINITY, f64::max))
    }
}

impl Verifier for SyntheticLandscape {
    fn name(&self) -> &str {
        "synthetic"
    }

    fn score(&self, req: &ScoreRequest) -> Result<VerifierScore> {
        Ok(VerifierScore {
            value: self.value(&req.sample)?,
            verifier_name: "synthetic".into(),
        })
    }
}
