use serde::{Deserialize, Serialize};

use super::VerifierScore;
use crate::error::Result;
use crate::flow::{fk_log_weight, FlowSchedule, GuidanceConfig, MixtureModel, NfeCounter};
use crate::noise::NoiseTensor;
use crate::pipeline::{Evaluation, Objective, ToyFlow};

/// Which direction of the FK log-weight counts as better.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FkSign {
    /// Score `-w`: less conditional/unconditional disagreement is better.
    #[default]
    Negative,
    Positive,
}

impl FkSign {
    fn apply(self, w: f64) -> f64 {
        match self {
            FkSign::Negative => -w,
            FkSign::Positive => w,
        }
    }
}

/// Self-supervised score of the trajectory started at `x_init`: `-w` by default.
pub fn score_fk(
    model: &MixtureModel,
    schedule: &FlowSchedule,
    g: &GuidanceConfig,
    x_init: &NoiseTensor,
) -> Result<VerifierScore> {
    let w = fk_log_weight(model, schedule, g, x_init.values(), &NfeCounter::new())?;
    Ok(VerifierScore {
        value: FkSign::Negative.apply(w),
        verifier_name: "fk".into(),
    })
}

/// FK weight used directly as the search objective. The weight accumulates
/// along the sampling trajectory, so one evaluation costs one sampling pass.
#[derive(Clone, Debug)]
pub struct FkObjective {
    pub flow: ToyFlow,
    pub sign: FkSign,
}

impl Objective for FkObjective {
    fn evaluate(&self, noise: &NoiseTensor) -> Result<Evaluation> {
        let w = self.flow.fk_log_weight(noise)?;
        Ok(Evaluation {
            score: self.sign.apply(w),
            nfe: self.flow.schedule.steps as u64,
        })
    }

    fn nfe_per_evaluation(&self) -> u64 {
        self.flow.schedule.steps as u64
    }
}
