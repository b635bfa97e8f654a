//! The standard desk-scale pipeline: analytic mixture flow, guidance, and a
//! verifier chosen by name.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::settings::PipelineSettings;
use crate::error::{Error, Result};
use crate::flow::{FlowSchedule, GuidanceConfig, MixtureModel};
use crate::noise::TensorShape;
use crate::pipeline::{GeneratedObjective, Objective, ToyFlow};
use crate::verifier::{ExternalVerifier, FkObjective, FkSign, ProcessEndpoint, SyntheticLandscape};

/// Built-in mixture used when no mixture file is given.
pub const TOY_COMPONENTS: usize = 4;
pub const TOY_MEAN_SCALE: f64 = 1.0;
pub const TOY_COMPONENT_STD: f64 = 0.5;
pub const TOY_MIXTURE_SEED: u64 = 0;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum VerifierChoice {
    Synthetic,
    Fk,
    /// Command line of a child process speaking the line protocol.
    External(String),
}

impl FromStr for VerifierChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(Self::Synthetic),
            "fk" => Ok(Self::Fk),
            _ => match s.strip_prefix("external:") {
                Some(cmd) if !cmd.trim().is_empty() => Ok(Self::External(cmd.trim().to_string())),
                _ => Err(Error::Config(format!(
                    "verifier must be synthetic, fk or external:<command>, got {s:?}"
                ))),
            },
        }
    }
}

impl fmt::Display for VerifierChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Synthetic => f.write_str("synthetic"),
            Self::Fk => f.write_str("fk"),
            Self::External(cmd) => write!(f, "external:{cmd}"),
        }
    }
}

impl TryFrom<String> for VerifierChoice {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<VerifierChoice> for String {
    fn from(v: VerifierChoice) -> String {
        v.to_string()
    }
}

/// `toy`, `trellis`, `gaussian_cube`, or `SxNxN`.
pub fn parse_shape(s: &str) -> Result<TensorShape> {
    match s {
        "toy" => Ok(TensorShape::toy()),
        "trellis" => Ok(TensorShape::trellis()),
        "gaussian_cube" | "gaussiancube" => Ok(TensorShape::gaussian_cube()),
        _ => {
            let parts: Vec<usize> = s
                .split('x')
                .map(|p| p.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Config(format!("cannot parse shape {s:?}")))?;
            match parts[..] {
                [slices, n, m] if n == m => TensorShape::new(parts.clone(), slices, n),
                _ => Err(Error::Config(format!(
                    "custom shape must be SxNxN (square slices), got {s:?}"
                ))),
            }
        }
    }
}

/// Multi-modal synthetic landscape parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeSpec {
    pub modes: usize,
    pub sharpness: f64,
    pub height_step: f64,
}

impl LandscapeSpec {
    /// Scores of order one for samples of dimension `dim`.
    pub fn for_dim(dim: usize) -> Self {
        Self {
            modes: 4,
            sharpness: 1.0 / dim as f64,
            height_step: 0.1,
        }
    }
}

/// A fully resolved pipeline description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub shape: TensorShape,
    pub mixture: Option<PathBuf>,
    pub verifier: VerifierChoice,
    pub context: String,
    pub steps: usize,
    pub beta: f64,
    pub condition: Option<String>,
    pub landscape: LandscapeSpec,
}

impl Default for PipelineSpec {
    fn default() -> Self {
        let shape = TensorShape::toy();
        Self {
            landscape: LandscapeSpec::for_dim(shape.len()),
            shape,
            mixture: None,
            verifier: VerifierChoice::Synthetic,
            context: "a wooden chair".into(),
            steps: 20,
            beta: 0.7,
            condition: Some("class-0".into()),
        }
    }
}

impl PipelineSpec {
    pub fn from_settings(s: &PipelineSettings) -> Result<Self> {
        let d = Self::default();
        let shape = match &s.shape {
            Some(text) => parse_shape(text)?,
            None => d.shape,
        };
        let dl = LandscapeSpec::for_dim(shape.len());
        if let Some(m) = &s.mixture {
            if !m.exists() {
                return Err(Error::Config(format!("mixture file {} does not exist", m.display())));
            }
        }
        let condition = match s.condition.as_deref() {
            Some("none") => None,
            Some(c) => Some(c.to_string()),
            None => d.condition,
        };
        Ok(Self {
            shape,
            mixture: s.mixture.clone(),
            verifier: match &s.verifier {
                Some(v) => v.parse()?,
                None => d.verifier,
            },
            context: s.context.clone().unwrap_or(d.context),
            steps: s.steps.unwrap_or(d.steps),
            beta: s.beta.unwrap_or(d.beta),
            condition,
            landscape: LandscapeSpec {
                modes: s.modes.unwrap_or(dl.modes),
                sharpness: s.sharpness.unwrap_or(dl.sharpness),
                height_step: s.height_step.unwrap_or(dl.height_step),
            },
        })
    }

    pub fn mixture(&self) -> Result<MixtureModel> {
        let model = match &self.mixture {
            Some(path) => MixtureModel::load(path)?,
            None => MixtureModel::toy(
                self.shape.len(),
                TOY_COMPONENTS,
                TOY_MEAN_SCALE,
                TOY_COMPONENT_STD,
                TOY_MIXTURE_SEED,
            )?,
        };
        if model.dim() != self.shape.len() {
            return Err(Error::Config(format!(
                "mixture dimension {} does not match noise shape with {} elements",
                model.dim(),
                self.shape.len()
            )));
        }
        Ok(model)
    }

    pub fn flow(&self) -> Result<ToyFlow> {
        let guidance = GuidanceConfig::new(self.beta, self.condition.clone())?;
        ToyFlow::new(self.mixture()?, FlowSchedule::new(self.steps)?, guidance)
    }

    /// The landscape the synthetic verifier scores against, centred on samples
    /// this pipeline can produce.
    pub fn landscape(&self, flow: &ToyFlow) -> Result<SyntheticLandscape> {
        let l = &self.landscape;
        SyntheticLandscape::realizable(&self.context, flow, &self.shape, l.modes, l.sharpness, l.height_step)
    }

    /// Noise -> sample -> score, ready for the search.
    pub fn objective(&self) -> Result<Box<dyn Objective + Send>> {
        let flow = self.flow()?;
        Ok(match &self.verifier {
            VerifierChoice::Synthetic => {
                let landscape = self.landscape(&flow)?;
                Box::new(GeneratedObjective::new(flow, landscape, self.context.clone()))
            }
            VerifierChoice::Fk => {
                if self.condition.is_none() {
                    return Err(Error::Config("the fk verifier needs a condition label".into()));
                }
                Box::new(FkObjective {
                    flow,
                    sign: FkSign::Negative,
                })
            }
            VerifierChoice::External(cmd) => {
                let verifier = ExternalVerifier::connect(&ProcessEndpoint::parse(cmd)?, self.shape.len())?;
                Box::new(GeneratedObjective::new(flow, verifier, self.context.clone()))
            }
        })
    }
}
