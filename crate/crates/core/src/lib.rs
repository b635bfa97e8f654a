//! Verifier-guided search over the initial noise of a generative sampler.
//!
//! The crate is organised bottom-up:
//!
//! * [`noise`]: noise tensors, seeded sampling, batched-matrix view, Gaussian normalization.
//! * [`svd`] and [`singular`]: per-slice SVD and the compressed singular-value search space.
//! * [`flow`]: an analytic Gaussian-mixture rectified flow with guidance and FK weights.
//! * [`verifier`]: the scoring contract (synthetic, FK, external process).
//! * [`pipeline`]: noise to sample to score, as seen by the search.
//! * [`search`]: random, zero-order and firefly search with traces.
//! * [`harness`]: experiment grids, ablation reports and diagnostics.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod flow;
pub mod harness;
pub mod noise;
pub mod pipeline;
pub mod search;
pub mod singular;
pub mod stats;
pub mod svd;
pub mod verifier;

pub use error::{Error, Result};
pub use flow::{FlowSchedule, GuidanceConfig, MixtureModel};
pub use noise::{NoiseTensor, TensorShape};
pub use pipeline::{Evaluation, Generator, Objective, ToyFlow};
pub use search::{run_search, Algorithm, SearchConfig, SearchTrace};
pub use singular::{SigmaCandidate, SingularSpace};
pub use verifier::{ScoreRequest, Verifier, VerifierScore};
