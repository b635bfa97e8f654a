//! Shared fixtures for the benchmarks.

use noise_search::harness::PipelineSpec;
use noise_search::noise::sample_seeded;
use noise_search::{NoiseTensor, Objective, TensorShape};

/// Standard-normal tensor of the given shape, fixed by `seed`.
pub fn noise(shape: &TensorShape, seed: u64) -> NoiseTensor {
    sample_seeded(shape, seed)
}

/// The default toy pipeline: 1024-dim mixture flow, 20 steps, synthetic verifier.
pub fn toy_objective() -> (TensorShape, Box<dyn Objective + Send>) {
    let spec = PipelineSpec::default();
    let objective = spec.objective().expect("default pipeline builds");
    (spec.shape, objective)
}
