//! Compressed search space: the noise's singular vectors are frozen per slice
//! and only the singular values are searched.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{
    from_batched, gaussian_normalize, standard_normal, to_batched, BatchedMatrices, NoiseTensor,
    NormalizeMode, TensorShape,
};
use crate::stats;
use crate::svd::{compose, svd_square, Svd};

/// Default reset threshold on the raw variance of candidate scores.
pub const DEFAULT_ZETA: f64 = 0.001;
/// Default perturbation scale for singular values.
pub const DEFAULT_ETA: f64 = 3.0;

#[derive(Clone, Debug)]
pub struct SingularSpace {
    frames: Vec<Svd>,
    sigma_init: Vec<f64>,
    shape: TensorShape,
}

/// A point in the compressed space: `C_s * N_s` singular values, slice-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaCandidate {
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl SigmaCandidate {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, score: None }
    }
}

impl SingularSpace {
    pub fn shape(&self) -> &TensorShape {
        &self.shape
    }

    /// Pivot singular values, slice-major.
    pub fn sigma_init(&self) -> &[f64] {
        &self.sigma_init
    }

    pub fn pivot(&self) -> SigmaCandidate {
        SigmaCandidate::new(self.sigma_init.clone())
    }

    pub fn frames(&self) -> &[Svd] {
        &self.frames
    }

    pub fn dim(&self) -> usize {
        self.sigma_init.len()
    }
}

/// Per-slice SVD of the batched view of `x`.
pub fn decompose(x: &NoiseTensor) -> Result<SingularSpace> {
    let batched = to_batched(x);
    let n = batched.side();
    let frames = (0..batched.slices())
        .into_par_iter()
        .map(|i| svd_square(batched.slice(i), n))
        .collect::<Result<Vec<_>>>()?;
    let sigma_init = frames.iter().flat_map(|f| f.sigma.iter().copied()).collect();
    Ok(SingularSpace {
        frames,
        sigma_init,
        shape: x.shape().clone(),
    })
}

/// `U diag(sigma) V^T` per slice, reshaped back to the source shape and
/// optionally Gaussian-normalized.
pub fn reconstruct(space: &SingularSpace, sigma: &SigmaCandidate, normalize: bool) -> Result<NoiseTensor> {
    if sigma.values.len() != space.dim() {
        return Err(Error::Shape(format!(
            "sigma has {} values, space expects {}",
            sigma.values.len(),
            space.dim()
        )));
    }
    let n = space.shape.side();
    let mut data = Vec::with_capacity(space.shape.len());
    for (frame, s) in space.frames.iter().zip(sigma.values.chunks(n)) {
        data.extend(compose(&frame.u, s, &frame.v, n));
    }
    let x = from_batched(BatchedMatrices::new(space.shape.slices(), n, data)?, &space.shape)?;
    if normalize {
        gaussian_normalize(&x, NormalizeMode::Std)
    } else {
        Ok(x)
    }
}

/// `n` draws from `N(sigma_init, eta^2 I)`. Negative values are kept.
pub fn sample_candidates<R: Rng + ?Sized>(
    space: &SingularSpace,
    n: usize,
    eta: f64,
    rng: &mut R,
) -> Result<Vec<SigmaCandidate>> {
    if n == 0 {
        return Err(Error::Argument("candidate count must be >= 1".into()));
    }
    if !(eta >= 0.0) {
        return Err(Error::Argument(format!("eta must be >= 0, got {eta}")));
    }
    Ok((0..n).map(|_| perturb(&space.sigma_init, eta, rng)).collect())
}

/// `base + scale * z` with `z` standard normal per coordinate.
pub fn perturb<R: Rng + ?Sized>(base: &[f64], scale: f64, rng: &mut R) -> SigmaCandidate {
    SigmaCandidate::new(base.iter().map(|s| s + scale * standard_normal(rng)).collect())
}

/// True when candidate scores have collapsed: population variance below `zeta`.
pub fn should_reset(scores: &[f64], zeta: f64) -> Result<bool> {
    if scores.is_empty() {
        return Err(Error::Argument("cannot test reset on an empty score list".into()));
    }
    Ok(stats::population_variance(scores) < zeta)
}

/// Re-anchors the space on the best noise found so far.
pub fn reset_space(best_noise: &NoiseTensor) -> Result<SingularSpace> {
    decompose(best_noise)
}

/// Mean absolute cosine between index-matched singular vectors (both `U` and
/// `V`), over every slice and column.
pub fn singular_vector_similarity(a: &SingularSpace, b: &SingularSpace) -> Result<f64> {
    if a.shape.slices() != b.shape.slices() || a.shape.side() != b.shape.side() {
        return Err(Error::Shape("similarity needs spaces of identical batched shape".into()));
    }
    let n = a.shape.side();
    let mut total = 0.0;
    let mut count = 0usize;
    for (fa, fb) in a.frames.iter().zip(&b.frames) {
        for k in 0..n {
            total += abs_cos_col(&fa.u, &fb.u, n, k);
            total += abs_cos_col(&fa.v, &fb.v, n, k);
            count += 2;
        }
    }
    Ok(total / count as f64)
}

fn abs_cos_col(a: &[f64], b: &[f64], n: usize, k: usize) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..n {
        let x = a[i * n + k];
        let y = b[i * n + k];
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    (ab / (aa.sqrt() * bb.sqrt())).abs()
}
