use rand::Rng;

use super::{argmax, maybe_normalize, SearchConfig, Tracker};
use crate::error::Result;
use crate::noise::{rng_from_seed, sample_standard_noise, standard_normal, NoiseTensor, SearchRng, TensorShape};
use crate::singular::{decompose, perturb, reconstruct, reset_space, should_reset};
use crate::stats;

/// `base + scale * z`, z standard normal per coordinate.
fn jitter<R: Rng + ?Sized>(base: &NoiseTensor, scale: f64, rng: &mut R) -> Result<NoiseTensor> {
    let values = base.values().iter().map(|v| v + scale * standard_normal(rng)).collect();
    NoiseTensor::from_values(base.shape().clone(), values)
}

pub(super) fn run(cfg: &SearchConfig, shape: &TensorShape, tracker: &mut Tracker) -> Result<()> {
    let mut rng = rng_from_seed(cfg.seed);
    let x0 = maybe_normalize(sample_standard_noise(shape, &mut rng), cfg.use_gn)?;
    if cfg.use_css {
        compressed(cfg, x0, &mut rng, tracker)
    } else {
        vanilla(cfg, x0, &mut rng, tracker)
    }
}

/// Keeps the incumbent unless a candidate strictly beats it (when elitist).
fn accept(cfg: &SearchConfig, pivot_score: Option<f64>, best_candidate: f64) -> bool {
    match pivot_score {
        Some(p) if cfg.elitism => best_candidate > p,
        _ => true,
    }
}

fn vanilla(cfg: &SearchConfig, x0: NoiseTensor, rng: &mut SearchRng, tracker: &mut Tracker) -> Result<()> {
    // The initial pivot is never scored: iteration 0 replaces it outright.
    let mut pivot = x0;
    let mut pivot_score = None;
    for t in 0..cfg.iterations {
        let candidates = (0..cfg.candidates)
            .map(|_| jitter(&pivot, cfg.lambda, rng).and_then(|x| maybe_normalize(x, cfg.use_gn)))
            .collect::<Result<Vec<_>>>()?;
        let scores = tracker.evaluate_batch(&candidates)?;
        if scores.is_empty() {
            break;
        }
        let i = argmax(&scores)?;
        if accept(cfg, pivot_score, scores[i]) {
            pivot = candidates[i].clone();
            pivot_score = Some(scores[i]);
        }
        tracker.record(t, stats::population_variance(&scores), false);
        if tracker.exhausted() {
            break;
        }
    }
    Ok(())
}

fn compressed(cfg: &SearchConfig, x0: NoiseTensor, rng: &mut SearchRng, tracker: &mut Tracker) -> Result<()> {
    let mut space = decompose(&x0)?;
    let mut pivot_sigma = space.sigma_init().to_vec();
    let mut pivot_noise = x0;
    let mut pivot_score = None;
    for t in 0..cfg.iterations {
        let sigmas: Vec<_> = (0..cfg.candidates).map(|_| perturb(&pivot_sigma, cfg.lambda, rng)).collect();
        let candidates = sigmas
            .iter()
            .map(|s| reconstruct(&space, s, cfg.use_gn))
            .collect::<Result<Vec<_>>>()?;
        let scores = tracker.evaluate_batch(&candidates)?;
        if scores.is_empty() {
            break;
        }
        let i = argmax(&scores)?;
        if accept(cfg, pivot_score, scores[i]) {
            pivot_sigma = sigmas[i].values.clone();
            pivot_noise = candidates[i].clone();
            pivot_score = Some(scores[i]);
        }
        let var = stats::population_variance(&scores);
        let reset = cfg.use_ssr && should_reset(&scores, cfg.zeta)?;
        if reset {
            space = reset_space(&pivot_noise)?;
            pivot_sigma = space.sigma_init().to_vec();
        }
        tracker.record(t, var, reset);
        if tracker.exhausted() {
            break;
        }
    }
    Ok(())
}
