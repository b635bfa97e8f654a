use super::{maybe_normalize, SearchConfig, Tracker, RANDOM_VARIANCE_WINDOW};
use crate::error::Result;
use crate::noise::{rng_from_seed, sample_standard_noise, TensorShape};
use crate::singular::{decompose, perturb, reconstruct, reset_space, should_reset};
use crate::stats;

/// Draws evaluated together; records are still written per draw.
const CHUNK: usize = 16;

/// Independent standard-normal draws; each draw is one trace iteration.
pub(super) fn run_vanilla(cfg: &SearchConfig, shape: &TensorShape, tracker: &mut Tracker) -> Result<()> {
    let mut rng = rng_from_seed(cfg.seed);
    let mut done = 0;
    while done < cfg.candidates && !tracker.exhausted() {
        let n = CHUNK.min(cfg.candidates - done);
        let noises = (0..n)
            .map(|_| maybe_normalize(sample_standard_noise(shape, &mut rng), cfg.use_gn))
            .collect::<Result<Vec<_>>>()?;
        let evals = tracker.compute(&noises)?;
        for (k, (x, e)) in noises.iter().zip(evals).enumerate() {
            tracker.absorb(x, e)?;
            tracker.record(done + k, 0.0, false);
        }
        done += n;
    }
    Ok(())
}

/// Hill-climb on singular values around the current best, re-anchoring the
/// space on every improvement.
pub(super) fn run_compressed(cfg: &SearchConfig, shape: &TensorShape, tracker: &mut Tracker) -> Result<()> {
    let mut rng = rng_from_seed(cfg.seed);
    let x0 = maybe_normalize(sample_standard_noise(shape, &mut rng), cfg.use_gn)?;
    let Some(mut best) = tracker.evaluate_one(&x0)? else { return Ok(()) };
    tracker.record(0, 0.0, false);
    let mut space = decompose(&x0)?;
    let mut window: Vec<f64> = vec![best];

    // the anchor counts as the first of the `candidates` draws
    for i in 1..cfg.candidates {
        let sigma = perturb(space.sigma_init(), cfg.eta, &mut rng);
        let x = reconstruct(&space, &sigma, cfg.use_gn)?;
        let Some(score) = tracker.evaluate_one(&x)? else { break };
        window.push(score);
        if window.len() > RANDOM_VARIANCE_WINDOW {
            window.remove(0);
        }
        let var = stats::population_variance(&window);
        let mut reset = false;
        if score > best {
            best = score;
            if cfg.use_ssr && cfg.reset_on_new_best {
                space = reset_space(&x)?;
                reset = true;
            }
        }
        if !reset
            && cfg.use_ssr
            && cfg.reset_on_variance
            && window.len() == RANDOM_VARIANCE_WINDOW
            && should_reset(&window, cfg.zeta)?
        {
            let anchor = tracker.best_noise().expect("at least one evaluation").clone();
            space = reset_space(&anchor)?;
            window.clear();
            reset = true;
        }
        tracker.record(i, var, reset);
    }
    Ok(())
}
