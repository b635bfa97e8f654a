use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use super::{attractiveness, maybe_normalize, FireflyMode, SearchConfig, Tracker};
use crate::error::Result;
use crate::noise::{rng_from_seed, sample_standard_noise, standard_normal, NoiseTensor, SearchRng, TensorShape};
use crate::singular::{decompose, perturb, reconstruct, reset_space, should_reset, SingularSpace};
use crate::stats::{self, squared_distance};

/// Where the fireflies live: the full tensor, or singular values of a frozen frame.
enum Space {
    Vanilla(TensorShape),
    Compressed(SingularSpace),
}

impl Space {
    /// Tensor handed to the generator for position `p`. In vanilla space the
    /// normalized tensor also replaces the position, so positions stay on the
    /// standard-normal shell.
    fn realize(&self, p: &mut [f64], use_gn: bool) -> Result<NoiseTensor> {
        match self {
            Space::Vanilla(shape) => {
                let x = maybe_normalize(NoiseTensor::from_values(shape.clone(), p.to_vec())?, use_gn)?;
                if use_gn {
                    p.copy_from_slice(x.values());
                }
                Ok(x)
            }
            Space::Compressed(space) => reconstruct(space, &crate::singular::SigmaCandidate::new(p.to_vec()), use_gn),
        }
    }
}

fn step<R: Rng + ?Sized>(cfg: &SearchConfig, xi: &mut [f64], xj: &[f64], rng: &mut R) {
    let beta = attractiveness(cfg.beta0, cfg.gamma, squared_distance(xi, xj));
    for (a, b) in xi.iter_mut().zip(xj) {
        *a += beta * (b - *a) + cfg.alpha * standard_normal(rng);
    }
}

fn initial_swarm(cfg: &SearchConfig, space: &Space, rng: &mut SearchRng) -> Vec<Vec<f64>> {
    match space {
        Space::Vanilla(shape) => (0..cfg.candidates)
            .map(|_| sample_standard_noise(shape, rng).into_values())
            .collect(),
        Space::Compressed(s) => (0..cfg.candidates)
            .map(|_| perturb(s.sigma_init(), cfg.eta, rng).values)
            .collect(),
    }
}

/// Evaluates the whole swarm; returns `None` if the budget ran out part way.
fn light_up(cfg: &SearchConfig, space: &Space, swarm: &mut [Vec<f64>], tracker: &mut Tracker) -> Result<Option<Vec<f64>>> {
    let noises = swarm
        .iter_mut()
        .map(|p| space.realize(p, cfg.use_gn))
        .collect::<Result<Vec<_>>>()?;
    let scores = tracker.evaluate_batch(&noises)?;
    Ok((scores.len() == noises.len()).then_some(scores))
}

pub(super) fn run(cfg: &SearchConfig, shape: &TensorShape, tracker: &mut Tracker) -> Result<()> {
    let mut rng = rng_from_seed(cfg.seed);
    let mut space = if cfg.use_css {
        let pivot = maybe_normalize(sample_standard_noise(shape, &mut rng), cfg.use_gn)?;
        Space::Compressed(decompose(&pivot)?)
    } else {
        Space::Vanilla(shape.clone())
    };
    let mut swarm = initial_swarm(cfg, &space, &mut rng);
    let Some(mut bright) = light_up(cfg, &space, &mut swarm, tracker)? else {
        tracker.record(0, 0.0, false);
        return Ok(());
    };
    tracker.record(0, stats::population_variance(&bright), false);

    for t in 1..=cfg.iterations {
        let worst_case = (cfg.candidates * cfg.candidates.saturating_sub(1)) as u64;
        let completed = match cfg.firefly_mode {
            FireflyMode::Snapshot if tracker.can_afford(worst_case) => {
                sweep_snapshot(cfg, &space, &mut swarm, &mut bright, &mut rng, tracker)?
            }
            _ => sweep_sequential(cfg, &space, &mut swarm, &mut bright, &mut rng, tracker)?,
        };
        if !completed {
            tracker.record(t, stats::population_variance(&bright), false);
            break;
        }
        let var = stats::population_variance(&bright);
        let mut reset = false;
        if cfg.use_ssr && should_reset(&bright, cfg.zeta)? {
            let anchor = tracker.best_noise().expect("swarm was evaluated").clone();
            space = Space::Compressed(reset_space(&anchor)?);
            swarm = initial_swarm(cfg, &space, &mut rng);
            reset = true;
            match light_up(cfg, &space, &mut swarm, tracker)? {
                Some(b) => bright = b,
                None => {
                    tracker.record(t, var, reset);
                    break;
                }
            }
        }
        tracker.record(t, var, reset);
        if tracker.exhausted() {
            break;
        }
    }
    Ok(())
}

/// Ascending `(i, j)`: firefly `i` moves toward every brighter `j` and is
/// re-scored after each move. Returns false if the budget ran out.
fn sweep_sequential(
    cfg: &SearchConfig,
    space: &Space,
    swarm: &mut [Vec<f64>],
    bright: &mut [f64],
    rng: &mut SearchRng,
    tracker: &mut Tracker,
) -> Result<bool> {
    let n = swarm.len();
    for i in 0..n {
        for j in 0..n {
            if i == j || !(bright[j] > bright[i]) {
                continue;
            }
            let xj = swarm[j].clone();
            step(cfg, &mut swarm[i], &xj, rng);
            let x = space.realize(&mut swarm[i], cfg.use_gn)?;
            match tracker.evaluate_one(&x)? {
                Some(s) => bright[i] = s,
                None => return Ok(false),
            }
        }
    }
    Ok(true)
}

/// Every firefly moves against the sweep-start positions and brightness, in
/// parallel, each with its own generator stream drawn from `rng`.
fn sweep_snapshot(
    cfg: &SearchConfig,
    space: &Space,
    swarm: &mut [Vec<f64>],
    bright: &mut [f64],
    rng: &mut SearchRng,
    tracker: &mut Tracker,
) -> Result<bool> {
    let snapshot: Vec<Vec<f64>> = swarm.to_vec();
    let lit: Vec<f64> = bright.to_vec();
    let seeds: Vec<u64> = (0..swarm.len()).map(|_| rng.random()).collect();
    let objective = tracker.objective();
    // Moves and evaluations per firefly; absorbed into the tracker in order afterwards.
    let results = (0..swarm.len())
        .into_par_iter()
        .map(|i| {
            let mut local = SearchRng::seed_from_u64(seeds[i]);
            let mut p = snapshot[i].clone();
            let mut s = lit[i];
            let mut evaluated = Vec::new();
            for j in 0..snapshot.len() {
                if i == j || !(lit[j] > s) {
                    continue;
                }
                step(cfg, &mut p, &snapshot[j], &mut local);
                let x = space.realize(&mut p, cfg.use_gn)?;
                let e = objective.evaluate(&x)?;
                s = e.score;
                evaluated.push((x, e));
            }
            Ok((p, s, evaluated))
        })
        .collect::<Result<Vec<_>>>()?;
    for (i, (p, s, evaluated)) in results.into_iter().enumerate() {
        swarm[i] = p;
        bright[i] = s;
        for (x, e) in evaluated {
            tracker.absorb(&x, e)?;
        }
    }
    Ok(true)
}
