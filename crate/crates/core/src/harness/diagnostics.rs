//! Search-space diagnostics: how stable the singular vectors are under
//! singular-value perturbation, and how the two search spaces score around
//! the same pivots.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{rng_from_seed, sample_standard_noise, standard_normal, NoiseTensor, TensorShape};
use crate::pipeline::Objective;
use crate::search::maybe_normalize;
use crate::singular::{decompose, perturb, reconstruct, singular_vector_similarity};
use crate::stats;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub lambda: f64,
    pub mean_abs_cos: f64,
    pub std_abs_cos: f64,
    pub n_pairs: usize,
}

/// For each `lambda`: draw `pairs` source noises, perturb their singular
/// values by `lambda * z`, rebuild the target, decompose it again, and
/// measure singular-vector similarity between source and target.
pub fn run_similarity_diagnostics(
    shape: &TensorShape,
    lambdas: &[f64],
    pairs: usize,
    seed: u64,
) -> Result<Vec<SimilarityRow>> {
    if pairs == 0 {
        return Err(Error::Argument("need at least one pair per lambda".into()));
    }
    if let Some(bad) = lambdas.iter().find(|l| !(**l > 0.0)) {
        return Err(Error::Argument(format!("lambda must be > 0, got {bad}")));
    }
    let mut master = rng_from_seed(seed);
    lambdas
        .iter()
        .map(|&lambda| {
            let seeds: Vec<u64> = (0..pairs).map(|_| master.random()).collect();
            let sims = seeds
                .par_iter()
                .map(|&s| {
                    let mut rng = rng_from_seed(s);
                    let source = decompose(&sample_standard_noise(shape, &mut rng))?;
                    let sigma = perturb(source.sigma_init(), lambda, &mut rng);
                    let target = decompose(&reconstruct(&source, &sigma, false)?)?;
                    singular_vector_similarity(&source, &target)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(SimilarityRow {
                lambda,
                mean_abs_cos: stats::mean(&sims),
                std_abs_cos: stats::population_std(&sims),
                n_pairs: pairs,
            })
        })
        .collect()
}

pub fn write_similarity_csv(rows: &[SimilarityRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    /// `x + eps * z` over every tensor entry.
    Vanilla,
    /// `sigma + eps * z` over singular values, vectors frozen.
    Compressed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceComparisonSpec {
    pub radii: Vec<f64>,
    pub pivots: usize,
    pub candidates: usize,
    pub seed: u64,
    /// Normalize candidates before scoring. Off by default so the comparison
    /// sees each space's own geometry.
    pub use_gn: bool,
}

impl Default for SpaceComparisonSpec {
    fn default() -> Self {
        Self {
            radii: vec![0.01, 1.0, 2.0, 3.0],
            pivots: 10,
            candidates: 10,
            seed: 0,
            use_gn: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub radius: f64,
    pub space: SpaceKind,
    pub pivot: usize,
    pub candidate: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusSummary {
    pub radius: f64,
    /// Mean over pivots of the best candidate score around that pivot.
    pub vanilla_mean: f64,
    pub compressed_mean: f64,
    pub compressed_ge: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceComparison {
    pub radii: Vec<RadiusSummary>,
    pub compressed_wins: usize,
}

/// Scores `candidates` perturbations of radius `eps` around each of `pivots`
/// standard-normal pivots, in both spaces. The same pivots are used for
/// every radius and both spaces.
pub fn run_space_comparison(
    objective: &dyn Objective,
    shape: &TensorShape,
    spec: &SpaceComparisonSpec,
) -> Result<(SpaceComparison, Vec<CandidateRow>)> {
    if spec.pivots == 0 || spec.candidates == 0 {
        return Err(Error::Argument("need at least one pivot and one candidate".into()));
    }
    if let Some(bad) = spec.radii.iter().find(|r| !(**r >= 0.0)) {
        return Err(Error::Argument(format!("radius must be >= 0, got {bad}")));
    }
    let mut master = rng_from_seed(spec.seed);
    let pivots: Vec<NoiseTensor> = (0..spec.pivots).map(|_| sample_standard_noise(shape, &mut master)).collect();
    let spaces = pivots.par_iter().map(decompose).collect::<Result<Vec<_>>>()?;

    let mut jobs = Vec::new();
    for &radius in &spec.radii {
        for kind in [SpaceKind::Vanilla, SpaceKind::Compressed] {
            for p in 0..spec.pivots {
                for c in 0..spec.candidates {
                    jobs.push((radius, kind, p, c, master.random::<u64>()));
                }
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|&(radius, space, pivot, candidate, seed)| {
            let mut rng = rng_from_seed(seed);
            let x = match space {
                SpaceKind::Vanilla => {
                    let base = &pivots[pivot];
                    let v = base.values().iter().map(|a| a + radius * standard_normal(&mut rng)).collect();
                    NoiseTensor::from_values(shape.clone(), v)?
                }
                SpaceKind::Compressed => {
                    let s = &spaces[pivot];
                    reconstruct(s, &perturb(s.sigma_init(), radius, &mut rng), false)?
                }
            };
            let score = objective.evaluate(&maybe_normalize(x, spec.use_gn)?)?.score;
            Ok(CandidateRow {
                radius,
                space,
                pivot,
                candidate,
                score,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((summarize_space_comparison(&rows), rows))
}

/// Aggregates per-candidate rows; radii keep their first-seen order.
pub fn summarize_space_comparison(rows: &[CandidateRow]) -> SpaceComparison {
    let mut radii: Vec<f64> = Vec::new();
    for r in rows {
        if !radii.contains(&r.radius) {
            radii.push(r.radius);
        }
    }
    let mean_best = |radius: f64, space: SpaceKind| {
        let mut best: Vec<(usize, f64)> = Vec::new();
        for r in rows.iter().filter(|r| r.radius == radius && r.space == space) {
            match best.iter_mut().find(|(p, _)| *p == r.pivot) {
                Some((_, b)) => *b = b.max(r.score),
                None => best.push((r.pivot, r.score)),
            }
        }
        let scores: Vec<f64> = best.into_iter().map(|(_, s)| s).collect();
        stats::mean(&scores)
    };
    let summaries: Vec<RadiusSummary> = radii
        .into_iter()
        .map(|radius| {
            let vanilla_mean = mean_best(radius, SpaceKind::Vanilla);
            let compressed_mean = mean_best(radius, SpaceKind::Compressed);
            RadiusSummary {
                radius,
                vanilla_mean,
                compressed_mean,
                compressed_ge: compressed_mean >= vanilla_mean,
            }
        })
        .collect();
    SpaceComparison {
        compressed_wins: summaries.iter().filter(|s| s.compressed_ge).count(),
        radii: summaries,
    }
}

pub fn write_candidate_rows(rows: &[CandidateRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_candidate_rows(path: &Path) -> Result<Vec<CandidateRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{GeneratedObjective, IdentityGenerator};
    use crate::verifier::SyntheticLandscape;

    #[test]
    fn tiny_lambda_keeps_vectors() {
        let shape = TensorShape::new(vec![2, 8, 8], 2, 8).unwrap();
        let rows = run_similarity_diagnostics(&shape, &[1e-6], 5, 3).unwrap();
        assert!(rows[0].mean_abs_cos > 0.999, "{rows:?}");
        assert!(run_similarity_diagnostics(&shape, &[0.0], 5, 3).is_err());
    }

    #[test]
    fn zero_radius_gives_identical_spaces() {
        let shape = TensorShape::new(vec![2, 4, 4], 2, 4).unwrap();
        let landscape = SyntheticLandscape::single(vec![0.5; 32], 1.0).unwrap();
        let obj = GeneratedObjective::new(IdentityGenerator, landscape, "ctx");
        let spec = SpaceComparisonSpec {
            radii: vec![0.0],
            pivots: 3,
            candidates: 2,
            ..Default::default()
        };
        let (summary, rows) = run_space_comparison(&obj, &shape, &spec).unwrap();
        assert_eq!(rows.len(), 12);
        let r = &summary.radii[0];
        assert!((r.vanilla_mean - r.compressed_mean).abs() < 1e-9);
    }
}
