//! Searchable initial noise: shapes, seeded sampling, the batched-matrix view
//! used by the singular space, and Gaussian normalization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Generator used for every random draw in the crate. ChaCha keeps streams
/// identical across platforms, which the byte-identical trace contract needs.
pub type SearchRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SearchRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The single normal-sampling routine. Everything that needs N(0, 1) goes through here.
#[inline]
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn standard_normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| standard_normal(rng)).collect()
}

/// Shape of a noise tensor together with its `(C_s, N_s, N_s)` batched-matrix view.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorShape {
    dims: Vec<usize>,
    batched: (usize, usize),
}

impl TensorShape {
    pub fn new(dims: Vec<usize>, slices: usize, side: usize) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Shape(format!("dims must be positive, got {dims:?}")));
        }
        if slices < 1 || side < 2 {
            return Err(Error::Shape(format!(
                "batched view needs C_s >= 1 and N_s >= 2, got ({slices}, {side}, {side})"
            )));
        }
        let count: usize = dims.iter().product();
        if count != slices * side * side {
            return Err(Error::Shape(format!(
                "dims {dims:?} hold {count} elements but batched view ({slices}, {side}, {side}) holds {}",
                slices * side * side
            )));
        }
        Ok(Self {
            dims,
            batched: (slices, side),
        })
    }

    /// GaussianCube initial noise: (14, 32, 32, 32) viewed as (7, 256, 256).
    pub fn gaussian_cube() -> Self {
        Self::new(vec![14, 32, 32, 32], 7, 256).expect("valid preset")
    }

    /// TRELLIS first-stage structure noise: (8, 16, 16, 16) viewed as (8, 64, 64).
    pub fn trellis() -> Self {
        Self::new(vec![8, 16, 16, 16], 8, 64).expect("valid preset")
    }

    /// Desk-scale default: 1024 elements as (4, 16, 16).
    pub fn toy() -> Self {
        Self::new(vec![4, 16, 16], 4, 16).expect("valid preset")
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn slices(&self) -> usize {
        self.batched.0
    }

    pub fn side(&self) -> usize {
        self.batched.1
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of free parameters once singular vectors are frozen (`C_s * N_s`).
    pub fn compressed_len(&self) -> usize {
        self.slices() * self.side()
    }
}

/// Where a tensor came from. Only used for reproducibility bookkeeping.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    pub seed: Option<u64>,
    pub history: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseTensor {
    shape: TensorShape,
    values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lineage: Option<Lineage>,
}

impl NoiseTensor {
    pub fn from_values(shape: TensorShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::Shape(format!(
                "{} values for shape {:?}",
                values.len(),
                shape.dims()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite value at index {i}")));
        }
        Ok(Self {
            shape,
            values,
            lineage: None,
        })
    }

    pub fn shape(&self) -> &TensorShape {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn lineage(&self) -> Option<&Lineage> {
        self.lineage.as_ref()
    }

    pub fn with_lineage(mut self, lineage: Lineage) -> Self {
        self.lineage = Some(lineage);
        self
    }

    fn noted(mut self, op: &str) -> Self {
        if let Some(l) = self.lineage.as_mut() {
            l.history.push(op.to_string());
        }
        self
    }

    pub fn mean(&self) -> f64 {
        stats::mean(&self.values)
    }

    pub fn population_std(&self) -> f64 {
        stats::population_std(&self.values)
    }
}

/// Draws i.i.d. standard-normal noise of the given shape.
pub fn sample_standard_noise<R: Rng + ?Sized>(shape: &TensorShape, rng: &mut R) -> NoiseTensor {
    let values = standard_normal_vec(rng, shape.len());
    NoiseTensor {
        shape: shape.clone(),
        values,
        lineage: None,
    }
}

/// Convenience wrapper that seeds a fresh generator and records the seed.
pub fn sample_seeded(shape: &TensorShape, seed: u64) -> NoiseTensor {
    let mut rng = rng_from_seed(seed);
    sample_standard_noise(shape, &mut rng).with_lineage(Lineage {
        seed: Some(seed),
        history: vec!["standard_normal".into()],
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizeMode {
    /// Divide by the population standard deviation (yields unit variance).
    #[default]
    Std,
    /// Divide by the population variance, as the formula is literally written.
    Variance,
}

const DEGENERATE_VARIANCE: f64 = 1e-12;

/// Recenters and rescales `x` with global (whole-tensor) statistics.
pub fn gaussian_normalize(x: &NoiseTensor, mode: NormalizeMode) -> Result<NoiseTensor> {
    let m = stats::mean(&x.values);
    let var = stats::population_variance(&x.values);
    if !(var > DEGENERATE_VARIANCE) {
        return Err(Error::Degenerate(format!(
            "population variance {var:e} too small to normalize"
        )));
    }
    let denom = match mode {
        NormalizeMode::Std => var.sqrt(),
        NormalizeMode::Variance => var,
    };
    let values = x.values.iter().map(|v| (v - m) / denom).collect();
    Ok(NoiseTensor {
        shape: x.shape.clone(),
        values,
        lineage: x.lineage.clone(),
    }
    .noted("gaussian_normalize"))
}

/// `C_s` square matrices of side `N_s`, each stored row-major and back to back.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchedMatrices {
    slices: usize,
    side: usize,
    data: Vec<f64>,
}

impl BatchedMatrices {
    pub fn new(slices: usize, side: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != slices * side * side {
            return Err(Error::Shape(format!(
                "{} elements for batched ({slices}, {side}, {side})",
                data.len()
            )));
        }
        Ok(Self { slices, side, data })
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn slice(&self, i: usize) -> &[f64] {
        let n2 = self.side * self.side;
        &self.data[i * n2..(i + 1) * n2]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// Row-major relabeling into the batched-matrix view. No data is moved.
pub fn to_batched(x: &NoiseTensor) -> BatchedMatrices {
    BatchedMatrices {
        slices: x.shape.slices(),
        side: x.shape.side(),
        data: x.values.clone(),
    }
}

pub fn from_batched(batched: BatchedMatrices, shape: &TensorShape) -> Result<NoiseTensor> {
    if batched.slices != shape.slices() || batched.side != shape.side() {
        return Err(Error::Shape(format!(
            "batched ({}, {s}, {s}) does not match shape view ({}, {t}, {t})",
            batched.slices,
            shape.slices(),
            s = batched.side,
            t = shape.side()
        )));
    }
    NoiseTensor::from_values(shape.clone(), batched.data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_dim_is_a_shape_error() {
        assert!(matches!(TensorShape::new(vec![0], 1, 2), Err(Error::Shape(_))));
        assert!(matches!(TensorShape::new(vec![4, 4], 4, 1), Err(Error::Shape(_))));
        assert!(matches!(TensorShape::new(vec![4, 4], 2, 2), Err(Error::Shape(_))));
    }

    #[test]
    fn same_seed_same_noise() {
        let shape = TensorShape::new(vec![2, 2, 2, 2], 4, 2).unwrap();
        let a = sample_seeded(&shape, 7);
        let b = sample_seeded(&shape, 7);
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), sample_seeded(&shape, 8).values());
    }

    #[test]
    fn standard_noise_moments() {
        let shape = TensorShape::new(vec![4, 16, 16, 16], 4, 64).unwrap();
        let x = sample_seeded(&shape, 1);
        assert_eq!(x.values().len(), 16384);
        assert!(x.mean().abs() < 0.05, "mean {}", x.mean());
        assert!((x.population_std() - 1.0).abs() < 0.05);
    }

    #[test]
    fn normalize_two_values() {
        let shape = TensorShape::new(vec![2, 2], 1, 2).unwrap();
        let x = NoiseTensor::from_values(shape, vec![1.0, 3.0, 1.0, 3.0]).unwrap();
        let y = gaussian_normalize(&x, NormalizeMode::Std).unwrap();
        assert_eq!(y.values(), &[-1.0, 1.0, -1.0, 1.0]);
    }

    #[test]
    fn normalize_variance_mode_divides_by_variance() {
        let shape = TensorShape::new(vec![4], 1, 2).unwrap();
        // mean 0, population variance 4
        let x = NoiseTensor::from_values(shape, vec![-2.0, 2.0, -2.0, 2.0]).unwrap();
        let y = gaussian_normalize(&x, NormalizeMode::Variance).unwrap();
        assert_eq!(y.values(), &[-0.5, 0.5, -0.5, 0.5]);
    }

    #[test]
    fn normalize_identity_on_standardized_input() {
        let shape = TensorShape::toy();
        let x = gaussian_normalize(&sample_seeded(&shape, 3), NormalizeMode::Std).unwrap();
        let y = gaussian_normalize(&x, NormalizeMode::Std).unwrap();
        for (a, b) in x.values().iter().zip(y.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_tensor_is_degenerate() {
        let shape = TensorShape::new(vec![4], 1, 2).unwrap();
        let x = NoiseTensor::from_values(shape, vec![5.0; 4]).unwrap();
        assert!(matches!(
            gaussian_normalize(&x, NormalizeMode::Std),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn reshape_presets() {
        let gc = TensorShape::gaussian_cube();
        assert_eq!(gc.len(), 458_752);
        assert_eq!((gc.slices(), gc.side()), (7, 256));
        let tr = TensorShape::trellis();
        assert_eq!(tr.len(), 32_768);
        assert_eq!((tr.slices(), tr.side()), (8, 64));
        // freezing singular vectors leaves N_s times fewer parameters
        assert_eq!(gc.compressed_len(), 7 * 256);
        assert_eq!(gc.compressed_len(), gc.len() / 256);
        assert_eq!(tr.compressed_len(), tr.len() / 64);
    }

    #[test]
    fn batched_round_trip_is_exact() {
        let shape = TensorShape::trellis();
        let x = sample_seeded(&shape, 11);
        let b = to_batched(&x);
        assert_eq!((b.slices(), b.side()), (8, 64));
        let y = from_batched(b, &shape).unwrap();
        assert_eq!(x.values(), y.values());
    }

    #[test]
    fn batched_count_mismatch() {
        assert!(BatchedMatrices::new(2, 3, vec![0.0; 17]).is_err());
        let b = BatchedMatrices::new(1, 4, vec![0.0; 16]).unwrap();
        assert!(from_batched(b, &TensorShape::toy()).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        let shape = TensorShape::new(vec![4], 1, 2).unwrap();
        assert!(NoiseTensor::from_values(shape, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
    }
}
