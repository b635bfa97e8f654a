//! Analytic Gaussian-mixture rectified flow.
//!
//! Data `x0` is a mixture of diagonal Gaussians and the interpolant is
//! `x_t = (1 - t) x0 + t eps`, so `t = 1` is pure noise and `t = 0` is data.
//! Every marginal is again a diagonal Gaussian mixture, which gives the
//! velocity `E[eps - x0 | x_t]` and the score `grad log q_t` in closed form:
//!
//! ```text
//! v(x, t) = -(x + t * score(x, t)) / (1 - t)        for 0 < t < 1
//! ```
//!
//! Classifier-free guidance is the convex blend `(1 - beta) v_uncond + beta v_cond`.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{rng_from_seed, standard_normal};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub mean: Vec<f64>,
    /// Diagonal of the covariance.
    pub variance: Vec<f64>,
    pub weight: f64,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureFile", into = "MixtureFile")]
pub struct MixtureModel {
    components: Vec<Component>,
    dim: usize,
}

/// On-disk layout of a mixture definition.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MixtureFile {
    pub components: Vec<Component>,
}

impl TryFrom<MixtureFile> for MixtureModel {
    type Error = Error;
    fn try_from(f: MixtureFile) -> Result<Self> {
        MixtureModel::new(f.components)
    }
}

impl From<MixtureModel> for MixtureFile {
    fn from(m: MixtureModel) -> Self {
        MixtureFile {
            components: m.components,
        }
    }
}

impl MixtureModel {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::Argument("mixture needs at least one component".into()))?;
        let dim = first.mean.len();
        if dim == 0 {
            return Err(Error::Argument("mixture dimension must be positive".into()));
        }
        let mut total = 0.0;
        for (k, c) in components.iter().enumerate() {
            if c.mean.len() != dim || c.variance.len() != dim {
                return Err(Error::Shape(format!("component {k} does not have dimension {dim}")));
            }
            if !(c.weight > 0.0) {
                return Err(Error::Argument(format!("component {k} weight must be positive")));
            }
            if c.variance.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::Argument(format!("component {k} variance must be positive")));
            }
            if c.mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::Numeric(format!("component {k} mean is not finite")));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Argument(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { components, dim })
    }

    /// A single isotropic Gaussian `N(mean, var I)`.
    pub fn isotropic(mean: Vec<f64>, var: f64, label: &str) -> Result<Self> {
        let d = mean.len();
        Self::new(vec![Component {
            mean,
            variance: vec![var; d],
            weight: 1.0,
            label: label.into(),
        }])
    }

    /// Random toy mixture: `components` equally weighted isotropic Gaussians,
    /// means drawn from `N(0, mean_scale^2 I)`, labels alternating `class-0`, `class-1`.
    pub fn toy(dim: usize, components: usize, mean_scale: f64, component_std: f64, seed: u64) -> Result<Self> {
        if components == 0 {
            return Err(Error::Argument("toy mixture needs at least one component".into()));
        }
        let mut rng = rng_from_seed(seed);
        let comps = (0..components)
            .map(|k| Component {
                mean: (0..dim).map(|_| mean_scale * standard_normal(&mut rng)).collect(),
                variance: vec![component_std * component_std; dim],
                weight: 1.0 / components as f64,
                label: format!("class-{}", k % 2),
            })
            .collect();
        Self::new(comps)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn labels(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for c in &self.components {
            if !out.contains(&c.label.as_str()) {
                out.push(&c.label);
            }
        }
        out
    }

    /// Mean and diagonal covariance of the data distribution.
    pub fn data_moments(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let d = self.dim;
        let mut mean = vec![0.0; d];
        for c in &self.components {
            for (m, x) in mean.iter_mut().zip(&c.mean) {
                *m += c.weight * x;
            }
        }
        let mut cov = vec![vec![0.0; d]; d];
        for c in &self.components {
            for i in 0..d {
                for j in 0..d {
                    let diag = if i == j { c.variance[i] } else { 0.0 };
                    cov[i][j] += c.weight * (diag + (c.mean[i] - mean[i]) * (c.mean[j] - mean[j]));
                }
            }
        }
        (mean, cov)
    }

    fn select(&self, condition: Option<&str>) -> Result<Vec<usize>> {
        match condition {
            None => Ok((0..self.components.len()).collect()),
            Some(label) => {
                let idx: Vec<usize> = self
                    .components
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.label == label)
                    .map(|(k, _)| k)
                    .collect();
                if idx.is_empty() {
                    Err(Error::Argument(format!("unknown class label {label:?}")))
                } else {
                    Ok(idx)
                }
            }
        }
    }

    fn check(&self, x: &[f64], t: f64) -> Result<()> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::TimeDomain(t));
        }
        if x.len() != self.dim {
            return Err(Error::Shape(format!("state has {} entries, model has {}", x.len(), self.dim)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite state".into()));
        }
        Ok(())
    }

    /// Unnormalized log posterior weight of each component given `x_t = x`.
    #[allow(clippy::needless_range_loop)]
    fn log_joint(&self, k: usize, x: &[f64], t: f64) -> f64 {
        let c = &self.components[k];
        let a = 1.0 - t;
        let mut acc = c.weight.ln() - 0.5 * self.dim as f64 * (2.0 * std::f64::consts::PI).ln();
        // (component variance, marginal variance, its log); reused while the
        // component variance repeats, which for isotropic components is always
        let mut cached = (f64::NAN, 0.0, 0.0);
        for j in 0..self.dim {
            if c.variance[j] != cached.0 {
                let var = a * a * c.variance[j] + t * t;
                cached = (c.variance[j], var, var.ln());
            }
            let r = x[j] - a * c.mean[j];
            acc -= 0.5 * (r * r / cached.1 + cached.2);
        }
        acc
    }

    fn responsibilities(&self, idx: &[usize], logs: &[f64]) -> Vec<f64> {
        let m = idx.iter().map(|&k| logs[k]).fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = idx.iter().map(|&k| (logs[k] - m).exp()).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|v| v / z).collect()
    }

    fn velocity_from(&self, idx: &[usize], logs: &[f64], x: &[f64], t: f64) -> Vec<f64> {
        let r = self.responsibilities(idx, logs);
        let a = 1.0 - t;
        let mut v = vec![0.0; self.dim];
        for (&k, &rk) in idx.iter().zip(&r) {
            if rk == 0.0 {
                continue;
            }
            let c = &self.components[k];
            for j in 0..self.dim {
                let var = a * a * c.variance[j] + t * t;
                let e = (t - a * c.variance[j]) / var * (x[j] - a * c.mean[j]) - c.mean[j];
                v[j] += rk * e;
            }
        }
        v
    }

    fn all_log_joints(&self, x: &[f64], t: f64) -> Vec<f64> {
        (0..self.components.len()).map(|k| self.log_joint(k, x, t)).collect()
    }

    /// `E[eps - x0 | x_t = x]` under the full mixture (`None`) or the components carrying `condition`.
    pub fn velocity(&self, x: &[f64], t: f64, condition: Option<&str>) -> Result<Vec<f64>> {
        self.check(x, t)?;
        let idx = self.select(condition)?;
        let logs = self.all_log_joints(x, t);
        Ok(self.velocity_from(&idx, &logs, x, t))
    }

    /// `grad_x log q_t(x)` of the (conditional) marginal.
    pub fn score(&self, x: &[f64], t: f64, condition: Option<&str>) -> Result<Vec<f64>> {
        self.check(x, t)?;
        let idx = self.select(condition)?;
        let logs = self.all_log_joints(x, t);
        let r = self.responsibilities(&idx, &logs);
        let a = 1.0 - t;
        let mut s = vec![0.0; self.dim];
        for (&k, &rk) in idx.iter().zip(&r) {
            let c = &self.components[k];
            for j in 0..self.dim {
                let var = a * a * c.variance[j] + t * t;
                s[j] -= rk * (x[j] - a * c.mean[j]) / var;
            }
        }
        Ok(s)
    }

    /// `log q_t(x)` of the (conditional) marginal, normalized.
    pub fn log_density(&self, x: &[f64], t: f64, condition: Option<&str>) -> Result<f64> {
        self.check(x, t)?;
        let idx = self.select(condition)?;
        let total: f64 = idx.iter().map(|&k| self.components[k].weight).sum();
        let logs: Vec<f64> = idx.iter().map(|&k| self.log_joint(k, x, t)).collect();
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln() - total.ln())
    }

    /// Unconditional, conditional and guided velocities at one state.
    pub fn cfg_velocity(&self, x: &[f64], t: f64, g: &GuidanceConfig) -> Result<CfgVelocity> {
        let label = g
            .condition
            .as_deref()
            .ok_or_else(|| Error::Argument("guided velocity needs a condition label".into()))?;
        self.check(x, t)?;
        let all = self.select(None)?;
        let cond = self.select(Some(label))?;
        let logs = self.all_log_joints(x, t);
        let uncond = self.velocity_from(&all, &logs, x, t);
        let conditional = self.velocity_from(&cond, &logs, x, t);
        Ok(CfgVelocity::blend(uncond, conditional, g.beta))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CfgVelocity {
    pub uncond: Vec<f64>,
    pub cond: Vec<f64>,
    pub guided: Vec<f64>,
}

impl CfgVelocity {
    pub fn blend(uncond: Vec<f64>, cond: Vec<f64>, beta: f64) -> Self {
        let guided = if beta == 1.0 {
            cond.clone()
        } else if beta == 0.0 {
            uncond.clone()
        } else {
            uncond.iter().zip(&cond).map(|(u, c)| (1.0 - beta) * u + beta * c).collect()
        };
        Self { uncond, cond, guided }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    pub beta: f64,
    pub condition: Option<String>,
}

impl GuidanceConfig {
    pub fn new(beta: f64, condition: Option<String>) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::Argument(format!("guidance beta must lie in [0, 1], got {beta}")));
        }
        Ok(Self { beta, condition })
    }
}

/// Uniform Euler grid from `t = 1` down to `t = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSchedule {
    pub steps: usize,
    /// Lower bound on the noise scale used in the FK weight.
    pub sigma_floor: f64,
}

impl Default for FlowSchedule {
    fn default() -> Self {
        Self {
            steps: 20,
            sigma_floor: 1e-3,
        }
    }
}

impl FlowSchedule {
    pub fn new(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Argument("schedule needs at least one step".into()));
        }
        Ok(Self {
            steps,
            ..Self::default()
        })
    }

    pub fn time(&self, k: usize) -> f64 {
        1.0 - k as f64 / self.steps as f64
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.steps as f64
    }

    /// Noise scale of the interpolant at time `t`, floored.
    pub fn sigma(&self, t: f64) -> f64 {
        t.max(self.sigma_floor)
    }
}

/// Shared, increment-only tally of velocity-network evaluations.
#[derive(Clone, Debug, Default)]
pub struct NfeCounter(Arc<AtomicU64>);

impl NfeCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&self, n: u64) {
        self.0.fetch_add(n, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// One step's contribution to the FK log-weight.
pub fn fk_increment(beta: f64, sigma_t: f64, diff_sq: f64, dt: f64) -> f64 {
    beta * (1.0 - beta) / (2.0 * sigma_t * sigma_t) * diff_sq * dt
}

/// Result of integrating one trajectory.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub sample: Vec<f64>,
    pub log_weight: f64,
}

/// Euler integration from `t = 1` to `t = 0`, accumulating the FK log-weight
/// along the guided path. Counts exactly `schedule.steps` NFE.
pub fn integrate(
    model: &MixtureModel,
    schedule: &FlowSchedule,
    g: &GuidanceConfig,
    x_init: &[f64],
    nfe: &NfeCounter,
) -> Result<Trajectory> {
    if x_init.len() != model.dim() {
        return Err(Error::Shape(format!(
            "initial noise has {} entries, model has {}",
            x_init.len(),
            model.dim()
        )));
    }
    let dt = schedule.dt();
    let mut x = x_init.to_vec();
    let mut w = 0.0;
    for k in 0..schedule.steps {
        let t = schedule.time(k);
        let v = match &g.condition {
            Some(_) => {
                let cfg = model.cfg_velocity(&x, t, g)?;
                let diff_sq: f64 = cfg.uncond.iter().zip(&cfg.cond).map(|(a, b)| (a - b) * (a - b)).sum();
                w += fk_increment(g.beta, schedule.sigma(t), diff_sq, dt);
                cfg.guided
            }
            None => model.velocity(&x, t, None)?,
        };
        nfe.add(1);
        for (xi, vi) in x.iter_mut().zip(&v) {
            *xi -= vi * dt;
        }
        if let Some(j) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite state at step {k}, index {j}")));
        }
    }
    Ok(Trajectory {
        sample: x,
        log_weight: w,
    })
}

/// Deterministic Euler sampler.
pub fn sample(
    model: &MixtureModel,
    schedule: &FlowSchedule,
    g: &GuidanceConfig,
    x_init: &[f64],
    nfe: &NfeCounter,
) -> Result<Vec<f64>> {
    integrate(model, schedule, g, x_init, nfe).map(|t| t.sample)
}

/// FK log-weight `w >= 0` of the guided trajectory started at `x_init`.
pub fn fk_log_weight(
    model: &MixtureModel,
    schedule: &FlowSchedule,
    g: &GuidanceConfig,
    x_init: &[f64],
    nfe: &NfeCounter,
) -> Result<f64> {
    if g.condition.is_none() {
        return Err(Error::Argument("FK weight needs a condition label".into()));
    }
    integrate(model, schedule, g, x_init, nfe).map(|t| t.log_weight)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_component_2d() -> MixtureModel {
        MixtureModel::new(vec![
            Component {
                mean: vec![-2.0, 0.5],
                variance: vec![0.3, 0.5],
                weight: 0.4,
                label: "a".into(),
            },
            Component {
                mean: vec![2.0, -1.0],
                variance: vec![0.6, 0.2],
                weight: 0.6,
                label: "b".into(),
            },
        ])
        .unwrap()
    }

    #[test]
    fn standard_normal_data_has_zero_velocity_at_half_time() {
        let m = MixtureModel::isotropic(vec![0.0; 3], 1.0, "x").unwrap();
        for x in [[0.3, -1.0, 2.0], [5.0, 0.0, -4.0]] {
            let v = m.velocity(&x, 0.5, None).unwrap();
            assert!(v.iter().all(|c| c.abs() < 1e-15), "{v:?}");
        }
    }

    #[test]
    fn point_mass_transport_is_straight() {
        let mu = vec![1.5, -2.0];
        let m = MixtureModel::isotropic(mu.clone(), 1e-14, "x").unwrap();
        let x = [0.7, 0.2];
        let t = 0.4;
        let v = m.velocity(&x, t, None).unwrap();
        for j in 0..2 {
            assert!((v[j] - (x[j] - mu[j]) / t).abs() < 1e-9);
        }
        let nfe = NfeCounter::new();
        let g = GuidanceConfig::new(0.7, Some("x".into())).unwrap();
        let out = sample(&m, &FlowSchedule::new(1).unwrap(), &g, &[3.0, -7.0], &nfe).unwrap();
        for j in 0..2 {
            assert!((out[j] - mu[j]).abs() < 1e-9);
        }
        assert_eq!(nfe.get(), 1);
    }

    #[test]
    fn guidance_endpoints_and_midpoint() {
        let m = two_component_2d();
        let x = [0.3, 0.1];
        for (beta, pick) in [(1.0, "cond"), (0.0, "uncond")] {
            let g = GuidanceConfig::new(beta, Some("a".into())).unwrap();
            let c = m.cfg_velocity(&x, 0.6, &g).unwrap();
            let want = if pick == "cond" { &c.cond } else { &c.uncond };
            assert_eq!(&c.guided, want);
        }
        let c = CfgVelocity::blend(vec![0.0, 2.0], vec![2.0, 0.0], 0.5);
        assert_eq!(c.guided, vec![1.0, 1.0]);
    }

    #[test]
    fn guidance_requires_condition() {
        let m = two_component_2d();
        let g = GuidanceConfig::new(0.5, None).unwrap();
        assert!(matches!(m.cfg_velocity(&[0.0, 0.0], 0.5, &g), Err(Error::Argument(_))));
        assert!(GuidanceConfig::new(1.5, None).is_err());
    }

    #[test]
    fn time_and_label_errors() {
        let m = two_component_2d();
        assert!(matches!(m.velocity(&[0.0, 0.0], 0.0, None), Err(Error::TimeDomain(_))));
        assert!(matches!(m.velocity(&[0.0, 0.0], -0.1, None), Err(Error::TimeDomain(_))));
        assert!(matches!(m.velocity(&[0.0, 0.0], 0.5, Some("zzz")), Err(Error::Argument(_))));
    }

    #[test]
    fn nfe_counts_steps() {
        let m = two_component_2d();
        let nfe = NfeCounter::new();
        let g = GuidanceConfig::new(0.7, Some("a".into())).unwrap();
        sample(&m, &FlowSchedule::new(20).unwrap(), &g, &[0.1, 0.2], &nfe).unwrap();
        assert_eq!(nfe.get(), 20);
    }

    #[test]
    fn fk_zero_cases() {
        let m = two_component_2d();
        let s = FlowSchedule::new(20).unwrap();
        let nfe = NfeCounter::new();
        for beta in [0.0, 1.0] {
            let g = GuidanceConfig::new(beta, Some("a".into())).unwrap();
            assert_eq!(fk_log_weight(&m, &s, &g, &[0.4, -0.3], &nfe).unwrap(), 0.0);
        }
        let single = MixtureModel::isotropic(vec![1.0, 1.0], 0.5, "a").unwrap();
        let g = GuidanceConfig::new(0.5, Some("a".into())).unwrap();
        assert_eq!(fk_log_weight(&single, &s, &g, &[0.4, -0.3], &nfe).unwrap(), 0.0);
    }

    #[test]
    fn fk_single_increment() {
        assert!((fk_increment(0.5, 1.0, 4.0, 0.1) - 0.05).abs() < 1e-15);
        // symmetric in beta <-> 1 - beta
        assert_eq!(fk_increment(0.3, 0.7, 2.5, 0.05), fk_increment(0.7, 0.7, 2.5, 0.05));
    }

    #[test]
    fn mixture_validation() {
        let bad = Component {
            mean: vec![0.0],
            variance: vec![0.0],
            weight: 1.0,
            label: "a".into(),
        };
        assert!(MixtureModel::new(vec![bad]).is_err());
        let half = Component {
            mean: vec![0.0],
            variance: vec![1.0],
            weight: 0.5,
            label: "a".into(),
        };
        assert!(MixtureModel::new(vec![half]).is_err());
        assert!(MixtureModel::new(vec![]).is_err());
    }

    #[test]
    fn mixture_file_round_trip() {
        let m = two_component_2d();
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.starts_with("{\"components\":"));
        let back: MixtureModel = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
        assert!(serde_json::from_str::<MixtureModel>("{\"components\":[]}").is_err());
    }
}
