//! The closed-form mixture flow against independent numerical oracles.

use noise_search::flow::{integrate, Component, FlowSchedule, GuidanceConfig, MixtureModel, NfeCounter};
use noise_search::noise::{rng_from_seed, standard_normal, standard_normal_vec};
use rand::Rng;

fn two_class_1d() -> MixtureModel {
    MixtureModel::new(vec![
        Component {
            mean: vec![-1.5],
            variance: vec![0.3],
            weight: 0.4,
            label: "a".into(),
        },
        Component {
            mean: vec![2.0],
            variance: vec![0.8],
            weight: 0.6,
            label: "b".into(),
        },
    ])
    .unwrap()
}

fn gauss(x: f64, m: f64, v: f64) -> f64 {
    (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
}

/// `E[eps - x0 | x_t = x]` by brute-force quadrature over `x0`, using only the
/// interpolation `x_t = (1 - t) x0 + t eps` and the data density.
fn quadrature_velocity(comps: &[(f64, f64, f64)], x: f64, t: f64) -> f64 {
    let (lo, hi, n) = (-15.0, 15.0, 300_001);
    let h = (hi - lo) / (n - 1) as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        let x0 = lo + i as f64 * h;
        let prior: f64 = comps.iter().map(|(w, m, v)| w * gauss(x0, *m, *v)).sum();
        let eps = (x - (1.0 - t) * x0) / t;
        // density of x_t given x0 is N((1-t) x0, t^2)
        let p = prior * gauss(x, (1.0 - t) * x0, t * t);
        let wgt = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        num += wgt * p * (eps - x0);
        den += wgt * p;
    }
    num / den
}

#[test]
fn velocity_matches_quadrature() {
    let m = two_class_1d();
    let comps = [(0.4, -1.5, 0.3), (0.6, 2.0, 0.8)];
    for &(x, t) in &[(0.3, 0.5), (-2.0, 0.9), (1.7, 0.2), (4.0, 0.7), (-0.4, 0.05), (0.0, 1.0)] {
        let v = m.velocity(&[x], t, None).unwrap()[0];
        let oracle = quadrature_velocity(&comps, x, t);
        assert!((v - oracle).abs() < 1e-6, "x={x} t={t}: {v} vs {oracle}");
        // conditioning on a label restricts to that component
        let vb = m.velocity(&[x], t, Some("b")).unwrap()[0];
        let ob = quadrature_velocity(&comps[1..], x, t);
        assert!((vb - ob).abs() < 1e-6, "x={x} t={t}: {vb} vs {ob}");
    }
}

#[test]
fn score_is_gradient_of_log_density_and_tied_to_velocity() {
    let m = MixtureModel::toy(3, 3, 1.5, 0.6, 2).unwrap();
    let mut rng = rng_from_seed(1);
    for _ in 0..100 {
        let x = standard_normal_vec(&mut rng, 3);
        let t: f64 = rng.random_range(0.05..0.95);
        let s = m.score(&x, t, None).unwrap();
        let v = m.velocity(&x, t, None).unwrap();
        for j in 0..3 {
            let rel = -(x[j] + t * s[j]) / (1.0 - t);
            assert!((v[j] - rel).abs() < 1e-6);
            let h = 1e-5;
            let mut up = x.clone();
            let mut dn = x.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (m.log_density(&up, t, None).unwrap() - m.log_density(&dn, t, None).unwrap()) / (2.0 * h);
            assert!((fd - s[j]).abs() < 1e-4, "fd {fd} vs {}", s[j]);
        }
    }
}

#[test]
fn log_density_is_normalized() {
    let m = two_class_1d();
    let t = 0.4;
    let h = 1e-3;
    let total: f64 = (-20_000..=20_000)
        .map(|i| m.log_density(&[i as f64 * h], t, None).unwrap().exp() * h)
        .sum();
    assert!((total - 1.0).abs() < 1e-6, "{total}");
}

#[test]
fn single_gaussian_transport_is_affine() {
    // For N(mu, s^2 I) the exact flow map is eps -> mu + s * eps.
    let mu = vec![0.5, -2.0, 1.0];
    let s2 = 0.36;
    let m = MixtureModel::isotropic(mu.clone(), s2, "only").unwrap();
    let g = GuidanceConfig::new(1.0, Some("only".into())).unwrap();
    let schedule = FlowSchedule::new(2000).unwrap();
    let mut rng = rng_from_seed(8);
    for _ in 0..5 {
        let eps = standard_normal_vec(&mut rng, 3);
        let out = integrate(&m, &schedule, &g, &eps, &NfeCounter::new()).unwrap();
        for j in 0..3 {
            let exact = mu[j] + s2.sqrt() * eps[j];
            assert!((out.sample[j] - exact).abs() < 5e-3, "{} vs {exact}", out.sample[j]);
        }
        assert_eq!(out.log_weight, 0.0);
    }
}

#[test]
fn sampler_reproduces_mixture_moments() {
    let m = two_class_1d();
    let (mean, cov) = m.data_moments();
    let g = GuidanceConfig::new(0.0, None).unwrap();
    let schedule = FlowSchedule::new(200).unwrap();
    let mut rng = rng_from_seed(21);
    let n = 4000;
    let xs: Vec<f64> = (0..n)
        .map(|_| {
            let e = [standard_normal(&mut rng)];
            integrate(&m, &schedule, &g, &e, &NfeCounter::new()).unwrap().sample[0]
        })
        .collect();
    let sm = xs.iter().sum::<f64>() / n as f64;
    let sv = xs.iter().map(|x| (x - sm) * (x - sm)).sum::<f64>() / n as f64;
    let se = (cov[0][0] / n as f64).sqrt();
    assert!((sm - mean[0]).abs() < 4.0 * se, "mean {sm} vs {}", mean[0]);
    assert!((sv - cov[0][0]).abs() / cov[0][0] < 0.08, "var {sv} vs {}", cov[0][0]);
}

#[test]
fn guidance_endpoints_are_exact() {
    let m = two_class_1d();
    let x = [0.7];
    for (beta, expect_cond) in [(1.0, true), (0.0, false)] {
        let g = GuidanceConfig::new(beta, Some("a".into())).unwrap();
        let c = m.cfg_velocity(&x, 0.6, &g).unwrap();
        let want = if expect_cond { &c.cond } else { &c.uncond };
        assert_eq!(&c.guided, want);
    }
    assert!(GuidanceConfig::new(1.5, None).is_err());
}

#[test]
fn nfe_counter_counts_every_step() {
    let m = two_class_1d();
    let g = GuidanceConfig::new(0.5, Some("b".into())).unwrap();
    let counter = NfeCounter::new();
    for steps in [1, 7, 20] {
        let before = counter.get();
        integrate(&m, &FlowSchedule::new(steps).unwrap(), &g, &[0.1], &counter).unwrap();
        assert_eq!(counter.get() - before, steps as u64);
    }
}
