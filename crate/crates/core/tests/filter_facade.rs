use meef_core::linalg::cholesky_lower;
use meef_core::meef::meef_update;
use meef_core::ukf::{measurement_moments, predict};
use meef_core::models::{LinearModel, NoiseCase};
use meef_core::tuning::ParamSearchSpace;
use meef_core::{
    CriterionConfig, EstimatorConfig, Filter, Matrix, RngStream, SystemModel, Variant, Vector, Vehicle,
};

mod common;
use common::{max_abs, normal_matrix};

fn linear_vehicle(seed: u64) -> LinearModel {
    let mut rng = RngStream::new(seed);
    let h = Matrix::identity(4, 4) + normal_matrix(&mut rng, 4, 4, 0.3);
    LinearModel::new(Vehicle::default().transition_matrix(), h).unwrap()
}

fn simulate(model: &dyn SystemModel, x0: &Vector, q: f64, r: f64, steps: usize, seed: u64) -> Vec<Vector> {
    let mut rng = RngStream::new(seed);
    let mut x = x0.clone();
    let mut ys = Vec::with_capacity(steps);
    for _ in 0..steps {
        x = model.transition(&x) + Vector::from_fn(x.len(), |_, _| q.sqrt() * rng.standard_normal());
        let y = model.measure(&x).unwrap();
        ys.push(&y + Vector::from_fn(y.len(), |_, _| r.sqrt() * rng.standard_normal()));
    }
    ys
}

fn x0() -> Vector {
    Vector::from_vec(vec![0.0, 0.0, 5.0, 10.0])
}

fn p0() -> Matrix {
    Matrix::from_diagonal(&Vector::from_vec(vec![10.0, 10.0, 50.0, 100.0]))
}

#[test]
fn unscented_filter_reproduces_the_linear_kalman_filter() {
    let model = linear_vehicle(41);
    let (q, r) = (Matrix::identity(4, 4) * 1e-3, Matrix::identity(4, 4) * 10.0);
    let ys = simulate(&model, &x0(), 1e-3, 10.0, 500, 42);
    let x_hat0 = Vector::from_vec(vec![1.0, 1.0, 4.0, 8.0]);
    let mut filter = Filter::new(&model, EstimatorConfig::ukf(q.clone(), r.clone()), x_hat0.clone(), p0()).unwrap();

    let (f, h) = (&model.f, &model.h);
    let mut x = x_hat0;
    let mut p = p0();
    for (i, y) in ys.iter().enumerate() {
        let xp = f * &x;
        let pp = f * &p * f.transpose() + &q;
        let s = h * &pp * h.transpose() + &r;
        let k = &pp * h.transpose() * s.try_inverse().unwrap();
        x = &xp + &k * (y - h * &xp);
        p = &pp - &k * h * &pp;

        let d = filter.step(y);
        assert!(!d.diverged, "step {i}: {:?}", d.failure);
        let b = filter.belief();
        assert!((&b.mean - &x).amax() <= 1e-8 * x.amax().max(1.0), "mean at step {i}");
        assert!(max_abs(&(&b.cov - &p)) <= 1e-8 * max_abs(&p).max(1.0), "covariance at step {i}");
    }
}

#[test]
fn quadratic_limit_filter_tracks_unscented_filter_step_by_step() {
    let model = linear_vehicle(43);
    let (q, r) = (Matrix::identity(4, 4) * 1e-3, Matrix::identity(4, 4) * 10.0);
    let ys = simulate(&model, &x0(), 1e-3, 10.0, 500, 44);
    let mut plain = Filter::new(&model, EstimatorConfig::ukf(q.clone(), r.clone()), x0(), p0()).unwrap();
    let mut robust = Filter::new(&model, EstimatorConfig::meef(CriterionConfig::ukf(), q, r), x0(), p0()).unwrap();
    for (i, y) in ys.iter().enumerate() {
        plain.step(y);
        let d = robust.step(y);
        assert_eq!(d.iterations.min(2), d.iterations, "step {i} iterated");
        let (a, b) = (plain.belief(), robust.belief());
        assert!((&a.mean - &b.mean).amax() <= 1e-8 * a.mean.amax().max(1.0), "step {i}");
        assert!(max_abs(&(&a.cov - &b.cov)) <= 1e-8, "step {i}");
    }
}

fn vehicle_configs() -> Vec<EstimatorConfig> {
    let q = Matrix::identity(4, 4) * 1e-3;
    let r = Matrix::identity(4, 4) * 10.0;
    vec![
        EstimatorConfig::ukf(q.clone(), r.clone()),
        EstimatorConfig::aukf(q.clone(), r.clone()),
        EstimatorConfig::mcc(2.0, q.clone(), r.clone()).unwrap(),
        EstimatorConfig::mee(2.0, q.clone(), r.clone()).unwrap(),
        EstimatorConfig::meef(CriterionConfig::meef(0.5, 2.0, 2.0).unwrap(), q.clone(), r.clone()),
        EstimatorConfig::a_meef(ParamSearchSpace::default(), q, r),
    ]
}

fn vehicle_stream(case: NoiseCase, steps: usize, seed: u64) -> Vec<Vector> {
    let model = Vehicle::default();
    let noise = case.mixture();
    let mut rng = RngStream::new(seed);
    let mut x = x0();
    let mut ys = Vec::new();
    for _ in 0..steps {
        x = model.transition(&x) + Vector::from_fn(4, |_, _| 1e-3f64.sqrt() * rng.standard_normal());
        ys.push(model.measure(&x).unwrap() + noise.sample(4, &mut rng));
    }
    ys
}

#[test]
fn every_accepted_covariance_is_positive_definite() {
    let ys = vehicle_stream(NoiseCase::B, 300, 45);
    for cfg in vehicle_configs() {
        let variant = cfg.variant;
        let mut f = Filter::new(Vehicle::default(), cfg, x0(), p0()).unwrap();
        for y in &ys {
            let d = f.step(y);
            let cov = &f.belief().cov;
            assert_eq!(cov, &cov.transpose(), "{variant}");
            assert!(cholesky_lower(cov).is_ok(), "{variant}");
            if let Some(c) = d.criterion {
                assert!((0.0..=1.0).contains(&c.tau));
            }
            if f.config().adaptation {
                assert!(f.noise().is_revised_form(), "{variant}");
            }
        }
    }
}

#[test]
fn reruns_are_bit_identical() {
    let ys = vehicle_stream(NoiseCase::D, 200, 46);
    for cfg in vehicle_configs() {
        let run = |cfg: EstimatorConfig| {
            let mut f = Filter::new(Vehicle::default(), cfg, x0(), p0()).unwrap();
            ys.iter()
                .map(|y| {
                    f.step(y);
                    f.belief().mean.clone()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(cfg.clone()), run(cfg));
    }
}

#[test]
fn adaptive_variant_selects_from_candidate_sets() {
    let ys = vehicle_stream(NoiseCase::C, 100, 47);
    let space = ParamSearchSpace::default();
    let cfg = vehicle_configs().pop().unwrap();
    assert_eq!(cfg.variant, Variant::AMeef);
    let mut f = Filter::new(Vehicle::default(), cfg, x0(), p0()).unwrap();
    let mut selected = 0;
    for y in &ys {
        if let Some(c) = f.step(y).criterion {
            selected += 1;
            assert!(space.sigma1_set.contains(&c.sigma1.finite().unwrap()));
            assert!(space.sigma2_set.contains(&c.sigma2));
        }
    }
    assert!(selected > 0);
}

#[test]
fn adaptive_step_equals_fused_update_with_the_selected_triple() {
    let ys = vehicle_stream(NoiseCase::B, 200, 48);
    let q = Matrix::identity(4, 4) * 1e-3;
    let r = Matrix::identity(4, 4) * 10.0;
    let mut cfg = EstimatorConfig::a_meef(ParamSearchSpace::default(), q.clone(), r.clone());
    cfg.adaptation = false;
    let ut = cfg.ut;
    let model = Vehicle::default();
    let mut adaptive = Filter::new(model, cfg, x0(), p0()).unwrap();
    let mut compared = 0;
    for y in &ys {
        let before = adaptive.belief().clone();
        let d = adaptive.step(y);
        let Some(used) = d.criterion else { continue };
        let (prior, _) = predict(&before, &model, &q, &ut).unwrap();
        let mom = measurement_moments(&prior, &model, &r, &ut).unwrap();
        let fixed = CriterionConfig::new(used.tau, used.sigma1, used.sigma2).unwrap();
        let out = meef_update(&prior, &mom, y, &r, &fixed).unwrap();
        assert_eq!(out.posterior.mean, adaptive.belief().mean);
        assert_eq!(out.posterior.cov, adaptive.belief().cov);
        compared += 1;
    }
    assert_eq!(adaptive.noise().q, q);
    assert_eq!(adaptive.noise().r, r);
    assert!(compared > 150);
}
