//! Monte-Carlo execution of a scenario.

use std::time::Instant;

use rayon::prelude::*;

use meef_core::filter::EstimatorConfig;
use meef_core::linalg::cholesky_lower;
use meef_core::tuning::ParamSearchSpace;
use meef_core::{CriterionConfig, Filter, Matrix, RngStream, SystemModel, Ungm, Variant, Vector, Vehicle};

use crate::config::{ModelId, ScenarioConfig};
use crate::metrics::{mean, rmse, RmseSeries};
use crate::BenchError;

/// Environment variable holding the Monte-Carlo worker count.
pub const WORKERS_ENV: &str = "BENCH_WORKERS";

/// Seeds of the held-out training runs start this far above the master seed.
pub const TRAINING_SEED_OFFSET: u64 = 1 << 40;

/// Fusion factor of the fixed-parameter `meef` estimator when its widths are trained.
pub const TRAINED_MEEF_TAU: f64 = 0.5;

#[derive(Debug, Clone, Copy)]
pub enum ScenarioModel {
    Ungm(Ungm),
    Vehicle(Vehicle),
}

impl ScenarioModel {
    pub fn new(id: ModelId) -> Self {
        match id {
            ModelId::Ungm => ScenarioModel::Ungm(Ungm),
            ModelId::Vehicle => ScenarioModel::Vehicle(Vehicle::default()),
        }
    }

    fn inner(&self) -> &dyn SystemModel {
        match self {
            ScenarioModel::Ungm(m) => m,
            ScenarioModel::Vehicle(m) => m,
        }
    }
}

impl SystemModel for ScenarioModel {
    fn state_dim(&self) -> usize {
        self.inner().state_dim()
    }
    fn meas_dim(&self) -> usize {
        self.inner().meas_dim()
    }
    fn transition(&self, x: &Vector) -> Vector {
        self.inner().transition(x)
    }
    fn measure(&self, x: &Vector) -> meef_core::Result<Vector> {
        self.inner().measure(x)
    }
}

/// True states and measurements for steps `1..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub truth: Vec<Vector>,
    pub measurements: Vec<Vector>,
}

pub fn simulate(cfg: &ScenarioConfig, seed: u64) -> Result<Trajectory, BenchError> {
    let model = ScenarioModel::new(cfg.model);
    let (n, m) = (model.state_dim(), model.meas_dim());
    let mut rng = RngStream::new(seed);
    let mut x = Vector::from_vec(cfg.x0.clone());
    let mut truth = Vec::with_capacity(cfg.horizon);
    let mut measurements = Vec::with_capacity(cfg.horizon);
    for _ in 0..cfg.horizon {
        x = model.transition(&x) + cfg.process_noise.sample(n, &mut rng);
        let y = model.measure(&x)? + cfg.measurement_noise.sample(m, &mut rng);
        truth.push(x.clone());
        measurements.push(y);
    }
    Ok(Trajectory { truth, measurements })
}

/// `(Q̂₀, R̂₁)` handed to every estimator of the scenario.
pub fn initial_noise(cfg: &ScenarioConfig) -> (Matrix, Matrix) {
    let n = cfg.model.state_dim();
    let m = cfg.model.meas_dim();
    let q = Matrix::identity(n, n) * cfg.process_noise.variance();
    let r = Matrix::identity(m, m) * cfg.measurement_noise.variance();
    if cfg.known_noise {
        (q, r)
    } else {
        (q * cfg.q_multiplier, r * cfg.r_multiplier)
    }
}

/// Kernel parameters chosen for the fixed-width baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineParams {
    pub mcc_sigma: f64,
    pub mee_sigma: f64,
    pub meef: (f64, f64, f64),
}

pub fn estimator_config(
    cfg: &ScenarioConfig,
    variant: Variant,
    params: &BaselineParams,
) -> Result<EstimatorConfig, BenchError> {
    let (q0, r1) = initial_noise(cfg);
    let ec = match variant {
        Variant::Ukf => EstimatorConfig::ukf(q0, r1),
        Variant::Aukf => EstimatorConfig::aukf(q0, r1),
        Variant::Mcc => EstimatorConfig::mcc(params.mcc_sigma, q0, r1)?,
        Variant::Mee => EstimatorConfig::mee(params.mee_sigma, q0, r1)?,
        Variant::Meef => {
            let (t, s1, s2) = params.meef;
            EstimatorConfig::meef(CriterionConfig::meef(t, s1, s2)?, q0, r1)
        }
        Variant::AMeef => EstimatorConfig::a_meef(ParamSearchSpace::default(), q0, r1),
    };
    ec.validate()?;
    Ok(ec)
}

/// Outcome of one estimator on one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    /// Posterior means; every entry from the first divergence on is `+inf`.
    pub estimates: Vec<Vector>,
    pub first_divergence: Option<usize>,
    pub divergence_events: usize,
    pub iterations: usize,
    /// Steps whose adapted noise estimates were not diagonal, floored and SPD.
    pub noise_violations: usize,
}

pub fn run_filter(cfg: &ScenarioConfig, ec: &EstimatorConfig, ys: &[Vector]) -> Result<RunTrace, BenchError> {
    let model = ScenarioModel::new(cfg.model);
    let x0 = Vector::from_vec(cfg.x_hat0.clone());
    let p0 = Matrix::from_diagonal(&Vector::from_vec(cfg.p0.clone()));
    let mut filter = Filter::new(model, ec.clone(), x0, p0)?;
    let n = model.state_dim();
    let mut trace = RunTrace {
        estimates: Vec::with_capacity(ys.len()),
        first_divergence: None,
        divergence_events: 0,
        iterations: 0,
        noise_violations: 0,
    };
    for (i, y) in ys.iter().enumerate() {
        let diag = filter.step(y);
        trace.iterations += diag.iterations;
        if diag.diverged {
            trace.divergence_events += 1;
            trace.first_divergence.get_or_insert(i);
        }
        if ec.adaptation {
            let est = filter.noise();
            if !est.is_revised_form() || cholesky_lower(&est.q).is_err() || cholesky_lower(&est.r).is_err() {
                trace.noise_violations += 1;
            }
        }
        trace.estimates.push(match trace.first_divergence {
            Some(_) => Vector::from_element(n, f64::INFINITY),
            None => filter.belief().mean.clone(),
        });
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorResult {
    pub variant: Variant,
    /// Human-readable kernel parameters, empty when there are none.
    pub params: String,
    pub full: RmseSeries,
    pub position: Option<RmseSeries>,
    pub velocity: Option<RmseSeries>,
    pub diverged_runs: usize,
    pub divergence_events: usize,
    pub mean_iterations: f64,
    pub noise_violations: usize,
    pub median_step_seconds: f64,
    pub mean_step_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WidthScore {
    pub width: f64,
    pub diverged_runs: usize,
    /// Average RMSE over the training runs that never diverged; NaN if none.
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingResult {
    pub variant: Variant,
    pub scores: Vec<WidthScore>,
    pub chosen: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultBundle {
    pub scenario: String,
    pub model: ModelId,
    pub runs: usize,
    pub horizon: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorResult>,
    pub training: Vec<TrainingResult>,
}

impl ResultBundle {
    pub fn get(&self, v: Variant) -> Option<&EstimatorResult> {
        self.estimators.iter().find(|e| e.variant == v)
    }
}

fn thread_pool() -> Result<rayon::ThreadPool, BenchError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| BenchError::Env(format!("{WORKERS_ENV}='{v}' is not a worker count")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| BenchError::Env(e.to_string()))
}

fn state_groups(model: ModelId) -> (Vec<usize>, Option<(Vec<usize>, Vec<usize>)>) {
    match model {
        ModelId::Ungm => (vec![0], None),
        ModelId::Vehicle => (vec![0, 1, 2, 3], Some((vec![0, 1], vec![2, 3]))),
    }
}

/// Ranks candidate widths on held-out seeds by the number of divergent runs,
/// then by the average RMSE of the remaining runs; ties keep the earlier width.
fn train_width(
    cfg: &ScenarioConfig,
    variant: Variant,
    trajs: &[Trajectory],
) -> Result<TrainingResult, BenchError> {
    let full_idx = state_groups(cfg.model).0;
    let mut scores = Vec::with_capacity(cfg.width_grid.len());
    for &w in &cfg.width_grid {
        let params = BaselineParams {
            mcc_sigma: w,
            mee_sigma: w,
            meef: (TRAINED_MEEF_TAU, w, w),
        };
        let ec = estimator_config(cfg, variant, &params)?;
        let traces = trajs
            .par_iter()
            .map(|t| run_filter(cfg, &ec, &t.measurements))
            .collect::<Result<Vec<_>, _>>()?;
        let (stable_truth, stable_est): (Vec<_>, Vec<_>) = trajs
            .iter()
            .zip(&traces)
            .filter(|(_, tr)| tr.first_divergence.is_none())
            .map(|(t, tr)| (t.truth.clone(), tr.estimates.clone()))
            .unzip();
        let rmse_stable = if stable_truth.is_empty() {
            f64::NAN
        } else {
            rmse(&stable_truth, &stable_est, &full_idx)?.average
        };
        scores.push(WidthScore {
            width: w,
            diverged_runs: trajs.len() - stable_truth.len(),
            rmse: rmse_stable,
        });
    }
    let key = |s: &WidthScore| (s.diverged_runs, if s.rmse.is_nan() { f64::INFINITY } else { s.rmse });
    let best = scores
        .iter()
        .fold(None, |best: Option<&WidthScore>, s| match best {
            Some(b) if key(b).0 < key(s).0 || (key(b).0 == key(s).0 && key(b).1 <= key(s).1) => Some(b),
            _ => Some(s),
        })
        .expect("nonempty width grid");
    Ok(TrainingResult {
        variant,
        chosen: best.width,
        scores,
    })
}

fn baseline_params(cfg: &ScenarioConfig) -> Result<(BaselineParams, Vec<TrainingResult>), BenchError> {
    let needs = |v: Variant, fixed: bool| cfg.estimators.contains(&v) && !fixed;
    let train_mcc = needs(Variant::Mcc, cfg.mcc_sigma.is_some());
    let train_mee = needs(Variant::Mee, cfg.mee_sigma.is_some());
    let train_meef = needs(Variant::Meef, cfg.meef_params.is_some());
    let mut training = Vec::new();
    let trajs = if train_mcc || train_mee || train_meef {
        (0..cfg.training_runs as u64)
            .into_par_iter()
            .map(|l| simulate(cfg, cfg.seed.wrapping_add(TRAINING_SEED_OFFSET).wrapping_add(l)))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        Vec::new()
    };
    let mut pick = |v: Variant, train: bool, given: Option<f64>| -> Result<f64, BenchError> {
        if train {
            let t = train_width(cfg, v, &trajs)?;
            let w = t.chosen;
            training.push(t);
            Ok(w)
        } else {
            Ok(given.unwrap_or(cfg.width_grid[0]))
        }
    };
    let mcc_sigma = pick(Variant::Mcc, train_mcc, cfg.mcc_sigma)?;
    let mee_sigma = pick(Variant::Mee, train_mee, cfg.mee_sigma)?;
    let meef = match cfg.meef_params {
        Some(p) => p,
        None => {
            let w = pick(Variant::Meef, train_meef, None)?;
            (TRAINED_MEEF_TAU, w, w)
        }
    };
    Ok((
        BaselineParams {
            mcc_sigma,
            mee_sigma,
            meef,
        },
        training,
    ))
}

fn params_label(variant: Variant, p: &BaselineParams) -> String {
    match variant {
        Variant::Mcc => format!("sigma={}", p.mcc_sigma),
        Variant::Mee => format!("sigma={}", p.mee_sigma),
        Variant::Meef => format!("tau={} sigma1={} sigma2={}", p.meef.0, p.meef.1, p.meef.2),
        Variant::AMeef => "online".to_string(),
        Variant::Ukf | Variant::Aukf => String::new(),
    }
}

/// Median and mean wall time of a single `step`, replaying the first
/// `cfg.timing_runs` trajectories serially.
fn time_steps(cfg: &ScenarioConfig, ec: &EstimatorConfig, trajs: &[Trajectory]) -> Result<(f64, f64), BenchError> {
    let model = ScenarioModel::new(cfg.model);
    let p0 = Matrix::from_diagonal(&Vector::from_vec(cfg.p0.clone()));
    let mut samples = Vec::new();
    for t in trajs.iter().take(cfg.timing_runs.max(1)) {
        let mut filter = Filter::new(model, ec.clone(), Vector::from_vec(cfg.x_hat0.clone()), p0.clone())?;
        for y in &t.measurements {
            let start = Instant::now();
            let d = filter.step(y);
            samples.push(start.elapsed().as_secs_f64());
            std::hint::black_box(d);
        }
    }
    let avg = mean(&samples);
    samples.sort_by(f64::total_cmp);
    let k = samples.len();
    let median = if k % 2 == 1 {
        samples[k / 2]
    } else {
        0.5 * (samples[k / 2 - 1] + samples[k / 2])
    };
    Ok((median, avg))
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ResultBundle, BenchError> {
    cfg.validate()?;
    let pool = thread_pool()?;
    pool.install(|| run_scenario_inner(cfg))
}

fn run_scenario_inner(cfg: &ScenarioConfig) -> Result<ResultBundle, BenchError> {
    let (params, training) = baseline_params(cfg)?;
    let configs = cfg
        .estimators
        .iter()
        .map(|&v| estimator_config(cfg, v, &params))
        .collect::<Result<Vec<_>, _>>()?;

    // every estimator of run l sees the measurements of the same trajectory
    let outputs = (0..cfg.runs as u64)
        .into_par_iter()
        .map(|l| {
            let traj = simulate(cfg, cfg.seed.wrapping_add(l))?;
            let traces = configs
                .iter()
                .map(|ec| run_filter(cfg, ec, &traj.measurements))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((traj, traces))
        })
        .collect::<Result<Vec<_>, BenchError>>()?;

    let truths: Vec<Vec<Vector>> = outputs.iter().map(|(t, _)| t.truth.clone()).collect();
    let trajs: Vec<Trajectory> = outputs.iter().map(|(t, _)| t.clone()).collect();
    let (full_idx, split) = state_groups(cfg.model);
    let steps_total = (cfg.runs * cfg.horizon) as f64;

    let mut estimators = Vec::with_capacity(configs.len());
    for (k, (&variant, ec)) in cfg.estimators.iter().zip(&configs).enumerate() {
        let traces: Vec<&RunTrace> = outputs.iter().map(|(_, tr)| &tr[k]).collect();
        let est: Vec<Vec<Vector>> = traces.iter().map(|t| t.estimates.clone()).collect();
        let (pos, vel) = match &split {
            Some((p, v)) => (Some(rmse(&truths, &est, p)?), Some(rmse(&truths, &est, v)?)),
            None => (None, None),
        };
        let (median, avg) = time_steps(cfg, ec, &trajs)?;
        estimators.push(EstimatorResult {
            variant,
            params: params_label(variant, &params),
            full: rmse(&truths, &est, &full_idx)?,
            position: pos,
            velocity: vel,
            diverged_runs: traces.iter().filter(|t| t.first_divergence.is_some()).count(),
            divergence_events: traces.iter().map(|t| t.divergence_events).sum(),
            mean_iterations: traces.iter().map(|t| t.iterations as f64).sum::<f64>() / steps_total,
            noise_violations: traces.iter().map(|t| t.noise_violations).sum(),
            median_step_seconds: median,
            mean_step_seconds: avg,
        });
    }

    Ok(ResultBundle {
        scenario: cfg.name.clone(),
        model: cfg.model,
        runs: cfg.runs,
        horizon: cfg.horizon,
        seed: cfg.seed,
        estimators,
        training,
    })
}
