//! Convergence diagnostics for one measurement update of a scenario.

use std::fmt::Write as _;

use meef_core::convergence::{compute_nu, convergence_report, empirical_contraction_check, ContractionCheck, ConvergenceReport};
use meef_core::meef::{build_regression, meef_update_with, UsedCriterion};
use meef_core::tuning::ParamSearchSpace;
use meef_core::ukf::{measurement_moments, predict};
use meef_core::filter::EstimatorConfig;
use meef_core::{Filter, Matrix, Vector};

use crate::config::ScenarioConfig;
use crate::report::fmt_sig6;
use crate::runner::{initial_noise, simulate, ScenarioModel};
use crate::BenchError;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeOptions {
    /// 1-based time step whose update is analysed.
    pub step: usize,
    /// Ball radius; defaults to `2ν`.
    pub beta: Option<f64>,
    pub alpha: f64,
    /// `σ1 / σ2`; defaults to the ratio of the selected widths.
    pub kernel_ratio: Option<f64>,
    pub samples: usize,
}

impl Default for ConvergeOptions {
    fn default() -> Self {
        ConvergeOptions {
            step: 1,
            beta: None,
            alpha: 0.5,
            kernel_ratio: None,
            samples: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvergeOutput {
    pub step: usize,
    pub criterion: UsedCriterion,
    pub report: ConvergenceReport,
    pub check: ContractionCheck,
}

/// Replays the first Monte-Carlo run with the adaptive estimator up to
/// `opts.step` and analyses that step's fixed-point map.
pub fn converge(cfg: &ScenarioConfig, opts: &ConvergeOptions) -> Result<ConvergeOutput, BenchError> {
    cfg.validate()?;
    if opts.step == 0 || opts.step > cfg.horizon {
        return Err(BenchError::Usage(format!("step must lie in 1..={}", cfg.horizon)));
    }
    let traj = simulate(cfg, cfg.seed)?;
    let model = ScenarioModel::new(cfg.model);
    let (q0, r1) = initial_noise(cfg);
    let ec = EstimatorConfig::a_meef(ParamSearchSpace::default(), q0, r1);
    let p0 = Matrix::from_diagonal(&Vector::from_vec(cfg.p0.clone()));
    let mut filter = Filter::new(model, ec.clone(), Vector::from_vec(cfg.x_hat0.clone()), p0)?;
    for y in &traj.measurements[..opts.step - 1] {
        filter.step(y);
    }
    let y = &traj.measurements[opts.step - 1];
    let (q, r) = (&filter.noise().q, &filter.noise().r);
    let (prior, _) = predict(filter.belief(), &model, q, &ec.ut)?;
    let mom = measurement_moments(&prior, &model, r, &ec.ut)?;
    let reg = build_regression(&prior, &mom, y, r)?;
    let used = meef_update_with(&prior, &reg, r, &ec.criterion)?.criterion;
    let sigma1 = used.sigma1.finite().expect("selected widths are finite");

    let nu = compute_nu(&reg.a, &reg.z, used.tau)?;
    let beta = opts.beta.unwrap_or(if nu > 0.0 { 2.0 * nu } else { 1.0 });
    let ratio = opts.kernel_ratio.unwrap_or(sigma1 / used.sigma2);
    let report = convergence_report(&reg.a, &reg.z, used.tau, used.sigma2, beta, opts.alpha, ratio)?;
    let check = empirical_contraction_check(&reg, used.tau, ratio * used.sigma2, used.sigma2, beta, opts.samples, cfg.seed);
    Ok(ConvergeOutput {
        step: opts.step,
        criterion: used,
        report,
        check,
    })
}

pub fn render(out: &ConvergeOutput) -> String {
    let r = &out.report;
    let opt = |v: Option<f64>| v.map_or_else(|| "no root in bracket".to_string(), fmt_sig6);
    let rows = [
        ("step", out.step.to_string()),
        ("tau", fmt_sig6(r.tau)),
        ("sigma1 (selected)", out.criterion.sigma1.to_string()),
        ("sigma2", fmt_sig6(r.sigma2)),
        ("kernel ratio b", fmt_sig6(r.kernel_ratio)),
        ("nu", fmt_sig6(r.nu)),
        ("beta", fmt_sig6(r.beta)),
        ("alpha", fmt_sig6(r.alpha)),
        ("sigma2*", opt(r.sigma2_star)),
        ("sigma2+", opt(r.sigma2_plus)),
        ("conditions met", r.conditions_met.to_string()),
        ("max eta1", fmt_sig6(r.eta1.iter().copied().fold(0.0, f64::max))),
        ("max eta2", fmt_sig6(r.eta2.max())),
        ("sampled points", out.check.samples.to_string()),
        ("max |grad g|_1", fmt_sig6(out.check.max_jacobian_norm)),
        ("max |g|_1", fmt_sig6(out.check.max_map_norm)),
        ("max fd discrepancy", fmt_sig6(out.check.max_fd_discrepancy)),
    ];
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut s = String::new();
    for (k, v) in rows {
        let _ = writeln!(s, "{k:<width$}  {v}");
    }
    s
}
