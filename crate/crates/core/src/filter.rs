//! Named estimators behind a single `step` interface.

use std::fmt;
use std::str::FromStr;

use crate::linalg::cholesky_lower;
use crate::meef::{meef_update, CriterionConfig, KernelWidth, UsedCriterion};
use crate::models::SystemModel;
use crate::noise::{NoiseEstimates, DEFAULT_FORGETTING};
use crate::tuning::ParamSearchSpace;
use crate::ukf::{measurement_moments, predict, ukf_update, GaussianBelief, UtParams};
use crate::{Error, Matrix, Result, Vector};

/// Posterior means with a larger 2-norm count as divergence.
pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Ukf,
    Aukf,
    Mcc,
    Mee,
    Meef,
    AMeef,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Ukf,
        Variant::Aukf,
        Variant::Mcc,
        Variant::Mee,
        Variant::Meef,
        Variant::AMeef,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::Ukf => "ukf",
            Variant::Aukf => "aukf",
            Variant::Mcc => "mcc",
            Variant::Mee => "mee",
            Variant::Meef => "meef",
            Variant::AMeef => "a-meef",
        }
    }

    /// Display name as used in result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Variant::Ukf => "UKF",
            Variant::Aukf => "AUKF",
            Variant::Mcc => "MCC-UKF",
            Variant::Mee => "MEE-UKF",
            Variant::Meef => "MEEF-UKF",
            Variant::AMeef => "A-MEEF-UKF",
        }
    }

    fn uses_plain_update(self) -> bool {
        matches!(self, Variant::Ukf | Variant::Aukf)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        Variant::ALL
            .into_iter()
            .find(|v| v.tag() == t || v.display_name().eq_ignore_ascii_case(&t))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown estimator '{s}'")))
    }
}

#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub variant: Variant,
    pub ut: UtParams,
    /// Ignored by `ukf` and `aukf`, which always use `Φ = I`.
    pub criterion: CriterionConfig,
    pub adaptation: bool,
    pub forgetting: f64,
    /// Initial process-noise estimate `Q̂₀`.
    pub q0: Matrix,
    /// Initial measurement-noise estimate `R̂₁`.
    pub r1: Matrix,
    pub divergence_threshold: f64,
}

impl EstimatorConfig {
    fn base(variant: Variant, criterion: CriterionConfig, adaptation: bool, q0: Matrix, r1: Matrix) -> Self {
        EstimatorConfig {
            variant,
            ut: UtParams::default(),
            criterion,
            adaptation,
            forgetting: DEFAULT_FORGETTING,
            q0,
            r1,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
        }
    }

    pub fn ukf(q0: Matrix, r1: Matrix) -> Self {
        Self::base(Variant::Ukf, CriterionConfig::ukf(), false, q0, r1)
    }

    pub fn aukf(q0: Matrix, r1: Matrix) -> Self {
        Self::base(Variant::Aukf, CriterionConfig::ukf(), true, q0, r1)
    }

    pub fn mcc(sigma: f64, q0: Matrix, r1: Matrix) -> Result<Self> {
        Ok(Self::base(Variant::Mcc, CriterionConfig::mcc(sigma)?, false, q0, r1))
    }

    pub fn mee(sigma: f64, q0: Matrix, r1: Matrix) -> Result<Self> {
        Ok(Self::base(Variant::Mee, CriterionConfig::mee(sigma)?, false, q0, r1))
    }

    pub fn meef(criterion: CriterionConfig, q0: Matrix, r1: Matrix) -> Self {
        Self::base(Variant::Meef, criterion, false, q0, r1)
    }

    /// Adaptive noise estimation plus per-step parameter selection.
    pub fn a_meef(space: ParamSearchSpace, q0: Matrix, r1: Matrix) -> Self {
        // starting triple only matters if tuning is later switched off
        let criterion = CriterionConfig::meef(0.5, 1.0, 1.0)
            .expect("valid")
            .with_tuning(space);
        Self::base(Variant::AMeef, criterion, true, q0, r1)
    }

    pub fn validate(&self) -> Result<()> {
        self.criterion.validate()?;
        let c = &self.criterion;
        let bad = |msg: &str| Err(Error::InvalidParameter(format!("{}: {msg}", self.variant)));
        match self.variant {
            Variant::Ukf | Variant::Aukf => {
                if c.tau != 1.0 || c.sigma1 != KernelWidth::Infinite || c.tuning.is_some() {
                    return bad("requires tau = 1 and an infinite sigma1");
                }
                if self.adaptation != (self.variant == Variant::Aukf) {
                    return bad("adaptation must be on for aukf and off for ukf");
                }
            }
            Variant::Mcc => {
                if c.tau != 1.0 || c.sigma1.finite().is_none() || c.tuning.is_some() {
                    return bad("requires tau = 1 and a finite sigma1");
                }
            }
            Variant::Mee => {
                if c.tau != 0.0 || c.tuning.is_some() {
                    return bad("requires tau = 0");
                }
            }
            Variant::Meef if c.tuning.is_some() => return bad("uses fixed parameters"),
            Variant::Meef | Variant::AMeef => {}
        }
        if !(self.forgetting > 0.0 && self.forgetting < 1.0) {
            return bad("forgetting factor must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// Set when the step failed or the posterior mean left the sane range;
    /// the covariance was reset to `P₀`.
    pub diverged: bool,
    pub failure: Option<Error>,
    pub criterion: Option<UsedCriterion>,
}

/// One estimator instance. Single owner; distinct instances are independent.
#[derive(Debug, Clone)]
pub struct Filter<M: SystemModel> {
    model: M,
    cfg: EstimatorConfig,
    belief: GaussianBelief,
    p0: Matrix,
    noise: NoiseEstimates,
    divergences: usize,
}

struct StepResult {
    belief: GaussianBelief,
    noise: NoiseEstimates,
    iterations: usize,
    converged: bool,
    criterion: Option<UsedCriterion>,
}

impl<M: SystemModel> Filter<M> {
    pub fn new(model: M, cfg: EstimatorConfig, x0: Vector, p0: Matrix) -> Result<Self> {
        cfg.validate()?;
        let n = model.state_dim();
        let m = model.meas_dim();
        if x0.len() != n || cfg.q0.shape() != (n, n) || cfg.r1.shape() != (m, m) {
            return Err(Error::dims(
                format!("state {n}, Q {n}x{n}, R {m}x{m}"),
                format!("state {}, Q {:?}, R {:?}", x0.len(), cfg.q0.shape(), cfg.r1.shape()),
            ));
        }
        let belief = GaussianBelief::new(x0, p0.clone())?;
        let noise = NoiseEstimates::new(cfg.q0.clone(), cfg.r1.clone(), cfg.forgetting)?;
        Ok(Filter {
            model,
            cfg,
            belief,
            p0,
            noise,
            divergences: 0,
        })
    }

    pub fn belief(&self) -> &GaussianBelief {
        &self.belief
    }

    pub fn noise(&self) -> &NoiseEstimates {
        &self.noise
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.cfg
    }

    pub fn divergences(&self) -> usize {
        self.divergences
    }

    fn try_step(&self, y: &Vector) -> Result<StepResult> {
        let ut = &self.cfg.ut;
        let (prior, _) = predict(&self.belief, &self.model, &self.noise.q, ut)?;
        let mom = measurement_moments(&prior, &self.model, &self.noise.r, ut)?;

        let (posterior, gain, iterations, converged, criterion) = if self.cfg.variant.uses_plain_update() {
            let up = ukf_update(&prior, &mom, y)?;
            (up.posterior, up.gain, 1, true, None)
        } else {
            let out = meef_update(&prior, &mom, y, &self.noise.r, &self.cfg.criterion)?;
            (out.posterior, out.gain, out.iterations, out.converged, Some(out.criterion))
        };

        if !(posterior.mean.norm() <= self.cfg.divergence_threshold) {
            return Err(Error::NonFinite("posterior mean beyond divergence threshold"));
        }

        let mut noise = self.noise.clone();
        if self.cfg.adaptation {
            let innovation = y - &mom.y_hat;
            noise.update(&gain, &innovation, &posterior.cov, &prior.cov, &mom.p_yy);
            // revised estimates are diagonal with floored entries
            cholesky_lower(&noise.q)?;
            cholesky_lower(&noise.r)?;
        }
        Ok(StepResult {
            belief: posterior,
            noise,
            iterations,
            converged,
            criterion,
        })
    }

    /// Predict, update and (optionally) adapt the noise estimates for one
    /// measurement. Failures never propagate: they reset the covariance to
    /// `P₀`, keep the previous mean, and raise the divergence flag.
    pub fn step(&mut self, y: &Vector) -> StepDiagnostics {
        match self.try_step(y) {
            Ok(res) => {
                self.belief = res.belief;
                self.noise = res.noise;
                StepDiagnostics {
                    iterations: res.iterations,
                    converged: res.converged,
                    diverged: false,
                    failure: None,
                    criterion: res.criterion,
                }
            }
            Err(err) => {
                self.divergences += 1;
                self.belief.cov = self.p0.clone();
                if !self.belief.mean.iter().all(|v| v.is_finite()) {
                    self.belief.mean = Vector::zeros(self.belief.dim());
                }
                self.noise.step += 1;
                StepDiagnostics {
                    iterations: 0,
                    converged: false,
                    diverged: true,
                    failure: Some(err),
                    criterion: None,
                }
            }
        }
    }
}
