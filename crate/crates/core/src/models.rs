//! System models, the two benchmark systems and Gaussian-mixture noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Matrix, Result, Vector};

/// A time-invariant discrete system `x_i = f(x_{i-1}) + q`, `y_i = h(x_i) + r`.
///
/// Both maps are deterministic; noise is added by the caller.
pub trait SystemModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn meas_dim(&self) -> usize;
    fn transition(&self, x: &Vector) -> Vector;
    fn measure(&self, x: &Vector) -> Result<Vector>;
}

impl<M: SystemModel + ?Sized> SystemModel for &M {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn meas_dim(&self) -> usize {
        (**self).meas_dim()
    }
    fn transition(&self, x: &Vector) -> Vector {
        (**self).transition(x)
    }
    fn measure(&self, x: &Vector) -> Result<Vector> {
        (**self).measure(x)
    }
}

/// Univariate non-stationary growth model transition.
///
/// The cosine takes the state as its argument.
pub fn ungm_step(x: f64) -> f64 {
    0.5 * x + 25.0 * x / (1.0 + x * x) + 8.0 * (1.2 * x).cos()
}

pub fn ungm_measure(x: f64) -> f64 {
    x * x / 20.0
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Ungm;

impl SystemModel for Ungm {
    fn state_dim(&self) -> usize {
        1
    }
    fn meas_dim(&self) -> usize {
        1
    }
    fn transition(&self, x: &Vector) -> Vector {
        Vector::from_element(1, ungm_step(x[0]))
    }
    fn measure(&self, x: &Vector) -> Result<Vector> {
        Ok(Vector::from_element(1, ungm_measure(x[0])))
    }
}

/// Constant-velocity step for the state `[north, east, v_north, v_east]`.
pub fn vehicle_step(x: &Vector, dt: f64) -> Vector {
    Vector::from_vec(vec![x[0] + dt * x[2], x[1] + dt * x[3], x[2], x[3]])
}

/// Vehicle measurement with instrument offsets `x_bar`, `y_bar`.
///
/// The bearing term pairs `x2 - x_bar` with `x1 - y_bar`.
pub fn vehicle_measure(x: &Vector, x_bar: f64, y_bar: f64) -> Result<Vector> {
    let ratio = (x[1] - x_bar) / (x[0] - y_bar);
    if !(ratio >= 0.0) {
        return Err(Error::Domain(format!(
            "bearing ratio {ratio} is negative or undefined"
        )));
    }
    Ok(Vector::from_vec(vec![
        -x[0] - x[2],
        -x[1] - x[3],
        (x[0] * x[0] + x[1] * x[1]).sqrt(),
        ratio.sqrt().atan(),
    ]))
}

#[derive(Debug, Clone, Copy)]
pub struct Vehicle {
    pub dt: f64,
    pub x_bar: f64,
    pub y_bar: f64,
}

impl Default for Vehicle {
    fn default() -> Self {
        Vehicle {
            dt: 0.2,
            x_bar: -100.0,
            y_bar: -100.0,
        }
    }
}

impl Vehicle {
    pub fn transition_matrix(&self) -> Matrix {
        let mut f = Matrix::identity(4, 4);
        f[(0, 2)] = self.dt;
        f[(1, 3)] = self.dt;
        f
    }
}

impl SystemModel for Vehicle {
    fn state_dim(&self) -> usize {
        4
    }
    fn meas_dim(&self) -> usize {
        4
    }
    fn transition(&self, x: &Vector) -> Vector {
        vehicle_step(x, self.dt)
    }
    fn measure(&self, x: &Vector) -> Result<Vector> {
        vehicle_measure(x, self.x_bar, self.y_bar)
    }
}

/// Linear model `f(x) = F x`, `h(x) = H x`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub f: Matrix,
    pub h: Matrix,
}

impl LinearModel {
    pub fn new(f: Matrix, h: Matrix) -> Result<Self> {
        if !f.is_square() || h.ncols() != f.nrows() {
            return Err(Error::dims(
                "square F and H with matching columns",
                format!("F {:?}, H {:?}", f.shape(), h.shape()),
            ));
        }
        Ok(LinearModel { f, h })
    }
}

impl SystemModel for LinearModel {
    fn state_dim(&self) -> usize {
        self.f.nrows()
    }
    fn meas_dim(&self) -> usize {
        self.h.nrows()
    }
    fn transition(&self, x: &Vector) -> Vector {
        &self.f * x
    }
    fn measure(&self, x: &Vector) -> Result<Vector> {
        Ok(&self.h * x)
    }
}

/// Seeded, portable random stream. Identical seeds and call sequences give
/// bit-identical samples on every platform.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Scalar Gaussian mixture, applied i.i.d. to every coordinate of a noise vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureNoise {
    components: Vec<MixtureComponent>,
}

/// Measurement-noise cases of the vehicle benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseCase {
    /// Gaussian, variance 10.
    A,
    /// Gaussian with rare large outliers.
    B,
    /// Bimodal Gaussian with rare large outliers.
    C,
    /// Asymmetric: a shifted bulk plus far-off positive outliers.
    D,
}

impl NoiseCase {
    pub const ALL: [NoiseCase; 4] = [NoiseCase::A, NoiseCase::B, NoiseCase::C, NoiseCase::D];

    pub fn letter(self) -> char {
        match self {
            NoiseCase::A => 'a',
            NoiseCase::B => 'b',
            NoiseCase::C => 'c',
            NoiseCase::D => 'd',
        }
    }

    pub fn from_letter(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Some(NoiseCase::A),
            "b" => Some(NoiseCase::B),
            "c" => Some(NoiseCase::C),
            "d" => Some(NoiseCase::D),
            _ => None,
        }
    }

    pub fn mixture(self) -> MixtureNoise {
        let c = |weight, mean, variance| MixtureComponent {
            weight,
            mean,
            variance,
        };
        let comps = match self {
            NoiseCase::A => vec![c(1.0, 0.0, 10.0)],
            NoiseCase::B => vec![c(0.99, 0.0, 0.001), c(0.01, 0.0, 1000.0)],
            NoiseCase::C => vec![
                c(0.49, -0.1, 0.001),
                c(0.49, 0.1, 0.001),
                c(0.02, 0.0, 1000.0),
            ],
            NoiseCase::D => vec![c(0.99, -0.1, 0.001), c(0.01, 100.0, 1000.0)],
        };
        MixtureNoise::new(comps).expect("built-in cases are valid")
    }
}

impl MixtureNoise {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("mixture has no components".into()));
        }
        for c in &components {
            if !(0.0..=1.0).contains(&c.weight) || !c.mean.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "invalid mixture component {c:?}"
                )));
            }
            if !(c.variance >= 0.0) || !c.variance.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "mixture variance must be finite and nonnegative, got {}",
                    c.variance
                )));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        Ok(MixtureNoise { components })
    }

    /// Single zero-mean Gaussian component.
    pub fn gaussian(variance: f64) -> Result<Self> {
        Self::new(vec![MixtureComponent {
            weight: 1.0,
            mean: 0.0,
            variance,
        }])
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    /// Law of total variance.
    pub fn variance(&self) -> f64 {
        let second: f64 = self
            .components
            .iter()
            .map(|c| c.weight * (c.variance + c.mean * c.mean))
            .sum();
        let mean = self.mean();
        second - mean * mean
    }

    pub fn sample_scalar(&self, rng: &mut RngStream) -> f64 {
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut chosen = self.components.last().expect("nonempty");
        for c in &self.components {
            acc += c.weight;
            if u < acc {
                chosen = c;
                break;
            }
        }
        let z = rng.standard_normal();
        chosen.mean + chosen.variance.sqrt() * z
    }

    /// Draws a `dim`-vector with independent coordinates.
    pub fn sample(&self, dim: usize, rng: &mut RngStream) -> Vector {
        Vector::from_iterator(dim, (0..dim).map(|_| self.sample_scalar(rng)))
    }
}
