use meef_core::Vector;

use crate::BenchError;

/// Per-step root-mean-square error across Monte-Carlo runs.
#[derive(Debug, Clone, PartialEq)]
pub struct RmseSeries {
    pub values: Vec<f64>,
    pub average: f64,
}

impl RmseSeries {
    pub fn from_values(values: Vec<f64>) -> Self {
        let average = mean(&values);
        RmseSeries { values, average }
    }
}

/// Left-to-right arithmetic mean; NaN for an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// `RMSE_i = sqrt((1/M) Σ_l ‖x̂_i - x_i‖²)` over the selected components.
///
/// `truths[l][i]` and `estimates[l][i]` hold run `l`, step `i`.
pub fn rmse(truths: &[Vec<Vector>], estimates: &[Vec<Vector>], components: &[usize]) -> Result<RmseSeries, BenchError> {
    let shape = |runs: &[Vec<Vector>]| -> Vec<usize> { runs.iter().map(|r| r.len()).collect() };
    if truths.is_empty() || shape(truths) != shape(estimates) {
        return Err(BenchError::Shape(format!(
            "{} truth runs vs {} estimate runs with mismatched lengths",
            truths.len(),
            estimates.len()
        )));
    }
    let steps = truths[0].len();
    if truths.iter().any(|r| r.len() != steps) {
        return Err(BenchError::Shape("runs differ in length".into()));
    }
    let m = truths.len() as f64;
    let mut values = vec![0.0; steps];
    for (run_t, run_e) in truths.iter().zip(estimates) {
        for (i, (t, e)) in run_t.iter().zip(run_e).enumerate() {
            if t.len() != e.len() {
                return Err(BenchError::Shape(format!("state sizes {} vs {}", t.len(), e.len())));
            }
            for &c in components {
                if c >= t.len() {
                    return Err(BenchError::Shape(format!("component {c} out of range for size {}", t.len())));
                }
                let d = e[c] - t[c];
                values[i] += d * d;
            }
        }
    }
    for v in &mut values {
        *v = (*v / m).sqrt();
    }
    Ok(RmseSeries::from_values(values))
}
