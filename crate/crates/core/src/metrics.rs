//! Window-level error metrics. Estimates are compared with actual total fan
//! power over the window slots `τ`.

use crate::error::{Error, Result};

/// Two-sided 95% normal quantile used for AEC confidence intervals.
pub const Z_95: f64 = 1.96;

fn check_pair(estimate: &[f64], actual: &[f64], min_len: usize) -> Result<()> {
    if estimate.len() != actual.len() {
        return Err(Error::LengthMismatch {
            expected: actual.len(),
            actual: estimate.len(),
        });
    }
    if actual.len() < min_len {
        return Err(Error::TooFewSlots {
            needed: min_len,
            actual: actual.len(),
        });
    }
    Ok(())
}

fn mean_actual(actual: &[f64]) -> Result<f64> {
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    if mean == 0.0 {
        return Err(Error::ZeroMeanActual);
    }
    Ok(mean)
}

/// CV(RMSE) in percent, with the `|τ| − 1` divisor.
pub fn cv(estimate: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(estimate, actual, 2)?;
    let mean = mean_actual(actual)?;
    let n = actual.len() as f64;
    let sse: f64 = estimate.iter().zip(actual).map(|(e, a)| (e - a) * (e - a)).sum();
    Ok(100.0 * (sse / (n - 1.0)).sqrt() / mean)
}

/// Normalized mean bias error in percent. Positive means overestimation.
///
/// The bias sum is divided by `|τ| − 1`; pass `conventional = true` for the
/// usual `|τ|` divisor.
pub fn nmbe_with(estimate: &[f64], actual: &[f64], conventional: bool) -> Result<f64> {
    check_pair(estimate, actual, 2)?;
    let mean = mean_actual(actual)?;
    let n = actual.len() as f64;
    let bias: f64 = estimate.iter().zip(actual).map(|(e, a)| e - a).sum();
    let divisor = if conventional { n } else { n - 1.0 };
    Ok(100.0 * (bias / divisor) / mean)
}

pub fn nmbe(estimate: &[f64], actual: &[f64]) -> Result<f64> {
    nmbe_with(estimate, actual, false)
}

/// Additional energy consumption `Σ(p̂ − p)·δ/60`, kWh.
pub fn aec(estimate: &[f64], actual: &[f64], slot_minutes: u32) -> Result<f64> {
    check_pair(estimate, actual, 1)?;
    let diff: f64 = estimate.iter().zip(actual).map(|(e, a)| e - a).sum();
    Ok(diff * slot_minutes as f64 / 60.0)
}

/// Sample mean and standard deviation (`n − 1` divisor). The deviation is
/// zero for a single value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `(mean, 1.96·std/√n)`.
pub fn confidence_interval(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::TooFewValues(values.len()));
    }
    let (mean, std) = mean_std(values);
    Ok((mean, Z_95 * std / (values.len() as f64).sqrt()))
}
