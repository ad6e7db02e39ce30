use crate::error::{Error, Result};

use super::FanSeries;

/// Averages consecutive native slots into `target_minutes` slots.
pub fn aggregate(series: &FanSeries, target_minutes: u32) -> Result<FanSeries> {
    let native = series.slot_minutes;
    let incompatible = || Error::IncompatibleResolution {
        native,
        target: target_minutes,
    };
    if target_minutes == 0 || 60 % target_minutes != 0 || !target_minutes.is_multiple_of(native) {
        return Err(incompatible());
    }
    let ratio = (target_minutes / native) as usize;
    if !series.values.len().is_multiple_of(ratio) {
        return Err(incompatible());
    }
    let values = series
        .values
        .chunks_exact(ratio)
        .map(|c| c.iter().sum::<f64>() / ratio as f64)
        .collect();
    Ok(FanSeries {
        fan_id: series.fan_id.clone(),
        day: series.day,
        slot_minutes: target_minutes,
        values,
    })
}

/// Averages a slot vector in groups of `ratio`; used for per-window series.
pub(crate) fn average_groups(values: &[f64], ratio: usize) -> Vec<f64> {
    values
        .chunks(ratio)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}
