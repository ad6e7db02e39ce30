use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcp::{complete, FitOptions, FitResult};
use crate::loss::LossSpec;
use crate::tensor::{FanPowerTensor, ObservationMask};

use super::{check_windows, EventWindow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowBaseline {
    pub window: EventWindow,
    /// Total fan power per window slot, kW.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineEstimate {
    pub windows: Vec<WindowBaseline>,
    pub fit: FitResult,
}

/// Completes the tensor and sums the completed entries over fans for each
/// window slot on `event_day`.
pub fn estimate_baseline(
    tensor: &FanPowerTensor,
    mask: &ObservationMask,
    spec: LossSpec,
    options: &FitOptions,
    event_day: usize,
    windows: &[EventWindow],
) -> Result<BaselineEstimate> {
    let dims = tensor.dims();
    if event_day >= dims.days {
        return Err(Error::DimensionMismatch(format!(
            "event day {event_day} outside {} days",
            dims.days
        )));
    }
    check_windows(windows, dims.slots)?;
    let (completed, fit) = complete(tensor, mask, spec, options)?;
    let windows = windows
        .iter()
        .map(|w| WindowBaseline {
            window: w.clone(),
            values: w
                .slots()
                .map(|i| (0..dims.fans).map(|j| completed.get(i, j, event_day)).sum())
                .collect(),
        })
        .collect();
    Ok(BaselineEstimate { windows, fit })
}

/// Event-day baseline for a whole dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventEstimate {
    pub event_day: chrono::NaiveDate,
    pub slot_minutes: u32,
    /// Clock minute of tensor slot 0.
    pub origin_minute: u32,
    pub loss: LossSpec,
    /// Measured event-day total per window slot, for reference.
    pub observed: Vec<Vec<f64>>,
    pub estimate: BaselineEstimate,
}

/// Aggregates `dataset` to `resolution`, masks the event-day windows and
/// estimates the total-fan baseline over them.
pub fn estimate_event_day(
    dataset: &super::Dataset,
    resolution: u32,
    config: &super::TensorConfig,
) -> Result<EventEstimate> {
    let Some(event_day) = dataset.meta.event_day else {
        return Err(Error::Manifest("no event_day in manifest".into()));
    };
    let agg = dataset.aggregate(resolution)?;
    let k = agg.meta.event_day_index().expect("event day present");
    let tensor = agg.tensor(config.mode)?;
    let windows = agg.meta.event_windows();
    let mask = super::mask_event_windows(tensor.dims(), k, &windows)?;
    let spec = config.loss_for(&tensor, &mask, agg.meta.day_mode_slots())?;
    let estimate = estimate_baseline(&tensor, &mask, spec, &config.fit, k, &windows)?;
    let observed = windows
        .iter()
        .map(|w| {
            w.slots()
                .map(|i| (0..tensor.dims().fans).map(|j| tensor.get(i, j, k)).sum())
                .collect()
        })
        .collect();
    Ok(EventEstimate {
        event_day,
        slot_minutes: resolution,
        origin_minute: agg.meta.span.start.minutes(),
        loss: spec,
        observed,
        estimate,
    })
}
