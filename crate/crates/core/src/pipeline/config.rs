use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcp::FitOptions;
use crate::loss::{LossSpec, DEFAULT_HUBER_DELTA};
use crate::tensor::{FanPowerTensor, ObservationMask};

use super::TensorMode;

/// How the Huber breakpoint is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "kebab-case")]
pub enum DeltaRule {
    /// Fixed breakpoint in kW.
    Absolute(f64),
    /// Fraction of the median observed day-mode entry of the tensor.
    RelativeToMedian(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Huber,
    L2,
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "huber" => Ok(LossKind::Huber),
            "l2" | "squared" => Ok(LossKind::L2),
            other => Err(Error::InvalidOption(format!("unknown loss '{other}'"))),
        }
    }
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Huber => "huber",
            LossKind::L2 => "l2",
        }
    }
}

/// Everything the tensor completion baseline needs besides data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TensorConfig {
    pub mode: TensorMode,
    pub loss: LossKind,
    pub delta: DeltaRule,
    pub fit: FitOptions,
}

impl Default for TensorConfig {
    fn default() -> Self {
        TensorConfig {
            mode: TensorMode::PerFan,
            loss: LossKind::Huber,
            delta: DeltaRule::Absolute(DEFAULT_HUBER_DELTA),
            fit: FitOptions::default(),
        }
    }
}

impl TensorConfig {
    pub fn id(&self) -> String {
        format!("tensor/{}/{}", self.mode.name(), self.loss.name())
    }

    /// Resolves the loss for one fit. A relative breakpoint looks only at
    /// observed entries inside `day_mode` (inclusive slot range).
    pub fn loss_for(
        &self,
        tensor: &FanPowerTensor,
        mask: &ObservationMask,
        day_mode: (usize, usize),
    ) -> Result<LossSpec> {
        let spec = match (self.loss, self.delta) {
            (LossKind::L2, _) => LossSpec::SquaredError,
            (LossKind::Huber, DeltaRule::Absolute(delta)) => LossSpec::huber(delta),
            (LossKind::Huber, DeltaRule::RelativeToMedian(fraction)) => {
                LossSpec::huber(fraction * observed_median(tensor, mask, day_mode)?)
            }
        };
        if !spec.is_valid() {
            return Err(Error::InvalidOption(format!("invalid Huber breakpoint in {spec:?}")));
        }
        Ok(spec)
    }
}

fn observed_median(
    tensor: &FanPowerTensor,
    mask: &ObservationMask,
    (first, last): (usize, usize),
) -> Result<f64> {
    let d = tensor.dims();
    let mut values = Vec::new();
    for i in first..=last.min(d.slots - 1) {
        for j in 0..d.fans {
            for k in 0..d.days {
                if mask.is_observed(i, j, k) {
                    values.push(tensor.get(i, j, k));
                }
            }
        }
    }
    if values.is_empty() {
        return Err(Error::InvalidOption("no observed day-mode entries for a relative breakpoint".into()));
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Ok(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}
