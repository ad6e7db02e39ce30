//! Elementwise losses between a model value `m` and an observation `p`.

use serde::{Deserialize, Serialize};

/// Default Huber breakpoint in kW.
pub const DEFAULT_HUBER_DELTA: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    SquaredError,
    /// Quadratic inside `|m − p| ≤ delta`, linear with slope `2·delta` outside.
    Huber { delta: f64 },
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec::Huber {
            delta: DEFAULT_HUBER_DELTA,
        }
    }
}

impl LossSpec {
    pub fn huber(delta: f64) -> Self {
        LossSpec::Huber { delta }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            LossSpec::SquaredError => true,
            LossSpec::Huber { delta } => delta.is_finite() && delta > 0.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossSpec::SquaredError => "l2",
            LossSpec::Huber { .. } => "huber",
        }
    }

    #[inline]
    pub fn value(&self, m: f64, p: f64) -> f64 {
        let r = m - p;
        match *self {
            LossSpec::SquaredError => r * r,
            LossSpec::Huber { delta } => {
                let a = r.abs();
                if a <= delta {
                    r * r
                } else {
                    2.0 * delta * a - delta * delta
                }
            }
        }
    }

    /// ∂f/∂m.
    #[inline]
    pub fn derivative(&self, m: f64, p: f64) -> f64 {
        let r = m - p;
        match *self {
            LossSpec::SquaredError => 2.0 * r,
            LossSpec::Huber { delta } => {
                if r.abs() <= delta {
                    2.0 * r
                } else {
                    2.0 * delta * r.signum()
                }
            }
        }
    }

    /// `(value, derivative)` in one evaluation.
    #[inline]
    pub fn value_and_derivative(&self, m: f64, p: f64) -> (f64, f64) {
        let r = m - p;
        match *self {
            LossSpec::SquaredError => (r * r, 2.0 * r),
            LossSpec::Huber { delta } => {
                let a = r.abs();
                if a <= delta {
                    (r * r, 2.0 * r)
                } else {
                    (2.0 * delta * a - delta * delta, 2.0 * delta * r.signum())
                }
            }
        }
    }
}

pub fn loss_value(m: f64, p: f64, spec: LossSpec) -> f64 {
    spec.value(m, p)
}

pub fn loss_derivative(m: f64, p: f64, spec: LossSpec) -> f64 {
    spec.derivative(m, p)
}
