//! Dense time × fan × day tensors, CP models and the multilinear kernels
//! used by the fitter.
//!
//! All indices are zero-based. Values are stored row-major by
//! (time slot, fan, day), so the day index varies fastest.
//!
//! Unfoldings follow the Kolda–Bader column ordering:
//!
//! | mode | rows | column of entry (i, j, k) |
//! |------|------|---------------------------|
//! | 1    | T    | `j + k·N`                 |
//! | 2    | N    | `i + k·T`                 |
//! | 3    | S    | `i + j·T`                 |
//!
//! With that ordering `X_(1) = A · khatri_rao(C, B)ᵀ`, `X_(2) = B · khatri_rao(C, A)ᵀ`
//! and `X_(3) = C · khatri_rao(B, A)ᵀ` for a CP model with time, fan and day
//! factor matrices `A`, `B`, `C`.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MINUTES_PER_DAY: u32 = 1440;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub slots: usize,
    pub fans: usize,
    pub days: usize,
}

impl Dims {
    pub fn new(slots: usize, fans: usize, days: usize) -> Self {
        Dims { slots, fans, days }
    }

    pub fn len(&self) -> usize {
        self.slots * self.fans * self.days
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_tuple(&self) -> (usize, usize, usize) {
        (self.slots, self.fans, self.days)
    }

    #[inline]
    pub fn flat(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.fans + j) * self.days + k
    }

    #[inline]
    pub fn unflat(&self, flat: usize) -> (usize, usize, usize) {
        let k = flat % self.days;
        let ij = flat / self.days;
        (ij / self.fans, ij % self.fans, k)
    }

    pub fn contains(&self, (i, j, k): (usize, usize, usize)) -> bool {
        i < self.slots && j < self.fans && k < self.days
    }

    /// Largest rank that still constrains a completion: `min(TN, TS, NS)`.
    pub fn rank_bound(&self) -> usize {
        (self.slots * self.fans)
            .min(self.slots * self.days)
            .min(self.fans * self.days)
    }

    fn check_nonzero(&self) -> Result<()> {
        if self.slots == 0 || self.fans == 0 || self.days == 0 {
            return Err(Error::InvalidDims {
                dims: self.as_tuple(),
                reason: "every dimension must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// Power readings in kW, indexed (time slot, fan, day).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanPowerTensor {
    dims: Dims,
    slot_minutes: u32,
    values: Vec<f64>,
}

impl FanPowerTensor {
    pub fn from_values(dims: Dims, slot_minutes: u32, values: Vec<f64>) -> Result<Self> {
        dims.check_nonzero()?;
        if slot_minutes == 0 {
            return Err(Error::InvalidOption("slot_minutes must be at least 1".into()));
        }
        if slot_minutes as usize * dims.slots > MINUTES_PER_DAY as usize {
            return Err(Error::InvalidDims {
                dims: dims.as_tuple(),
                reason: format!("{} slots of {slot_minutes} minutes exceed one day", dims.slots),
            });
        }
        if values.len() != dims.len() {
            return Err(Error::LengthMismatch {
                expected: dims.len(),
                actual: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { index });
        }
        Ok(FanPowerTensor {
            dims,
            slot_minutes,
            values,
        })
    }

    pub fn from_fn(
        dims: Dims,
        slot_minutes: u32,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(dims.len());
        for i in 0..dims.slots {
            for j in 0..dims.fans {
                for k in 0..dims.days {
                    values.push(f(i, j, k));
                }
            }
        }
        Self::from_values(dims, slot_minutes, values)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn slot_minutes(&self) -> u32 {
        self.slot_minutes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.dims.flat(i, j, k)]
    }

    pub fn try_get(&self, index: (usize, usize, usize)) -> Result<f64> {
        if !self.dims.contains(index) {
            return Err(Error::IndexOutOfBounds {
                index,
                dims: self.dims.as_tuple(),
            });
        }
        Ok(self.get(index.0, index.1, index.2))
    }

    /// Sum over the fan mode for one day: the total power per slot.
    pub fn fan_total(&self, k: usize) -> Vec<f64> {
        (0..self.dims.slots)
            .map(|i| (0..self.dims.fans).map(|j| self.get(i, j, k)).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Index set Ω of known entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationMask {
    dims: Dims,
    observed: Vec<bool>,
}

impl ObservationMask {
    pub fn all_observed(dims: Dims) -> Self {
        ObservationMask {
            dims,
            observed: vec![true; dims.len()],
        }
    }

    pub fn from_flags(dims: Dims, observed: Vec<bool>) -> Result<Self> {
        if observed.len() != dims.len() {
            return Err(Error::LengthMismatch {
                expected: dims.len(),
                actual: observed.len(),
            });
        }
        Ok(ObservationMask { dims, observed })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize, k: usize) -> bool {
        self.observed[self.dims.flat(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, observed: bool) {
        let idx = self.dims.flat(i, j, k);
        self.observed[idx] = observed;
    }

    pub fn flags(&self) -> &[bool] {
        &self.observed
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    pub fn unobserved_count(&self) -> usize {
        self.observed.len() - self.observed_count()
    }

    pub fn unobserved(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.observed
            .iter()
            .enumerate()
            .filter(|(_, &o)| !o)
            .map(|(f, _)| self.dims.unflat(f))
    }

    /// Every time slot, fan and day must keep at least one observation.
    pub fn check_coverage(&self) -> Result<()> {
        let d = self.dims;
        let mut slot_seen = vec![false; d.slots];
        let mut fan_seen = vec![false; d.fans];
        let mut day_seen = vec![false; d.days];
        for (flat, _) in self.observed.iter().enumerate().filter(|(_, &o)| o) {
            let (i, j, k) = d.unflat(flat);
            slot_seen[i] = true;
            fan_seen[j] = true;
            day_seen[k] = true;
        }
        for (mode, seen) in [("slot", &slot_seen), ("fan", &fan_seen), ("day", &day_seen)] {
            if let Some(index) = seen.iter().position(|s| !s) {
                return Err(Error::MaskDegenerate { mode, index });
            }
        }
        Ok(())
    }
}

/// Rank-r CP model. Factor matrices hold one component per column:
/// time is T × r, fan is N × r, day is S × r.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpModel {
    time: Array2<f64>,
    fan: Array2<f64>,
    day: Array2<f64>,
}

impl CpModel {
    pub fn new(time: Array2<f64>, fan: Array2<f64>, day: Array2<f64>) -> Result<Self> {
        let r = time.ncols();
        if r == 0 {
            return Err(Error::InvalidOption("CP rank must be at least 1".into()));
        }
        for other in [fan.ncols(), day.ncols()] {
            if other != r {
                return Err(Error::ColumnMismatch {
                    left: r,
                    right: other,
                });
            }
        }
        Dims::new(time.nrows(), fan.nrows(), day.nrows()).check_nonzero()?;
        if time.iter().chain(fan.iter()).chain(day.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteObjective);
        }
        Ok(CpModel { time, fan, day })
    }

    /// Builds a model from component vectors, one `(time, fan, day)` triple per component.
    pub fn from_components(components: &[(Vec<f64>, Vec<f64>, Vec<f64>)]) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(Error::InvalidOption("CP rank must be at least 1".into()));
        };
        let (t, n, s) = (first.0.len(), first.1.len(), first.2.len());
        let r = components.len();
        let mut time = Array2::zeros((t, r));
        let mut fan = Array2::zeros((n, r));
        let mut day = Array2::zeros((s, r));
        for (q, (l, w, d)) in components.iter().enumerate() {
            if l.len() != t || w.len() != n || d.len() != s {
                return Err(Error::DimensionMismatch(format!(
                    "component {q} has lengths ({}, {}, {}), expected ({t}, {n}, {s})",
                    l.len(),
                    w.len(),
                    d.len()
                )));
            }
            time.column_mut(q).assign(&ndarray::ArrayView1::from(l.as_slice()));
            fan.column_mut(q).assign(&ndarray::ArrayView1::from(w.as_slice()));
            day.column_mut(q).assign(&ndarray::ArrayView1::from(d.as_slice()));
        }
        CpModel::new(time, fan, day)
    }

    pub fn rank(&self) -> usize {
        self.time.ncols()
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.time.nrows(), self.fan.nrows(), self.day.nrows())
    }

    pub fn time_factors(&self) -> ArrayView2<'_, f64> {
        self.time.view()
    }

    pub fn fan_factors(&self) -> ArrayView2<'_, f64> {
        self.fan.view()
    }

    pub fn day_factors(&self) -> ArrayView2<'_, f64> {
        self.day.view()
    }

    pub fn param_count(&self) -> usize {
        let d = self.dims();
        (d.slots + d.fans + d.days) * self.rank()
    }

    /// Flattens the factors as `[time (row-major), fan, day]`.
    pub fn to_params(&self) -> Vec<f64> {
        self.time
            .iter()
            .chain(self.fan.iter())
            .chain(self.day.iter())
            .copied()
            .collect()
    }

    pub fn from_params(dims: Dims, rank: usize, params: &[f64]) -> Result<Self> {
        let expected = (dims.slots + dims.fans + dims.days) * rank;
        if params.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: params.len(),
            });
        }
        let (time, rest) = params.split_at(dims.slots * rank);
        let (fan, day) = rest.split_at(dims.fans * rank);
        let to_matrix = |rows: usize, data: &[f64]| {
            Array2::from_shape_vec((rows, rank), data.to_vec()).expect("shape checked above")
        };
        CpModel::new(
            to_matrix(dims.slots, time),
            to_matrix(dims.fans, fan),
            to_matrix(dims.days, day),
        )
    }

    #[inline]
    fn eval_unchecked(&self, i: usize, j: usize, k: usize) -> f64 {
        let mut acc = 0.0;
        for q in 0..self.rank() {
            acc += self.time[[i, q]] * self.fan[[j, q]] * self.day[[k, q]];
        }
        acc
    }
}

/// Model value `Σ_q ℓ_i^(q) ω_j^(q) ω̄_k^(q)` at one index.
pub fn cp_eval(model: &CpModel, index: (usize, usize, usize)) -> Result<f64> {
    let dims = model.dims();
    if !dims.contains(index) {
        return Err(Error::IndexOutOfBounds {
            index,
            dims: dims.as_tuple(),
        });
    }
    Ok(model.eval_unchecked(index.0, index.1, index.2))
}

/// Dense reconstruction of the model. Every entry is computed exactly as
/// [`cp_eval`] computes it.
pub fn cp_full(model: &CpModel, slot_minutes: u32) -> Result<FanPowerTensor> {
    FanPowerTensor::from_fn(model.dims(), slot_minutes, |i, j, k| {
        model.eval_unchecked(i, j, k)
    })
}

fn unfold_raw(dims: Dims, values: &[f64], mode: usize) -> Result<Array2<f64>> {
    let Dims {
        slots: t,
        fans: n,
        days: s,
    } = dims;
    let mut out = match mode {
        1 => Array2::zeros((t, n * s)),
        2 => Array2::zeros((n, t * s)),
        3 => Array2::zeros((s, t * n)),
        other => return Err(Error::InvalidMode(other)),
    };
    for i in 0..t {
        for j in 0..n {
            for k in 0..s {
                let v = values[dims.flat(i, j, k)];
                match mode {
                    1 => out[[i, j + k * n]] = v,
                    2 => out[[j, i + k * t]] = v,
                    _ => out[[k, i + j * t]] = v,
                }
            }
        }
    }
    Ok(out)
}

pub(crate) fn unfold_slice(dims: Dims, values: &[f64], mode: usize) -> Result<Array2<f64>> {
    debug_assert_eq!(values.len(), dims.len());
    unfold_raw(dims, values, mode)
}

pub fn mode_unfold(tensor: &FanPowerTensor, mode: usize) -> Result<Array2<f64>> {
    unfold_raw(tensor.dims, &tensor.values, mode)
}

/// Inverse of [`mode_unfold`].
pub fn mode_refold(
    matrix: ArrayView2<'_, f64>,
    mode: usize,
    dims: Dims,
    slot_minutes: u32,
) -> Result<FanPowerTensor> {
    let Dims {
        slots: t,
        fans: n,
        days: s,
    } = dims;
    let expected = match mode {
        1 => (t, n * s),
        2 => (n, t * s),
        3 => (s, t * n),
        other => return Err(Error::InvalidMode(other)),
    };
    if matrix.dim() != expected {
        return Err(Error::DimensionMismatch(format!(
            "mode-{mode} unfolding of {:?} must be {expected:?}, got {:?}",
            dims.as_tuple(),
            matrix.dim()
        )));
    }
    FanPowerTensor::from_fn(dims, slot_minutes, |i, j, k| match mode {
        1 => matrix[[i, j + k * n]],
        2 => matrix[[j, i + k * t]],
        _ => matrix[[k, i + j * t]],
    })
}

/// Column-wise Kronecker product. Row `a·n + b` of column `q` is `A[a,q]·B[b,q]`.
pub fn khatri_rao(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::ColumnMismatch {
            left: a.ncols(),
            right: b.ncols(),
        });
    }
    let (m, n, r) = (a.nrows(), b.nrows(), a.ncols());
    let mut out = Array2::zeros((m * n, r));
    for ai in 0..m {
        for bi in 0..n {
            let row = ai * n + bi;
            for q in 0..r {
                out[[row, q]] = a[[ai, q]] * b[[bi, q]];
            }
        }
    }
    Ok(out)
}
