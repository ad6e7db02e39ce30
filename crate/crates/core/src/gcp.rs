//! Masked generalized CP fitting and tensor completion.
//!
//! The objective is `F = Σ_{(i,j,k) ∈ Ω} f(p̂_ijk, p_ijk)` for an elementwise
//! loss `f`. With `Y` the tensor of loss derivatives on Ω (zero elsewhere), the
//! factor gradients are the MTTKRP products
//! `∂F/∂A = Y_(1)·khatri_rao(C, B)`, `∂F/∂B = Y_(2)·khatri_rao(C, A)` and
//! `∂F/∂C = Y_(3)·khatri_rao(B, A)`.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lbfgs::{lbfgs_minimize, LbfgsOptions, Termination};
use crate::loss::LossSpec;
use crate::seed::rng_for;
use crate::tensor::{cp_eval, cp_full, khatri_rao, unfold_slice, CpModel, Dims, FanPowerTensor, ObservationMask};

pub const DEFAULT_RANK: usize = 12;
pub const DEFAULT_TRIALS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub rank: usize,
    pub trials: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub lbfgs_memory: usize,
    /// Initial factors are drawn uniformly from `[0, init_scale]`.
    pub init_scale: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            rank: DEFAULT_RANK,
            trials: DEFAULT_TRIALS,
            seed: 0,
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            lbfgs_memory: 10,
            init_scale: 1.0,
        }
    }
}

impl FitOptions {
    pub fn lbfgs(&self) -> LbfgsOptions {
        LbfgsOptions {
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gradient_tolerance,
            memory: self.lbfgs_memory,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::InvalidOption("rank must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidOption("trials must be at least 1".into()));
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return Err(Error::InvalidOption("init_scale must be positive".into()));
        }
        if self.lbfgs_memory == 0 {
            return Err(Error::InvalidOption("lbfgs_memory must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: CpModel,
    pub objective: f64,
    pub best_trial: usize,
    pub trials: Vec<TrialSummary>,
}

impl FitResult {
    pub fn trial_objectives(&self) -> Vec<f64> {
        self.trials.iter().map(|t| t.objective).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorGradients {
    pub time: Array2<f64>,
    pub fan: Array2<f64>,
    pub day: Array2<f64>,
}

fn check_dims(model: Dims, tensor: &FanPowerTensor, mask: &ObservationMask) -> Result<()> {
    if model != tensor.dims() || mask.dims() != tensor.dims() {
        return Err(Error::DimensionMismatch(format!(
            "model {:?}, tensor {:?}, mask {:?}",
            model.as_tuple(),
            tensor.dims().as_tuple(),
            mask.dims().as_tuple()
        )));
    }
    Ok(())
}

/// Masked objective, summed over Ω in storage order.
pub fn objective(
    model: &CpModel,
    tensor: &FanPowerTensor,
    mask: &ObservationMask,
    spec: LossSpec,
) -> Result<f64> {
    check_dims(model.dims(), tensor, mask)?;
    let d = tensor.dims();
    let mut total = 0.0;
    for i in 0..d.slots {
        for j in 0..d.fans {
            for k in 0..d.days {
                if mask.is_observed(i, j, k) {
                    total += spec.value(cp_eval(model, (i, j, k))?, tensor.get(i, j, k));
                }
            }
        }
    }
    Ok(total)
}

pub fn gradient(
    model: &CpModel,
    tensor: &FanPowerTensor,
    mask: &ObservationMask,
    spec: LossSpec,
) -> Result<FactorGradients> {
    check_dims(model.dims(), tensor, mask)?;
    let d = tensor.dims();
    let mut y = vec![0.0; d.len()];
    for (flat, y) in y.iter_mut().enumerate() {
        if mask.flags()[flat] {
            let idx = d.unflat(flat);
            *y = spec.derivative(cp_eval(model, idx)?, tensor.values()[flat]);
        }
    }
    let (time, fan, day) = mttkrp_all(
        d,
        &y,
        model.time_factors(),
        model.fan_factors(),
        model.day_factors(),
    )?;
    Ok(FactorGradients { time, fan, day })
}

type Gradients = (Array2<f64>, Array2<f64>, Array2<f64>);

fn mttkrp_all(
    d: Dims,
    y: &[f64],
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    c: ArrayView2<'_, f64>,
) -> Result<Gradients> {
    let ga = unfold_slice(d, y, 1)?.dot(&khatri_rao(c, b)?);
    let gb = unfold_slice(d, y, 2)?.dot(&khatri_rao(c, a)?);
    let gc = unfold_slice(d, y, 3)?.dot(&khatri_rao(b, a)?);
    Ok((ga, gb, gc))
}

/// Objective and gradient over a flat parameter vector, shared by all trials.
struct Problem<'a> {
    tensor: &'a FanPowerTensor,
    mask: &'a ObservationMask,
    spec: LossSpec,
    rank: usize,
}

impl Problem<'_> {
    /// Parameters are `[A row-major, B, C]`.
    fn value_and_gradient(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        // literal ranks let the kernel unroll its inner loops
        match self.rank {
            1 => self.kernel(params, grad, 1),
            2 => self.kernel(params, grad, 2),
            3 => self.kernel(params, grad, 3),
            4 => self.kernel(params, grad, 4),
            r => self.kernel(params, grad, r),
        }
    }

    /// One pass over Ω accumulating the loss and all three factor gradients.
    #[inline(always)]
    fn kernel(&self, params: &[f64], grad: &mut [f64], r: usize) -> f64 {
        let d = self.tensor.dims();
        let (a, rest) = params.split_at(d.slots * r);
        let (b, c) = rest.split_at(d.fans * r);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (ga, rest) = grad.split_at_mut(d.slots * r);
        let (gb, gc) = rest.split_at_mut(d.fans * r);
        let c = &c[..d.days * r];
        let gc = &mut gc[..d.days * r];

        let values = self.tensor.values();
        let flags = self.mask.flags();
        let mut ab = vec![0.0; r];
        let mut t = vec![0.0; r];
        let mut total = 0.0;
        for (i, (ai, gai)) in a.chunks_exact(r).zip(ga.chunks_exact_mut(r)).enumerate() {
            for (j, (bj, gbj)) in b.chunks_exact(r).zip(gb.chunks_exact_mut(r)).enumerate() {
                for q in 0..r {
                    ab[q] = ai[q] * bj[q];
                    t[q] = 0.0;
                }
                let base = (i * d.fans + j) * d.days;
                let row_values = &values[base..base + d.days];
                let row_flags = &flags[base..base + d.days];
                for (((ck, gck), &x), &observed) in c
                    .chunks_exact(r)
                    .zip(gc.chunks_exact_mut(r))
                    .zip(row_values)
                    .zip(row_flags)
                {
                    if !observed {
                        continue;
                    }
                    let mut m = 0.0;
                    for q in 0..r {
                        m += ab[q] * ck[q];
                    }
                    let (v, y) = self.spec.value_and_derivative(m, x);
                    total += v;
                    for q in 0..r {
                        gck[q] += y * ab[q];
                        t[q] += y * ck[q];
                    }
                }
                for q in 0..r {
                    gai[q] += t[q] * bj[q];
                    gbj[q] += t[q] * ai[q];
                }
            }
        }
        total
    }
}

fn validate_problem(
    tensor: &FanPowerTensor,
    mask: &ObservationMask,
    spec: LossSpec,
    options: &FitOptions,
) -> Result<()> {
    options.validate()?;
    if !spec.is_valid() {
        return Err(Error::InvalidOption(format!("invalid loss {spec:?}")));
    }
    if mask.dims() != tensor.dims() {
        return Err(Error::DimensionMismatch(format!(
            "tensor {:?} vs mask {:?}",
            tensor.dims().as_tuple(),
            mask.dims().as_tuple()
        )));
    }
    let bound = tensor.dims().rank_bound();
    if options.rank > bound {
        return Err(Error::RankTooLarge {
            rank: options.rank,
            bound,
        });
    }
    mask.check_coverage()
}

fn run_trial(
    problem: &Problem<'_>,
    options: &FitOptions,
    trial: usize,
) -> Result<(CpModel, TrialSummary)> {
    let d = problem.tensor.dims();
    let n_params = (d.slots + d.fans + d.days) * options.rank;
    let mut rng = rng_for(options.seed, "gcp-trial", trial as u64);
    let initial: Vec<f64> = (0..n_params)
        .map(|_| rng.random::<f64>() * options.init_scale)
        .collect();
    let outcome = lbfgs_minimize(
        |x, g| problem.value_and_gradient(x, g),
        initial,
        &options.lbfgs(),
    )?;
    let model = CpModel::from_params(d, options.rank, &outcome.x)?;
    let objective = objective(&model, problem.tensor, problem.mask, problem.spec)?;
    if !objective.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    Ok((
        model,
        TrialSummary {
            objective,
            iterations: outcome.iterations,
            converged: outcome.converged,
            termination: outcome.termination,
        },
    ))
}

/// Multi-start fit: `options.trials` independent L-BFGS runs from seeded
/// random starts. The lowest final objective wins; ties go to the lower
/// trial index. Results do not depend on how trials are scheduled.
pub fn gcp_fit(
    tensor: &FanPowerTensor,
    mask: &ObservationMask,
    spec: LossSpec,
    options: &FitOptions,
) -> Result<FitResult> {
    validate_problem(tensor, mask, spec, options)?;
    let problem = Problem {
        tensor,
        mask,
        spec,
        rank: options.rank,
    };
    let runs: Vec<(CpModel, TrialSummary)> = (0..options.trials)
        .into_par_iter()
        .map(|t| run_trial(&problem, options, t))
        .collect::<Result<_>>()?;

    let mut best = 0;
    for (t, (_, summary)) in runs.iter().enumerate() {
        if summary.objective < runs[best].1.objective {
            best = t;
        }
    }
    let trials: Vec<TrialSummary> = runs.iter().map(|(_, s)| s.clone()).collect();
    let (model, summary) = runs.into_iter().nth(best).expect("at least one trial");
    Ok(FitResult {
        model,
        objective: summary.objective,
        best_trial: best,
        trials,
    })
}

/// Fits the observed entries and replaces every entry, observed or not, with
/// the model value.
pub fn complete(
    tensor: &FanPowerTensor,
    mask: &ObservationMask,
    spec: LossSpec,
    options: &FitOptions,
) -> Result<(FanPowerTensor, FitResult)> {
    let fit = gcp_fit(tensor, mask, spec, options)?;
    let completed = cp_full(&fit.model, tensor.slot_minutes())?;
    Ok((completed, fit))
}
