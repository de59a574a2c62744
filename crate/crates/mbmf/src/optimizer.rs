//! The magnitude-bounded training loop.
//!
//! Each iteration computes the masked residual gradient with respect to the
//! factors, chains it through the factor-vs-angle derivative tensors to get
//! whole-matrix angle gradients, takes one descent step on both angle
//! matrices, and rebuilds the factors. Step sizes adapt: both learning rates
//! grow on an objective decrease and shrink (with the step rolled back) on an
//! increase. Because the factors are rebuilt from angles and radii every
//! iteration, the magnitude constraint holds exactly at all times; it can
//! never drift.

use ndarray::Array2;
use rand::Rng;

use crate::data::SparseObservations;
use crate::error::{Error, Result};
use crate::magnitudes::{OffsetKind, PreprocessRecord, Variant};
use crate::spherical::{
    build_factors, grad_h_wrt_theta, grad_w_wrt_phi, AngleState, FactorModel, MagnitudePair,
};

/// Training parameters. Defaults: 500 iterations, early stop after 10
/// consecutive iterations improving by less than 1e-5, both step sizes
/// starting at 0.1, growing by 1.1 on acceptance and shrinking by 2 on
/// rollback.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub k: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub patience: usize,
    pub lr_phi: f64,
    pub lr_theta: f64,
    pub lr_grow: f64,
    pub lr_shrink: f64,
    pub seed: u64,
    pub variant: Variant,
}

impl TrainConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            max_iters: 500,
            tol: 1e-5,
            patience: 10,
            lr_phi: 0.1,
            lr_theta: 0.1,
            lr_grow: 1.1,
            lr_shrink: 2.0,
            seed: 0,
            variant: Variant::Nonnegative,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::LatentDimensionTooSmall(self.k));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.patience == 0 {
            return Err(Error::InvalidConfig("patience must be at least 1".into()));
        }
        if !(self.lr_phi > 0.0) || !(self.lr_theta > 0.0) {
            return Err(Error::InvalidConfig(
                "initial step sizes must be positive".into(),
            ));
        }
        if !(self.lr_grow > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "lr_grow must exceed 1, got {}",
                self.lr_grow
            )));
        }
        if !(self.lr_shrink > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "lr_shrink must exceed 1, got {}",
                self.lr_shrink
            )));
        }
        Ok(())
    }

    pub(crate) fn descent(&self) -> DescentSettings {
        DescentSettings {
            max_iters: self.max_iters,
            tol: self.tol,
            patience: self.patience,
            lr_a: self.lr_phi,
            lr_b: self.lr_theta,
            grow: self.lr_grow,
            shrink: self.lr_shrink,
        }
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// The objective decrease stayed below `tol` for `patience` consecutive
    /// iterations.
    Converged,
    /// The iteration budget ran out.
    MaxIters,
}

/// One attempted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// Objective of the attempted step: the new value when accepted, the
    /// rejected candidate value otherwise.
    pub objective: f64,
    /// Step sizes used for this attempt (before growing or shrinking).
    pub lr_phi: f64,
    pub lr_theta: f64,
    pub accepted: bool,
}

/// Per-iteration log of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub initial_objective: f64,
    pub iterations: Vec<IterationRecord>,
    pub termination: Termination,
}

impl TrainTrace {
    pub fn iterations_run(&self) -> usize {
        self.iterations.len()
    }

    /// Objectives of accepted iterations, in order. Non-increasing by
    /// construction of the rollback rule.
    pub fn accepted_objectives(&self) -> Vec<f64> {
        self.iterations
            .iter()
            .filter(|r| r.accepted)
            .map(|r| r.objective)
            .collect()
    }

    pub fn final_objective(&self) -> f64 {
        self.accepted_objectives()
            .last()
            .copied()
            .unwrap_or(self.initial_objective)
    }

    /// Writes `iter,objective,lr_phi,lr_theta,accepted` rows.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let mut out = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(out, "iter,objective,lr_phi,lr_theta,accepted").map_err(|e| Error::io(path, e))?;
        for r in &self.iterations {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.iter, r.objective, r.lr_phi, r.lr_theta, r.accepted
            )
            .map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

fn check_dims(data: &SparseObservations, w: &Array2<f64>, h: &Array2<f64>) -> Result<()> {
    if w.nrows() != data.n_rows() || h.ncols() != data.n_cols() || w.ncols() != h.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "data {}x{} against factors {}x{} and {}x{}",
            data.n_rows(),
            data.n_cols(),
            w.nrows(),
            w.ncols(),
            h.nrows(),
            h.ncols()
        )));
    }
    Ok(())
}

/// Squared residual over the observed cells only: the dense product is never
/// materialized, each observed cell costs one length-K dot product.
pub fn objective(data: &SparseObservations, w: &Array2<f64>, h: &Array2<f64>) -> Result<f64> {
    check_dims(data, w, h)?;
    let k = w.ncols();
    let ht = h.t().as_standard_layout().to_owned();
    let w_buf = w.as_slice().expect("W is standard layout");
    let ht_buf = ht.as_slice().expect("H^T is standard layout");
    let mut acc = 0.0;
    for e in data.entries() {
        let wi = &w_buf[e.row * k..e.row * k + k];
        let hj = &ht_buf[e.col * k..e.col * k + k];
        let mut pred = 0.0;
        for t in 0..k {
            pred += wi[t] * hj[t];
        }
        let r = e.value - pred;
        acc += r * r;
    }
    Ok(acc)
}

/// Gradient of the masked objective with respect to both factor matrices:
/// `grad_w = 2 (Z*(WH) - Z*V) H^T` and `grad_h = 2 W^T (Z*(WH) - Z*V)`,
/// assembled in one pass over the observed entries.
pub fn factor_gradients(
    data: &SparseObservations,
    w: &Array2<f64>,
    h: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_dims(data, w, h)?;
    let k = w.ncols();
    let ht = h.t().as_standard_layout().to_owned();
    let w_buf = w.as_slice().expect("W is standard layout");
    let ht_buf = ht.as_slice().expect("H^T is standard layout");
    let mut grad_w = Array2::<f64>::zeros((w.nrows(), k));
    let mut grad_ht = Array2::<f64>::zeros((h.ncols(), k));
    {
        let gw_buf = grad_w.as_slice_mut().unwrap();
        let gh_buf = grad_ht.as_slice_mut().unwrap();
        for e in data.entries() {
            let wi = &w_buf[e.row * k..e.row * k + k];
            let hj = &ht_buf[e.col * k..e.col * k + k];
            let mut pred = 0.0;
            for t in 0..k {
                pred += wi[t] * hj[t];
            }
            let g = 2.0 * (pred - e.value);
            let gw = &mut gw_buf[e.row * k..e.row * k + k];
            for t in 0..k {
                gw[t] += g * hj[t];
            }
            let gh = &mut gh_buf[e.col * k..e.col * k + k];
            for t in 0..k {
                gh[t] += g * wi[t];
            }
        }
    }
    Ok((grad_w, grad_ht.t().to_owned()))
}

/// Whole-matrix angle gradients: the factor gradient is chained through the
/// derivative tensors by dotting each row of `grad_w` (column of `grad_h`)
/// with the matching tensor fiber. Returns `(d_phi, d_theta)` shaped like the
/// angle matrices.
pub fn angle_gradients(
    data: &SparseObservations,
    angles: &AngleState,
    mags: &MagnitudePair,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let model = build_factors(angles, mags)?;
    let (grad_w, grad_h) = factor_gradients(data, &model.w, &model.h)?;
    let k = angles.k();
    let (n, m) = (angles.n_rows(), angles.n_cols());

    let tensor_w = grad_w_wrt_phi(&angles.phi, mags.r_w())?;
    let mut d_phi = Array2::zeros((n, k - 1));
    for i in 0..n {
        for b in 0..k - 1 {
            let mut acc = 0.0;
            for j in 0..k {
                acc += grad_w[[i, j]] * tensor_w[[i, j, b]];
            }
            d_phi[[i, b]] = acc;
        }
    }

    let tensor_h = grad_h_wrt_theta(&angles.theta, mags.r_h())?;
    let mut d_theta = Array2::zeros((k - 1, m));
    for j in 0..m {
        for a in 0..k - 1 {
            let mut acc = 0.0;
            for row in 0..k {
                acc += grad_h[[row, j]] * tensor_h[[a, row, j]];
            }
            d_theta[[a, j]] = acc;
        }
    }
    Ok((d_phi, d_theta))
}

/// Evaluates the auxiliary sine/cosine products of one angle derivative term
/// by term, exactly as written element-wise. Slow reference path for
/// cross-checking [`angle_gradients`]; not used in training.
fn literal_angle_derivative(angles: &[f64], radius: f64, b: usize) -> Vec<f64> {
    let k = angles.len() + 1;
    let common: f64 = angles[..b].iter().map(|a| a.sin()).product();
    (0..k)
        .map(|j| {
            let s = if j < b {
                0.0
            } else if j == b {
                common * (-angles[b].sin())
            } else if j == b + 1 {
                common
            } else {
                common * angles[b + 1..j].iter().map(|a| a.sin()).product::<f64>()
            };
            let c = if j < b {
                0.0
            } else if j == b {
                1.0
            } else if j < k - 1 {
                angles[j].cos() * angles[b].cos()
            } else {
                angles[b].cos()
            };
            radius * s * c
        })
        .collect()
}

/// Element-by-element angle gradients built from the literal per-element
/// inner-product form. Cross-check oracle for the tensor path.
pub fn angle_gradients_elementwise(
    data: &SparseObservations,
    angles: &AngleState,
    mags: &MagnitudePair,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let model = build_factors(angles, mags)?;
    let (grad_w, grad_h) = factor_gradients(data, &model.w, &model.h)?;
    let k = angles.k();
    let (n, m) = (angles.n_rows(), angles.n_cols());

    let mut d_phi = Array2::zeros((n, k - 1));
    for i in 0..n {
        let row = angles.phi.row(i).to_vec();
        for b in 0..k - 1 {
            let deriv = literal_angle_derivative(&row, mags.r_w()[i], b);
            let mut acc = 0.0;
            for j in 0..k {
                acc += grad_w[[i, j]] * deriv[j];
            }
            d_phi[[i, b]] = acc;
        }
    }

    let mut d_theta = Array2::zeros((k - 1, m));
    for j in 0..m {
        let col: Vec<f64> = (0..k - 1).map(|a| angles.theta[[a, j]]).collect();
        for a in 0..k - 1 {
            let deriv = literal_angle_derivative(&col, mags.r_h()[j], a);
            let mut acc = 0.0;
            for row in 0..k {
                acc += grad_h[[row, j]] * deriv[row];
            }
            d_theta[[a, j]] = acc;
        }
    }
    Ok((d_phi, d_theta))
}

pub(crate) struct DescentSettings {
    pub max_iters: usize,
    pub tol: f64,
    pub patience: usize,
    pub lr_a: f64,
    pub lr_b: f64,
    pub grow: f64,
    pub shrink: f64,
}

/// Shared accept/reject descent driver.
///
/// Each iteration evaluates one candidate produced by `step` at the current
/// step sizes. A strictly smaller objective is accepted and both step sizes
/// grow; otherwise the candidate is discarded and both shrink. The run
/// converges once the objective decrease (zero for rejected iterations)
/// stays below `tol` for `patience` consecutive iterations. A candidate
/// objective that is non-finite or exceeds a million times the initial one
/// aborts with the trace collected so far.
pub(crate) fn descend<S: Clone>(
    initial: S,
    initial_objective: f64,
    settings: &DescentSettings,
    mut step: impl FnMut(&S, f64, f64) -> Result<S>,
    mut objective_of: impl FnMut(&S) -> Result<f64>,
) -> Result<(S, TrainTrace)> {
    let mut current = initial;
    let mut f_current = initial_objective;
    let (mut lr_a, mut lr_b) = (settings.lr_a, settings.lr_b);
    let guard = 1e6 * initial_objective.max(f64::MIN_POSITIVE);
    let mut quiet = 0usize;
    let mut iterations = Vec::new();
    let mut termination = Termination::MaxIters;

    for iter in 1..=settings.max_iters {
        let candidate = step(&current, lr_a, lr_b)?;
        let f_candidate = objective_of(&candidate)?;
        let accepted = f_candidate < f_current;
        iterations.push(IterationRecord {
            iter,
            objective: f_candidate,
            lr_phi: lr_a,
            lr_theta: lr_b,
            accepted,
        });
        if !f_candidate.is_finite() || f_candidate > guard {
            return Err(Error::Diverged {
                iteration: iter,
                objective: f_candidate,
                trace: Box::new(TrainTrace {
                    initial_objective,
                    iterations,
                    termination: Termination::MaxIters,
                }),
            });
        }
        let decrease = if accepted {
            let d = f_current - f_candidate;
            current = candidate;
            f_current = f_candidate;
            lr_a *= settings.grow;
            lr_b *= settings.grow;
            d
        } else {
            lr_a /= settings.shrink;
            lr_b /= settings.shrink;
            0.0
        };
        if decrease < settings.tol {
            quiet += 1;
            if quiet >= settings.patience {
                termination = Termination::Converged;
                break;
            }
        } else {
            quiet = 0;
        }
        if iter % 50 == 0 {
            log::debug!("iter {iter}: objective {f_current:.6e} (lr {lr_a:.3e}/{lr_b:.3e})");
        }
    }

    Ok((
        current,
        TrainTrace {
            initial_objective,
            iterations,
            termination,
        },
    ))
}

/// Random angle matrices under the canonical representation ranges: every
/// angle but the last of each vector in `[0, pi]`, the last in `[0, 2*pi)`.
/// Fill order (phi row-major, then theta row-major) is part of the
/// reproducibility contract.
pub(crate) fn random_angles(
    n: usize,
    m: usize,
    k: usize,
    rng: &mut impl Rng,
) -> Result<AngleState> {
    use std::f64::consts::PI;
    let phi = Array2::from_shape_fn((n, k - 1), |(_, b)| {
        if b + 2 < k {
            rng.random_range(0.0..PI)
        } else {
            rng.random_range(0.0..2.0 * PI)
        }
    });
    let theta = Array2::from_shape_fn((k - 1, m), |(a, _)| {
        if a + 2 < k {
            rng.random_range(0.0..PI)
        } else {
            rng.random_range(0.0..2.0 * PI)
        }
    });
    AngleState::new(phi, theta)
}

/// Runs the bounded factorisation: random angle initialization under the
/// config seed, then dynamic-step descent on the angle matrices until the
/// iteration budget or the early-stop rule fires. The returned model always
/// satisfies the magnitude constraint exactly.
pub fn train(
    data: &SparseObservations,
    mags: &MagnitudePair,
    cfg: &TrainConfig,
) -> Result<(FactorModel, TrainTrace)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::NoEntries);
    }
    if mags.n_rows() != data.n_rows() || mags.n_cols() != data.n_cols() {
        return Err(Error::DimensionMismatch(format!(
            "magnitudes are {}x{} but data is {}x{}",
            mags.n_rows(),
            mags.n_cols(),
            data.n_rows(),
            data.n_cols()
        )));
    }

    let mut rng = crate::stream_rng(cfg.seed, "init");
    let angles = random_angles(data.n_rows(), data.n_cols(), cfg.k, &mut rng)?;
    let model = build_factors(&angles, mags)?;
    let f0 = objective(data, &model.w, &model.h)?;
    log::info!(
        "training {}x{} (nnz {}) at k={}: initial objective {f0:.6e}",
        data.n_rows(),
        data.n_cols(),
        data.len(),
        cfg.k
    );

    let (final_angles, trace) = descend(
        angles,
        f0,
        &cfg.descent(),
        |state, lr_phi, lr_theta| {
            let (d_phi, d_theta) = angle_gradients(data, state, mags)?;
            AngleState::new(
                &state.phi - &(lr_phi * &d_phi),
                &state.theta - &(lr_theta * &d_theta),
            )
        },
        |state| {
            let m = build_factors(state, mags)?;
            objective(data, &m.w, &m.h)
        },
    )?;

    let model = build_factors(&final_angles, mags)?;
    log::info!(
        "finished after {} iterations ({:?}): objective {:.6e}",
        trace.iterations_run(),
        trace.termination,
        trace.final_objective()
    );
    Ok((model, trace))
}

/// Inner products `W[i,:] . H[:,j]` for the requested cells, shifted back to
/// the original data scale when a preprocessing record is attached.
pub fn predict(
    model: &FactorModel,
    record: Option<&PreprocessRecord>,
    pairs: &[(usize, usize)],
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        if i >= model.n_rows() || j >= model.n_cols() {
            return Err(Error::IndexOutOfRange(format!(
                "pair ({i}, {j}) for a {}x{} model",
                model.n_rows(),
                model.n_cols()
            )));
        }
        let raw = model.product_at(i, j);
        let offset = match record {
            None => 0.0,
            Some(rec) => match rec.offset {
                OffsetKind::Scalar(c) => c,
                OffsetKind::PerEntryRank1 => model.magnitudes.bound(i, j),
            },
        };
        out.push(raw + offset);
    }
    Ok(out)
}
