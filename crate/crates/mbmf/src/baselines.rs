//! Unbounded reference factorisations.
//!
//! Both baselines minimize the same masked squared error as the bounded
//! trainer but place no constraint on the factors, so their predictions at
//! unobserved cells can drift arbitrarily far outside the data range. That
//! drift is exactly what the prediction-variance experiment measures.

use ndarray::Array2;
use rand::Rng;

use crate::data::SparseObservations;
use crate::error::{Error, Result};
use crate::optimizer::{descend, factor_gradients, objective, IterationRecord, Termination,
    TrainConfig, TrainTrace};

/// Plain factor matrices with no magnitude bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub w: Array2<f64>,
    pub h: Array2<f64>,
}

impl BaselineModel {
    pub fn product_at(&self, row: usize, col: usize) -> f64 {
        let mut acc = 0.0;
        for t in 0..self.w.ncols() {
            acc += self.w[[row, t]] * self.h[[t, col]];
        }
        acc
    }

    pub fn predict(&self, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        pairs
            .iter()
            .map(|&(i, j)| {
                if i >= self.w.nrows() || j >= self.h.ncols() {
                    Err(Error::IndexOutOfRange(format!(
                        "pair ({i}, {j}) for a {}x{} model",
                        self.w.nrows(),
                        self.h.ncols()
                    )))
                } else {
                    Ok(self.product_at(i, j))
                }
            })
            .collect()
    }
}

/// Denominator guard for the multiplicative updates.
const NMF_EPSILON: f64 = 1e-12;

fn validate_baseline(data: &SparseObservations, k: usize, cfg: &TrainConfig) -> Result<()> {
    if data.is_empty() {
        return Err(Error::NoEntries);
    }
    if k == 0 {
        return Err(Error::InvalidConfig(
            "baseline latent dimension must be at least 1".into(),
        ));
    }
    // The latent dimension is the explicit `k` here; only the loop
    // parameters of the config apply.
    TrainConfig { k: 2, ..cfg.clone() }.validate()
}

/// Random factors with entries uniform in (0, 1) scaled to the data:
/// `sqrt(|mean(V)| / k)` keeps the initial product near the observed scale.
/// All-zero data gets zero factors, a perfect fit from the start.
fn random_factors(
    data: &SparseObservations,
    k: usize,
    rng: &mut impl Rng,
) -> (Array2<f64>, Array2<f64>) {
    let mean = data.value_mean().unwrap_or(0.0).abs();
    let scale = (mean / k as f64).sqrt();
    let w = Array2::from_shape_fn((data.n_rows(), k), |_| rng.random_range(0.0..1.0) * scale);
    let h = Array2::from_shape_fn((k, data.n_cols()), |_| rng.random_range(0.0..1.0) * scale);
    (w, h)
}

/// Unconstrained matrix factorisation by gradient descent on the factors,
/// with the same dynamic step sizes and termination rules as the bounded
/// trainer.
pub fn train_mf(
    data: &SparseObservations,
    k: usize,
    cfg: &TrainConfig,
) -> Result<(BaselineModel, TrainTrace)> {
    validate_baseline(data, k, cfg)?;
    let mut rng = crate::stream_rng(cfg.seed, "mf-init");
    let (w, h) = random_factors(data, k, &mut rng);
    let f0 = objective(data, &w, &h)?;

    let ((w, h), trace) = descend(
        (w, h),
        f0,
        &cfg.descent(),
        |(w, h), lr_w, lr_h| {
            let (gw, gh) = factor_gradients(data, w, h)?;
            Ok((w - &(lr_w * &gw), h - &(lr_h * &gh)))
        },
        |(w, h)| objective(data, w, h),
    )?;
    Ok((BaselineModel { w, h }, trace))
}

/// Non-negative matrix factorisation by masked multiplicative updates.
///
/// `W` is scaled cell-wise by `((Z*V) H^T) / ((Z*(WH)) H^T)` and `H` by the
/// mirrored quotient with the refreshed `W`; denominators carry an epsilon
/// guard. Factors stay non-negative by construction. Requires non-negative
/// observations.
pub fn train_nmf(
    data: &SparseObservations,
    k: usize,
    cfg: &TrainConfig,
) -> Result<(BaselineModel, TrainTrace)> {
    validate_baseline(data, k, cfg)?;
    for e in data.entries() {
        if e.value < 0.0 {
            return Err(Error::NegativeValue {
                row: e.row,
                col: e.col,
                value: e.value,
            });
        }
    }
    let mut rng = crate::stream_rng(cfg.seed, "nmf-init");
    let (mut w, mut h) = random_factors(data, k, &mut rng);
    let initial_objective = objective(data, &w, &h)?;
    let guard = 1e6 * initial_objective.max(f64::MIN_POSITIVE);

    let mut f_current = initial_objective;
    let mut quiet = 0usize;
    let mut iterations = Vec::new();
    let mut termination = Termination::MaxIters;

    for iter in 1..=cfg.max_iters {
        multiplicative_update_w(data, &mut w, &h);
        multiplicative_update_h(data, &w, &mut h);
        let f_new = objective(data, &w, &h)?;
        iterations.push(IterationRecord {
            iter,
            objective: f_new,
            lr_phi: 1.0,
            lr_theta: 1.0,
            accepted: true,
        });
        if !f_new.is_finite() || f_new > guard {
            return Err(Error::Diverged {
                iteration: iter,
                objective: f_new,
                trace: Box::new(TrainTrace {
                    initial_objective,
                    iterations,
                    termination: Termination::MaxIters,
                }),
            });
        }
        let decrease = f_current - f_new;
        f_current = f_new;
        if decrease < cfg.tol {
            quiet += 1;
            if quiet >= cfg.patience {
                termination = Termination::Converged;
                break;
            }
        } else {
            quiet = 0;
        }
    }

    Ok((
        BaselineModel { w, h },
        TrainTrace {
            initial_objective,
            iterations,
            termination,
        },
    ))
}

fn multiplicative_update_w(data: &SparseObservations, w: &mut Array2<f64>, h: &Array2<f64>) {
    let k = w.ncols();
    let ht = h.t().as_standard_layout().to_owned();
    let ht_buf = ht.as_slice().unwrap();
    let w_buf = w.as_slice_mut().unwrap();
    let mut numer = vec![0.0; w_buf.len()];
    let mut denom = vec![0.0; w_buf.len()];
    for e in data.entries() {
        let wi = &w_buf[e.row * k..e.row * k + k];
        let hj = &ht_buf[e.col * k..e.col * k + k];
        let mut pred = 0.0;
        for t in 0..k {
            pred += wi[t] * hj[t];
        }
        for t in 0..k {
            numer[e.row * k + t] += e.value * hj[t];
            denom[e.row * k + t] += pred * hj[t];
        }
    }
    for (t, slot) in w_buf.iter_mut().enumerate() {
        *slot *= numer[t] / (denom[t] + NMF_EPSILON);
    }
}

fn multiplicative_update_h(data: &SparseObservations, w: &Array2<f64>, h: &mut Array2<f64>) {
    let k = w.ncols();
    let m = h.ncols();
    let w_buf = w.as_slice().unwrap();
    let mut numer_t = vec![0.0; m * k];
    let mut denom_t = vec![0.0; m * k];
    {
        let ht = h.t().as_standard_layout().to_owned();
        let ht_buf = ht.as_slice().unwrap();
        for e in data.entries() {
            let wi = &w_buf[e.row * k..e.row * k + k];
            let hj = &ht_buf[e.col * k..e.col * k + k];
            let mut pred = 0.0;
            for t in 0..k {
                pred += wi[t] * hj[t];
            }
            for t in 0..k {
                numer_t[e.col * k + t] += e.value * wi[t];
                denom_t[e.col * k + t] += pred * wi[t];
            }
        }
    }
    for j in 0..m {
        for t in 0..k {
            h[[t, j]] *= numer_t[j * k + t] / (denom_t[j * k + t] + NMF_EPSILON);
        }
    }
}
