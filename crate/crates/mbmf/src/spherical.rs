//! Hyperspherical representation of the factor matrices.
//!
//! A K-dimensional vector of fixed Euclidean norm `r` is stored as `K-1`
//! angles: the norm constraint becomes structural and the optimization over
//! factors turns into an unconstrained one over angles. Rows of `W` are
//! parameterized by the angle matrix `phi` (N x (K-1)) and columns of `H` by
//! `theta` ((K-1) x M), with radii taken from the magnitude vectors.
//!
//! The conversion for one vector is
//!
//! ```text
//! x_1 = r cos(p_1)
//! x_i = r sin(p_1) ... sin(p_{i-1}) cos(p_i)     1 < i < K
//! x_K = r sin(p_1) ... sin(p_{K-1})
//! ```
//!
//! Angles are plain unconstrained reals during optimization; the trig
//! functions are periodic so no wrapping is applied. Canonical ranges
//! (`[0, pi]` for all but the last angle, `[0, 2*pi)` for the last) are
//! produced only by [`cartesian_to_spherical`].

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

/// The optimization variables: angle matrices for both factor sides.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleState {
    /// N x (K-1); row i holds the angles of `W`'s row i.
    pub phi: Array2<f64>,
    /// (K-1) x M; column j holds the angles of `H`'s column j.
    pub theta: Array2<f64>,
}

impl AngleState {
    pub fn new(phi: Array2<f64>, theta: Array2<f64>) -> Result<Self> {
        let k_minus_1 = phi.ncols();
        if k_minus_1 == 0 || theta.nrows() == 0 {
            return Err(Error::LatentDimensionTooSmall(1));
        }
        if theta.nrows() != k_minus_1 {
            return Err(Error::DimensionMismatch(format!(
                "phi has {} angle columns but theta has {} angle rows",
                k_minus_1,
                theta.nrows()
            )));
        }
        if phi.iter().chain(theta.iter()).any(|a| !a.is_finite()) {
            return Err(Error::InvalidConfig(
                "angle matrices must be finite".to_string(),
            ));
        }
        Ok(Self { phi, theta })
    }

    /// Latent dimension K implied by the angle count.
    pub fn k(&self) -> usize {
        self.phi.ncols() + 1
    }

    pub fn n_rows(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.theta.ncols()
    }
}

/// Prescribed Euclidean norms for the rows of `W` and the columns of `H`.
/// Strictly positive by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudePair {
    r_w: Vec<f64>,
    r_h: Vec<f64>,
}

impl MagnitudePair {
    pub fn new(r_w: Vec<f64>, r_h: Vec<f64>) -> Result<Self> {
        for (index, &value) in r_w.iter().chain(r_h.iter()).enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                let index = if index < r_w.len() { index } else { index - r_w.len() };
                return Err(Error::NonPositiveMagnitude { index, value });
            }
        }
        Ok(Self { r_w, r_h })
    }

    /// Constant magnitudes: every row gets `w`, every column gets `h`.
    pub fn uniform(n_rows: usize, n_cols: usize, w: f64, h: f64) -> Result<Self> {
        Self::new(vec![w; n_rows], vec![h; n_cols])
    }

    pub fn r_w(&self) -> &[f64] {
        &self.r_w
    }

    pub fn r_h(&self) -> &[f64] {
        &self.r_h
    }

    pub fn n_rows(&self) -> usize {
        self.r_w.len()
    }

    pub fn n_cols(&self) -> usize {
        self.r_h.len()
    }

    /// The per-cell prediction bound `r_w[i] * r_h[j]`.
    pub fn bound(&self, row: usize, col: usize) -> f64 {
        self.r_w[row] * self.r_h[col]
    }
}

/// Factor matrices together with the magnitudes that generated them.
/// Row i of `w` has norm `r_w[i]`; column j of `h` has norm `r_h[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub w: Array2<f64>,
    pub h: Array2<f64>,
    pub magnitudes: MagnitudePair,
}

impl FactorModel {
    pub fn n_rows(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.h.ncols()
    }

    pub fn k(&self) -> usize {
        self.w.ncols()
    }

    /// Inner product of `W`'s row and `H`'s column: the raw prediction.
    pub fn product_at(&self, row: usize, col: usize) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.k() {
            acc += self.w[[row, k]] * self.h[[k, col]];
        }
        acc
    }
}

/// Converts `K-1` angles plus a radius into the K-dimensional Cartesian
/// vector of norm `radius`.
pub fn spherical_to_cartesian(angles: &[f64], radius: f64) -> Result<Vec<f64>> {
    if angles.is_empty() {
        return Err(Error::LatentDimensionTooSmall(1));
    }
    let mut out = vec![0.0; angles.len() + 1];
    fill_cartesian(angles, radius, &mut out);
    Ok(out)
}

/// In-place core of [`spherical_to_cartesian`]; `out.len()` must equal
/// `angles.len() + 1`.
fn fill_cartesian(angles: &[f64], radius: f64, out: &mut [f64]) {
    let k = out.len();
    let mut sin_prefix = radius; // radius * sin(p_1) * ... * sin(p_{i-1})
    for i in 0..k - 1 {
        out[i] = sin_prefix * angles[i].cos();
        sin_prefix *= angles[i].sin();
    }
    out[k - 1] = sin_prefix;
}

/// Recovers canonical angles and the radius from a nonzero Cartesian vector.
///
/// All but the last angle land in `[0, pi]`; the last lands in `[0, 2*pi)`.
/// The inverse of [`spherical_to_cartesian`] up to floating-point rounding.
pub fn cartesian_to_spherical(x: &[f64]) -> Result<(Vec<f64>, f64)> {
    let k = x.len();
    if k < 2 {
        return Err(Error::LatentDimensionTooSmall(k));
    }
    // tail[i] = norm of x[i..]; built backwards for stability.
    let mut tail = vec![0.0; k + 1];
    for i in (0..k).rev() {
        tail[i] = x[i].hypot(tail[i + 1]);
    }
    let radius = tail[0];
    if radius == 0.0 {
        return Err(Error::ZeroVector);
    }
    let mut angles = vec![0.0; k - 1];
    for i in 0..k - 2 {
        angles[i] = tail[i + 1].atan2(x[i]);
    }
    let mut last = x[k - 1].atan2(x[k - 2]);
    if last < 0.0 {
        last += 2.0 * std::f64::consts::PI;
    }
    angles[k - 2] = last;
    Ok((angles, radius))
}

/// Builds the factor matrices from an angle state: row i of `W` is the
/// Cartesian image of `phi`'s row i at radius `r_w[i]`, and column j of `H`
/// the image of `theta`'s column j at radius `r_h[j]`.
pub fn build_factors(angles: &AngleState, mags: &MagnitudePair) -> Result<FactorModel> {
    let (n, m, k) = (angles.n_rows(), angles.n_cols(), angles.k());
    if mags.n_rows() != n || mags.n_cols() != m {
        return Err(Error::DimensionMismatch(format!(
            "magnitudes are {}x{} but angles describe a {}x{} factorization",
            mags.n_rows(),
            mags.n_cols(),
            n,
            m
        )));
    }
    let mut w = Array2::zeros((n, k));
    for i in 0..n {
        let phi_row = angles.phi.row(i);
        let row = phi_row.as_slice().expect("phi rows are contiguous");
        fill_cartesian(row, mags.r_w[i], w.row_mut(i).into_slice().unwrap());
    }
    let mut h = Array2::zeros((k, m));
    let mut theta_col = vec![0.0; k - 1];
    let mut h_col = vec![0.0; k];
    for j in 0..m {
        for a in 0..k - 1 {
            theta_col[a] = angles.theta[[a, j]];
        }
        fill_cartesian(&theta_col, mags.r_h[j], &mut h_col);
        for (row, &v) in h_col.iter().enumerate() {
            h[[row, j]] = v;
        }
    }
    Ok(FactorModel {
        w,
        h,
        magnitudes: mags.clone(),
    })
}

/// Jacobian of one Cartesian vector with respect to its angles, scaled by the
/// radius: `jac[b][j] = d x_j / d p_b`. Row b is zero left of component b,
/// carries `-r * sin(p_1)..sin(p_b)` on the diagonal and cosine-weighted sine
/// products to the right.
fn angle_jacobian_into(angles: &[f64], radius: f64, jac: &mut [f64]) {
    let k = angles.len() + 1;
    debug_assert_eq!(jac.len(), (k - 1) * k);
    let sins: Vec<f64> = angles.iter().map(|a| a.sin()).collect();
    let coss: Vec<f64> = angles.iter().map(|a| a.cos()).collect();
    // prefix[p] = sin(p_1) * ... * sin(p_p) with prefix[0] = 1
    let mut prefix = vec![1.0; k];
    for p in 0..k - 1 {
        prefix[p + 1] = prefix[p] * sins[p];
    }
    for (b, row) in jac.chunks_exact_mut(k).enumerate() {
        for slot in row[..b].iter_mut() {
            *slot = 0.0;
        }
        row[b] = -radius * prefix[b + 1];
        // skip_b = product of sines over p < j, p != b
        let mut skip_b = prefix[b];
        for j in b + 1..k {
            if j < k - 1 {
                row[j] = radius * coss[b] * coss[j] * skip_b;
                skip_b *= sins[j];
            } else {
                row[j] = radius * coss[b] * skip_b;
            }
        }
    }
}

/// Derivatives of every entry of `W` with respect to every angle of `phi`,
/// as an N x K x (K-1) tensor: slice `[i, .., b]` is the derivative of `W`'s
/// row i with respect to `phi[i, b]`.
pub fn grad_w_wrt_phi(phi: &Array2<f64>, r_w: &[f64]) -> Result<Array3<f64>> {
    let (n, k_minus_1) = phi.dim();
    if k_minus_1 == 0 {
        return Err(Error::LatentDimensionTooSmall(1));
    }
    if r_w.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} magnitudes for {} angle rows",
            r_w.len(),
            n
        )));
    }
    let k = k_minus_1 + 1;
    let mut tensor = Array3::zeros((n, k, k_minus_1));
    let mut jac = vec![0.0; k_minus_1 * k];
    for i in 0..n {
        let row = phi.row(i);
        angle_jacobian_into(row.as_slice().unwrap(), r_w[i], &mut jac);
        for b in 0..k_minus_1 {
            for j in 0..k {
                tensor[[i, j, b]] = jac[b * k + j];
            }
        }
    }
    Ok(tensor)
}

/// Column analogue of [`grad_w_wrt_phi`]: a (K-1) x K x M tensor whose slice
/// `[a, .., j]` is the derivative of `H`'s column j with respect to
/// `theta[a, j]`.
pub fn grad_h_wrt_theta(theta: &Array2<f64>, r_h: &[f64]) -> Result<Array3<f64>> {
    let (k_minus_1, m) = theta.dim();
    if k_minus_1 == 0 {
        return Err(Error::LatentDimensionTooSmall(1));
    }
    if r_h.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{} magnitudes for {} angle columns",
            r_h.len(),
            m
        )));
    }
    let k = k_minus_1 + 1;
    let mut tensor = Array3::zeros((k_minus_1, k, m));
    let mut angles = vec![0.0; k_minus_1];
    let mut jac = vec![0.0; k_minus_1 * k];
    for j in 0..m {
        for a in 0..k_minus_1 {
            angles[a] = theta[[a, j]];
        }
        angle_jacobian_into(&angles, r_h[j], &mut jac);
        for a in 0..k_minus_1 {
            for row in 0..k {
                tensor[[a, row, j]] = jac[a * k + row];
            }
        }
    }
    Ok(tensor)
}
