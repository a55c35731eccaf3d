//! Observation-level models: log-densities and their data-space derivatives.
//!
//! Every model exposes the per-observation log-density l(z; θ) for a data
//! point z = (y, x) and its gradient/Hessian *with respect to z*. Those
//! data-space derivatives are what the second-order proxy expansion at cluster
//! centroids consumes; derivatives with respect to θ are only needed for mode
//! finding and are optional (models without them fall back to finite
//! differences there).
//!
//! Data-space vectors are laid out as z = (y, x_1, …, x_p): index 0 is the
//! response, indices 1..=p the covariates.

pub mod glm;
pub mod special;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

pub use glm::{Glm, GlmSpec, ScalarFn};

/// Model parameter: coefficient vector β of length p.
pub type Parameter = Array1<f64>;

/// A single data point: response `y` and covariate row `x`.
#[derive(Clone, Copy)]
pub struct Observation<'a> {
    pub y: f64,
    pub x: ArrayView1<'a, f64>,
}

impl<'a> Observation<'a> {
    /// Split a stacked data-space vector z = (y, x) into an observation.
    pub fn from_z(z: &'a Array1<f64>) -> Self {
        Observation {
            y: z[0],
            x: z.slice(ndarray::s![1..]).reborrow(),
        }
    }
}

/// Per-observation model interface.
pub trait Model: Sync {
    /// Human-readable model name (used in error messages and CLI output).
    fn name(&self) -> &str;

    /// Log-density l(z; θ) of one observation.
    fn log_density(&self, obs: Observation, theta: ArrayView1<f64>) -> Result<f64>;

    /// Gradient (length p+1) and Hessian ((p+1)×(p+1)) of l with respect to
    /// z = (y, x). The Hessian is exactly symmetric: mirrored entries hold
    /// bitwise-identical values.
    fn grad_hess_z(
        &self,
        obs: Observation,
        theta: ArrayView1<f64>,
    ) -> Result<(Array1<f64>, Array2<f64>)>;

    /// Log-density, gradient, and Hessian in one call. The default evaluates
    /// the two primitives; implementations may share intermediates.
    fn log_density_grad_hess(
        &self,
        obs: Observation,
        theta: ArrayView1<f64>,
    ) -> Result<(f64, Array1<f64>, Array2<f64>)> {
        let l = self.log_density(obs, theta)?;
        let (g, h) = self.grad_hess_z(obs, theta)?;
        Ok((l, g, h))
    }

    /// Allocation-free variant of [`Model::log_density_grad_hess`] writing
    /// into caller-owned buffers; hot loops over many centroids use this.
    fn log_density_grad_hess_into(
        &self,
        obs: Observation,
        theta: ArrayView1<f64>,
        mut grad: ndarray::ArrayViewMut1<f64>,
        mut hess: ndarray::ArrayViewMut2<f64>,
    ) -> Result<f64> {
        let (l, g, h) = self.log_density_grad_hess(obs, theta)?;
        grad.assign(&g);
        hess.assign(&h);
        Ok(l)
    }

    /// Full-data log-likelihood Σ_k l(z_k; θ), summed in row order.
    ///
    /// The summation order is part of the contract: exact-likelihood runs and
    /// degenerate (perfect-proxy) estimator runs must produce bit-identical
    /// totals.
    fn total_log_density(
        &self,
        y: &[f64],
        x: ArrayView2<f64>,
        theta: ArrayView1<f64>,
    ) -> Result<f64> {
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                context: format!("{} total_log_density rows", self.name()),
                expected: x.nrows(),
                got: y.len(),
            });
        }
        let mut total = 0.0;
        for k in 0..y.len() {
            let obs = Observation {
                y: y[k],
                x: x.row(k),
            };
            total += self.log_density(obs, theta).map_err(|e| e.with_row(k))?;
        }
        Ok(total)
    }

    /// Analytic gradient and Hessian of the full-data log-likelihood with
    /// respect to θ, if the model provides them. `Ok(None)` means "use finite
    /// differences".
    fn theta_grad_hess(
        &self,
        _y: &[f64],
        _x: ArrayView2<f64>,
        _theta: ArrayView1<f64>,
    ) -> Result<Option<(Array1<f64>, Array2<f64>)>> {
        Ok(None)
    }

    /// Whether the response must be exactly 0 or 1.
    fn requires_binary_response(&self) -> bool {
        false
    }
}

/// Plain sequential dot product.
///
/// Deliberately a hand-rolled loop rather than a BLAS call: every code path
/// that forms the linear predictor must accumulate in the same order so that
/// exact and estimated likelihood evaluations agree bit for bit.
#[inline]
pub(crate) fn dot(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Numerically stable log(1 + exp(t)).
#[inline]
pub(crate) fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Standard logistic function 1/(1 + exp(-t)).
#[inline]
pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn check_dims(name: &str, obs: &Observation, theta: &ArrayView1<f64>) -> Result<()> {
    if obs.x.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            context: format!("{name} covariates vs coefficients"),
            expected: theta.len(),
            got: obs.x.len(),
        });
    }
    Ok(())
}

fn check_finite(name: &str, v: f64) -> Result<f64> {
    if v.is_nan() {
        Err(Error::NonFinite {
            context: name.to_string(),
            row: None,
        })
    } else {
        Ok(v)
    }
}

/// Binary-response logistic regression with success probability
/// P(y = 1 | x) = 1 / (1 + exp(xᵀβ)).
///
/// Note the sign convention: *larger* xᵀβ means *smaller* success
/// probability. The log-density is
/// l = −y·log(1 + e^η) − (1−y)·log(1 + e^{−η}) with η = xᵀβ,
/// evaluated through `softplus` so that extreme linear predictors stay
/// finite.
#[derive(Clone, Copy, Debug, Default)]
pub struct Logistic;

impl Model for Logistic {
    fn name(&self) -> &str {
        "logistic"
    }

    fn log_density(&self, obs: Observation, theta: ArrayView1<f64>) -> Result<f64> {
        check_dims("logistic", &obs, &theta)?;
        let eta = dot(obs.x, theta);
        let l = -obs.y * softplus(eta) - (1.0 - obs.y) * softplus(-eta);
        check_finite("logistic log_density", l)
    }

    fn grad_hess_z(
        &self,
        obs: Observation,
        theta: ArrayView1<f64>,
    ) -> Result<(Array1<f64>, Array2<f64>)> {
        check_dims("logistic", &obs, &theta)?;
        let p = theta.len();
        let eta = dot(obs.x, theta);
        let sig = sigmoid(eta);
        let dl_deta = (1.0 - obs.y) - sig;
        let d2l_deta2 = -sig * (1.0 - sig);

        let mut grad = Array1::<f64>::zeros(p + 1);
        grad[0] = -eta; // ∂l/∂y = log P(y=1) − log P(y=0) = −η
        for j in 0..p {
            grad[j + 1] = dl_deta * theta[j];
        }

        let mut hess = Array2::<f64>::zeros((p + 1, p + 1));
        for j in 0..p {
            let v = -theta[j]; // ∂²l/∂y∂x_j
            hess[[0, j + 1]] = v;
            hess[[j + 1, 0]] = v;
        }
        for i in 0..p {
            for j in 0..=i {
                let v = d2l_deta2 * theta[i] * theta[j];
                hess[[i + 1, j + 1]] = v;
                hess[[j + 1, i + 1]] = v;
            }
        }
        if grad.iter().any(|v| v.is_nan()) || hess.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite {
                context: "logistic grad_hess_z".to_string(),
                row: None,
            });
        }
        Ok((grad, hess))
    }

    fn log_density_grad_hess_into(
        &self,
        obs: Observation,
        theta: ArrayView1<f64>,
        mut grad: ndarray::ArrayViewMut1<f64>,
        mut hess: ndarray::ArrayViewMut2<f64>,
    ) -> Result<f64> {
        check_dims("logistic", &obs, &theta)?;
        let p = theta.len();
        let eta = dot(obs.x, theta);
        let l = -obs.y * softplus(eta) - (1.0 - obs.y) * softplus(-eta);
        let sig = sigmoid(eta);
        let dl_deta = (1.0 - obs.y) - sig;
        let d2l_deta2 = -sig * (1.0 - sig);
        grad[0] = -eta;
        hess[[0, 0]] = 0.0;
        for j in 0..p {
            grad[j + 1] = dl_deta * theta[j];
            let v = -theta[j];
            hess[[0, j + 1]] = v;
            hess[[j + 1, 0]] = v;
            for i in j..p {
                let w = d2l_deta2 * theta[i] * theta[j];
                hess[[i + 1, j + 1]] = w;
                hess[[j + 1, i + 1]] = w;
            }
        }
        if l.is_nan() || eta.is_nan() {
            return Err(Error::NonFinite {
                context: "logistic log_density_grad_hess".to_string(),
                row: None,
            });
        }
        Ok(l)
    }

    fn theta_grad_hess(
        &self,
        y: &[f64],
        x: ArrayView2<f64>,
        theta: ArrayView1<f64>,
    ) -> Result<Option<(Array1<f64>, Array2<f64>)>> {
        let p = theta.len();
        let mut grad = Array1::<f64>::zeros(p);
        let mut hess = Array2::<f64>::zeros((p, p));
        for k in 0..y.len() {
            let xk = x.row(k);
            let eta = dot(xk, theta);
            let sig = sigmoid(eta);
            let score = (1.0 - y[k]) - sig;
            let curv = sig * (1.0 - sig);
            for i in 0..p {
                grad[i] += score * xk[i];
                for j in 0..=i {
                    hess[[i, j]] -= curv * xk[i] * xk[j];
                }
            }
        }
        for i in 0..p {
            for j in (i + 1)..p {
                hess[[i, j]] = hess[[j, i]];
            }
        }
        Ok(Some((grad, hess)))
    }

    fn requires_binary_response(&self) -> bool {
        true
    }
}

/// Gaussian linear model y | x ~ N(xᵀβ, σ²).
///
/// Its log-density is exactly quadratic in z, so the second-order proxy
/// expansion reproduces it with zero residual — which makes this model the
/// natural conjugate test bed for the samplers and the estimator.
#[derive(Clone, Copy, Debug)]
pub struct GaussianLinear {
    pub sigma: f64,
}

impl GaussianLinear {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidValue {
                name: "sigma".to_string(),
                reason: format!("must be a positive finite real, got {sigma}"),
            });
        }
        Ok(GaussianLinear { sigma })
    }
}

impl Model for GaussianLinear {
    fn name(&self) -> &str {
        "gaussian-linear"
    }

    fn log_density(&self, obs: Observation, theta: ArrayView1<f64>) -> Result<f64> {
        check_dims("gaussian-linear", &obs, &theta)?;
        let s2 = self.sigma * self.sigma;
        let eta = dot(obs.x, theta);
        let r = obs.y - eta;
        let l = -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - r * r / (2.0 * s2);
        check_finite("gaussian-linear log_density", l)
    }

    fn grad_hess_z(
        &self,
        obs: Observation,
        theta: ArrayView1<f64>,
    ) -> Result<(Array1<f64>, Array2<f64>)> {
        check_dims("gaussian-linear", &obs, &theta)?;
        let p = theta.len();
        let s2 = self.sigma * self.sigma;
        let eta = dot(obs.x, theta);
        let r = obs.y - eta;

        let mut grad = Array1::<f64>::zeros(p + 1);
        grad[0] = -r / s2;
        for j in 0..p {
            grad[j + 1] = r / s2 * theta[j];
        }

        let mut hess = Array2::<f64>::zeros((p + 1, p + 1));
        hess[[0, 0]] = -1.0 / s2;
        for j in 0..p {
            let v = theta[j] / s2;
            hess[[0, j + 1]] = v;
            hess[[j + 1, 0]] = v;
        }
        for i in 0..p {
            for j in 0..=i {
                let v = -theta[i] * theta[j] / s2;
                hess[[i + 1, j + 1]] = v;
                hess[[j + 1, i + 1]] = v;
            }
        }
        if grad.iter().any(|v| v.is_nan()) || hess.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite {
                context: "gaussian-linear grad_hess_z".to_string(),
                row: None,
            });
        }
        Ok((grad, hess))
    }

    fn theta_grad_hess(
        &self,
        y: &[f64],
        x: ArrayView2<f64>,
        theta: ArrayView1<f64>,
    ) -> Result<Option<(Array1<f64>, Array2<f64>)>> {
        let p = theta.len();
        let s2 = self.sigma * self.sigma;
        let mut grad = Array1::<f64>::zeros(p);
        let mut hess = Array2::<f64>::zeros((p, p));
        for k in 0..y.len() {
            let xk = x.row(k);
            let r = y[k] - dot(xk, theta);
            for i in 0..p {
                grad[i] += r * xk[i] / s2;
                for j in 0..=i {
                    hess[[i, j]] -= xk[i] * xk[j] / s2;
                }
            }
        }
        for i in 0..p {
            for j in (i + 1)..p {
                hess[[i, j]] = hess[[j, i]];
            }
        }
        Ok(Some((grad, hess)))
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn obs<'a>(y: f64, x: &'a Array1<f64>) -> Observation<'a> {
        Observation { y, x: x.view() }
    }

    #[test]
    fn logistic_zero_coefficients_give_log_half() {
        let x = array![1.0, -2.0, 0.5];
        let theta = array![0.0, 0.0, 0.0];
        for y in [0.0, 1.0] {
            let l = Logistic.log_density(obs(y, &x), theta.view()).unwrap();
            assert_relative_eq!(l, -(2.0f64.ln()), epsilon = 1e-15);
        }
    }

    #[test]
    fn logistic_matches_hand_computed_values() {
        // x = (1), beta = (0.5): eta = 0.5, P(y=1) = 1/(1+e^0.5)
        let x = array![1.0];
        let theta = array![0.5];
        let l1 = Logistic.log_density(obs(1.0, &x), theta.view()).unwrap();
        let l0 = Logistic.log_density(obs(0.0, &x), theta.view()).unwrap();
        assert_relative_eq!(l1, -0.974076984180106, epsilon = 1e-12);
        assert_relative_eq!(l0, -0.474076984180106, epsilon = 1e-12);
        // the two probabilities sum to one
        assert_relative_eq!(l1.exp() + l0.exp(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn logistic_extreme_linear_predictor_stays_finite() {
        let x = array![800.0];
        let theta = array![1.0];
        let l = Logistic.log_density(obs(1.0, &x), theta.view()).unwrap();
        assert_relative_eq!(l, -800.0, epsilon = 1e-9);
        let l0 = Logistic.log_density(obs(0.0, &x), theta.view()).unwrap();
        assert!(l0.abs() < 1e-12, "P(y=0) ≈ 1 so log-density ≈ 0, got {l0}");
        let (g, h) = Logistic.grad_hess_z(obs(1.0, &x), theta.view()).unwrap();
        assert!(g.iter().all(|v| v.is_finite()));
        assert!(h.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn logistic_dimension_mismatch_is_an_error() {
        let x = array![1.0, 2.0];
        let theta = array![0.5];
        assert!(matches!(
            Logistic.log_density(obs(1.0, &x), theta.view()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn logistic_nan_input_is_an_error() {
        let x = array![f64::NAN];
        let theta = array![0.5];
        assert!(matches!(
            Logistic.log_density(obs(1.0, &x), theta.view()),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn total_log_density_reports_offending_row() {
        let y = vec![1.0, 0.0, 1.0];
        let x = ndarray::Array2::from_shape_vec((3, 1), vec![0.3, f64::NAN, -0.2]).unwrap();
        let theta = array![1.0];
        match Logistic.total_log_density(&y, x.view(), theta.view()) {
            Err(Error::NonFinite { row: Some(1), .. }) => {}
            other => panic!("expected non-finite error at row 1, got {other:?}"),
        }
    }

    #[test]
    fn logistic_gradient_at_zero_coefficients_has_zero_x_block() {
        // with beta = 0 every ∂l/∂x_j = ((1-y) - 1/2)·0 = 0
        let x = array![1.3, -0.4];
        let theta = array![0.0, 0.0];
        for y in [0.0, 1.0] {
            let (g, _) = Logistic.grad_hess_z(obs(y, &x), theta.view()).unwrap();
            assert_eq!(g[1], 0.0);
            assert_eq!(g[2], 0.0);
            // ∂l/∂y = -eta = 0 here as well
            assert_eq!(g[0], 0.0);
        }
    }

    #[test]
    fn logistic_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let p = rng.random_range(1..=4);
            let mut z = Array1::<f64>::zeros(p + 1);
            for v in z.iter_mut() {
                *v = rng.random_range(-3.0..3.0);
            }
            let theta =
                Array1::from_iter((0..p).map(|_| rng.random_range(-3.0..3.0)));
            let (grad, hess) = Logistic
                .grad_hess_z(Observation::from_z(&z), theta.view())
                .unwrap();
            let g_fd = fd::grad_z(&Logistic, &z, theta.view(), 1e-5);
            let h_fd = fd::hess_z(&Logistic, &z, theta.view(), 1e-4);
            let gscale = 1.0 + grad.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let hscale = 1.0 + hess.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for i in 0..=p {
                assert!(
                    (grad[i] - g_fd[i]).abs() <= 1e-6 * gscale,
                    "gradient component {i}: analytic {} vs fd {}",
                    grad[i],
                    g_fd[i]
                );
                for j in 0..=p {
                    assert!(
                        (hess[[i, j]] - h_fd[[i, j]]).abs() <= 1e-5 * hscale,
                        "hessian ({i},{j}): analytic {} vs fd {}",
                        hess[[i, j]],
                        h_fd[[i, j]]
                    );
                }
            }
        }
    }

    #[test]
    fn logistic_hessian_is_bitwise_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let z = array![
                rng.random_range(0.0..1.0f64).round(),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0)
            ];
            let theta = array![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let (_, h) = Logistic
                .grad_hess_z(Observation::from_z(&z), theta.view())
                .unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(h[[i, j]].to_bits(), h[[j, i]].to_bits());
                }
            }
        }
    }

    #[test]
    fn logistic_theta_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let n = 40;
        let p = 3;
        let y: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..2u8))).collect();
        let x = Array2::from_shape_fn((n, p), |_| rng.random_range(-2.0..2.0));
        let theta = array![0.4, -0.7, 0.2];
        let (grad, hess) = Logistic
            .theta_grad_hess(&y, x.view(), theta.view())
            .unwrap()
            .unwrap();
        let h = 1e-5;
        for i in 0..p {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[i] += h;
            tm[i] -= h;
            let fp = Logistic.total_log_density(&y, x.view(), tp.view()).unwrap();
            let fm = Logistic.total_log_density(&y, x.view(), tm.view()).unwrap();
            assert_relative_eq!(grad[i], (fp - fm) / (2.0 * h), max_relative = 1e-5);
        }
        // Hessian via FD of the analytic gradient
        for j in 0..p {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[j] += h;
            tm[j] -= h;
            let (gp, _) = Logistic
                .theta_grad_hess(&y, x.view(), tp.view())
                .unwrap()
                .unwrap();
            let (gm, _) = Logistic
                .theta_grad_hess(&y, x.view(), tm.view())
                .unwrap()
                .unwrap();
            for i in 0..p {
                assert_relative_eq!(
                    hess[[i, j]],
                    (gp[i] - gm[i]) / (2.0 * h),
                    max_relative = 1e-4,
                    epsilon = 1e-7
                );
            }
        }
    }

    #[test]
    fn gaussian_linear_derivatives_match_finite_differences() {
        let model = GaussianLinear::new(0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let z = array![
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0)
            ];
            let theta = array![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let (grad, hess) = model
                .grad_hess_z(Observation::from_z(&z), theta.view())
                .unwrap();
            let g_fd = fd::grad_z(&model, &z, theta.view(), 1e-5);
            let h_fd = fd::hess_z(&model, &z, theta.view(), 1e-4);
            for i in 0..3 {
                assert_relative_eq!(grad[i], g_fd[i], max_relative = 1e-6, epsilon = 1e-7);
                for j in 0..3 {
                    assert_relative_eq!(
                        hess[[i, j]],
                        h_fd[[i, j]],
                        max_relative = 1e-4,
                        epsilon = 1e-5
                    );
                }
            }
        }
    }

    #[test]
    fn gaussian_linear_rejects_bad_sigma() {
        assert!(GaussianLinear::new(0.0).is_err());
        assert!(GaussianLinear::new(-1.0).is_err());
        assert!(GaussianLinear::new(f64::NAN).is_err());
    }

    /// The buffer-reusing evaluation path must agree bit-for-bit with the
    /// allocating one; proxy reproducibility depends on it.
    #[test]
    fn logistic_into_matches_allocating_path() {
        let model = Logistic;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let z = array![
                if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 },
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            ];
            let theta = array![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let obs = Observation::from_z(&z);
            let (l, grad, hess) = model.log_density_grad_hess(obs, theta.view()).unwrap();
            let mut g2 = Array1::<f64>::zeros(3);
            let mut h2 = Array2::<f64>::zeros((3, 3));
            let l2 = model
                .log_density_grad_hess_into(obs, theta.view(), g2.view_mut(), h2.view_mut())
                .unwrap();
            assert_eq!(l.to_bits(), l2.to_bits());
            for i in 0..3 {
                assert_eq!(grad[i].to_bits(), g2[i].to_bits());
                for j in 0..3 {
                    assert_eq!(hess[[i, j]].to_bits(), h2[[i, j]].to_bits());
                }
            }
        }
    }
}
