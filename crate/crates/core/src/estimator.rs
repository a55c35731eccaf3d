//! Difference estimator of the full-data log-likelihood.
//!
//! The log-likelihood over the estimated stratum is split into a
//! deterministic proxy total w(θ), computed from cluster moments in O(N_C),
//! plus a residual total Σ_k d_k with d_k = l_k − w_k, estimated from a small
//! subsample drawn with replacement:
//!
//! ```text
//!   l̂_m = w + (n_est / m) · Σ_i d_{u_i} + Σ_{k ∈ exact} l_k
//! ```
//!
//! Rows outside every cluster form the exact stratum: their log-densities are
//! always summed directly and they are never subsampled. Because the residual
//! estimate is unbiased for Σ d_k under any proxy, l̂_m is unbiased no matter
//! how accurate the Taylor expansions are — proxy quality only controls the
//! variance. The variance estimate σ̂_z² = (n_est²/m)·s² feeds both the
//! bias-corrected acceptance value l̂ − σ̂_z²/2 and the sampler's adaptive
//! subsample-size rule.
//!
//! All summations run in a fixed order (ascending cluster index for w,
//! ascending row index within a subsample batch) so results do not depend on
//! scheduling.

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2};
use rand::Rng;

use crate::clustering::ClusterModel;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{dot, Model, Observation};

/// Subsample of the estimated stratum: dataset row indices drawn uniformly
/// with replacement, duplicates allowed.
#[derive(Clone, Debug)]
pub struct Subsample {
    pub rows: Vec<usize>,
}

/// Draw `m` indices uniformly with replacement from {0, …, n−1}.
///
/// `m` must be at least 2 because the variance estimator divides by m − 1.
pub fn draw_subsample<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::InvalidValue {
            name: "n".to_string(),
            reason: "cannot subsample an empty stratum".to_string(),
        });
    }
    if m < 2 {
        return Err(Error::InvalidValue {
            name: "m".to_string(),
            reason: format!("subsample size must be at least 2, got {m}"),
        });
    }
    Ok((0..m).map(|_| rng.random_range(0..n)).collect())
}

/// Proxy evaluation at one θ: the total w plus the per-cluster Taylor data
/// (centroid log-density, gradient, Hessian) needed to evaluate w_k for
/// individual subsampled rows.
pub struct WEval {
    /// Proxy total over the estimated stratum.
    pub w: f64,
    /// Log-density evaluations consumed: one per centroid.
    pub de: usize,
    theta: Array1<f64>,
    logliks: Vec<f64>,
    grads: Array2<f64>,
    /// Per-cluster Hessians; `None` when the estimator holds frozen ones.
    hessians: Option<Array3<f64>>,
}

/// One realized log-likelihood estimate, carrying the running residual
/// moments the adaptive sampler needs to grow the subsample in place.
#[derive(Clone, Debug)]
pub struct LogLikEstimate {
    /// l̂_m = w + d̂_m + exact-stratum sum.
    pub l_hat: f64,
    /// σ̂_z² = (n_est²/m)·s², the estimated variance of l̂_m.
    pub sigma2_hat: f64,
    /// Bias-corrected value used in acceptance ratios: l̂_m − σ̂_z²/2.
    pub corrected: f64,
    /// Log-density evaluations consumed: N_C + m + |exact stratum|.
    pub de_count: usize,
    /// Residuals d_k for the subsample, in ascending-row order per batch.
    pub d_values: Vec<f64>,
    /// Proxy total w the estimate was built on (iteration-log telemetry).
    pub w: f64,
    /// Residual-total estimate d̂_m = (n_est/m)·Σ d_{u_i}.
    pub d_hat: f64,
    exact_sum: f64,
    sum_d: f64,
    mean_d: f64,
    m2_d: f64,
}

impl LogLikEstimate {
    /// Current subsample size m.
    pub fn m(&self) -> usize {
        self.d_values.len()
    }
}

/// The difference estimator bound to a model, a dataset, and a cluster model
/// built on the same coordinates.
///
/// Rows the cluster model left unassigned form the exact stratum; everything
/// else is the estimated stratum. The dataset must hold the values the
/// clusters were built from (standardize before clustering, then keep working
/// with the standardized data).
pub struct DifferenceEstimator<'a> {
    model: &'a dyn Model,
    dataset: &'a Dataset,
    clusters: &'a ClusterModel,
    exact_rows: Vec<usize>,
    est_rows: Vec<usize>,
    is_exact: Vec<bool>,
    frozen_hessians: Option<Array3<f64>>,
}

impl<'a> DifferenceEstimator<'a> {
    pub fn new(
        model: &'a dyn Model,
        dataset: &'a Dataset,
        clusters: &'a ClusterModel,
    ) -> Result<Self> {
        if clusters.n_total != dataset.n() {
            return Err(Error::DimensionMismatch {
                context: "cluster model rows vs dataset rows".to_string(),
                expected: dataset.n(),
                got: clusters.n_total,
            });
        }
        if clusters.dim != dataset.p() + 1 {
            return Err(Error::DimensionMismatch {
                context: "cluster dimension vs data-space dimension".to_string(),
                expected: dataset.p() + 1,
                got: clusters.dim,
            });
        }
        let mut exact_rows = Vec::new();
        let mut est_rows = Vec::new();
        let mut is_exact = vec![false; dataset.n()];
        for (k, &a) in clusters.assignment.iter().enumerate() {
            if a < 0 {
                exact_rows.push(k);
                is_exact[k] = true;
            } else {
                est_rows.push(k);
            }
        }
        if est_rows.is_empty() {
            return Err(Error::InvalidValue {
                name: "cluster_model".to_string(),
                reason: "no clustered rows: the estimated stratum is empty".to_string(),
            });
        }
        Ok(DifferenceEstimator {
            model,
            dataset,
            clusters,
            exact_rows,
            est_rows,
            is_exact,
            frozen_hessians: None,
        })
    }

    /// Size of the estimated stratum.
    pub fn n_est(&self) -> usize {
        self.est_rows.len()
    }

    /// Size of the exact stratum.
    pub fn n_exact(&self) -> usize {
        self.exact_rows.len()
    }

    pub fn clusters(&self) -> &ClusterModel {
        self.clusters
    }

    /// Draw a subsample of the estimated stratum (row indices, with
    /// replacement).
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, m: usize) -> Result<Subsample> {
        let positions = draw_subsample(rng, self.est_rows.len(), m)?;
        Ok(Subsample {
            rows: positions.into_iter().map(|i| self.est_rows[i]).collect(),
        })
    }

    /// Draw an augmentation batch. Unlike [`Self::draw`], a single row is
    /// allowed: the m ≥ 2 rule protects the variance estimator, which after
    /// augmentation sees the combined subsample, not the batch.
    pub(crate) fn draw_extra<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Result<Subsample> {
        if count == 0 {
            return Ok(Subsample { rows: Vec::new() });
        }
        let n = self.est_rows.len();
        Ok(Subsample {
            rows: (0..count)
                .map(|_| self.est_rows[rng.random_range(0..n)])
                .collect(),
        })
    }

    /// Fix the second-order Taylor term at a reference point (typically the
    /// posterior mode): subsequent proxy evaluations use H(z^c; θ*) instead
    /// of re-deriving the Hessian at the current θ. The estimator stays
    /// unbiased — the proxy merely changes — but the proxy error, and with it
    /// σ̂_z², may grow away from θ*.
    pub fn freeze_hessians_at(&mut self, theta: ArrayView1<f64>) -> Result<()> {
        let dim = self.clusters.dim;
        let mut frozen = Array3::<f64>::zeros((self.clusters.n_clusters(), dim, dim));
        for (j, cl) in self.clusters.clusters.iter().enumerate() {
            let obs = Observation::from_z(&cl.centroid);
            let (_, hess) = self.model.grad_hess_z(obs, theta)?;
            frozen.slice_mut(s![j, .., ..]).assign(&hess);
        }
        self.frozen_hessians = Some(frozen);
        Ok(())
    }

    /// Evaluate the proxy total w(θ) from cluster moments:
    ///
    /// ```text
    ///   w = Σ_j [ N_j·l(z^c_j) + ∇l(z^c_j)ᵀ·fm_j + ½·Σ_ab H(z^c_j)_ab·(B_j)_ab ]
    /// ```
    ///
    /// One log-density (with gradient and Hessian, sharing intermediates) per
    /// centroid, so `de` = N_C regardless of n.
    pub fn evaluate_w(&self, theta: ArrayView1<f64>) -> Result<WEval> {
        let n_c = self.clusters.n_clusters();
        let dim = self.clusters.dim;
        let mut logliks = vec![0.0; n_c];
        let mut grads = Array2::<f64>::zeros((n_c, dim));
        let mut hessians = if self.frozen_hessians.is_some() {
            None
        } else {
            Some(Array3::<f64>::zeros((n_c, dim, dim)))
        };
        let mut scratch_h = Array2::<f64>::zeros((dim, dim));
        let mut w = 0.0;
        for (j, cl) in self.clusters.clusters.iter().enumerate() {
            let obs = Observation::from_z(&cl.centroid);
            let l = match &mut hessians {
                Some(h) => self.model.log_density_grad_hess_into(
                    obs,
                    theta,
                    grads.row_mut(j),
                    h.slice_mut(s![j, .., ..]),
                )?,
                None => self.model.log_density_grad_hess_into(
                    obs,
                    theta,
                    grads.row_mut(j),
                    scratch_h.view_mut(),
                )?,
            };
            let h_used: ArrayView2<f64> = match (&hessians, &self.frozen_hessians) {
                (Some(h), _) => h.slice(s![j, .., ..]),
                (None, Some(f)) => f.slice(s![j, .., ..]),
                (None, None) => unreachable!(),
            };
            let linear = dot(grads.row(j), cl.first_moment.view());
            let mut hadamard = 0.0;
            for a in 0..dim {
                for b in 0..dim {
                    hadamard += h_used[[a, b]] * cl.second_moment[[a, b]];
                }
            }
            let term = (cl.count as f64) * l + linear + 0.5 * hadamard;
            if !term.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("proxy total at centroid {j}"),
                    row: None,
                });
            }
            logliks[j] = l;
            w += term;
        }
        Ok(WEval {
            w,
            de: n_c,
            theta: theta.to_owned(),
            logliks,
            grads,
            hessians,
        })
    }

    /// Compute l̂_m, σ̂_z², and the bias-corrected value for one subsample.
    ///
    /// For each sampled row, d_k = l_k(θ) − w_k(θ) with w_k the second-order
    /// Taylor expansion around the row's own cluster centroid. The exact
    /// stratum is summed directly. θ must be the same parameter `weval` was
    /// evaluated at.
    pub fn estimate(
        &self,
        weval: &WEval,
        subsample: &Subsample,
        theta: ArrayView1<f64>,
    ) -> Result<LogLikEstimate> {
        self.check_theta(weval, theta)?;
        if subsample.rows.len() < 2 {
            return Err(Error::InvalidValue {
                name: "m".to_string(),
                reason: format!(
                    "subsample size must be at least 2, got {}",
                    subsample.rows.len()
                ),
            });
        }
        let (d_values, mean_d, m2_d, sum_d) = self.residual_batch(weval, &subsample.rows, theta)?;

        let mut exact_sum = 0.0;
        for &r in &self.exact_rows {
            let obs = Observation {
                y: self.dataset.y()[r],
                x: self.dataset.x_row(r),
            };
            let l = self
                .model
                .log_density(obs, theta)
                .map_err(|e| e.with_row(r))?;
            exact_sum += l;
        }

        let de_count = self.clusters.n_clusters() + d_values.len() + self.exact_rows.len();
        self.finish(weval, d_values, mean_d, m2_d, sum_d, exact_sum, de_count)
    }

    /// Grow an existing estimate by `extra` subsample rows without touching
    /// the rows already drawn: the new batch's residual moments are merged
    /// into the running ones with the parallel mean/sum-of-squares update, so
    /// the result matches a from-scratch estimate on the concatenated
    /// subsample up to rounding.
    pub fn augment(
        &self,
        weval: &WEval,
        est: &LogLikEstimate,
        extra: &Subsample,
        theta: ArrayView1<f64>,
    ) -> Result<LogLikEstimate> {
        self.check_theta(weval, theta)?;
        if extra.rows.is_empty() {
            return Ok(est.clone());
        }
        let (batch, mean_b, m2_b, sum_b) = self.residual_batch(weval, &extra.rows, theta)?;

        let n_a = est.d_values.len() as f64;
        let n_b = batch.len() as f64;
        let n_t = n_a + n_b;
        let delta = mean_b - est.mean_d;
        let mean_d = est.mean_d + delta * (n_b / n_t);
        let m2_d = est.m2_d + m2_b + delta * delta * (n_a * n_b / n_t);
        let sum_d = est.sum_d + sum_b;

        let mut d_values = est.d_values.clone();
        d_values.extend_from_slice(&batch);
        let de_count = est.de_count + batch.len();
        self.finish(weval, d_values, mean_d, m2_d, sum_d, est.exact_sum, de_count)
    }

    /// Evaluate one batch of residuals d_k in ascending row order, returning
    /// (values, mean, sum of squared deviations, plain sum).
    fn residual_batch(
        &self,
        weval: &WEval,
        rows: &[usize],
        theta: ArrayView1<f64>,
    ) -> Result<(Vec<f64>, f64, f64, f64)> {
        let mut sorted = rows.to_vec();
        sorted.sort_unstable();
        let dim = self.clusters.dim;
        let mut dz = vec![0.0; dim];
        let mut d_values = Vec::with_capacity(sorted.len());
        let (mut mean, mut m2, mut sum) = (0.0, 0.0, 0.0);
        for (i, &r) in sorted.iter().enumerate() {
            if r >= self.dataset.n() {
                return Err(Error::InvalidValue {
                    name: "subsample".to_string(),
                    reason: format!("row {r} out of range for n = {}", self.dataset.n()),
                });
            }
            if self.is_exact[r] {
                return Err(Error::SubsampleInExactStratum { row: r });
            }
            let d = self.residual(weval, r, theta, &mut dz)?;
            d_values.push(d);
            sum += d;
            let count = (i + 1) as f64;
            let delta = d - mean;
            mean += delta / count;
            m2 += delta * (d - mean);
        }
        Ok((d_values, mean, m2, sum))
    }

    /// d_k = l_k(θ) − w_k(θ) for one estimated-stratum row.
    fn residual(
        &self,
        weval: &WEval,
        row: usize,
        theta: ArrayView1<f64>,
        dz: &mut [f64],
    ) -> Result<f64> {
        let j = self.clusters.assignment[row];
        debug_assert!(j >= 0, "residual on an exact-stratum row");
        let j = j as usize;
        let cl = &self.clusters.clusters[j];
        let dim = dz.len();
        let y = self.dataset.y()[row];
        let x = self.dataset.x_row(row);
        dz[0] = y - cl.centroid[0];
        for a in 1..dim {
            dz[a] = x[a - 1] - cl.centroid[a];
        }
        let l = self
            .model
            .log_density(Observation { y, x }, theta)
            .map_err(|e| e.with_row(row))?;

        let mut linear = 0.0;
        for a in 0..dim {
            linear += weval.grads[[j, a]] * dz[a];
        }
        let h = self.cluster_hessian(weval, j);
        let mut quad = 0.0;
        for a in 0..dim {
            let mut hrow = 0.0;
            for b in 0..dim {
                hrow += h[[a, b]] * dz[b];
            }
            quad += dz[a] * hrow;
        }
        let w_k = weval.logliks[j] + linear + 0.5 * quad;
        Ok(l - w_k)
    }

    fn cluster_hessian<'w>(&'w self, weval: &'w WEval, j: usize) -> ArrayView2<'w, f64> {
        match (&weval.hessians, &self.frozen_hessians) {
            (Some(h), _) => h.slice(s![j, .., ..]),
            (None, Some(f)) => f.slice(s![j, .., ..]),
            (None, None) => unreachable!("proxy evaluation lost its Hessians"),
        }
    }

    fn check_theta(&self, weval: &WEval, theta: ArrayView1<f64>) -> Result<()> {
        let same = weval.theta.len() == theta.len()
            && weval
                .theta
                .iter()
                .zip(theta.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            return Err(Error::InvalidValue {
                name: "theta".to_string(),
                reason: "estimate must use the θ the proxy was evaluated at".to_string(),
            });
        }
        Ok(())
    }

    fn finish(
        &self,
        weval: &WEval,
        d_values: Vec<f64>,
        mean_d: f64,
        m2_d: f64,
        sum_d: f64,
        exact_sum: f64,
        de_count: usize,
    ) -> Result<LogLikEstimate> {
        let m = d_values.len() as f64;
        let n_est = self.est_rows.len() as f64;
        let m2_d = m2_d.max(0.0);
        let s2 = m2_d / (m - 1.0);
        let sigma2_hat = n_est * n_est * s2 / m;
        let d_hat = (n_est / m) * sum_d;
        let l_hat = weval.w + d_hat + exact_sum;
        if !l_hat.is_finite() || !sigma2_hat.is_finite() {
            return Err(Error::NonFinite {
                context: "log-likelihood estimate".to_string(),
                row: None,
            });
        }
        Ok(LogLikEstimate {
            l_hat,
            sigma2_hat,
            corrected: l_hat - sigma2_hat / 2.0,
            de_count,
            d_values,
            w: weval.w,
            d_hat,
            exact_sum,
            sum_d,
            mean_d,
            m2_d,
        })
    }
}
