//! Metropolis–Hastings engines: the exact full-data baseline, the
//! subsampling pseudo-marginal chain with adaptive subsample size, and its
//! infrequent-refresh variant, plus proposal machinery and posterior-mode
//! finding.
//!
//! The pseudo-marginal chain targets the joint state (θ, u): each iteration
//! first decides with probability ω whether the proposal reuses the current
//! subsample indices or draws fresh ones, then proposes θ', estimates the
//! log-likelihood at (θ', u'), and accepts or rejects the pair as a whole
//! with the bias-corrected values l̂ − σ̂_z²/2 on both sides of the ratio.
//! Because fresh indices are drawn from their own sampling law, the index
//! proposal cancels and the acceptance ratio has the same form either way.
//! The current state's estimate is carried from the iteration it was
//! accepted and never recomputed.
//!
//! Randomness is split into four independent substreams of one seeded
//! counter-based generator — proposal noise, subsample indices, acceptance
//! uniforms, refresh coin — so consuming more of one stream (adaptation,
//! refresh) never desynchronizes the others. The exact baseline uses the
//! same layout, which makes it reproduce a perfect-proxy subsampling chain
//! draw for draw under a shared seed.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimator::DifferenceEstimator;
use crate::linalg;
use crate::model::Model;

/// Independent substreams of one seeded generator. Streams are fixed by
/// role; every engine draws a given kind of randomness from the same stream.
pub(crate) struct RngStreams {
    pub proposal: ChaCha8Rng,
    pub subsample: ChaCha8Rng,
    pub accept: ChaCha8Rng,
    pub coin: ChaCha8Rng,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        let sub = |stream: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(stream);
            r
        };
        RngStreams {
            proposal: sub(0),
            subsample: sub(1),
            accept: sub(2),
            coin: sub(3),
        }
    }
}

/// Log-prior callback: density plus the derivatives mode finding needs.
pub trait Prior: Sync {
    fn log_density(&self, theta: ArrayView1<f64>) -> f64;
    /// Gradient and Hessian of the log-prior density.
    fn grad_hess(&self, theta: ArrayView1<f64>) -> (Array1<f64>, Array2<f64>);
}

/// Spherical Gaussian prior θ ~ N(0, τ·I).
#[derive(Clone, Debug)]
pub struct GaussianPrior {
    pub tau: f64,
}

impl GaussianPrior {
    pub fn new(tau: f64) -> Result<Self> {
        if !tau.is_finite() || tau <= 0.0 {
            return Err(Error::InvalidValue {
                name: "tau".to_string(),
                reason: format!("prior variance must be positive and finite, got {tau}"),
            });
        }
        Ok(GaussianPrior { tau })
    }
}

impl Prior for GaussianPrior {
    fn log_density(&self, theta: ArrayView1<f64>) -> f64 {
        let p = theta.len() as f64;
        let ss: f64 = theta.iter().map(|t| t * t).sum();
        -0.5 * ss / self.tau - 0.5 * p * (2.0 * std::f64::consts::PI * self.tau).ln()
    }

    fn grad_hess(&self, theta: ArrayView1<f64>) -> (Array1<f64>, Array2<f64>) {
        let p = theta.len();
        let grad = theta.mapv(|t| -t / self.tau);
        let hess = Array2::from_diag_elem(p, -1.0 / self.tau);
        (grad, hess)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProposalKind {
    /// Random-walk Metropolis: θ' ~ N(θ_c, c_λ·H⁻¹(θ*)).
    Rwm,
    /// Independence sampler: θ' ~ t_ν(θ*, H⁻¹(θ*)).
    Imh,
}

/// A validated proposal distribution built around the posterior mode.
pub struct Proposal {
    pub kind: ProposalKind,
    /// Posterior mode θ*.
    pub mode: Array1<f64>,
    /// Inverse negative Hessian of the log-posterior at θ*.
    pub hess_inv: Array2<f64>,
    /// Random-walk step-size multiplier c_λ (1 for IMH).
    pub scale: f64,
    /// Student-t degrees of freedom (IMH only).
    pub dof: f64,
    chol: Array2<f64>,
    cov_inv: Array2<f64>,
    imh_const: f64,
}

impl Proposal {
    /// Random-walk proposal with covariance c_λ·H⁻¹(θ*). Without an explicit
    /// scale, c_λ defaults to the classic 2.38²/p dimension rule.
    pub fn rwm(mode: Array1<f64>, hess_inv: Array2<f64>, scale: Option<f64>) -> Result<Self> {
        let p = mode.len();
        let scale = scale.unwrap_or(2.38 * 2.38 / p as f64);
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::InvalidValue {
                name: "scale".to_string(),
                reason: format!("proposal scale must be positive, got {scale}"),
            });
        }
        Self::build(ProposalKind::Rwm, mode, hess_inv, scale, 0.0)
    }

    /// Independence proposal t_ν(θ*, H⁻¹(θ*)), ν > 2.
    pub fn imh(mode: Array1<f64>, hess_inv: Array2<f64>, dof: f64) -> Result<Self> {
        if !dof.is_finite() || dof <= 2.0 {
            return Err(Error::InvalidValue {
                name: "dof".to_string(),
                reason: format!("t degrees of freedom must exceed 2, got {dof}"),
            });
        }
        Self::build(ProposalKind::Imh, mode, hess_inv, 1.0, dof)
    }

    fn build(
        kind: ProposalKind,
        mode: Array1<f64>,
        hess_inv: Array2<f64>,
        scale: f64,
        dof: f64,
    ) -> Result<Self> {
        let p = mode.len();
        if hess_inv.nrows() != p || hess_inv.ncols() != p {
            return Err(Error::DimensionMismatch {
                context: "proposal covariance vs mode".to_string(),
                expected: p,
                got: hess_inv.nrows(),
            });
        }
        let cov = hess_inv.mapv(|v| v * scale);
        let chol = linalg::cholesky(cov.view(), "proposal covariance")?;
        let cov_inv = linalg::spd_inverse(cov.view(), "proposal covariance")?;
        let log_det_cov = linalg::spd_log_det(cov.view(), "proposal covariance")?;
        let pf = p as f64;
        let imh_const = ln_gamma((dof + pf) / 2.0)
            - ln_gamma(dof / 2.0)
            - 0.5 * pf * (dof * std::f64::consts::PI).ln()
            - 0.5 * log_det_cov;
        Ok(Proposal {
            kind,
            mode,
            hess_inv,
            scale,
            dof,
            chol,
            cov_inv,
            imh_const,
        })
    }

    /// Draw θ' given the current point; returns (θ', log q(θ_c) − log q(θ')).
    /// The correction is 0 for the symmetric random walk.
    pub fn propose<R: Rng + ?Sized>(
        &self,
        theta_c: ArrayView1<f64>,
        rng: &mut R,
    ) -> (Array1<f64>, f64) {
        let p = self.mode.len();
        let z = Array1::from_iter((0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let step = self.chol.dot(&z);
        match self.kind {
            ProposalKind::Rwm => (&theta_c.to_owned() + &step, 0.0),
            ProposalKind::Imh => {
                let chi2: f64 = rng.sample(ChiSquared::new(self.dof).expect("validated dof"));
                let theta_p = &self.mode + &(step * (self.dof / chi2).sqrt());
                let lqr = self.imh_log_density(theta_c) - self.imh_log_density(theta_p.view());
                (theta_p, lqr)
            }
        }
    }

    /// Normalized log-density of the multivariate t proposal.
    pub(crate) fn imh_log_density(&self, theta: ArrayView1<f64>) -> f64 {
        let pf = self.mode.len() as f64;
        let delta = &theta.to_owned() - &self.mode;
        let quad = delta.dot(&self.cov_inv.dot(&delta));
        self.imh_const - 0.5 * (self.dof + pf) * (1.0 + quad / self.dof).ln()
    }
}

/// One Metropolis–Hastings accept/reject decision on log scale.
///
/// Accepts with probability min(1, exp(Δ)), Δ = (l_p + prior_p) − (l_c +
/// prior_c) + log_q_ratio. A uniform is always consumed so the decision
/// stream stays aligned across variants. −∞ (a zero-probability proposal)
/// rejects; NaN is an error, never a silent rejection.
pub fn accept_step<R: Rng + ?Sized>(
    logl_p: f64,
    logl_c: f64,
    log_prior_p: f64,
    log_prior_c: f64,
    log_q_ratio: f64,
    rng: &mut R,
) -> Result<bool> {
    let delta = (logl_p + log_prior_p) - (logl_c + log_prior_c) + log_q_ratio;
    let u: f64 = rng.random();
    if delta.is_nan() {
        return Err(Error::NonFinite {
            context: "acceptance ratio".to_string(),
            row: None,
        });
    }
    Ok(u.ln() < delta)
}

/// Maximize the log-posterior by damped Newton ascent.
///
/// Uses the model's analytic parameter-space derivatives when it provides
/// them, otherwise central finite differences of the full-data
/// log-likelihood. Returns the mode and the inverse negative Hessian there.
/// Convergence means gradient norm < 1e-6.
pub fn find_mode(
    model: &dyn Model,
    dataset: &Dataset,
    prior: &dyn Prior,
    theta0: ArrayView1<f64>,
) -> Result<(Array1<f64>, Array2<f64>)> {
    let p = theta0.len();
    let max_iter = 200;
    let mut theta = theta0.to_owned();

    let posterior = |t: ArrayView1<f64>| -> Result<f64> {
        Ok(model.total_log_density(dataset.y(), dataset.x(), t)? + prior.log_density(t))
    };

    let mut value = posterior(theta.view())?;
    let mut grad_norm = f64::INFINITY;
    for iter in 0..max_iter {
        let (g_lik, h_lik) = match model.theta_grad_hess(dataset.y(), dataset.x(), theta.view())? {
            Some(pair) => pair,
            None => fd_theta_grad_hess(model, dataset, theta.view())?,
        };
        let (g_pri, h_pri) = prior.grad_hess(theta.view());
        let grad = &g_lik + &g_pri;
        let hess = &h_lik + &h_pri;
        grad_norm = grad.dot(&grad).sqrt();
        if grad_norm < 1e-6 {
            let neg_h = hess.mapv(|v| -v);
            let hess_inv = linalg::spd_inverse(neg_h.view(), "negative Hessian at the mode")?;
            return Ok((theta, hess_inv));
        }

        // Newton direction from −H·s = g, ridging −H until it factors.
        let mut neg_h = hess.mapv(|v| -v);
        let base = neg_h
            .diag()
            .iter()
            .fold(0.0f64, |acc, &v| acc.max(v.abs()))
            .max(1.0);
        let mut ridge = 0.0;
        let step = loop {
            match linalg::solve_spd(neg_h.view(), grad.view(), "Newton system") {
                Ok(s) => break s,
                Err(_) => {
                    ridge = if ridge == 0.0 { 1e-6 * base } else { ridge * 10.0 };
                    if ridge > 1e6 * base {
                        return Err(Error::ModeNotConverged {
                            iters: max_iter,
                            grad_norm,
                        });
                    }
                    for i in 0..p {
                        neg_h[[i, i]] = -hess[[i, i]] + ridge;
                    }
                }
            }
        };

        // Backtrack until the posterior improves (Newton can overshoot on
        // flat logistic likelihoods). Near the optimum a full step's true
        // improvement can sit below the rounding noise of a sum of n
        // log-density terms, so tolerate an ulp-scale regression instead of
        // rejecting the step and stalling just above the gradient tolerance.
        let slack = 1e-12 * (1.0 + value.abs());
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &theta + &step.mapv(|v| v * t);
            if let Ok(v) = posterior(cand.view()) {
                if v >= value - slack {
                    theta = cand;
                    value = v;
                    accepted = true;
                    break;
                }
            }
            t /= 2.0;
        }
        if !accepted {
            // No uphill step found: the gradient norm says how close we got.
            return Err(Error::ModeNotConverged {
                iters: iter,
                grad_norm,
            });
        }
    }
    Err(Error::ModeNotConverged {
        iters: max_iter,
        grad_norm,
    })
}

/// Central finite differences of the full-data log-likelihood in θ.
fn fd_theta_grad_hess(
    model: &dyn Model,
    dataset: &Dataset,
    theta: ArrayView1<f64>,
) -> Result<(Array1<f64>, Array2<f64>)> {
    let p = theta.len();
    let f = |t: ArrayView1<f64>| model.total_log_density(dataset.y(), dataset.x(), t);
    let mut grad = Array1::<f64>::zeros(p);
    for i in 0..p {
        let h = 1e-6 * (1.0 + theta[i].abs());
        let mut tp = theta.to_owned();
        let mut tm = theta.to_owned();
        tp[i] += h;
        tm[i] -= h;
        grad[i] = (f(tp.view())? - f(tm.view())?) / (2.0 * h);
    }
    let mut hess = Array2::<f64>::zeros((p, p));
    let f0 = f(theta)?;
    for i in 0..p {
        let hi = 1e-3 * (1.0 + theta[i].abs());
        let mut tp = theta.to_owned();
        let mut tm = theta.to_owned();
        tp[i] += hi;
        tm[i] -= hi;
        hess[[i, i]] = (f(tp.view())? - 2.0 * f0 + f(tm.view())?) / (hi * hi);
        for j in 0..i {
            let hj = 1e-3 * (1.0 + theta[j].abs());
            let mut tpp = theta.to_owned();
            let mut tpm = theta.to_owned();
            let mut tmp = theta.to_owned();
            let mut tmm = theta.to_owned();
            tpp[i] += hi;
            tpp[j] += hj;
            tpm[i] += hi;
            tpm[j] -= hj;
            tmp[i] -= hi;
            tmp[j] += hj;
            tmm[i] -= hi;
            tmm[j] -= hj;
            let v = (f(tpp.view())? - f(tpm.view())? - f(tmp.view())? + f(tmm.view())?)
                / (4.0 * hi * hj);
            hess[[i, j]] = v;
            hess[[j, i]] = v;
        }
    }
    Ok((grad, hess))
}

/// Chain-run settings shared by the exact and subsampling engines.
#[derive(Clone, Debug)]
pub struct SamplerConfig {
    /// Total iterations, burn-in included.
    pub n_iter: usize,
    /// Leading draws flagged as burn-in; the refresh probability is forced
    /// to 1 there.
    pub burn_in: usize,
    /// Subsample refresh probability ω ∈ (0, 1].
    pub omega: f64,
    /// Ceiling on σ̂_z² enforced by adaptive augmentation.
    pub v_max: f64,
    /// Initial (and, without adaptation, permanent) subsample size.
    pub m0: usize,
    /// Grow the subsample whenever σ̂_z² exceeds `v_max`.
    pub adaptive: bool,
    pub seed: u64,
    /// Starting point; the proposal's mode when omitted.
    pub theta0: Option<Array1<f64>>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_iter: 10_000,
            burn_in: 1_000,
            omega: 1.0,
            v_max: 1.0,
            m0: 100,
            adaptive: true,
            seed: 1,
            theta0: None,
        }
    }
}

impl SamplerConfig {
    fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_iter {
            return Err(Error::InvalidValue {
                name: "burn_in".to_string(),
                reason: format!(
                    "burn-in ({}) must be smaller than the iteration count ({})",
                    self.burn_in, self.n_iter
                ),
            });
        }
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(Error::InvalidValue {
                name: "omega".to_string(),
                reason: format!("refresh probability must lie in (0, 1], got {}", self.omega),
            });
        }
        if !self.v_max.is_finite() || self.v_max <= 0.0 {
            return Err(Error::InvalidValue {
                name: "v_max".to_string(),
                reason: format!("variance ceiling must be positive, got {}", self.v_max),
            });
        }
        if self.m0 < 2 {
            return Err(Error::InvalidValue {
                name: "m0".to_string(),
                reason: format!("initial subsample size must be at least 2, got {}", self.m0),
            });
        }
        Ok(())
    }
}

/// Everything a finished run produces: the draws plus per-iteration
/// telemetry for diagnostics and cost accounting.
#[derive(Clone, Debug)]
pub struct ChainOutput {
    /// All draws, burn-in included, one row per iteration.
    pub draws: Array2<f64>,
    pub burn_in: usize,
    pub accepted: Vec<bool>,
    /// σ̂_z² of the proposal's estimate (0 for the exact engine).
    pub sigma2_at_proposal: Vec<f64>,
    /// Log-density evaluations consumed per iteration.
    pub de_per_iter: Vec<usize>,
    /// Subsample size used at each proposal (0 for the exact engine).
    pub m_trajectory: Vec<usize>,
    pub u_refreshed: Vec<bool>,
    /// Augmentation rounds spent per iteration.
    pub augment_rounds: Vec<u8>,
    /// Iterations whose target size m* had to be capped at n_est; nonzero
    /// values deserve a warning — the subsample degenerated toward a census.
    pub m_capped: usize,
    /// Evaluations spent on the initial estimate before iteration 0.
    pub de_initial: usize,
    pub seed: u64,
}

impl ChainOutput {
    /// Post-burn-in draws.
    pub fn kept_draws(&self) -> ArrayView2<'_, f64> {
        self.draws.slice(s![self.burn_in.., ..])
    }

    pub fn acceptance_rate(&self) -> f64 {
        let n = self.accepted.len().max(1);
        self.accepted.iter().filter(|&&a| a).count() as f64 / n as f64
    }

    /// Average proposal-estimate standard deviation σ̄_z after burn-in.
    pub fn mean_sigma_z(&self) -> f64 {
        let post = &self.sigma2_at_proposal[self.burn_in..];
        if post.is_empty() {
            return 0.0;
        }
        post.iter().map(|s2| s2.sqrt()).sum::<f64>() / post.len() as f64
    }

    /// Mean per-iteration density evaluations as a fraction of n.
    pub fn fraction_evaluated(&self, n: usize) -> f64 {
        if self.de_per_iter.is_empty() {
            return 0.0;
        }
        let mean = self.de_per_iter.iter().map(|&d| d as f64).sum::<f64>()
            / self.de_per_iter.len() as f64;
        mean / n as f64
    }
}

/// Exact-likelihood Metropolis–Hastings over the full dataset.
pub fn run_mcmc_exact(
    model: &dyn Model,
    dataset: &Dataset,
    prior: &dyn Prior,
    proposal: &Proposal,
    config: &SamplerConfig,
) -> Result<ChainOutput> {
    config.validate()?;
    let p = proposal.mode.len();
    let n = config.n_iter;
    let mut streams = RngStreams::new(config.seed);

    let mut theta_c = config.theta0.clone().unwrap_or_else(|| proposal.mode.clone());
    let mut logl_c = model.total_log_density(dataset.y(), dataset.x(), theta_c.view())?;
    let mut lp_c = prior.log_density(theta_c.view());

    let mut out = ChainOutput {
        draws: Array2::zeros((n, p)),
        burn_in: config.burn_in,
        accepted: vec![false; n],
        sigma2_at_proposal: vec![0.0; n],
        de_per_iter: vec![dataset.n(); n],
        m_trajectory: vec![0; n],
        u_refreshed: vec![false; n],
        augment_rounds: vec![0; n],
        m_capped: 0,
        de_initial: dataset.n(),
        seed: config.seed,
    };

    for i in 0..n {
        let (theta_p, lqr) = proposal.propose(theta_c.view(), &mut streams.proposal);
        let logl_p = model.total_log_density(dataset.y(), dataset.x(), theta_p.view())?;
        let lp_p = prior.log_density(theta_p.view());
        let accept = accept_step(logl_p, logl_c, lp_p, lp_c, lqr, &mut streams.accept)?;
        if accept {
            theta_c = theta_p;
            logl_c = logl_p;
            lp_c = lp_p;
        }
        out.accepted[i] = accept;
        out.draws.row_mut(i).assign(&theta_c);
    }
    Ok(out)
}

/// Subsampling pseudo-marginal Metropolis–Hastings.
///
/// Implements the adaptive-subsample chain and its infrequent-refresh
/// variant in one loop; ω = 1 refreshes the indices every iteration. Freeze
/// the estimator's Hessians beforehand if the cheaper frozen proxy is
/// wanted. The initial estimate at θ₀ is taken as-is (no adaptation).
pub fn run_pmcmc(
    estimator: &DifferenceEstimator,
    prior: &dyn Prior,
    proposal: &Proposal,
    config: &SamplerConfig,
) -> Result<ChainOutput> {
    config.validate()?;
    let p = proposal.mode.len();
    let n = config.n_iter;
    let n_est = estimator.n_est();
    let mut streams = RngStreams::new(config.seed);

    let mut theta_c = config.theta0.clone().unwrap_or_else(|| proposal.mode.clone());
    let m0 = config.m0.min(n_est).max(2);
    let mut u_c = estimator.draw(&mut streams.subsample, m0)?;
    let est_c = {
        let weval = estimator.evaluate_w(theta_c.view())?;
        estimator.estimate(&weval, &u_c, theta_c.view())?
    };
    let mut corr_c = est_c.corrected;
    let de_initial = est_c.de_count;
    let mut lp_c = prior.log_density(theta_c.view());
    let mut out = ChainOutput {
        draws: Array2::zeros((n, p)),
        burn_in: config.burn_in,
        accepted: vec![false; n],
        sigma2_at_proposal: vec![0.0; n],
        de_per_iter: vec![0; n],
        m_trajectory: vec![0; n],
        u_refreshed: vec![false; n],
        augment_rounds: vec![0; n],
        m_capped: 0,
        de_initial,
        seed: config.seed,
    };

    for i in 0..n {
        // The refresh coin is consumed before proposing so the proposal
        // stream is independent of ω; burn-in forces a refresh.
        let coin: f64 = streams.coin.random();
        let refresh = i < config.burn_in || coin < config.omega;

        let mut u_p = if refresh {
            // Every fresh draw restarts from m0 and lets the augmentation
            // loop regrow to the level this proposal actually needs. Carrying
            // the adapted size across refreshes would only ever ratchet it
            // up — one tail proposal or one unlucky variance estimate fixes
            // the size for the rest of the chain — leaving typical
            // iterations far below the ceiling instead of just under it.
            estimator.draw(&mut streams.subsample, m0)?
        } else {
            u_c.clone()
        };

        let (theta_p, lqr) = proposal.propose(theta_c.view(), &mut streams.proposal);
        let weval_p = estimator.evaluate_w(theta_p.view())?;
        let mut est_p = estimator.estimate(&weval_p, &u_p, theta_p.view())?;

        let mut rounds: u8 = 0;
        if config.adaptive {
            while est_p.sigma2_hat > config.v_max {
                if rounds >= 20 {
                    return Err(Error::AugmentationStalled {
                        rounds: rounds as usize,
                        sigma2: est_p.sigma2_hat,
                    });
                }
                let m = est_p.m();
                let mut m_star =
                    ((est_p.sigma2_hat * m as f64) / config.v_max).ceil() as usize;
                if m_star > n_est {
                    m_star = n_est;
                    out.m_capped += 1;
                }
                if m_star <= m {
                    // Capped with nothing left to add: live with the variance.
                    break;
                }
                let extra = estimator.draw_extra(&mut streams.subsample, m_star - m)?;
                est_p = estimator.augment(&weval_p, &est_p, &extra, theta_p.view())?;
                u_p.rows.extend_from_slice(&extra.rows);
                rounds += 1;
            }
        }

        let lp_p = prior.log_density(theta_p.view());
        let accept = accept_step(est_p.corrected, corr_c, lp_p, lp_c, lqr, &mut streams.accept)?;

        out.accepted[i] = accept;
        out.sigma2_at_proposal[i] = est_p.sigma2_hat;
        out.de_per_iter[i] = est_p.de_count;
        out.m_trajectory[i] = est_p.m();
        out.u_refreshed[i] = refresh;
        out.augment_rounds[i] = rounds;

        if accept {
            theta_c = theta_p;
            u_c = u_p;
            corr_c = est_p.corrected;
            lp_c = lp_p;
        }
        out.draws.row_mut(i).assign(&theta_c);
    }
    Ok(out)
}
