//! Chain-quality metrics: inefficiency factors, effective draws, their
//! ratios against a baseline chain, and the two-chain mean-equality test.
//!
//! The inefficiency factor IF = 1 + 2Σ_l ρ_l measures how many correlated
//! draws buy one independent draw; effective draws ED = N/(IF·DE) fold in
//! the per-iteration cost in log-density evaluations, making chains with
//! different per-iteration prices comparable. Relative versions (RIF, RED)
//! divide a subsampling chain's numbers by an exact baseline's.

use ndarray::{ArrayView1, ArrayView2};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::sampler::ChainOutput;

/// Minimum draws for autocorrelation-based estimates.
const MIN_DRAWS: usize = 1000;

/// Estimate the inefficiency factor of one scalar chain.
///
/// Autocorrelations use the biased (1/n) covariance normalization and are
/// truncated by the initial-positive-sequence rule: adjacent-lag pairs
/// Γ_k = ρ_{2k} + ρ_{2k+1} are summed until a pair turns non-positive, and
/// IF = 2ΣΓ_k − 1. Estimates beyond lag n/2 are never used.
pub fn inefficiency_factor(draws: ArrayView1<f64>) -> Result<f64> {
    let n = draws.len();
    if n < MIN_DRAWS {
        return Err(Error::ChainTooShort {
            context: "inefficiency factor".to_string(),
            min: MIN_DRAWS,
            got: n,
        });
    }
    let nf = n as f64;
    let mean = draws.sum() / nf;
    let x: Vec<f64> = draws.iter().map(|v| v - mean).collect();
    let gamma = |l: usize| -> f64 {
        let mut s = 0.0;
        for t in 0..(n - l) {
            s += x[t] * x[t + l];
        }
        s / nf
    };
    let g0 = gamma(0);
    if !(g0 > 1e-30 * (1.0 + mean * mean)) {
        return Err(Error::DegenerateVariance {
            context: "inefficiency factor of a constant chain".to_string(),
        });
    }

    let mut pair_sum = 0.0;
    let mut k = 0usize;
    loop {
        let (l1, l2) = (2 * k, 2 * k + 1);
        if l2 > n / 2 {
            break;
        }
        let g = gamma(l1) + gamma(l2);
        if g <= 0.0 {
            break;
        }
        pair_sum += g;
        k += 1;
    }
    Ok(2.0 * pair_sum / g0 - 1.0)
}

/// Effective draws ED = N/(IF·DE): chain size discounted by autocorrelation
/// and by the per-iteration evaluation bill.
pub fn effective_draws(n_iters: usize, if_value: f64, de_mean: f64) -> f64 {
    n_iters as f64 / (if_value * de_mean)
}

/// Efficiency summary of one chain. `rif`/`red` stay empty until the report
/// is compared against a baseline.
#[derive(Clone, Debug, Serialize)]
pub struct EfficiencyReport {
    /// Inefficiency factor per parameter.
    pub if_per_param: Vec<f64>,
    /// Across-parameter mean IF, the scalar the headline ED uses.
    pub mean_if: f64,
    /// Effective draws from the mean IF.
    pub ed: f64,
    /// Mean log-density evaluations per iteration.
    pub de_mean: f64,
    /// Post-burn-in draws the report covers.
    pub n_draws: usize,
    /// Per-parameter IF ratio vs a baseline chain (empty until compared).
    pub rif: Vec<f64>,
    /// Per-parameter effective-draw ratio vs a baseline chain.
    pub red: Vec<f64>,
}

/// Build an efficiency report from post-burn-in draws and the mean
/// per-iteration evaluation count.
pub fn efficiency_report(draws: ArrayView2<f64>, de_mean: f64) -> Result<EfficiencyReport> {
    if de_mean <= 0.0 || !de_mean.is_finite() {
        return Err(Error::InvalidValue {
            name: "de_mean".to_string(),
            reason: format!("evaluations per iteration must be positive, got {de_mean}"),
        });
    }
    let p = draws.ncols();
    let mut if_per_param = Vec::with_capacity(p);
    for j in 0..p {
        if_per_param.push(inefficiency_factor(draws.column(j))?);
    }
    let mean_if = if_per_param.iter().sum::<f64>() / p as f64;
    let ed = effective_draws(draws.nrows(), mean_if, de_mean);
    Ok(EfficiencyReport {
        if_per_param,
        mean_if,
        ed,
        de_mean,
        n_draws: draws.nrows(),
        rif: Vec::new(),
        red: Vec::new(),
    })
}

/// Report for a finished run, taking the kept draws and the post-burn-in
/// evaluation telemetry from the chain output.
pub fn report_for_chain(out: &ChainOutput) -> Result<EfficiencyReport> {
    let post = &out.de_per_iter[out.burn_in..];
    let de_mean = post.iter().map(|&d| d as f64).sum::<f64>() / post.len().max(1) as f64;
    efficiency_report(out.kept_draws(), de_mean)
}

/// Elementwise efficiency ratios of a chain against a baseline:
/// RIF_j = IF_j / IF_j^base and RED_j = ED_j / ED_j^base.
pub fn relative_report(
    report: &EfficiencyReport,
    baseline: &EfficiencyReport,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if report.if_per_param.len() != baseline.if_per_param.len() {
        return Err(Error::DimensionMismatch {
            context: "relative efficiency parameter counts".to_string(),
            expected: baseline.if_per_param.len(),
            got: report.if_per_param.len(),
        });
    }
    let mut rif = Vec::with_capacity(report.if_per_param.len());
    let mut red = Vec::with_capacity(report.if_per_param.len());
    for (j, (&ia, &ib)) in report
        .if_per_param
        .iter()
        .zip(baseline.if_per_param.iter())
        .enumerate()
    {
        if ib == 0.0 || ia == 0.0 {
            return Err(Error::InvalidValue {
                name: "if_per_param".to_string(),
                reason: format!("parameter {j} has a zero inefficiency factor"),
            });
        }
        rif.push(ia / ib);
        let ed_a = effective_draws(report.n_draws, ia, report.de_mean);
        let ed_b = effective_draws(baseline.n_draws, ib, baseline.de_mean);
        red.push(ed_a / ed_b);
    }
    Ok((rif, red))
}

/// Outcome of the two-chain mean-comparison for one coordinate.
#[derive(Clone, Debug, Serialize)]
pub struct MeanTest {
    /// Mean of chain a minus mean of chain b.
    pub difference: f64,
    /// IF-inflated standard error of the difference.
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// True when 0 falls outside the confidence interval.
    pub reject: bool,
}

/// Test equality of posterior means between two independent chains.
///
/// Both chains are assumed weakly stationary; each coordinate's variance is
/// inflated by its estimated inefficiency factor, giving the standard error
/// √(s_a²·IF_a/N_a + s_b²·IF_b/N_b). The two-sided normal interval at
/// `level` (e.g. 0.05) decides rejection.
pub fn mean_equality_test(
    a: ArrayView2<f64>,
    b: ArrayView2<f64>,
    level: f64,
) -> Result<Vec<MeanTest>> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            context: "mean-equality parameter counts".to_string(),
            expected: a.ncols(),
            got: b.ncols(),
        });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidValue {
            name: "level".to_string(),
            reason: format!("test level must lie in (0, 1), got {level}"),
        });
    }
    let z = Normal::standard().inverse_cdf(1.0 - level / 2.0);
    let mut tests = Vec::with_capacity(a.ncols());
    for j in 0..a.ncols() {
        let (ca, cb) = (a.column(j), b.column(j));
        let if_a = inefficiency_factor(ca)?;
        let if_b = inefficiency_factor(cb)?;
        let (na, nb) = (ca.len() as f64, cb.len() as f64);
        let (ma, mb) = (ca.sum() / na, cb.sum() / nb);
        let s2a = ca.iter().map(|v| (v - ma).powi(2)).sum::<f64>() / (na - 1.0);
        let s2b = cb.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / (nb - 1.0);
        let se = (s2a * if_a / na + s2b * if_b / nb).sqrt();
        let difference = ma - mb;
        let (ci_low, ci_high) = (difference - z * se, difference + z * se);
        tests.push(MeanTest {
            difference,
            se,
            ci_low,
            ci_high,
            reject: !(ci_low <= 0.0 && 0.0 <= ci_high),
        });
    }
    Ok(tests)
}
