//! Acceptance suite: the library's load-bearing promises checked end to end,
//! each at its stated tolerance.
//!
//! Every test prints one summary line — `criterion N (label): PASS/FAIL in
//! T` — so `cargo test --test acceptance -- --nocapture` reads as a
//! checklist. The criteria:
//!
//! 1.  On a dataset small enough to enumerate every ordered subsample, the
//!     estimator's average over all nᵐ subsamples reproduces the exact
//!     log-likelihood and the exact variance formula to 1e-12.
//! 2.  The compact per-cluster proxy total equals a naive per-row Taylor sum
//!     within 1e-8 relative at n = 5,000.
//! 3.  Analytic data-space gradients and Hessians match central finite
//!     differences on 1,000 random probes per model (1e-6 for the
//!     closed-form logistic, 1e-5 for table-driven GLMs).
//! 4.  With singleton clusters (ε → 0) the pseudo-marginal chain is
//!     bit-identical to the exact chain under the shared seed discipline,
//!     for ω = 1 and ω = 0.1.
//! 5.  At n = 50,000 the subsampled posterior agrees with the exact one:
//!     per-coordinate mean-equality tests do not reject at the 5% level and
//!     kernel-density overlays are visually coincident (overlap ≥ 0.9).
//! 6.  In those same runs the variance ceiling v_max = 1 holds: every
//!     accepted proposal has σ̂_z² ≤ 1 and the chain-average σ̄_z sits in
//!     [0.8, 1.0].
//! 7.  The inefficiency factor of a simulated AR(1) chain is within 5% of
//!     its closed form (1+ρ)/(1−ρ) at length 10⁶.
//! 8.  With an independence proposal, infrequent refresh beats per-iteration
//!     refresh (RIF(ω = 0.01) < RIF(ω = 1)) and the subsampler delivers more
//!     effective draws per density evaluation than the exact chain
//!     (RED > 1) while evaluating under 20% of the data per iteration.
//! 9.  Rerunning a CLI sampling command with the same seed reproduces the
//!     chain and telemetry files byte for byte.

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;
use submc::clustering::{cluster, cluster_by_class, standardize, ClusterModel};
use submc::data::{synth_logistic, Dataset};
use submc::diagnostics::{
    inefficiency_factor, mean_equality_test, relative_report, report_for_chain,
};
use submc::estimator::{DifferenceEstimator, Subsample};
use submc::model::{Glm, GlmSpec, Logistic, Model, Observation};
use submc::sampler::{
    find_mode, run_mcmc_exact, run_pmcmc, ChainOutput, GaussianPrior, Proposal, SamplerConfig,
};

// ---------------------------------------------------------------------------
// checklist plumbing

/// One criterion's scorecard: failures accumulate instead of aborting so the
/// summary line can state everything that went wrong at once.
struct Check {
    label: &'static str,
    started: Instant,
    failures: Vec<String>,
}

impl Check {
    fn new(label: &'static str) -> Self {
        Check::with_start(label, Instant::now())
    }

    /// For criteria whose expensive work happens before the scorecard exists
    /// (shared chain runs): backdate the clock so the summary line reflects
    /// the real cost.
    fn with_start(label: &'static str, started: Instant) -> Self {
        Check {
            label,
            started,
            failures: Vec::new(),
        }
    }

    fn require(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(detail());
        }
    }

    /// Print the summary line; true means the criterion held.
    fn finish(self) -> bool {
        let elapsed = self.started.elapsed().as_secs_f64();
        if self.failures.is_empty() {
            println!("{}: PASS in {elapsed:.2}s", self.label);
            true
        } else {
            println!("{}: FAIL in {elapsed:.2}s", self.label);
            for f in &self.failures {
                println!("  - {f}");
            }
            false
        }
    }
}

// ---------------------------------------------------------------------------
// shared construction

/// Synthetic logistic data moved into standardized coordinates, the way the
/// CLI prepares every run: covariates centered and scaled except the
/// intercept, response untouched.
fn standardized_logistic(n: usize, beta: &[f64], seed: u64) -> Dataset {
    let raw = synth_logistic(n, beta, seed).unwrap();
    let exempt: Vec<bool> = (0..raw.p())
        .map(|j| Some(j) == raw.intercept_col())
        .collect();
    let (x, _) = standardize(raw.x(), &exempt, raw.covariate_names()).unwrap();
    raw.with_x(x).unwrap()
}

/// The desk-scale posterior shared by criteria 5, 6, and 8: fifty thousand
/// observations, five coefficients, class-wise ε-ball clusters, and the
/// Laplace approximation the proposals are built from.
struct DeskScale {
    ds: Dataset,
    clusters: ClusterModel,
    mode: Array1<f64>,
    hess_inv: Array2<f64>,
}

const DESK_N: usize = 50_000;
const DESK_SEED: u64 = 314_159;
const DESK_ITERS: usize = 55_000;
const DESK_BURN_IN: usize = 5_000;

fn desk_scale() -> &'static DeskScale {
    static SCENARIO: OnceLock<DeskScale> = OnceLock::new();
    SCENARIO.get_or_init(|| {
        let ds = standardized_logistic(DESK_N, &[0.2, -0.4, 0.3, 0.55, -0.25], 4242);
        let clusters = cluster_by_class(ds.y(), ds.x(), 0.9, None, None).unwrap();
        let prior = GaussianPrior::new(10.0).unwrap();
        let (mode, hess_inv) =
            find_mode(&Logistic, &ds, &prior, Array1::zeros(ds.p()).view()).unwrap();
        DeskScale {
            ds,
            clusters,
            mode,
            hess_inv,
        }
    })
}

fn desk_config(omega: f64) -> SamplerConfig {
    SamplerConfig {
        n_iter: DESK_ITERS,
        burn_in: DESK_BURN_IN,
        omega,
        v_max: 1.0,
        m0: 500,
        adaptive: true,
        seed: DESK_SEED,
        theta0: None,
    }
}

/// Visit every length-m tuple over {0, …, n−1} in odometer order.
fn for_each_tuple(n: usize, m: usize, mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; m];
    loop {
        f(&idx);
        let mut pos = m;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < n {
                break;
            }
            idx[pos] = 0;
        }
    }
}

fn bits_equal(a: ArrayView1<f64>, b: ArrayView1<f64>) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b.iter())
            .all(|(x, y)| x.to_bits() == y.to_bits())
}

// ---------------------------------------------------------------------------
// criterion 1

#[test]
fn criterion_1_enumeration_reproduces_exact_moments() {
    let mut c = Check::new("criterion 1 (subsample enumeration moments)");
    let n = 5;
    let ds = synth_logistic(n, &[0.4, -0.8], 7).unwrap();
    // A coarse radius on raw coordinates groups rows (even across response
    // classes), so the Taylor proxy has genuinely non-zero residuals.
    let cm = cluster(ds.z_matrix().view(), 2.0).unwrap();
    c.require(cm.clusters.iter().any(|cl| cl.count >= 2), || {
        "clustering degenerated to singletons; the enumeration would be vacuous".to_string()
    });
    let de = DifferenceEstimator::new(&Logistic, &ds, &cm).unwrap();
    assert_eq!(de.n_est(), n, "every row should sit in the estimated stratum");

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut saw_residual = false;
    for _ in 0..10 {
        let theta: Array1<f64> =
            Array1::from_iter((0..2).map(|_| 0.6 * rng.sample::<f64, _>(StandardNormal)));
        let l_exact = Logistic
            .total_log_density(ds.y(), ds.x(), theta.view())
            .unwrap();
        let weval = de.evaluate_w(theta.view()).unwrap();

        // Per-row residuals d_k via the duplicated-row subsample {k, k}.
        let d: Vec<f64> = (0..n)
            .map(|k| {
                de.estimate(&weval, &Subsample { rows: vec![k, k] }, theta.view())
                    .unwrap()
                    .d_values[0]
            })
            .collect();
        let d_bar = d.iter().sum::<f64>() / n as f64;
        let spread: f64 = d.iter().map(|&v| (v - d_bar) * (v - d_bar)).sum();
        saw_residual |= spread > 1e-8;

        for m in [2usize, 3] {
            let count = (n as f64).powi(m as i32);
            let (mut sum_l, mut sum_s2) = (0.0, 0.0);
            for_each_tuple(n, m, |rows| {
                let est = de
                    .estimate(
                        &weval,
                        &Subsample {
                            rows: rows.to_vec(),
                        },
                        theta.view(),
                    )
                    .unwrap();
                sum_l += est.l_hat;
                sum_s2 += est.sigma2_hat;
            });
            let mean_l = sum_l / count;
            let mean_s2 = sum_s2 / count;
            let target_s2 = (n as f64 / m as f64) * spread;
            c.require(
                (mean_l - l_exact).abs() <= 1e-12 * (1.0 + l_exact.abs()),
                || {
                    format!(
                        "E[l̂] over all {n}^{m} subsamples is {mean_l:.15e}, \
                         exact log-likelihood {l_exact:.15e}"
                    )
                },
            );
            c.require(
                (mean_s2 - target_s2).abs() <= 1e-12 * (1.0 + target_s2.abs()),
                || {
                    format!(
                        "E[σ̂_z²] over all {n}^{m} subsamples is {mean_s2:.15e}, \
                         exact (n/m)·Σ(d_k − d̄)² is {target_s2:.15e}"
                    )
                },
            );
        }
    }
    c.require(saw_residual, || {
        "all residuals were zero at every probe point; the variance check never bit".to_string()
    });
    assert!(c.finish());
}

// ---------------------------------------------------------------------------
// criterion 2

#[test]
fn criterion_2_compact_proxy_matches_per_row_taylor_sum() {
    let mut c = Check::new("criterion 2 (compact proxy vs per-row Taylor sum)");
    let ds = standardized_logistic(5_000, &[0.3, -0.6, 0.4], 99);
    let cm = cluster(ds.z_matrix().view(), 0.5).unwrap();
    let de = DifferenceEstimator::new(&Logistic, &ds, &cm).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let theta: Array1<f64> =
            Array1::from_iter((0..ds.p()).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)));

        // Oracle: expand around each row's own centroid, one row at a time.
        let mut naive = 0.0;
        for k in 0..ds.n() {
            let j = cm.assignment[k] as usize;
            let centroid = &cm.clusters[j].centroid;
            let (lc, g, h) = Logistic
                .log_density_grad_hess(Observation::from_z(centroid), theta.view())
                .unwrap();
            let delta = &ds.z_row(k) - centroid;
            naive += lc + g.dot(&delta) + 0.5 * delta.dot(&h.dot(&delta));
        }

        let w = de.evaluate_w(theta.view()).unwrap().w;
        let rel = (w - naive).abs() / naive.abs().max(1.0);
        worst = worst.max(rel);
        c.require(rel <= 1e-8, || {
            format!("compact total {w:.15e} vs naive sum {naive:.15e}: relative error {rel:.3e}")
        });
    }
    println!("  worst relative error over 20 parameter draws: {worst:.3e}");
    assert!(c.finish());
}

// ---------------------------------------------------------------------------
// criterion 3

/// Central-difference check of one model's data-space derivatives on random
/// probes; returns the worst relative error seen.
fn probe_model(model: &dyn Model, make_y: &mut dyn FnMut(&mut ChaCha8Rng) -> f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let p = 3;
    let mut worst = 0.0f64;
    for _ in 0..1_000 {
        let y = make_y(&mut rng);
        let x: Vec<f64> = (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let theta: Array1<f64> =
            Array1::from_iter((0..p).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)));
        let mut z = Array1::zeros(p + 1);
        z[0] = y;
        for (j, &v) in x.iter().enumerate() {
            z[j + 1] = v;
        }

        let (grad, hess) = model
            .grad_hess_z(Observation::from_z(&z), theta.view())
            .unwrap();
        for i in 0..=p {
            let h = 1e-5 * (1.0 + z[i].abs());
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[i] += h;
            zm[i] -= h;

            // Gradient against differenced log-densities.
            let lp = model
                .log_density(Observation::from_z(&zp), theta.view())
                .unwrap();
            let lm = model
                .log_density(Observation::from_z(&zm), theta.view())
                .unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1.0);
            worst = worst.max(rel);

            // Hessian column against differenced analytic gradients.
            let (gp, _) = model
                .grad_hess_z(Observation::from_z(&zp), theta.view())
                .unwrap();
            let (gm, _) = model
                .grad_hess_z(Observation::from_z(&zm), theta.view())
                .unwrap();
            for r in 0..=p {
                let fd = (gp[r] - gm[r]) / (2.0 * h);
                let a = hess[[r, i]];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1.0);
                worst = worst.max(rel);
            }
        }
    }
    worst
}

#[test]
fn criterion_3_derivatives_match_finite_differences() {
    let mut c = Check::new("criterion 3 (data-space derivatives vs finite differences)");

    let worst = probe_model(&Logistic, &mut |rng| {
        if rng.random::<f64>() < 0.5 {
            0.0
        } else {
            1.0
        }
    });
    println!("  logistic: worst relative error {worst:.3e} over 1000 probes");
    c.require(worst < 1e-6, || {
        format!("logistic worst relative error {worst:.3e} ≥ 1e-6")
    });

    let glms: [(Glm, Box<dyn FnMut(&mut ChaCha8Rng) -> f64>); 3] = [
        (
            Glm::new(GlmSpec::poisson_log_link()),
            Box::new(|rng: &mut ChaCha8Rng| 0.3 + 5.5 * rng.random::<f64>()),
        ),
        (
            Glm::new(GlmSpec::gaussian_identity()),
            Box::new(|rng: &mut ChaCha8Rng| 1.5 * rng.sample::<f64, _>(StandardNormal)),
        ),
        (
            Glm::new(GlmSpec::bernoulli_logit()),
            Box::new(|rng: &mut ChaCha8Rng| {
                if rng.random::<f64>() < 0.5 {
                    0.0
                } else {
                    1.0
                }
            }),
        ),
    ];
    for (glm, mut make_y) in glms {
        let worst = probe_model(&glm, &mut make_y);
        println!(
            "  {}: worst relative error {worst:.3e} over 1000 probes",
            glm.name()
        );
        c.require(worst < 1e-5, || {
            format!("{} worst relative error {worst:.3e} ≥ 1e-5", glm.name())
        });
    }
    assert!(c.finish());
}

// ---------------------------------------------------------------------------
// criterion 4

#[test]
fn criterion_4_singleton_clusters_reproduce_exact_chain_bitwise() {
    let mut c = Check::new("criterion 4 (perfect proxy ≡ exact chain, bitwise)");
    let ds = standardized_logistic(1_000, &[0.4, -0.7, 0.25], 21);
    // A vanishing radius puts every row in its own cluster: the Taylor
    // expansion at the row itself is exact and every residual is 0.0.
    let cm = cluster(ds.z_matrix().view(), 1e-9).unwrap();
    assert_eq!(cm.n_clusters(), ds.n());
    let de = DifferenceEstimator::new(&Logistic, &ds, &cm).unwrap();

    let prior = GaussianPrior::new(10.0).unwrap();
    let (mode, hess_inv) =
        find_mode(&Logistic, &ds, &prior, Array1::zeros(ds.p()).view()).unwrap();
    let proposal = Proposal::rwm(mode, hess_inv, None).unwrap();
    let base = SamplerConfig {
        n_iter: 4_000,
        burn_in: 500,
        omega: 1.0,
        v_max: 1.0,
        m0: 100,
        adaptive: true,
        seed: 77,
        theta0: None,
    };

    let exact = run_mcmc_exact(&Logistic, &ds, &prior, &proposal, &base).unwrap();
    for omega in [1.0, 0.1] {
        let config = SamplerConfig {
            omega,
            ..base.clone()
        };
        let pm = run_pmcmc(&de, &prior, &proposal, &config).unwrap();
        let rows_equal = (0..base.n_iter)
            .all(|i| bits_equal(pm.draws.row(i), exact.draws.row(i)));
        c.require(rows_equal, || {
            let first = (0..base.n_iter)
                .find(|&i| !bits_equal(pm.draws.row(i), exact.draws.row(i)))
                .unwrap();
            format!("ω = {omega}: draws diverge from the exact chain at iteration {first}")
        });
        c.require(pm.accepted == exact.accepted, || {
            format!("ω = {omega}: accept/reject sequence differs from the exact chain")
        });
        c.require(
            pm.sigma2_at_proposal.iter().all(|&s| s == 0.0),
            || format!("ω = {omega}: singleton clusters should give σ̂_z² ≡ 0"),
        );
    }
    assert!(c.finish());
}

// ---------------------------------------------------------------------------
// criteria 5 and 6 (one set of desk-scale runs feeds both)

/// Silverman's bandwidth: 0.9·min(sd, IQR/1.34)·n^{−1/5}.
fn silverman_bandwidth(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantile = |p: f64| -> f64 {
        let idx = p * (sorted.len() - 1) as f64;
        let (lo, hi) = (idx.floor() as usize, idx.ceil() as usize);
        sorted[lo] + (sorted[hi] - sorted[lo]) * (idx - lo as f64)
    };
    let iqr = quantile(0.75) - quantile(0.25);
    0.9 * sd.min(iqr / 1.34) * n.powf(-0.2)
}

/// Overlap ∫ min(f, g) of two Gaussian kernel density estimates on a common
/// 512-point grid; 1.0 means the overlays coincide.
fn kde_overlap(a: &[f64], b: &[f64]) -> f64 {
    let (ha, hb) = (silverman_bandwidth(a), silverman_bandwidth(b));
    let pad = 3.0 * ha.max(hb);
    let lo = a
        .iter()
        .chain(b)
        .fold(f64::INFINITY, |acc, &v| acc.min(v))
        - pad;
    let hi = a
        .iter()
        .chain(b)
        .fold(f64::NEG_INFINITY, |acc, &v| acc.max(v))
        + pad;
    let grid = 512usize;
    let dx = (hi - lo) / (grid - 1) as f64;
    let density = |v: &[f64], h: f64, g: f64| -> f64 {
        let inv = 1.0 / h;
        let mut acc = 0.0;
        for &x in v {
            let t = (g - x) * inv;
            if t.abs() < 8.0 {
                acc += (-0.5 * t * t).exp();
            }
        }
        acc * inv / ((2.0 * std::f64::consts::PI).sqrt() * v.len() as f64)
    };
    let mut overlap = 0.0;
    for i in 0..grid {
        let g = lo + i as f64 * dx;
        overlap += density(a, ha, g).min(density(b, hb, g)) * dx;
    }
    overlap
}

#[test]
fn criteria_5_and_6_desk_scale_posterior_and_variance_ceiling() {
    let suite_start = Instant::now();
    let scene = desk_scale();
    let de = DifferenceEstimator::new(&Logistic, &scene.ds, &scene.clusters).unwrap();
    let prior = GaussianPrior::new(10.0).unwrap();
    let proposal = Proposal::rwm(scene.mode.clone(), scene.hess_inv.clone(), None).unwrap();

    let t0 = Instant::now();
    let exact = run_mcmc_exact(&Logistic, &scene.ds, &prior, &proposal, &desk_config(1.0)).unwrap();
    println!(
        "  exact chain: acceptance {:.3} in {:.1}s",
        exact.acceptance_rate(),
        t0.elapsed().as_secs_f64()
    );
    let omegas = [1.0, 0.2, 0.01];
    let chains: Vec<ChainOutput> = omegas
        .iter()
        .map(|&omega| {
            let t0 = Instant::now();
            let out = run_pmcmc(&de, &prior, &proposal, &desk_config(omega)).unwrap();
            println!(
                "  ω = {omega}: acceptance {:.3}, σ̄_z {:.3}, DE fraction {:.3} in {:.1}s",
                out.acceptance_rate(),
                out.mean_sigma_z(),
                out.fraction_evaluated(DESK_N),
                t0.elapsed().as_secs_f64()
            );
            out
        })
        .collect();

    let mut c5 = Check::with_start("criterion 5 (desk-scale posterior agreement)", suite_start);
    for (&omega, pm) in omegas.iter().zip(&chains) {
        let tests = mean_equality_test(pm.kept_draws(), exact.kept_draws(), 0.05).unwrap();
        for (j, t) in tests.iter().enumerate() {
            c5.require(!t.reject, || {
                format!(
                    "ω = {omega}, coordinate {j}: mean difference {:.3e} rejected \
                     (se {:.3e}, CI [{:.3e}, {:.3e}])",
                    t.difference, t.se, t.ci_low, t.ci_high
                )
            });
        }
        for j in 0..exact.draws.ncols() {
            let a: Vec<f64> = pm.kept_draws().column(j).to_vec();
            let b: Vec<f64> = exact.kept_draws().column(j).to_vec();
            let ov = kde_overlap(&a, &b);
            c5.require(ov >= 0.9, || {
                format!("ω = {omega}, coordinate {j}: density overlap {ov:.3} < 0.9")
            });
        }
    }
    let ok5 = c5.finish();

    let mut c6 = Check::with_start("criterion 6 (variance ceiling v_max = 1)", suite_start);
    for (&omega, pm) in omegas.iter().zip(&chains) {
        c6.require(pm.m_capped == 0, || {
            format!(
                "ω = {omega}: {} iterations hit the full-stratum cap",
                pm.m_capped
            )
        });
        let violations = (0..DESK_ITERS)
            .filter(|&i| pm.accepted[i] && pm.sigma2_at_proposal[i] > 1.0 + 1e-12)
            .count();
        c6.require(violations == 0, || {
            format!("ω = {omega}: {violations} accepted proposals exceeded σ̂_z² = 1")
        });
        let sigma_bar = pm.mean_sigma_z();
        c6.require((0.8..=1.0).contains(&sigma_bar), || {
            format!("ω = {omega}: chain-average σ̄_z = {sigma_bar:.3} outside [0.8, 1.0]")
        });
    }
    let ok6 = c6.finish();
    assert!(ok5 && ok6);
}

// ---------------------------------------------------------------------------
// criterion 7

#[test]
fn criterion_7_inefficiency_factor_matches_ar1_closed_form() {
    let mut c = Check::new("criterion 7 (inefficiency factor on AR(1))");
    let n = 1_000_000;
    for (seed, rho) in [(2_718u64, 0.5f64), (2_719, 0.9)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut series = Vec::with_capacity(n);
        // Start at a stationary draw so no burn-in is needed.
        let mut x =
            rng.sample::<f64, _>(StandardNormal) / (1.0 - rho * rho).sqrt();
        for _ in 0..n {
            x = rho * x + rng.sample::<f64, _>(StandardNormal);
            series.push(x);
        }
        let est = inefficiency_factor(Array1::from_vec(series).view()).unwrap();
        let target = (1.0 + rho) / (1.0 - rho);
        let rel = (est - target).abs() / target;
        println!("  ρ = {rho}: IF {est:.3} vs closed form {target:.3} (rel {rel:.4})");
        c.require(rel <= 0.05, || {
            format!("ρ = {rho}: IF {est:.3} deviates {rel:.3} from {target:.3} (> 5%)")
        });
    }
    assert!(c.finish());
}

// ---------------------------------------------------------------------------
// criterion 8

#[test]
fn criterion_8_infrequent_refresh_wins_under_independence_proposal() {
    let mut c = Check::new("criterion 8 (efficiency: RIF ordering and RED > 1)");
    let scene = desk_scale();
    let de = DifferenceEstimator::new(&Logistic, &scene.ds, &scene.clusters).unwrap();
    let prior = GaussianPrior::new(10.0).unwrap();
    let proposal = Proposal::imh(scene.mode.clone(), scene.hess_inv.clone(), 10.0).unwrap();

    let t0 = Instant::now();
    let exact = run_mcmc_exact(&Logistic, &scene.ds, &prior, &proposal, &desk_config(1.0)).unwrap();
    let base_report = report_for_chain(&exact).unwrap();
    println!(
        "  exact IMH chain: acceptance {:.3}, mean IF {:.2} in {:.1}s",
        exact.acceptance_rate(),
        base_report.mean_if,
        t0.elapsed().as_secs_f64()
    );

    let mut mean_rifs = Vec::new();
    for omega in [1.0, 0.01] {
        let t0 = Instant::now();
        let pm = run_pmcmc(&de, &prior, &proposal, &desk_config(omega)).unwrap();
        let report = report_for_chain(&pm).unwrap();
        let (rif, red) = relative_report(&report, &base_report).unwrap();
        let mean_rif = rif.iter().sum::<f64>() / rif.len() as f64;
        let mean_red = red.iter().sum::<f64>() / red.len() as f64;
        let frac = pm.fraction_evaluated(DESK_N);
        println!(
            "  ω = {omega}: acceptance {:.3}, mean RIF {mean_rif:.2}, mean RED {mean_red:.2}, \
             DE fraction {frac:.3} in {:.1}s",
            pm.acceptance_rate(),
            t0.elapsed().as_secs_f64()
        );
        c.require(frac < 0.2, || {
            format!("ω = {omega}: DE fraction {frac:.3} ≥ 0.2")
        });
        if omega < 1.0 {
            c.require(mean_red > 1.0, || {
                format!("ω = {omega}: mean RED {mean_red:.2} ≤ 1, no efficiency gain over exact")
            });
        }
        mean_rifs.push(mean_rif);
    }
    c.require(mean_rifs[1] < mean_rifs[0], || {
        format!(
            "RIF(ω = 0.01) = {:.2} not below RIF(ω = 1) = {:.2}",
            mean_rifs[1], mean_rifs[0]
        )
    });
    assert!(c.finish());
}

// ---------------------------------------------------------------------------
// criterion 9

fn submc(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_submc"))
        .args(args)
        .output()
        .expect("failed to spawn submc");
    assert!(
        out.status.success(),
        "submc {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn criterion_9_rerun_reproduces_chain_files_byte_for_byte() {
    let mut c = Check::new("criterion 9 (byte-identical rerun)");
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();

    let data = path("data.csv");
    submc(&["synth", "--n", "5000", "--beta", "0.3,-0.6,0.4", "--seed", "5", "--out", &data]);
    let clusters = path("data.clu");
    submc(&["cluster", "--input", &data, "--epsilon", "0.6", "--output", &clusters]);

    let chain = path("chain.csv");
    let telemetry = path("telemetry.csv");
    let sample_args = [
        "sample", "--data", &data, "--clusters", &clusters, "--out", &chain,
        "--telemetry", &telemetry, "--iters", "6000", "--burnin", "1000",
        "--omega", "0.2", "--m0", "200", "--seed", "5",
    ];
    submc(&sample_args);
    let first_chain = std::fs::read(&chain).unwrap();
    let first_telemetry = std::fs::read(&telemetry).unwrap();
    submc(&sample_args);
    c.require(std::fs::read(&chain).unwrap() == first_chain, || {
        "chain file changed between identical invocations".to_string()
    });
    c.require(
        std::fs::read(&telemetry).unwrap() == first_telemetry,
        || "telemetry file changed between identical invocations".to_string(),
    );
    assert!(c.finish());
}
