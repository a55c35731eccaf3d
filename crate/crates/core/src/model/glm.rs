//! Generic one-parameter exponential-family regression.
//!
//! The observation density is p(y | x, θ) = h(y) · g(θ) · exp(b(θ) T(y)) with
//! natural-ish parameter θ = k⁻¹(xᵀβ). A model is specified by the five
//! scalar functions (h, g, b, T, k⁻¹), each supplied with its first two
//! derivatives. Data-space gradients and Hessians then follow from the chain
//! rule:
//!
//!   ∂l/∂y      = h'/h + b(θ) T'(y)
//!   ∂l/∂x      = (g'/g + b'(θ) T(y)) · k⁻¹'(a) · β
//!   ∂²l/∂y²    = h''/h − (h'/h)² + b(θ) T''(y)
//!   ∂²l/∂y∂x   = b'(θ) · k⁻¹'(a) · T'(y) · β
//!   ∂²l/∂x∂xᵀ  = [ (k⁻¹'(a))² (g''/g − (g'/g)² + b''(θ) T(y))
//!                  + k⁻¹''(a) (g'/g + b'(θ) T(y)) ] · ββᵀ
//!
//! with a = xᵀβ. Supplied derivative triples are cheap to get wrong, so
//! [`GlmSpec::validate`] cross-checks each one against central finite
//! differences on the spec's own probe grid.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::model::special::trigamma;
use crate::model::{check_dims, dot, Model, Observation};

type F = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A scalar function together with its first and second derivatives.
#[derive(Clone)]
pub struct ScalarFn {
    pub f: F,
    pub d1: F,
    pub d2: F,
}

impl ScalarFn {
    pub fn new(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ScalarFn {
            f: Arc::new(f),
            d1: Arc::new(d1),
            d2: Arc::new(d2),
        }
    }

    /// Check (f, f') and (f', f'') against central differences at `step` on
    /// the given probe points; tolerance is relative with an absolute floor.
    fn validate(&self, name: &str, probes: &[f64], step: f64, tol: f64) -> Result<()> {
        for &t in probes {
            let fd1 = ((self.f)(t + step) - (self.f)(t - step)) / (2.0 * step);
            let fd2 = ((self.d1)(t + step) - (self.d1)(t - step)) / (2.0 * step);
            let a1 = (self.d1)(t);
            let a2 = (self.d2)(t);
            for (what, analytic, fd) in [("first", a1, fd1), ("second", a2, fd2)] {
                let scale = analytic.abs().max(fd.abs()).max(1.0);
                if !analytic.is_finite() || !fd.is_finite() || (analytic - fd).abs() > tol * scale {
                    return Err(Error::InvalidValue {
                        name: format!("GlmSpec::{name}"),
                        reason: format!(
                            "{what} derivative disagrees with finite differences at t = {t}: \
                             analytic {analytic}, fd {fd}"
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Specification of a one-parameter exponential-family regression model.
#[derive(Clone)]
pub struct GlmSpec {
    pub name: String,
    /// Base measure h(y).
    pub h: ScalarFn,
    /// Normalizer g(θ).
    pub g: ScalarFn,
    /// Natural-parameter map b(θ).
    pub b: ScalarFn,
    /// Sufficient statistic T(y).
    pub t: ScalarFn,
    /// Inverse link θ = k⁻¹(a) applied to the linear predictor a = xᵀβ.
    pub k_inv: ScalarFn,
    /// Probe grids on which `validate` exercises the derivative triples.
    pub y_probes: Vec<f64>,
    pub theta_probes: Vec<f64>,
    pub a_probes: Vec<f64>,
    /// Whether the response must be binary 0/1.
    pub binary_response: bool,
}

impl GlmSpec {
    /// Cross-check every supplied derivative against central finite
    /// differences (step 1e-5, relative tolerance 1e-5) on the probe grids.
    pub fn validate(&self) -> Result<()> {
        let (step, tol) = (1e-5, 1e-5);
        self.h.validate("h", &self.y_probes, step, tol)?;
        self.t.validate("T", &self.y_probes, step, tol)?;
        self.g.validate("g", &self.theta_probes, step, tol)?;
        self.b.validate("b", &self.theta_probes, step, tol)?;
        self.k_inv.validate("k_inv", &self.a_probes, step, tol)?;
        Ok(())
    }

    /// Poisson regression with log link: θ = exp(xᵀβ), y ∈ {0, 1, 2, …}.
    pub fn poisson_log_link() -> Self {
        use statrs::function::gamma::{digamma, ln_gamma};
        GlmSpec {
            name: "glm-poisson".to_string(),
            // h(y) = 1/Γ(y+1); h'/h = −ψ(y+1), h''/h = ψ(y+1)² − ψ'(y+1)
            h: ScalarFn::new(
                |y| (-ln_gamma(y + 1.0)).exp(),
                |y| -digamma(y + 1.0) * (-ln_gamma(y + 1.0)).exp(),
                |y| {
                    let d = digamma(y + 1.0);
                    (d * d - trigamma(y + 1.0)) * (-ln_gamma(y + 1.0)).exp()
                },
            ),
            g: ScalarFn::new(|th| (-th).exp(), |th| -(-th).exp(), |th| (-th).exp()),
            b: ScalarFn::new(|th| th.ln(), |th| 1.0 / th, |th| -1.0 / (th * th)),
            t: ScalarFn::new(|y| y, |_| 1.0, |_| 0.0),
            k_inv: ScalarFn::new(|a| a.exp(), |a| a.exp(), |a| a.exp()),
            y_probes: vec![0.2, 0.8, 1.5, 3.0, 6.5],
            theta_probes: vec![0.3, 0.9, 1.7, 3.2],
            a_probes: vec![-1.2, -0.4, 0.3, 1.1],
            binary_response: false,
        }
    }

    /// Gaussian regression with unit variance and identity link.
    pub fn gaussian_identity() -> Self {
        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        GlmSpec {
            name: "glm-gaussian".to_string(),
            // h(y) = φ(y): h'/h = −y, h''/h = y² − 1
            h: ScalarFn::new(
                move |y| norm * (-0.5 * y * y).exp(),
                move |y| -y * norm * (-0.5 * y * y).exp(),
                move |y| (y * y - 1.0) * norm * (-0.5 * y * y).exp(),
            ),
            g: ScalarFn::new(
                |th| (-0.5 * th * th).exp(),
                |th| -th * (-0.5 * th * th).exp(),
                |th| (th * th - 1.0) * (-0.5 * th * th).exp(),
            ),
            b: ScalarFn::new(|th| th, |_| 1.0, |_| 0.0),
            t: ScalarFn::new(|y| y, |_| 1.0, |_| 0.0),
            k_inv: ScalarFn::new(|a| a, |_| 1.0, |_| 0.0),
            y_probes: vec![-1.8, -0.6, 0.0, 0.7, 2.1],
            theta_probes: vec![-1.5, -0.3, 0.4, 1.6],
            a_probes: vec![-2.0, -0.5, 0.6, 1.9],
            binary_response: false,
        }
    }

    /// Bernoulli regression with success probability θ = 1/(1 + exp(xᵀβ)),
    /// matching the closed-form logistic model's sign convention.
    pub fn bernoulli_logit() -> Self {
        // k⁻¹(a) = s(a) with s = 1/(1+e^a); s' = −s(1−s); s'' = s(1−s)(1−2s)
        let s = |a: f64| 1.0 / (1.0 + a.exp());
        GlmSpec {
            name: "glm-bernoulli".to_string(),
            h: ScalarFn::new(|_| 1.0, |_| 0.0, |_| 0.0),
            // g(θ) = 1 − θ
            g: ScalarFn::new(|th| 1.0 - th, |_| -1.0, |_| 0.0),
            // b(θ) = log(θ/(1−θ))
            b: ScalarFn::new(
                |th| (th / (1.0 - th)).ln(),
                |th| 1.0 / (th * (1.0 - th)),
                |th| (2.0 * th - 1.0) / (th * th * (1.0 - th) * (1.0 - th)),
            ),
            t: ScalarFn::new(|y| y, |_| 1.0, |_| 0.0),
            k_inv: ScalarFn::new(
                move |a| s(a),
                move |a| {
                    let v = s(a);
                    -v * (1.0 - v)
                },
                move |a| {
                    let v = s(a);
                    v * (1.0 - v) * (1.0 - 2.0 * v)
                },
            ),
            y_probes: vec![0.0, 0.25, 0.6, 1.0],
            theta_probes: vec![0.15, 0.4, 0.65, 0.85],
            a_probes: vec![-1.8, -0.6, 0.5, 1.7],
            binary_response: true,
        }
    }
}

/// Gradient (length p+1) and Hessian ((p+1)×(p+1)) of the GLM log-density
/// with respect to z = (y, x).
pub fn glm_grad_hess(
    spec: &GlmSpec,
    obs: Observation,
    theta: ArrayView1<f64>,
) -> Result<(Array1<f64>, Array2<f64>)> {
    let p = theta.len();
    check_dims(&spec.name, &obs, &theta)?;
    let a = dot(obs.x, theta);
    let th = (spec.k_inv.f)(a);
    let kd1 = (spec.k_inv.d1)(a);
    let kd2 = (spec.k_inv.d2)(a);

    let hy = (spec.h.f)(obs.y);
    if hy == 0.0 {
        return Err(Error::DivisionByZero {
            function: format!("{}::h", spec.name),
            at: obs.y,
        });
    }
    let gth = (spec.g.f)(th);
    if gth == 0.0 {
        return Err(Error::DivisionByZero {
            function: format!("{}::g", spec.name),
            at: th,
        });
    }

    let h_ratio1 = (spec.h.d1)(obs.y) / hy;
    let h_ratio2 = (spec.h.d2)(obs.y) / hy;
    let g_ratio1 = (spec.g.d1)(th) / gth;
    let g_ratio2 = (spec.g.d2)(th) / gth;
    let b0 = (spec.b.f)(th);
    let b1 = (spec.b.d1)(th);
    let b2 = (spec.b.d2)(th);
    let t0 = (spec.t.f)(obs.y);
    let t1 = (spec.t.d1)(obs.y);
    let t2 = (spec.t.d2)(obs.y);

    let dl_dy = h_ratio1 + b0 * t1;
    // common factor of ∂l/∂x: d(l)/d(θ) · dθ/da
    let dl_dtheta = g_ratio1 + b1 * t0;
    let dl_da = dl_dtheta * kd1;

    let d2l_dy2 = h_ratio2 - h_ratio1 * h_ratio1 + b0 * t2;
    let d2l_dyda = b1 * kd1 * t1;
    let d2l_dtheta2 = g_ratio2 - g_ratio1 * g_ratio1 + b2 * t0;
    let d2l_da2 = kd1 * kd1 * d2l_dtheta2 + kd2 * dl_dtheta;

    let mut grad = Array1::<f64>::zeros(p + 1);
    grad[0] = dl_dy;
    for j in 0..p {
        grad[j + 1] = dl_da * theta[j];
    }

    let mut hess = Array2::<f64>::zeros((p + 1, p + 1));
    hess[[0, 0]] = d2l_dy2;
    for j in 0..p {
        let v = d2l_dyda * theta[j];
        hess[[0, j + 1]] = v;
        hess[[j + 1, 0]] = v;
    }
    for i in 0..p {
        for j in 0..=i {
            let v = d2l_da2 * theta[i] * theta[j];
            hess[[i + 1, j + 1]] = v;
            hess[[j + 1, i + 1]] = v;
        }
    }
    if grad.iter().any(|v| !v.is_finite()) || hess.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: format!("{} grad_hess_z", spec.name),
            row: None,
        });
    }
    Ok((grad, hess))
}

/// A [`GlmSpec`] wrapped as a [`Model`].
#[derive(Clone)]
pub struct Glm {
    spec: GlmSpec,
}

impl Glm {
    pub fn new(spec: GlmSpec) -> Self {
        Glm { spec }
    }

    pub fn spec(&self) -> &GlmSpec {
        &self.spec
    }
}

impl Model for Glm {
    fn name(&self) -> &str {
        &self.spec.name
    }

    fn log_density(&self, obs: Observation, theta: ArrayView1<f64>) -> Result<f64> {
        check_dims(&self.spec.name, &obs, &theta)?;
        let a = dot(obs.x, theta);
        let th = (self.spec.k_inv.f)(a);
        let hy = (self.spec.h.f)(obs.y);
        let gth = (self.spec.g.f)(th);
        if hy <= 0.0 || gth <= 0.0 {
            return Err(Error::NonFinite {
                context: format!("{} log_density (nonpositive h or g)", self.spec.name),
                row: None,
            });
        }
        let l = hy.ln() + gth.ln() + (self.spec.b.f)(th) * (self.spec.t.f)(obs.y);
        if l.is_finite() {
            Ok(l)
        } else {
            Err(Error::NonFinite {
                context: format!("{} log_density", self.spec.name),
                row: None,
            })
        }
    }

    fn grad_hess_z(
        &self,
        obs: Observation,
        theta: ArrayView1<f64>,
    ) -> Result<(Array1<f64>, Array2<f64>)> {
        glm_grad_hess(&self.spec, obs, theta)
    }

    fn requires_binary_response(&self) -> bool {
        self.spec.binary_response
    }
}
