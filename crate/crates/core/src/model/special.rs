//! Special-function helpers not provided by `statrs`.

/// Trigamma function ψ'(x) for x > 0.
///
/// Uses the recurrence ψ'(x) = ψ'(x+1) + 1/x² to shift the argument above 6,
/// then the standard asymptotic series. Absolute accuracy is ~1e-12 over the
/// positive axis, far tighter than the finite-difference tolerances that
/// consume it.
pub fn trigamma(x: f64) -> f64 {
    assert!(x > 0.0, "trigamma requires x > 0, got {x}");
    let mut shift = 0.0;
    let mut z = x;
    while z < 10.0 {
        shift += 1.0 / (z * z);
        z += 1.0;
    }
    // asymptotic expansion: 1/z + 1/(2z^2) + sum B_{2k}/z^{2k+1}
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let tail = inv
        * (1.0
            + inv * (0.5
                + inv * (1.0 / 6.0
                    + inv2 * (-1.0 / 30.0
                        + inv2 * (1.0 / 42.0
                            + inv2 * (-1.0 / 30.0 + inv2 * (5.0 / 66.0)))))));
    shift + tail
}
