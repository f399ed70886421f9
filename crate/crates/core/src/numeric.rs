//! Max-shifted log-sum-exp helpers shared by the soft operators and learners.

/// `log Σ exp(x_i)` computed with the maximum subtracted first.
///
/// Returns `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Soft minimum `-(1/κ) log Σ exp(-κ v_i)`.
///
/// Lies in `[min v - ln(n)/κ, min v]`.
pub fn softmin(values: &[f64], kappa: f64) -> f64 {
    let m = values.iter().copied().fold(f64::INFINITY, f64::min);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = values.iter().map(|&v| (-kappa * (v - m)).exp()).sum();
    m - s.ln() / kappa
}

/// Writes the Gibbs weights `exp(-κ v_i) / Σ_j exp(-κ v_j)` into `out`.
///
/// Entries are floored at the smallest positive normal `f64` so rows stay
/// strictly positive even when `κ` is large.
pub fn gibbs_weights(values: &[f64], kappa: f64, out: &mut [f64]) {
    debug_assert_eq!(values.len(), out.len());
    let m = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(values) {
        *o = (-kappa * (v - m)).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o = (*o / total).max(f64::MIN_POSITIVE);
    }
}

/// `x ln x` with the convention `0 ln 0 = 0`.
#[inline]
pub fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_is_shift_stable() {
        let a = log_sum_exp(&[1000.0, 1000.0]);
        assert!((a - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn softmin_bounds() {
        let v = [0.3, -1.2, 4.0];
        for kappa in [1e-3, 0.5, 3.0, 1e6] {
            let s = softmin(&v, kappa);
            assert!(s <= -1.2 + 1e-12);
            assert!(s >= -1.2 - 3f64.ln() / kappa - 1e-12);
        }
    }

    #[test]
    fn gibbs_weights_normalized() {
        let mut out = [0.0; 3];
        gibbs_weights(&[0.0, 1.0, 2.0], 2.0, &mut out);
        let s: f64 = out.iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
        assert!(out[0] > out[1] && out[1] > out[2]);
        gibbs_weights(&[0.0, 1.0], 1e9, &mut out[..2]);
        assert!(out[1] > 0.0);
    }
}
