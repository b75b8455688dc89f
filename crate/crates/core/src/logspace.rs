//! Underflow-safe log-space arithmetic.
//!
//! The construction works with widths like λ_k = exp(-exp(βk^β) - k^β)/2k,
//! which leave the representable range long before the cost bounds do.
//! Everything downstream therefore manipulates logarithms directly.

/// log(Σ exp(xs[i])) with the usual max shift. Empty input is the log of an
/// empty sum, i.e. `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let mx = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return mx;
    }
    let sum: f64 = xs.iter().map(|x| (x - mx).exp()).sum();
    mx + sum.ln()
}

/// log(exp(a) + exp(b)).
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    log_sum_exp(&[a, b])
}

/// -log λ_k for λ_k = exp(-exp(βk^β) - k^β)/(2k), i.e.
/// exp(βk^β) + k^β + log(2k), as an f64. Overflows to +inf for huge k;
/// use [`ln_neg_log_lambda`] where that matters.
pub fn neg_log_lambda(beta: f64, k: f64) -> f64 {
    (beta * k.powf(beta)).exp() + k.powf(beta) + (2.0 * k).ln()
}

/// log(-log λ_k) = log(exp(βk^β) + k^β + log 2k), computed without ever
/// forming exp(βk^β). Valid for every k representable as f64.
pub fn ln_neg_log_lambda(beta: f64, k: f64) -> f64 {
    let b = beta * k.powf(beta);
    // log(e^b + rest) = b + log1p(rest * e^-b)
    let rest = k.powf(beta) + (2.0 * k).ln();
    if b > 700.0 {
        // rest * e^-b underflows to 0; b alone is exact to f64 precision
        b
    } else {
        b + (rest * (-b).exp()).ln_1p()
    }
}

/// Surface area of the unit sphere S^{n-1} in ℝⁿ: 2 π^{n/2} / Γ(n/2).
pub fn unit_sphere_area(n: usize) -> f64 {
    assert!(n >= 1);
    // Γ(n/2) by the recurrence from Γ(1/2)=√π and Γ(1)=1.
    let even = n.is_multiple_of(2);
    let mut g = if even { 1.0 } else { std::f64::consts::PI.sqrt() };
    let mut a = if even { 1.0 } else { 0.5 };
    while a + 1.0 <= n as f64 / 2.0 + 1e-9 {
        g *= a;
        a += 1.0;
    }
    2.0 * std::f64::consts::PI.powf(n as f64 / 2.0) / g
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn lse_empty_is_neg_inf() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn lse_single_entry() {
        assert_eq!(log_sum_exp(&[-3.5]), -3.5);
    }

    #[test]
    fn lse_matches_direct_arithmetic() {
        let (a, b) = (1.25_f64, -0.5_f64);
        let direct = (a.exp() + b.exp()).ln();
        assert!((log_add_exp(a, b) - direct).abs() < 1e-14);
    }

    #[test]
    fn lse_survives_large_magnitudes() {
        let v = log_sum_exp(&[-1e5, -1e5]);
        assert!((v - (-1e5 + 2.0_f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn ln_neg_log_lambda_matches_direct_at_representable_k() {
        for k in [1.0, 2.0, 8.0, 1024.0, 1048576.0] {
            let direct = neg_log_lambda(0.25, k).ln();
            let safe = ln_neg_log_lambda(0.25, k);
            assert!((direct - safe).abs() < 1e-12, "k={k}: {direct} vs {safe}");
        }
    }

    #[test]
    fn ln_neg_log_lambda_finite_where_direct_overflows() {
        let k = 2.0_f64.powi(60);
        assert!(!neg_log_lambda(0.25, k).is_finite());
        let safe = ln_neg_log_lambda(0.25, k);
        // βk^β = 0.25 * 2^15
        assert!((safe - 8192.0).abs() < 1e-6);
    }

    #[test]
    fn sphere_areas() {
        assert!((unit_sphere_area(1) - 2.0).abs() < 1e-12);
        assert!((unit_sphere_area(2) - 2.0 * PI).abs() < 1e-12);
        assert!((unit_sphere_area(3) - 4.0 * PI).abs() < 1e-12);
        assert!((unit_sphere_area(4) - 2.0 * PI * PI).abs() < 1e-12);
    }
}
