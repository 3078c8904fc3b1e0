//! Special functions and quadrature evaluated in `f64`.

use statrs::function::gamma::ln_gamma;

/// Confluent hypergeometric function 1F1(a; b; z) for `z <= 0`, `b > 0`, `b > a`.
///
/// Uses the Kummer transformation 1F1(a; b; z) = e^z 1F1(b - a; b; -z), whose
/// series has only positive terms, summed in log space. Beyond `|z| = 1e4`
/// the large-argument asymptotic expansion takes over.
pub fn hyp1f1_nonpositive(a: f64, b: f64, z: f64) -> f64 {
    assert!(z <= 0.0, "hyp1f1_nonpositive requires z <= 0");
    assert!(b > 0.0 && b > a, "hyp1f1_nonpositive requires b > max(a, 0)");
    if z == 0.0 {
        return 1.0;
    }
    let x = -z;
    if x > 1e4 {
        return hyp1f1_asymptotic(a, b, z);
    }
    let c = b - a;
    let ln_x = x.ln();
    // log of term k of e^z * sum (c)_k/(b)_k x^k/k!
    let mut ln_term = z;
    let mut peak = ln_term;
    let mut terms = Vec::with_capacity(64 + 2 * x as usize);
    terms.push(ln_term);
    let mut k = 0usize;
    loop {
        let kf = k as f64;
        ln_term += ((c + kf) / (b + kf)).ln() + ln_x - (kf + 1.0).ln();
        k += 1;
        terms.push(ln_term);
        if ln_term > peak {
            peak = ln_term;
        }
        // past the peak and negligible relative to it
        if (kf + 1.0) > x && ln_term < peak - 40.0 {
            break;
        }
        if k > 10_000_000 {
            break;
        }
    }
    let sum: f64 = terms.iter().map(|t| (t - peak).exp()).sum();
    (peak + sum.ln()).exp()
}

/// Large negative argument expansion of 1F1(a; b; z), exponentially small part dropped.
pub fn hyp1f1_asymptotic(a: f64, b: f64, z: f64) -> f64 {
    let x = -z;
    let prefactor = (ln_gamma(b) - ln_gamma(b - a) - a * x.ln()).exp();
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for s in 0..200 {
        let sf = s as f64;
        let next = term * (a + sf) * (a - b + 1.0 + sf) / ((sf + 1.0) * x);
        // stop at the smallest term of the divergent series
        if next.abs() >= term.abs() && next != 0.0 {
            break;
        }
        sum += next;
        term = next;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    prefactor * sum
}

/// Integrates `f` over the open unit interval with the tanh-sinh rule.
///
/// Starts from `nodes` abscissae and halves the step until two successive
/// estimates agree to `1e-13` relative (at most six refinements).
pub fn tanh_sinh_unit<F: Fn(f64) -> f64>(f: F, nodes: usize) -> f64 {
    const T_MAX: f64 = 6.0;
    let nodes = nodes.max(2);
    let mut h = 2.0 * T_MAX / nodes as f64;
    let mut previous = tanh_sinh_pass(&f, h, T_MAX);
    for _ in 0..6 {
        h *= 0.5;
        let current = tanh_sinh_pass(&f, h, T_MAX);
        if (current - previous).abs() <= 1e-13 * current.abs().max(1e-300) {
            return current;
        }
        previous = current;
    }
    previous
}

fn tanh_sinh_pass<F: Fn(f64) -> f64>(f: &F, h: f64, t_max: f64) -> f64 {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let n = (t_max / h).ceil() as i64;
    let mut acc = 0.0;
    for k in -n..=n {
        let t = k as f64 * h;
        let e = (-2.0 * half_pi * t.sinh()).exp();
        let x = 1.0 / (1.0 + e);
        let one_minus_x = e / (1.0 + e);
        if !(x > 0.0) || !(one_minus_x > 0.0) || !x.is_finite() || !one_minus_x.is_finite() {
            continue;
        }
        let w = 2.0 * half_pi * t.cosh() * x * one_minus_x;
        if w == 0.0 {
            continue;
        }
        let v = f(x);
        if v.is_finite() {
            acc += w * v;
        }
    }
    acc * h
}

/// Standard normal inverse CDF.
pub fn normal_quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(p)
}

pub use statrs::function::erf::erf;
pub use statrs::function::gamma::{gamma, ln_gamma as ln_gamma_fn};

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kummer_series_matches_closed_form_for_half_integer() {
        // 1F1(-1/2; 1/2; -x) = e^{-x} + sqrt(pi x) erf(sqrt x)
        for &x in &[0.1f64, 1.0, 5.0, 30.0, 200.0] {
            let expected = (-x).exp() + (std::f64::consts::PI * x).sqrt() * erf(x.sqrt());
            assert_relative_eq!(hyp1f1_nonpositive(-0.5, 0.5, -x), expected, max_relative = 1e-11);
        }
    }

    #[test]
    fn asymptotic_agrees_with_series_at_large_argument() {
        for &(a, b) in &[(-0.5, 0.5), (-0.5, 1.0), (-0.5, 1.5), (0.5, 2.0), (0.5, 3.5)] {
            let z = -400.0;
            assert_relative_eq!(
                hyp1f1_nonpositive(a, b, z),
                hyp1f1_asymptotic(a, b, z),
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn tanh_sinh_handles_endpoint_singularity() {
        // int_0^1 x^{-0.8} dx = 5
        let v = tanh_sinh_unit(|x| x.powf(-0.8), 200);
        assert_relative_eq!(v, 5.0, max_relative = 1e-9);
        let v = tanh_sinh_unit(|x| (1.0 - x).ln(), 200);
        assert_relative_eq!(v, -1.0, max_relative = 1e-10);
    }

    #[test]
    fn normal_quantile_quartile() {
        assert_relative_eq!(normal_quantile(0.75), 0.674_489_750_196_081_7, max_relative = 1e-9);
    }
}
