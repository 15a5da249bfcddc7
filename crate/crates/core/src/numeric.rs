//! Small numerical helpers shared by the fitting, policy and analysis code.

/// Compensated (Neumaier) summation.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Exponent magnitude below which `(x^a - y^a) / a` switches to its log limit.
pub const LOG_LIMIT_EPS: f64 = 1e-6;

/// `(x^a - y^a) / a` for `x > 0`, `y >= 0`, evaluated without cancellation.
///
/// Tends to `ln(x / y)` as `a -> 0`. With `y = 0` the value is `x^a / a` for
/// `a > 0` and `+inf` otherwise.
pub fn pow_diff_over_exponent(x: f64, y: f64, a: f64) -> f64 {
    debug_assert!(x > 0.0 && y >= 0.0);
    if y == 0.0 {
        return if a > 0.0 { x.powf(a) / a } else { f64::INFINITY };
    }
    let (lx, ly) = (x.ln(), y.ln());
    let d = lx - ly;
    if a.abs() < LOG_LIMIT_EPS {
        d * (1.0 + 0.5 * a * (lx + ly))
    } else {
        (a * ly).exp() * (a * d).exp_m1() / a
    }
}

/// Bisection on a bracket `[lo, hi]` with `f(lo) <= 0 <= f(hi)`, run until
/// the bracket collapses to adjacent floats or `max_iter` halvings.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, max_iter: usize) -> f64 {
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Return whichever endpoint sits closer to the root.
    if f(lo).abs() <= f(hi).abs() {
        lo
    } else {
        hi
    }
}

/// Golden-section minimization of a unimodal `f` on `[lo, hi]`.
/// Returns `(argmin, min)`; every evaluation is passed to `observe`.
pub fn golden_section<F, O>(f: F, mut lo: f64, mut hi: f64, tol: f64, mut observe: O) -> (f64, f64)
where
    F: Fn(f64) -> f64,
    O: FnMut(f64, f64),
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    observe(x1, f1);
    observe(x2, f2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
            observe(x1, f1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
            observe(x2, f2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Round to `digits` significant decimal digits.
pub fn round_significant(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    let s = format!("{:.*e}", digits.saturating_sub(1), x);
    s.parse().unwrap_or(x)
}
