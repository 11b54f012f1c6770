//! Scalar search helpers.

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximizes a unimodal `f` on `[lo, hi]` by golden-section search down to bracket width `tol`.
/// Returns `(argmax, max)`.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Numerical(format!("golden section: invalid bracket [{lo}, {hi}]")));
    }
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..500 {
        if b - a <= tol {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        }
    }
    if !(f1.is_finite() && f2.is_finite()) {
        return Err(Error::Numerical(format!(
            "golden section: non-finite objective near [{a}, {b}] (f = {f1}, {f2})"
        )));
    }
    Ok(if f1 >= f2 { (x1, f1) } else { (x2, f2) })
}

/// Minimizes a unimodal `f` on `[lo, hi]`.
pub fn golden_section_min<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)> {
    let (x, v) = golden_section_max(|t| -f(t), lo, hi, tol)?;
    Ok((x, -v))
}

/// Largest `t` in `[lo, hi]` with `pred(t)` true, assuming `pred` holds on a prefix of the
/// interval and `pred(lo)` is true. Returns `(t, saturated)` where `saturated` means `pred(hi)`
/// already holds.
pub fn bisect_last_true<P: FnMut(f64) -> bool>(mut pred: P, lo: f64, hi: f64, tol: f64) -> (f64, bool) {
    if pred(hi) {
        return (hi, true);
    }
    let (mut good, mut bad) = (lo, hi);
    while bad - good > tol {
        let mid = 0.5 * (good + bad);
        if pred(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    (good, false)
}
