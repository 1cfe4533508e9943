//! Golden-section search for one-dimensional unimodal minimization.

use crate::scalar::Real;

/// Minimizes `f` on `[lo, hi]` to an interval width of `tol`.
///
/// The bracket endpoints are evaluated as well and win over the interior
/// estimate when they are no worse, so monotone objectives return the exact
/// bound. Returns `(argmin, min)`.
pub fn golden_section_min<T, F>(f: F, lo: T, hi: T, tol: T) -> (T, T)
where
    T: Real,
    F: Fn(T) -> T,
{
    if hi <= lo {
        return (lo, f(lo));
    }
    // 1/phi
    let inv_phi = T::lit(0.618_033_988_749_894_8);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut guard = 0;
    while b - a > tol && guard < 500 {
        guard += 1;
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = (a + b) / T::lit(2.0);
    let mut best = (lo, f(lo));
    for x in [mid, hi] {
        let fx = f(x);
        if fx < best.1 {
            best = (x, fx);
        }
    }
    best
}
