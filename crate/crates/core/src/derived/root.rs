//! Brent's method for bracketed root finding.
//!
//! The target here is a step function (a CMF minus a level), so the solver
//! works with sides rather than exact zeros: a point is "above" when
//! `f(x) >= 0` and "below" otherwise, and the result is the final pair of
//! points straddling the jump.

use crate::error::{Error, Result};

/// Final bracket: `f(below) < 0 <= f(above)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub below: f64,
    pub above: f64,
}

impl Bracket {
    pub fn width(&self) -> f64 {
        (self.above - self.below).abs()
    }
}

#[inline]
fn is_above(v: f64) -> bool {
    v >= 0.0
}

/// Shrinks `[lo, hi]` until it is at most `xtol` wide (plus a few ulps of the
/// endpoints). `f(lo)` and `f(hi)` must lie on different sides of zero.
pub fn brent<F>(mut f: F, lo: f64, hi: f64, xtol: f64, max_iter: usize) -> Result<Bracket>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if is_above(fa) == is_above(fb) {
        return Err(Error::InvalidParameter {
            name: "bracket",
            reason: format!("f({lo}) = {fa} and f({hi}) = {fb} lie on the same side"),
        });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;

    for _ in 0..max_iter {
        if is_above(fb) == is_above(fc) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let half = 0.5 * (c - b);
        if half.abs() <= tol {
            return Ok(if is_above(fb) {
                Bracket { below: c, above: b }
            } else {
                Bracket { below: b, above: c }
            });
        }

        if e.abs() >= tol && fa.abs() > fb.abs() && fb != 0.0 {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                // secant
                p = 2.0 * half * s;
                q = 1.0 - s;
            } else {
                // inverse quadratic
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * half * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * half * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = half;
                e = d;
            }
        } else {
            d = half;
            e = d;
        }

        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(half) };
        fb = f(b);
    }
    Err(Error::NoConvergence(max_iter))
}
