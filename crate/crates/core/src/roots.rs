//! Safeguarded Newton iteration on a sign-changing bracket.
//!
//! The bracket is kept at every iteration; a Newton step that would leave it
//! (or a vanishing derivative) falls back to bisection.

pub(crate) const MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Unconverged {
    pub lo: f64,
    pub hi: f64,
    pub iterations: usize,
}

/// Finds a root of `f` on `[lo, hi]`, where `f(lo)` and `f(hi)` have opposite
/// signs. `f` returns the value and its derivative.
///
/// Stops as soon as `|f(x)| <= tol` or the bracket shrinks to a few ulps.
pub(crate) fn newton_bisect<F>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64, Unconverged>
where
    F: Fn(f64) -> (f64, f64),
{
    let (f_lo, _) = f(lo);
    let (f_hi, _) = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() || !f_lo.is_finite() || !f_hi.is_finite() {
        return Err(Unconverged { lo, hi, iterations: 0 });
    }
    // orient so that f(lo) < 0 < f(hi)
    let flipped = f_lo > 0.0;
    let eval = |x: f64| {
        let (v, d) = f(x);
        if flipped {
            (-v, -d)
        } else {
            (v, d)
        }
    };

    let mut x = 0.5 * (lo + hi);
    let mut best = (f64::INFINITY, x);
    for it in 0..MAX_ITERATIONS {
        let (v, d) = eval(x);
        if v.abs() <= best.0 {
            best = (v.abs(), x);
        }
        if v.abs() <= tol {
            return Ok(x);
        }
        if v < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if (hi - lo).abs() <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
            return Ok(best.1);
        }
        let newton = x - v / d;
        x = if d.is_finite() && d != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if it + 1 == MAX_ITERATIONS {
            break;
        }
    }
    Err(Unconverged { lo, hi, iterations: MAX_ITERATIONS })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let root = newton_bisect(|x| (x * x - 2.0, 2.0 * x), 0.0, 2.0, 1e-15).unwrap();
        assert!((root - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn decreasing_function() {
        let root = newton_bisect(|x| (1.0 - x, -1.0), 0.0, 3.0, 0.0).unwrap();
        assert!((root - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_derivative_falls_back_to_bisection() {
        let root = newton_bisect(|x| ((x - 0.3).signum(), 0.0), 0.0, 1.0, 0.0).unwrap();
        assert!((root - 0.3).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_bracket() {
        assert!(newton_bisect(|x| (x * x + 1.0, 2.0 * x), -1.0, 1.0, 1e-12).is_err());
    }
}
