//! The Liverani–Saussol–Vaienti family
//!
//! ```text
//! T(x) = x (1 + (2x)^γ)   on [0, 1/2]
//! T(x) = 2x - 1           on (1/2, 1]
//! ```
//!
//! Every member has a neutral fixed point at 0 and maps each branch
//! bijectively onto [0, 1].

use crate::error::{Error, Result};

/// Absolute tolerance of the left-branch inverse.
pub const INVERSE_ABS_TOL: f64 = 1e-14;
/// Iteration cap of the left-branch inverse.
pub const INVERSE_MAX_ITER: usize = 200;

const INVERSE_REL_TOL: f64 = 8.0 * f64::EPSILON;

/// Which monotone branch of an LSV map a point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// `[0, 1/2]`
    Left,
    /// `(1/2, 1]`
    Right,
}

impl Branch {
    /// Branch containing `x`; `1/2` belongs to the left (closed) branch.
    #[inline]
    pub fn of(x: f64) -> Branch {
        if x <= 0.5 {
            Branch::Left
        } else {
            Branch::Right
        }
    }
}

/// An LSV map, identified by its exponent `γ > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsvMap {
    gamma: f64,
}

fn check_unit(what: &'static str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain {
            what,
            value: x,
            domain: "[0, 1]",
        })
    }
}

impl LsvMap {
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma.is_finite() && gamma > 0.0 {
            Ok(LsvMap { gamma })
        } else {
            Err(Error::Domain {
                what: "gamma",
                value: gamma,
                domain: "(0, inf)",
            })
        }
    }

    #[inline]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Evaluates the map, checking that `x ∈ [0, 1]`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        check_unit("x", x)?;
        Ok(self.apply(x))
    }

    /// Unchecked evaluation for hot loops; `x` must lie in `[0, 1]`.
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        if x <= 0.5 {
            x * (1.0 + (2.0 * x).powf(self.gamma))
        } else {
            2.0 * x - 1.0
        }
    }

    /// First derivative without domain checks, branch chosen by [`Branch::of`].
    #[inline]
    pub fn slope(&self, x: f64) -> f64 {
        if x <= 0.5 {
            1.0 + (1.0 + self.gamma) * (2.0 * x).powf(self.gamma)
        } else {
            2.0
        }
    }

    /// Analytic derivative of order 1, 2 or 3 of the branch containing `x`.
    ///
    /// At `x = 1/2` the two branches disagree and [`Error::AmbiguousBranch`]
    /// is returned; use [`LsvMap::deriv_on`] there. At `x = 0` the
    /// second and third derivatives may be signed infinities.
    pub fn deriv(&self, x: f64, order: u8) -> Result<f64> {
        check_unit("x", x)?;
        if x == 0.5 {
            return Err(Error::AmbiguousBranch);
        }
        self.deriv_on(Branch::of(x), x, order)
    }

    /// Derivative of the given branch, extended to the closed branch interval.
    pub fn deriv_on(&self, branch: Branch, x: f64, order: u8) -> Result<f64> {
        check_unit("x", x)?;
        if !(1..=3).contains(&order) {
            return Err(Error::DerivativeOrder(order));
        }
        match branch {
            Branch::Right => {
                if x < 0.5 {
                    return Err(Error::Domain {
                        what: "x",
                        value: x,
                        domain: "[1/2, 1] (right branch)",
                    });
                }
                Ok(if order == 1 { 2.0 } else { 0.0 })
            }
            Branch::Left => {
                if x > 0.5 {
                    return Err(Error::Domain {
                        what: "x",
                        value: x,
                        domain: "[0, 1/2] (left branch)",
                    });
                }
                Ok(self.left_deriv(x, order))
            }
        }
    }

    fn left_deriv(&self, x: f64, order: u8) -> f64 {
        let g = self.gamma;
        let scale = g * (1.0 + g) * 2f64.powf(g);
        match order {
            1 => 1.0 + (1.0 + g) * (2.0 * x).powf(g),
            2 => scale * x.powf(g - 1.0),
            _ => {
                // 0 * inf at x = 0 would give NaN; T''' vanishes identically for γ = 1.
                if g == 1.0 {
                    0.0
                } else {
                    scale * (g - 1.0) * x.powf(g - 2.0)
                }
            }
        }
    }

    /// Inverse of the left branch, `[0, 1] → [0, 1/2]`.
    pub fn invert_left(&self, y: f64) -> Result<f64> {
        check_unit("y", y)?;
        Ok(self.inv_left(y))
    }

    /// Unchecked left-branch inverse.
    ///
    /// Bracketed Newton iteration with bisection fallback. The starting point
    /// `y / (1 + (2y)^γ)` is a lower bound of the root and `min(y, 1/2)` an
    /// upper bound, so the bracket is valid from the first step.
    #[inline]
    pub fn inv_left(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        if y >= 1.0 {
            return 0.5;
        }
        let g = self.gamma;
        let mut lo = y / (1.0 + (2.0 * y).powf(g));
        let mut hi = y.min(0.5);
        let mut x = lo;
        for _ in 0..INVERSE_MAX_ITER {
            let u = (2.0 * x).powf(g);
            let f = x * (1.0 + u) - y;
            if f == 0.0 {
                return x;
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let mut next = x - f / (1.0 + (1.0 + g) * u);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let tol = INVERSE_ABS_TOL.min(INVERSE_REL_TOL * next);
            if (next - x).abs() <= tol || hi - lo <= tol {
                return next;
            }
            x = next;
        }
        x
    }

    /// Schwarzian derivative `T'''/T' - 3/2 (T''/T')^2`.
    ///
    /// Zero on the affine right branch; [`Error::Singular`] where the
    /// left-branch derivatives diverge (only possible at `x = 0`).
    pub fn schwarzian(&self, x: f64) -> Result<f64> {
        check_unit("x", x)?;
        if x > 0.5 {
            return Ok(0.0);
        }
        let d1 = self.left_deriv(x, 1);
        let d2 = self.left_deriv(x, 2);
        let d3 = self.left_deriv(x, 3);
        if !(d2.is_finite() && d3.is_finite()) {
            return Err(Error::Singular(x));
        }
        let r = d2 / d1;
        Ok(d3 / d1 - 1.5 * r * r)
    }

    /// Upper end of the interval `(0, t)` on which the Schwarzian is positive.
    ///
    /// `None` for `γ ≤ 1`, where the Schwarzian is negative on all of `(0, 1/2)`.
    pub fn positive_schwarzian_threshold(&self) -> Option<f64> {
        let g = self.gamma;
        if g <= 1.0 {
            return None;
        }
        Some(0.5 * ((g - 1.0) / ((1.0 + g) * (1.0 + 0.5 * g))).powf(1.0 / g))
    }
}

/// Inverse of the common right branch `2x - 1`, `(0, 1] → (1/2, 1]`.
pub fn invert_right(y: f64) -> Result<f64> {
    if y > 0.0 && y <= 1.0 {
        Ok(0.5 * (y + 1.0))
    } else {
        Err(Error::Domain {
            what: "y",
            value: y,
            domain: "(0, 1]",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(g: f64) -> LsvMap {
        LsvMap::new(g).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(map(0.5).eval(0.5).unwrap(), 1.0);
        for g in [0.1, 0.5, 1.0, 3.0] {
            assert_eq!(map(g).eval(0.75).unwrap(), 0.5);
            assert_eq!(map(g).eval(0.5).unwrap(), 1.0);
        }
        assert_eq!(map(1.0).eval(0.25).unwrap(), 0.375);
    }

    #[test]
    fn eval_rejects_bad_input() {
        assert!(LsvMap::new(0.0).is_err());
        assert!(LsvMap::new(-1.0).is_err());
        assert!(LsvMap::new(f64::NAN).is_err());
        assert!(map(0.5).eval(1.5).is_err());
        assert!(map(0.5).eval(-0.1).is_err());
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(map(0.5).deriv(0.0, 1).unwrap(), 1.0);
        assert_eq!(map(0.3).deriv(0.9, 1).unwrap(), 2.0);
        assert_eq!(map(0.3).deriv(0.9, 2).unwrap(), 0.0);
        assert_eq!(map(1.0).deriv(0.3, 3).unwrap(), 0.0);
        assert!(map(0.5).deriv(0.3, 4).is_err());
    }

    #[test]
    fn derivative_at_half_needs_branch() {
        let m = map(0.5);
        assert_eq!(m.deriv(0.5, 1), Err(Error::AmbiguousBranch));
        assert_eq!(m.deriv_on(Branch::Right, 0.5, 1).unwrap(), 2.0);
        // 1 + (1 + γ)(2x)^γ at x = 1/2
        assert!((m.deriv_on(Branch::Left, 0.5, 1).unwrap() - 2.5).abs() < 1e-15);
        assert!(m.deriv_on(Branch::Left, 0.7, 1).is_err());
        assert!(m.deriv_on(Branch::Right, 0.2, 1).is_err());
    }

    #[test]
    fn endpoint_sentinels() {
        assert_eq!(map(0.5).deriv(0.0, 2).unwrap(), f64::INFINITY);
        assert_eq!(map(0.5).deriv(0.0, 3).unwrap(), f64::NEG_INFINITY);
        assert_eq!(map(1.0).deriv(0.0, 2).unwrap(), 4.0);
        assert_eq!(map(1.0).deriv(0.0, 3).unwrap(), 0.0);
        assert_eq!(map(1.5).deriv(0.0, 3).unwrap(), f64::INFINITY);
        assert_eq!(map(2.0).deriv(0.0, 3).unwrap(), 24.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for g in [0.3, 0.7, 1.0, 2.0] {
            let m = map(g);
            for x in [0.05, 0.2, 0.37] {
                let h = 1e-5;
                let fd1 = (m.apply(x + h) - m.apply(x - h)) / (2.0 * h);
                let fd2 = (m.slope(x + h) - m.slope(x - h)) / (2.0 * h);
                let d2 = |y: f64| m.deriv(y, 2).unwrap();
                let fd3 = (d2(x + h) - d2(x - h)) / (2.0 * h);
                assert!((m.deriv(x, 1).unwrap() - fd1).abs() < 1e-7);
                assert!((m.deriv(x, 2).unwrap() - fd2).abs() < 1e-5 * (1.0 + fd2.abs()));
                assert!((m.deriv(x, 3).unwrap() - fd3).abs() < 1e-4 * (1.0 + fd3.abs()));
            }
        }
    }

    #[test]
    fn invert_left_examples() {
        // root of 2x^2 + x - 1/2 = 0
        let oracle = (5f64.sqrt() - 1.0) / 4.0;
        assert!((map(1.0).invert_left(0.5).unwrap() - oracle).abs() < 1e-15);
        for g in [0.2, 0.5, 1.0, 4.0] {
            assert_eq!(map(g).invert_left(1.0).unwrap(), 0.5);
            assert_eq!(map(g).invert_left(0.0).unwrap(), 0.0);
        }
        assert!(map(1.0).invert_left(1.2).is_err());
    }

    #[test]
    fn invert_left_is_accurate_near_zero() {
        let m = map(0.5);
        for y in [1e-3, 1e-8, 1e-12, 1e-200] {
            let x = m.inv_left(y);
            assert!(((m.apply(x) - y) / y).abs() < 1e-14, "y = {y}");
        }
    }

    #[test]
    fn invert_right_examples() {
        assert_eq!(invert_right(1.0).unwrap(), 1.0);
        assert_eq!(invert_right(0.5).unwrap(), 0.75);
        assert_eq!(invert_right(0.25).unwrap(), 0.625);
        assert!(invert_right(0.0).is_err());
        assert!(invert_right(1.1).is_err());
    }

    #[test]
    fn schwarzian_examples() {
        assert!((map(1.0).schwarzian(0.25).unwrap() + 6.0).abs() < 1e-12);
        assert!(map(0.5).schwarzian(0.25).unwrap() < 0.0);
        assert!(map(2.0).schwarzian(0.1).unwrap() > 0.0);
        assert_eq!(map(0.5).schwarzian(0.8).unwrap(), 0.0);
        assert_eq!(map(0.5).schwarzian(0.0), Err(Error::Singular(0.0)));
    }

    #[test]
    fn threshold_formula() {
        let t = map(2.0).positive_schwarzian_threshold().unwrap();
        assert!((t - 0.5 * (1.0f64 / 6.0).sqrt()).abs() < 1e-15);
        assert!((t - 0.204124).abs() < 1e-6);
        assert!(map(1.0).positive_schwarzian_threshold().is_none());
    }
}
