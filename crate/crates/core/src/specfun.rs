//! Log-gamma, log-beta and the Gauss hypergeometric function 2F1.
//!
//! 2F1 is summed as a power series on `[0, 1)`. Negative arguments are
//! first mapped into `[0, 1)` by a Pfaff transformation. Both Pfaff forms
//! are available and the one whose series has nonnegative parameters is
//! used, so the terms do not alternate for the Bayes-factor argument
//! pattern `c = a + 1`, `b > 0`.

use alloc::format;

use crate::error::{Error, Result};
use crate::quad::{self, Tolerance};

/// Relative tolerance on the truncated series tail.
pub const SERIES_TOL: f64 = 1e-12;
/// Hard cap on the number of series terms.
pub const MAX_TERMS: usize = 100_000;

pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("log_gamma requires x > 0, got {x}")));
    }
    Ok(libm::lgamma(x))
}

pub fn log_beta(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Domain(format!(
            "log_beta requires a, b > 0, got ({a}, {b})"
        )));
    }
    Ok(log_gamma(a)? + log_gamma(b)? - log_gamma(a + b)?)
}

/// Arguments of `2F1(a, b; c; z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyp2F1Args {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub z: f64,
}

impl Hyp2F1Args {
    pub fn new(a: f64, b: f64, c: f64, z: f64) -> Result<Self> {
        let args = Self { a, b, c, z };
        args.validate()?;
        Ok(args)
    }

    fn validate(&self) -> Result<()> {
        let Self { a, b, c, z } = *self;
        if !(a.is_finite() && b.is_finite() && c.is_finite() && z.is_finite()) {
            return Err(Error::Domain(format!("non-finite 2F1 argument {self:?}")));
        }
        if c <= 0.0 && libm::floor(c) == c {
            return Err(Error::Domain(format!(
                "2F1 parameter c = {c} is a nonpositive integer"
            )));
        }
        if z >= 1.0 {
            return Err(Error::Domain(format!("2F1 requires z < 1, got {z}")));
        }
        Ok(())
    }
}

/// Which Pfaff transformation was applied before summing the series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfaffForm {
    /// `(1-z)^{-a} 2F1(a, c-b; c; z/(z-1))`
    A,
    /// `(1-z)^{-b} 2F1(c-a, b; c; z/(z-1))`
    B,
}

/// A value represented as `sign · exp(log_abs)`.
#[derive(Debug, Clone, Copy)]
struct Scaled {
    log_abs: f64,
    negative: bool,
}

impl Scaled {
    fn value(self) -> f64 {
        let v = libm::exp(self.log_abs);
        if self.negative {
            -v
        } else {
            v
        }
    }
}

/// Largest ratio of the biggest series term to the sum before the result
/// is rejected as dominated by cancellation.
const MAX_CANCELLATION: f64 = 1e5;

/// Plain Gauss series for `0 <= w < 1`.
///
/// Stops once the geometric bound on the remaining tail, `|term|·r/(1−r)`
/// with `r` the larger of the next term ratio and its limit `w`, falls
/// below the tolerance.
fn series(a: f64, b: f64, c: f64, w: f64) -> Result<f64> {
    if w == 0.0 {
        return Ok(1.0);
    }
    let mut sum = 1.0;
    let mut term = 1.0;
    let mut largest = 1.0f64;
    for k in 0..MAX_TERMS {
        let kf = k as f64;
        term *= (a + kf) * (b + kf) / ((c + kf) * (kf + 1.0)) * w;
        sum += term;
        largest = largest.max(libm::fabs(term));
        let ratio = libm::fabs((a + kf + 1.0) * (b + kf + 1.0) / ((c + kf + 1.0) * (kf + 2.0)) * w);
        let r = ratio.max(libm::fabs(w));
        let done = term == 0.0
            || (r < 1.0 && libm::fabs(term) * r / (1.0 - r) <= SERIES_TOL * libm::fabs(sum));
        if done {
            if largest > MAX_CANCELLATION * libm::fabs(sum) {
                return Err(Error::Cancellation);
            }
            return Ok(sum);
        }
    }
    Err(Error::NoConvergence(MAX_TERMS))
}

/// Picks the Pfaff form whose series parameters are nonnegative when possible.
pub fn pfaff_form(a: f64, b: f64, c: f64) -> PfaffForm {
    if c - b >= 0.0 && a >= 0.0 {
        PfaffForm::A
    } else if c - a >= 0.0 && b >= 0.0 {
        PfaffForm::B
    } else {
        PfaffForm::A
    }
}

/// Evaluates `2F1` for `z < 0` through the given Pfaff form.
pub fn hyp2f1_pfaff(args: Hyp2F1Args, form: PfaffForm) -> Result<f64> {
    args.validate()?;
    let s = eval_pfaff(args, form)?;
    Ok(s.value())
}

fn eval_pfaff(args: Hyp2F1Args, form: PfaffForm) -> Result<Scaled> {
    let Hyp2F1Args { a, b, c, z } = args;
    let w = z / (z - 1.0);
    let log1mz = libm::log1p(-z);
    let (prefactor, sum) = match form {
        PfaffForm::A => (-a * log1mz, series(a, c - b, c, w)?),
        PfaffForm::B => (-b * log1mz, series(c - a, b, c, w)?),
    };
    Ok(Scaled {
        log_abs: prefactor + libm::log(libm::fabs(sum)),
        negative: sum < 0.0,
    })
}

/// `2F1(a, b; a+1; z) = a ∫_0^1 u^{a-1} (1 - z u)^{-b} du`, evaluated on a
/// logarithmic grid `u = e^s` so that extreme negative `z` stays resolvable.
fn log_incomplete_beta_form(a: f64, b: f64, z: f64) -> Result<f64> {
    let log_f = |s: f64| a * s - b * libm::log1p(-z * libm::exp(s));
    // interior maximum of the integrand when it exists
    let peak = if z < 0.0 && b > a {
        let s = libm::log(a / ((b - a) * -z));
        if s < 0.0 {
            s
        } else {
            0.0
        }
    } else {
        0.0
    };
    let scale = log_f(peak);
    let lower = peak - 60.0 / a - 5.0;
    let tol = Tolerance {
        abs: 0.0,
        rel: 1e-13,
        max_intervals: 4000,
    };
    let f = |s: f64| libm::exp(log_f(s) - scale);
    let mut total = quad::integrate(f, lower, peak, tol)?;
    if peak < 0.0 {
        total += quad::integrate(f, peak, 0.0, tol)?;
    }
    Ok(libm::log(a) + scale + libm::log(total))
}

fn eval(args: Hyp2F1Args) -> Result<Scaled> {
    args.validate()?;
    let Hyp2F1Args { a, b, c, z } = args;
    if z == 0.0 {
        return Ok(Scaled {
            log_abs: 0.0,
            negative: false,
        });
    }
    let attempt = if z > 0.0 {
        series(a, b, c, z).map(|s| Scaled {
            log_abs: libm::log(libm::fabs(s)),
            negative: s < 0.0,
        })
    } else {
        eval_pfaff(args, pfaff_form(a, b, c))
    };
    match attempt {
        Err(Error::NoConvergence(n)) => {
            if a > 0.0 && libm::fabs(c - a - 1.0) <= 1e-14 * c.max(1.0) {
                Ok(Scaled {
                    log_abs: log_incomplete_beta_form(a, b, z)?,
                    negative: false,
                })
            } else {
                Err(Error::NoConvergence(n))
            }
        }
        other => other,
    }
}

/// `2F1(a, b; c; z)` for `z < 1`.
pub fn hyp2f1(args: Hyp2F1Args) -> Result<f64> {
    Ok(eval(args)?.value())
}

/// `ln 2F1(a, b; c; z)`; the function value must be positive.
pub fn log_hyp2f1(args: Hyp2F1Args) -> Result<f64> {
    let s = eval(args)?;
    if s.negative {
        return Err(Error::Domain(format!(
            "2F1 is negative at {args:?}; logarithm undefined"
        )));
    }
    Ok(s.log_abs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn f(a: f64, b: f64, c: f64, z: f64) -> f64 {
        hyp2f1(Hyp2F1Args::new(a, b, c, z).unwrap()).unwrap()
    }

    #[test]
    fn log_gamma_reference_points() {
        assert_eq!(log_gamma(1.0).unwrap(), 0.0);
        assert_relative_eq!(
            log_gamma(0.5).unwrap(),
            0.5 * core::f64::consts::PI.ln(),
            max_relative = 1e-14
        );
        assert_relative_eq!(log_gamma(10.0).unwrap(), 362_880f64.ln(), max_relative = 1e-14);
        assert!(log_gamma(0.0).is_err());
        assert!(log_gamma(-1.5).is_err());
    }

    #[test]
    fn log_beta_reference_points() {
        assert_eq!(log_beta(1.0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(log_beta(2.0, 3.0).unwrap(), (1.0f64 / 12.0).ln(), max_relative = 1e-13);
        // B(1+3, 1+2) / B(1, 1) = 3! 2! / 6!
        let lhs = log_beta(4.0, 3.0).unwrap() - log_beta(1.0, 1.0).unwrap();
        assert_relative_eq!(lhs, (1.0f64 / 60.0).ln(), max_relative = 1e-13);
        assert!(log_beta(0.0, 1.0).is_err());
    }

    #[test]
    fn zero_argument_is_one() {
        assert_eq!(f(3.5, -2.0, 1.5, 0.0), 1.0);
        assert_eq!(f(0.5, 12.0, 0.25, 0.0), 1.0);
    }

    #[test]
    fn log_one_plus_z_closed_form() {
        // 2F1(1,1;2;z) = -ln(1-z)/z
        assert_relative_eq!(f(1.0, 1.0, 2.0, -1.0), 2f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(f(1.0, 1.0, 2.0, 0.5), 2.0 * 2f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn both_pfaff_forms_agree() {
        let args = Hyp2F1Args::new(2.5, 7.5, 3.5, -3.0).unwrap();
        let a = hyp2f1_pfaff(args, PfaffForm::A).unwrap();
        let b = hyp2f1_pfaff(args, PfaffForm::B).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-10);
    }

    #[test]
    fn cancellation_is_reported() {
        // both Pfaff forms alternate and the result is eight orders below the terms
        let args = Hyp2F1Args::new(3.6286801895475005, 10.758490687593536, 1.8544598944452069, -17.471695001410858)
            .unwrap();
        assert_eq!(hyp2f1(args), Err(Error::Cancellation));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(Hyp2F1Args::new(1.0, 1.0, -2.0, 0.1).is_err());
        assert!(Hyp2F1Args::new(1.0, 1.0, 0.0, 0.1).is_err());
        assert!(Hyp2F1Args::new(1.0, 1.0, 2.0, 1.0).is_err());
        assert!(Hyp2F1Args::new(1.0, f64::NAN, 2.0, 0.5).is_err());
    }

    #[test]
    fn terminating_series() {
        // 2F1(-2, b; c; z) = 1 - 2bz/c + b(b+1)z^2/(c(c+1))
        let (b, c, z) = (3.0, 1.5, 0.4);
        let exact = 1.0 - 2.0 * b * z / c + b * (b + 1.0) * z * z / (c * (c + 1.0));
        assert_relative_eq!(f(-2.0, b, c, z), exact, max_relative = 1e-14);
    }

    #[test]
    fn extreme_negative_argument_uses_integral_form() {
        // c = a + 1 with w extremely close to 1: integral fallback
        let (a, b) = (2.0, 7.5);
        let z = -1e12;
        let v = log_hyp2f1(Hyp2F1Args::new(a, b, a + 1.0, z).unwrap()).unwrap();
        // leading asymptotic term a (-z)^{-a} B(a, b-a)
        let asym = a.ln() - a * (-z).ln() + log_beta(a, b - a).unwrap();
        assert_relative_eq!(v, asym, max_relative = 1e-9);
    }

    #[test]
    fn integral_form_matches_series_in_overlap() {
        let (a, b, z) = (1.5, 6.0, -20.0);
        let direct = log_hyp2f1(Hyp2F1Args::new(a, b, a + 1.0, z).unwrap()).unwrap();
        let integral = log_incomplete_beta_form(a, b, z).unwrap();
        assert_relative_eq!(direct, integral, max_relative = 1e-11);
    }
}
