//! Scalar special functions and bracketed root finding.
//!
//! Everything here is a pure function of its arguments, so it can be called
//! from any number of threads.

use thiserror::Error;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Below this argument E1 is summed from its power series, above it the
/// continued fraction is used. Both reach full double precision at 1.0.
const E1_SERIES_CROSSOVER: f64 = 1.0;

/// `e^{-x}` underflows to zero past this point, and so does E1.
const E1_UNDERFLOW: f64 = 746.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecfunError {
    #[error("{func}: argument {x} outside domain ({domain})")]
    Domain {
        func: &'static str,
        x: f64,
        domain: &'static str,
    },
    #[error("root not bracketed: f({lo}) = {f_lo}, f({hi}) = {f_hi}")]
    NotBracketed {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },
    #[error("root search did not converge after {iters} iterations (bracket [{lo}, {hi}])")]
    NoConvergence { iters: usize, lo: f64, hi: f64 },
    #[error("invalid bracket: {0}")]
    InvalidBracket(String),
}

/// Exponential integral `E1(x) = ∫_x^∞ e^{-t}/t dt` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> Result<f64, SpecfunError> {
    if !(x > 0.0) || x.is_nan() {
        return Err(SpecfunError::Domain {
            func: "exp_integral_e1",
            x,
            domain: "x > 0",
        });
    }
    if x.is_infinite() || x >= E1_UNDERFLOW {
        return Ok(0.0);
    }
    if x < E1_SERIES_CROSSOVER {
        Ok(e1_series(x))
    } else {
        Ok(e1_continued_fraction(x))
    }
}

/// `-γ - ln x - Σ (-x)^n / (n · n!)`
fn e1_series(x: f64) -> f64 {
    let mut sum = 0.0;
    let mut term = 1.0; // (-x)^n / n!
    for n in 1..200 {
        term *= -x / n as f64;
        let contrib = term / n as f64;
        sum += contrib;
        if contrib.abs() <= f64::EPSILON * sum.abs() {
            break;
        }
    }
    -EULER_GAMMA - x.ln() - sum
}

/// Modified Lentz evaluation of the continued fraction
/// `e^{-x} / (x + 1 - 1/(x + 3 - 4/(x + 5 - ...)))`.
fn e1_continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..1000 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() <= 0.5 * f64::EPSILON {
            break;
        }
    }
    h * (-x).exp()
}

/// Principal branch of the Lambert W function: the `w ≥ -1` solving
/// `w e^w = x`.
pub fn lambert_w0(x: f64) -> Result<f64, SpecfunError> {
    let branch_point = -(-1.0f64).exp();
    if x.is_nan() || x < branch_point {
        return Err(SpecfunError::Domain {
            func: "lambert_w0",
            x,
            domain: "x >= -1/e",
        });
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == branch_point {
        return Ok(-1.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }

    let mut w = if x < -0.25 {
        // series around the branch point
        let p = (2.0 * (std::f64::consts::E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 3.0 {
        0.5 * x.ln_1p()
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };

    // Halley iteration
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1.abs() < 1e-300 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        let next = w - step;
        let next = if next < -1.0 { 0.5 * (w - 1.0) } else { next };
        if (next - w).abs() <= 4.0 * f64::EPSILON * next.abs().max(1e-300) {
            w = next;
            break;
        }
        w = next;
    }
    Ok(w)
}

/// Search interval and stopping rule for [`find_root`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootBracket {
    pub lo: f64,
    pub hi: f64,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_iter: usize,
}

impl RootBracket {
    pub const DEFAULT_TOL_ABS: f64 = 1e-12;
    pub const DEFAULT_TOL_REL: f64 = 1e-10;
    pub const DEFAULT_MAX_ITER: usize = 200;

    /// Bracket with the default tolerances.
    pub fn new(lo: f64, hi: f64) -> Result<Self, SpecfunError> {
        Self::with_tolerances(
            lo,
            hi,
            Self::DEFAULT_TOL_ABS,
            Self::DEFAULT_TOL_REL,
            Self::DEFAULT_MAX_ITER,
        )
    }

    pub fn with_tolerances(
        lo: f64,
        hi: f64,
        tol_abs: f64,
        tol_rel: f64,
        max_iter: usize,
    ) -> Result<Self, SpecfunError> {
        let mut problems = Vec::new();
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            problems.push(format!("need finite lo < hi, got [{lo}, {hi}]"));
        }
        if !(tol_abs > 0.0) {
            problems.push(format!("tol_abs must be > 0, got {tol_abs}"));
        }
        if !(tol_rel >= 0.0) {
            problems.push(format!("tol_rel must be >= 0, got {tol_rel}"));
        }
        if max_iter == 0 {
            problems.push("max_iter must be >= 1".to_string());
        }
        if problems.is_empty() {
            Ok(Self {
                lo,
                hi,
                tol_abs,
                tol_rel,
                max_iter,
            })
        } else {
            Err(SpecfunError::InvalidBracket(problems.join("; ")))
        }
    }
}

/// Finds a zero of a continuous function that changes sign on the bracket.
///
/// Illinois-style false position, falling back to a plain bisection step
/// whenever the interpolated step leaves the bracket or fails to shrink it
/// by at least half over two iterations. The returned point always lies in
/// `[lo, hi]`.
pub fn find_root<F>(mut f: F, bracket: RootBracket) -> Result<f64, SpecfunError>
where
    F: FnMut(f64) -> f64,
{
    let RootBracket {
        mut lo,
        mut hi,
        tol_abs,
        tol_rel,
        max_iter,
    } = bracket;
    let mut f_lo = f(lo);
    let mut f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.is_nan() || f_hi.is_nan() || f_lo.signum() == f_hi.signum() {
        return Err(SpecfunError::NotBracketed { lo, hi, f_lo, f_hi });
    }

    // which end was retained on the previous step: -1 lo, +1 hi
    let mut side = 0i8;
    let mut width_before = hi - lo;
    for iter in 0..max_iter {
        let secant = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        let use_bisect = iter % 2 == 1 && (hi - lo) > 0.5 * width_before;
        if iter % 2 == 1 {
            width_before = hi - lo;
        }
        let mid = if use_bisect || !(secant > lo && secant < hi) {
            0.5 * (lo + hi)
        } else {
            secant
        };
        let f_mid = f(mid);
        if f_mid == 0.0 || f_mid.abs() <= tol_abs {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = mid;
            f_hi = f_mid;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
        let centre = 0.5 * (lo + hi);
        if hi - lo <= tol_rel * centre.abs() + tol_abs {
            return Ok(centre);
        }
    }
    Err(SpecfunError::NoConvergence {
        iters: max_iter,
        lo,
        hi,
    })
}
