//! Adaptive Simpson quadrature.
//!
//! Used for weight-distribution expectations that have no closed form
//! (moment generating functions of Pareto and Uniform weights). The
//! integrand is assumed smooth on the interior of the interval; the
//! tolerance is absolute, matching how the results are consumed (PGF values
//! in `[0, 1]`).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadratureError {
    #[error(
        "quadrature did not converge on [{lo}, {hi}]: requested abs tol {requested:e}, \
         worst panel error {achieved:e} at depth {depth}"
    )]
    NoConvergence {
        lo: f64,
        hi: f64,
        requested: f64,
        achieved: f64,
        depth: usize,
    },
    #[error("integrand returned a non-finite value at x = {x}")]
    NonFiniteIntegrand { x: f64 },
}

const MAX_DEPTH: usize = 48;

/// Integrates `f` over `[lo, hi]` to absolute tolerance `abs_tol`.
pub fn integrate<F>(f: F, lo: f64, hi: f64, abs_tol: f64) -> Result<f64, QuadratureError>
where
    F: Fn(f64) -> f64,
{
    let eval = |x: f64| -> Result<f64, QuadratureError> {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(QuadratureError::NonFiniteIntegrand { x })
        }
    };
    let mid = 0.5 * (lo + hi);
    let flo = eval(lo)?;
    let fmid = eval(mid)?;
    let fhi = eval(hi)?;
    let whole = simpson(lo, hi, flo, fmid, fhi);
    adapt(&eval, lo, hi, flo, fmid, fhi, whole, abs_tol, 0)
}

fn simpson(lo: f64, hi: f64, flo: f64, fmid: f64, fhi: f64) -> f64 {
    (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)
}

#[allow(clippy::too_many_arguments)]
fn adapt<E>(
    eval: &E,
    lo: f64,
    hi: f64,
    flo: f64,
    fmid: f64,
    fhi: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> Result<f64, QuadratureError>
where
    E: Fn(f64) -> Result<f64, QuadratureError>,
{
    let mid = 0.5 * (lo + hi);
    let lmid = 0.5 * (lo + mid);
    let rmid = 0.5 * (mid + hi);
    let flmid = eval(lmid)?;
    let frmid = eval(rmid)?;
    let left = simpson(lo, mid, flo, flmid, fmid);
    let right = simpson(mid, hi, fmid, frmid, fhi);
    let err = left + right - whole;
    // Standard Richardson estimate: |err|/15 bounds the composite error.
    if err.abs() <= 15.0 * tol || (hi - lo) < f64::EPSILON * (1.0 + lo.abs() + hi.abs()) {
        return Ok(left + right + err / 15.0);
    }
    if depth >= MAX_DEPTH {
        return Err(QuadratureError::NoConvergence {
            lo,
            hi,
            requested: tol,
            achieved: err.abs() / 15.0,
            depth,
        });
    }
    let half_tol = 0.5 * tol;
    let l = adapt(eval, lo, mid, flo, flmid, fmid, left, half_tol, depth + 1)?;
    let r = adapt(eval, mid, hi, fmid, frmid, fhi, right, half_tol, depth + 1)?;
    Ok(l + r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| 3.0 * x * x, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 8.0).abs() < 1e-10);
    }

    #[test]
    fn exponential_tail() {
        // int_0^20 e^-x dx = 1 - e^-20
        let v = integrate(|x| (-x).exp(), 0.0, 20.0, 1e-12).unwrap();
        assert!((v - (1.0 - (-20.0f64).exp())).abs() < 1e-10);
    }

    #[test]
    fn sharp_peak_converges() {
        // Narrow Gaussian bump integrates to ~sqrt(pi)/50.
        let v = integrate(|x| (-(50.0 * (x - 0.37)).powi(2)).exp(), 0.0, 1.0, 1e-11).unwrap();
        let expected = std::f64::consts::PI.sqrt() / 50.0;
        assert!((v - expected).abs() < 1e-9, "got {v}, want {expected}");
    }

    #[test]
    fn non_finite_integrand_reports_location() {
        let err = integrate(|x| 1.0 / x, -1.0, 1.0, 1e-9).unwrap_err();
        match err {
            QuadratureError::NonFiniteIntegrand { x } => assert_eq!(x, 0.0),
            other => panic!("unexpected error: {other}"),
        }
    }
}
