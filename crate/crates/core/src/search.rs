//! One-dimensional and simplex searches used by the shooting solver and the
//! connecting-pulse fit, backed by `argmin`.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::brent::BrentRoot;
use argmin::solver::goldensectionsearch::GoldenSectionSearch;
use argmin::solver::neldermead::NelderMead;

use crate::error::{Error, Result};

struct Scalar<F>(F);

impl<F: Fn(f64) -> f64> CostFunction for Scalar<F> {
    type Param = f64;
    type Output = f64;

    fn cost(&self, x: &f64) -> std::result::Result<f64, argmin::core::Error> {
        Ok((self.0)(*x))
    }
}

struct Multi<F>(F);

impl<F: Fn(&[f64]) -> f64> CostFunction for Multi<F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        Ok((self.0)(x))
    }
}

fn failed(e: argmin::core::Error) -> Error {
    Error::SearchFailed(e.to_string())
}

/// Root of `f` in `[lo, hi]`; `f(lo)` and `f(hi)` must differ in sign.
pub fn find_root(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo * fhi > 0.0 || !(flo.is_finite() && fhi.is_finite()) {
        return Err(Error::SearchFailed(format!(
            "root not bracketed in [{lo}, {hi}]"
        )));
    }
    let res = Executor::new(Scalar(f), BrentRoot::new(lo, hi, tol))
        .configure(|s| s.max_iters(200))
        .run()
        .map_err(failed)?;
    res.state
        .get_param()
        .copied()
        .ok_or_else(|| Error::SearchFailed("root search produced no iterate".into()))
}

/// Local minimizer of a unimodal `f` on `[lo, hi]`, returned as `(x, f(x))`.
pub fn golden_section(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let solver = GoldenSectionSearch::new(lo, hi)
        .and_then(|s| s.with_tolerance(tol))
        .map_err(failed)?;
    let res = Executor::new(Scalar(f), solver)
        .configure(|s| s.param(0.5 * (lo + hi)).max_iters(500))
        .run()
        .map_err(failed)?;
    let x = *res
        .state
        .get_best_param()
        .ok_or_else(|| Error::SearchFailed("golden section produced no iterate".into()))?;
    Ok((x, res.state.get_best_cost()))
}

/// Nelder–Mead minimization from `x0` with initial simplex edge `step`.
/// Returns the best point and its cost.
pub fn nelder_mead(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    tol: f64,
    max_iters: u64,
) -> Result<(Vec<f64>, f64)> {
    let mut simplex = vec![x0.to_vec()];
    for i in 0..x0.len() {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(tol)
        .map_err(failed)?;
    let res = Executor::new(Multi(f), solver)
        .configure(|s| s.max_iters(max_iters))
        .run()
        .map_err(failed)?;
    let x = res
        .state
        .get_best_param()
        .cloned()
        .ok_or_else(|| Error::SearchFailed("simplex search produced no iterate".into()))?;
    Ok((x, res.state.get_best_cost()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn root_of_cosine() {
        let r = find_root(f64::cos, 1.0, 2.0, 1e-14).unwrap();
        assert_abs_diff_eq!(r, std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
        assert!(find_root(f64::cos, 2.0, 3.0, 1e-12).is_err());
    }

    #[test]
    fn golden_parabola() {
        let (x, fx) = golden_section(|x| (x - 0.3).powi(2) + 1.0, -1.0, 2.0, 1e-10).unwrap();
        assert_abs_diff_eq!(x, 0.3, epsilon = 1e-6);
        assert_abs_diff_eq!(fx, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn simplex_rosenbrock() {
        let f = |p: &[f64]| (1.0 - p[0]).powi(2) + 100.0 * (p[1] - p[0] * p[0]).powi(2);
        let (x, fx) = nelder_mead(f, &[-1.2, 1.0], 0.5, 1e-14, 5000).unwrap();
        assert!(fx < 1e-10);
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-4);
    }
}
