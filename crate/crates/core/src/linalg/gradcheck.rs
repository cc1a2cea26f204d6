//! Central-difference gradient oracle. Test/CI machinery: every hand-derived
//! backward pass in the workbench is gated against this.

use std::fmt::Display;

use super::LinalgError;
use crate::params::{GradSet, ParameterSet};
use crate::scalar::{real, Scalar};

/// Default base step; the per-entry step is `base * max(1, |theta|)`.
pub const FD_EPS_DEFAULT: f64 = 1e-5;

/// Central finite differences of `f` over every trainable entry of `params`.
///
/// `f` must be deterministic (run models in eval mode) and finite near
/// `params`; a non-finite evaluation aborts the oracle.
pub fn finite_diff_grad<T, F, E>(
    mut f: F,
    params: &ParameterSet<T>,
    base_eps: T,
) -> Result<GradSet<T>, LinalgError>
where
    T: Scalar,
    F: FnMut(&ParameterSet<T>) -> Result<T, E>,
    E: Display,
{
    let mut work = params.clone();
    let mut grads = GradSet::zeros_like(params);
    let names: Vec<String> = params.trainable().map(|p| p.name.clone()).collect();

    for name in &names {
        let (rows, cols) = params.get(name).unwrap().tensor.shape();
        for i in 0..rows {
            for j in 0..cols {
                let theta = params.get(name).unwrap().tensor[(i, j)];
                let eps = base_eps * T::one().max(theta.abs());

                work.get_mut(name).unwrap().tensor[(i, j)] = theta + eps;
                let plus = eval(&mut f, &work)?;
                work.get_mut(name).unwrap().tensor[(i, j)] = theta - eps;
                let minus = eval(&mut f, &work)?;
                work.get_mut(name).unwrap().tensor[(i, j)] = theta;

                grads.get_mut(name).unwrap()[(i, j)] = (plus - minus) / (real::<T>(2.0) * eps);
            }
        }
    }
    Ok(grads)
}

fn eval<T, F, E>(f: &mut F, params: &ParameterSet<T>) -> Result<T, LinalgError>
where
    T: Scalar,
    F: FnMut(&ParameterSet<T>) -> Result<T, E>,
    E: Display,
{
    let v = f(params).map_err(|e| LinalgError::OracleFailure(e.to_string()))?;
    if !v.is_finite() {
        return Err(LinalgError::OracleFailure(
            "objective evaluated to a non-finite value".into(),
        ));
    }
    Ok(v)
}

/// Max over entries of `|a - b| / max(1, |a|, |b|)`. The unit clamp keeps the
/// check meaningful where the true gradient is (near-)zero.
pub fn max_relative_error<T: Scalar>(analytic: &GradSet<T>, numeric: &GradSet<T>) -> T {
    assert_eq!(analytic.len(), numeric.len(), "gradient sets differ");
    let mut worst = T::zero();
    for ((na, ga), (nb, gb)) in analytic.iter().zip(numeric.iter()) {
        assert_eq!(na, nb, "gradient sets are not aligned");
        for (&a, &b) in ga.iter().zip(gb.iter()) {
            let denom = T::one().max(a.abs()).max(b.abs());
            worst = worst.max((a - b).abs() / denom);
        }
    }
    worst
}
