//! Adam with bias correction, operating on the trainable tensors of a
//! [`ParameterSet`].

use super::{DenseMatrix, LinalgError};
use crate::params::{GradSet, ParameterSet};
use crate::scalar::{real, Scalar};

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper<T: Scalar = f64> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Scalar> AdamHyper<T> {
    pub fn with_lr(lr: T) -> Self {
        Self {
            lr,
            beta1: real(0.9),
            beta2: real(0.999),
            epsilon: real(1e-8),
        }
    }
}

/// First/second moment estimates, one pair per trainable tensor.
#[derive(Debug, Clone)]
pub struct AdamState<T: Scalar = f64> {
    hyper: AdamHyper<T>,
    step: u64,
    moments: Vec<(String, DenseMatrix<T>, DenseMatrix<T>)>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(hyper: AdamHyper<T>, params: &ParameterSet<T>) -> Self {
        let moments = params
            .trainable()
            .map(|p| {
                let z = DenseMatrix::zeros(p.tensor.rows(), p.tensor.cols());
                (p.name.clone(), z.clone(), z)
            })
            .collect();
        Self {
            hyper,
            step: 0,
            moments,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn hyper(&self) -> &AdamHyper<T> {
        &self.hyper
    }
}

/// One Adam update. Non-trainable tensors are untouched; the step counter
/// advances by exactly one.
pub fn adam_step<T: Scalar>(
    params: &mut ParameterSet<T>,
    grads: &GradSet<T>,
    state: &mut AdamState<T>,
) -> Result<(), LinalgError> {
    let expected = state.moments.len();
    if grads.len() != expected {
        return Err(LinalgError::ShapeMismatch {
            op: "adam_step",
            expected: (expected, 0),
            got: (grads.len(), 0),
        });
    }

    state.step += 1;
    let t = state.step as i32;
    let h = state.hyper;
    let bc1 = T::one() - h.beta1.powi(t);
    let bc2 = T::one() - h.beta2.powi(t);

    for ((name, m, v), param) in state.moments.iter_mut().zip(params.trainable_mut()) {
        debug_assert_eq!(*name, param.name, "adam state misaligned with params");
        let grad = grads.get(name).ok_or(LinalgError::ShapeMismatch {
            op: "adam_step",
            expected: param.tensor.shape(),
            got: (0, 0),
        })?;
        if grad.shape() != param.tensor.shape() {
            return Err(LinalgError::ShapeMismatch {
                op: "adam_step",
                expected: param.tensor.shape(),
                got: grad.shape(),
            });
        }
        let (gm, gv, gd) = (m.data_mut(), v.data_mut(), grad.data());
        let theta = param.tensor.data_mut();
        for i in 0..gd.len() {
            let g = gd[i];
            gm[i] = h.beta1 * gm[i] + (T::one() - h.beta1) * g;
            gv[i] = h.beta2 * gv[i] + (T::one() - h.beta2) * g * g;
            let m_hat = gm[i] / bc1;
            let v_hat = gv[i] / bc2;
            theta[i] = theta[i] - h.lr * m_hat / (v_hat.sqrt() + h.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(theta: f64) -> ParameterSet {
        let mut ps = ParameterSet::new();
        ps.push("w", DenseMatrix::from_vec(1, 1, vec![theta]), true);
        ps
    }

    fn grad_of(ps: &ParameterSet, g: f64) -> GradSet {
        let mut gs = GradSet::zeros_like(ps);
        gs.get_mut("w").unwrap()[(0, 0)] = g;
        gs
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut ps = one_param(1.0);
        let mut st = AdamState::new(AdamHyper::with_lr(0.01), &ps);
        let gs = grad_of(&ps, 0.0);
        adam_step(&mut ps, &gs, &mut st).unwrap();
        assert_eq!(ps.tensor("w")[(0, 0)], 1.0);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn single_step_hand_oracle() {
        // theta = 1.0, g = 0.5: m_hat = 0.5, v_hat = 0.25,
        // theta' = 1 - lr * 0.5 / (0.5 + 1e-8).
        let mut ps = one_param(1.0);
        let mut st = AdamState::new(AdamHyper::with_lr(0.01), &ps);
        let gs = grad_of(&ps, 0.5);
        adam_step(&mut ps, &gs, &mut st).unwrap();
        let expected = 1.0 - 0.01 * 0.5 / (0.25_f64.sqrt() + 1e-8);
        assert!((ps.tensor("w")[(0, 0)] - expected).abs() < 1e-16);
        assert!((ps.tensor("w")[(0, 0)] - 0.99).abs() < 1e-7);
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut ps = one_param(1.0);
        let mut st = AdamState::new(AdamHyper::with_lr(0.01), &ps);
        let mut last = 1.0;
        for _ in 0..2 {
            let gs = grad_of(&ps, 0.5);
            adam_step(&mut ps, &gs, &mut st).unwrap();
            let now = ps.tensor("w")[(0, 0)];
            assert!(now < last, "positive gradient must decrease theta");
            last = now;
        }
        assert_eq!(st.step_count(), 2);
    }

    #[test]
    fn deterministic_bitwise() {
        let run = || {
            let mut ps = one_param(0.3);
            let mut st = AdamState::new(AdamHyper::with_lr(0.005), &ps);
            for k in 0..17 {
                let gs = grad_of(&ps, (k as f64).sin());
                adam_step(&mut ps, &gs, &mut st).unwrap();
            }
            ps.tensor("w")[(0, 0)].to_bits()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut ps = one_param(1.0);
        let mut st = AdamState::new(AdamHyper::with_lr(0.01), &ps);
        let bad = GradSet::from_entries(vec![("w".into(), DenseMatrix::zeros(2, 2))]);
        assert!(matches!(
            adam_step(&mut ps, &bad, &mut st),
            Err(LinalgError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn non_trainable_untouched() {
        let mut ps = ParameterSet::new();
        ps.push("w", DenseMatrix::from_vec(1, 1, vec![1.0]), true);
        ps.push("frozen", DenseMatrix::from_vec(1, 1, vec![7.0]), false);
        let mut st = AdamState::new(AdamHyper::with_lr(0.1), &ps);
        let mut gs = GradSet::zeros_like(&ps);
        gs.get_mut("w").unwrap()[(0, 0)] = 1.0;
        adam_step(&mut ps, &gs, &mut st).unwrap();
        assert_eq!(ps.tensor("frozen")[(0, 0)], 7.0);
        assert!(ps.tensor("w")[(0, 0)] < 1.0);
    }
}
