//! Numerically stable softmax, KL divergence, and masked cross-entropy.

use super::{DenseMatrix, LinalgError};
use crate::scalar::{real, Scalar};

/// Probability floor applied to the reference distribution inside KL logs.
pub const KL_FLOOR: f64 = 1e-12;

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows<T: Scalar>(logits: &DenseMatrix<T>) -> Result<DenseMatrix<T>, LinalgError> {
    if !logits.all_finite() {
        return Err(LinalgError::NonFinite { op: "softmax_rows" });
    }
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    Ok(out)
}

/// Row-wise log-softmax; shares the stabilization with [`softmax_rows`].
pub fn log_softmax_rows<T: Scalar>(logits: &DenseMatrix<T>) -> Result<DenseMatrix<T>, LinalgError> {
    if !logits.all_finite() {
        return Err(LinalgError::NonFinite {
            op: "log_softmax_rows",
        });
    }
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let lse = row
            .iter()
            .map(|&v| (v - max).exp())
            .fold(T::zero(), |a, b| a + b)
            .ln()
            + max;
        for v in row.iter_mut() {
            *v = *v - lse;
        }
    }
    Ok(out)
}

/// Mean over masked rows of `sum_c p ln(p/q)`, with `0 ln(0/q) = 0` and the
/// reference `q` floored at [`KL_FLOOR`]. Each row value is clamped at zero
/// so floating-point roundoff cannot produce a negative divergence.
pub fn mean_kl<T: Scalar>(
    p: &DenseMatrix<T>,
    q: &DenseMatrix<T>,
    mask: &[usize],
) -> Result<T, LinalgError> {
    if p.shape() != q.shape() {
        return Err(LinalgError::ShapeMismatch {
            op: "mean_kl",
            expected: p.shape(),
            got: q.shape(),
        });
    }
    if mask.is_empty() {
        return Err(LinalgError::EmptyMask { op: "mean_kl" });
    }
    let floor = real::<T>(KL_FLOOR);
    let mut total = T::zero();
    for &i in mask {
        if i >= p.rows() {
            return Err(LinalgError::IndexOutOfRange {
                op: "mean_kl",
                index: i,
                rows: p.rows(),
            });
        }
        let mut row_kl = T::zero();
        for (&pv, &qv) in p.row(i).iter().zip(q.row(i)) {
            if pv > T::zero() {
                row_kl += pv * (pv / qv.max(floor)).ln();
            }
        }
        total += row_kl.max(T::zero());
    }
    Ok(total / real::<T>(mask.len() as f64))
}

/// Mean negative log-likelihood over masked rows, plus its gradient with
/// respect to the logits. Gradient rows outside the mask are zero; inside the
/// mask they are `(softmax - onehot) / |mask|`.
pub fn masked_cross_entropy<T: Scalar>(
    logits: &DenseMatrix<T>,
    labels: &[usize],
    mask: &[usize],
) -> Result<(T, DenseMatrix<T>), LinalgError> {
    if mask.is_empty() {
        return Err(LinalgError::EmptyMask {
            op: "masked_cross_entropy",
        });
    }
    assert_eq!(labels.len(), logits.rows(), "one label per logits row");
    let classes = logits.cols();
    for &i in mask {
        if i >= logits.rows() {
            return Err(LinalgError::IndexOutOfRange {
                op: "masked_cross_entropy",
                index: i,
                rows: logits.rows(),
            });
        }
        if labels[i] >= classes {
            return Err(LinalgError::LabelOutOfRange {
                label: labels[i],
                classes,
            });
        }
    }

    let log_probs = log_softmax_rows(logits)?;
    let inv_count = T::one() / real::<T>(mask.len() as f64);
    let mut loss = T::zero();
    let mut grad = DenseMatrix::zeros(logits.rows(), classes);
    for &i in mask {
        let lp = log_probs.row(i);
        loss -= lp[labels[i]];
        let g = grad.row_mut(i);
        for (k, &v) in lp.iter().enumerate() {
            g[k] = v.exp() * inv_count;
        }
        g[labels[i]] -= inv_count;
    }
    Ok((loss * inv_count, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_mask(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    #[test]
    fn softmax_uniform_row() {
        let logits: DenseMatrix = DenseMatrix::from_rows(&[vec![0.0, 0.0, 0.0]]);
        let p = softmax_rows(&logits).unwrap();
        for &v in p.row(0) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_large_logits_no_overflow() {
        let logits: DenseMatrix = DenseMatrix::from_rows(&[vec![1000.0, 1000.0]]);
        let p = softmax_rows(&logits).unwrap();
        assert!((p[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((p[(0, 1)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn softmax_ln2_row() {
        // exp(ln 2) = 2, exp(0) = 1, so the row is [2/3, 1/3].
        let logits = DenseMatrix::from_rows(&[vec![2.0_f64.ln(), 0.0]]);
        let p = softmax_rows(&logits).unwrap();
        assert!((p[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[(0, 1)] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        let logits = DenseMatrix::from_rows(&[vec![f64::NAN, 0.0]]);
        assert!(matches!(
            softmax_rows(&logits),
            Err(LinalgError::NonFinite { .. })
        ));
    }

    #[test]
    fn kl_zero_on_identical() {
        let p: DenseMatrix = DenseMatrix::from_rows(&[vec![0.2, 0.3, 0.5], vec![0.9, 0.05, 0.05]]);
        let kl = mean_kl(&p, &p, &full_mask(2)).unwrap();
        assert_eq!(kl, 0.0);
    }

    #[test]
    fn kl_hand_value() {
        let p: DenseMatrix = DenseMatrix::from_rows(&[vec![0.9, 0.1]]);
        let q: DenseMatrix = DenseMatrix::from_rows(&[vec![0.5, 0.5]]);
        let expected = 0.9 * (0.9_f64 / 0.5).ln() + 0.1 * (0.1_f64 / 0.5).ln();
        let kl = mean_kl(&p, &q, &[0]).unwrap();
        assert!((kl - expected).abs() < 1e-15);
        assert!((kl - 0.3681).abs() < 1e-4);
    }

    #[test]
    fn kl_mean_of_two_rows() {
        let p: DenseMatrix = DenseMatrix::from_rows(&[vec![0.9, 0.1], vec![0.3, 0.7]]);
        let q: DenseMatrix = DenseMatrix::from_rows(&[vec![0.5, 0.5], vec![0.6, 0.4]]);
        let k1 = mean_kl(&p, &q, &[0]).unwrap();
        let k2 = mean_kl(&p, &q, &[1]).unwrap();
        let both = mean_kl(&p, &q, &full_mask(2)).unwrap();
        assert!((both - 0.5 * (k1 + k2)).abs() < 1e-15);
    }

    #[test]
    fn kl_floors_zero_reference() {
        let p: DenseMatrix = DenseMatrix::from_rows(&[vec![1.0, 0.0]]);
        let q: DenseMatrix = DenseMatrix::from_rows(&[vec![0.0, 1.0]]);
        let kl = mean_kl(&p, &q, &[0]).unwrap();
        assert!(kl.is_finite());
        assert!((kl - (1.0_f64 / KL_FLOOR).ln()).abs() < 1e-9);
    }

    #[test]
    fn ce_uniform_logits() {
        let logits: DenseMatrix = DenseMatrix::zeros(3, 4);
        let (loss, _) = masked_cross_entropy(&logits, &[0, 1, 2], &full_mask(3)).unwrap();
        assert!((loss - 4.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ce_saturated_logit() {
        let mut logits: DenseMatrix = DenseMatrix::zeros(1, 4);
        logits[(0, 2)] = 50.0;
        let (loss, grad) = masked_cross_entropy(&logits, &[2], &[0]).unwrap();
        assert!(loss < 1e-9);
        assert!(grad.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn ce_mask_isolates_rows() {
        let logits: DenseMatrix = DenseMatrix::from_rows(&[vec![1.0, -1.0], vec![3.0, 2.0]]);
        let (loss, grad) = masked_cross_entropy(&logits, &[0, 1], &[0]).unwrap();
        let (loss_solo, _) = masked_cross_entropy(&logits.select_rows(&[0]), &[0], &[0]).unwrap();
        assert!((loss - loss_solo).abs() < 1e-15);
        assert!(grad.row(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ce_label_out_of_range() {
        let logits: DenseMatrix = DenseMatrix::zeros(1, 3);
        assert!(matches!(
            masked_cross_entropy(&logits, &[3], &[0]),
            Err(LinalgError::LabelOutOfRange { label: 3, classes: 3 })
        ));
    }

    #[test]
    fn ce_empty_mask_rejected() {
        let logits: DenseMatrix = DenseMatrix::zeros(1, 3);
        assert!(matches!(
            masked_cross_entropy(&logits, &[0], &[]),
            Err(LinalgError::EmptyMask { .. })
        ));
    }
}
