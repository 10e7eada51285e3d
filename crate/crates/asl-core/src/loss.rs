//! Softmax and categorical cross-entropy, fused for a stable gradient.
//!
//! The loss is computed from logits through a max-shifted log-sum-exp, so
//! no exponential overflows, and the gradient collapses to
//! (softmax - one_hot) / batch.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Row-wise softmax of a `[N, C]` tensor.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let &[_, c] = logits.shape() else {
        return Err(Error::shape(format!(
            "softmax expects [N, C] logits, got {:?}",
            logits.shape()
        )));
    };
    let mut out = Tensor::zeros(logits.shape());
    for (orow, row) in out
        .data_mut()
        .chunks_exact_mut(c)
        .zip(logits.data().chunks_exact(c))
    {
        let max = row.iter().fold(row[0], |m, &v| if v > m { v } else { m });
        let mut sum = T::zero();
        for (o, &v) in orow.iter_mut().zip(row) {
            *o = (v - max).exp();
            sum = sum + *o;
        }
        for o in orow.iter_mut() {
            *o = *o / sum;
        }
    }
    Ok(out)
}

/// Mean negative log-likelihood of the true classes, plus the gradient with
/// respect to the logits.
pub fn crossentropy_from_logits<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(f64, Tensor<T>)> {
    let &[n, c] = logits.shape() else {
        return Err(Error::shape(format!(
            "cross-entropy expects [N, C] logits, got {:?}",
            logits.shape()
        )));
    };
    if labels.len() != n {
        return Err(Error::shape(format!(
            "{n} logit rows but {} labels",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::Label(format!("label {bad} out of range for {c} classes")));
    }

    let probs = softmax(logits)?;
    let mut loss = 0.0f64;
    for (row, &y) in logits.data().chunks_exact(c).zip(labels) {
        let max = row.iter().fold(row[0], |m, &v| if v > m { v } else { m });
        let lse: f64 = row
            .iter()
            .map(|&v| (v - max).to_f64().exp())
            .sum::<f64>()
            .ln();
        loss -= (row[y] - max).to_f64() - lse;
    }
    loss /= n as f64;

    let inv_n = T::from_f64(1.0 / n as f64);
    let mut grad = probs;
    for (row, &y) in grad.data_mut().chunks_exact_mut(c).zip(labels) {
        row[y] = row[y] - T::one();
        for g in row.iter_mut() {
            *g = *g * inv_n;
        }
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::tensor::{gaussian, uniform};

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = Rng::new(31);
        let logits = gaussian::<f32>(&mut rng, 0.0, 5.0, &[16, 30]).unwrap();
        let p = softmax(&logits).unwrap();
        for row in p.data().chunks_exact(30) {
            let s: f32 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6, "row sum {s}");
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let logits = Tensor::new(&[1, 3], vec![1000.0f32, 1001.0, 999.0]).unwrap();
        let p = softmax(&logits).unwrap();
        assert!(p.all_finite());
        assert!((p.data().iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn uniform_logits_give_ln_c() {
        // oracle: identical logits mean every class has probability 1/30,
        // so the loss is ln 30 regardless of the label
        let logits = Tensor::full(&[4, 30], 0.7f64);
        let (loss, _) = crossentropy_from_logits(&logits, &[0, 7, 15, 29]).unwrap();
        assert!((loss - 30.0f64.ln()).abs() < 1e-9, "loss {loss}");
        assert!((loss - 3.40120).abs() < 1e-5);
    }

    #[test]
    fn perfect_prediction_drives_loss_down() {
        let logits = Tensor::new(&[1, 3], vec![20.0f64, 0.0, 0.0]).unwrap();
        let (loss, _) = crossentropy_from_logits(&logits, &[0]).unwrap();
        assert!(loss < 1e-8, "loss {loss}");
    }

    #[test]
    fn gradient_is_softmax_minus_onehot_over_n() {
        let mut rng = Rng::new(32);
        let logits = uniform::<f64>(&mut rng, -2.0, 2.0, &[5, 4]).unwrap();
        let labels = [3, 0, 2, 1, 1];
        let p = softmax(&logits).unwrap();
        let (_, grad) = crossentropy_from_logits(&logits, &labels).unwrap();
        for (r, &y) in labels.iter().enumerate() {
            for k in 0..4 {
                let expect = (p.data()[r * 4 + k] - if k == y { 1.0 } else { 0.0 }) / 5.0;
                assert!((grad.data()[r * 4 + k] - expect).abs() < 1e-12);
            }
        }
        // each row of the gradient sums to zero
        for row in grad.data().chunks_exact(4) {
            assert!(row.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = Rng::new(33);
        let logits = uniform::<f64>(&mut rng, -1.0, 1.0, &[3, 5]).unwrap();
        let labels = [4, 2, 0];
        let (_, grad) = crossentropy_from_logits(&logits, &labels).unwrap();
        let h = 1e-6;
        for i in 0..logits.len() {
            let mut plus = logits.clone();
            plus.data_mut()[i] += h;
            let mut minus = logits.clone();
            minus.data_mut()[i] -= h;
            let (lp, _) = crossentropy_from_logits(&plus, &labels).unwrap();
            let (lm, _) = crossentropy_from_logits(&minus, &labels).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            assert!(
                (grad.data()[i] - fd).abs() < 1e-8,
                "coord {i}: analytic {} vs fd {fd}",
                grad.data()[i]
            );
        }
    }

    #[test]
    fn rejects_out_of_range_labels() {
        let logits = Tensor::<f64>::zeros(&[2, 3]);
        assert!(matches!(
            crossentropy_from_logits(&logits, &[0, 3]),
            Err(Error::Label(_))
        ));
        assert!(crossentropy_from_logits(&logits, &[0]).is_err());
    }
}
