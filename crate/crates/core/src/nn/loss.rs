use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A scalar loss together with its gradient with respect to the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub gradient: Tensor,
}

/// Mean squared error over all elements.
pub fn l2_loss(pred: &Tensor, target: &Tensor) -> Result<LossValue> {
    pred.same_shape(target, "l2_loss")?;
    let n = pred.len() as f64;
    let diff: Vec<f64> = pred.data().iter().zip(target.data()).map(|(p, t)| p - t).collect();
    let value = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let gradient = Tensor::new(pred.shape().to_vec(), diff.iter().map(|d| 2.0 * d / n).collect())?;
    Ok(LossValue { value, gradient })
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

pub(crate) fn check_distribution(target: &[f64]) -> Result<()> {
    if let Some(bad) = target.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Error::NotADistribution(format!(
            "entry {bad} is negative or non-finite"
        )));
    }
    let sum: f64 = target.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::NotADistribution(format!("entries sum to {sum}")));
    }
    Ok(())
}

/// Cross-entropy between `softmax(logits)` and a target distribution.
pub fn softmax_cross_entropy(logits: &Tensor, target: &Tensor) -> Result<LossValue> {
    logits.same_shape(target, "softmax_cross_entropy")?;
    check_distribution(target.data())?;
    let logp = log_softmax(logits.data());
    let value = -target
        .data()
        .iter()
        .zip(&logp)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, lp)| t * lp)
        .sum::<f64>();
    let p = softmax(logits.data());
    let gradient = Tensor::new(
        logits.shape().to_vec(),
        p.iter().zip(target.data()).map(|(p, t)| p - t).collect(),
    )?;
    Ok(LossValue {
        value: value.max(0.0),
        gradient,
    })
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic loss on a single logit. The returned gradient is `d loss / d logit`
/// as a one-element tensor.
pub fn binary_cross_entropy(logit: f64, label: bool) -> LossValue {
    weighted_binary_cross_entropy(logit, label, 1.0)
}

/// Logistic loss with positive examples scaled by `pos_weight`.
pub fn weighted_binary_cross_entropy(logit: f64, label: bool, pos_weight: f64) -> LossValue {
    let p = super::activation::sigmoid(logit);
    let (value, grad) = if label {
        // -log σ(x) = softplus(-x)
        (pos_weight * softplus(-logit), pos_weight * (p - 1.0))
    } else {
        // -log(1 - σ(x)) = softplus(x)
        (softplus(logit), p)
    };
    LossValue {
        value,
        gradient: Tensor::from_vec(vec![grad]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l2_examples() {
        let x = Tensor::from_vec(vec![0.3, -2.0]);
        let l = l2_loss(&x, &x).unwrap();
        assert_eq!(l.value, 0.0);
        assert!(l.gradient.data().iter().all(|&g| g == 0.0));

        let l = l2_loss(&Tensor::from_vec(vec![1.0, 2.0]), &Tensor::zeros(&[2])).unwrap();
        assert_eq!(l.value, 2.5);
        assert!(l2_loss(&x, &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn cross_entropy_uniform() {
        let l = softmax_cross_entropy(&Tensor::full(&[5], 0.7), &Tensor::full(&[5], 0.2)).unwrap();
        assert!((l.value - 5f64.ln()).abs() < 1e-12);
        assert!((l.value - 1.60944).abs() < 1e-5);
    }

    #[test]
    fn cross_entropy_peaked() {
        let logits = Tensor::from_vec(vec![0.0, 0.0, 60.0, 0.0, 0.0]);
        let target = Tensor::from_vec(vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        let l = softmax_cross_entropy(&logits, &target).unwrap();
        assert!(l.value >= 0.0 && l.value < 1e-20);
    }

    #[test]
    fn cross_entropy_minimum_is_target_entropy() {
        let t = [0.1, 0.2, 0.3, 0.4];
        let logits = Tensor::from_vec(t.iter().map(|p: &f64| p.ln() + 3.0).collect());
        let l = softmax_cross_entropy(&logits, &Tensor::from_vec(t.to_vec())).unwrap();
        let entropy: f64 = t.iter().map(|p| -p * p.ln()).sum();
        assert!((l.value - entropy).abs() < 1e-12);
        assert!(l.gradient.max_abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_rejects_non_distribution() {
        let logits = Tensor::zeros(&[3]);
        assert!(matches!(
            softmax_cross_entropy(&logits, &Tensor::from_vec(vec![0.5, 0.5, 0.5])),
            Err(Error::NotADistribution(_))
        ));
        assert!(matches!(
            softmax_cross_entropy(&logits, &Tensor::from_vec(vec![1.5, -0.5, 0.0])),
            Err(Error::NotADistribution(_))
        ));
    }

    #[test]
    fn bce_examples() {
        let ln2 = 2f64.ln();
        assert!((binary_cross_entropy(0.0, true).value - ln2).abs() < 1e-15);
        assert!((binary_cross_entropy(0.0, false).value - ln2).abs() < 1e-15);
        assert!((binary_cross_entropy(0.0, true).value - std::f64::consts::LN_2).abs() < 1e-12);

        for (logit, label) in [(-500.0, true), (500.0, false), (500.0, true), (-500.0, false)] {
            let l = binary_cross_entropy(logit, label);
            assert!(l.value.is_finite() && l.value >= 0.0, "{logit} {label}: {}", l.value);
            assert!(l.gradient.is_finite());
        }
        assert!((binary_cross_entropy(-500.0, true).value - 500.0).abs() < 1e-9);
    }
}
