use super::NnError;

const P_MIN: f64 = 1e-7;
const P_MAX: f64 = 1.0 - 1e-7;

fn check(predictions: &[f64], labels: &[f64]) -> Result<(), NnError> {
    if predictions.len() != labels.len() || predictions.is_empty() {
        return Err(NnError::ShapeMismatch {
            expected: vec![predictions.len().max(1)],
            got: vec![labels.len()],
        });
    }
    if let Some(&y) = labels.iter().find(|y| !(0.0..=1.0).contains(*y)) {
        return Err(NnError::InvalidProbability(y));
    }
    Ok(())
}

/// Binary cross-entropy `-mean(y ln p + (1-y) ln(1-p))`, `p` clamped to
/// `[1e-7, 1 - 1e-7]`.
pub fn bce_loss(predictions: &[f64], labels: &[f64]) -> Result<f64, NnError> {
    check(predictions, labels)?;
    let n = predictions.len() as f64;
    let total: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(P_MIN, P_MAX);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / n)
}

/// Gradient of [`bce_loss`] with respect to each prediction. Zero where the
/// clamp is active.
pub fn bce_grad(predictions: &[f64], labels: &[f64]) -> Result<Vec<f64>, NnError> {
    check(predictions, labels)?;
    let n = predictions.len() as f64;
    Ok(predictions
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            if !(P_MIN..=P_MAX).contains(&p) {
                0.0
            } else {
                (-(y / p) + (1.0 - y) / (1.0 - p)) / n
            }
        })
        .collect())
}

/// Gradient of the BCE of `sigmoid(z)` with respect to the logit `z`,
/// `(p - y) / n`. Used in training so saturated probabilities still carry a
/// signal.
pub fn bce_grad_wrt_logits(predictions: &[f64], labels: &[f64]) -> Result<Vec<f64>, NnError> {
    check(predictions, labels)?;
    let n = predictions.len() as f64;
    Ok(predictions
        .iter()
        .zip(labels)
        .map(|(&p, &y)| (p - y) / n)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_probability_is_ln2() {
        let l = bce_loss(&[0.5], &[1.0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((l - 0.693147).abs() < 1e-6);
    }

    #[test]
    fn clamps_extremes() {
        let l = bce_loss(&[0.0], &[1.0]).unwrap();
        assert!((l - (-(1e-7f64).ln())).abs() < 1e-9);
        assert_eq!(bce_grad(&[0.0], &[1.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn errors() {
        assert_eq!(bce_loss(&[0.5], &[1.5]), Err(NnError::InvalidProbability(1.5)));
        assert!(matches!(bce_loss(&[0.5, 0.1], &[1.0]), Err(NnError::ShapeMismatch { .. })));
    }

    #[test]
    fn logit_gradient_matches_chain_rule() {
        let (p, y) = (0.3, 1.0);
        let via_chain = bce_grad(&[p], &[y]).unwrap()[0] * p * (1.0 - p);
        let direct = bce_grad_wrt_logits(&[p], &[y]).unwrap()[0];
        assert!((via_chain - direct).abs() < 1e-15);
    }
}
