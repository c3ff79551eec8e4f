use crate::error::{Error, Result};

fn check(scores: &[f64], gold_index: usize, eta: f64) -> Result<()> {
    if scores.len() < 2 {
        return Err(Error::argument(format!(
            "margin loss needs at least 2 candidates, got {}",
            scores.len()
        )));
    }
    if gold_index >= scores.len() {
        return Err(Error::argument(format!(
            "gold index {gold_index} out of range for {} candidates",
            scores.len()
        )));
    }
    if eta.is_nan() || eta < 0.0 {
        return Err(Error::argument(format!("margin must be non-negative, got {eta}")));
    }
    Ok(())
}

/// `(1/n) Σ_{i≠gold} max(0, η − s_gold + s_i)`.
///
/// The sum runs over the `n − 1` distractors but is divided by `n`.
pub fn margin_loss(scores: &[f64], gold_index: usize, eta: f64) -> Result<f64> {
    check(scores, gold_index, eta)?;
    let gold = scores[gold_index];
    let sum: f64 = scores
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != gold_index)
        .map(|(_, &s)| (eta - gold + s).max(0.0))
        .sum();
    Ok(sum / scores.len() as f64)
}

/// Subgradient of [`margin_loss`] with respect to each score. A hinge at
/// exactly zero counts as inactive.
pub fn margin_loss_grad(scores: &[f64], gold_index: usize, eta: f64) -> Result<Vec<f64>> {
    check(scores, gold_index, eta)?;
    let n = scores.len() as f64;
    let gold = scores[gold_index];
    let mut grad = vec![0.0; scores.len()];
    for (i, &s) in scores.iter().enumerate() {
        if i != gold_index && eta - gold + s > 0.0 {
            grad[i] += 1.0 / n;
            grad[gold_index] -= 1.0 / n;
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let l = margin_loss(&[0.2, 0.1], 0, 0.5).unwrap();
        assert!((l - 0.2).abs() < 1e-15);
    }

    #[test]
    fn saturated_hinges() {
        assert_eq!(margin_loss(&[2.0, 1.0, 0.5], 0, 0.5).unwrap(), 0.0);
        assert_eq!(margin_loss(&[0.3, 0.1], 0, 0.0).unwrap(), 0.0);
        assert_eq!(margin_loss_grad(&[2.0, 1.0, 0.5], 0, 0.5).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn one_active_distractor() {
        assert_eq!(margin_loss_grad(&[0.2, 0.1], 0, 0.5).unwrap(), vec![-0.5, 0.5]);
        assert_eq!(margin_loss_grad(&[0.1, 0.2], 1, 0.5).unwrap(), vec![0.5, -0.5]);
    }

    #[test]
    fn argument_errors() {
        assert!(margin_loss(&[0.1], 0, 0.5).is_err());
        assert!(margin_loss(&[0.1, 0.2], 2, 0.5).is_err());
        assert!(margin_loss(&[0.1, 0.2], 0, -1.0).is_err());
        assert!(margin_loss_grad(&[0.1], 0, 0.5).is_err());
    }
}
