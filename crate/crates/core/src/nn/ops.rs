//! Scalar primitives shared by the trainers.

use crate::error::{Error, Result};

/// Max-shifted log-sum-exp.
pub fn logsumexp(row: &[f64]) -> Result<f64> {
    if row.is_empty() {
        return Err(Error::contract("logsumexp of an empty row"));
    }
    Ok(logsumexp_unchecked(row))
}

pub(crate) fn logsumexp_unchecked(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::INFINITY {
        return max;
    }
    let sum: f64 = row.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = row.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// 0.5 r² inside `[-delta, delta]`, linear with slope `delta` outside.
pub fn huber(residual: f64, delta: f64) -> f64 {
    let a = residual.abs();
    if a <= delta {
        0.5 * residual * residual
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// d huber / d residual.
pub fn huber_grad(residual: f64, delta: f64) -> f64 {
    residual.clamp(-delta, delta)
}

/// Cross-entropy of `softmax(logits)` against `label`, with its gradient
/// with respect to the logits.
pub fn softmax_xent(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::contract(format!(
            "label {label} out of range for {} logits",
            logits.len()
        )));
    }
    let loss = logsumexp_unchecked(logits) - logits[label];
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn logsumexp_examples() {
        let v = 1.7;
        assert!((logsumexp(&[v, v, v]).unwrap() - (v + 3f64.ln())).abs() < 1e-12);
        assert!((logsumexp(&[0.0, 0.0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        // ln(1 + e^-1000) underflows to 0 in any precision we care about.
        assert_eq!(logsumexp(&[1000.0, 0.0]).unwrap(), 1000.0);
        assert!(logsumexp(&[]).is_err());
    }

    #[test]
    fn huber_examples() {
        assert_eq!(huber(0.0, 1.0), 0.0);
        assert_eq!(huber(1.0, 1.0), 0.5);
        assert_eq!(huber(3.0, 1.0), 2.5);
        assert_eq!(huber(-3.0, 1.0), 2.5);
        // continuous and once-differentiable at the knot
        let d = 0.7;
        let eps = 1e-9;
        assert!((huber(d - eps, d) - huber(d + eps, d)).abs() < 1e-8);
        assert_eq!(huber_grad(d, d), d);
        assert_eq!(huber_grad(5.0, d), d);
    }

    #[test]
    fn xent_examples() {
        let (loss, _) = softmax_xent(&[0.3; 5], 2).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);
        let (loss, _) = softmax_xent(&[10.0, -10.0], 0).unwrap();
        assert!((loss - (-20f64).exp()).abs() < 1e-15);
        assert!(softmax_xent(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn argmax_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.5, 0.5, 0.5]), 0);
    }

    proptest! {
        #[test]
        fn logsumexp_bounds(row in prop::collection::vec(-50.0f64..50.0, 1..40)) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = logsumexp(&row).unwrap();
            prop_assert!(lse >= max);
            prop_assert!(lse <= max + (row.len() as f64).ln() + 1e-12);
        }

        #[test]
        fn xent_grad_sums_to_zero(row in prop::collection::vec(-30.0f64..30.0, 1..20), pick in 0usize..20) {
            let label = pick % row.len();
            let (loss, grad) = softmax_xent(&row, label).unwrap();
            prop_assert!(loss >= 0.0);
            prop_assert!(grad.iter().sum::<f64>().abs() < 1e-12);
        }

        #[test]
        fn argmax_shift_invariant(row in prop::collection::vec(-5.0f64..5.0, 1..10), c in -100.0f64..100.0) {
            let shifted: Vec<f64> = row.iter().map(|x| x + c).collect();
            // shifting can merge near-ties through rounding; only compare when the gap is clear
            let best = argmax(&row);
            let gap = row.iter().enumerate().filter(|(i, _)| *i != best)
                .map(|(_, v)| row[best] - v).fold(f64::INFINITY, f64::min);
            if gap > 1e-9 {
                prop_assert_eq!(argmax(&shifted), best);
            }
        }
    }
}
