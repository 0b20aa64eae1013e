//! Margin-hinge classifier-discrepancy losses over Gaussian logit moments.
//!
//! With upper bounds `u_j = μ_j + α σ_j` and lower bounds `l_j = μ_j − α σ_j`,
//! both losses average `max(0, 1 + u_challenger − l_anchor)` over the batch.
//! They differ in the anchor: the label for [`smcd`], the top predicted class
//! for [`mcd`].

use thiserror::Error;

use crate::head::{argmax_rows, LogitStatsVar};
use crate::tensor::{TensorError, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("confidence multiplier must be finite and non-negative, got {0}")]
    BadAlpha(f64),
    #[error("{labels} labels for a batch of {batch}")]
    BatchMismatch { labels: usize, batch: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, LossError>;

/// How the unsupervised loss picks its anchor and challenger.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McdRule {
    /// Anchor `j* = argmax μ`; challenger is the largest upper bound over
    /// `j ≠ j*`.
    #[default]
    Anchor,
    /// Second-largest upper bound against the largest lower bound, each
    /// ranked independently.
    TopK,
}

fn bounds<'t>(stats: &LogitStatsVar<'t>, alpha: f64) -> Result<(Var<'t>, Var<'t>)> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(LossError::BadAlpha(alpha));
    }
    let spread = stats.sigma.mul_scalar(alpha)?;
    Ok((stats.mu.add(spread)?, stats.mu.sub(spread)?))
}

fn hinge_mean<'t>(challenger: Var<'t>, anchor: Var<'t>) -> Result<Var<'t>> {
    Ok(challenger.sub(anchor)?.add_scalar(1.0)?.relu()?.mean()?)
}

/// Label-anchored loss: `mean max(0, 1 + max_{j≠y} u_j − l_y)`.
pub fn smcd<'t>(stats: &LogitStatsVar<'t>, labels: &[usize], alpha_conf: f64) -> Result<Var<'t>> {
    let shape = stats.mu.shape();
    let (batch, classes) = (shape[0], shape[1]);
    if labels.len() != batch {
        return Err(LossError::BatchMismatch {
            labels: labels.len(),
            batch,
        });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(LossError::LabelOutOfRange { label, classes });
    }
    let (upper, lower) = bounds(stats, alpha_conf)?;
    let (challenger, _) = upper.max_last(Some(labels))?;
    hinge_mean(challenger, lower.pick(labels)?)
}

/// Unsupervised loss anchored at the model's own prediction.
pub fn mcd<'t>(stats: &LogitStatsVar<'t>, alpha_conf: f64, rule: McdRule) -> Result<Var<'t>> {
    match rule {
        McdRule::Anchor => {
            let anchors = stats.mu.with_value(argmax_rows);
            smcd(stats, &anchors, alpha_conf)
        }
        McdRule::TopK => {
            let (upper, lower) = bounds(stats, alpha_conf)?;
            let (_, first) = upper.max_last(None)?;
            let (second, _) = upper.max_last(Some(&first))?;
            let (top_lower, _) = lower.max_last(None)?;
            hinge_mean(second, top_lower)
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::gradcheck::{max_rel_err, numeric_grad};
    use crate::tensor::{Tape, Tensor};

    fn eval_smcd(mu: &[f64], sigma: &[f64], c: usize, labels: &[usize], alpha: f64) -> f64 {
        let tape = Tape::new();
        let b = mu.len() / c;
        let stats = LogitStatsVar {
            mu: tape.constant(Tensor::new(vec![b, c], mu.to_vec()).unwrap()),
            sigma: tape.constant(Tensor::new(vec![b, c], sigma.to_vec()).unwrap()),
        };
        smcd(&stats, labels, alpha).unwrap().item()
    }

    fn eval_mcd(mu: &[f64], sigma: &[f64], c: usize, alpha: f64, rule: McdRule) -> f64 {
        let tape = Tape::new();
        let b = mu.len() / c;
        let stats = LogitStatsVar {
            mu: tape.constant(Tensor::new(vec![b, c], mu.to_vec()).unwrap()),
            sigma: tape.constant(Tensor::new(vec![b, c], sigma.to_vec()).unwrap()),
        };
        mcd(&stats, alpha, rule).unwrap().item()
    }

    #[test]
    fn smcd_hand_examples() {
        assert_eq!(eval_smcd(&[1.0, 3.0, 0.0], &[0.1, 0.2, 0.1], 3, &[1], 1.96), 0.0);
        let v = eval_smcd(&[1.0, 1.2, 0.0], &[0.2, 0.1, 0.1], 3, &[1], 1.96);
        assert!((v - 1.388).abs() < 1e-9, "{v}");
        assert_eq!(eval_smcd(&[0.0, 1.0, -3.0], &[0.0; 3], 3, &[1], 1.96), 0.0);
    }

    #[test]
    fn mcd_hand_examples() {
        assert_eq!(eval_mcd(&[1.0, 3.0, 0.0], &[0.1, 0.2, 0.1], 3, 1.96, McdRule::Anchor), 0.0);
        let v = eval_mcd(&[2.0, 2.1], &[0.5, 0.5], 2, 1.96, McdRule::Anchor);
        assert!((v - 2.86).abs() < 1e-9, "{v}");
    }

    #[test]
    fn literal_rule_ranks_bounds_independently() {
        // Upper bounds (1.2, 2.5, 0.3); lower bounds (0.8, 1.5, -0.3).
        let v = eval_mcd(&[1.0, 2.0, 0.0], &[0.2, 0.5, 0.3], 3, 1.0, McdRule::TopK);
        assert!((v - (1.0 + 1.2 - 1.5)).abs() < 1e-12);
        // Two classes with equal means: the rules coincide.
        let mu = [2.0, 2.1];
        let sigma = [0.5, 0.5];
        let a = eval_mcd(&mu, &sigma, 2, 1.96, McdRule::Anchor);
        let b = eval_mcd(&mu, &sigma, 2, 1.96, McdRule::TopK);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let tape = Tape::new();
        let stats = LogitStatsVar {
            mu: tape.constant(Tensor::zeros(&[1, 3])),
            sigma: tape.constant(Tensor::zeros(&[1, 3])),
        };
        assert!(matches!(smcd(&stats, &[3], 1.0), Err(LossError::LabelOutOfRange { label: 3, .. })));
        assert!(matches!(smcd(&stats, &[0, 1], 1.0), Err(LossError::BatchMismatch { .. })));
        assert!(matches!(mcd(&stats, -1.0, McdRule::Anchor), Err(LossError::BadAlpha(_))));
    }

    #[test]
    fn hinge_kink_takes_zero_branch() {
        let tape = Tape::new();
        let mu = tape.param(Tensor::from_rows(&[vec![0.0, 1.0]]).unwrap());
        let sigma = tape.param(Tensor::zeros(&[1, 2]));
        let loss = smcd(&LogitStatsVar { mu, sigma }, &[1], 1.96).unwrap();
        assert_eq!(loss.item(), 0.0);
        tape.backward(loss).unwrap();
        assert!(tape.grad(mu).unwrap().data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (b, c) = (4, 3);
        let mu0 = Tensor::from_fn(&[b, c], |i| ((i * 7) % 5) as f64 * 0.3 - 0.4);
        let sigma0 = Tensor::from_fn(&[b, c], |i| 0.1 + ((i * 3) % 4) as f64 * 0.15);
        let labels = [0, 2, 1, 2];
        let run = |mu: &Tensor, sigma: &Tensor, which: u8| {
            let tape = Tape::new();
            let (m, s) = (tape.param(mu.clone()), tape.param(sigma.clone()));
            let stats = LogitStatsVar { mu: m, sigma: s };
            let loss = match which {
                0 => smcd(&stats, &labels, 1.96),
                1 => mcd(&stats, 1.96, McdRule::Anchor),
                _ => mcd(&stats, 1.96, McdRule::TopK),
            }
            .unwrap();
            let v = loss.item();
            tape.backward(loss).unwrap();
            (v, tape.grad(m).unwrap(), tape.grad(s).unwrap())
        };
        for which in 0..3 {
            let (_, gm, gs) = run(&mu0, &sigma0, which);
            let nm = numeric_grad(|x| run(x, &sigma0, which).0, &mu0, 1e-6);
            let ns = numeric_grad(|x| run(&mu0, x, which).0, &sigma0, 1e-6);
            assert!(max_rel_err(&gm, &nm, 1e-8) < 1e-5, "rule {which}");
            assert!(max_rel_err(&gs, &ns, 1e-8) < 1e-5, "rule {which}");
        }
    }

    #[test]
    fn supervision_can_demand_less_under_unequal_spread() {
        let (mu, sigma) = ([0.01, 0.0, 0.0], [1.0, 0.0, 5.0]);
        let s = eval_smcd(&mu, &sigma, 3, &[1], 1.96);
        let m = eval_mcd(&mu, &sigma, 3, 1.96, McdRule::Anchor);
        assert!(s < m);
    }

    proptest! {
        #[test]
        fn losses_are_non_negative_and_monotone_in_sigma(
            mu in prop::collection::vec(-3.0f64..3.0, 8),
            sigma in prop::collection::vec(0.0f64..2.0, 8),
            bump in 0.0f64..1.0,
            which in 0usize..8,
            labels in prop::collection::vec(0usize..4, 2),
        ) {
            let s = eval_smcd(&mu, &sigma, 4, &labels, 1.96);
            let m = eval_mcd(&mu, &sigma, 4, 1.96, McdRule::Anchor);
            prop_assert!(s >= 0.0 && m >= 0.0);
            let mut wider = sigma.clone();
            wider[which] += bump;
            prop_assert!(eval_smcd(&mu, &wider, 4, &labels, 1.96) >= s - 1e-12);
            prop_assert!(eval_mcd(&mu, &wider, 4, 1.96, McdRule::Anchor) >= m - 1e-12);
        }

        #[test]
        fn smcd_with_predicted_labels_equals_mcd(
            mu in prop::collection::vec(-3.0f64..3.0, 12),
            sigma in prop::collection::vec(0.0f64..2.0, 12),
        ) {
            let anchors = argmax_rows(&Tensor::new(vec![3, 4], mu.clone()).unwrap());
            let s = eval_smcd(&mu, &sigma, 4, &anchors, 1.96);
            let m = eval_mcd(&mu, &sigma, 4, 1.96, McdRule::Anchor);
            prop_assert!((s - m).abs() < 1e-12);
        }

        #[test]
        fn supervision_never_demands_less_at_equal_spread(
            mu in prop::collection::vec(-3.0f64..3.0, 4),
            spread in 0.0f64..2.0,
            label in 0usize..4,
        ) {
            // With one σ per row any label's hinge dominates the anchor's.
            // Unequal σ can break this, see the counterexample test below.
            let s = eval_smcd(&mu, &[spread; 4], 4, &[label], 1.96);
            let m = eval_mcd(&mu, &[spread; 4], 4, 1.96, McdRule::Anchor);
            prop_assert!(s >= m - 1e-12);
        }
    }
}
