//! Additive boosting for classification. Each round fits one regression
//! tree per class to the softmax residuals of the current scores and adds a
//! shrunken copy of its predictions. Training log-loss is tracked so a
//! diverging run stops itself.

use rayon::prelude::*;

use super::tree::{slm_tree_fit, SlmOptions, SlmTree, TreeTargets};
use super::{CombineMode, DecisionEnsemble, EnsembleKind, TreeTask};
use crate::error::{GlError, Result};
use crate::rng::derive_seed;

fn softmax_into(scores: &[f64], out: &mut [f64]) {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &s) in out.iter_mut().zip(scores) {
        *o = (s - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

fn log_loss(scores: &[f64], labels: &[usize], num_classes: usize) -> f64 {
    let n = labels.len();
    let mut probs = vec![0.0; num_classes];
    let mut total = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        softmax_into(&scores[i * num_classes..(i + 1) * num_classes], &mut probs);
        total -= probs[l].max(1e-300).ln();
    }
    total / n as f64
}

/// True when the last three recorded losses each increased over their
/// predecessor — the signal that training has started to diverge.
pub fn should_stop(losses: &[f64]) -> bool {
    let k = losses.len();
    if k < 4 {
        return false;
    }
    (k - 3..k).all(|i| losses[i] > losses[i - 1])
}

/// Boost `rounds` rounds of per-class residual trees with learning rate
/// `shrinkage`. Stops early (and flags it) on three straight loss increases.
pub fn slm_boost_fit(
    data: &[f64],
    num_features: usize,
    labels: &[usize],
    options: &SlmOptions,
    rounds: usize,
    shrinkage: f64,
    seed: u64,
) -> Result<DecisionEnsemble> {
    if rounds == 0 {
        return Err(GlError::Config("need at least one boosting round".into()));
    }
    if !shrinkage.is_finite() || shrinkage < 0.0 {
        return Err(GlError::Config(format!(
            "shrinkage must be finite and non-negative, got {shrinkage}"
        )));
    }
    if num_features == 0 {
        return Err(GlError::Dimension("need at least one feature".into()));
    }
    if data.len() % num_features != 0 {
        return Err(GlError::Dimension(format!(
            "{} values do not tile rows of {num_features} features",
            data.len()
        )));
    }
    let n = data.len() / num_features;
    if labels.len() != n {
        return Err(GlError::Dimension(format!(
            "{n} rows vs {} labels",
            labels.len()
        )));
    }
    let num_classes = labels.iter().max().map_or(0, |&c| c + 1);
    if num_classes < 2 {
        return Err(GlError::Config(
            "boosting needs at least two classes".into(),
        ));
    }

    let mut scores = vec![0.0; n * num_classes];
    let mut losses = vec![log_loss(&scores, labels, num_classes)];
    let mut members: Vec<SlmTree> = Vec::with_capacity(rounds * num_classes);
    let mut early_stopped = false;
    let mut rounds_completed = 0;

    let mut probs = vec![0.0; n * num_classes];
    for t in 0..rounds {
        for i in 0..n {
            let row = &scores[i * num_classes..(i + 1) * num_classes];
            let out = &mut probs[i * num_classes..(i + 1) * num_classes];
            softmax_into(row, out);
        }
        // the round's trees all regress against the same probability
        // snapshot, so the classes can fit in parallel
        let round_trees: Vec<SlmTree> = (0..num_classes)
            .into_par_iter()
            .map(|c| {
                let residuals: Vec<f64> = labels
                    .iter()
                    .enumerate()
                    .map(|(i, &l)| {
                        let hit = if l == c { 1.0 } else { 0.0 };
                        hit - probs[i * num_classes + c]
                    })
                    .collect();
                slm_tree_fit(
                    data,
                    num_features,
                    TreeTargets::Values(&residuals),
                    options,
                    derive_seed(seed, (t * num_classes + c + 1) as u64),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        for (c, tree) in round_trees.iter().enumerate() {
            for i in 0..n {
                let row = &data[i * num_features..(i + 1) * num_features];
                scores[i * num_classes + c] += shrinkage * tree.predict_value(row)?;
            }
        }
        members.extend(round_trees);
        rounds_completed = t + 1;
        losses.push(log_loss(&scores, labels, num_classes));
        if should_stop(&losses) {
            early_stopped = true;
            break;
        }
    }

    let weights = vec![shrinkage; members.len()];
    Ok(DecisionEnsemble {
        task: TreeTask::Classification { num_classes },
        members,
        weights,
        mode: CombineMode::WeightedSum,
        kind: EnsembleKind::Boost {
            num_classes,
            shrinkage,
            rounds_completed,
            early_stopped,
            train_losses: losses,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use rand::Rng;

    fn three_blobs(per_class: usize, seed: u64) -> (Vec<f64>, Vec<usize>) {
        let centers = [(0.0, 0.0), (4.0, 0.0), (0.0, 4.0)];
        let mut rng = seeded_rng(seed);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..per_class {
            for (c, &(cx, cy)) in centers.iter().enumerate() {
                data.push(cx + rng.gen_range(-0.6..0.6));
                data.push(cy + rng.gen_range(-0.6..0.6));
                labels.push(c);
            }
        }
        (data, labels)
    }

    #[test]
    fn divergence_guard_needs_three_straight_increases() {
        assert!(!should_stop(&[1.0]));
        assert!(!should_stop(&[1.0, 2.0, 3.0]));
        assert!(should_stop(&[1.0, 2.0, 3.0, 4.0]));
        assert!(should_stop(&[5.0, 1.0, 2.0, 3.0, 4.0]));
        assert!(!should_stop(&[2.0, 1.0, 2.0, 3.0]));
        assert!(!should_stop(&[4.0, 3.0, 2.0, 1.0]));
        assert!(!should_stop(&[1.0, 2.0, 2.0, 3.0]));
    }

    #[test]
    fn first_round_reduces_training_loss() {
        let (data, labels) = three_blobs(25, 3);
        let opts = SlmOptions {
            max_depth: 3,
            min_leaf: 2,
            ..SlmOptions::default()
        };
        let b = slm_boost_fit(&data, 2, &labels, &opts, 5, 0.3, 17).unwrap();
        let EnsembleKind::Boost {
            train_losses,
            rounds_completed,
            early_stopped,
            ..
        } = &b.kind
        else {
            panic!("expected boost metadata");
        };
        assert!((train_losses[0] - (3.0f64).ln()).abs() < 1e-12);
        assert!(
            train_losses[1] < train_losses[0],
            "round 1 must cut the uniform-prior loss"
        );
        assert!(
            train_losses.windows(2).all(|w| w[1] <= w[0] + 1e-12),
            "separable blobs should never push the loss back up: {train_losses:?}"
        );
        assert!(!early_stopped);
        assert_eq!(*rounds_completed, 5);
        assert_eq!(b.members.len(), 15, "5 rounds x 3 classes");
        let correct = labels
            .iter()
            .enumerate()
            .filter(|&(i, &l)| b.predict_class(&data[2 * i..2 * i + 2]).unwrap() == l)
            .count();
        assert!(
            correct as f64 >= 0.98 * labels.len() as f64,
            "boosted blobs reached only {correct}/{}",
            labels.len()
        );
    }

    #[test]
    fn zero_shrinkage_changes_nothing() {
        let (data, labels) = three_blobs(10, 5);
        let opts = SlmOptions {
            max_depth: 2,
            min_leaf: 2,
            ..SlmOptions::default()
        };
        let b = slm_boost_fit(&data, 2, &labels, &opts, 4, 0.0, 1).unwrap();
        let EnsembleKind::Boost { train_losses, .. } = &b.kind else {
            panic!("expected boost metadata");
        };
        for &l in train_losses {
            assert!((l - (3.0f64).ln()).abs() < 1e-12, "loss moved to {l}");
        }
        // scores stay zero, so every prediction falls back to class 0
        assert_eq!(b.predict_class(&data[0..2]).unwrap(), 0);
    }

    #[test]
    fn depth_zero_single_round_predicts_the_prior() {
        let data = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let labels = vec![1, 1, 1, 0, 2, 1];
        let opts = SlmOptions {
            max_depth: 0,
            ..SlmOptions::default()
        };
        let b = slm_boost_fit(&data, 1, &labels, &opts, 1, 0.5, 0).unwrap();
        for x in [-10.0, 0.0, 2.5, 99.0] {
            assert_eq!(b.predict_class(&[x]).unwrap(), 1);
        }
    }

    #[test]
    fn deterministic_and_validates_input() {
        let (data, labels) = three_blobs(8, 7);
        let opts = SlmOptions {
            max_depth: 2,
            min_leaf: 2,
            ..SlmOptions::default()
        };
        let a = slm_boost_fit(&data, 2, &labels, &opts, 3, 0.2, 11).unwrap();
        let b = slm_boost_fit(&data, 2, &labels, &opts, 3, 0.2, 11).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            slm_boost_fit(&data, 2, &labels, &opts, 0, 0.2, 0),
            Err(GlError::Config(_))
        ));
        assert!(matches!(
            slm_boost_fit(&data, 2, &labels, &opts, 3, f64::NAN, 0),
            Err(GlError::Config(_))
        ));
        assert!(matches!(
            slm_boost_fit(&data, 2, &[0; 24], &opts, 3, 0.2, 0),
            Err(GlError::Config(_))
        ));
        assert!(matches!(
            slm_boost_fit(&data, 3, &labels, &opts, 3, 0.2, 0),
            Err(GlError::Dimension(_))
        ));
    }
}
