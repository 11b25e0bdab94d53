//! Decision learners: oblique trees, bagged forests, gradient boosting, and
//! plain least-squares regression onto one-hot labels. All of them consume a
//! row-major feature matrix and share one combination rule for aggregating
//! member outputs into a final decision vector.

pub mod boost;
pub mod llsr;
pub mod tree;

mod forest;
pub use forest::slm_forest_fit;

use crate::error::{GlError, Result};
use tree::SlmTree;

/// What the learner predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeTask {
    Classification { num_classes: usize },
    Regression,
}

/// How member outputs are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombineMode {
    /// Each member votes its argmax; the output is one-hot at the modal
    /// class (ties to the lowest class index). Weights are ignored.
    MajorityVote,
    /// Unweighted elementwise mean.
    Mean,
    /// `sum(w_i * d_i) / sum(w_i)`.
    WeightedSum,
}

/// Index of the largest element, ties to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Merge equal-length member decision vectors into one.
pub fn combine_decisions(
    mode: CombineMode,
    weights: &[f64],
    outputs: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if outputs.is_empty() {
        return Err(GlError::Dimension("no member outputs to combine".into()));
    }
    let m = outputs[0].len();
    if m == 0 {
        return Err(GlError::Dimension("empty decision vectors".into()));
    }
    for (i, o) in outputs.iter().enumerate() {
        if o.len() != m {
            return Err(GlError::Dimension(format!(
                "member {i} emits {} values, expected {m}",
                o.len()
            )));
        }
    }
    if weights.len() != outputs.len() {
        return Err(GlError::Dimension(format!(
            "{} weights for {} members",
            weights.len(),
            outputs.len()
        )));
    }
    match mode {
        CombineMode::MajorityVote => {
            let mut votes = vec![0usize; m];
            for o in outputs {
                votes[argmax(o)] += 1;
            }
            let mut best = 0;
            for (i, &v) in votes.iter().enumerate().skip(1) {
                if v > votes[best] {
                    best = i;
                }
            }
            let mut out = vec![0.0; m];
            out[best] = 1.0;
            Ok(out)
        }
        CombineMode::Mean => {
            let mut out = vec![0.0; m];
            for o in outputs {
                for (acc, &v) in out.iter_mut().zip(o) {
                    *acc += v;
                }
            }
            let n = outputs.len() as f64;
            for acc in out.iter_mut() {
                *acc /= n;
            }
            Ok(out)
        }
        CombineMode::WeightedSum => {
            let total: f64 = weights.iter().sum();
            if total <= 0.0 {
                return Err(GlError::Config(format!(
                    "weighted sum needs positive total weight, got {total}"
                )));
            }
            let mut out = vec![0.0; m];
            for (o, &w) in outputs.iter().zip(weights) {
                for (acc, &v) in out.iter_mut().zip(o) {
                    *acc += w * v;
                }
            }
            for acc in out.iter_mut() {
                *acc /= total;
            }
            Ok(out)
        }
    }
}

/// Structural metadata of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub enum EnsembleKind {
    /// A single tree wrapped as a one-member ensemble.
    Single,
    Forest {
        bootstrap: bool,
    },
    /// Members are laid out round-major: `rounds x num_classes` regression
    /// trees on the softmax residuals.
    Boost {
        num_classes: usize,
        shrinkage: f64,
        rounds_completed: usize,
        early_stopped: bool,
        /// Training log-loss before any round, then after each round.
        train_losses: Vec<f64>,
    },
}

/// A weighted collection of trees plus the rule for merging their outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionEnsemble {
    pub task: TreeTask,
    pub members: Vec<SlmTree>,
    pub weights: Vec<f64>,
    pub mode: CombineMode,
    pub kind: EnsembleKind,
}

impl DecisionEnsemble {
    pub fn single(tree: SlmTree) -> Self {
        let task = tree.task;
        let mode = match task {
            TreeTask::Classification { .. } => CombineMode::MajorityVote,
            TreeTask::Regression => CombineMode::Mean,
        };
        Self {
            task,
            members: vec![tree],
            weights: vec![1.0],
            mode,
            kind: EnsembleKind::Single,
        }
    }

    pub fn num_features(&self) -> usize {
        self.members.first().map_or(0, |t| t.num_features)
    }

    /// The ensemble's decision vector for one feature row: class scores for
    /// classification (a probability-like vector, or raw additive scores for
    /// boosting), a singleton `[value]` for regression.
    pub fn decision(&self, row: &[f64]) -> Result<Vec<f64>> {
        if let EnsembleKind::Boost {
            num_classes,
            shrinkage,
            ..
        } = &self.kind
        {
            // boosting accumulates raw score increments; they are not
            // probability vectors, so no combine-time renormalization
            let c = *num_classes;
            let mut scores = vec![0.0; c];
            for (i, tree) in self.members.iter().enumerate() {
                let class = i % c;
                scores[class] += shrinkage * tree.predict_value(row)?;
            }
            return Ok(scores);
        }
        let outputs: Vec<Vec<f64>> = self
            .members
            .iter()
            .map(|t| match self.task {
                TreeTask::Classification { .. } => t.predict_probs(row),
                TreeTask::Regression => t.predict_value(row).map(|v| vec![v]),
            })
            .collect::<Result<_>>()?;
        combine_decisions(self.mode, &self.weights, &outputs)
    }

    pub fn predict_class(&self, row: &[f64]) -> Result<usize> {
        match self.task {
            TreeTask::Classification { .. } => Ok(argmax(&self.decision(row)?)),
            TreeTask::Regression => Err(GlError::Config(
                "class prediction requested from a regression ensemble".into(),
            )),
        }
    }

    pub fn predict_value(&self, row: &[f64]) -> Result<f64> {
        match self.task {
            TreeTask::Regression => Ok(self.decision(row)?[0]),
            TreeTask::Classification { .. } => Err(GlError::Config(
                "value prediction requested from a classification ensemble".into(),
            )),
        }
    }

    /// Stored floating-point values across all members and weights.
    pub fn num_parameters(&self) -> u64 {
        let members: u64 = self.members.iter().map(|t| t.num_parameters()).sum();
        members + self.weights.len() as u64
    }
}

/// Any decision learner the training workflow can fit, behind one
/// prediction surface.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    Llsr(llsr::LlsrModel),
    Tree(SlmTree),
    Forest(DecisionEnsemble),
    Boost(DecisionEnsemble),
}

impl Predictor {
    pub fn tag(&self) -> &'static str {
        match self {
            Predictor::Llsr(_) => "llsr",
            Predictor::Tree(_) => "tree",
            Predictor::Forest(_) => "forest",
            Predictor::Boost(_) => "boost",
        }
    }

    pub fn num_features(&self) -> usize {
        match self {
            Predictor::Llsr(m) => m.num_features,
            Predictor::Tree(t) => t.num_features,
            Predictor::Forest(e) | Predictor::Boost(e) => e.num_features(),
        }
    }

    pub fn is_classifier(&self) -> bool {
        match self {
            Predictor::Llsr(_) | Predictor::Boost(_) => true,
            Predictor::Tree(t) => matches!(t.task, TreeTask::Classification { .. }),
            Predictor::Forest(e) => matches!(e.task, TreeTask::Classification { .. }),
        }
    }

    /// Number of classes for classifiers, `None` for regressors.
    pub fn num_classes(&self) -> Option<usize> {
        match self {
            Predictor::Llsr(m) => Some(m.num_classes),
            Predictor::Tree(SlmTree {
                task: TreeTask::Classification { num_classes },
                ..
            }) => Some(*num_classes),
            Predictor::Forest(DecisionEnsemble {
                task: TreeTask::Classification { num_classes },
                ..
            }) => Some(*num_classes),
            Predictor::Boost(DecisionEnsemble {
                kind: EnsembleKind::Boost { num_classes, .. },
                ..
            }) => Some(*num_classes),
            _ => None,
        }
    }

    pub fn predict_class(&self, row: &[f64]) -> Result<usize> {
        match self {
            Predictor::Llsr(m) => m.predict_class(row),
            Predictor::Tree(t) => t.predict_class(row),
            Predictor::Forest(e) | Predictor::Boost(e) => e.predict_class(row),
        }
    }

    pub fn predict_value(&self, row: &[f64]) -> Result<f64> {
        match self {
            Predictor::Llsr(_) => Err(GlError::Config(
                "value prediction requested from a least-squares classifier".into(),
            )),
            Predictor::Tree(t) => t.predict_value(row),
            Predictor::Forest(e) | Predictor::Boost(e) => e.predict_value(row),
        }
    }

    /// Stored floating-point values.
    pub fn num_parameters(&self) -> u64 {
        match self {
            Predictor::Llsr(m) => m.weights.len() as u64,
            Predictor::Tree(t) => t.num_parameters(),
            Predictor::Forest(e) | Predictor::Boost(e) => e.num_parameters(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_sum_renormalizes_weights() {
        let outputs = vec![vec![0.2, 0.8], vec![0.6, 0.4]];
        let out = combine_decisions(CombineMode::WeightedSum, &[2.0, 1.0], &outputs).unwrap();
        assert!((out[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((out[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn majority_vote_is_one_hot_with_low_index_ties() {
        let e1 = vec![0.9, 0.1, 0.0];
        let e2 = vec![0.6, 0.3, 0.1];
        let e3 = vec![0.1, 0.8, 0.1];
        let out = combine_decisions(
            CombineMode::MajorityVote,
            &[1.0; 3],
            &[e1.clone(), e2, e3.clone()],
        )
        .unwrap();
        assert_eq!(out, vec![1.0, 0.0, 0.0]);
        // a 1-1 tie between classes 0 and 1 resolves to class 0
        let tied = combine_decisions(CombineMode::MajorityVote, &[1.0; 2], &[e1, e3]).unwrap();
        assert_eq!(tied, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn mean_averages_elementwise() {
        let out = combine_decisions(
            CombineMode::Mean,
            &[1.0, 1.0],
            &[vec![1.0, 3.0], vec![3.0, 5.0]],
        )
        .unwrap();
        assert_eq!(out, vec![2.0, 4.0]);
    }

    #[test]
    fn mismatched_lengths_are_dimension_errors() {
        let bad = combine_decisions(
            CombineMode::Mean,
            &[1.0, 1.0],
            &[vec![1.0, 2.0], vec![1.0]],
        );
        assert!(matches!(bad, Err(GlError::Dimension(_))));
        assert!(combine_decisions(CombineMode::Mean, &[], &[]).is_err());
        assert!(
            combine_decisions(CombineMode::WeightedSum, &[0.0], &[vec![1.0]]).is_err(),
            "zero total weight must be rejected"
        );
    }

    #[test]
    fn argmax_is_invariant_under_positive_rescaling() {
        let outputs = vec![vec![0.1, 0.6, 0.3], vec![0.2, 0.5, 0.3]];
        for mode in [CombineMode::Mean, CombineMode::WeightedSum] {
            let base = combine_decisions(mode, &[1.0, 2.0], &outputs).unwrap();
            for scale in [0.01, 3.0, 1000.0] {
                let scaled: Vec<Vec<f64>> = outputs
                    .iter()
                    .map(|o| o.iter().map(|v| v * scale).collect())
                    .collect();
                let out = combine_decisions(mode, &[1.0, 2.0], &scaled).unwrap();
                assert_eq!(argmax(&out), argmax(&base));
            }
        }
    }
}
