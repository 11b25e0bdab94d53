//! Bagged ensembles of oblique trees. Each tree sees its own bootstrap
//! resample (or the full data when bagging is off) and draws its own split
//! directions; classification forests vote, regression forests average.

use rayon::prelude::*;

use super::tree::{slm_tree_fit, slm_tree_fit_classification, SlmOptions, SlmTree, TreeTargets};
use super::{CombineMode, DecisionEnsemble, EnsembleKind, TreeTask};
use crate::error::{GlError, Result};
use crate::rng::{derive_seed, seeded_rng};
use rand::Rng;

fn fit_member(
    data: &[f64],
    num_features: usize,
    targets: TreeTargets<'_>,
    num_classes: usize,
    options: &SlmOptions,
    seed: u64,
) -> Result<SlmTree> {
    match targets {
        TreeTargets::Classes(labels) => {
            slm_tree_fit_classification(data, num_features, labels, num_classes, options, seed)
        }
        TreeTargets::Values(_) => slm_tree_fit(data, num_features, targets, options, seed),
    }
}

/// Fit `num_trees` trees. Tree `t` draws its bootstrap rows from one seed
/// stream and its split directions from another, so the forest is fully
/// reproducible and trees stay independent of each other.
pub fn slm_forest_fit(
    data: &[f64],
    num_features: usize,
    targets: TreeTargets<'_>,
    options: &SlmOptions,
    num_trees: usize,
    bootstrap: bool,
    seed: u64,
) -> Result<DecisionEnsemble> {
    if num_trees == 0 {
        return Err(GlError::Config("need at least one tree".into()));
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
    if targets.len() != n {
        return Err(GlError::Dimension(format!(
            "{n} rows vs {} targets",
            targets.len()
        )));
    }
    let num_classes = match targets {
        TreeTargets::Classes(labels) => labels.iter().max().map_or(0, |&c| c + 1),
        TreeTargets::Values(_) => 0,
    };

    let members: Vec<SlmTree> = (0..num_trees)
        .into_par_iter()
        .map(|t| {
            let tree_seed = derive_seed(seed, (2 * t + 1) as u64);
            if !bootstrap {
                return fit_member(data, num_features, targets, num_classes, options, tree_seed);
            }
            let mut rng = seeded_rng(derive_seed(seed, (2 * t) as u64));
            let mut rdata = Vec::with_capacity(data.len());
            let mut rlabels = Vec::new();
            let mut rvalues = Vec::new();
            for _ in 0..n {
                let r = rng.gen_range(0..n);
                rdata.extend_from_slice(&data[r * num_features..(r + 1) * num_features]);
                match targets {
                    TreeTargets::Classes(labels) => rlabels.push(labels[r]),
                    TreeTargets::Values(values) => rvalues.push(values[r]),
                }
            }
            let resampled = match targets {
                TreeTargets::Classes(_) => TreeTargets::Classes(rlabels.as_slice()),
                TreeTargets::Values(_) => TreeTargets::Values(rvalues.as_slice()),
            };
            fit_member(&rdata, num_features, resampled, num_classes, options, tree_seed)
        })
        .collect::<Result<Vec<_>>>()?;

    let (task, mode) = match targets {
        TreeTargets::Classes(_) => (
            TreeTask::Classification { num_classes },
            CombineMode::MajorityVote,
        ),
        TreeTargets::Values(_) => (TreeTask::Regression, CombineMode::Mean),
    };
    Ok(DecisionEnsemble {
        task,
        members,
        weights: vec![1.0; num_trees],
        mode,
        kind: EnsembleKind::Forest { bootstrap },
    })
}
