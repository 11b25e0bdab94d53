//! One oblique decision tree. Each node ranks the individual feature axes by
//! their grid-search split cost, keeps the best few as candidates, and adds a
//! batch of random unit directions spanned by those axes. The candidate with
//! the lowest constrained split cost becomes the node's hyperplane.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{argmax, TreeTask};
use crate::error::{GlError, Result};
use crate::features::{dft_scan, rft_scan};
use crate::linalg::dot;
use crate::rng::{derive_seed, seeded_rng};

/// Knobs for growing one tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlmOptions {
    /// Maximum number of split levels above the leaves; 0 grows a bare leaf.
    pub max_depth: usize,
    /// Minimum samples each side of every split must keep (at least 1).
    pub min_leaf: usize,
    /// Random oblique directions tried at each node.
    pub num_directions: usize,
    /// How many top-ranked axes stay in play: they are tried as axis-aligned
    /// splits and they span the random directions.
    pub axis_candidates: usize,
    /// Threshold grid resolution for every 1-d split search.
    pub bins: usize,
}

impl Default for SlmOptions {
    fn default() -> Self {
        Self {
            max_depth: 8,
            min_leaf: 4,
            num_directions: 64,
            axis_candidates: 8,
            bins: 16,
        }
    }
}

/// Supervision for tree growth: class labels or regression targets.
#[derive(Debug, Clone, Copy)]
pub enum TreeTargets<'a> {
    Classes(&'a [usize]),
    Values(&'a [f64]),
}

impl TreeTargets<'_> {
    pub fn len(&self) -> usize {
        match self {
            TreeTargets::Classes(l) => l.len(),
            TreeTargets::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Outcome of one node's split search.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitChoice {
    /// Unit direction in the full feature space; zero outside the node's
    /// candidate axes. Samples with `dot(direction, x) < threshold` go left.
    pub direction: Vec<f64>,
    pub threshold: f64,
    /// Weighted impurity after the split: class entropy in bits for
    /// classification, side MSE for regression.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LeafValue {
    /// Class frequencies of the training samples that reached the leaf.
    Probs(Vec<f64>),
    /// Mean target of the training samples that reached the leaf.
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SlmNode {
    Split {
        direction: Vec<f64>,
        threshold: f64,
        cost: f64,
        left: Box<SlmNode>,
        right: Box<SlmNode>,
    },
    Leaf {
        value: LeafValue,
        count: usize,
    },
}

impl SlmNode {
    fn depth(&self) -> usize {
        match self {
            SlmNode::Leaf { .. } => 0,
            SlmNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn leaves(&self) -> usize {
        match self {
            SlmNode::Leaf { .. } => 1,
            SlmNode::Split { left, right, .. } => left.leaves() + right.leaves(),
        }
    }

    fn num_values(&self) -> u64 {
        match self {
            SlmNode::Leaf { value, .. } => match value {
                LeafValue::Probs(p) => p.len() as u64,
                LeafValue::Value(_) => 1,
            },
            SlmNode::Split {
                direction,
                left,
                right,
                ..
            } => direction.len() as u64 + 2 + left.num_values() + right.num_values(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlmTree {
    pub task: TreeTask,
    pub num_features: usize,
    pub options: SlmOptions,
    pub seed: u64,
    pub root: SlmNode,
}

impl SlmTree {
    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn num_leaves(&self) -> usize {
        self.root.leaves()
    }

    /// Stored floating-point values: each split holds its direction,
    /// threshold, and cost; each leaf its value vector.
    pub fn num_parameters(&self) -> u64 {
        self.root.num_values()
    }

    fn leaf_for(&self, row: &[f64]) -> Result<&LeafValue> {
        if row.len() != self.num_features {
            return Err(GlError::Dimension(format!(
                "row has {} features, tree expects {}",
                row.len(),
                self.num_features
            )));
        }
        let mut node = &self.root;
        loop {
            match node {
                SlmNode::Leaf { value, .. } => return Ok(value),
                SlmNode::Split {
                    direction,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if dot(direction, row) < *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    /// Class frequency vector of the leaf the row lands in.
    pub fn predict_probs(&self, row: &[f64]) -> Result<Vec<f64>> {
        match self.leaf_for(row)? {
            LeafValue::Probs(p) => Ok(p.clone()),
            LeafValue::Value(_) => Err(GlError::Config(
                "class probabilities requested from a regression tree".into(),
            )),
        }
    }

    pub fn predict_class(&self, row: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_probs(row)?))
    }

    /// Mean-target prediction of the leaf the row lands in.
    pub fn predict_value(&self, row: &[f64]) -> Result<f64> {
        match self.leaf_for(row)? {
            LeafValue::Value(v) => Ok(*v),
            LeafValue::Probs(_) => Err(GlError::Config(
                "value prediction requested from a classification tree".into(),
            )),
        }
    }
}

struct FitCtx<'a> {
    data: &'a [f64],
    p: usize,
    targets: TreeTargets<'a>,
    num_classes: usize,
    options: SlmOptions,
    seed: u64,
}

fn validate(
    data: &[f64],
    num_features: usize,
    targets: &TreeTargets<'_>,
    options: &SlmOptions,
) -> Result<(usize, usize)> {
    if num_features == 0 {
        return Err(GlError::Dimension("need at least one feature".into()));
    }
    if data.len() % num_features != 0 {
        return Err(GlError::Dimension(format!(
            "{} values do not tile rows of {} features",
            data.len(),
            num_features
        )));
    }
    let n = data.len() / num_features;
    if n == 0 {
        return Err(GlError::Dimension("need at least one sample".into()));
    }
    if targets.len() != n {
        return Err(GlError::Dimension(format!(
            "{} rows vs {} targets",
            n,
            targets.len()
        )));
    }
    if options.min_leaf == 0 {
        return Err(GlError::Config("min_leaf must be at least 1".into()));
    }
    if options.bins < 2 {
        return Err(GlError::Config("need at least 2 bins".into()));
    }
    if options.axis_candidates == 0 {
        return Err(GlError::Config(
            "need at least one axis candidate per node".into(),
        ));
    }
    for (i, &v) in data.iter().enumerate() {
        if !v.is_finite() {
            return Err(GlError::Dimension(format!(
                "non-finite feature value at flat index {i}"
            )));
        }
    }
    let num_classes = match targets {
        TreeTargets::Classes(labels) => labels.iter().max().map_or(0, |&c| c + 1),
        TreeTargets::Values(values) => {
            for (i, &y) in values.iter().enumerate() {
                if !y.is_finite() {
                    return Err(GlError::Dimension(format!(
                        "non-finite target value at row {i}"
                    )));
                }
            }
            0
        }
    };
    Ok((n, num_classes))
}

fn range(values: &[f64]) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        if v < min {
            min = v;
        }
        if v > max {
            max = v;
        }
    }
    (min, max)
}

fn is_pure(ctx: &FitCtx<'_>, rows: &[usize]) -> bool {
    match ctx.targets {
        TreeTargets::Classes(labels) => {
            let first = labels[rows[0]];
            rows.iter().all(|&r| labels[r] == first)
        }
        TreeTargets::Values(values) => {
            let first = values[rows[0]];
            rows.iter().all(|&r| values[r] == first)
        }
    }
}

/// Scan one projected axis with the node's supervision; `None` when no
/// threshold keeps `min_side` samples on both sides.
fn scan_projection(
    ctx: &FitCtx<'_>,
    proj: &[f64],
    labels_sub: &[usize],
    values_sub: &[f64],
    min_side: usize,
) -> Option<(f64, f64)> {
    let (min, max) = range(proj);
    if min == max {
        return None;
    }
    match ctx.targets {
        TreeTargets::Classes(_) => dft_scan(
            proj,
            labels_sub,
            ctx.num_classes,
            ctx.options.bins,
            min_side,
            min,
            max,
        ),
        TreeTargets::Values(_) => {
            rft_scan(proj, values_sub, ctx.options.bins, min_side, min, max)
        }
    }
}

/// Best constrained split at one node, or `None` when the node is pure, too
/// small, or featureless. Also returns the winning projection of `rows` so
/// the caller partitions exactly the samples the scan scored.
///
/// Randomness depends only on the tree seed and the node's position (root 1,
/// children `2*id` and `2*id + 1`), so raising the depth limit expands leaves
/// without disturbing the splits a shallower run already chose.
fn search_subset(ctx: &FitCtx<'_>, rows: &[usize], node_id: u64) -> Option<(SplitChoice, Vec<f64>)> {
    let mut rng = seeded_rng(derive_seed(ctx.seed, node_id));
    let n = rows.len();
    let min_leaf = ctx.options.min_leaf;
    if n < 2 * min_leaf || is_pure(ctx, rows) {
        return None;
    }

    let mut labels_sub = Vec::new();
    let mut values_sub = Vec::new();
    match ctx.targets {
        TreeTargets::Classes(labels) => labels_sub.extend(rows.iter().map(|&r| labels[r])),
        TreeTargets::Values(values) => values_sub.extend(rows.iter().map(|&r| values[r])),
    }

    // rank every axis by its unconstrained split cost
    let mut buf = vec![0.0; n];
    let mut ranked: Vec<(f64, usize)> = Vec::new();
    for j in 0..ctx.p {
        for (slot, &r) in buf.iter_mut().zip(rows) {
            *slot = ctx.data[r * ctx.p + j];
        }
        if let Some((cost, _)) = scan_projection(ctx, &buf, &labels_sub, &values_sub, 0) {
            ranked.push((cost, j));
        }
    }
    if ranked.is_empty() {
        return None;
    }
    ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let support: Vec<usize> = ranked
        .iter()
        .take(ctx.options.axis_candidates)
        .map(|&(_, j)| j)
        .collect();

    // candidates in a fixed order: the ranked axes, then the random
    // directions; ties keep the earliest candidate
    let mut best: Option<(f64, f64, Vec<f64>, Vec<f64>)> = None;
    let mut consider = |cost: f64, thr: f64, weights: &[f64], proj: &[f64]| {
        if best.as_ref().map_or(true, |b| cost < b.0) {
            best = Some((cost, thr, weights.to_vec(), proj.to_vec()));
        }
    };

    for (k, &j) in support.iter().enumerate() {
        for (slot, &r) in buf.iter_mut().zip(rows) {
            *slot = ctx.data[r * ctx.p + j];
        }
        if let Some((cost, thr)) = scan_projection(ctx, &buf, &labels_sub, &values_sub, min_leaf) {
            let mut w = vec![0.0; support.len()];
            w[k] = 1.0;
            consider(cost, thr, &w, &buf);
        }
    }

    let d = support.len();
    let mut w = vec![0.0; d];
    for _ in 0..ctx.options.num_directions {
        for slot in w.iter_mut() {
            *slot = rng.sample(StandardNormal);
        }
        let norm = dot(&w, &w).sqrt();
        if norm <= 1e-12 {
            continue;
        }
        for slot in w.iter_mut() {
            *slot /= norm;
        }
        for (slot, &r) in buf.iter_mut().zip(rows) {
            *slot = support
                .iter()
                .zip(&w)
                .map(|(&j, &wk)| wk * ctx.data[r * ctx.p + j])
                .sum();
        }
        if let Some((cost, thr)) = scan_projection(ctx, &buf, &labels_sub, &values_sub, min_leaf) {
            consider(cost, thr, &w, &buf);
        }
    }

    best.map(|(cost, threshold, weights, proj)| {
        let mut direction = vec![0.0; ctx.p];
        for (&j, &wk) in support.iter().zip(&weights) {
            direction[j] = wk;
        }
        (
            SplitChoice {
                direction,
                threshold,
                cost,
            },
            proj,
        )
    })
}

fn make_leaf(ctx: &FitCtx<'_>, rows: &[usize]) -> SlmNode {
    let count = rows.len();
    let value = match ctx.targets {
        TreeTargets::Classes(labels) => {
            let mut probs = vec![0.0; ctx.num_classes];
            for &r in rows {
                probs[labels[r]] += 1.0;
            }
            for p in probs.iter_mut() {
                *p /= count as f64;
            }
            LeafValue::Probs(probs)
        }
        TreeTargets::Values(values) => {
            let sum: f64 = rows.iter().map(|&r| values[r]).sum();
            LeafValue::Value(sum / count as f64)
        }
    };
    SlmNode::Leaf { value, count }
}

fn build(ctx: &FitCtx<'_>, rows: &[usize], depth: usize, node_id: u64) -> SlmNode {
    if depth >= ctx.options.max_depth {
        return make_leaf(ctx, rows);
    }
    let Some((choice, proj)) = search_subset(ctx, rows, node_id) else {
        return make_leaf(ctx, rows);
    };
    let mut left_rows = Vec::new();
    let mut right_rows = Vec::new();
    for (&r, &v) in rows.iter().zip(&proj) {
        if v < choice.threshold {
            left_rows.push(r);
        } else {
            right_rows.push(r);
        }
    }
    debug_assert!(left_rows.len() >= ctx.options.min_leaf);
    debug_assert!(right_rows.len() >= ctx.options.min_leaf);
    let left = build(ctx, &left_rows, depth + 1, 2 * node_id);
    let right = build(ctx, &right_rows, depth + 1, 2 * node_id + 1);
    SlmNode::Split {
        direction: choice.direction,
        threshold: choice.threshold,
        cost: choice.cost,
        left: Box::new(left),
        right: Box::new(right),
    }
}

/// Search the best split of the whole dataset without growing a tree.
pub fn slm_split_search(
    data: &[f64],
    num_features: usize,
    targets: TreeTargets<'_>,
    options: &SlmOptions,
    seed: u64,
) -> Result<Option<SplitChoice>> {
    let (n, num_classes) = validate(data, num_features, &targets, options)?;
    let ctx = FitCtx {
        data,
        p: num_features,
        targets,
        num_classes,
        options: *options,
        seed,
    };
    let rows: Vec<usize> = (0..n).collect();
    Ok(search_subset(&ctx, &rows, 1).map(|(choice, _)| choice))
}

/// Grow one tree. Nodes stop splitting at `max_depth`, when they are pure,
/// or when no candidate direction can keep `min_leaf` samples on both sides.
pub fn slm_tree_fit(
    data: &[f64],
    num_features: usize,
    targets: TreeTargets<'_>,
    options: &SlmOptions,
    seed: u64,
) -> Result<SlmTree> {
    let (n, num_classes) = validate(data, num_features, &targets, options)?;
    fit_validated(data, num_features, targets, options, seed, n, num_classes)
}

/// Like [`slm_tree_fit`] on class labels, but with a caller-fixed class
/// count so that ensembles over label subsamples keep uniform probability
/// vectors even when a resample misses a class.
pub fn slm_tree_fit_classification(
    data: &[f64],
    num_features: usize,
    labels: &[usize],
    num_classes: usize,
    options: &SlmOptions,
    seed: u64,
) -> Result<SlmTree> {
    let targets = TreeTargets::Classes(labels);
    let (n, seen) = validate(data, num_features, &targets, options)?;
    if seen > num_classes {
        return Err(GlError::Dimension(format!(
            "labels reach class {} but only {num_classes} classes were declared",
            seen - 1
        )));
    }
    fit_validated(data, num_features, targets, options, seed, n, num_classes)
}

fn fit_validated(
    data: &[f64],
    num_features: usize,
    targets: TreeTargets<'_>,
    options: &SlmOptions,
    seed: u64,
    n: usize,
    num_classes: usize,
) -> Result<SlmTree> {
    let task = match targets {
        TreeTargets::Classes(_) => TreeTask::Classification { num_classes },
        TreeTargets::Values(_) => TreeTask::Regression,
    };
    let ctx = FitCtx {
        data,
        p: num_features,
        targets,
        num_classes,
        options: *options,
        seed,
    };
    let rows: Vec<usize> = (0..n).collect();
    let root = build(&ctx, &rows, 0, 1);
    Ok(SlmTree {
        task,
        num_features,
        options: *options,
        seed,
        root,
    })
}
