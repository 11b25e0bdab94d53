//! Supervised feature scoring and selection.
//!
//! Each feature column is scored independently by the best binary split it
//! admits on a uniform threshold grid: weighted class entropy (in bits) for
//! classification, weighted side MSE for regression. Lower cost means more
//! discriminant. Ranking sorts columns by cost and cuts the curve at an
//! elbow found by maximum distance from the chord, so the selected subset
//! needs no labels at prediction time — selection happens once during
//! training.

use crate::error::{GlError, Result};
use crate::linalg;
use crate::rng::{derive_seed, seeded_rng};
use rand::seq::SliceRandom;
use rayon::prelude::*;

/// Result of scoring one feature column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitScore {
    pub cost: f64,
    pub threshold: f64,
    /// Observed `(min, max)` of the column. The threshold lies strictly
    /// inside it unless the column is degenerate.
    pub range: (f64, f64),
    /// Set when the column was constant: no split exists, the cost is the
    /// whole set's impurity, and the threshold is the constant itself.
    pub degenerate: bool,
}

/// Access to feature columns, however the matrix is stored.
pub trait FeatureColumns: Sync {
    fn num_rows(&self) -> usize;
    fn num_columns(&self) -> usize;
    fn copy_column(&self, j: usize, out: &mut Vec<f64>);
}

/// Row-major `rows x cols` matrix view.
pub struct RowMatrix<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
}

impl<'a> RowMatrix<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { data, rows, cols }
    }
}

impl FeatureColumns for RowMatrix<'_> {
    fn num_rows(&self) -> usize {
        self.rows
    }

    fn num_columns(&self) -> usize {
        self.cols
    }

    fn copy_column(&self, j: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.rows).map(|i| self.data[i * self.cols + j]));
    }
}

pub(crate) fn scan_range(values: &[f64]) -> Result<(f64, f64)> {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(GlError::Dimension(format!(
                "non-finite feature value at row {i}"
            )));
        }
        if v < min {
            min = v;
        }
        if v > max {
            max = v;
        }
    }
    Ok((min, max))
}

/// The `bins - 1` candidate thresholds strictly inside `[min, max]`.
fn grid_thresholds(min: f64, max: f64, bins: usize) -> Vec<f64> {
    let w = max - min;
    (1..bins).map(|b| min + w * b as f64 / bins as f64).collect()
}

/// For each sample, the number of grid thresholds at or below it. A sample
/// with region `r` goes left of candidate `j` exactly when `r <= j`.
fn regions(values: &[f64], thresholds: &[f64]) -> Vec<usize> {
    values
        .iter()
        .map(|&x| thresholds.partition_point(|&t| t <= x))
        .collect()
}

fn entropy_bits(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Grid sweep for classification with a minimum side occupancy; `None` when
/// no candidate leaves both sides with at least `min_side` samples. The
/// values must be non-constant.
pub(crate) fn dft_scan(
    values: &[f64],
    labels: &[usize],
    num_classes: usize,
    bins: usize,
    min_side: usize,
    min: f64,
    max: f64,
) -> Option<(f64, f64)> {
    let n = values.len();
    let thresholds = grid_thresholds(min, max, bins);
    let region = regions(values, &thresholds);

    // class histogram per region, then sweep the grid accumulating the left side
    let mut hist = vec![0usize; bins * num_classes];
    for (&r, &l) in region.iter().zip(labels) {
        hist[r * num_classes + l] += 1;
    }
    let mut full = vec![0usize; num_classes];
    for &l in labels {
        full[l] += 1;
    }
    let mut left = vec![0usize; num_classes];
    let mut best: Option<(f64, f64)> = None;
    for (j, &t) in thresholds.iter().enumerate() {
        for c in 0..num_classes {
            left[c] += hist[j * num_classes + c];
        }
        let nl: usize = left.iter().sum();
        let nr = n - nl;
        if nl < min_side || nr < min_side {
            continue;
        }
        let right: Vec<usize> = full.iter().zip(&left).map(|(&f, &l)| f - l).collect();
        let cost = (nl as f64 / n as f64) * entropy_bits(&left, nl)
            + (nr as f64 / n as f64) * entropy_bits(&right, nr);
        if best.map_or(true, |(b, _)| cost < b) {
            best = Some((cost, t));
        }
    }
    best
}

/// Discriminant cost of one feature column for classification: the minimum
/// over the threshold grid of the split's weighted class entropy in bits.
/// Ties pick the lowest threshold.
pub fn dft_score(values: &[f64], labels: &[usize], bins: usize) -> Result<SplitScore> {
    if values.len() != labels.len() {
        return Err(GlError::Dimension(format!(
            "{} values vs {} labels",
            values.len(),
            labels.len()
        )));
    }
    if values.len() < 2 {
        return Err(GlError::Dimension("need at least two samples".into()));
    }
    if bins < 2 {
        return Err(GlError::Config("need at least 2 bins".into()));
    }
    let num_classes = labels.iter().max().map_or(0, |&c| c + 1);
    let mut full = vec![0usize; num_classes];
    for &l in labels {
        full[l] += 1;
    }
    if full.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(GlError::Config(
            "discriminant scoring needs at least two distinct classes".into(),
        ));
    }
    let (min, max) = scan_range(values)?;
    if min == max {
        return Ok(SplitScore {
            cost: entropy_bits(&full, values.len()),
            threshold: min,
            range: (min, max),
            degenerate: true,
        });
    }
    let (cost, threshold) = dft_scan(values, labels, num_classes, bins, 0, min, max)
        .expect("unconstrained grid always has a candidate");
    Ok(SplitScore {
        cost,
        threshold,
        range: (min, max),
        degenerate: false,
    })
}

/// Regression analogue: the minimum over the grid of the split's weighted
/// side MSE, with each side predicted by its own mean.
pub fn rft_score(values: &[f64], targets: &[f64], bins: usize) -> Result<SplitScore> {
    if values.len() != targets.len() {
        return Err(GlError::Dimension(format!(
            "{} values vs {} targets",
            values.len(),
            targets.len()
        )));
    }
    if values.len() < 2 {
        return Err(GlError::Dimension("need at least two samples".into()));
    }
    if bins < 2 {
        return Err(GlError::Config("need at least 2 bins".into()));
    }
    for (i, &y) in targets.iter().enumerate() {
        if !y.is_finite() {
            return Err(GlError::Dimension(format!(
                "non-finite target value at row {i}"
            )));
        }
    }
    let (min, max) = scan_range(values)?;
    let n = values.len() as f64;
    let full_sum: f64 = targets.iter().sum();
    let full_sq: f64 = targets.iter().map(|y| y * y).sum();
    let full_mse = (full_sq / n - (full_sum / n) * (full_sum / n)).max(0.0);
    if min == max {
        return Ok(SplitScore {
            cost: full_mse,
            threshold: min,
            range: (min, max),
            degenerate: true,
        });
    }
    let (cost, threshold) = rft_scan(values, targets, bins, 0, min, max)
        .expect("unconstrained grid always has a candidate");
    Ok(SplitScore {
        cost,
        threshold,
        range: (min, max),
        degenerate: false,
    })
}

/// Grid sweep for regression with a minimum side occupancy; `None` when no
/// candidate leaves both sides with at least `min_side` samples. The values
/// must be non-constant.
pub(crate) fn rft_scan(
    values: &[f64],
    targets: &[f64],
    bins: usize,
    min_side: usize,
    min: f64,
    max: f64,
) -> Option<(f64, f64)> {
    let n = values.len() as f64;
    let full_sum: f64 = targets.iter().sum();
    let full_sq: f64 = targets.iter().map(|y| y * y).sum();
    let thresholds = grid_thresholds(min, max, bins);
    let region = regions(values, &thresholds);

    let mut r_count = vec![0usize; bins];
    let mut r_sum = vec![0.0; bins];
    let mut r_sq = vec![0.0; bins];
    for (&r, &y) in region.iter().zip(targets) {
        r_count[r] += 1;
        r_sum[r] += y;
        r_sq[r] += y * y;
    }
    let side_mse = |count: usize, sum: f64, sq: f64| -> f64 {
        if count == 0 {
            return 0.0;
        }
        let m = sum / count as f64;
        (sq / count as f64 - m * m).max(0.0)
    };
    let mut best: Option<(f64, f64)> = None;
    let (mut nl, mut sl, mut ql) = (0usize, 0.0, 0.0);
    for (j, &t) in thresholds.iter().enumerate() {
        nl += r_count[j];
        sl += r_sum[j];
        ql += r_sq[j];
        let nr = values.len() - nl;
        if nl < min_side || nr < min_side {
            continue;
        }
        let cost = (nl as f64 / n) * side_mse(nl, sl, ql)
            + (nr as f64 / n) * side_mse(nr, full_sum - sl, full_sq - ql);
        if best.map_or(true, |(b, _)| cost < b) {
            best = Some((cost, t));
        }
    }
    best
}

/// Where to cut the sorted cost curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElbowMode {
    /// Smallest cut within 2% of the maximum chord distance.
    Early,
    /// Largest cut within 2% of the maximum chord distance.
    Late,
    /// Fixed fraction of the features: `ceil(q * P)`.
    Fraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ElbowResult {
    /// Number of features to keep (a boundary in `0..=P`).
    pub index: usize,
    /// Set when the curve carried no elbow (flat or linear) and the cut
    /// fell back to half the features.
    pub fallback: bool,
}

/// Find the cut point of an ascending cost curve: the point of maximum
/// perpendicular distance from the chord joining the first and last points.
pub fn detect_elbow(sorted_costs: &[f64], mode: ElbowMode) -> Result<ElbowResult> {
    let p = sorted_costs.len();
    if p == 0 {
        return Err(GlError::Dimension("empty cost curve".into()));
    }
    if let ElbowMode::Fraction(q) = mode {
        if !(q > 0.0 && q <= 1.0) {
            return Err(GlError::Config(format!(
                "elbow fraction must be in (0, 1], got {q}"
            )));
        }
        return Ok(ElbowResult {
            index: (q * p as f64).ceil() as usize,
            fallback: false,
        });
    }
    if p == 1 {
        return Ok(ElbowResult {
            index: 1,
            fallback: false,
        });
    }
    let c0 = sorted_costs[0];
    let c1 = sorted_costs[p - 1];
    let dx = (p - 1) as f64;
    let dy = c1 - c0;
    // unnormalized perpendicular distance: |dy * x - dx * (c - c0)|
    let mut dists = Vec::with_capacity(p);
    let mut max_d: f64 = 0.0;
    for (i, &c) in sorted_costs.iter().enumerate() {
        let d = (dy * i as f64 - dx * (c - c0)).abs();
        max_d = max_d.max(d);
        dists.push(d);
    }
    let tiny = 1e-12 * dx * (1.0 + c0.abs() + c1.abs());
    if max_d <= tiny {
        // flat or perfectly linear curve: no elbow to find
        return Ok(ElbowResult {
            index: (0.5 * p as f64).ceil() as usize,
            fallback: true,
        });
    }
    let cutoff = 0.98 * max_d;
    let pick = match mode {
        ElbowMode::Early => dists.iter().position(|&d| d >= cutoff),
        ElbowMode::Late => dists.iter().rposition(|&d| d >= cutoff),
        ElbowMode::Fraction(_) => unreachable!(),
    }
    .expect("max distance point exists");
    Ok(ElbowResult {
        index: pick + 1,
        fallback: false,
    })
}

/// What supervises the ranking: class labels or regression targets.
#[derive(Debug, Clone, Copy)]
pub enum RankTargets<'a> {
    Classes(&'a [usize]),
    Values(&'a [f64]),
}

/// Outcome of ranking every feature column.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRanking {
    /// Per-column split cost, in original column order.
    pub costs: Vec<f64>,
    /// Per-column best threshold, in original column order.
    pub thresholds: Vec<f64>,
    /// Per-column observed `(min, max)`, in original column order.
    pub ranges: Vec<(f64, f64)>,
    /// Per-column constant-feature flag.
    pub degenerate: Vec<bool>,
    /// Column indices sorted by ascending cost (ties by lower index).
    pub order: Vec<usize>,
    /// Number of selected features.
    pub elbow: usize,
    /// Whether the elbow came from the flat-curve fallback.
    pub elbow_fallback: bool,
    /// `order[..elbow]`: the selected columns.
    pub selected: Vec<usize>,
}

/// Score every column, sort by cost, and cut at the elbow.
pub fn rank_features(
    features: &dyn FeatureColumns,
    targets: RankTargets<'_>,
    bins: usize,
    mode: ElbowMode,
) -> Result<FeatureRanking> {
    let p = features.num_columns();
    if p == 0 {
        return Err(GlError::Dimension("no feature columns to rank".into()));
    }
    let n = features.num_rows();
    match targets {
        RankTargets::Classes(l) if l.len() != n => {
            return Err(GlError::Dimension(format!(
                "{} labels for {n} rows",
                l.len()
            )))
        }
        RankTargets::Values(t) if t.len() != n => {
            return Err(GlError::Dimension(format!(
                "{} targets for {n} rows",
                t.len()
            )))
        }
        _ => {}
    }
    let scores: Vec<Result<SplitScore>> = (0..p)
        .into_par_iter()
        .map_init(Vec::new, |buf, j| {
            features.copy_column(j, buf);
            match targets {
                RankTargets::Classes(labels) => dft_score(buf, labels, bins),
                RankTargets::Values(values) => rft_score(buf, values, bins),
            }
        })
        .collect();

    let mut costs = Vec::with_capacity(p);
    let mut thresholds = Vec::with_capacity(p);
    let mut ranges = Vec::with_capacity(p);
    let mut degenerate = Vec::with_capacity(p);
    for s in scores {
        let s = s?;
        costs.push(s.cost);
        thresholds.push(s.threshold);
        ranges.push(s.range);
        degenerate.push(s.degenerate);
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        costs[a]
            .partial_cmp(&costs[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let sorted_costs: Vec<f64> = order.iter().map(|&j| costs[j]).collect();
    let elbow = detect_elbow(&sorted_costs, mode)?;
    let selected = order[..elbow.index].to_vec();
    Ok(FeatureRanking {
        costs,
        thresholds,
        ranges,
        degenerate,
        order,
        elbow: elbow.index,
        elbow_fallback: elbow.fallback,
        selected,
    })
}

/// Label-assisted regression: per-class clustering into sub-clusters, then a
/// least-squares map from features onto the one-hot sub-cluster codes.
#[derive(Debug, Clone, PartialEq)]
pub struct LagModel {
    /// `num_features x (num_classes * clusters)` row-major map.
    pub matrix: Vec<f64>,
    pub num_features: usize,
    pub num_classes: usize,
    pub clusters_per_class: usize,
    /// Classes whose sample count was below the cluster count; their unused
    /// code columns stay identically zero.
    pub reduced_classes: Vec<usize>,
}

impl LagModel {
    pub fn output_dim(&self) -> usize {
        self.num_classes * self.clusters_per_class
    }

    /// Map a feature row onto the sub-cluster code space.
    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.num_features {
            return Err(GlError::Dimension(format!(
                "feature row of length {} does not match map input {}",
                row.len(),
                self.num_features
            )));
        }
        let m = self.output_dim();
        let mut out = vec![0.0; m];
        for (i, &x) in row.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(&self.matrix[i * m..(i + 1) * m]) {
                *o += x * w;
            }
        }
        Ok(out)
    }
}

/// Lloyd clustering with seeded init, at most 100 iterations, and 3 restarts
/// keeping the lowest inertia. Returns per-point assignments.
fn kmeans(points: &[f64], n: usize, d: usize, k: usize, seed: u64) -> Vec<usize> {
    debug_assert!(k >= 1 && k <= n);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for restart in 0..3 {
        let mut rng = seeded_rng(derive_seed(seed, restart));
        let mut idx: Vec<usize> = (0..n).collect();
        idx.partial_shuffle(&mut rng, k);
        let mut centroids: Vec<f64> = idx[..k]
            .iter()
            .flat_map(|&i| points[i * d..(i + 1) * d].iter().copied())
            .collect();
        let mut assign = vec![0usize; n];
        for _ in 0..100 {
            let mut changed = false;
            for i in 0..n {
                let pt = &points[i * d..(i + 1) * d];
                let mut best_c = 0;
                let mut best_dist = f64::INFINITY;
                for c in 0..k {
                    let cent = &centroids[c * d..(c + 1) * d];
                    let dist: f64 = pt
                        .iter()
                        .zip(cent)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    if dist < best_dist {
                        best_dist = dist;
                        best_c = c;
                    }
                }
                if assign[i] != best_c {
                    assign[i] = best_c;
                    changed = true;
                }
            }
            // rebuild centroids; an empty cluster steals the point farthest
            // from its centroid
            let mut counts = vec![0usize; k];
            let mut sums = vec![0.0; k * d];
            for i in 0..n {
                counts[assign[i]] += 1;
                for j in 0..d {
                    sums[assign[i] * d + j] += points[i * d + j];
                }
            }
            for c in 0..k {
                if counts[c] == 0 {
                    let (mut far_i, mut far_d) = (0usize, -1.0);
                    for i in 0..n {
                        if counts[assign[i]] <= 1 {
                            continue;
                        }
                        let cent = &centroids[assign[i] * d..(assign[i] + 1) * d];
                        let dist: f64 = points[i * d..(i + 1) * d]
                            .iter()
                            .zip(cent)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum();
                        if dist > far_d {
                            far_d = dist;
                            far_i = i;
                        }
                    }
                    counts[assign[far_i]] -= 1;
                    for j in 0..d {
                        sums[assign[far_i] * d + j] -= points[far_i * d + j];
                    }
                    assign[far_i] = c;
                    counts[c] = 1;
                    for j in 0..d {
                        sums[c * d + j] = points[far_i * d + j];
                    }
                    changed = true;
                }
            }
            for c in 0..k {
                for j in 0..d {
                    centroids[c * d + j] = sums[c * d + j] / counts[c] as f64;
                }
            }
            if !changed {
                break;
            }
        }
        let inertia: f64 = (0..n)
            .map(|i| {
                let cent = &centroids[assign[i] * d..(assign[i] + 1) * d];
                points[i * d..(i + 1) * d]
                    .iter()
                    .zip(cent)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .sum();
        if best.as_ref().map_or(true, |(b, _)| inertia < *b) {
            best = Some((inertia, assign));
        }
    }
    best.unwrap().1
}

/// Fit the label-assisted map: cluster each class into `clusters` groups and
/// least-squares the features onto the resulting one-hot codes.
pub fn lag_fit(
    features: &[f64],
    num_features: usize,
    labels: &[usize],
    clusters: usize,
    seed: u64,
) -> Result<LagModel> {
    if num_features == 0 || features.len() % num_features != 0 {
        return Err(GlError::Dimension(format!(
            "feature buffer of {} values does not tile width {num_features}",
            features.len()
        )));
    }
    let n = features.len() / num_features;
    if labels.len() != n {
        return Err(GlError::Dimension(format!(
            "{} labels for {n} feature rows",
            labels.len()
        )));
    }
    if clusters == 0 {
        return Err(GlError::Config("cluster count must be positive".into()));
    }
    if n == 0 {
        return Err(GlError::Dimension("no samples".into()));
    }
    let num_classes = labels.iter().max().unwrap() + 1;
    let m = num_classes * clusters;

    let mut codes = vec![0.0; n * m];
    let mut reduced_classes = Vec::new();
    for class in 0..num_classes {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            reduced_classes.push(class);
            continue;
        }
        let j_c = clusters.min(members.len());
        if j_c < clusters {
            reduced_classes.push(class);
        }
        let pts: Vec<f64> = members
            .iter()
            .flat_map(|&i| {
                features[i * num_features..(i + 1) * num_features]
                    .iter()
                    .copied()
            })
            .collect();
        let assign = if j_c == 1 {
            vec![0usize; members.len()]
        } else {
            kmeans(
                &pts,
                members.len(),
                num_features,
                j_c,
                derive_seed(seed, 1 + class as u64),
            )
        };
        for (&row, &cluster) in members.iter().zip(&assign) {
            codes[row * m + class * clusters + cluster] = 1.0;
        }
    }

    let matrix = linalg::min_norm_lstsq(features, &codes, n, num_features, m).weights;
    Ok(LagModel {
        matrix,
        num_features,
        num_classes,
        clusters_per_class: clusters,
        reduced_classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn perfect_separator_costs_zero() {
        let score = dft_score(&[0.0, 0.0, 1.0, 1.0], &[0, 0, 1, 1], 4).unwrap();
        assert_eq!(score.cost, 0.0);
        // ties resolve to the lowest candidate threshold on the grid
        assert!((score.threshold - 0.25).abs() < 1e-12);
        assert_eq!(score.range, (0.0, 1.0));
        assert!(!score.degenerate);
    }

    #[test]
    fn useless_feature_costs_full_bit() {
        let score = dft_score(&[0.0, 1.0, 0.0, 1.0], &[0, 0, 1, 1], 4).unwrap();
        assert!((score.cost - 1.0).abs() < 1e-12);
    }

    #[test]
    fn three_class_best_isolates_one() {
        let score = dft_score(&[1.0, 2.0, 3.0], &[0, 1, 2], 16).unwrap();
        assert!((score.cost - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn constant_feature_is_degenerate() {
        let score = dft_score(&[0.5; 6], &[0, 0, 0, 1, 1, 1], 8).unwrap();
        assert!(score.degenerate);
        assert!((score.cost - 1.0).abs() < 1e-12); // full-set entropy
        assert_eq!(score.threshold, 0.5);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(dft_score(&[1.0, 2.0, 3.0], &[1, 1, 1], 4).is_err());
        assert!(dft_score(&[1.0, 2.0], &[0, 1], 1).is_err());
        assert!(dft_score(&[1.0], &[0], 4).is_err());
    }

    #[test]
    fn cost_bounds_hold_on_random_instances() {
        let mut rng = seeded_rng(99);
        for _ in 0..200 {
            let n = rng.gen_range(2..60);
            let c = rng.gen_range(2..5);
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let mut labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
            labels[0] = 0;
            labels[n - 1] = c - 1; // guarantee two classes
            let s = dft_score(&values, &labels, 16).unwrap();
            let bound = (c as f64).log2();
            assert!(s.cost >= -1e-12 && s.cost <= bound + 1e-12);
        }
    }

    #[test]
    fn affine_rescaling_preserves_cost() {
        let mut rng = seeded_rng(7);
        for _ in 0..300 {
            let n = rng.gen_range(4..40);
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mut labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            labels[0] = 0;
            labels[1] = 1;
            let a = rng.gen_range(0.1..10.0);
            let b = rng.gen_range(-5.0..5.0);
            let mapped: Vec<f64> = values.iter().map(|&x| a * x + b).collect();
            let s0 = dft_score(&values, &labels, 16).unwrap();
            let s1 = dft_score(&mapped, &labels, 16).unwrap();
            assert!(
                (s0.cost - s1.cost).abs() < 1e-10,
                "affine map changed cost: {} vs {}",
                s0.cost,
                s1.cost
            );
        }
    }

    #[test]
    fn regression_split_on_ramp() {
        let v = [1.0, 2.0, 3.0, 4.0];
        let score = rft_score(&v, &v, 4).unwrap();
        assert!((score.cost - 0.25).abs() < 1e-12);
        assert!((score.threshold - 2.5).abs() < 1e-12);
    }

    #[test]
    fn constant_targets_cost_zero() {
        let score = rft_score(&[1.0, 2.0, 3.0, 4.0], &[5.0; 4], 4).unwrap();
        assert!(score.cost.abs() < 1e-12);
    }

    #[test]
    fn elbow_on_step_curve() {
        let costs = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let early = detect_elbow(&costs, ElbowMode::Early).unwrap();
        assert_eq!(early.index, 3);
        assert!(!early.fallback);
        let late = detect_elbow(&costs, ElbowMode::Late).unwrap();
        assert_eq!(late.index, 4);
    }

    #[test]
    fn elbow_fraction_and_fallbacks() {
        let costs: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        let f = detect_elbow(&costs, ElbowMode::Fraction(0.25)).unwrap();
        assert_eq!(f.index, 25);
        // strictly linear curve: no elbow, fall back to half
        let lin = detect_elbow(&costs, ElbowMode::Late).unwrap();
        assert!(lin.fallback);
        assert_eq!(lin.index, 50);
        // flat curve likewise
        let flat = detect_elbow(&[0.4; 10], ElbowMode::Early).unwrap();
        assert!(flat.fallback);
        assert_eq!(flat.index, 5);
        assert!(detect_elbow(&costs, ElbowMode::Fraction(0.0)).is_err());
        assert!(detect_elbow(&[], ElbowMode::Early).is_err());
    }

    #[test]
    fn identical_columns_tie_by_index() {
        let n = 30;
        let mut rng = seeded_rng(3);
        let col: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let mut data = Vec::with_capacity(n * 3);
        for i in 0..n {
            for _ in 0..3 {
                data.push(col[i]);
            }
        }
        let m = RowMatrix::new(&data, n, 3);
        let r = rank_features(&m, RankTargets::Classes(&labels), 16, ElbowMode::Late).unwrap();
        assert_eq!(r.order, vec![0, 1, 2]);
        assert!((r.costs[0] - r.costs[1]).abs() < 1e-15);
        assert!((r.costs[1] - r.costs[2]).abs() < 1e-15);
    }

    #[test]
    fn informative_features_outrank_noise() {
        // 2 informative + 8 noise columns; the informative pair must lead
        // the ranking in at least 95 of 100 seeds
        let n = 200;
        let mut wins = 0;
        for seed in 0..100u64 {
            let mut rng = seeded_rng(1000 + seed);
            let mut data = vec![0.0; n * 10];
            let mut labels = vec![0usize; n];
            for i in 0..n {
                let class = i % 2;
                labels[i] = class;
                let shift = if class == 0 { -1.0 } else { 1.0 };
                data[i * 10] = shift + rng.gen_range(-0.8..0.8);
                data[i * 10 + 1] = -shift + rng.gen_range(-0.8..0.8);
                for j in 2..10 {
                    data[i * 10 + j] = rng.gen_range(-2.0..2.0);
                }
            }
            let m = RowMatrix::new(&data, n, 10);
            let r =
                rank_features(&m, RankTargets::Classes(&labels), 16, ElbowMode::Late).unwrap();
            let top2: Vec<usize> = r.order[..2].to_vec();
            if top2.contains(&0) && top2.contains(&1) {
                wins += 1;
            }
        }
        assert!(wins >= 95, "informative pair led in only {wins} of 100 seeds");
    }

    #[test]
    fn ranking_selects_prefix_of_order() {
        let n = 40;
        let mut rng = seeded_rng(5);
        let data: Vec<f64> = (0..n * 6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let m = RowMatrix::new(&data, n, 6);
        let r = rank_features(&m, RankTargets::Classes(&labels), 8, ElbowMode::Early).unwrap();
        assert_eq!(r.selected, r.order[..r.elbow].to_vec());
        // costs along the sort order never decrease
        let sorted: Vec<f64> = r.order.iter().map(|&j| r.costs[j]).collect();
        assert!(sorted.windows(2).all(|w| w[0] <= w[1] + 1e-15));
        // every non-degenerate threshold sits strictly inside its range
        for j in 0..6 {
            let (lo, hi) = r.ranges[j];
            assert!(!r.degenerate[j]);
            assert!(lo < r.thresholds[j] && r.thresholds[j] < hi);
        }
    }

    #[test]
    fn lag_recovers_cluster_codes() {
        // features already one-hot on 6 tight clusters (2 classes x 3):
        // the fitted map must be a within-class permutation, i.e. its code
        // predictions reproduce the feature rows exactly
        let classes = 2;
        let clusters = 3;
        let m = classes * clusters;
        let n = 60;
        let mut features = vec![0.0; n * m];
        let mut labels = vec![0usize; n];
        for i in 0..n {
            let class = i % classes;
            let cluster = (i / classes) % clusters;
            labels[i] = class;
            features[i * m + class * clusters + cluster] = 1.0;
        }
        let model = lag_fit(&features, m, &labels, clusters, 17).unwrap();
        assert!(model.reduced_classes.is_empty());
        // the map must send each one-hot row to a one-hot code within the
        // same class block, bijectively (an orthogonal 0/1 matrix)
        for i in 0..m {
            let row = &model.matrix[i * m..(i + 1) * m];
            let ones = row.iter().filter(|x| (x.abs() - 1.0).abs() < 1e-6).count();
            let zeros = row.iter().filter(|x| x.abs() < 1e-6).count();
            assert_eq!(ones, 1, "row {i} should hit exactly one code");
            assert_eq!(zeros, m - 1);
        }
        // round trip: mapped outputs reproduce valid codes
        for i in 0..n {
            let out = model
                .transform(&features[i * m..(i + 1) * m])
                .unwrap();
            let hits = out.iter().filter(|x| (x.abs() - 1.0).abs() < 1e-6).count();
            assert_eq!(hits, 1);
        }
    }

    #[test]
    fn lag_reduces_clusters_for_small_classes() {
        // class 1 has two samples but three clusters were requested
        let features = [0.0, 0.1, 1.0, 1.1, 2.0, 2.1, 10.0, 10.1];
        let labels = [0, 0, 0, 1];
        let model = lag_fit(&features, 2, &labels, 3, 23).unwrap();
        assert_eq!(model.reduced_classes, vec![1]);
        assert_eq!(model.output_dim(), 6); // width stays classes x clusters
        let out = model.transform(&[10.0, 10.1]).unwrap();
        assert_eq!(out.len(), 6);
    }

    #[test]
    fn lag_is_deterministic() {
        let mut rng = seeded_rng(31);
        let n = 50;
        let features: Vec<f64> = (0..n * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let a = lag_fit(&features, 4, &labels, 4, 7).unwrap();
        let b = lag_fit(&features, 4, &labels, 4, 7).unwrap();
        assert_eq!(a, b);
    }
}
