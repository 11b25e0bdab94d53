//! Linear least-squares classification: one-hot label codes regressed on
//! the features plus an intercept, predicting by the largest score. Cheap,
//! closed-form, and surprisingly strong on top of a good feature space.

use super::argmax;
use crate::error::{GlError, Result};
use crate::linalg::min_norm_lstsq;

#[derive(Debug, Clone, PartialEq)]
pub struct LlsrModel {
    /// `(num_features + 1) x num_classes` row-major; the last row is the
    /// intercept.
    pub weights: Vec<f64>,
    pub num_features: usize,
    pub num_classes: usize,
    /// Set when the design matrix was rank-deficient and the weights are
    /// the minimum-norm choice among the equally good fits.
    pub min_norm: bool,
}

/// Fit one linear scorer per class against its one-hot indicator.
pub fn llsr_fit(data: &[f64], num_features: usize, labels: &[usize]) -> Result<LlsrModel> {
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
    if n == 0 {
        return Err(GlError::Dimension("need at least one sample".into()));
    }
    if labels.len() != n {
        return Err(GlError::Dimension(format!(
            "{n} rows vs {} labels",
            labels.len()
        )));
    }
    for (i, &v) in data.iter().enumerate() {
        if !v.is_finite() {
            return Err(GlError::Dimension(format!(
                "non-finite feature value at flat index {i}"
            )));
        }
    }
    let num_classes = labels.iter().max().map_or(0, |&c| c + 1);
    if num_classes < 2 {
        return Err(GlError::Config(
            "classification needs at least two classes".into(),
        ));
    }

    let d = num_features + 1;
    let mut design = Vec::with_capacity(n * d);
    for i in 0..n {
        design.extend_from_slice(&data[i * num_features..(i + 1) * num_features]);
        design.push(1.0);
    }
    let mut codes = vec![0.0; n * num_classes];
    for (i, &l) in labels.iter().enumerate() {
        codes[i * num_classes + l] = 1.0;
    }
    let sol = min_norm_lstsq(&design, &codes, n, d, num_classes);
    Ok(LlsrModel {
        min_norm: sol.rank < d,
        weights: sol.weights,
        num_features,
        num_classes,
    })
}

impl LlsrModel {
    /// Raw per-class scores `x W + intercept`.
    pub fn predict_scores(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.num_features {
            return Err(GlError::Dimension(format!(
                "row has {} features, model expects {}",
                row.len(),
                self.num_features
            )));
        }
        let c = self.num_classes;
        let mut scores = self.weights[self.num_features * c..].to_vec();
        for (i, &x) in row.iter().enumerate() {
            for (s, &w) in scores.iter_mut().zip(&self.weights[i * c..(i + 1) * c]) {
                *s += x * w;
            }
        }
        Ok(scores)
    }

    pub fn predict_class(&self, row: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_scores(row)?))
    }

    /// Scores clipped at zero and renormalized to sum to one; a row whose
    /// every score is non-positive falls back to the uniform vector.
    pub fn predict_probs(&self, row: &[f64]) -> Result<Vec<f64>> {
        let mut probs = self.predict_scores(row)?;
        for p in probs.iter_mut() {
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let sum: f64 = probs.iter().sum();
        if sum <= 1e-12 {
            let u = 1.0 / self.num_classes as f64;
            probs.iter_mut().for_each(|p| *p = u);
        } else {
            probs.iter_mut().for_each(|p| *p /= sum);
        }
        Ok(probs)
    }
}
