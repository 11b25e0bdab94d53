//! Train and eval workflows: representation fit, feature ranking, decision
//! fit, and a metrics report that makes accuracy and model size first-class
//! outputs. Errors from each phase carry the phase name so a failing run
//! says which module broke.

use std::fmt::Write as _;
use std::time::Instant;

use crate::archive::{encode_model, encode_sections, encoded_hop_bytes, TrainedModel};
use crate::config::{PredictorConfig, TrainConfig};
use crate::dataset::DatasetBundle;
use crate::decision::tree::{slm_tree_fit_classification, TreeTargets};
use crate::decision::{slm_forest_fit, Predictor};
use crate::error::Result;
use crate::features::{rank_features, RankTargets};
use crate::pipeline::{fit_pipeline, transform_pipeline, HopFeatureSet, HopStage};
use crate::rng::derive_seed;
use crate::saab::count_parameters;

/// Seed stream for the decision learner, far from the per-stage streams so
/// adding hops never reshuffles the predictor's randomness.
pub const PREDICTOR_STREAM: u64 = 1_000_003;

/// One line of the size table: a module, its learned parameter count, the
/// closed-form kernel budget where one applies, and its exact encoded bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterRow {
    pub module: String,
    pub parameters: u64,
    /// `S^4 K^2` / `S^4 K` kernel budget for transform stages.
    pub budget: Option<u64>,
    pub bytes: u64,
}

/// Everything a train or eval run reports.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub num_samples: usize,
    pub num_classes: usize,
    pub accuracy: f64,
    /// `num_classes x num_classes`, row-major; rows are true classes,
    /// columns predicted classes.
    pub confusion: Vec<u64>,
    /// Block name and column count for every feature block produced.
    pub feature_blocks: Vec<(String, usize)>,
    pub selected_columns: usize,
    pub total_columns: usize,
    pub parameter_rows: Vec<ParameterRow>,
    pub model_parameters: u64,
    pub model_bytes: u64,
    /// Wall-clock seconds per phase, in execution order.
    pub timings: Vec<(String, f64)>,
}

impl MetricsReport {
    /// Per-class `(correct, total)` counts, from the confusion diagonal.
    pub fn per_class(&self) -> Vec<(u64, u64)> {
        let c = self.num_classes;
        (0..c)
            .map(|i| {
                let total: u64 = self.confusion[i * c..(i + 1) * c].iter().sum();
                (self.confusion[i * c + i], total)
            })
            .collect()
    }

    /// The report as printable text.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let correct: u64 = (0..self.num_classes)
            .map(|i| self.confusion[i * self.num_classes + i])
            .sum();
        let _ = writeln!(
            out,
            "samples: {}    classes: {}",
            self.num_samples, self.num_classes
        );
        let _ = writeln!(
            out,
            "accuracy: {:.2}% ({correct}/{})",
            self.accuracy * 100.0,
            self.num_samples
        );
        out.push('\n');

        let _ = writeln!(out, "per-class accuracy:");
        for (class, (correct, total)) in self.per_class().into_iter().enumerate() {
            if total == 0 {
                let _ = writeln!(out, "  class {class}: no samples");
            } else {
                let _ = writeln!(
                    out,
                    "  class {class}: {:.2}% ({correct}/{total})",
                    correct as f64 / total as f64 * 100.0
                );
            }
        }
        out.push('\n');

        let c = self.num_classes;
        let _ = writeln!(out, "confusion matrix (rows true, columns predicted):");
        let _ = write!(out, "      ");
        for j in 0..c {
            let _ = write!(out, "{j:>7}");
        }
        out.push('\n');
        for i in 0..c {
            let _ = write!(out, "  {i:>4}");
            for j in 0..c {
                let _ = write!(out, "{:>7}", self.confusion[i * c + j]);
            }
            out.push('\n');
        }
        out.push('\n');

        let _ = writeln!(out, "feature blocks:");
        for (name, columns) in &self.feature_blocks {
            let _ = writeln!(out, "  {name:<16} {columns:>7} columns");
        }
        let _ = writeln!(
            out,
            "  {} blocks, {} columns, {} selected",
            self.feature_blocks.len(),
            self.total_columns,
            self.selected_columns
        );
        out.push('\n');

        let _ = writeln!(out, "parameter counts:");
        let _ = writeln!(
            out,
            "  {:<18} {:>12} {:>12} {:>12}",
            "module", "parameters", "budget", "bytes"
        );
        for row in &self.parameter_rows {
            let budget = row
                .budget
                .map_or_else(|| "-".to_string(), |b| b.to_string());
            let _ = writeln!(
                out,
                "  {:<18} {:>12} {:>12} {:>12}",
                row.module, row.parameters, budget, row.bytes
            );
        }
        let _ = writeln!(
            out,
            "  {:<18} {:>12} {:>12} {:>12}",
            "total", self.model_parameters, "", self.model_bytes
        );
        out.push('\n');

        let _ = writeln!(
            out,
            "model size: {} parameters, {} bytes serialized",
            self.model_parameters, self.model_bytes
        );
        out.push('\n');

        let _ = writeln!(out, "wall clock:");
        let mut total = 0.0;
        for (phase, seconds) in &self.timings {
            let _ = writeln!(out, "  {phase:<16} {seconds:>9.3} s");
            total += seconds;
        }
        let _ = writeln!(out, "  {:<16} {total:>9.3} s", "total");
        out
    }
}

/// Learned kernel coefficients stored by a hop's transform.
fn stage_parameters(stage: &HopStage) -> u64 {
    match stage {
        HopStage::Standard(s) => (s.kernels.num_kernels() * s.kernels.input_dim()) as u64,
        HopStage::ChannelWise(s) => s
            .kernel_sets()
            .iter()
            .map(|set| (set.num_kernels() * set.input_dim()) as u64)
            .sum(),
    }
}

/// The size table for a trained model: one row per hop transform (with its
/// closed-form kernel budget), per spectral bank, plus selection, predictor,
/// and the config echo.
fn parameter_table(model: &TrainedModel) -> Result<(Vec<ParameterRow>, u64, u64)> {
    let sections = encode_sections(model);
    let section_bytes = |name: &str| -> u64 {
        sections
            .iter()
            .find(|(n, _)| *n == name)
            .map_or(0, |(_, payload)| payload.len() as u64)
    };

    let mut rows = Vec::new();
    for (i, hop) in model.pipeline.hops.iter().enumerate() {
        let (transform_bytes, spectral_bytes) = encoded_hop_bytes(hop);
        let budget = count_parameters(hop.config.kind, hop.config.window.0, hop.input_shape.2)?;
        rows.push(ParameterRow {
            module: format!("hop{}.transform", i + 1),
            parameters: stage_parameters(&hop.stage),
            budget: Some(budget),
            bytes: transform_bytes,
        });
        if let Some(sets) = &hop.spectral {
            rows.push(ParameterRow {
                module: format!("hop{}.spectral", i + 1),
                parameters: sets
                    .iter()
                    .map(|set| (set.num_kernels() * set.input_dim()) as u64)
                    .sum(),
                budget: None,
                bytes: spectral_bytes,
            });
        }
    }
    rows.push(ParameterRow {
        module: "selection".into(),
        // a split cost and a threshold per ranked column
        parameters: 2 * model.ranking.costs.len() as u64,
        budget: None,
        bytes: section_bytes("ranking"),
    });
    rows.push(ParameterRow {
        module: format!("predictor ({})", model.predictor.tag()),
        parameters: model.predictor.num_parameters(),
        budget: None,
        bytes: section_bytes("predictor"),
    });
    rows.push(ParameterRow {
        module: "config".into(),
        parameters: 0,
        budget: None,
        bytes: section_bytes("config"),
    });

    let model_parameters = rows.iter().map(|r| r.parameters).sum();
    let model_bytes = encode_model(model).len() as u64;
    Ok((rows, model_parameters, model_bytes))
}

fn predict_rows(predictor: &Predictor, rows: &[f64], labels_len: usize) -> Result<Vec<usize>> {
    let k = predictor.num_features();
    (0..labels_len)
        .map(|i| predictor.predict_class(&rows[i * k..(i + 1) * k]))
        .collect()
}

fn confusion_matrix(labels: &[usize], predictions: &[usize], num_classes: usize) -> Vec<u64> {
    let mut confusion = vec![0u64; num_classes * num_classes];
    for (&t, &p) in labels.iter().zip(predictions) {
        confusion[t * num_classes + p] += 1;
    }
    confusion
}

#[allow(clippy::too_many_arguments)]
fn assemble_report(
    model: &TrainedModel,
    features: &HopFeatureSet,
    labels: &[usize],
    predictions: &[usize],
    num_classes: usize,
    timings: Vec<(String, f64)>,
) -> Result<MetricsReport> {
    let confusion = confusion_matrix(labels, predictions, num_classes);
    let correct = labels
        .iter()
        .zip(predictions)
        .filter(|(t, p)| t == p)
        .count();
    let (parameter_rows, model_parameters, model_bytes) = parameter_table(model)?;
    Ok(MetricsReport {
        num_samples: labels.len(),
        num_classes,
        accuracy: correct as f64 / labels.len() as f64,
        confusion,
        feature_blocks: features
            .blocks
            .iter()
            .map(|b| (b.name(), b.num_columns))
            .collect(),
        selected_columns: model.ranking.selected.len(),
        total_columns: features.num_columns(),
        parameter_rows,
        model_parameters,
        model_bytes,
        timings,
    })
}

fn fit_predictor(
    config: &PredictorConfig,
    rows: &[f64],
    num_features: usize,
    labels: &[usize],
    num_classes: usize,
    seed: u64,
) -> Result<Predictor> {
    Ok(match config {
        PredictorConfig::Llsr => {
            Predictor::Llsr(crate::decision::llsr::llsr_fit(rows, num_features, labels)?)
        }
        PredictorConfig::Tree(options) => Predictor::Tree(slm_tree_fit_classification(
            rows,
            num_features,
            labels,
            num_classes,
            options,
            seed,
        )?),
        PredictorConfig::Forest {
            options,
            trees,
            bootstrap,
        } => Predictor::Forest(slm_forest_fit(
            rows,
            num_features,
            TreeTargets::Classes(labels),
            options,
            *trees,
            *bootstrap,
            seed,
        )?),
        PredictorConfig::Boost {
            options,
            rounds,
            shrinkage,
        } => Predictor::Boost(crate::decision::boost::slm_boost_fit(
            rows,
            num_features,
            labels,
            options,
            *rounds,
            *shrinkage,
            seed,
        )?),
    })
}

/// Fit the whole cascade on a labeled image bundle: representation, feature
/// ranking, then the decision learner; score the result on the same data.
pub fn run_train(
    config: &TrainConfig,
    data: &DatasetBundle,
) -> Result<(TrainedModel, MetricsReport)> {
    let images = data.images().map_err(|e| e.in_module("data"))?;
    let labels = data.class_labels().map_err(|e| e.in_module("data"))?;
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);

    let start = Instant::now();
    let (pipeline, features) = fit_pipeline(images, &config.stages, config.variant, config.seed)
        .map_err(|e| e.in_module("representation"))?;
    let representation_s = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let ranking = rank_features(
        &features,
        RankTargets::Classes(labels),
        config.selector.bins,
        config.selector.elbow,
    )
    .map_err(|e| e.in_module("selection"))?;
    let rows = features
        .select_into_rows(&ranking.selected)
        .map_err(|e| e.in_module("selection"))?;
    let selection_s = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let predictor = fit_predictor(
        &config.predictor,
        &rows,
        ranking.selected.len(),
        labels,
        num_classes,
        derive_seed(config.seed, PREDICTOR_STREAM),
    )
    .map_err(|e| e.in_module("decision"))?;
    let decision_s = start.elapsed().as_secs_f64();

    let model = TrainedModel {
        pipeline,
        ranking,
        predictor,
        config: config.clone(),
    };

    let start = Instant::now();
    let predictions =
        predict_rows(&model.predictor, &rows, labels.len()).map_err(|e| e.in_module("decision"))?;
    let evaluation_s = start.elapsed().as_secs_f64();

    let timings = vec![
        ("representation".to_string(), representation_s),
        ("selection".to_string(), selection_s),
        ("decision".to_string(), decision_s),
        ("evaluation".to_string(), evaluation_s),
    ];
    let report = assemble_report(&model, &features, labels, &predictions, num_classes, timings)?;
    Ok((model, report))
}

/// Score a trained model on a labeled image bundle.
pub fn run_eval(model: &TrainedModel, data: &DatasetBundle) -> Result<MetricsReport> {
    let images = data.images().map_err(|e| e.in_module("data"))?;
    let labels = data.class_labels().map_err(|e| e.in_module("data"))?;

    let start = Instant::now();
    let features = transform_pipeline(&model.pipeline, images)
        .map_err(|e| e.in_module("representation"))?;
    let rows = features
        .select_into_rows(&model.ranking.selected)
        .map_err(|e| e.in_module("representation"))?;
    let representation_s = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let predictions =
        predict_rows(&model.predictor, &rows, labels.len()).map_err(|e| e.in_module("decision"))?;
    let decision_s = start.elapsed().as_secs_f64();

    let observed = labels.iter().max().map_or(0, |m| m + 1);
    let num_classes = model.predictor.num_classes().unwrap_or(0).max(observed);

    let timings = vec![
        ("representation".to_string(), representation_s),
        ("decision".to_string(), decision_s),
    ];
    assemble_report(model, &features, labels, &predictions, num_classes, timings)
}
