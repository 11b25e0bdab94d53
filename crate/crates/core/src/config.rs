//! Training configuration: a flat key=value text format and its typed form.
//!
//! Lines are `key = value`, `#` starts a comment, and keys use section
//! prefixes (`stage1.window=5`, `forest.trees=25`). Every knob has a
//! default, so a minimal config is just a variant and one stage; the typed
//! form serializes back to canonical text for archiving, and parsing that
//! text reproduces the config exactly.

use std::collections::BTreeMap;

use crate::decision::tree::SlmOptions;
use crate::error::{GlError, Result};
use crate::features::ElbowMode;
use crate::pipeline::{HopStageConfig, PipelineVariant};
use crate::saab::{KernelCount, TransformKind};
use crate::tensor::PoolMode;

/// Feature selection knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectorConfig {
    /// Threshold grid resolution for per-feature scoring.
    pub bins: usize,
    /// Where to cut the sorted cost curve.
    pub elbow: ElbowMode,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            bins: 16,
            elbow: ElbowMode::Late,
        }
    }
}

/// Which decision learner the workflow fits on the selected features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PredictorConfig {
    Llsr,
    Tree(SlmOptions),
    Forest {
        options: SlmOptions,
        trees: usize,
        bootstrap: bool,
    },
    Boost {
        options: SlmOptions,
        rounds: usize,
        shrinkage: f64,
    },
}

impl PredictorConfig {
    pub fn tag(&self) -> &'static str {
        match self {
            PredictorConfig::Llsr => "llsr",
            PredictorConfig::Tree(_) => "tree",
            PredictorConfig::Forest { .. } => "forest",
            PredictorConfig::Boost { .. } => "boost",
        }
    }
}

/// Everything a training run needs besides the data: the pipeline variant
/// and stages, the selector, the predictor, and the master seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub variant: PipelineVariant,
    pub stages: Vec<HopStageConfig>,
    pub selector: SelectorConfig,
    pub predictor: PredictorConfig,
    pub seed: u64,
}

fn default_stage(variant: PipelineVariant) -> HopStageConfig {
    HopStageConfig {
        window: (5, 5),
        stride: 1,
        kind: variant.default_kind(),
        pool: (2, 2),
        pool_mode: variant.default_pool_mode(),
        num_kernels: KernelCount::Lossless,
        threshold_intermediate: 1e-3,
        threshold_keep: 1e-5,
        patch_cap: 20_000,
    }
}

impl TrainConfig {
    /// The baseline two-hop spectral pipeline with a least-squares
    /// classifier: 5x5 windows at stride 1, 2x2 pooling. Spectral coverage,
    /// the second hop's keep threshold, and the selection fraction are set
    /// for accuracy at a small serialized size.
    pub fn default_iphop() -> Self {
        let variant = PipelineVariant::Iphop {
            spectral_coverage: 0.95,
        };
        let mut stages = vec![default_stage(variant); 2];
        stages[1].threshold_keep = 1e-4;
        Self {
            variant,
            stages,
            selector: SelectorConfig {
                bins: 16,
                elbow: ElbowMode::Fraction(0.08),
            },
            predictor: PredictorConfig::Llsr,
            seed: 1,
        }
    }

    /// Parse the flat key=value text form.
    pub fn parse(text: &str) -> Result<TrainConfig> {
        let mut entries: BTreeMap<String, (String, usize)> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(GlError::Config(format!(
                    "line {}: expected key = value, got {line:?}",
                    idx + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if let Some((_, first)) = entries.get(&key) {
                return Err(GlError::Config(format!(
                    "line {}: key {key:?} already set on line {first}",
                    idx + 1
                )));
            }
            entries.insert(key, (value, idx + 1));
        }
        build(entries)
    }

    /// Canonical text form: every knob spelled out, parseable back into an
    /// identical config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let push = |out: &mut String, k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        push(&mut out, "variant", self.variant.tag().to_string());
        if let Some(c) = self.variant.spectral_coverage() {
            push(&mut out, "spectral.coverage", format!("{c}"));
        }
        push(&mut out, "seed", format!("{}", self.seed));
        for (i, s) in self.stages.iter().enumerate() {
            let p = |k: &str| format!("stage{}.{k}", i + 1);
            push(&mut out, &p("window"), format!("{}", s.window.0));
            push(&mut out, &p("stride"), format!("{}", s.stride));
            let kind = match s.kind {
                TransformKind::Standard => "standard",
                TransformKind::ChannelWise => "channel_wise",
            };
            push(&mut out, &p("kind"), kind.to_string());
            push(&mut out, &p("pool"), format!("{}", s.pool.0));
            let mode = match s.pool_mode {
                PoolMode::Max => "max",
                PoolMode::AbsoluteMax => "absolute_max",
            };
            push(&mut out, &p("pool_mode"), mode.to_string());
            let kernels = match s.num_kernels {
                KernelCount::Lossless => "lossless".to_string(),
                KernelCount::Fixed(k) => format!("{k}"),
            };
            push(&mut out, &p("kernels"), kernels);
            push(
                &mut out,
                &p("threshold_intermediate"),
                format!("{}", s.threshold_intermediate),
            );
            push(&mut out, &p("threshold_keep"), format!("{}", s.threshold_keep));
            push(&mut out, &p("patch_cap"), format!("{}", s.patch_cap));
        }
        push(&mut out, "select.bins", format!("{}", self.selector.bins));
        let elbow = match self.selector.elbow {
            ElbowMode::Early => "early".to_string(),
            ElbowMode::Late => "late".to_string(),
            ElbowMode::Fraction(q) => format!("{q}"),
        };
        push(&mut out, "select.elbow", elbow);
        push(&mut out, "predictor", self.predictor.tag().to_string());
        let tree_opts = match &self.predictor {
            PredictorConfig::Llsr => None,
            PredictorConfig::Tree(o) => Some(o),
            PredictorConfig::Forest { options, .. } => Some(options),
            PredictorConfig::Boost { options, .. } => Some(options),
        };
        if let Some(o) = tree_opts {
            push(&mut out, "tree.max_depth", format!("{}", o.max_depth));
            push(&mut out, "tree.min_leaf", format!("{}", o.min_leaf));
            push(&mut out, "tree.directions", format!("{}", o.num_directions));
            push(
                &mut out,
                "tree.axis_candidates",
                format!("{}", o.axis_candidates),
            );
            push(&mut out, "tree.bins", format!("{}", o.bins));
        }
        match &self.predictor {
            PredictorConfig::Forest {
                trees, bootstrap, ..
            } => {
                push(&mut out, "forest.trees", format!("{trees}"));
                push(&mut out, "forest.bootstrap", format!("{bootstrap}"));
            }
            PredictorConfig::Boost {
                rounds, shrinkage, ..
            } => {
                push(&mut out, "boost.rounds", format!("{rounds}"));
                push(&mut out, "boost.shrinkage", format!("{shrinkage}"));
            }
            _ => {}
        }
        out
    }
}

struct Entries {
    map: BTreeMap<String, (String, usize)>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.map.remove(key)
    }

    fn parse_with<T>(
        &mut self,
        key: &str,
        what: &str,
        f: impl Fn(&str) -> Option<T>,
    ) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some((value, line)) => f(&value).map(Some).ok_or_else(|| {
                GlError::Config(format!("line {line}: {key} expects {what}, got {value:?}"))
            }),
        }
    }

    fn usize(&mut self, key: &str) -> Result<Option<usize>> {
        self.parse_with(key, "a non-negative integer", |v| v.parse().ok())
    }

    fn u64(&mut self, key: &str) -> Result<Option<u64>> {
        self.parse_with(key, "a non-negative integer", |v| v.parse().ok())
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>> {
        self.parse_with(key, "a number", |v| v.parse().ok())
    }

    fn bool(&mut self, key: &str) -> Result<Option<bool>> {
        self.parse_with(key, "true or false", |v| v.parse().ok())
    }
}

fn build(map: BTreeMap<String, (String, usize)>) -> Result<TrainConfig> {
    let mut e = Entries { map };

    let variant = match e.take("variant") {
        None => PipelineVariant::iphop(),
        Some((v, line)) => match v.as_str() {
            "pixelhop" => PipelineVariant::PixelHop,
            "pixelhop_pp" => PipelineVariant::PixelHopPp,
            "iphop" => PipelineVariant::iphop(),
            other => {
                return Err(GlError::Config(format!(
                    "line {line}: unknown variant {other:?} (pixelhop, pixelhop_pp, iphop)"
                )))
            }
        },
    };
    let variant = match (variant, e.f64("spectral.coverage")?) {
        (PipelineVariant::Iphop { .. }, Some(c)) => PipelineVariant::Iphop {
            spectral_coverage: c,
        },
        (v, None) => v,
        (_, Some(_)) => {
            return Err(GlError::Config(
                "spectral.coverage applies only to variant = iphop".into(),
            ))
        }
    };

    let seed = e.u64("seed")?.unwrap_or(1);

    // stages: contiguous stage1..stageN, each starting from the variant's
    // defaults
    let stage_numbers: Vec<usize> = {
        let mut ns: Vec<usize> = e
            .map
            .keys()
            .filter_map(|k| {
                let rest = k.strip_prefix("stage")?;
                let (n, _) = rest.split_once('.')?;
                n.parse().ok()
            })
            .collect();
        ns.sort_unstable();
        ns.dedup();
        ns
    };
    if stage_numbers.is_empty() {
        return Err(GlError::Config(
            "no stages configured; set at least stage1.window".into(),
        ));
    }
    for (i, &n) in stage_numbers.iter().enumerate() {
        if n != i + 1 {
            return Err(GlError::Config(format!(
                "stage numbers must run 1..{} without gaps; found stage{n}",
                stage_numbers.len()
            )));
        }
    }

    let mut stages = Vec::with_capacity(stage_numbers.len());
    for n in 1..=stage_numbers.len() {
        let mut s = default_stage(variant);
        let p = |k: &str| format!("stage{n}.{k}");
        if let Some(w) = e.usize(&p("window"))? {
            s.window = (w, w);
        }
        if let Some(v) = e.usize(&p("stride"))? {
            s.stride = v;
        }
        if let Some(k) = e.parse_with(&p("kind"), "standard or channel_wise", |v| match v {
            "standard" => Some(TransformKind::Standard),
            "channel_wise" => Some(TransformKind::ChannelWise),
            _ => None,
        })? {
            s.kind = k;
        }
        if let Some(w) = e.usize(&p("pool"))? {
            s.pool = (w, w);
        }
        if let Some(m) = e.parse_with(&p("pool_mode"), "max or absolute_max", |v| match v {
            "max" => Some(PoolMode::Max),
            "absolute_max" => Some(PoolMode::AbsoluteMax),
            _ => None,
        })? {
            s.pool_mode = m;
        }
        if let Some(k) = e.parse_with(&p("kernels"), "lossless or a kernel count", |v| {
            if v == "lossless" {
                Some(KernelCount::Lossless)
            } else {
                v.parse().ok().map(KernelCount::Fixed)
            }
        })? {
            s.num_kernels = k;
        }
        if let Some(t) = e.f64(&p("threshold_intermediate"))? {
            s.threshold_intermediate = t;
        }
        if let Some(t) = e.f64(&p("threshold_keep"))? {
            s.threshold_keep = t;
        }
        if let Some(c) = e.usize(&p("patch_cap"))? {
            s.patch_cap = c;
        }
        stages.push(s);
    }

    let mut selector = SelectorConfig::default();
    if let Some(b) = e.usize("select.bins")? {
        selector.bins = b;
    }
    if let Some(mode) = e.parse_with("select.elbow", "early, late, or a fraction", |v| match v {
        "early" => Some(ElbowMode::Early),
        "late" => Some(ElbowMode::Late),
        _ => v.parse().ok().map(ElbowMode::Fraction),
    })? {
        selector.elbow = mode;
    }

    let predictor_tag = e
        .take("predictor")
        .map(|(v, _)| v)
        .unwrap_or_else(|| "llsr".to_string());
    let mut tree_options = SlmOptions::default();
    if let Some(v) = e.usize("tree.max_depth")? {
        tree_options.max_depth = v;
    }
    if let Some(v) = e.usize("tree.min_leaf")? {
        tree_options.min_leaf = v;
    }
    if let Some(v) = e.usize("tree.directions")? {
        tree_options.num_directions = v;
    }
    if let Some(v) = e.usize("tree.axis_candidates")? {
        tree_options.axis_candidates = v;
    }
    if let Some(v) = e.usize("tree.bins")? {
        tree_options.bins = v;
    }
    let trees = e.usize("forest.trees")?;
    let bootstrap = e.bool("forest.bootstrap")?;
    let rounds = e.usize("boost.rounds")?;
    let shrinkage = e.f64("boost.shrinkage")?;

    let predictor = match predictor_tag.as_str() {
        "llsr" => PredictorConfig::Llsr,
        "tree" => PredictorConfig::Tree(tree_options),
        "forest" => PredictorConfig::Forest {
            options: tree_options,
            trees: trees.unwrap_or(25),
            bootstrap: bootstrap.unwrap_or(true),
        },
        "boost" => PredictorConfig::Boost {
            options: tree_options,
            rounds: rounds.unwrap_or(20),
            shrinkage: shrinkage.unwrap_or(0.3),
        },
        other => {
            return Err(GlError::Config(format!(
                "unknown predictor {other:?} (llsr, tree, forest, boost)"
            )))
        }
    };
    match predictor {
        PredictorConfig::Llsr | PredictorConfig::Tree(_) => {
            for (key, label) in [
                (trees.is_some(), "forest.trees"),
                (bootstrap.is_some(), "forest.bootstrap"),
                (rounds.is_some(), "boost.rounds"),
                (shrinkage.is_some(), "boost.shrinkage"),
            ] {
                if key {
                    return Err(GlError::Config(format!(
                        "{label} is set but the predictor is {predictor_tag}"
                    )));
                }
            }
        }
        PredictorConfig::Forest { .. } => {
            if rounds.is_some() || shrinkage.is_some() {
                return Err(GlError::Config(
                    "boost.* keys are set but the predictor is forest".into(),
                ));
            }
        }
        PredictorConfig::Boost { .. } => {
            if trees.is_some() || bootstrap.is_some() {
                return Err(GlError::Config(
                    "forest.* keys are set but the predictor is boost".into(),
                ));
            }
        }
    }

    if let Some((key, (_, line))) = e.map.iter().next() {
        return Err(GlError::Config(format!("line {line}: unknown key {key:?}")));
    }

    Ok(TrainConfig {
        variant,
        stages,
        selector,
        predictor,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = TrainConfig::parse("variant = iphop\nstage1.window = 5\n").unwrap();
        assert_eq!(c.variant, PipelineVariant::iphop());
        assert_eq!(c.stages.len(), 1);
        assert_eq!(c.stages[0].window, (5, 5));
        assert_eq!(c.stages[0].stride, 1);
        assert_eq!(c.stages[0].kind, TransformKind::ChannelWise);
        assert_eq!(c.stages[0].pool_mode, PoolMode::AbsoluteMax);
        assert_eq!(c.stages[0].threshold_intermediate, 1e-3);
        assert_eq!(c.stages[0].threshold_keep, 1e-5);
        assert_eq!(c.selector.bins, 16);
        assert_eq!(c.predictor, PredictorConfig::Llsr);
        assert_eq!(c.seed, 1);
    }

    #[test]
    fn variant_drives_stage_defaults() {
        let c = TrainConfig::parse("variant = pixelhop\nstage1.window = 3\n").unwrap();
        assert_eq!(c.stages[0].kind, TransformKind::Standard);
        assert_eq!(c.stages[0].pool_mode, PoolMode::Max);
        // explicit keys override the variant defaults
        let c = TrainConfig::parse(
            "variant = pixelhop\nstage1.window = 3\nstage1.kind = channel_wise\nstage1.pool_mode = absolute_max\n",
        )
        .unwrap();
        assert_eq!(c.stages[0].kind, TransformKind::ChannelWise);
        assert_eq!(c.stages[0].pool_mode, PoolMode::AbsoluteMax);
    }

    #[test]
    fn comments_and_spacing_are_ignored() {
        let text = "
            # a full two-stage run
            variant = pixelhop_pp   # energy-routed
            seed = 9
            stage1.window = 5
            stage2.window = 3       # smaller second hop
            stage2.kernels = 12
            predictor = boost
            boost.rounds = 4
        ";
        let c = TrainConfig::parse(text).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.stages.len(), 2);
        assert_eq!(c.stages[1].window, (3, 3));
        assert_eq!(c.stages[1].num_kernels, KernelCount::Fixed(12));
        let PredictorConfig::Boost {
            rounds, shrinkage, ..
        } = c.predictor
        else {
            panic!("expected boost");
        };
        assert_eq!(rounds, 4);
        assert_eq!(shrinkage, 0.3);
    }

    #[test]
    fn text_round_trip_is_exact() {
        for config in [
            TrainConfig::default_iphop(),
            TrainConfig {
                variant: PipelineVariant::PixelHop,
                stages: vec![default_stage(PipelineVariant::PixelHop)],
                selector: SelectorConfig {
                    bins: 32,
                    elbow: ElbowMode::Fraction(0.25),
                },
                predictor: PredictorConfig::Forest {
                    options: SlmOptions::default(),
                    trees: 11,
                    bootstrap: false,
                },
                seed: 123,
            },
        ] {
            let text = config.to_text();
            let back = TrainConfig::parse(&text).unwrap();
            assert_eq!(back, config, "round trip changed the config:\n{text}");
        }
    }

    #[test]
    fn bad_configs_are_rejected_with_lines() {
        let e = TrainConfig::parse("variant\n").unwrap_err();
        assert!(e.to_string().contains("line 1"));
        let e = TrainConfig::parse("variant = vgg\nstage1.window = 5\n").unwrap_err();
        assert!(e.to_string().contains("vgg"));
        let e = TrainConfig::parse("stage1.window = 5\nstage3.window = 5\n").unwrap_err();
        assert!(e.to_string().contains("stage3"));
        let e = TrainConfig::parse("stage1.window = 5\nstage1.window = 7\n").unwrap_err();
        assert!(e.to_string().contains("already set"));
        let e = TrainConfig::parse("stage1.window = five\n").unwrap_err();
        assert!(e.to_string().contains("five"));
        let e = TrainConfig::parse("stage1.window = 5\nstage1.color = red\n").unwrap_err();
        assert!(e.to_string().contains("unknown key"));
        let e = TrainConfig::parse("variant = pixelhop\nstage1.window = 5\nspectral.coverage = 0.9\n")
            .unwrap_err();
        assert!(e.to_string().contains("iphop"));
        let e = TrainConfig::parse("stage1.window = 5\nforest.trees = 3\n").unwrap_err();
        assert!(e.to_string().contains("predictor is llsr"));
        assert!(TrainConfig::parse("").is_err());
    }
}
