//! Versioned binary model archive.
//!
//! Layout: an 8-byte magic, a little-endian u64 format version, a u64
//! section count, then each section as a length-prefixed name and a
//! length-prefixed payload, and finally a 64-bit FNV-1a checksum of every
//! preceding byte. All integers are little-endian u64, all floats are
//! little-endian IEEE-754 bit patterns, so the same model always produces
//! the same bytes. Loading checks the version before anything else, then
//! the checksum, then decodes; a failure at any point returns an error
//! without a partial model.

use std::path::Path;

use crate::config::TrainConfig;
use crate::cw::{ChannelLabel, CwChannel, CwSaabStage};
use crate::decision::llsr::LlsrModel;
use crate::decision::tree::{LeafValue, SlmNode, SlmOptions, SlmTree};
use crate::decision::{CombineMode, DecisionEnsemble, EnsembleKind, Predictor, TreeTask};
use crate::error::{GlError, Result};
use crate::features::FeatureRanking;
use crate::pipeline::{
    FittedHop, HopPipeline, HopStage, HopStageConfig, PipelineVariant, StandardStage,
};
use crate::saab::{KernelCount, SaabKernelSet, TransformKind};
use crate::tensor::PoolMode;

const MAGIC: &[u8; 8] = b"GLMODEL\0";
pub const ARCHIVE_VERSION: u64 = 1;

/// Section names in write order.
pub const SECTION_NAMES: [&str; 4] = ["pipeline", "ranking", "predictor", "config"];

/// Everything a finished training run produces: the fitted representation,
/// the feature ranking it was scored with, the decision model, and the
/// configuration that built them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub pipeline: HopPipeline,
    pub ranking: FeatureRanking,
    pub predictor: Predictor,
    pub config: TrainConfig,
}

// --- byte writer ---------------------------------------------------------

#[derive(Default)]
struct Enc {
    buf: Vec<u8>,
}

impl Enc {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn us(&mut self, v: usize) {
        self.u64(v as u64);
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn boolean(&mut self, v: bool) {
        self.u8(v as u8);
    }

    fn floats(&mut self, v: &[f64]) {
        self.us(v.len());
        for &x in v {
            self.f64(x);
        }
    }

    fn indices(&mut self, v: &[usize]) {
        self.us(v.len());
        for &x in v {
            self.us(x);
        }
    }

    fn text(&mut self, s: &str) {
        self.us(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }
}

// --- byte reader ---------------------------------------------------------

struct Dec<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Dec<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(GlError::Archive(format!(
                "archive ends early: needed {n} bytes at offset {}, {} remain",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn us(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v)
            .map_err(|_| GlError::Archive(format!("count {v} does not fit this platform")))
    }

    /// A u64 count that will be materialized at `unit` bytes per item;
    /// rejected when the remaining bytes cannot possibly hold it.
    fn count(&mut self, unit: usize) -> Result<usize> {
        let n = self.us()?;
        if n.checked_mul(unit)
            .map_or(true, |total| total > self.buf.len() - self.pos)
        {
            return Err(GlError::Archive(format!(
                "count {n} at offset {} exceeds the archive size",
                self.pos - 8
            )));
        }
        Ok(n)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn boolean(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(GlError::Archive(format!("invalid boolean byte {b}"))),
        }
    }

    fn floats(&mut self) -> Result<Vec<f64>> {
        let n = self.count(8)?;
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(self.f64()?);
        }
        Ok(v)
    }

    fn indices(&mut self) -> Result<Vec<usize>> {
        let n = self.count(8)?;
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(self.us()?);
        }
        Ok(v)
    }

    fn text(&mut self) -> Result<String> {
        let n = self.count(1)?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| GlError::Archive("text section is not UTF-8".into()))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

// --- per-type codecs -----------------------------------------------------

fn enc_kernel_set(e: &mut Enc, s: &SaabKernelSet) {
    e.us(s.input_dim());
    e.floats(s.kernels_flat());
    e.floats(s.energies());
    e.f64(s.bias());
}

fn dec_kernel_set(d: &mut Dec) -> Result<SaabKernelSet> {
    let input_dim = d.us()?;
    let kernels = d.floats()?;
    let energies = d.floats()?;
    let bias = d.f64()?;
    SaabKernelSet::from_raw(input_dim, kernels, energies, bias)
}

fn enc_kernel_sets(e: &mut Enc, sets: &[SaabKernelSet]) {
    e.us(sets.len());
    for s in sets {
        enc_kernel_set(e, s);
    }
}

fn dec_kernel_sets(d: &mut Dec) -> Result<Vec<SaabKernelSet>> {
    let n = d.count(8 * 4)?;
    (0..n).map(|_| dec_kernel_set(d)).collect()
}

fn enc_cw_stage(e: &mut Enc, s: &CwSaabStage) {
    e.us(s.stage_index);
    e.us(s.window.0);
    e.us(s.window.1);
    e.us(s.stride);
    enc_kernel_sets(e, s.kernel_sets());
    e.us(s.channels().len());
    for c in s.channels() {
        e.us(c.input_channel);
        e.us(c.kernel_index);
        e.f64(c.cumulative_energy);
        e.u8(match c.label {
            ChannelLabel::Intermediate => 0,
            ChannelLabel::Leaf => 1,
            ChannelLabel::Discard => 2,
        });
    }
    e.indices(s.degenerate_channels());
}

fn dec_cw_stage(d: &mut Dec) -> Result<CwSaabStage> {
    let stage_index = d.us()?;
    let window = (d.us()?, d.us()?);
    let stride = d.us()?;
    let kernel_sets = dec_kernel_sets(d)?;
    let n = d.count(8 + 8 + 8 + 1)?;
    let mut channels = Vec::with_capacity(n);
    for _ in 0..n {
        let input_channel = d.us()?;
        let kernel_index = d.us()?;
        let cumulative_energy = d.f64()?;
        let label = match d.u8()? {
            0 => ChannelLabel::Intermediate,
            1 => ChannelLabel::Leaf,
            2 => ChannelLabel::Discard,
            b => return Err(GlError::Archive(format!("invalid channel label byte {b}"))),
        };
        channels.push(CwChannel {
            input_channel,
            kernel_index,
            cumulative_energy,
            label,
        });
    }
    let degenerate = d.indices()?;
    CwSaabStage::from_raw(stage_index, window, stride, kernel_sets, channels, degenerate)
}

fn enc_stage_config(e: &mut Enc, c: &HopStageConfig) {
    e.us(c.window.0);
    e.us(c.window.1);
    e.us(c.stride);
    e.u8(match c.kind {
        TransformKind::Standard => 0,
        TransformKind::ChannelWise => 1,
    });
    e.us(c.pool.0);
    e.us(c.pool.1);
    e.u8(match c.pool_mode {
        PoolMode::Max => 0,
        PoolMode::AbsoluteMax => 1,
    });
    match c.num_kernels {
        KernelCount::Lossless => e.u8(0),
        KernelCount::Fixed(k) => {
            e.u8(1);
            e.us(k);
        }
    }
    e.f64(c.threshold_intermediate);
    e.f64(c.threshold_keep);
    e.us(c.patch_cap);
}

fn dec_stage_config(d: &mut Dec) -> Result<HopStageConfig> {
    let window = (d.us()?, d.us()?);
    let stride = d.us()?;
    let kind = match d.u8()? {
        0 => TransformKind::Standard,
        1 => TransformKind::ChannelWise,
        b => return Err(GlError::Archive(format!("invalid transform kind byte {b}"))),
    };
    let pool = (d.us()?, d.us()?);
    let pool_mode = match d.u8()? {
        0 => PoolMode::Max,
        1 => PoolMode::AbsoluteMax,
        b => return Err(GlError::Archive(format!("invalid pool mode byte {b}"))),
    };
    let num_kernels = match d.u8()? {
        0 => KernelCount::Lossless,
        1 => KernelCount::Fixed(d.us()?),
        b => return Err(GlError::Archive(format!("invalid kernel count byte {b}"))),
    };
    Ok(HopStageConfig {
        window,
        stride,
        kind,
        pool,
        pool_mode,
        num_kernels,
        threshold_intermediate: d.f64()?,
        threshold_keep: d.f64()?,
        patch_cap: d.us()?,
    })
}

fn enc_shape(e: &mut Enc, s: (usize, usize, usize)) {
    e.us(s.0);
    e.us(s.1);
    e.us(s.2);
}

fn dec_shape(d: &mut Dec) -> Result<(usize, usize, usize)> {
    Ok((d.us()?, d.us()?, d.us()?))
}

fn enc_pipeline(e: &mut Enc, p: &HopPipeline) {
    match p.variant {
        PipelineVariant::PixelHop => e.u8(0),
        PipelineVariant::PixelHopPp => e.u8(1),
        PipelineVariant::Iphop { spectral_coverage } => {
            e.u8(2);
            e.f64(spectral_coverage);
        }
    }
    enc_shape(e, p.input_shape);
    e.u64(p.seed);
    e.us(p.hops.len());
    for hop in &p.hops {
        enc_stage_config(e, &hop.config);
        enc_hop_stage(e, &hop.stage);
        enc_spectral(e, &hop.spectral);
        enc_shape(e, hop.input_shape);
        enc_shape(e, hop.output_shape);
    }
}

fn enc_hop_stage(e: &mut Enc, stage: &HopStage) {
    match stage {
        HopStage::Standard(s) => {
            e.u8(0);
            e.us(s.stage_index);
            e.us(s.window.0);
            e.us(s.window.1);
            e.us(s.stride);
            enc_kernel_set(e, &s.kernels);
            e.floats(&s.energies);
        }
        HopStage::ChannelWise(s) => {
            e.u8(1);
            enc_cw_stage(e, s);
        }
    }
}

fn enc_spectral(e: &mut Enc, spectral: &Option<Vec<SaabKernelSet>>) {
    match spectral {
        None => e.u8(0),
        Some(sets) => {
            e.u8(1);
            enc_kernel_sets(e, sets);
        }
    }
}

/// Exact encoded byte sizes of one hop's transform and spectral parts, for
/// the metrics report's size table.
pub fn encoded_hop_bytes(hop: &FittedHop) -> (u64, u64) {
    let mut t = Enc::default();
    enc_hop_stage(&mut t, &hop.stage);
    let mut s = Enc::default();
    enc_spectral(&mut s, &hop.spectral);
    (t.buf.len() as u64, s.buf.len() as u64)
}

fn dec_pipeline(d: &mut Dec) -> Result<HopPipeline> {
    let variant = match d.u8()? {
        0 => PipelineVariant::PixelHop,
        1 => PipelineVariant::PixelHopPp,
        2 => PipelineVariant::Iphop {
            spectral_coverage: d.f64()?,
        },
        b => return Err(GlError::Archive(format!("invalid variant byte {b}"))),
    };
    let input_shape = dec_shape(d)?;
    let seed = d.u64()?;
    let n = d.count(1)?;
    let mut hops = Vec::with_capacity(n);
    for _ in 0..n {
        let config = dec_stage_config(d)?;
        let stage = match d.u8()? {
            0 => {
                let stage_index = d.us()?;
                let window = (d.us()?, d.us()?);
                let stride = d.us()?;
                let kernels = dec_kernel_set(d)?;
                let energies = d.floats()?;
                if energies.len() != kernels.num_kernels() {
                    return Err(GlError::Archive(format!(
                        "{} cumulative energies for {} kernels",
                        energies.len(),
                        kernels.num_kernels()
                    )));
                }
                HopStage::Standard(StandardStage {
                    stage_index,
                    window,
                    stride,
                    kernels,
                    energies,
                })
            }
            1 => HopStage::ChannelWise(dec_cw_stage(d)?),
            b => return Err(GlError::Archive(format!("invalid stage kind byte {b}"))),
        };
        let spectral = match d.u8()? {
            0 => None,
            1 => Some(dec_kernel_sets(d)?),
            b => return Err(GlError::Archive(format!("invalid spectral flag byte {b}"))),
        };
        let input_shape = dec_shape(d)?;
        let output_shape = dec_shape(d)?;
        hops.push(FittedHop {
            config,
            stage,
            spectral,
            input_shape,
            output_shape,
        });
    }
    Ok(HopPipeline {
        variant,
        input_shape,
        hops,
        seed,
    })
}

fn enc_ranking(e: &mut Enc, r: &FeatureRanking) {
    e.floats(&r.costs);
    e.floats(&r.thresholds);
    e.us(r.ranges.len());
    for &(lo, hi) in &r.ranges {
        e.f64(lo);
        e.f64(hi);
    }
    e.us(r.degenerate.len());
    for &b in &r.degenerate {
        e.boolean(b);
    }
    e.indices(&r.order);
    e.us(r.elbow);
    e.boolean(r.elbow_fallback);
}

fn dec_ranking(d: &mut Dec) -> Result<FeatureRanking> {
    let costs = d.floats()?;
    let thresholds = d.floats()?;
    let n_ranges = d.count(16)?;
    let mut ranges = Vec::with_capacity(n_ranges);
    for _ in 0..n_ranges {
        ranges.push((d.f64()?, d.f64()?));
    }
    let n_deg = d.count(1)?;
    let mut degenerate = Vec::with_capacity(n_deg);
    for _ in 0..n_deg {
        degenerate.push(d.boolean()?);
    }
    let order = d.indices()?;
    let elbow = d.us()?;
    let elbow_fallback = d.boolean()?;
    let n = costs.len();
    if thresholds.len() != n || ranges.len() != n || degenerate.len() != n || order.len() != n {
        return Err(GlError::Archive(
            "ranking arrays disagree on the column count".into(),
        ));
    }
    if elbow > n || order.iter().any(|&i| i >= n) {
        return Err(GlError::Archive("ranking order is out of range".into()));
    }
    let selected = order[..elbow].to_vec();
    Ok(FeatureRanking {
        costs,
        thresholds,
        ranges,
        degenerate,
        order,
        elbow,
        elbow_fallback,
        selected,
    })
}

fn enc_task(e: &mut Enc, t: TreeTask) {
    match t {
        TreeTask::Classification { num_classes } => {
            e.u8(0);
            e.us(num_classes);
        }
        TreeTask::Regression => e.u8(1),
    }
}

fn dec_task(d: &mut Dec) -> Result<TreeTask> {
    match d.u8()? {
        0 => Ok(TreeTask::Classification {
            num_classes: d.us()?,
        }),
        1 => Ok(TreeTask::Regression),
        b => Err(GlError::Archive(format!("invalid task byte {b}"))),
    }
}

fn enc_node(e: &mut Enc, node: &SlmNode) {
    match node {
        SlmNode::Split {
            direction,
            threshold,
            cost,
            left,
            right,
        } => {
            e.u8(0);
            e.floats(direction);
            e.f64(*threshold);
            e.f64(*cost);
            enc_node(e, left);
            enc_node(e, right);
        }
        SlmNode::Leaf { value, count } => {
            e.u8(1);
            match value {
                LeafValue::Probs(p) => {
                    e.u8(0);
                    e.floats(p);
                }
                LeafValue::Value(v) => {
                    e.u8(1);
                    e.f64(*v);
                }
            }
            e.us(*count);
        }
    }
}

fn dec_node(d: &mut Dec, depth: usize) -> Result<SlmNode> {
    if depth > 64 {
        return Err(GlError::Archive("tree nesting exceeds 64 levels".into()));
    }
    match d.u8()? {
        0 => Ok(SlmNode::Split {
            direction: d.floats()?,
            threshold: d.f64()?,
            cost: d.f64()?,
            left: Box::new(dec_node(d, depth + 1)?),
            right: Box::new(dec_node(d, depth + 1)?),
        }),
        1 => {
            let value = match d.u8()? {
                0 => LeafValue::Probs(d.floats()?),
                1 => LeafValue::Value(d.f64()?),
                b => return Err(GlError::Archive(format!("invalid leaf value byte {b}"))),
            };
            Ok(SlmNode::Leaf {
                value,
                count: d.us()?,
            })
        }
        b => Err(GlError::Archive(format!("invalid node byte {b}"))),
    }
}

fn enc_tree(e: &mut Enc, t: &SlmTree) {
    enc_task(e, t.task);
    e.us(t.num_features);
    e.us(t.options.max_depth);
    e.us(t.options.min_leaf);
    e.us(t.options.num_directions);
    e.us(t.options.axis_candidates);
    e.us(t.options.bins);
    e.u64(t.seed);
    enc_node(e, &t.root);
}

fn dec_tree(d: &mut Dec) -> Result<SlmTree> {
    let task = dec_task(d)?;
    let num_features = d.us()?;
    let options = SlmOptions {
        max_depth: d.us()?,
        min_leaf: d.us()?,
        num_directions: d.us()?,
        axis_candidates: d.us()?,
        bins: d.us()?,
    };
    let seed = d.u64()?;
    let root = dec_node(d, 0)?;
    Ok(SlmTree {
        task,
        num_features,
        options,
        seed,
        root,
    })
}

fn enc_ensemble(e: &mut Enc, ens: &DecisionEnsemble) {
    enc_task(e, ens.task);
    e.us(ens.members.len());
    for m in &ens.members {
        enc_tree(e, m);
    }
    e.floats(&ens.weights);
    e.u8(match ens.mode {
        CombineMode::MajorityVote => 0,
        CombineMode::Mean => 1,
        CombineMode::WeightedSum => 2,
    });
    match &ens.kind {
        EnsembleKind::Single => e.u8(0),
        EnsembleKind::Forest { bootstrap } => {
            e.u8(1);
            e.boolean(*bootstrap);
        }
        EnsembleKind::Boost {
            num_classes,
            shrinkage,
            rounds_completed,
            early_stopped,
            train_losses,
        } => {
            e.u8(2);
            e.us(*num_classes);
            e.f64(*shrinkage);
            e.us(*rounds_completed);
            e.boolean(*early_stopped);
            e.floats(train_losses);
        }
    }
}

fn dec_ensemble(d: &mut Dec) -> Result<DecisionEnsemble> {
    let task = dec_task(d)?;
    let n = d.count(1)?;
    let mut members = Vec::with_capacity(n);
    for _ in 0..n {
        members.push(dec_tree(d)?);
    }
    let weights = d.floats()?;
    if weights.len() != members.len() {
        return Err(GlError::Archive(format!(
            "{} weights for {} ensemble members",
            weights.len(),
            members.len()
        )));
    }
    let mode = match d.u8()? {
        0 => CombineMode::MajorityVote,
        1 => CombineMode::Mean,
        2 => CombineMode::WeightedSum,
        b => return Err(GlError::Archive(format!("invalid combine mode byte {b}"))),
    };
    let kind = match d.u8()? {
        0 => EnsembleKind::Single,
        1 => EnsembleKind::Forest {
            bootstrap: d.boolean()?,
        },
        2 => EnsembleKind::Boost {
            num_classes: d.us()?,
            shrinkage: d.f64()?,
            rounds_completed: d.us()?,
            early_stopped: d.boolean()?,
            train_losses: d.floats()?,
        },
        b => return Err(GlError::Archive(format!("invalid ensemble kind byte {b}"))),
    };
    Ok(DecisionEnsemble {
        task,
        members,
        weights,
        mode,
        kind,
    })
}

fn enc_predictor(e: &mut Enc, p: &Predictor) {
    match p {
        Predictor::Llsr(m) => {
            e.u8(0);
            e.us(m.num_features);
            e.us(m.num_classes);
            e.floats(&m.weights);
            e.boolean(m.min_norm);
        }
        Predictor::Tree(t) => {
            e.u8(1);
            enc_tree(e, t);
        }
        Predictor::Forest(ens) => {
            e.u8(2);
            enc_ensemble(e, ens);
        }
        Predictor::Boost(ens) => {
            e.u8(3);
            enc_ensemble(e, ens);
        }
    }
}

fn dec_predictor(d: &mut Dec) -> Result<Predictor> {
    match d.u8()? {
        0 => {
            let num_features = d.us()?;
            let num_classes = d.us()?;
            let weights = d.floats()?;
            let min_norm = d.boolean()?;
            if weights.len() != (num_features + 1) * num_classes {
                return Err(GlError::Archive(format!(
                    "{} weights for {} features and {} classes",
                    weights.len(),
                    num_features,
                    num_classes
                )));
            }
            Ok(Predictor::Llsr(LlsrModel {
                weights,
                num_features,
                num_classes,
                min_norm,
            }))
        }
        1 => Ok(Predictor::Tree(dec_tree(d)?)),
        2 => Ok(Predictor::Forest(dec_ensemble(d)?)),
        3 => Ok(Predictor::Boost(dec_ensemble(d)?)),
        b => Err(GlError::Archive(format!("invalid predictor byte {b}"))),
    }
}

// --- archive container ---------------------------------------------------

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Each section's encoded payload, in write order.
pub fn encode_sections(model: &TrainedModel) -> Vec<(&'static str, Vec<u8>)> {
    let mut pipeline = Enc::default();
    enc_pipeline(&mut pipeline, &model.pipeline);
    let mut ranking = Enc::default();
    enc_ranking(&mut ranking, &model.ranking);
    let mut predictor = Enc::default();
    enc_predictor(&mut predictor, &model.predictor);
    let mut config = Enc::default();
    config.text(&model.config.to_text());
    vec![
        ("pipeline", pipeline.buf),
        ("ranking", ranking.buf),
        ("predictor", predictor.buf),
        ("config", config.buf),
    ]
}

/// Serialize a model to its complete archive byte string.
pub fn encode_model(model: &TrainedModel) -> Vec<u8> {
    let sections = encode_sections(model);
    let mut e = Enc::default();
    e.buf.extend_from_slice(MAGIC);
    e.u64(ARCHIVE_VERSION);
    e.us(sections.len());
    for (name, payload) in &sections {
        e.text(name);
        e.us(payload.len());
        e.buf.extend_from_slice(payload);
    }
    let checksum = fnv1a(&e.buf);
    e.u64(checksum);
    e.buf
}

/// Deserialize a model, verifying the magic, version, and checksum first.
pub fn decode_model(bytes: &[u8]) -> Result<TrainedModel> {
    if bytes.len() < MAGIC.len() + 8 + 8 {
        return Err(GlError::Archive(format!(
            "{} bytes is too short to be a model archive",
            bytes.len()
        )));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(GlError::Archive(
            "missing model magic; this is not a model archive".into(),
        ));
    }
    let mut d = Dec::new(&bytes[..bytes.len() - 8]);
    d.pos = MAGIC.len();
    let version = d.u64()?;
    if version != ARCHIVE_VERSION {
        return Err(GlError::ArchiveVersion {
            found: version,
            supported: ARCHIVE_VERSION,
        });
    }
    let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
    let computed = fnv1a(&bytes[..bytes.len() - 8]);
    if stored != computed {
        return Err(GlError::ChecksumMismatch { stored, computed });
    }

    let num_sections = d.count(1)?;
    let mut pipeline = None;
    let mut ranking = None;
    let mut predictor = None;
    let mut config = None;
    for _ in 0..num_sections {
        let name = d.text()?;
        let len = d.count(1)?;
        let payload = d.take(len)?;
        let mut pd = Dec::new(payload);
        match name.as_str() {
            "pipeline" if pipeline.is_none() => pipeline = Some(dec_pipeline(&mut pd)?),
            "ranking" if ranking.is_none() => ranking = Some(dec_ranking(&mut pd)?),
            "predictor" if predictor.is_none() => predictor = Some(dec_predictor(&mut pd)?),
            "config" if config.is_none() => {
                config = Some(TrainConfig::parse(&pd.text()?)?);
            }
            _ => {
                return Err(GlError::Archive(format!(
                    "unexpected or repeated section {name:?}"
                )))
            }
        }
        if !pd.done() {
            return Err(GlError::Archive(format!(
                "section {name:?} has trailing bytes"
            )));
        }
    }
    if !d.done() {
        return Err(GlError::Archive("trailing bytes after sections".into()));
    }
    match (pipeline, ranking, predictor, config) {
        (Some(pipeline), Some(ranking), Some(predictor), Some(config)) => Ok(TrainedModel {
            pipeline,
            ranking,
            predictor,
            config,
        }),
        _ => Err(GlError::Archive("archive is missing a section".into())),
    }
}

/// Write a model archive to disk.
pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode_model(model)).map_err(|e| GlError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Read a model archive from disk.
pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let bytes = std::fs::read(path).map_err(|e| GlError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    decode_model(&bytes)
}
