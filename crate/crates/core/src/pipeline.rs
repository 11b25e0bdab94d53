//! Multi-hop feature pipelines. Each hop fits a patch transform on the
//! previous hop's forwarded channels, pools its responses, and contributes
//! feature blocks per image: the pooled spatial responses, and (for the
//! spectral variant) a truncated transform of each pooled map as a whole —
//! a summary that sees the hop's full receptive field at once.

use rayon::prelude::*;

use crate::cw::{apply_cw_saab, fit_cw_saab, CwFitOptions, CwSaabStage};
use crate::error::{GlError, Result};
use crate::features::FeatureColumns;
use crate::rng::{derive_seed, subsample_indices};
use crate::saab::{
    apply_saab_to_tensor, fit_saab, fit_saab_capped, KernelCount, SaabKernelSet, TransformKind,
};
use crate::tensor::{
    extract_patches, flatten_channel, pool, Padding, PoolMode, SpatialSpectralTensor,
};

/// Which cascade the pipeline runs. The variants share the hop machinery and
/// differ in what each hop fits and emits:
///
/// * `PixelHop`: every hop fits one joint transform over all input channels.
/// * `PixelHopPp`: hops fit per-channel transforms and route each output
///   channel by its cumulative energy (forward, keep, or discard).
/// * `Iphop`: like `PixelHopPp`, plus a spectral block per hop that
///   re-transforms each pooled map as a single vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PipelineVariant {
    PixelHop,
    PixelHopPp,
    Iphop {
        /// Fraction of each pooled map's energy the spectral kernels must
        /// cover, in (0, 1].
        spectral_coverage: f64,
    },
}

impl PipelineVariant {
    /// The spectral variant at its default 0.98 coverage.
    pub fn iphop() -> Self {
        PipelineVariant::Iphop {
            spectral_coverage: 0.98,
        }
    }

    /// Pooling used when a stage config does not choose one explicitly:
    /// plain max for the first two variants, absolute max for the spectral
    /// one (whose responses are signed either way).
    pub fn default_pool_mode(&self) -> PoolMode {
        match self {
            PipelineVariant::PixelHop | PipelineVariant::PixelHopPp => PoolMode::Max,
            PipelineVariant::Iphop { .. } => PoolMode::AbsoluteMax,
        }
    }

    /// Per-stage transform kind this variant normally runs.
    pub fn default_kind(&self) -> TransformKind {
        match self {
            PipelineVariant::PixelHop => TransformKind::Standard,
            _ => TransformKind::ChannelWise,
        }
    }

    pub fn spectral_coverage(&self) -> Option<f64> {
        match self {
            PipelineVariant::Iphop { spectral_coverage } => Some(*spectral_coverage),
            _ => None,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            PipelineVariant::PixelHop => "pixelhop",
            PipelineVariant::PixelHopPp => "pixelhop_pp",
            PipelineVariant::Iphop { .. } => "iphop",
        }
    }
}

/// Per-hop configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopStageConfig {
    pub window: (usize, usize),
    pub stride: usize,
    /// One joint transform across channels, or one per input channel.
    pub kind: TransformKind,
    /// Pooling window applied to the hop's responses; (1, 1) disables it.
    pub pool: (usize, usize),
    pub pool_mode: PoolMode,
    pub num_kernels: KernelCount,
    /// Cumulative energy at or above this feeds the next hop
    /// (channel-wise stages only).
    pub threshold_intermediate: f64,
    /// Cumulative energy at or above this is kept as a feature
    /// (channel-wise stages only).
    pub threshold_keep: f64,
    /// Covariance subsample cap during fitting (per channel for
    /// channel-wise stages, overall for joint ones).
    pub patch_cap: usize,
}

/// One joint transform over full-depth patches: all input channels enter one
/// kernel set, and every output channel both feeds the next hop and is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardStage {
    pub stage_index: usize,
    pub window: (usize, usize),
    pub stride: usize,
    pub kernels: SaabKernelSet,
    /// Cumulative energy per output channel: this stage's energy fraction
    /// scaled by the energy that reached it.
    pub energies: Vec<f64>,
}

/// The transform a hop fitted, by stage kind.
#[derive(Debug, Clone, PartialEq)]
pub enum HopStage {
    Standard(StandardStage),
    ChannelWise(CwSaabStage),
}

impl HopStage {
    /// Transform one image into this hop's response tensor (pre-pooling).
    pub fn apply(&self, img: &SpatialSpectralTensor) -> Result<SpatialSpectralTensor> {
        match self {
            HopStage::Standard(s) => apply_saab_to_tensor(&s.kernels, img, s.window, s.stride),
            HopStage::ChannelWise(s) => apply_cw_saab(s, img),
        }
    }

    /// Output channels that continue into the next hop, as positions in this
    /// hop's emitted channel order, with their cumulative energies. Joint
    /// stages forward everything; channel-wise stages forward the channels
    /// above the intermediate threshold.
    pub fn forward_channels(&self) -> (Vec<usize>, Vec<f64>) {
        match self {
            HopStage::Standard(s) => ((0..s.energies.len()).collect(), s.energies.clone()),
            HopStage::ChannelWise(s) => s.intermediate_outputs(),
        }
    }
}

/// One fitted hop: the transform stage plus its pooled-map spectral sets.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedHop {
    pub config: HopStageConfig,
    pub stage: HopStage,
    /// One kernel set per emitted channel, fit on the flattened pooled maps;
    /// present exactly when the pipeline variant has spectral features.
    pub spectral: Option<Vec<SaabKernelSet>>,
    /// (height, width, channels) entering the hop.
    pub input_shape: (usize, usize, usize),
    /// (height, width, emitted channels) after the transform and pooling.
    pub output_shape: (usize, usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HopPipeline {
    pub variant: PipelineVariant,
    pub input_shape: (usize, usize, usize),
    pub hops: Vec<FittedHop>,
    pub seed: u64,
}

/// What a feature block holds: per-position responses, or per-map transform
/// coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Spatial,
    Spectral,
}

/// A group of feature columns for a batch of images, stored column-major so
/// selection and ranking read each column contiguously. `hop` is 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    pub hop: usize,
    pub kind: BlockKind,
    pub num_rows: usize,
    pub num_columns: usize,
    values: Vec<f64>,
}

impl FeatureBlock {
    pub fn new(
        hop: usize,
        kind: BlockKind,
        num_rows: usize,
        num_columns: usize,
        values: Vec<f64>,
    ) -> Self {
        assert_eq!(values.len(), num_rows * num_columns);
        Self {
            hop,
            kind,
            num_rows,
            num_columns,
            values,
        }
    }

    pub fn name(&self) -> String {
        let kind = match self.kind {
            BlockKind::Spatial => "spatial",
            BlockKind::Spectral => "spectral",
        };
        format!("hop{}.{kind}", self.hop)
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.values[j * self.num_rows..(j + 1) * self.num_rows]
    }
}

/// The concatenated feature blocks of a batch, one row per image.
#[derive(Debug, Clone, PartialEq)]
pub struct HopFeatureSet {
    pub blocks: Vec<FeatureBlock>,
}

impl HopFeatureSet {
    pub fn num_rows(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.num_rows)
    }

    pub fn num_columns(&self) -> usize {
        self.blocks.iter().map(|b| b.num_columns).sum()
    }

    /// The block holding global column `j`, and the column's index inside it.
    fn locate(&self, j: usize) -> (&FeatureBlock, usize) {
        let mut offset = 0;
        for b in &self.blocks {
            if j < offset + b.num_columns {
                return (b, j - offset);
            }
            offset += b.num_columns;
        }
        panic!("column {j} out of range for {} columns", offset);
    }

    /// Gather the named columns into one row-major matrix, in the given
    /// column order.
    pub fn select_into_rows(&self, columns: &[usize]) -> Result<Vec<f64>> {
        let total = self.num_columns();
        for &j in columns {
            if j >= total {
                return Err(GlError::Dimension(format!(
                    "column {j} out of range for {total} columns"
                )));
            }
        }
        let n = self.num_rows();
        let k = columns.len();
        let mut out = vec![0.0; n * k];
        for (slot, &j) in columns.iter().enumerate() {
            let (block, local) = self.locate(j);
            for (i, &v) in block.column(local).iter().enumerate() {
                out[i * k + slot] = v;
            }
        }
        Ok(out)
    }
}

impl FeatureColumns for HopFeatureSet {
    fn num_rows(&self) -> usize {
        HopFeatureSet::num_rows(self)
    }

    fn num_columns(&self) -> usize {
        HopFeatureSet::num_columns(self)
    }

    fn copy_column(&self, j: usize, out: &mut Vec<f64>) {
        let (block, local) = self.locate(j);
        out.clear();
        out.extend_from_slice(block.column(local));
    }
}

fn check_same_shapes(images: &[SpatialSpectralTensor]) -> Result<(usize, usize, usize)> {
    let first = images
        .first()
        .ok_or_else(|| GlError::Dimension("no images to process".into()))?;
    let shape = (first.height(), first.width(), first.channels());
    for (i, img) in images.iter().enumerate() {
        let s = (img.height(), img.width(), img.channels());
        if s != shape {
            return Err(GlError::Dimension(format!(
                "image {i} has shape {s:?}, expected {shape:?}"
            )));
        }
    }
    Ok(shape)
}

/// Training patches per channel, capped at `patch_cap` rows per channel by
/// choosing patch indices over the whole batch up front; picking the rows
/// before extraction keeps memory at the cap instead of the full patch set,
/// and the selection matches capping after full extraction exactly.
fn gather_channel_patches(
    images: &[SpatialSpectralTensor],
    window: (usize, usize),
    stride: usize,
    patch_cap: usize,
    stage_seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let channels = images[0].channels();
    let probe = extract_patches(&images[0].channel(0)?, window, stride, Padding::None)?;
    let per_image = probe.rows * probe.cols;
    let total = images.len() * per_image;
    let dim = probe.patch_dim;

    let chosen: Vec<Vec<usize>> = (0..channels)
        .map(|c| subsample_indices(total, patch_cap, derive_seed(stage_seed, c as u64)))
        .collect();
    let mut data: Vec<Vec<f64>> = chosen
        .iter()
        .map(|idx| Vec::with_capacity(idx.len() * dim))
        .collect();
    let mut cursor = vec![0usize; channels];

    for (i, img) in images.iter().enumerate() {
        let hi = (i + 1) * per_image;
        for c in 0..channels {
            let idx = &chosen[c];
            if cursor[c] >= idx.len() || idx[cursor[c]] >= hi {
                continue;
            }
            let grid = extract_patches(&img.channel(c)?, window, stride, Padding::None)?;
            while cursor[c] < idx.len() && idx[cursor[c]] < hi {
                let r = idx[cursor[c]] - i * per_image;
                data[c].extend_from_slice(grid.patch(r));
                cursor[c] += 1;
            }
        }
    }
    Ok(data)
}

/// Full-depth training patches for a joint stage, capped the same way.
fn gather_joint_patches(
    images: &[SpatialSpectralTensor],
    window: (usize, usize),
    stride: usize,
    patch_cap: usize,
    stage_seed: u64,
) -> Result<Vec<f64>> {
    let probe = extract_patches(&images[0], window, stride, Padding::None)?;
    let per_image = probe.rows * probe.cols;
    let total = images.len() * per_image;
    let dim = probe.patch_dim;

    let chosen = subsample_indices(total, patch_cap, stage_seed);
    let mut data = Vec::with_capacity(chosen.len() * dim);
    let mut cursor = 0;
    for (i, img) in images.iter().enumerate() {
        let hi = (i + 1) * per_image;
        if cursor >= chosen.len() || chosen[cursor] >= hi {
            continue;
        }
        let grid = extract_patches(img, window, stride, Padding::None)?;
        while cursor < chosen.len() && chosen[cursor] < hi {
            data.extend_from_slice(grid.patch(chosen[cursor] - i * per_image));
            cursor += 1;
        }
    }
    Ok(data)
}

fn fit_standard_stage(
    images: &[SpatialSpectralTensor],
    parent_energies: &[f64],
    stage_index: usize,
    cfg: &HopStageConfig,
    stage_seed: u64,
) -> Result<StandardStage> {
    let data = gather_joint_patches(images, cfg.window, cfg.stride, cfg.patch_cap, stage_seed)?;
    let dim = cfg.window.0 * cfg.window.1 * images[0].channels();
    let kernels = fit_saab_capped(&data, dim, cfg.num_kernels, false, cfg.patch_cap, stage_seed)?;
    let parent_total: f64 = parent_energies.iter().sum();
    let set_total = kernels.total_energy();
    let energies = kernels
        .energies()
        .iter()
        .map(|&e| {
            if set_total > 0.0 {
                parent_total * e / set_total
            } else {
                0.0
            }
        })
        .collect();
    Ok(StandardStage {
        stage_index,
        window: cfg.window,
        stride: cfg.stride,
        kernels,
        energies,
    })
}

fn fit_cw_stage(
    images: &[SpatialSpectralTensor],
    parent_energies: &[f64],
    stage_index: usize,
    cfg: &HopStageConfig,
    stage_seed: u64,
) -> Result<CwSaabStage> {
    let channel_data =
        gather_channel_patches(images, cfg.window, cfg.stride, cfg.patch_cap, stage_seed)?;
    let opts = CwFitOptions {
        num_kernels: cfg.num_kernels,
        threshold_intermediate: cfg.threshold_intermediate,
        threshold_keep: cfg.threshold_keep,
        patch_cap: cfg.patch_cap,
        seed: stage_seed,
    };
    fit_cw_saab(
        &channel_data,
        cfg.window.0 * cfg.window.1,
        parent_energies,
        stage_index,
        cfg.window,
        cfg.stride,
        &opts,
    )
}

/// Transform and pool every image through a fitted stage.
fn apply_stage_batch(
    stage: &HopStage,
    config: &HopStageConfig,
    images: &[SpatialSpectralTensor],
) -> Result<Vec<SpatialSpectralTensor>> {
    images
        .par_iter()
        .map(|img| {
            let responses = stage.apply(img)?;
            if config.pool == (1, 1) {
                Ok(responses)
            } else {
                pool(&responses, config.pool, config.pool_mode)
            }
        })
        .collect()
}

/// Pooled responses flattened channel-major: column `c * h * w + s` holds
/// spatial position `s` of emitted channel `c`.
fn spatial_block(pooled: &[SpatialSpectralTensor], hop: usize) -> Result<FeatureBlock> {
    let n = pooled.len();
    let (h, w, k) = (pooled[0].height(), pooled[0].width(), pooled[0].channels());
    let hw = h * w;
    let mut values = vec![0.0; n * hw * k];
    for (i, t) in pooled.iter().enumerate() {
        for c in 0..k {
            let flat = flatten_channel(t, c)?;
            for (s, &v) in flat.iter().enumerate() {
                values[(c * hw + s) * n + i] = v;
            }
        }
    }
    Ok(FeatureBlock::new(
        hop + 1,
        BlockKind::Spatial,
        n,
        hw * k,
        values,
    ))
}

/// Keep the leading kernels that cover `coverage` of the set's total energy
/// (always at least the first).
fn truncate_at_coverage(set: &SaabKernelSet, coverage: f64) -> Result<SaabKernelSet> {
    let total = set.total_energy();
    let dim = set.input_dim();
    let mut keep = set.num_kernels();
    if total > 0.0 {
        let mut cum = 0.0;
        for (ki, &e) in set.energies().iter().enumerate() {
            cum += e;
            if cum >= coverage * total {
                keep = ki + 1;
                break;
            }
        }
    } else {
        keep = 1;
    }
    SaabKernelSet::from_raw(
        dim,
        set.kernels_flat()[..keep * dim].to_vec(),
        set.energies()[..keep].to_vec(),
        set.bias(),
    )
}

/// Fit one truncated kernel set per emitted channel over the flattened
/// pooled maps of the whole batch.
fn fit_spectral(pooled: &[SpatialSpectralTensor], coverage: f64) -> Result<Vec<SaabKernelSet>> {
    let (h, w, k) = (pooled[0].height(), pooled[0].width(), pooled[0].channels());
    let dim = h * w;
    (0..k)
        .into_par_iter()
        .map(|c| {
            let mut data = Vec::with_capacity(pooled.len() * dim);
            for t in pooled {
                data.extend_from_slice(&flatten_channel(t, c)?);
            }
            let full = fit_saab(&data, dim, KernelCount::Lossless, false)?;
            truncate_at_coverage(&full, coverage)
        })
        .collect()
}

/// Transform each image's pooled maps through the per-channel kernel sets,
/// producing the hop's spectral feature block.
pub fn spectral_augment(
    pooled: &[SpatialSpectralTensor],
    sets: &[SaabKernelSet],
    hop: usize,
) -> Result<FeatureBlock> {
    let n = pooled.len();
    let widths: Vec<usize> = sets.iter().map(|s| s.num_kernels()).collect();
    let offsets: Vec<usize> = widths
        .iter()
        .scan(0, |acc, &w| {
            let o = *acc;
            *acc += w;
            Some(o)
        })
        .collect();
    let cols: usize = widths.iter().sum();
    let mut values = vec![0.0; n * cols];
    for (i, t) in pooled.iter().enumerate() {
        if t.channels() != sets.len() {
            return Err(GlError::Dimension(format!(
                "{} pooled channels but {} spectral kernel sets",
                t.channels(),
                sets.len()
            )));
        }
        for (c, set) in sets.iter().enumerate() {
            let flat = flatten_channel(t, c)?;
            let coeffs = crate::saab::apply_saab(set, &flat)?;
            for (ki, &v) in coeffs.iter().enumerate() {
                values[(offsets[c] + ki) * n + i] = v;
            }
        }
    }
    Ok(FeatureBlock::new(
        hop + 1,
        BlockKind::Spectral,
        n,
        cols,
        values,
    ))
}

fn validate_config(s: usize, cfg: &HopStageConfig) -> Result<()> {
    if cfg.window.0 == 0 || cfg.window.1 == 0 {
        return Err(GlError::Config(format!("hop {} window must be positive", s + 1)));
    }
    if cfg.stride == 0 {
        return Err(GlError::Config(format!("hop {} stride must be positive", s + 1)));
    }
    if cfg.pool.0 == 0 || cfg.pool.1 == 0 {
        return Err(GlError::Config(format!(
            "hop {} pool window must be positive",
            s + 1
        )));
    }
    if cfg.patch_cap == 0 {
        return Err(GlError::Config(format!(
            "hop {} patch cap must be positive",
            s + 1
        )));
    }
    Ok(())
}

/// Forwarded channels of `pooled` for the next hop; moves the batch through
/// untouched when every channel continues.
fn forward_batch(
    pooled: Vec<SpatialSpectralTensor>,
    positions: &[usize],
) -> Result<Vec<SpatialSpectralTensor>> {
    if positions.len() == pooled[0].channels() {
        return Ok(pooled);
    }
    pooled.iter().map(|t| t.select_channels(positions)).collect()
}

/// Fit every hop on the batch and return the pipeline together with the
/// batch's features (identical to what [`transform_pipeline`] would
/// recompute, without the second pass).
pub fn fit_pipeline(
    images: &[SpatialSpectralTensor],
    configs: &[HopStageConfig],
    variant: PipelineVariant,
    seed: u64,
) -> Result<(HopPipeline, HopFeatureSet)> {
    let input_shape = check_same_shapes(images)?;
    if configs.is_empty() {
        return Err(GlError::Config("need at least one hop".into()));
    }
    if let Some(coverage) = variant.spectral_coverage() {
        if !(coverage > 0.0 && coverage <= 1.0) {
            return Err(GlError::Config(format!(
                "spectral coverage must be in (0, 1], got {coverage}"
            )));
        }
    }

    let mut current: Vec<SpatialSpectralTensor> = images.to_vec();
    let mut parent_energies = vec![1.0; input_shape.2];
    let mut hops = Vec::with_capacity(configs.len());
    let mut blocks = Vec::new();

    for (s, cfg) in configs.iter().enumerate() {
        validate_config(s, cfg)?;
        let stage_seed = derive_seed(seed, s as u64);
        let stage = match cfg.kind {
            TransformKind::Standard => HopStage::Standard(fit_standard_stage(
                &current,
                &parent_energies,
                s,
                cfg,
                stage_seed,
            )?),
            TransformKind::ChannelWise => HopStage::ChannelWise(fit_cw_stage(
                &current,
                &parent_energies,
                s,
                cfg,
                stage_seed,
            )?),
        };

        let in_shape = (current[0].height(), current[0].width(), current[0].channels());
        let pooled = apply_stage_batch(&stage, cfg, &current)?;
        let out_shape = (pooled[0].height(), pooled[0].width(), pooled[0].channels());
        blocks.push(spatial_block(&pooled, s)?);
        let spectral_sets = match variant.spectral_coverage() {
            Some(coverage) => {
                let sets = fit_spectral(&pooled, coverage)?;
                blocks.push(spectral_augment(&pooled, &sets, s)?);
                Some(sets)
            }
            None => None,
        };

        let last = s + 1 == configs.len();
        let (positions, energies) = stage.forward_channels();
        if !last {
            if positions.is_empty() {
                return Err(GlError::Config(format!(
                    "hop {} has no input: every channel of hop {} stopped as a leaf or was discarded",
                    s + 2,
                    s + 1
                )));
            }
            current = forward_batch(pooled, &positions)?;
            parent_energies = energies;
        } else {
            current.clear();
        }

        hops.push(FittedHop {
            config: *cfg,
            stage,
            spectral: spectral_sets,
            input_shape: in_shape,
            output_shape: out_shape,
        });
    }

    Ok((
        HopPipeline {
            variant,
            input_shape,
            hops,
            seed,
        },
        HopFeatureSet { blocks },
    ))
}

/// Run a fitted pipeline over a batch, producing the same block layout the
/// fit produced for its training batch.
pub fn transform_pipeline(
    pipeline: &HopPipeline,
    images: &[SpatialSpectralTensor],
) -> Result<HopFeatureSet> {
    let shape = check_same_shapes(images)?;
    if shape != pipeline.input_shape {
        return Err(GlError::Dimension(format!(
            "stage 0 expects input shape {:?} but the batch has {shape:?}",
            pipeline.input_shape
        )));
    }
    let mut current: Vec<SpatialSpectralTensor> = images.to_vec();
    let mut blocks = Vec::new();
    for (s, hop) in pipeline.hops.iter().enumerate() {
        let pooled = apply_stage_batch(&hop.stage, &hop.config, &current)?;
        blocks.push(spatial_block(&pooled, s)?);
        if let Some(sets) = &hop.spectral {
            blocks.push(spectral_augment(&pooled, sets, s)?);
        }
        let last = s + 1 == pipeline.hops.len();
        if !last {
            let (positions, _) = hop.stage.forward_channels();
            current = forward_batch(pooled, &positions)?;
        } else {
            current.clear();
        }
    }
    Ok(HopFeatureSet { blocks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cw::ChannelLabel;
    use crate::rng::seeded_rng;
    use rand::Rng;

    fn noise_images(n: usize, h: usize, w: usize, seed: u64) -> Vec<SpatialSpectralTensor> {
        let mut rng = seeded_rng(seed);
        (0..n)
            .map(|_| {
                let values: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
                SpatialSpectralTensor::new(h, w, 1, values).unwrap()
            })
            .collect()
    }

    fn keep_all(window: usize, pool: usize) -> HopStageConfig {
        HopStageConfig {
            window: (window, window),
            stride: 1,
            kind: TransformKind::ChannelWise,
            pool: (pool, pool),
            pool_mode: PoolMode::AbsoluteMax,
            num_kernels: KernelCount::Lossless,
            threshold_intermediate: 0.0,
            threshold_keep: 0.0,
            patch_cap: 100_000,
        }
    }

    fn joint(window: usize, pool: usize) -> HopStageConfig {
        HopStageConfig {
            kind: TransformKind::Standard,
            pool_mode: PoolMode::Max,
            ..keep_all(window, pool)
        }
    }

    #[test]
    fn two_hop_geometry_chain() {
        let images = noise_images(8, 20, 20, 1);
        let configs = [keep_all(3, 3), keep_all(3, 2)];
        let (pipeline, features) =
            fit_pipeline(&images, &configs, PipelineVariant::PixelHopPp, 7).unwrap();
        // 20x20 -> 18x18x9 -> pool 3 -> 6x6x9
        assert_eq!(pipeline.hops[0].input_shape, (20, 20, 1));
        assert_eq!(pipeline.hops[0].output_shape, (6, 6, 9));
        // 6x6x9 -> 4x4x81 -> pool 2 -> 2x2x81
        assert_eq!(pipeline.hops[1].input_shape, (6, 6, 9));
        assert_eq!(pipeline.hops[1].output_shape, (2, 2, 81));
        // one block per hop: no spectral features in this variant
        assert_eq!(features.blocks.len(), 2);
        assert_eq!(features.blocks[0].name(), "hop1.spatial");
        assert_eq!(features.blocks[0].num_columns, 6 * 6 * 9);
        assert_eq!(features.blocks[1].name(), "hop2.spatial");
        assert_eq!(features.blocks[1].num_columns, 2 * 2 * 81);
        assert_eq!(features.num_rows(), 8);
        assert_eq!(features.num_columns(), 324 + 324);
    }

    #[test]
    fn joint_stages_chain_with_full_depth_patches() {
        let images = noise_images(8, 20, 20, 1);
        let configs = [joint(3, 3), joint(3, 2)];
        let (pipeline, features) =
            fit_pipeline(&images, &configs, PipelineVariant::PixelHop, 7).unwrap();
        // same geometry as the channel-wise chain, but hop 2 fits one
        // kernel set over 3x3x9 = 81-dimensional patches
        assert_eq!(pipeline.hops[1].output_shape, (2, 2, 81));
        let HopStage::Standard(s) = &pipeline.hops[1].stage else {
            panic!("joint config must fit a joint stage");
        };
        assert_eq!(s.kernels.input_dim(), 81);
        assert_eq!(features.blocks.len(), 2);
        // each hop's cumulative energies are fractions of what reached it
        let HopStage::Standard(first) = &pipeline.hops[0].stage else {
            panic!("joint config must fit a joint stage");
        };
        let total: f64 = first.energies.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        // past the leading mean kernel, energies fall off in kernel order
        assert!(first.energies[1..].windows(2).all(|w| w[0] >= w[1] - 1e-15));
    }

    #[test]
    fn joint_and_channel_wise_agree_on_one_channel() {
        // with a single input channel, keep-everything thresholds, and the
        // same pooling, the two stage kinds compute the same transform
        // from the same seed
        let images = noise_images(12, 10, 10, 21);
        let (_, cw) = fit_pipeline(&images, &[keep_all(3, 2)], PipelineVariant::PixelHopPp, 5)
            .unwrap();
        let same_pool = HopStageConfig {
            kind: TransformKind::Standard,
            ..keep_all(3, 2)
        };
        let (_, st) = fit_pipeline(&images, &[same_pool], PipelineVariant::PixelHop, 5).unwrap();
        assert_eq!(cw.num_columns(), st.num_columns());
        for (a, b) in cw.blocks[0]
            .values
            .iter()
            .zip(&st.blocks[0].values)
        {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn transform_matches_fit_features_exactly() {
        let images = noise_images(40, 14, 14, 3);
        let configs = [keep_all(3, 2), keep_all(3, 1)];
        let (pipeline, fit_features) =
            fit_pipeline(&images, &configs, PipelineVariant::iphop(), 11).unwrap();
        let again = transform_pipeline(&pipeline, &images).unwrap();
        assert_eq!(fit_features, again);
        // two hops with spectral features: four blocks in hop order
        let names: Vec<String> = fit_features.blocks.iter().map(|b| b.name()).collect();
        assert_eq!(
            names,
            ["hop1.spatial", "hop1.spectral", "hop2.spatial", "hop2.spectral"]
        );
        for hop in &pipeline.hops {
            assert!(hop.spectral.is_some(), "the spectral variant fits every hop");
        }
    }

    #[test]
    fn cumulative_energies_never_grow_along_the_cascade() {
        let images = noise_images(10, 14, 14, 5);
        let configs = [keep_all(3, 2), keep_all(3, 1)];
        let (pipeline, _) =
            fit_pipeline(&images, &configs, PipelineVariant::PixelHopPp, 2).unwrap();
        let (_, hop1_energies) = pipeline.hops[0].stage.forward_channels();
        let HopStage::ChannelWise(second) = &pipeline.hops[1].stage else {
            panic!("channel-wise config must fit a channel-wise stage");
        };
        for ch in second.channels() {
            let parent = hop1_energies[ch.input_channel];
            assert!(ch.cumulative_energy <= parent + 1e-15);
            assert!(ch.cumulative_energy >= 0.0);
            assert!(ch.cumulative_energy <= 1.0);
        }
        // and within hop 1 they are fractions of the single raw channel
        let HopStage::ChannelWise(first) = &pipeline.hops[0].stage else {
            panic!("channel-wise config must fit a channel-wise stage");
        };
        let total: f64 = first.channels().iter().map(|c| c.cumulative_energy).sum();
        assert!((total - 1.0).abs() < 1e-9, "hop 1 energies sum to {total}");
    }

    #[test]
    fn spectral_blocks_shrink_with_coverage() {
        let images = noise_images(40, 8, 8, 9);
        let configs = [keep_all(3, 2)];
        let full = fit_pipeline(
            &images,
            &configs,
            PipelineVariant::Iphop {
                spectral_coverage: 1.0,
            },
            4,
        )
        .unwrap()
        .1;
        let half = fit_pipeline(
            &images,
            &configs,
            PipelineVariant::Iphop {
                spectral_coverage: 0.5,
            },
            4,
        )
        .unwrap()
        .1;
        assert_eq!(full.blocks.len(), 2);
        assert_eq!(full.blocks[1].name(), "hop1.spectral");
        assert_eq!(full.blocks[1].kind, BlockKind::Spectral);
        assert_eq!(full.blocks[1].hop, 1);
        // full coverage keeps every kernel: h*w = 9 per emitted channel
        assert_eq!(full.blocks[1].num_columns, 9 * 9);
        assert!(
            half.blocks[1].num_columns < full.blocks[1].num_columns,
            "lower coverage must keep fewer spectral columns"
        );
        assert!(half.blocks[1].num_columns >= 9, "at least one per channel");
    }

    #[test]
    fn one_pixel_maps_make_spectral_equal_spatial() {
        // pooling 8x8 responses down to 1x1 leaves nothing to transform:
        // each spectral coefficient is the map value itself
        let images = noise_images(30, 10, 10, 33);
        let configs = [keep_all(3, 8)];
        let (_, features) = fit_pipeline(
            &images,
            &configs,
            PipelineVariant::Iphop {
                spectral_coverage: 1.0,
            },
            6,
        )
        .unwrap();
        assert_eq!(features.blocks[0].num_columns, features.blocks[1].num_columns);
        assert_eq!(features.blocks[0].values, features.blocks[1].values);
    }

    #[test]
    fn starving_the_next_hop_is_an_error() {
        let images = noise_images(8, 10, 10, 13);
        let mut first = keep_all(3, 2);
        // zero-mean noise spreads energy evenly, so nothing reaches 0.9
        first.threshold_intermediate = 0.9;
        let configs = [first, keep_all(3, 1)];
        let err = fit_pipeline(&images, &configs, PipelineVariant::PixelHopPp, 1).unwrap_err();
        assert!(matches!(err, GlError::Config(_)));
        let (_, hop1) =
            fit_pipeline(&images, &configs[..1], PipelineVariant::PixelHopPp, 1).unwrap();
        let _ = hop1;
    }

    #[test]
    fn labels_flow_into_block_columns() {
        // with keep-everything thresholds every channel is intermediate
        let images = noise_images(8, 10, 10, 17);
        let configs = [keep_all(3, 2)];
        let (pipeline, _) =
            fit_pipeline(&images, &configs, PipelineVariant::PixelHopPp, 3).unwrap();
        let HopStage::ChannelWise(stage) = &pipeline.hops[0].stage else {
            panic!("channel-wise config must fit a channel-wise stage");
        };
        for ch in stage.channels() {
            assert_eq!(ch.label, ChannelLabel::Intermediate);
        }
    }

    #[test]
    fn variant_defaults() {
        assert_eq!(PipelineVariant::PixelHop.default_pool_mode(), PoolMode::Max);
        assert_eq!(
            PipelineVariant::PixelHopPp.default_pool_mode(),
            PoolMode::Max
        );
        assert_eq!(
            PipelineVariant::iphop().default_pool_mode(),
            PoolMode::AbsoluteMax
        );
        assert_eq!(
            PipelineVariant::PixelHop.default_kind(),
            TransformKind::Standard
        );
        assert_eq!(
            PipelineVariant::iphop().default_kind(),
            TransformKind::ChannelWise
        );
        assert_eq!(PipelineVariant::iphop().spectral_coverage(), Some(0.98));
        assert_eq!(PipelineVariant::PixelHopPp.spectral_coverage(), None);
        assert_eq!(PipelineVariant::PixelHop.tag(), "pixelhop");
        assert_eq!(PipelineVariant::PixelHopPp.tag(), "pixelhop_pp");
        assert_eq!(PipelineVariant::iphop().tag(), "iphop");
    }

    #[test]
    fn feature_set_column_access() {
        let a = FeatureBlock::new(1, BlockKind::Spatial, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let b = FeatureBlock::new(1, BlockKind::Spectral, 2, 1, vec![5.0, 6.0]);
        let set = HopFeatureSet { blocks: vec![a, b] };
        assert_eq!(set.num_rows(), 2);
        assert_eq!(set.num_columns(), 3);
        let mut col = Vec::new();
        set.copy_column(1, &mut col);
        assert_eq!(col, vec![3.0, 4.0]);
        set.copy_column(2, &mut col);
        assert_eq!(col, vec![5.0, 6.0]);
        // row-major gather in requested order
        let rows = set.select_into_rows(&[2, 0]).unwrap();
        assert_eq!(rows, vec![5.0, 1.0, 6.0, 2.0]);
        assert!(set.select_into_rows(&[3]).is_err());
    }

    #[test]
    fn rejects_bad_batches() {
        let pp = PipelineVariant::PixelHopPp;
        assert!(fit_pipeline(&[], &[keep_all(3, 1)], pp, 0).is_err());
        let mut images = noise_images(3, 8, 8, 1);
        images.push(SpatialSpectralTensor::zeros(6, 6, 1));
        assert!(fit_pipeline(&images, &[keep_all(3, 1)], pp, 0).is_err());
        let images = noise_images(3, 8, 8, 1);
        assert!(fit_pipeline(&images, &[], pp, 0).is_err());
        let bad = HopStageConfig {
            stride: 0,
            ..keep_all(3, 1)
        };
        assert!(fit_pipeline(&images, &[bad], pp, 0).is_err());
        let worse = PipelineVariant::Iphop {
            spectral_coverage: 0.0,
        };
        assert!(fit_pipeline(&images, &[keep_all(3, 1)], worse, 0).is_err());
        let (pipeline, _) = fit_pipeline(&images, &[keep_all(3, 1)], pp, 0).unwrap();
        let wrong = noise_images(2, 6, 6, 2);
        assert!(transform_pipeline(&pipeline, &wrong).is_err());
    }
}
