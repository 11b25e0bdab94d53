//! Channel-wise transform stages.
//!
//! Instead of one joint kernel set over a `window x window x channels`
//! patch, a channel-wise stage fits an independent kernel set per input
//! channel, which shrinks the stage's parameter count from `s^4 k^2` to
//! `s^4 k`. Each output channel carries a cumulative energy — the product
//! of normalized kernel energies along its ancestry — and is labeled by two
//! thresholds: channels at or above the upper threshold feed the next stage
//! (intermediate), channels between the thresholds are kept as features but
//! go no deeper (leaf), and channels below the lower threshold are dropped
//! entirely (discard). The DC channel is never dropped.

use crate::error::{GlError, Result};
use crate::rng::derive_seed;
use crate::saab::{apply_saab, fit_saab_capped, KernelCount, SaabKernelSet};
use crate::tensor::{extract_patches, Padding, SpatialSpectralTensor};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelLabel {
    Intermediate,
    Leaf,
    Discard,
}

/// One output channel of a channel-wise stage.
#[derive(Debug, Clone, PartialEq)]
pub struct CwChannel {
    /// Which input channel this output descends from.
    pub input_channel: usize,
    /// Kernel index inside that input channel's kernel set (0 is DC).
    pub kernel_index: usize,
    /// Product of normalized energies along the transform path, in [0, 1].
    pub cumulative_energy: f64,
    pub label: ChannelLabel,
}

#[derive(Debug, Clone, Copy)]
pub struct CwFitOptions {
    pub num_kernels: KernelCount,
    /// Cumulative energy at or above this feeds the next stage.
    pub threshold_intermediate: f64,
    /// Cumulative energy at or above this (but below the intermediate
    /// threshold) is kept as a leaf; anything below is discarded.
    pub threshold_keep: f64,
    /// Covariance subsample cap per channel.
    pub patch_cap: usize,
    pub seed: u64,
}

/// A fitted channel-wise stage: one kernel set per input channel plus the
/// label and energy bookkeeping for every output channel it can emit.
#[derive(Debug, Clone, PartialEq)]
pub struct CwSaabStage {
    pub stage_index: usize,
    pub window: (usize, usize),
    pub stride: usize,
    kernel_sets: Vec<SaabKernelSet>,
    /// All output channels in emission order: grouped by input channel,
    /// kernel order (hence energy-descending) within each group.
    channels: Vec<CwChannel>,
    /// Input channels whose AC spectrum vanished (fit kept DC only).
    degenerate: Vec<usize>,
}

impl CwSaabStage {
    pub fn from_raw(
        stage_index: usize,
        window: (usize, usize),
        stride: usize,
        kernel_sets: Vec<SaabKernelSet>,
        channels: Vec<CwChannel>,
        degenerate: Vec<usize>,
    ) -> Result<Self> {
        let expected: usize = kernel_sets.iter().map(|s| s.num_kernels()).sum();
        if channels.len() != expected {
            return Err(GlError::Dimension(format!(
                "{} channel records for {expected} kernels",
                channels.len()
            )));
        }
        Ok(Self {
            stage_index,
            window,
            stride,
            kernel_sets,
            channels,
            degenerate,
        })
    }

    pub fn kernel_sets(&self) -> &[SaabKernelSet] {
        &self.kernel_sets
    }

    pub fn num_input_channels(&self) -> usize {
        self.kernel_sets.len()
    }

    /// Every producible output channel, discarded ones included.
    pub fn channels(&self) -> &[CwChannel] {
        &self.channels
    }

    /// Output channels that survive (leaf or intermediate), in emission order.
    pub fn kept_channels(&self) -> impl Iterator<Item = &CwChannel> {
        self.channels
            .iter()
            .filter(|c| c.label != ChannelLabel::Discard)
    }

    pub fn num_kept(&self) -> usize {
        self.kept_channels().count()
    }

    /// Positions (within the kept output order) of intermediate channels,
    /// paired with their cumulative energies: the next stage's inputs.
    pub fn intermediate_outputs(&self) -> (Vec<usize>, Vec<f64>) {
        let mut indices = Vec::new();
        let mut energies = Vec::new();
        for (kept_pos, ch) in self.kept_channels().enumerate() {
            if ch.label == ChannelLabel::Intermediate {
                indices.push(kept_pos);
                energies.push(ch.cumulative_energy);
            }
        }
        (indices, energies)
    }

    pub fn degenerate_channels(&self) -> &[usize] {
        &self.degenerate
    }
}

/// Fit one channel-wise stage. `channel_data[c]` concatenates the training
/// patches (each of length `patch_dim`) extracted from input channel `c`;
/// `parent_energies[c]` is that channel's cumulative energy so far (1.0 for
/// raw input channels).
pub fn fit_cw_saab(
    channel_data: &[Vec<f64>],
    patch_dim: usize,
    parent_energies: &[f64],
    stage_index: usize,
    window: (usize, usize),
    stride: usize,
    opts: &CwFitOptions,
) -> Result<CwSaabStage> {
    if channel_data.is_empty() {
        return Err(GlError::Dimension("no input channels to fit".into()));
    }
    if channel_data.len() != parent_energies.len() {
        return Err(GlError::Dimension(format!(
            "{} channels but {} parent energies",
            channel_data.len(),
            parent_energies.len()
        )));
    }
    if opts.threshold_keep < 0.0 || opts.threshold_intermediate < opts.threshold_keep {
        return Err(GlError::Config(format!(
            "energy thresholds must satisfy intermediate >= keep >= 0, got ({}, {})",
            opts.threshold_intermediate, opts.threshold_keep
        )));
    }
    for (c, &p) in parent_energies.iter().enumerate() {
        if !(p > 0.0 && p <= 1.0) {
            return Err(GlError::Config(format!(
                "parent energy of channel {c} is {p}, expected (0, 1]"
            )));
        }
    }

    // independent fits per channel; seeds are derived per channel so the
    // result does not depend on scheduling, and channel 0 of a single-channel
    // stage matches a standalone fit with the same seed
    let fits: Vec<Result<(SaabKernelSet, bool)>> = channel_data
        .par_iter()
        .enumerate()
        .map(|(c, data)| {
            let set = fit_saab_capped(
                data,
                patch_dim,
                opts.num_kernels,
                false,
                opts.patch_cap,
                derive_seed(opts.seed, c as u64),
            )?;
            let ac_total: f64 = set.energies()[1..].iter().sum();
            if set.num_kernels() > 1 && ac_total <= 1e-12 {
                // zero-variance channel: keep the DC kernel only
                let dim = set.input_dim();
                let truncated = SaabKernelSet::from_raw(
                    dim,
                    set.kernels_flat()[..dim].to_vec(),
                    set.energies()[..1].to_vec(),
                    set.bias(),
                )?;
                Ok((truncated, true))
            } else {
                Ok((set, false))
            }
        })
        .collect();

    let mut kernel_sets = Vec::with_capacity(channel_data.len());
    let mut degenerate = Vec::new();
    for (c, fit) in fits.into_iter().enumerate() {
        let (set, is_degenerate) = fit?;
        if is_degenerate {
            degenerate.push(c);
        }
        kernel_sets.push(set);
    }

    let mut channels = Vec::new();
    for (c, set) in kernel_sets.iter().enumerate() {
        let total = set.total_energy();
        for ki in 0..set.num_kernels() {
            let fraction = if total > 0.0 {
                set.energies()[ki] / total
            } else if ki == 0 {
                1.0
            } else {
                0.0
            };
            let cumulative = parent_energies[c] * fraction;
            let mut label = if cumulative >= opts.threshold_intermediate {
                ChannelLabel::Intermediate
            } else if cumulative >= opts.threshold_keep {
                ChannelLabel::Leaf
            } else {
                ChannelLabel::Discard
            };
            if ki == 0 && label == ChannelLabel::Discard {
                label = ChannelLabel::Leaf; // the DC channel is never dropped
            }
            channels.push(CwChannel {
                input_channel: c,
                kernel_index: ki,
                cumulative_energy: cumulative,
                label,
            });
        }
    }

    CwSaabStage::from_raw(stage_index, window, stride, kernel_sets, channels, degenerate)
}

/// Transform a tensor through a channel-wise stage. Only channels labeled
/// leaf or intermediate appear in the output, grouped by input channel.
pub fn apply_cw_saab(stage: &CwSaabStage, t: &SpatialSpectralTensor) -> Result<SpatialSpectralTensor> {
    if t.channels() != stage.num_input_channels() {
        return Err(GlError::Dimension(format!(
            "stage {} expects {} input channels, tensor has {}",
            stage.stage_index,
            stage.num_input_channels(),
            t.channels()
        )));
    }
    let kept_total = stage.num_kept();
    if kept_total == 0 {
        return Err(GlError::EmptyOutput {
            stage: stage.stage_index,
        });
    }

    // kept kernel indices per input channel, with their output slots
    let mut per_input: Vec<Vec<(usize, usize)>> = vec![Vec::new(); stage.num_input_channels()];
    for (slot, ch) in stage.kept_channels().enumerate() {
        per_input[ch.input_channel].push((ch.kernel_index, slot));
    }

    let mut out: Option<Vec<f64>> = None;
    let mut out_rows = 0;
    let mut out_cols = 0;
    for (c, kept) in per_input.iter().enumerate() {
        if kept.is_empty() {
            continue;
        }
        let view = t.channel(c)?;
        let grid = extract_patches(&view, stage.window, stage.stride, Padding::None)?;
        let set = &stage.kernel_sets[c];
        if grid.patch_dim != set.input_dim() {
            return Err(GlError::Dimension(format!(
                "stage {} window yields dimension {} but channel {c} kernels expect {}",
                stage.stage_index,
                grid.patch_dim,
                set.input_dim()
            )));
        }
        let buf = out.get_or_insert_with(|| {
            out_rows = grid.rows;
            out_cols = grid.cols;
            vec![0.0; grid.rows * grid.cols * kept_total]
        });
        for (i, patch) in grid.patches().enumerate() {
            let responses = apply_saab(set, patch)?;
            for &(ki, slot) in kept {
                buf[i * kept_total + slot] = responses[ki];
            }
        }
    }
    let values = out.ok_or_else(|| GlError::EmptyOutput {
        stage: stage.stage_index,
    })?;
    Ok(SpatialSpectralTensor::from_parts(
        out_rows, out_cols, kept_total, values,
    ))
}
