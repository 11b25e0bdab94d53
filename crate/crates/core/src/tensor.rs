//! Spatial-spectral tensors and the window operations the transform stages
//! are built from: patch extraction, pooling, and channel flattening.
//!
//! A tensor is a dense `height x width x channels` block stored row-major in
//! `(h, w, c)` order: the channel index varies fastest, then the column.
//! Patches flatten their window in the same order, so a `5x5` window over a
//! 25-channel input yields patch vectors of length `5 * 5 * 25`.

use crate::error::{GlError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialSpectralTensor {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f64>,
}

impl SpatialSpectralTensor {
    /// Build a tensor from a row-major `(h, w, c)` buffer. Rejects size
    /// mismatches and non-finite values (naming the first offending index).
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(GlError::Dimension(format!(
                "tensor dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        let expected = height * width * channels;
        if values.len() != expected {
            return Err(GlError::Dimension(format!(
                "tensor buffer holds {} values but {height}x{width}x{channels} needs {expected}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(GlError::Dimension(format!(
                "non-finite value at flat index {bad}"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            values,
        })
    }

    /// Internal constructor for operation outputs whose values are finite by
    /// construction (max / abs / copy of already-validated inputs).
    pub(crate) fn from_parts(
        height: usize,
        width: usize,
        channels: usize,
        values: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(values.len(), height * width * channels);
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self {
            height,
            width,
            channels,
            values,
        }
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            values: vec![0.0; height * width * channels],
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, h: usize, w: usize, c: usize) -> f64 {
        debug_assert!(h < self.height && w < self.width && c < self.channels);
        self.values[(h * self.width + w) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, h: usize, w: usize, c: usize, v: f64) {
        debug_assert!(h < self.height && w < self.width && c < self.channels);
        self.values[(h * self.width + w) * self.channels + c] = v;
    }

    /// Copy one channel out as a single-channel tensor.
    pub fn channel(&self, c: usize) -> Result<SpatialSpectralTensor> {
        if c >= self.channels {
            return Err(GlError::Dimension(format!(
                "channel {c} out of range for {} channels",
                self.channels
            )));
        }
        let mut out = Vec::with_capacity(self.height * self.width);
        for h in 0..self.height {
            for w in 0..self.width {
                out.push(self.get(h, w, c));
            }
        }
        Ok(SpatialSpectralTensor::from_parts(
            self.height,
            self.width,
            1,
            out,
        ))
    }

    /// Keep only the listed channels, in the given order.
    pub fn select_channels(&self, keep: &[usize]) -> Result<SpatialSpectralTensor> {
        if keep.is_empty() {
            return Err(GlError::Dimension("cannot select zero channels".into()));
        }
        for &c in keep {
            if c >= self.channels {
                return Err(GlError::Dimension(format!(
                    "channel {c} out of range for {} channels",
                    self.channels
                )));
            }
        }
        let mut out = Vec::with_capacity(self.height * self.width * keep.len());
        for h in 0..self.height {
            for w in 0..self.width {
                for &c in keep {
                    out.push(self.get(h, w, c));
                }
            }
        }
        Ok(SpatialSpectralTensor::from_parts(
            self.height,
            self.width,
            keep.len(),
            out,
        ))
    }
}

/// How to treat window positions that would read past the border.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Only windows fully inside the input are taken.
    None,
    /// Zero-pad symmetrically by `window - 1` total per axis (extra row or
    /// column on the bottom/right when odd), so a stride-1 scan keeps the
    /// input's spatial size.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    /// Maximum of absolute values: the window's response magnitude.
    AbsoluteMax,
}

/// Dense grid of flattened window contents, row-major over window positions.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub rows: usize,
    pub cols: usize,
    pub patch_dim: usize,
    values: Vec<f64>,
}

impl PatchGrid {
    pub fn num_patches(&self) -> usize {
        self.rows * self.cols
    }

    /// Flat patch accessor; patches are ordered row-major over the grid.
    pub fn patch(&self, i: usize) -> &[f64] {
        &self.values[i * self.patch_dim..(i + 1) * self.patch_dim]
    }

    pub fn patches(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.patch_dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Slide a `window` over the tensor with the given stride, flattening each
/// window position into a patch vector in `(h, w, c)` order.
pub fn extract_patches(
    t: &SpatialSpectralTensor,
    window: (usize, usize),
    stride: usize,
    padding: Padding,
) -> Result<PatchGrid> {
    let (wh, ww) = window;
    if wh == 0 || ww == 0 {
        return Err(GlError::Dimension("window dimensions must be positive".into()));
    }
    if stride == 0 {
        return Err(GlError::Dimension("stride must be positive".into()));
    }
    let (pad_top, pad_left, padded_h, padded_w) = match padding {
        Padding::None => (0, 0, t.height(), t.width()),
        Padding::Zero => (
            (wh - 1) / 2,
            (ww - 1) / 2,
            t.height() + wh - 1,
            t.width() + ww - 1,
        ),
    };
    if wh > padded_h || ww > padded_w {
        return Err(GlError::Dimension(format!(
            "window {wh}x{ww} does not fit input {}x{} with {:?} padding",
            t.height(),
            t.width(),
            padding
        )));
    }
    let rows = (padded_h - wh) / stride + 1;
    let cols = (padded_w - ww) / stride + 1;
    let channels = t.channels();
    let patch_dim = wh * ww * channels;
    let mut values = Vec::with_capacity(rows * cols * patch_dim);
    for r in 0..rows {
        for c in 0..cols {
            for dh in 0..wh {
                for dw in 0..ww {
                    // position in the unpadded input; out of range reads zero
                    let h = (r * stride + dh) as isize - pad_top as isize;
                    let w = (c * stride + dw) as isize - pad_left as isize;
                    if h < 0 || w < 0 || h as usize >= t.height() || w as usize >= t.width() {
                        values.extend(std::iter::repeat(0.0).take(channels));
                    } else {
                        let base = (h as usize * t.width() + w as usize) * channels;
                        values.extend_from_slice(&t.values()[base..base + channels]);
                    }
                }
            }
        }
    }
    Ok(PatchGrid {
        rows,
        cols,
        patch_dim,
        values,
    })
}

/// Window pooling with a stride equal to the window, per channel. The window
/// must tile the spatial dimensions exactly.
pub fn pool(
    t: &SpatialSpectralTensor,
    window: (usize, usize),
    mode: PoolMode,
) -> Result<SpatialSpectralTensor> {
    let (ph, pw) = window;
    if ph == 0 || pw == 0 {
        return Err(GlError::Dimension("pool window must be positive".into()));
    }
    if t.height() % ph != 0 || t.width() % pw != 0 {
        return Err(GlError::Dimension(format!(
            "pool window {ph}x{pw} does not divide spatial dims {}x{}",
            t.height(),
            t.width()
        )));
    }
    let oh = t.height() / ph;
    let ow = t.width() / pw;
    let channels = t.channels();
    let mut out = vec![0.0; oh * ow * channels];
    for h in 0..oh {
        for w in 0..ow {
            for c in 0..channels {
                let mut best = f64::NEG_INFINITY;
                for dh in 0..ph {
                    for dw in 0..pw {
                        let v = t.get(h * ph + dh, w * pw + dw, c);
                        let v = match mode {
                            PoolMode::Max => v,
                            PoolMode::AbsoluteMax => v.abs(),
                        };
                        if v > best {
                            best = v;
                        }
                    }
                }
                out[(h * ow + w) * channels + c] = best;
            }
        }
    }
    Ok(SpatialSpectralTensor::from_parts(oh, ow, channels, out))
}

/// One channel's spatial map flattened row-major to a length `h * w` vector.
pub fn flatten_channel(t: &SpatialSpectralTensor, channel: usize) -> Result<Vec<f64>> {
    if channel >= t.channels() {
        return Err(GlError::Dimension(format!(
            "channel {channel} out of range for {} channels",
            t.channels()
        )));
    }
    let mut out = Vec::with_capacity(t.height() * t.width());
    for h in 0..t.height() {
        for w in 0..t.width() {
            out.push(t.get(h, w, channel));
        }
    }
    Ok(out)
}
