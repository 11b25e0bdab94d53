//! Data-driven orthonormal patch transforms.
//!
//! A kernel set is fit in one unsupervised pass: the DC kernel is the
//! constant unit vector, and the AC kernels are the principal components of
//! the patches after their per-patch mean has been removed. The resulting
//! set is orthonormal, so the transform preserves energy and its inverse is
//! its transpose. An optional bias shifts every response to be non-negative
//! on the training patches; the rectified (Saak) variant emits each kernel's
//! positive and negative parts as separate non-negative outputs instead.

use crate::error::{GlError, Result};
use crate::linalg;
use crate::rng::subsample_indices;
use crate::tensor::{extract_patches, Padding, SpatialSpectralTensor};

/// How many kernels to keep: everything (`k' = patch dim`) or a fixed count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelCount {
    Lossless,
    Fixed(usize),
}

impl KernelCount {
    pub fn resolve(&self, dim: usize) -> usize {
        match *self {
            KernelCount::Lossless => dim,
            KernelCount::Fixed(k) => k,
        }
    }
}

/// Which flavor of stage transform a hop uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    /// One kernel set over the full `window x window x channels` patch.
    Standard,
    /// An independent kernel set per input channel.
    ChannelWise,
}

/// An orthonormal kernel set: one DC kernel plus energy-ordered AC kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct SaabKernelSet {
    input_dim: usize,
    num_kernels: usize,
    /// Row-major `num_kernels x input_dim`; row 0 is the DC kernel.
    kernels: Vec<f64>,
    /// `energies[0]` is the mean squared DC response over the training
    /// patches; `energies[1..]` are the AC eigenvalues in descending order.
    energies: Vec<f64>,
    bias: f64,
}

impl SaabKernelSet {
    /// Reassemble a kernel set from stored parts (model loading, tests).
    /// Shape mismatches are rejected; orthonormality is the caller's burden.
    pub fn from_raw(
        input_dim: usize,
        kernels: Vec<f64>,
        energies: Vec<f64>,
        bias: f64,
    ) -> Result<Self> {
        if input_dim == 0 || kernels.len() % input_dim != 0 {
            return Err(GlError::Dimension(format!(
                "kernel buffer of {} values does not tile input dimension {input_dim}",
                kernels.len()
            )));
        }
        let num_kernels = kernels.len() / input_dim;
        if num_kernels == 0 || energies.len() != num_kernels {
            return Err(GlError::Dimension(format!(
                "{} energies for {num_kernels} kernels",
                energies.len()
            )));
        }
        Ok(Self {
            input_dim,
            num_kernels,
            kernels,
            energies,
            bias,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_kernels(&self) -> usize {
        self.num_kernels
    }

    pub fn kernel(&self, k: usize) -> &[f64] {
        &self.kernels[k * self.input_dim..(k + 1) * self.input_dim]
    }

    pub fn kernels_flat(&self) -> &[f64] {
        &self.kernels
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    /// Total energy of the set (DC energy plus all AC eigenvalues).
    pub fn total_energy(&self) -> f64 {
        self.energies.iter().sum()
    }
}

/// Fit a kernel set on `data`, a concatenation of `data.len() / dim` patch
/// vectors of length `dim` each.
pub fn fit_saab(
    data: &[f64],
    dim: usize,
    num_kernels: KernelCount,
    use_bias: bool,
) -> Result<SaabKernelSet> {
    if dim == 0 {
        return Err(GlError::Dimension("patch dimension must be positive".into()));
    }
    if data.len() % dim != 0 {
        return Err(GlError::Dimension(format!(
            "patch buffer of {} values does not tile dimension {dim}",
            data.len()
        )));
    }
    let n_patches = data.len() / dim;
    let k = num_kernels.resolve(dim);
    if k == 0 || k > dim {
        return Err(GlError::Dimension(format!(
            "requested {k} kernels for patch dimension {dim}"
        )));
    }
    if n_patches < dim + 1 {
        return Err(GlError::InsufficientSamples {
            requested: k,
            achievable: n_patches.saturating_sub(1),
            samples: n_patches,
        });
    }

    let inv_sqrt_n = 1.0 / (dim as f64).sqrt();
    let nf = n_patches as f64;

    // one pass: DC energy plus residual first and second moments
    let mut dc_energy = 0.0;
    let mut r_sum = vec![0.0; dim];
    let mut m2 = vec![0.0; dim * dim]; // upper triangle of sum r r^T
    let mut residual = vec![0.0; dim];
    for patch in data.chunks_exact(dim) {
        let s: f64 = patch.iter().sum();
        let dc_resp = s * inv_sqrt_n;
        dc_energy += dc_resp * dc_resp;
        let mean = s / dim as f64;
        for (r, &x) in residual.iter_mut().zip(patch) {
            *r = x - mean;
        }
        for i in 0..dim {
            r_sum[i] += residual[i];
            let ri = residual[i];
            if ri != 0.0 {
                for j in i..dim {
                    m2[i * dim + j] += ri * residual[j];
                }
            }
        }
    }
    dc_energy /= nf;

    // covariance of the mean-removed patches (sample-centered)
    let mut cov = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in i..dim {
            let c = m2[i * dim + j] / nf - (r_sum[i] / nf) * (r_sum[j] / nf);
            cov[i * dim + j] = c;
            cov[j * dim + i] = c;
        }
    }

    let mut kernels = Vec::with_capacity(k * dim);
    let mut energies = Vec::with_capacity(k);
    kernels.extend(std::iter::repeat(inv_sqrt_n).take(dim));
    energies.push(dc_energy);

    if k > 1 {
        let (eig_values, eig_vectors) = linalg::symmetric_eigen_desc(&cov, dim);
        let dc: Vec<f64> = vec![inv_sqrt_n; dim];
        let mut accepted: Vec<Vec<f64>> = Vec::with_capacity(k - 1);
        for (lambda, vec) in eig_values.iter().zip(eig_vectors.into_iter()) {
            if accepted.len() == k - 1 {
                break;
            }
            // re-orthogonalize against DC and the kernels accepted so far;
            // for positive eigenvalues this is a no-op up to rounding, and
            // for null-space vectors it upholds orthonormality of the set
            let mut v = vec;
            for basis in std::iter::once(&dc).chain(accepted.iter()) {
                let proj = linalg::dot(&v, basis);
                for (x, b) in v.iter_mut().zip(basis) {
                    *x -= proj * b;
                }
            }
            let norm = linalg::dot(&v, &v).sqrt();
            if norm < 1e-6 {
                continue; // candidate collapsed into the accepted span
            }
            for x in v.iter_mut() {
                *x /= norm;
            }
            linalg::fix_sign(&mut v);
            energies.push(*lambda);
            accepted.push(v);
        }
        if accepted.len() < k - 1 {
            return Err(GlError::Internal(format!(
                "only {} of {} AC kernels could be orthogonalized",
                accepted.len(),
                k - 1
            )));
        }
        for v in accepted {
            kernels.extend_from_slice(&v);
        }
    }

    let mut bias = 0.0;
    if use_bias {
        // smallest shift making every training response non-negative
        let mut min_resp = f64::INFINITY;
        for patch in data.chunks_exact(dim) {
            for ki in 0..k {
                let r = linalg::dot(&kernels[ki * dim..(ki + 1) * dim], patch);
                if r < min_resp {
                    min_resp = r;
                }
            }
        }
        if min_resp < 0.0 {
            bias = -min_resp;
        }
    }

    Ok(SaabKernelSet {
        input_dim: dim,
        num_kernels: k,
        kernels,
        energies,
        bias,
    })
}

/// [`fit_saab`] on a uniformly subsampled cap of the patches. The selection
/// is seeded, so identical inputs give identical kernels.
pub fn fit_saab_capped(
    data: &[f64],
    dim: usize,
    num_kernels: KernelCount,
    use_bias: bool,
    patch_cap: usize,
    seed: u64,
) -> Result<SaabKernelSet> {
    if dim == 0 || data.len() % dim != 0 {
        return Err(GlError::Dimension(format!(
            "patch buffer of {} values does not tile dimension {dim}",
            data.len()
        )));
    }
    let total = data.len() / dim;
    if total <= patch_cap {
        return fit_saab(data, dim, num_kernels, use_bias);
    }
    let picked = subsample_indices(total, patch_cap, seed);
    let mut sub = Vec::with_capacity(picked.len() * dim);
    for &i in &picked {
        sub.extend_from_slice(&data[i * dim..(i + 1) * dim]);
    }
    fit_saab(&sub, dim, num_kernels, use_bias)
}

/// Responses of every kernel on one patch: `<kernel_k, x> + bias`.
pub fn apply_saab(set: &SaabKernelSet, patch: &[f64]) -> Result<Vec<f64>> {
    if patch.len() != set.input_dim {
        return Err(GlError::Dimension(format!(
            "patch length {} does not match kernel input dimension {}",
            patch.len(),
            set.input_dim
        )));
    }
    let mut out = Vec::with_capacity(set.num_kernels);
    for ki in 0..set.num_kernels {
        out.push(linalg::dot(set.kernel(ki), patch) + set.bias);
    }
    Ok(out)
}

/// Invert a response vector back to patch space (transpose of the kernel
/// matrix). Exact up to rounding when the fit was lossless.
pub fn invert_saab(set: &SaabKernelSet, responses: &[f64]) -> Result<Vec<f64>> {
    if responses.len() != set.num_kernels {
        return Err(GlError::Dimension(format!(
            "{} responses for {} kernels",
            responses.len(),
            set.num_kernels
        )));
    }
    let mut patch = vec![0.0; set.input_dim];
    for (ki, &resp) in responses.iter().enumerate() {
        let coeff = resp - set.bias;
        for (x, &k) in patch.iter_mut().zip(set.kernel(ki)) {
            *x += coeff * k;
        }
    }
    Ok(patch)
}

/// Rectified pairwise responses: for each kernel `h`, the pair
/// `(max(<h,x>, 0), max(<-h,x>, 0))`, giving `2 k'` non-negative outputs.
/// Requires a bias-free kernel set.
pub fn apply_saak(set: &SaabKernelSet, patch: &[f64]) -> Result<Vec<f64>> {
    if set.bias != 0.0 {
        return Err(GlError::Config(
            "rectified transform requires a bias-free kernel set".into(),
        ));
    }
    let raw = apply_saab(set, patch)?;
    let mut out = Vec::with_capacity(raw.len() * 2);
    for r in raw {
        out.push(r.max(0.0));
        out.push((-r).max(0.0));
    }
    Ok(out)
}

/// Transform every window position of a tensor with one kernel set, giving
/// an output tensor whose channels are the kernel responses.
pub fn apply_saab_to_tensor(
    set: &SaabKernelSet,
    t: &SpatialSpectralTensor,
    window: (usize, usize),
    stride: usize,
) -> Result<SpatialSpectralTensor> {
    let grid = extract_patches(t, window, stride, Padding::None)?;
    if grid.patch_dim != set.input_dim {
        return Err(GlError::Dimension(format!(
            "window yields patches of dimension {} but kernels expect {}",
            grid.patch_dim, set.input_dim
        )));
    }
    let k = set.num_kernels;
    let mut out = vec![0.0; grid.rows * grid.cols * k];
    for (i, patch) in grid.patches().enumerate() {
        for ki in 0..k {
            out[i * k + ki] = linalg::dot(set.kernel(ki), patch) + set.bias;
        }
    }
    Ok(SpatialSpectralTensor::from_parts(
        grid.rows, grid.cols, k, out,
    ))
}

/// Trainable parameter count of one stage at spatial window `s` over `k`
/// input channels: `s^4 k^2` for a standard (joint) transform, `s^4 k` for a
/// channel-wise one. Checked arithmetic; overflow is a config error.
pub fn count_parameters(kind: TransformKind, window: usize, channels: usize) -> Result<u64> {
    if window == 0 || channels == 0 {
        return Err(GlError::Config(
            "parameter count needs positive window and channel count".into(),
        ));
    }
    let s = window as u64;
    let k = channels as u64;
    let s4 = s
        .checked_mul(s)
        .and_then(|x| x.checked_mul(x))
        .ok_or_else(|| GlError::Config("parameter count overflow".into()))?;
    let per_mode = match kind {
        TransformKind::Standard => k.checked_mul(k),
        TransformKind::ChannelWise => Some(k),
    }
    .ok_or_else(|| GlError::Config("parameter count overflow".into()))?;
    s4.checked_mul(per_mode)
        .ok_or_else(|| GlError::Config("parameter count overflow".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn orthonormality_defect(set: &SaabKernelSet) -> f64 {
        let k = set.num_kernels();
        let mut worst: f64 = 0.0;
        for i in 0..k {
            for j in 0..k {
                let d = linalg::dot(set.kernel(i), set.kernel(j));
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((d - target).abs());
            }
        }
        worst
    }

    fn gaussian_patches(n: usize, dim: usize, seed: u64) -> Vec<f64> {
        let mut rng = seeded_rng(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        (0..n * dim).map(|_| normal.sample(&mut rng)).collect()
    }

    #[test]
    fn constant_patches_have_zero_ac_energy() {
        let c = 3.5;
        let dim = 9;
        let data: Vec<f64> = vec![c; 20 * dim];
        let set = fit_saab(&data, dim, KernelCount::Lossless, false).unwrap();
        assert_eq!(set.num_kernels(), dim);
        for &e in &set.energies()[1..] {
            assert!(e.abs() < 1e-12, "AC eigenvalue {e} should be zero");
        }
        // DC response of a constant patch c * ones is c * sqrt(n)
        let resp = apply_saab(&set, &vec![c; dim]).unwrap();
        assert!((resp[0] - c * (dim as f64).sqrt()).abs() < 1e-10);
        for &r in &resp[1..] {
            assert!(r.abs() < 1e-10);
        }
        assert!(orthonormality_defect(&set) < 1e-8);
    }

    #[test]
    fn recovers_planted_variances_orthogonal_to_dc() {
        // two orthonormal directions orthogonal to the constant vector carry
        // variances 4 and 1; the AC spectrum must recover both
        let dim = 4;
        let u = [0.5, -0.5, 0.5, -0.5];
        let v = [0.5, 0.5, -0.5, -0.5];
        let mut rng = seeded_rng(11);
        let na = Normal::new(0.0, 2.0).unwrap();
        let nb = Normal::new(0.0, 1.0).unwrap();
        let n = 10_000;
        let mut data = Vec::with_capacity(n * dim);
        for _ in 0..n {
            let a = na.sample(&mut rng);
            let b = nb.sample(&mut rng);
            let offset = rng.gen_range(-1.0..1.0); // exercises mean removal
            for i in 0..dim {
                data.push(a * u[i] + b * v[i] + offset);
            }
        }
        let set = fit_saab(&data, dim, KernelCount::Lossless, false).unwrap();
        let e = set.energies();
        assert!((e[1] - 4.0).abs() / 4.0 < 0.1, "first AC energy {}", e[1]);
        assert!((e[2] - 1.0).abs() < 0.1, "second AC energy {}", e[2]);
        assert!(e[3].abs() < 1e-10, "third AC energy {}", e[3]);
        assert!(orthonormality_defect(&set) < 1e-8);
    }

    #[test]
    fn energies_sum_to_variance_plus_dc() {
        let dim = 6;
        let data = gaussian_patches(500, dim, 3);
        let set = fit_saab(&data, dim, KernelCount::Lossless, false).unwrap();

        // independent route: total variance of the mean-removed patches
        let n = data.len() / dim;
        let mut residuals = vec![0.0; data.len()];
        for (p, patch) in data.chunks_exact(dim).enumerate() {
            let mean: f64 = patch.iter().sum::<f64>() / dim as f64;
            for i in 0..dim {
                residuals[p * dim + i] = patch[i] - mean;
            }
        }
        let mut total_var = 0.0;
        for i in 0..dim {
            let col: Vec<f64> = (0..n).map(|p| residuals[p * dim + i]).collect();
            let mean: f64 = col.iter().sum::<f64>() / n as f64;
            total_var += col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        }
        let sum: f64 = set.energies().iter().sum();
        let expected = total_var + set.energies()[0];
        assert!(
            (sum - expected).abs() / expected.abs() < 1e-6,
            "energy sum {sum} vs variance+dc {expected}"
        );
    }

    #[test]
    fn energies_are_non_increasing_past_dc() {
        let data = gaussian_patches(400, 8, 5);
        let set = fit_saab(&data, 8, KernelCount::Lossless, false).unwrap();
        for w in set.energies()[1..].windows(2) {
            assert!(w[0] >= w[1] - 1e-12);
        }
    }

    #[test]
    fn lossless_roundtrip() {
        let dim = 12;
        let data = gaussian_patches(200, dim, 7);
        let set = fit_saab(&data, dim, KernelCount::Lossless, false).unwrap();
        let patch = &data[5 * dim..6 * dim];
        let resp = apply_saab(&set, patch).unwrap();
        let back = invert_saab(&set, &resp).unwrap();
        for (a, b) in patch.iter().zip(&back) {
            assert!((a - b).abs() < 1e-6);
        }
        // energy preservation per patch (orthonormal full basis)
        let in_sq: f64 = patch.iter().map(|x| x * x).sum();
        let out_sq: f64 = resp.iter().map(|x| x * x).sum();
        assert!((in_sq - out_sq).abs() / in_sq < 1e-6);
    }

    #[test]
    fn fixed_count_truncates() {
        let data = gaussian_patches(300, 10, 9);
        let set = fit_saab(&data, 10, KernelCount::Fixed(4), false).unwrap();
        assert_eq!(set.num_kernels(), 4);
        assert!(orthonormality_defect(&set) < 1e-8);
        assert!(fit_saab(&data, 10, KernelCount::Fixed(11), false).is_err());
        assert!(fit_saab(&data, 10, KernelCount::Fixed(0), false).is_err());
    }

    #[test]
    fn too_few_patches_reports_achievable_rank() {
        let data = gaussian_patches(6, 9, 13); // needs at least 10
        match fit_saab(&data, 9, KernelCount::Lossless, false) {
            Err(GlError::InsufficientSamples {
                achievable, samples, ..
            }) => {
                assert_eq!(samples, 6);
                assert_eq!(achievable, 5);
            }
            other => panic!("expected sample-count error, got {other:?}"),
        }
    }

    #[test]
    fn bias_makes_training_responses_non_negative() {
        let data = gaussian_patches(200, 5, 17);
        let set = fit_saab(&data, 5, KernelCount::Lossless, true).unwrap();
        assert!(set.bias() > 0.0);
        for patch in data.chunks_exact(5) {
            for r in apply_saab(&set, patch).unwrap() {
                assert!(r >= -1e-12, "training response {r} below zero");
            }
        }
    }

    #[test]
    fn rectified_outputs_are_complementary_pairs() {
        // kernels (dc, ac) chosen so one patch responds (2, -3)
        let a = 0.5f64.sqrt();
        let set = SaabKernelSet::from_raw(
            2,
            vec![a, a, a, -a],
            vec![1.0, 1.0],
            0.0,
        )
        .unwrap();
        let patch = [-a, 5.0 * a];
        let raw = apply_saab(&set, &patch).unwrap();
        assert!((raw[0] - 2.0).abs() < 1e-12 && (raw[1] + 3.0).abs() < 1e-12);
        let rect = apply_saak(&set, &patch).unwrap();
        let expected = [2.0, 0.0, 0.0, 3.0];
        for (r, e) in rect.iter().zip(&expected) {
            assert!((r - e).abs() < 1e-12);
        }
        for pair in rect.chunks_exact(2) {
            assert_eq!(pair[0] * pair[1], 0.0);
            assert!(pair[0] >= 0.0 && pair[1] >= 0.0);
        }
        // rectified outputs refuse biased sets
        let biased = SaabKernelSet::from_raw(2, vec![a, a, a, -a], vec![1.0, 1.0], 0.5).unwrap();
        assert!(apply_saak(&biased, &patch).is_err());
    }

    #[test]
    fn rectified_preserves_energy_split() {
        let data = gaussian_patches(300, 6, 19);
        let set = fit_saab(&data, 6, KernelCount::Lossless, false).unwrap();
        let patch = &data[0..6];
        let raw = apply_saab(&set, patch).unwrap();
        let rect = apply_saak(&set, patch).unwrap();
        assert_eq!(rect.len(), 2 * raw.len());
        for (i, r) in raw.iter().enumerate() {
            assert!((rect[2 * i] - rect[2 * i + 1] - r).abs() < 1e-12);
        }
    }

    #[test]
    fn capped_fit_is_deterministic() {
        let data = gaussian_patches(5000, 4, 23);
        let a = fit_saab_capped(&data, 4, KernelCount::Lossless, false, 1000, 42).unwrap();
        let b = fit_saab_capped(&data, 4, KernelCount::Lossless, false, 1000, 42).unwrap();
        assert_eq!(a, b);
        let c = fit_saab_capped(&data, 4, KernelCount::Lossless, false, 1000, 43).unwrap();
        assert_ne!(a.kernels_flat(), c.kernels_flat());
    }

    #[test]
    fn parameter_count_formulas() {
        assert_eq!(
            count_parameters(TransformKind::Standard, 5, 25).unwrap(),
            390_625
        );
        assert_eq!(
            count_parameters(TransformKind::ChannelWise, 5, 25).unwrap(),
            15_625
        );
        // the full supported range stays clear of overflow
        for s in 1..=7usize {
            for k in 1..=64usize {
                let std = count_parameters(TransformKind::Standard, s, k).unwrap();
                let cw = count_parameters(TransformKind::ChannelWise, s, k).unwrap();
                assert_eq!(std, (s as u64).pow(4) * (k as u64).pow(2));
                assert_eq!(cw, (s as u64).pow(4) * (k as u64));
            }
        }
        assert!(count_parameters(TransformKind::Standard, 0, 5).is_err());
    }
}
