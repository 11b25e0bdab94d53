//! Dense linear-algebra helpers shared by the transform and decision modules.
//!
//! Everything here is deterministic: eigenvalues are returned in descending
//! order with a fixed sign convention, and no computation depends on thread
//! scheduling, so identical inputs always give identical bits.

use nalgebra::DMatrix;

/// Force a deterministic sign: the first element with magnitude above 1e-12
/// is made positive. Leaves an all-tiny vector untouched.
pub fn fix_sign(v: &mut [f64]) {
    for &x in v.iter() {
        if x.abs() > 1e-12 {
            if x < 0.0 {
                for y in v.iter_mut() {
                    *y = -*y;
                }
            }
            return;
        }
    }
}

/// Eigendecomposition of a symmetric matrix given row-major as `a` (n x n).
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvalues sorted descending
/// (ties keep the solver's order, so identical input gives identical output)
/// and clamped at zero, and eigenvectors as rows matching that order, each
/// sign-fixed via [`fix_sign`].
pub fn symmetric_eigen_desc(a: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    assert_eq!(a.len(), n * n, "matrix buffer does not match declared size");
    let m = DMatrix::from_row_slice(n, n, a);
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for &k in &order {
        values.push(eig.eigenvalues[k].max(0.0));
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        fix_sign(&mut v);
        vectors.push(v);
    }
    (values, vectors)
}

/// Result of [`min_norm_lstsq`]: the solution and the numerical rank of the
/// design matrix. `rank < p` means the normal equations were singular and
/// the minimum-norm solution was picked.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstsq {
    /// `W` (p x m, row-major).
    pub weights: Vec<f64>,
    pub rank: usize,
}

/// Apply a symmetric pseudoinverse from its eigendecomposition:
/// `out = V diag(1/lambda) V^T B` for `B` (d x m, row-major), dropping
/// eigenvalues at or below `tol`.
fn apply_pinv(
    values: &[f64],
    vectors: &[Vec<f64>],
    b: &DMatrix<f64>,
    tol: f64,
) -> DMatrix<f64> {
    let d = b.nrows();
    let m = b.ncols();
    let mut out = DMatrix::zeros(d, m);
    for (k, v) in vectors.iter().enumerate() {
        if values[k] <= tol || values[k] <= 0.0 {
            continue;
        }
        // c = (v^T B) / lambda, then out += v c
        let mut c = vec![0.0; m];
        for j in 0..m {
            let mut acc = 0.0;
            for i in 0..d {
                acc += v[i] * b[(i, j)];
            }
            c[j] = acc / values[k];
        }
        for i in 0..d {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            for j in 0..m {
                out[(i, j)] += vi * c[j];
            }
        }
    }
    out
}

/// Minimum-norm least-squares solution `W` (p x m, row-major) of
/// `argmin ||X W - Y||` for row-major `X` (n x p) and `Y` (n x m).
///
/// Goes through whichever Gram system is smaller — the p x p normal
/// equations when p <= n, the n x n kernel matrix otherwise — with an
/// eigenvalue pseudoinverse either way, so rank-deficient problems
/// (including all-zero feature columns) pick the minimum-norm solution: a
/// feature column of zeros gets a weight row of exactly zero. The route
/// depends only on the problem shape, so identical inputs give identical
/// output.
pub fn min_norm_lstsq(x: &[f64], y: &[f64], n: usize, p: usize, m: usize) -> Lstsq {
    assert_eq!(x.len(), n * p);
    assert_eq!(y.len(), n * m);
    let xm = DMatrix::from_row_slice(n, p, x);
    let ym = DMatrix::from_row_slice(n, m, y);
    let scale = n.max(p) as f64;

    let (w, rank) = if p <= n {
        // W = (X^T X)^+ X^T Y
        let g = xm.tr_mul(&xm);
        // a symmetric matrix reads the same in either storage order
        let (values, vectors) = symmetric_eigen_desc(g.as_slice(), p);
        let tol = values.first().copied().unwrap_or(0.0) * scale * 1e-14;
        let rank = values.iter().filter(|&&v| v > tol && v > 0.0).count();
        let b = xm.tr_mul(&ym);
        (apply_pinv(&values, &vectors, &b, tol), rank)
    } else {
        // W = X^T (X X^T)^+ Y, the minimum-norm solution when the system
        // is underdetermined
        let k = &xm * xm.transpose();
        let (values, vectors) = symmetric_eigen_desc(k.as_slice(), n);
        let tol = values.first().copied().unwrap_or(0.0) * scale * 1e-14;
        let rank = values.iter().filter(|&&v| v > tol && v > 0.0).count();
        (xm.tr_mul(&apply_pinv(&values, &vectors, &ym, tol)), rank)
    };

    let mut weights = vec![0.0; p * m];
    for i in 0..p {
        for j in 0..m {
            weights[i * m + j] = w[(i, j)];
        }
    }
    Lstsq { weights, rank }
}

/// Dot product of two equal-length slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_recovers_diagonal() {
        let a = [3.0, 0.0, 0.0, 1.0];
        let (values, vectors) = symmetric_eigen_desc(&a, 2);
        assert!((values[0] - 3.0).abs() < 1e-12);
        assert!((values[1] - 1.0).abs() < 1e-12);
        assert!((vectors[0][0].abs() - 1.0).abs() < 1e-12);
        assert!(vectors[0][0] > 0.0, "sign convention: leading element positive");
    }

    #[test]
    fn lstsq_exact_on_full_rank() {
        // X = I, so W must equal Y.
        let x = [1.0, 0.0, 0.0, 1.0];
        let y = [2.0, -1.0, 0.5, 3.0];
        let sol = min_norm_lstsq(&x, &y, 2, 2, 2);
        for (a, b) in sol.weights.iter().zip(y.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert_eq!(sol.rank, 2);
    }

    #[test]
    fn lstsq_zero_column_gets_zero_weight() {
        // second feature column identically zero -> its weight row must be zero
        let x = [1.0, 0.0, 2.0, 0.0, 3.0, 0.0];
        let y = [2.0, 4.0, 6.0];
        let sol = min_norm_lstsq(&x, &y, 3, 2, 1);
        assert!((sol.weights[0] - 2.0).abs() < 1e-10);
        assert_eq!(sol.weights[1], 0.0);
        assert_eq!(sol.rank, 1, "a zero column drops the rank");
    }
}
