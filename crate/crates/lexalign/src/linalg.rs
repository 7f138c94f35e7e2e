//! Internal dense linear-algebra helpers shared by the pipeline stages.
//!
//! Decompositions are delegated to nalgebra and accumulated in f64. All
//! routines apply deterministic conventions (descending singular values,
//! canonical column signs) so repeated runs are bit-identical.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Thin SVD `a = u * diag(s) * v^T` with `s` descending and a canonical sign
/// convention: each column of `v` is flipped so its largest-magnitude entry
/// is positive (first such index on ties), and the matching `u` column is
/// flipped with it so the factorization stays exact.
pub(crate) struct SvdParts {
    pub u: Array2<f64>,
    pub s: Array1<f64>,
    pub v: Array2<f64>,
}

pub(crate) fn svd_thin(a: ArrayView2<'_, f64>) -> Result<SvdParts> {
    let (rows, cols) = a.dim();
    let m = DMatrix::from_row_iterator(rows, cols, a.iter().copied());
    let svd = nalgebra::SVD::try_new(m, true, true, f64::EPSILON, 0).ok_or(Error::SvdFailure)?;
    let u = svd.u.ok_or(Error::SvdFailure)?;
    let v_t = svd.v_t.ok_or(Error::SvdFailure)?;
    let s = svd.singular_values;

    let rank = s.len();
    let mut order: Vec<usize> = (0..rank).collect();
    order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap_or(std::cmp::Ordering::Equal));

    let mut u_out = Array2::zeros((rows, rank));
    let mut v_out = Array2::zeros((cols, rank));
    let mut s_out = Array1::zeros(rank);
    for (dst, &src) in order.iter().enumerate() {
        s_out[dst] = s[src];
        for r in 0..rows {
            u_out[[r, dst]] = u[(r, src)];
        }
        for c in 0..cols {
            v_out[[c, dst]] = v_t[(src, c)];
        }
    }

    // Joint sign canonicalization keeps u * diag(s) * v^T unchanged.
    for j in 0..rank {
        let mut arg = 0;
        let mut best = -1.0;
        for i in 0..cols {
            let a = v_out[[i, j]].abs();
            if a > best {
                best = a;
                arg = i;
            }
        }
        if v_out[[arg, j]] < 0.0 {
            for i in 0..cols {
                v_out[[i, j]] = -v_out[[i, j]];
            }
            for i in 0..rows {
                u_out[[i, j]] = -u_out[[i, j]];
            }
        }
    }

    Ok(SvdParts {
        u: u_out,
        s: s_out,
        v: v_out,
    })
}

/// Eigendecomposition of a symmetric PSD matrix, eigenvalues descending,
/// eigenvector columns sign-canonicalized like `svd_thin`.
pub(crate) fn sym_eig(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.ncols(),
        });
    }
    let m = DMatrix::from_row_iterator(n, n, a.iter().copied());
    let eig = nalgebra::SymmetricEigen::new(m);
    let vals: DVector<f64> = eig.eigenvalues;
    let vecs: DMatrix<f64> = eig.eigenvectors;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        vals[j]
            .partial_cmp(&vals[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut values = Array1::zeros(n);
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = vals[src];
        for r in 0..n {
            vectors[[r, dst]] = vecs[(r, src)];
        }
    }
    for j in 0..n {
        let mut arg = 0;
        let mut best = -1.0;
        for i in 0..n {
            let a = vectors[[i, j]].abs();
            if a > best {
                best = a;
                arg = i;
            }
        }
        if vectors[[arg, j]] < 0.0 {
            for i in 0..n {
                vectors[[i, j]] = -vectors[[i, j]];
            }
        }
    }
    Ok((values, vectors))
}

const ZERO_NORM_EPS: f64 = 1e-12;

/// Divide each row by its Euclidean norm. Errors on (near-)zero rows.
pub(crate) fn unit_rows(m: &mut Array2<f64>) -> Result<()> {
    for (i, mut row) in m.rows_mut().into_iter().enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < ZERO_NORM_EPS {
            return Err(Error::ZeroRow { row: i });
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(())
}

/// Subtract the mean of each column.
pub(crate) fn center_columns(m: &mut Array2<f64>) {
    let means = m.mean_axis(Axis(0)).expect("non-empty matrix");
    for mut row in m.rows_mut() {
        row -= &means;
    }
}

/// The default normalization chain: length-normalize, mean-center each
/// dimension, length-normalize again.
pub(crate) fn normalize_chain(m: &mut Array2<f64>) -> Result<()> {
    unit_rows(m)?;
    center_columns(m);
    unit_rows(m)
}

/// Haar-distributed random orthogonal matrix via QR of a Gaussian matrix,
/// with signs corrected from the diagonal of R.
pub(crate) fn random_orthogonal<R: Rng>(d: usize, rng: &mut R) -> Array2<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    Array2::from_shape_fn((d, d), |(i, j)| q[(i, j)])
}

/// Running top-k tracker for one row of a similarity stream.
#[derive(Clone)]
pub(crate) struct TopK {
    k: usize,
    values: Vec<f64>,
    min_pos: usize,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        TopK {
            k,
            values: Vec::with_capacity(k),
            min_pos: 0,
        }
    }

    #[inline]
    pub fn push(&mut self, v: f64) {
        if self.values.len() < self.k {
            self.values.push(v);
            if self.values.len() == self.k {
                self.recompute_min();
            }
        } else if v > self.values[self.min_pos] {
            self.values[self.min_pos] = v;
            self.recompute_min();
        }
    }

    fn recompute_min(&mut self) {
        let mut pos = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v < self.values[pos] {
                pos = i;
            }
        }
        self.min_pos = pos;
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn svd_reconstructs_input() {
        let a = array![[3.0, 1.0], [1.0, 3.0], [0.5, -0.5]];
        let parts = svd_thin(a.view()).unwrap();
        let recon = parts.u.dot(&Array2::from_diag(&parts.s)).dot(&parts.v.t());
        for (x, y) in a.iter().zip(recon.iter()) {
            assert!((x - y).abs() < 1e-10, "reconstruction mismatch");
        }
        assert!(parts.s[0] >= parts.s[1]);
    }

    #[test]
    fn svd_sign_convention_is_positive_dominant() {
        let a = array![[-4.0, 0.0], [0.0, 1.0]];
        let parts = svd_thin(a.view()).unwrap();
        for j in 0..2 {
            let col = parts.v.column(j);
            let max = col.iter().cloned().fold(f64::MIN, f64::max);
            let min = col.iter().cloned().fold(f64::MAX, f64::min);
            assert!(max >= min.abs() - 1e-12, "dominant entry must be positive");
        }
    }

    #[test]
    fn random_orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let q = random_orthogonal(6, &mut rng);
        let gram = q.t().dot(&q);
        for i in 0..6 {
            for j in 0..6 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn topk_tracks_largest() {
        let mut t = TopK::new(3);
        for v in [0.1, 0.9, -0.5, 0.4, 0.8, 0.2] {
            t.push(v);
        }
        let mean = t.mean();
        assert!((mean - (0.9 + 0.8 + 0.4) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn sym_eig_diagonalizes() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let (vals, vecs) = sym_eig(&a).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-10);
        assert!((vals[1] - 1.0).abs() < 1e-10);
        let recon = vecs.dot(&Array2::from_diag(&vals)).dot(&vecs.t());
        for (x, y) in a.iter().zip(recon.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}
