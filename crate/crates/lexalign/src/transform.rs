//! The rotation-and-scaling preprocessing stage.
//!
//! Two independently trained embedding spaces are each rotated into the
//! basis of their own right singular vectors, computed on the most frequent
//! rows only, and then each dimension is rescaled so both sides meet at the
//! geometric mean of their singular values. The result is re-normalized and
//! handed to the self-learning aligner, which never sees the originals.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::embio::{EmbeddingSpace, GoldDictionary};
use crate::error::{Error, Result};
use crate::linalg;

const RANK_EPS: f64 = 1e-12;

/// Rotation bases, singular values and derived per-dimension scale factors
/// for a source/target pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsoTransform {
    /// Right singular basis of the source cutoff block (d x d).
    pub v_src: Array2<f64>,
    /// Right singular basis of the target cutoff block (d x d).
    pub v_tgt: Array2<f64>,
    /// Singular values of the source cutoff block, descending.
    pub s_src: Array1<f64>,
    /// Singular values of the target cutoff block, descending.
    pub s_tgt: Array1<f64>,
    /// Per-dimension factors sqrt(s_tgt / s_src) applied to the rotated source.
    pub scale_src: Array1<f64>,
    /// Per-dimension factors sqrt(s_src / s_tgt) applied to the rotated target.
    pub scale_tgt: Array1<f64>,
    /// Number of rows the decompositions were computed on.
    pub cutoff: usize,
}

impl IsoTransform {
    pub fn dim(&self) -> usize {
        self.v_src.nrows()
    }

    /// Rotation without scaling or re-normalization, for diagnostics.
    pub fn rotate_src(&self, space: &EmbeddingSpace) -> Result<EmbeddingSpace> {
        rotate(space, &self.v_src)
    }

    pub fn rotate_tgt(&self, space: &EmbeddingSpace) -> Result<EmbeddingSpace> {
        rotate(space, &self.v_tgt)
    }
}

fn rotate(space: &EmbeddingSpace, basis: &Array2<f64>) -> Result<EmbeddingSpace> {
    if basis.nrows() != space.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.nrows(),
            found: space.dim(),
        });
    }
    space.with_vectors(space.vectors().dot(basis))
}

/// Length-normalize rows, mean-center each dimension, length-normalize again.
///
/// Returns a new space; the input is untouched. Errors if a row vanishes at
/// either normalization step (an m=1 space always does, since centering
/// annihilates its only row).
pub fn normalize(space: &EmbeddingSpace) -> Result<EmbeddingSpace> {
    let mut m = space.vectors().clone();
    linalg::normalize_chain(&mut m)?;
    space.with_vectors(m)
}

/// Compute the rotation bases and scale factors from the first
/// `min(cutoff, m, n)` rows of each (already normalized) space.
pub fn compute_iso_transform(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    cutoff: usize,
) -> Result<IsoTransform> {
    if cutoff == 0 {
        return Err(Error::InvalidArgument("cutoff must be positive".into()));
    }
    let d = src.dim();
    if tgt.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: tgt.dim(),
        });
    }
    let c = cutoff.min(src.len()).min(tgt.len());
    if c < d {
        // Fewer rows than dimensions leaves part of the spectrum at zero.
        return Err(Error::RankDeficient { value: 0.0 });
    }

    let (s_src, v_src) = block_svd(src.view(), c)?;
    let (s_tgt, v_tgt) = block_svd(tgt.view(), c)?;

    let mut scale_src = Array1::zeros(d);
    let mut scale_tgt = Array1::zeros(d);
    for j in 0..d {
        scale_src[j] = (s_tgt[j] / s_src[j]).sqrt();
        scale_tgt[j] = (s_src[j] / s_tgt[j]).sqrt();
    }

    Ok(IsoTransform {
        v_src,
        v_tgt,
        s_src,
        s_tgt,
        scale_src,
        scale_tgt,
        cutoff: c,
    })
}

fn block_svd(m: ArrayView2<'_, f64>, c: usize) -> Result<(Array1<f64>, Array2<f64>)> {
    let block = m.slice(ndarray::s![..c, ..]);
    let parts = linalg::svd_thin(block)?;
    if let Some(&min) = parts
        .s
        .iter()
        .min_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal))
    {
        if min < RANK_EPS {
            return Err(Error::RankDeficient { value: min });
        }
    }
    Ok((parts.s, parts.v))
}

/// Rotate and scale both full spaces, then re-normalize each with the
/// default normalization chain. The inputs are not mutated.
pub fn apply_iso_transform(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    t: &IsoTransform,
) -> Result<(EmbeddingSpace, EmbeddingSpace)> {
    if src.dim() != t.dim() || tgt.dim() != t.dim() {
        return Err(Error::DimensionMismatch {
            expected: t.dim(),
            found: if src.dim() != t.dim() {
                src.dim()
            } else {
                tgt.dim()
            },
        });
    }
    let src_out = transform_side(src, &t.v_src, &t.scale_src)?;
    let tgt_out = transform_side(tgt, &t.v_tgt, &t.scale_tgt)?;
    Ok((src_out, tgt_out))
}

fn transform_side(
    space: &EmbeddingSpace,
    basis: &Array2<f64>,
    scale: &Array1<f64>,
) -> Result<EmbeddingSpace> {
    let mut m = space.vectors().dot(basis);
    for (j, mut col) in m.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|v| v * scale[j]);
    }
    linalg::normalize_chain(&mut m)?;
    space.with_vectors(m)
}

/// The `k` largest singular values of the first `min(cutoff, m)` rows.
pub fn top_singular_values(space: &EmbeddingSpace, k: usize, cutoff: usize) -> Result<Vec<f64>> {
    let d = space.dim();
    if k == 0 || k > d {
        return Err(Error::KOutOfRange { k, max: d });
    }
    if cutoff == 0 {
        return Err(Error::InvalidArgument("cutoff must be positive".into()));
    }
    let c = cutoff.min(space.len());
    let block = space.vectors().slice(ndarray::s![..c, ..]);
    let parts = linalg::svd_thin(block)?;
    // A c x d block has min(c, d) singular values; the rest of the spectrum is zero.
    let mut spectrum: Vec<f64> = parts.s.to_vec();
    spectrum.resize(d, 0.0);
    spectrum.truncate(k);
    Ok(spectrum)
}

/// Mean cosine similarity over every (source, target) pair implied by the
/// gold dictionary.
pub fn dictionary_cosine(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    gold: &GoldDictionary,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (&s, targets) in gold.entries() {
        if s >= src.len() {
            return Err(Error::IndexOutOfRange {
                index: s,
                size: src.len(),
            });
        }
        let x = src.row(s);
        let nx = x.dot(&x).sqrt();
        if nx < 1e-12 {
            return Err(Error::ZeroRow { row: s });
        }
        for &t in targets {
            if t >= tgt.len() {
                return Err(Error::IndexOutOfRange {
                    index: t,
                    size: tgt.len(),
                });
            }
            let z = tgt.row(t);
            let nz = z.dot(&z).sqrt();
            if nz < 1e-12 {
                return Err(Error::ZeroRow { row: t });
            }
            sum += x.dot(&z) / (nx * nz);
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// Euclidean norm of each column, used by tests and diagnostics.
pub fn column_norms(m: ArrayView2<'_, f64>) -> Array1<f64> {
    m.map_axis(Axis(0), |col| col.iter().map(|v| v * v).sum::<f64>().sqrt())
}
