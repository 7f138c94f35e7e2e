//! The self-learning aligner: similarity-matrix initialization, orthogonal
//! Procrustes updates, stochastic dictionary induction, and the final
//! whiten/re-weight/de-whiten refinement.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embio::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::linalg;
use crate::retrieval::CslsEngine;

/// Which induced pairs feed the next Procrustes step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
    #[default]
    Union,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Direction::Forward => write!(f, "forward"),
            Direction::Backward => write!(f, "backward"),
            Direction::Union => write!(f, "union"),
        }
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Direction::Forward),
            "backward" => Ok(Direction::Backward),
            "union" => Ok(Direction::Union),
            other => Err(Error::InvalidArgument(format!(
                "unknown direction {other:?} (expected forward, backward or union)"
            ))),
        }
    }
}

/// All pipeline knobs. Defaults follow the reference self-learning
/// implementation this pipeline reproduces.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Rows used for the similarity-matrix initialization.
    pub init_cutoff: usize,
    /// Rows the self-learning loop trains on.
    pub train_cutoff: usize,
    /// CSLS neighborhood size.
    pub csls_k: usize,
    /// Initial keep probability for stochastic induction.
    pub p0: f64,
    /// Multiplier applied to the keep probability on stall.
    pub p_factor: f64,
    /// Consecutive non-improving iterations before escalating.
    pub stall_patience: usize,
    /// Minimum objective improvement that counts as progress.
    pub convergence_eps: f64,
    /// Upper bound for the keep probability.
    pub max_p: f64,
    /// RNG seed for stochastic induction.
    pub seed: u64,
    /// Rows used for the rotation/scaling SVDs.
    pub transform_cutoff: usize,
    /// Induction direction.
    pub direction: Direction,
    /// Row-block size for blocked similarity kernels.
    pub block_size: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            init_cutoff: 4000,
            train_cutoff: 20_000,
            csls_k: 10,
            p0: 0.1,
            p_factor: 2.0,
            stall_patience: 50,
            convergence_eps: 1e-6,
            max_p: 1.0,
            seed: 0,
            transform_cutoff: 4000,
            direction: Direction::Union,
            block_size: crate::retrieval::DEFAULT_BLOCK_SIZE,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.init_cutoff < 1
            || self.train_cutoff < 1
            || self.transform_cutoff < 1
            || self.csls_k < 1
            || self.block_size < 1
            || self.stall_patience < 1
        {
            return Err(Error::InvalidConfig(
                "cutoffs, csls_k, block_size and stall_patience must be at least 1".into(),
            ));
        }
        if !(self.p0 > 0.0 && self.p0 <= self.max_p && self.max_p <= 1.0) {
            return Err(Error::InvalidConfig(
                "keep probabilities must satisfy 0 < p0 <= max_p <= 1".into(),
            ));
        }
        if self.p_factor < 1.0 {
            return Err(Error::InvalidConfig("p_factor must be at least 1".into()));
        }
        if self.convergence_eps <= 0.0 {
            return Err(Error::InvalidConfig(
                "convergence_eps must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        PipelineConfig {
            seed,
            ..self.clone()
        }
    }

    /// Hard cap on self-learning rounds; hitting it sets the truncation flag.
    pub fn iteration_cap(&self) -> usize {
        let escalations = (self.max_p / self.p0).log2().max(1.0);
        (10.0 * self.stall_patience as f64 * escalations).ceil() as usize
    }
}

/// Sparse set of (source index, target index) pairs, optionally weighted.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationDictionary {
    pairs: Vec<(usize, usize)>,
    weights: Option<Vec<f64>>,
}

impl TranslationDictionary {
    /// Deduplicates and sorts the pairs. Errors when empty.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let set: BTreeSet<(usize, usize)> = pairs.into_iter().collect();
        if set.is_empty() {
            return Err(Error::EmptyDictionary);
        }
        Ok(TranslationDictionary {
            pairs: set.into_iter().collect(),
            weights: None,
        })
    }

    pub fn from_weighted_pairs(
        pairs: Vec<(usize, usize)>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyDictionary);
        }
        if pairs.len() != weights.len() {
            return Err(Error::InvalidArgument(
                "weights must match pairs one to one".into(),
            ));
        }
        if weights.iter().any(|&w| !w.is_finite() || w <= 0.0) {
            return Err(Error::InvalidArgument("weights must be positive".into()));
        }
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.sort_by_key(|&i| pairs[i]);
        let sorted_pairs: Vec<(usize, usize)> = order.iter().map(|&i| pairs[i]).collect();
        if sorted_pairs.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(
                "duplicate pairs in weighted dictionary".into(),
            ));
        }
        let sorted_weights = order.iter().map(|&i| weights[i]).collect();
        Ok(TranslationDictionary {
            pairs: sorted_pairs,
            weights: Some(sorted_weights),
        })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_pairs((0..n).map(|i| (i, i)))
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn weight(&self, idx: usize) -> f64 {
        self.weights.as_ref().map(|w| w[idx]).unwrap_or(1.0)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn check_ranges(&self, src_len: usize, tgt_len: usize) -> Result<()> {
        for &(s, t) in &self.pairs {
            if s >= src_len {
                return Err(Error::IndexOutOfRange {
                    index: s,
                    size: src_len,
                });
            }
            if t >= tgt_len {
                return Err(Error::IndexOutOfRange {
                    index: t,
                    size: tgt_len,
                });
            }
        }
        Ok(())
    }
}

/// Outcome of the self-learning loop for one seed.
#[derive(Debug, Clone)]
pub struct MappingResult {
    pub w_src: Array2<f64>,
    pub w_tgt: Array2<f64>,
    pub final_dict: TranslationDictionary,
    /// Mean similarity over the final dictionary under (w_src, w_tgt).
    pub objective: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Set when the iteration cap fired before convergence.
    pub truncated: bool,
    /// Unsupervised selection score, filled in after refinement.
    pub selection: Option<f64>,
}

/// Build the seed dictionary from intra-lingual similarity distributions.
///
/// Each side's cutoff block is turned into a matrix of sorted similarity
/// rows (element-wise square root, negatives clamped to zero first); the
/// sorted rows are normalized like embeddings and matched across languages
/// with CSLS in both directions. The union of both matches is returned.
pub fn init_dictionary(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    cfg: &PipelineConfig,
) -> Result<TranslationDictionary> {
    let c = cfg.init_cutoff.min(src.len()).min(tgt.len());
    if c < 2 {
        return Err(Error::InvalidConfig(
            "initialization needs at least two rows".into(),
        ));
    }
    let mx = similarity_profile(src, c)?;
    let mz = similarity_profile(tgt, c)?;

    let k = cfg.csls_k;
    let max = c;
    if k > max {
        return Err(Error::KOutOfRange { k, max });
    }

    // CSLS matching between profile vectors, both directions.
    let r_x = crate::retrieval::knn_means(mx.view(), mz.view(), k, cfg.block_size);
    let r_z = crate::retrieval::knn_means(mz.view(), mx.view(), k, cfg.block_size);
    let sim = mx.dot(&mz.t());

    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    for i in 0..c {
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for j in 0..c {
            let score = 2.0 * sim[[i, j]] - r_x[i] - r_z[j];
            if score > best_score {
                best_score = score;
                best = j;
            }
        }
        pairs.insert((i, best));
    }
    for j in 0..c {
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for i in 0..c {
            let score = 2.0 * sim[[i, j]] - r_x[i] - r_z[j];
            if score > best_score {
                best_score = score;
                best = i;
            }
        }
        pairs.insert((best, j));
    }
    TranslationDictionary::from_pairs(pairs)
}

/// Sorted, re-normalized intra-lingual similarity rows of the cutoff block.
fn similarity_profile(space: &EmbeddingSpace, c: usize) -> Result<Array2<f64>> {
    let block = space.vectors().slice(ndarray::s![..c, ..]);
    let mut sim = block.dot(&block.t());
    sim.mapv_inplace(|v| v.max(0.0).sqrt());
    for mut row in sim.rows_mut() {
        let slice = row.as_slice_mut().expect("contiguous row");
        slice.sort_by(|a, b| a.partial_cmp(b).expect("finite similarities"));
    }
    linalg::normalize_chain(&mut sim)?;
    Ok(sim)
}

/// Optimal orthogonal maps for a fixed dictionary: the left and right
/// singular bases of the weighted cross-covariance of dictionary rows.
pub fn procrustes(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    dict: &TranslationDictionary,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if dict.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    dict.check_ranges(src.len(), tgt.len())?;
    let d = src.dim();
    if tgt.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: tgt.dim(),
        });
    }
    let p = dict.len();
    let mut xd = Array2::zeros((p, d));
    let mut zd = Array2::zeros((p, d));
    for (r, &(i, j)) in dict.pairs().iter().enumerate() {
        let w = dict.weight(r);
        xd.row_mut(r).assign(&src.row(i).mapv(|v| v * w));
        zd.row_mut(r).assign(&tgt.row(j));
    }
    let cross = xd.t().dot(&zd);
    if cross.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "non-finite cross-covariance".into(),
        ));
    }
    let parts = linalg::svd_thin(cross.view())?;
    Ok((parts.u, parts.v))
}

/// Mean mapped similarity over the dictionary: the self-learning objective.
pub fn mapping_objective(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    dict: &TranslationDictionary,
    w_src: &Array2<f64>,
    w_tgt: &Array2<f64>,
) -> Result<f64> {
    if dict.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    dict.check_ranges(src.len(), tgt.len())?;
    let mut sum = 0.0;
    let mut total_weight = 0.0;
    for (r, &(i, j)) in dict.pairs().iter().enumerate() {
        let x = src.row(i).dot(w_src);
        let z = tgt.row(j).dot(w_tgt);
        let w = dict.weight(r);
        sum += w * x.dot(&z);
        total_weight += w;
    }
    // Mean cosine of unit rows; shave off floating-point excess at the bounds.
    Ok((sum / total_weight).clamp(-1.0, 1.0))
}

/// One stochastic induction step over already-mapped spaces.
///
/// Candidates are dropped by masking their scores with probability
/// 1 - keep_prob; per-row argmax semantics are otherwise unchanged. An
/// all-dropped result is resampled once, then reported as an error.
pub fn induce_dictionary(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    cfg: &PipelineConfig,
    keep_prob: f64,
    rng: &mut ChaCha8Rng,
) -> Result<TranslationDictionary> {
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "keep_prob must be in (0, 1], got {keep_prob}"
        )));
    }
    let engine = CslsEngine::new(src, tgt, cfg.csls_k, cfg.block_size)?;
    let dropout_active = keep_prob < 1.0;

    for attempt in 0..2 {
        // One independent mask seed per retrieval row, drawn sequentially so
        // results do not depend on block partitioning or thread count.
        let fwd_seeds: Vec<u64> = if dropout_active
            && matches!(cfg.direction, Direction::Forward | Direction::Union)
        {
            (0..src.len()).map(|_| rng.random()).collect()
        } else {
            Vec::new()
        };
        let bwd_seeds: Vec<u64> = if dropout_active
            && matches!(cfg.direction, Direction::Backward | Direction::Union)
        {
            (0..tgt.len()).map(|_| rng.random()).collect()
        } else {
            Vec::new()
        };

        let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
        if matches!(cfg.direction, Direction::Forward | Direction::Union) {
            let dropout = dropout_active.then_some((fwd_seeds.as_slice(), keep_prob));
            for (i, hit) in engine.forward_argmax(dropout).into_iter().enumerate() {
                if let Some((j, _)) = hit {
                    pairs.insert((i, j));
                }
            }
        }
        if matches!(cfg.direction, Direction::Backward | Direction::Union) {
            let dropout = dropout_active.then_some((bwd_seeds.as_slice(), keep_prob));
            for (j, hit) in engine.backward_argmax(dropout).into_iter().enumerate() {
                if let Some((i, _)) = hit {
                    pairs.insert((i, j));
                }
            }
        }
        if !pairs.is_empty() {
            return TranslationDictionary::from_pairs(pairs);
        }
        if attempt == 1 || !dropout_active {
            break;
        }
    }
    Err(Error::EmptyInduction)
}

struct BestState {
    w_src: Array2<f64>,
    w_tgt: Array2<f64>,
    dict: TranslationDictionary,
    objective: f64,
}

/// Alternate Procrustes solves and stochastic induction until the keep
/// probability has saturated and the objective stops improving. Returns the
/// best-objective state seen.
pub fn self_learn(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    cfg: &PipelineConfig,
) -> Result<MappingResult> {
    cfg.validate()?;
    let xc = src.head(cfg.train_cutoff);
    let zc = tgt.head(cfg.train_cutoff);

    let mut dict = init_dictionary(&xc, &zc, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut keep_prob = cfg.p0;
    let mut best: Option<BestState> = None;
    let mut best_objective = f64::NEG_INFINITY;
    let mut stall = 0usize;
    let mut iterations = 0usize;
    let mut truncated = false;
    let cap = cfg.iteration_cap();

    loop {
        if iterations >= cap {
            truncated = true;
            break;
        }
        iterations += 1;

        let (w_src, w_tgt) = procrustes(&xc, &zc, &dict)?;
        let xm = xc.with_vectors(xc.vectors().dot(&w_src))?;
        let zm = zc.with_vectors(zc.vectors().dot(&w_tgt))?;

        let new_dict = induce_dictionary(&xm, &zm, cfg, keep_prob, &mut rng)?;
        let objective = mapping_objective(&xc, &zc, &new_dict, &w_src, &w_tgt)?;

        if objective > best_objective + cfg.convergence_eps {
            best_objective = objective;
            best = Some(BestState {
                w_src,
                w_tgt,
                dict: new_dict.clone(),
                objective,
            });
            stall = 0;
        } else {
            stall += 1;
        }
        dict = new_dict;

        if stall >= cfg.stall_patience {
            if keep_prob >= cfg.max_p {
                break;
            }
            keep_prob = (keep_prob * cfg.p_factor).min(cfg.max_p);
            stall = 0;
        }
    }

    let best = best.ok_or(Error::InvalidConfig(
        "self-learning performed no iterations; raise the iteration cap".into(),
    ))?;
    Ok(MappingResult {
        w_src: best.w_src,
        w_tgt: best.w_tgt,
        final_dict: best.dict,
        objective: best.objective,
        iterations,
        seed: cfg.seed,
        truncated,
        selection: None,
    })
}

/// The composite d x d refinement map of each side.
#[derive(Debug, Clone)]
pub struct RefinedMaps {
    pub src_map: Array2<f64>,
    pub tgt_map: Array2<f64>,
}

/// Whitening of the dictionary rows: inverse square root of their Gram
/// matrix, plus its inverse for de-whitening. A singular Gram matrix is
/// regularized once by adding 1e-9 * trace / d to the diagonal.
fn whitening(rows: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    let d = rows.ncols();
    let gram = rows.t().dot(rows);
    let build = |vals: &Array1<f64>, vecs: &Array2<f64>| {
        let inv_sqrt = Array2::from_diag(&vals.mapv(|v| 1.0 / v.sqrt()));
        let sqrt = Array2::from_diag(&vals.mapv(f64::sqrt));
        (
            vecs.dot(&inv_sqrt).dot(&vecs.t()),
            vecs.dot(&sqrt).dot(&vecs.t()),
        )
    };
    let singular = |vals: &Array1<f64>| {
        let max = vals.iter().cloned().fold(0.0, f64::max);
        vals.iter().any(|&v| v <= max * 1e-12 || v <= 0.0)
    };

    let (vals, vecs) = linalg::sym_eig(&gram)?;
    if !singular(&vals) {
        return Ok(build(&vals, &vecs));
    }
    let trace: f64 = gram.diag().sum();
    let bump = 1e-9 * trace / d as f64;
    let mut regularized = gram;
    for i in 0..d {
        regularized[[i, i]] += bump;
    }
    let (vals, vecs) = linalg::sym_eig(&regularized)?;
    if singular(&vals) {
        return Err(Error::SingularCovariance);
    }
    Ok(build(&vals, &vecs))
}

/// Compute the symmetric re-weighting refinement as one linear map per side:
/// whiten the dictionary rows, solve Procrustes between the whitened sides,
/// scale the shared dimensions by the square roots of the cross-covariance
/// singular values, and de-whiten.
pub fn refine_maps(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    dict: &TranslationDictionary,
) -> Result<RefinedMaps> {
    if dict.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    dict.check_ranges(src.len(), tgt.len())?;
    let d = src.dim();
    if tgt.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: tgt.dim(),
        });
    }
    let p = dict.len();
    let mut xd = Array2::zeros((p, d));
    let mut zd = Array2::zeros((p, d));
    for (r, &(i, j)) in dict.pairs().iter().enumerate() {
        xd.row_mut(r).assign(&src.row(i));
        zd.row_mut(r).assign(&tgt.row(j));
    }

    let (wx1, wx1_inv) = whitening(&xd)?;
    let (wz1, wz1_inv) = whitening(&zd)?;
    let xw = xd.dot(&wx1);
    let zw = zd.dot(&wz1);

    let cross = xw.t().dot(&zw);
    let parts = linalg::svd_thin(cross.view())?;
    let wx2 = parts.u;
    let wz2 = parts.v;
    let reweight = Array2::from_diag(&parts.s.mapv(f64::sqrt));

    let src_map = wx1
        .dot(&wx2)
        .dot(&reweight)
        .dot(&wx2.t())
        .dot(&wx1_inv)
        .dot(&wx2);
    let tgt_map = wz1
        .dot(&wz2)
        .dot(&reweight)
        .dot(&wz2.t())
        .dot(&wz1_inv)
        .dot(&wz2);
    Ok(RefinedMaps { src_map, tgt_map })
}

/// Apply the refinement maps to the full vocabularies. Rows are expected to
/// be length-normalized afterwards for retrieval.
pub fn refine_symmetric_reweighting(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    dict: &TranslationDictionary,
) -> Result<(EmbeddingSpace, EmbeddingSpace)> {
    let maps = refine_maps(src, tgt, dict)?;
    let src_out = src.with_vectors(src.vectors().dot(&maps.src_map))?;
    let tgt_out = tgt.with_vectors(tgt.vectors().dot(&maps.tgt_map))?;
    Ok((src_out, tgt_out))
}
