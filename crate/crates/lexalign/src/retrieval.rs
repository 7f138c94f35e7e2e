//! CSLS similarity, lexicon induction and evaluation.
//!
//! CSLS(x, z) = 2 cos(x, z) - r_T(x) - r_S(z), where r_T(x) is the mean
//! cosine from x to its k nearest targets and r_S(z) the mean cosine from z
//! to its k nearest rows of the full query-side space. Everything is
//! computed in row blocks so the full m x n similarity matrix is never
//! resident beyond one block, and blocks reduce in index order so results
//! do not depend on thread scheduling.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::align::{MappingResult, PipelineConfig};
use crate::embio::{EmbeddingSpace, GoldDictionary};
use crate::error::{Error, Result};
use crate::linalg::TopK;

pub const DEFAULT_BLOCK_SIZE: usize = 1024;
const NORM_TOLERANCE: f64 = 1e-3;

/// Best translation per evaluated source word, with its CSLS score.
#[derive(Debug, Clone, Default)]
pub struct InducedLexicon {
    predictions: BTreeMap<usize, usize>,
    scores: BTreeMap<usize, f64>,
}

impl InducedLexicon {
    pub fn from_predictions(entries: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut lex = InducedLexicon::default();
        for (source, target, score) in entries {
            lex.predictions.insert(source, target);
            lex.scores.insert(source, score);
        }
        lex
    }

    pub fn prediction(&self, source: usize) -> Option<usize> {
        self.predictions.get(&source).copied()
    }

    pub fn score(&self, source: usize) -> Option<f64> {
        self.scores.get(&source).copied()
    }

    pub fn predictions(&self) -> &BTreeMap<usize, usize> {
        &self.predictions
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }
}

/// Write a lexicon as two-column text, the same dialect gold dictionaries
/// are read from.
pub fn save_lexicon(
    lexicon: &InducedLexicon,
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (&s, &t) in lexicon.predictions() {
        writeln!(w, "{}\t{}", src.word(s), tgt.word(t)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn check_unit_rows(m: ArrayView2<'_, f64>) -> Result<()> {
    for (i, row) in m.rows().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized { row: i, norm });
        }
    }
    Ok(())
}

fn blocks(n: usize, size: usize) -> Vec<Range<usize>> {
    let size = size.max(1);
    (0..n)
        .step_by(size)
        .map(|start| start..(start + size).min(n))
        .collect()
}

/// Mean cosine from each query row to its k nearest target rows.
pub(crate) fn knn_means(
    queries: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
    k: usize,
    block: usize,
) -> Vec<f64> {
    let q_blocks = blocks(queries.nrows(), block);
    let t_blocks = blocks(targets.nrows(), block);
    q_blocks
        .into_par_iter()
        .map(|qr| {
            let q = queries.slice(ndarray::s![qr.clone(), ..]);
            let mut top: Vec<TopK> = vec![TopK::new(k); qr.len()];
            for tr in &t_blocks {
                let t = targets.slice(ndarray::s![tr.clone(), ..]);
                let sim = q.dot(&t.t());
                for (r, row) in sim.rows().into_iter().enumerate() {
                    for &v in row {
                        top[r].push(v);
                    }
                }
            }
            top.into_iter().map(|t| t.mean()).collect::<Vec<f64>>()
        })
        .flatten()
        .collect()
}

/// Per-row argmax of `2 cos - r_a[i] - r_b[j]` over all rows of `b`,
/// with optional per-candidate dropout. Ties resolve to the lowest index.
fn blocked_argmax(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    r_a: &[f64],
    r_b: &[f64],
    block: usize,
    dropout: Option<(&[u64], f64)>,
) -> Vec<Option<(usize, f64)>> {
    let a_blocks = blocks(a.nrows(), block);
    let b_blocks = blocks(b.nrows(), block);
    a_blocks
        .into_par_iter()
        .map(|ar| {
            let ab = a.slice(ndarray::s![ar.clone(), ..]);
            let mut best: Vec<Option<(usize, f64)>> = vec![None; ar.len()];
            let mut rngs: Vec<ChaCha8Rng> = match dropout {
                Some((seeds, _)) => ar
                    .clone()
                    .map(|i| ChaCha8Rng::seed_from_u64(seeds[i]))
                    .collect(),
                None => Vec::new(),
            };
            for br in &b_blocks {
                let bb = b.slice(ndarray::s![br.clone(), ..]);
                let sim = ab.dot(&bb.t());
                for (r, row) in sim.rows().into_iter().enumerate() {
                    let global_row = ar.start + r;
                    for (c, &cos) in row.iter().enumerate() {
                        if let Some((_, keep_prob)) = dropout {
                            if rngs[r].random::<f64>() >= keep_prob {
                                continue;
                            }
                        }
                        let score = 2.0 * cos - r_a[global_row] - r_b[br.start + c];
                        let better = match best[r] {
                            None => true,
                            Some((_, s)) => score > s,
                        };
                        if better {
                            best[r] = Some((br.start + c, score));
                        }
                    }
                }
            }
            best
        })
        .flatten()
        .collect()
}

/// Precomputed backward neighborhood over a fixed source/target pair.
pub(crate) struct CslsEngine<'a> {
    src: ArrayView2<'a, f64>,
    tgt: ArrayView2<'a, f64>,
    k: usize,
    block: usize,
    /// r_S(z): mean cosine from each target row to its k nearest source rows.
    r_tgt: Vec<f64>,
    /// r_T(x) over all source rows; filled on first use since forward-only
    /// callers with few queries never need it.
    r_src_cache: std::sync::OnceLock<Vec<f64>>,
}

impl<'a> CslsEngine<'a> {
    pub fn new(
        src: &'a EmbeddingSpace,
        tgt: &'a EmbeddingSpace,
        k: usize,
        block: usize,
    ) -> Result<Self> {
        let max = tgt.len().min(src.len());
        if k == 0 || k > max {
            return Err(Error::KOutOfRange { k, max });
        }
        check_unit_rows(src.view())?;
        check_unit_rows(tgt.view())?;
        let r_tgt = knn_means(tgt.view(), src.view(), k, block);
        Ok(CslsEngine {
            src: src.view(),
            tgt: tgt.view(),
            k,
            block,
            r_tgt,
            r_src_cache: std::sync::OnceLock::new(),
        })
    }

    /// r_T(x) for an explicit block of query rows.
    pub fn r_queries(&self, queries: ArrayView2<'_, f64>) -> Vec<f64> {
        knn_means(queries, self.tgt, self.k, self.block)
    }

    /// r_T(x) for every source row (used by backward retrieval).
    pub fn r_src_full(&self) -> &[f64] {
        self.r_src_cache.get_or_init(|| self.r_queries(self.src))
    }

    /// Dense CSLS matrix for a block of query rows.
    pub fn scores(&self, queries: ArrayView2<'_, f64>) -> Array2<f64> {
        let r_q = self.r_queries(queries);
        let q_blocks = blocks(queries.nrows(), self.block);
        let t_blocks = blocks(self.tgt.nrows(), self.block);
        let mut out = Array2::zeros((queries.nrows(), self.tgt.nrows()));
        let row_chunks: Vec<Array2<f64>> = q_blocks
            .par_iter()
            .map(|qr| {
                let q = queries.slice(ndarray::s![qr.clone(), ..]);
                let mut chunk = Array2::zeros((qr.len(), self.tgt.nrows()));
                for tr in &t_blocks {
                    let t = self.tgt.slice(ndarray::s![tr.clone(), ..]);
                    let sim = q.dot(&t.t());
                    for r in 0..qr.len() {
                        for (c, &cos) in sim.row(r).iter().enumerate() {
                            chunk[[r, tr.start + c]] =
                                2.0 * cos - r_q[qr.start + r] - self.r_tgt[tr.start + c];
                        }
                    }
                }
                chunk
            })
            .collect();
        for (qr, chunk) in blocks(queries.nrows(), self.block).iter().zip(row_chunks) {
            out.slice_mut(ndarray::s![qr.clone(), ..]).assign(&chunk);
        }
        out
    }

    /// Best target per source row. `dropout` carries one RNG seed per source
    /// row plus the keep probability.
    pub fn forward_argmax(&self, dropout: Option<(&[u64], f64)>) -> Vec<Option<(usize, f64)>> {
        let r_src = self.r_src_full();
        blocked_argmax(self.src, self.tgt, r_src, &self.r_tgt, self.block, dropout)
    }

    /// Best source per target row, under the same symmetric CSLS scores.
    pub fn backward_argmax(&self, dropout: Option<(&[u64], f64)>) -> Vec<Option<(usize, f64)>> {
        let r_src = self.r_src_full();
        blocked_argmax(self.tgt, self.src, &self.r_tgt, r_src, self.block, dropout)
    }
}

/// Full CSLS score matrix between two spaces (queries may be a head block
/// of a larger space; its rows are the retrieval queries and also the
/// backward-neighborhood base).
pub fn csls_scores(
    queries: &EmbeddingSpace,
    targets: &EmbeddingSpace,
    k: usize,
    block_size: usize,
) -> Result<Array2<f64>> {
    let engine = CslsEngine::new(queries, targets, k, block_size)?;
    Ok(engine.scores(queries.view()))
}

/// Induce the best CSLS translation for each listed source word.
pub fn translate(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    source_indices: &[usize],
    k: usize,
    block_size: usize,
) -> Result<InducedLexicon> {
    let mut lexicon = InducedLexicon::default();
    if source_indices.is_empty() {
        return Ok(lexicon);
    }
    for &i in source_indices {
        if i >= src.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                size: src.len(),
            });
        }
    }
    let engine = CslsEngine::new(src, tgt, k, block_size)?;

    let mut queries = Array2::zeros((source_indices.len(), src.dim()));
    for (r, &i) in source_indices.iter().enumerate() {
        queries.row_mut(r).assign(&src.row(i));
    }
    let r_q = engine.r_queries(queries.view());
    let best = blocked_argmax(
        queries.view(),
        engine.tgt,
        &r_q,
        &engine.r_tgt,
        block_size,
        None,
    );
    for (r, &i) in source_indices.iter().enumerate() {
        let (t, score) = best[r].expect("argmax without dropout always yields a candidate");
        lexicon.predictions.insert(i, t);
        lexicon.scores.insert(i, score);
    }
    Ok(lexicon)
}

/// Fraction of evaluated source words whose prediction is in the gold set.
pub fn evaluate_p1(lexicon: &InducedLexicon, gold: &GoldDictionary) -> Result<f64> {
    if lexicon.len() != gold.len()
        || !gold
            .entries()
            .keys()
            .all(|s| lexicon.predictions.contains_key(s))
    {
        return Err(Error::CoverageMismatch {
            reason: format!(
                "lexicon covers {} words, gold has {} in-vocab sources",
                lexicon.len(),
                gold.len()
            ),
        });
    }
    let correct = lexicon
        .predictions
        .iter()
        .filter(|(&s, &t)| gold.accepts(s, t))
        .count();
    Ok(correct as f64 / gold.len() as f64)
}

/// Unsupervised model-selection criterion: mean cosine between the most
/// frequent source words and their induced CSLS translations.
pub fn selection_score(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    cfg: &PipelineConfig,
) -> Result<f64> {
    let n = cfg.train_cutoff.min(src.len());
    let indices: Vec<usize> = (0..n).collect();
    let lexicon = translate(src, tgt, &indices, cfg.csls_k, cfg.block_size)?;
    let mut sum = 0.0;
    for (&s, &t) in lexicon.predictions() {
        sum += src.row(s).dot(&tgt.row(t));
    }
    Ok(sum / lexicon.len() as f64)
}

/// Index of the run with the highest selection score; ties go to the
/// lowest seed. Runs without a score rank below every scored run.
pub fn select_model_index(results: &[MappingResult]) -> Result<usize> {
    if results.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot select from an empty result list".into(),
        ));
    }
    let mut best = 0usize;
    for (i, r) in results.iter().enumerate().skip(1) {
        let bi = &results[best];
        let score = r.selection.unwrap_or(f64::NEG_INFINITY);
        let best_score = bi.selection.unwrap_or(f64::NEG_INFINITY);
        if score > best_score || (score == best_score && r.seed < bi.seed) {
            best = i;
        }
    }
    Ok(best)
}

/// The run with the highest selection score.
pub fn select_model(results: &[MappingResult]) -> Result<&MappingResult> {
    Ok(&results[select_model_index(results)?])
}
