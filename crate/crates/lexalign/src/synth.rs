//! Synthetic benchmark instances: a random space, a planted row
//! permutation, and a shared Haar-random rotation, with optional Gaussian
//! noise. These drive the desk-scale oracle tests.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::embio::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::linalg;
use crate::retrieval::InducedLexicon;

/// A planted alignment problem. Target row `i` is the (noisy, rotated)
/// copy of source row `permutation[i]`.
#[derive(Debug, Clone)]
pub struct PlantedInstance {
    pub src: EmbeddingSpace,
    pub tgt: EmbeddingSpace,
    pub permutation: Vec<usize>,
    /// The common rotation applied to the source rows.
    pub rotation: Array2<f64>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl PlantedInstance {
    /// For each source row, the target row it was planted into.
    pub fn inverse_permutation(&self) -> Vec<usize> {
        let mut inv = vec![0usize; self.permutation.len()];
        for (tgt_row, &src_row) in self.permutation.iter().enumerate() {
            inv[src_row] = tgt_row;
        }
        inv
    }
}

/// Generate an instance with `n` words of dimension `d`. Noise is added
/// before the final normalization so unit-length invariants hold downstream.
pub fn generate_isometric_pair(
    n: usize,
    d: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<PlantedInstance> {
    if d < 2 || n <= d {
        return Err(Error::InvalidArgument(format!(
            "need n > d >= 2, got n={n}, d={d}"
        )));
    }
    if noise_sigma.is_nan() || noise_sigma < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "noise_sigma must be non-negative, got {noise_sigma}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut src_m = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
    linalg::normalize_chain(&mut src_m)?;

    let mut permutation: Vec<usize> = (0..n).collect();
    permutation.shuffle(&mut rng);

    let rotation = linalg::random_orthogonal(d, &mut rng);
    let rotated = src_m.dot(&rotation);

    let mut tgt_m = Array2::zeros((n, d));
    for (row, &from) in permutation.iter().enumerate() {
        tgt_m.row_mut(row).assign(&rotated.row(from));
    }
    if noise_sigma > 0.0 {
        for v in tgt_m.iter_mut() {
            *v += noise_sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    // Plain length re-normalization: the planted relation tgt = P * src * O
    // must hold exactly at zero noise, and the pipeline's own normalization
    // chain preserves it (centering commutes with the common rotation).
    linalg::unit_rows(&mut tgt_m)?;

    let src_words = (0..n).map(|i| format!("s{i}")).collect();
    let tgt_words = (0..n).map(|i| format!("t{i}")).collect();
    Ok(PlantedInstance {
        src: EmbeddingSpace::new(src_words, src_m)?,
        tgt: EmbeddingSpace::new(tgt_words, tgt_m)?,
        permutation,
        rotation,
        noise_sigma,
        seed,
    })
}

/// Fraction of source words translated to their planted counterpart. The
/// lexicon must cover every source word.
pub fn score_against_plant(lexicon: &InducedLexicon, instance: &PlantedInstance) -> Result<f64> {
    let n = instance.src.len();
    if lexicon.len() != n {
        return Err(Error::CoverageMismatch {
            reason: format!("lexicon covers {} of {} source words", lexicon.len(), n),
        });
    }
    let inverse = instance.inverse_permutation();
    let mut correct = 0usize;
    for (&s, &t) in lexicon.predictions() {
        if s >= n {
            return Err(Error::IndexOutOfRange { index: s, size: n });
        }
        if inverse[s] == t {
            correct += 1;
        }
    }
    Ok(correct as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_rows_match_after_common_rotation() {
        let inst = generate_isometric_pair(60, 6, 0.0, 3).unwrap();
        let rotated = inst.src.vectors().dot(&inst.rotation);
        for (i, &from) in inst.permutation.iter().enumerate() {
            let z = inst.tgt.row(i);
            let x = rotated.row(from);
            let cos = z.dot(&x) / (z.dot(&z).sqrt() * x.dot(&x).sqrt());
            assert!(cos >= 1.0 - 1e-7, "row {i}: cos {cos}");
        }
    }

    #[test]
    fn zero_noise_satisfies_planted_equation_exactly() {
        let inst = generate_isometric_pair(40, 5, 0.0, 4).unwrap();
        let rotated = inst.src.vectors().dot(&inst.rotation);
        let mut max_dev = 0.0f64;
        for (i, &from) in inst.permutation.iter().enumerate() {
            for (a, b) in inst.tgt.row(i).iter().zip(rotated.row(from).iter()) {
                max_dev = max_dev.max((a - b).abs());
            }
        }
        assert!(max_dev <= 1e-7, "max deviation {max_dev}");
    }

    #[test]
    fn zero_noise_singular_values_agree() {
        let inst = generate_isometric_pair(50, 8, 0.0, 5).unwrap();
        let s_src = crate::transform::top_singular_values(&inst.src, 8, 50).unwrap();
        let s_tgt = crate::transform::top_singular_values(&inst.tgt, 8, 50).unwrap();
        for (a, b) in s_src.iter().zip(s_tgt.iter()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn rotation_is_orthogonal() {
        let inst = generate_isometric_pair(30, 7, 0.01, 6).unwrap();
        let gram = inst.rotation.t().dot(&inst.rotation);
        for i in 0..7 {
            for j in 0..7 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let a = generate_isometric_pair(25, 4, 0.05, 7).unwrap();
        let b = generate_isometric_pair(25, 4, 0.05, 7).unwrap();
        assert_eq!(a.permutation, b.permutation);
        for (x, y) in a.src.vectors().iter().zip(b.src.vectors().iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        for (x, y) in a.tgt.vectors().iter().zip(b.tgt.vectors().iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn invalid_shapes_are_rejected() {
        assert!(generate_isometric_pair(3, 3, 0.0, 0).is_err());
        assert!(generate_isometric_pair(10, 1, 0.0, 0).is_err());
        assert!(generate_isometric_pair(10, 4, -0.1, 0).is_err());
    }

    #[test]
    fn perfect_lexicon_scores_one() {
        let inst = generate_isometric_pair(20, 4, 0.0, 8).unwrap();
        let inv = inst.inverse_permutation();
        let lex =
            InducedLexicon::from_predictions((0..20).map(|s| (s, inv[s], 1.0)));
        assert!((score_against_plant(&lex, &inst).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_plant_with_identity_predictions_scores_one() {
        let base = generate_isometric_pair(12, 3, 0.0, 9).unwrap();
        let inst = PlantedInstance {
            permutation: (0..12).collect(),
            ..base
        };
        let lex = InducedLexicon::from_predictions((0..12).map(|s| (s, s, 1.0)));
        assert!((score_against_plant(&lex, &inst).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_predictions_score_near_one_over_n() {
        let n = 1000usize;
        let inst = generate_isometric_pair(n, 5, 0.0, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut total = 0.0;
        let trials = 10;
        for _ in 0..trials {
            let lex = InducedLexicon::from_predictions(
                (0..n).map(|s| (s, rng.random_range(0..n), 0.0)),
            );
            total += score_against_plant(&lex, &inst).unwrap();
        }
        let mean = total / trials as f64;
        // Expectation 1/n; 3 sigma of the 10-trial mean is ~9.5e-4.
        assert!(
            (mean - 1.0 / n as f64).abs() <= 1e-3,
            "mean random score {mean}"
        );
    }

    #[test]
    fn coverage_mismatch_is_rejected() {
        let inst = generate_isometric_pair(15, 3, 0.0, 12).unwrap();
        let lex = InducedLexicon::from_predictions((0..10).map(|s| (s, s, 0.0)));
        assert!(matches!(
            score_against_plant(&lex, &inst),
            Err(Error::CoverageMismatch { .. })
        ));
    }
}
