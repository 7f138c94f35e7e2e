//! lexalign aligns two independently trained monolingual word-embedding
//! spaces without any supervision and induces a bilingual lexicon from the
//! result.
//!
//! The pipeline normalizes both spaces, rotates each into its own singular
//! basis and rescales every dimension to the geometric mean of the two
//! spectra (computed on the most frequent words only), then runs a
//! self-learning loop of orthogonal Procrustes solves and stochastic CSLS
//! dictionary induction, refines the converged mapping by symmetric
//! re-weighting, and picks the best of several seeds by an unsupervised
//! mean-cosine criterion.

pub mod align;
pub mod embio;
pub mod error;
mod linalg;
pub mod pipeline;
pub mod retrieval;
pub mod synth;
pub mod transform;

pub use align::{
    Direction, MappingResult, PipelineConfig, RefinedMaps, TranslationDictionary,
};
pub use embio::{EmbeddingSpace, GoldDictionary, LoadStats};
pub use error::{Error, Result};
pub use pipeline::{PipelineOptions, PipelineOutcome};
pub use retrieval::InducedLexicon;
pub use synth::PlantedInstance;
pub use transform::IsoTransform;
