//! End-to-end orchestration: normalize, transform, per-seed self-learning
//! and refinement, unsupervised model selection, final mapped spaces.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::align::{self, MappingResult, PipelineConfig, RefinedMaps};
use crate::embio::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::retrieval;
use crate::transform::{self, IsoTransform};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub cfg: PipelineConfig,
    pub seeds: Vec<u64>,
    pub skip_transform: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            cfg: PipelineConfig::default(),
            seeds: vec![0, 1, 2],
            skip_transform: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub result: MappingResult,
    pub maps: RefinedMaps,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug)]
pub struct PipelineOutcome {
    /// None when the rotation/scaling stage was skipped.
    pub transform: Option<IsoTransform>,
    pub runs: Vec<SeedOutcome>,
    /// Index into `runs` of the selected seed.
    pub chosen: usize,
    /// Final mapped source space for the chosen seed, rows length-normalized.
    pub src_mapped: EmbeddingSpace,
    /// Final mapped target space for the chosen seed, rows length-normalized.
    pub tgt_mapped: EmbeddingSpace,
    pub timings: Vec<StageTiming>,
}

impl PipelineOutcome {
    pub fn chosen_result(&self) -> &MappingResult {
        &self.runs[self.chosen].result
    }
}

fn mapped_unit_space(space: &EmbeddingSpace, map: &ndarray::Array2<f64>) -> Result<EmbeddingSpace> {
    space
        .with_vectors(space.vectors().dot(map))?
        .unit_normalized()
}

/// Run the full alignment pipeline on two raw embedding spaces.
pub fn run_pipeline(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    opts: &PipelineOptions,
) -> Result<PipelineOutcome> {
    opts.cfg.validate()?;
    if opts.seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one seed required".into()));
    }
    let mut timings = Vec::new();
    let mut time = |stage: &str, start: Instant| {
        timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
    };

    let start = Instant::now();
    let src_n = transform::normalize(src)?;
    let tgt_n = transform::normalize(tgt)?;
    time("normalize", start);

    let start = Instant::now();
    let (iso, src_t, tgt_t) = if opts.skip_transform {
        (None, src_n, tgt_n)
    } else {
        let iso = transform::compute_iso_transform(&src_n, &tgt_n, opts.cfg.transform_cutoff)?;
        let (s, t) = transform::apply_iso_transform(&src_n, &tgt_n, &iso)?;
        (Some(iso), s, t)
    };
    time("transform", start);

    let mut runs: Vec<SeedOutcome> = Vec::with_capacity(opts.seeds.len());
    for &seed in &opts.seeds {
        let cfg = opts.cfg.with_seed(seed);

        let start = Instant::now();
        let mut result = align::self_learn(&src_t, &tgt_t, &cfg)?;
        time(&format!("self_learn[seed={seed}]"), start);

        let start = Instant::now();
        let maps = align::refine_maps(&src_t, &tgt_t, &result.final_dict)?;
        let src_m = mapped_unit_space(&src_t, &maps.src_map)?;
        let tgt_m = mapped_unit_space(&tgt_t, &maps.tgt_map)?;
        result.selection = Some(retrieval::selection_score(&src_m, &tgt_m, &cfg)?);
        time(&format!("refine_select[seed={seed}]"), start);

        runs.push(SeedOutcome { result, maps });
    }

    let results: Vec<MappingResult> = runs.iter().map(|r| r.result.clone()).collect();
    let chosen = retrieval::select_model_index(&results)?;

    let start = Instant::now();
    let src_mapped = mapped_unit_space(&src_t, &runs[chosen].maps.src_map)?;
    let tgt_mapped = mapped_unit_space(&tgt_t, &runs[chosen].maps.tgt_map)?;
    time("finalize", start);

    Ok(PipelineOutcome {
        transform: iso,
        runs,
        chosen,
        src_mapped,
        tgt_mapped,
        timings,
    })
}
