//! Run manifest: config snapshot, input/output hashes, per-seed scores and
//! stage timings. Enough to reproduce a run exactly.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use lexalign::align::PipelineConfig;
use lexalign::pipeline::{PipelineOutcome, StageTiming};

#[derive(Debug, Serialize, Deserialize)]
pub struct FileRecord {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub objective: f64,
    pub iterations: usize,
    pub truncated: bool,
    pub selection: Option<f64>,
    pub dictionary_pairs: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: PipelineConfig,
    pub seeds: Vec<u64>,
    pub skip_transform: bool,
    pub inputs: Vec<FileRecord>,
    pub runs: Vec<SeedRecord>,
    pub chosen_seed: u64,
    pub timings: Vec<StageTiming>,
    pub outputs: Vec<FileRecord>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let file = File::open(path).with_context(|| format!("hashing {}", path.display()))?;
    let mut reader = BufReader::new(file);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = reader.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

pub fn file_record(role: &str, path: &Path) -> Result<FileRecord> {
    Ok(FileRecord {
        role: role.to_string(),
        path: path.display().to_string(),
        sha256: sha256_file(path)?,
    })
}

impl RunManifest {
    pub fn from_outcome(
        outcome: &PipelineOutcome,
        config: &PipelineConfig,
        seeds: &[u64],
        skip_transform: bool,
        inputs: Vec<FileRecord>,
        outputs: Vec<FileRecord>,
    ) -> Self {
        let runs = outcome
            .runs
            .iter()
            .map(|r| SeedRecord {
                seed: r.result.seed,
                objective: r.result.objective,
                iterations: r.result.iterations,
                truncated: r.result.truncated,
                selection: r.result.selection,
                dictionary_pairs: r.result.final_dict.len(),
            })
            .collect();
        RunManifest {
            config: config.clone(),
            seeds: seeds.to_vec(),
            skip_transform,
            inputs,
            runs,
            chosen_seed: outcome.chosen_result().seed,
            timings: outcome.timings.clone(),
            outputs,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)
            .with_context(|| format!("writing manifest {}", path.display()))?;
        Ok(())
    }
}
