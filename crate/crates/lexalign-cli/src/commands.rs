use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use lexalign::align::PipelineConfig;
use lexalign::embio::{load_dictionary, load_embeddings, save_embeddings, EmbeddingSpace};
use lexalign::pipeline::{run_pipeline, PipelineOptions};
use lexalign::retrieval::{evaluate_p1, save_lexicon, translate};
use lexalign::synth::generate_isometric_pair;
use lexalign::transform;

use crate::manifest::{file_record, RunManifest};

fn load_space(path: &Path, max_vocab: usize, expected_dim: Option<usize>) -> Result<EmbeddingSpace> {
    let (space, stats) = load_embeddings(path, max_vocab, expected_dim)
        .with_context(|| format!("loading embeddings from {}", path.display()))?;
    if stats.duplicates_dropped > 0 {
        eprintln!(
            "warning: {} duplicate tokens dropped from {}",
            stats.duplicates_dropped,
            path.display()
        );
    }
    Ok(space)
}

pub struct MapArgs {
    pub src: PathBuf,
    pub tgt: PathBuf,
    pub out: PathBuf,
    pub cfg: PipelineConfig,
    pub seeds: Vec<u64>,
    pub skip_transform: bool,
    pub max_vocab: usize,
    pub expected_dim: Option<usize>,
}

pub fn cmd_map(args: MapArgs) -> Result<()> {
    fs::create_dir_all(&args.out)
        .with_context(|| format!("map: creating output directory {}", args.out.display()))?;

    let src = load_space(&args.src, args.max_vocab, args.expected_dim).context("map: load stage")?;
    let tgt = load_space(&args.tgt, args.max_vocab, args.expected_dim).context("map: load stage")?;
    println!(
        "loaded source {} x {}, target {} x {}",
        src.len(),
        src.dim(),
        tgt.len(),
        tgt.dim()
    );

    let inputs = vec![
        file_record("src", &args.src).context("map: hashing inputs")?,
        file_record("tgt", &args.tgt).context("map: hashing inputs")?,
    ];

    let opts = PipelineOptions {
        cfg: args.cfg.clone(),
        seeds: args.seeds.clone(),
        skip_transform: args.skip_transform,
    };
    let outcome = run_pipeline(&src, &tgt, &opts).context("map: pipeline stage")?;

    for run in &outcome.runs {
        let r = &run.result;
        println!(
            "seed {}: objective {:.6}, selection {:.6}, {} iterations{}, {} pairs",
            r.seed,
            r.objective,
            r.selection.unwrap_or(f64::NAN),
            r.iterations,
            if r.truncated { " (truncated)" } else { "" },
            r.final_dict.len()
        );
    }
    println!("chosen seed: {}", outcome.chosen_result().seed);

    let src_mapped_path = args.out.join("src_mapped.vec");
    let tgt_mapped_path = args.out.join("tgt_mapped.vec");
    save_embeddings(&outcome.src_mapped, &src_mapped_path).context("map: write stage")?;
    save_embeddings(&outcome.tgt_mapped, &tgt_mapped_path).context("map: write stage")?;

    let mut outputs = vec![
        file_record("src_mapped", &src_mapped_path)?,
        file_record("tgt_mapped", &tgt_mapped_path)?,
    ];

    if let Some(iso) = &outcome.transform {
        let transform_path = args.out.join("transform.json");
        fs::write(&transform_path, serde_json::to_string(iso)?).context("map: write stage")?;
        outputs.push(file_record("transform", &transform_path)?);
    }

    let dict_path = args.out.join("final_dict.txt");
    {
        let chosen = outcome.chosen_result();
        let mut lines = String::new();
        for &(i, j) in chosen.final_dict.pairs() {
            lines.push_str(src.word(i));
            lines.push('\t');
            lines.push_str(tgt.word(j));
            lines.push('\n');
        }
        fs::write(&dict_path, lines).context("map: write stage")?;
    }
    outputs.push(file_record("final_dict", &dict_path)?);

    let manifest = RunManifest::from_outcome(
        &outcome,
        &args.cfg,
        &args.seeds,
        args.skip_transform,
        inputs,
        outputs,
    );
    manifest.write(&args.out.join("manifest.json"))?;
    println!("artifacts written to {}", args.out.display());
    Ok(())
}

pub struct EvalArgs {
    pub src: PathBuf,
    pub tgt: PathBuf,
    pub gold: PathBuf,
    pub csls_k: usize,
    pub block_size: usize,
    pub max_vocab: usize,
    pub report: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
}

pub fn cmd_eval(args: EvalArgs) -> Result<()> {
    let src = load_space(&args.src, args.max_vocab, None)
        .context("eval: load stage")?
        .unit_normalized()
        .context("eval: normalize stage")?;
    let tgt = load_space(&args.tgt, args.max_vocab, None)
        .context("eval: load stage")?
        .unit_normalized()
        .context("eval: normalize stage")?;

    let gold = load_dictionary(&args.gold, &src, &tgt)
        .with_context(|| format!("eval: loading gold dictionary {}", args.gold.display()))?;

    let lexicon = translate(
        &src,
        &tgt,
        &gold.source_indices(),
        args.csls_k,
        args.block_size,
    )
    .context("eval: retrieval stage")?;
    let p1 = evaluate_p1(&lexicon, &gold).context("eval: scoring stage")?;

    println!("P@1: {:.2}%", 100.0 * p1);
    println!("coverage: {} source words", gold.len());
    println!("skipped_oov: {}", gold.skipped_oov());

    if let Some(path) = &args.predictions {
        save_lexicon(&lexicon, &src, &tgt, path).context("eval: writing predictions")?;
    }
    if let Some(path) = &args.report {
        let report = serde_json::json!({
            "p1": p1,
            "p1_percent": 100.0 * p1,
            "coverage": gold.len(),
            "skipped_oov": gold.skipped_oov(),
            "csls_k": args.csls_k,
        });
        fs::write(path, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("eval: writing report {}", path.display()))?;
    }
    Ok(())
}

pub struct DiagnoseArgs {
    pub src: PathBuf,
    pub tgt: PathBuf,
    pub gold: PathBuf,
    pub k: usize,
    pub cutoff: usize,
    pub max_vocab: usize,
    pub out: PathBuf,
}

pub fn cmd_diagnose(args: DiagnoseArgs) -> Result<()> {
    fs::create_dir_all(&args.out)
        .with_context(|| format!("diagnose: creating output directory {}", args.out.display()))?;

    let src = load_space(&args.src, args.max_vocab, None).context("diagnose: load stage")?;
    let tgt = load_space(&args.tgt, args.max_vocab, None).context("diagnose: load stage")?;
    let src_n = transform::normalize(&src).context("diagnose: normalize stage")?;
    let tgt_n = transform::normalize(&tgt).context("diagnose: normalize stage")?;

    let gold = load_dictionary(&args.gold, &src_n, &tgt_n)
        .with_context(|| format!("diagnose: loading gold dictionary {}", args.gold.display()))?;

    let src_spectrum = transform::top_singular_values(&src_n, args.k, args.cutoff)
        .context("diagnose: spectrum stage")?;
    let tgt_spectrum = transform::top_singular_values(&tgt_n, args.k, args.cutoff)
        .context("diagnose: spectrum stage")?;

    let mut sv_csv = String::from("language,rank,singular_value\n");
    for (rank, v) in src_spectrum.iter().enumerate() {
        sv_csv.push_str(&format!("src,{},{}\n", rank + 1, v));
    }
    for (rank, v) in tgt_spectrum.iter().enumerate() {
        sv_csv.push_str(&format!("tgt,{},{}\n", rank + 1, v));
    }
    let sv_path = args.out.join("singular_values.csv");
    fs::write(&sv_path, &sv_csv).context("diagnose: write stage")?;

    let iso = transform::compute_iso_transform(&src_n, &tgt_n, args.cutoff)
        .context("diagnose: transform stage")?;
    let original =
        transform::dictionary_cosine(&src_n, &tgt_n, &gold).context("diagnose: cosine stage")?;
    let rotated = transform::dictionary_cosine(
        &iso.rotate_src(&src_n).context("diagnose: rotation stage")?,
        &iso.rotate_tgt(&tgt_n).context("diagnose: rotation stage")?,
        &gold,
    )
    .context("diagnose: cosine stage")?;

    let mut cos_csv = String::from("variant,mean_cosine,pairs\n");
    cos_csv.push_str(&format!("original,{},{}\n", original, gold.len()));
    cos_csv.push_str(&format!("rotated,{},{}\n", rotated, gold.len()));
    let cos_path = args.out.join("dictionary_cosine.csv");
    fs::write(&cos_path, &cos_csv).context("diagnose: write stage")?;

    println!("top-{} singular values (cutoff {}):", args.k, args.cutoff);
    println!("  src: {:?}", src_spectrum);
    println!("  tgt: {:?}", tgt_spectrum);
    println!("dictionary cosine: original {original:.4}, rotated {rotated:.4}");
    println!("wrote {} and {}", sv_path.display(), cos_path.display());
    Ok(())
}

pub struct SynthArgs {
    pub n: usize,
    pub d: usize,
    pub noise: f64,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn cmd_synth(args: SynthArgs) -> Result<()> {
    fs::create_dir_all(&args.out)
        .with_context(|| format!("synth: creating output directory {}", args.out.display()))?;
    let inst = generate_isometric_pair(args.n, args.d, args.noise, args.seed)
        .context("synth: generation stage")?;

    let src_path = args.out.join("src.vec");
    let tgt_path = args.out.join("tgt.vec");
    save_embeddings(&inst.src, &src_path).context("synth: write stage")?;
    save_embeddings(&inst.tgt, &tgt_path).context("synth: write stage")?;

    let perm_path = args.out.join("permutation.txt");
    let mut perm_text = String::new();
    for &p in &inst.permutation {
        perm_text.push_str(&format!("{p}\n"));
    }
    fs::write(&perm_path, perm_text).context("synth: write stage")?;

    // Gold dictionary in the standard two-column dialect: the source word
    // planted at each target row translates to that target word.
    let gold_path = args.out.join("gold.txt");
    let mut gold_text = String::new();
    for (i, &from) in inst.permutation.iter().enumerate() {
        gold_text.push_str(&format!("{}\t{}\n", inst.src.word(from), inst.tgt.word(i)));
    }
    fs::write(&gold_path, gold_text).context("synth: write stage")?;

    println!(
        "planted instance: n={}, d={}, noise={}, seed={}",
        args.n, args.d, args.noise, args.seed
    );
    println!("wrote src.vec, tgt.vec, permutation.txt, gold.txt to {}", args.out.display());
    Ok(())
}
