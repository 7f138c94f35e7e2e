//! End-to-end tests of the `lexalign` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_lexalign")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary should execute")
}

fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn synth_into(dir: &Path, n: usize, d: usize, noise: f64, seed: u64) {
    run_ok(&[
        "synth",
        "--n",
        &n.to_string(),
        "--d",
        &d.to_string(),
        "--noise",
        &noise.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        dir.to_str().unwrap(),
    ]);
}

fn map_into(src_dir: &Path, out_dir: &Path, extra: &[&str]) -> String {
    let src = src_dir.join("src.vec");
    let tgt = src_dir.join("tgt.vec");
    let mut args = vec![
        "map",
        "--src",
        src.to_str().unwrap(),
        "--tgt",
        tgt.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--stall-patience",
        "5",
    ];
    args.extend_from_slice(extra);
    let args: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    let arg_refs: Vec<&str> = args.iter().map(String::as_str).collect();
    run_ok(&arg_refs)
}

fn output_hashes(manifest_path: &Path) -> Vec<(String, String)> {
    let text = std::fs::read_to_string(manifest_path).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    json["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| {
            (
                o["role"].as_str().unwrap().to_string(),
                o["sha256"].as_str().unwrap().to_string(),
            )
        })
        .collect()
}

#[test]
fn synth_map_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let synth_dir = tmp.path().join("instance");
    let run_dir = tmp.path().join("run");
    synth_into(&synth_dir, 200, 10, 0.0, 0);

    for name in ["src.vec", "tgt.vec", "permutation.txt", "gold.txt"] {
        assert!(synth_dir.join(name).exists(), "missing {name}");
    }

    map_into(&synth_dir, &run_dir, &["--seeds", "0,1"]);
    for name in [
        "src_mapped.vec",
        "tgt_mapped.vec",
        "transform.json",
        "final_dict.txt",
        "manifest.json",
    ] {
        assert!(run_dir.join(name).exists(), "missing {name}");
    }

    let stdout = run_ok(&[
        "eval",
        "--src",
        run_dir.join("src_mapped.vec").to_str().unwrap(),
        "--tgt",
        run_dir.join("tgt_mapped.vec").to_str().unwrap(),
        "--gold",
        synth_dir.join("gold.txt").to_str().unwrap(),
        "--report",
        tmp.path().join("report.json").to_str().unwrap(),
    ]);
    assert!(stdout.contains("P@1: 100.00%"), "stdout: {stdout}");
    assert!(stdout.contains("coverage: 200"), "stdout: {stdout}");
    assert!(stdout.contains("skipped_oov: 0"), "stdout: {stdout}");

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["coverage"], 200);
    assert!((report["p1"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn reruns_produce_identical_artifact_hashes() {
    let tmp = tempfile::tempdir().unwrap();
    let synth_dir = tmp.path().join("instance");
    synth_into(&synth_dir, 150, 8, 0.02, 1);

    let run_a = tmp.path().join("a");
    let run_b = tmp.path().join("b");
    map_into(&synth_dir, &run_a, &["--seeds", "0,1"]);
    map_into(&synth_dir, &run_b, &["--seeds", "0,1"]);

    let hashes_a = output_hashes(&run_a.join("manifest.json"));
    let hashes_b = output_hashes(&run_b.join("manifest.json"));
    assert_eq!(hashes_a, hashes_b);
}

#[test]
fn skip_transform_runs_the_baseline_path() {
    let tmp = tempfile::tempdir().unwrap();
    let synth_dir = tmp.path().join("instance");
    synth_into(&synth_dir, 150, 8, 0.0, 2);

    let run_dir = tmp.path().join("run");
    map_into(&synth_dir, &run_dir, &["--seeds", "0", "--skip-transform"]);
    assert!(!run_dir.join("transform.json").exists());

    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(run_dir.join("manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["skip_transform"], true);
}

#[test]
fn chosen_seed_is_the_selection_argmax() {
    let tmp = tempfile::tempdir().unwrap();
    let synth_dir = tmp.path().join("instance");
    synth_into(&synth_dir, 150, 8, 0.05, 3);
    let run_dir = tmp.path().join("run");
    map_into(&synth_dir, &run_dir, &["--seeds", "0,1,2"]);

    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(run_dir.join("manifest.json")).unwrap(),
    )
    .unwrap();
    let runs = manifest["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 3);
    let best = runs
        .iter()
        .max_by(|a, b| {
            a["selection"]
                .as_f64()
                .unwrap()
                .partial_cmp(&b["selection"].as_f64().unwrap())
                .unwrap()
        })
        .unwrap();
    assert_eq!(manifest["chosen_seed"], best["seed"]);
}

#[test]
fn config_file_values_are_used_and_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    let synth_dir = tmp.path().join("instance");
    synth_into(&synth_dir, 120, 6, 0.0, 4);

    let config_path = tmp.path().join("cfg.toml");
    std::fs::write(
        &config_path,
        "seeds = [7]\n[pipeline]\ncsls_k = 4\nstall_patience = 5\n",
    )
    .unwrap();

    let run_dir: PathBuf = tmp.path().join("run");
    let stdout = run_ok(&[
        "map",
        "--src",
        synth_dir.join("src.vec").to_str().unwrap(),
        "--tgt",
        synth_dir.join("tgt.vec").to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
        "--config",
        config_path.to_str().unwrap(),
        "--csls-k",
        "6",
    ]);
    assert!(stdout.contains("seed 7:"), "stdout: {stdout}");

    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(run_dir.join("manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["config"]["csls_k"], 6, "flag must override file");
    assert_eq!(manifest["config"]["stall_patience"], 5);
    assert_eq!(manifest["seeds"], serde_json::json!([7]));
}

#[test]
fn eval_reads_config_file_and_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    let synth_dir = tmp.path().join("instance");
    synth_into(&synth_dir, 120, 6, 0.0, 8);
    let run_dir = tmp.path().join("run");
    map_into(&synth_dir, &run_dir, &["--seeds", "0"]);

    let config_path = tmp.path().join("cfg.toml");
    std::fs::write(&config_path, "[pipeline]\ncsls_k = 4\n").unwrap();

    let report_a = tmp.path().join("a.json");
    run_ok(&[
        "eval",
        "--src",
        run_dir.join("src_mapped.vec").to_str().unwrap(),
        "--tgt",
        run_dir.join("tgt_mapped.vec").to_str().unwrap(),
        "--gold",
        synth_dir.join("gold.txt").to_str().unwrap(),
        "--config",
        config_path.to_str().unwrap(),
        "--report",
        report_a.to_str().unwrap(),
    ]);
    let a: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_a).unwrap()).unwrap();
    assert_eq!(a["csls_k"], 4, "config file value must be used");

    let report_b = tmp.path().join("b.json");
    run_ok(&[
        "eval",
        "--src",
        run_dir.join("src_mapped.vec").to_str().unwrap(),
        "--tgt",
        run_dir.join("tgt_mapped.vec").to_str().unwrap(),
        "--gold",
        synth_dir.join("gold.txt").to_str().unwrap(),
        "--config",
        config_path.to_str().unwrap(),
        "--csls-k",
        "7",
        "--report",
        report_b.to_str().unwrap(),
    ]);
    let b: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_b).unwrap()).unwrap();
    assert_eq!(b["csls_k"], 7, "flag must override the config file");
}

#[test]
fn diagnose_writes_csv_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let synth_dir = tmp.path().join("instance");
    synth_into(&synth_dir, 120, 6, 0.0, 5);

    // Identity gold over the same file on both sides.
    let gold_path = tmp.path().join("gold_self.txt");
    let mut gold = String::new();
    for i in 0..120 {
        gold.push_str(&format!("s{i}\ts{i}\n"));
    }
    std::fs::write(&gold_path, gold).unwrap();

    let out_dir = tmp.path().join("diag");
    let stdout = run_ok(&[
        "diagnose",
        "--src",
        synth_dir.join("src.vec").to_str().unwrap(),
        "--tgt",
        synth_dir.join("src.vec").to_str().unwrap(),
        "--gold",
        gold_path.to_str().unwrap(),
        "--k",
        "5",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(stdout.contains("rotated 1.0000"), "stdout: {stdout}");

    let sv = std::fs::read_to_string(out_dir.join("singular_values.csv")).unwrap();
    let mut lines = sv.lines();
    assert_eq!(lines.next(), Some("language,rank,singular_value"));
    assert_eq!(sv.lines().count(), 11, "header plus 5 rows per language");

    let cos = std::fs::read_to_string(out_dir.join("dictionary_cosine.csv")).unwrap();
    assert!(cos.starts_with("variant,mean_cosine,pairs\n"));
    assert!(cos.contains("original,"));
    assert!(cos.contains("rotated,"));
}

#[test]
fn eval_with_all_oov_gold_fails_with_stage_context() {
    let tmp = tempfile::tempdir().unwrap();
    let synth_dir = tmp.path().join("instance");
    synth_into(&synth_dir, 120, 6, 0.0, 6);
    let run_dir = tmp.path().join("run");
    map_into(&synth_dir, &run_dir, &["--seeds", "0"]);

    let gold_path = tmp.path().join("bad_gold.txt");
    std::fs::write(&gold_path, "unicorn pegasus\n").unwrap();

    let out = run(&[
        "eval",
        "--src",
        run_dir.join("src_mapped.vec").to_str().unwrap(),
        "--tgt",
        run_dir.join("tgt_mapped.vec").to_str().unwrap(),
        "--gold",
        gold_path.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("zero usable entries"), "stderr: {stderr}");
    assert!(stderr.contains("gold"), "stderr: {stderr}");
}

#[test]
fn map_reports_the_failing_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.vec");
    std::fs::write(&bad, "not an embedding\n").unwrap();
    let out = run(&[
        "map",
        "--src",
        bad.to_str().unwrap(),
        "--tgt",
        bad.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("map: load stage"), "stderr: {stderr}");
}

#[test]
fn permutation_file_lists_one_index_per_line() {
    let tmp = tempfile::tempdir().unwrap();
    let synth_dir = tmp.path().join("instance");
    synth_into(&synth_dir, 60, 5, 0.0, 7);
    let text = std::fs::read_to_string(synth_dir.join("permutation.txt")).unwrap();
    let perm: Vec<usize> = text.lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(perm.len(), 60);
    let mut sorted = perm.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (0..60).collect::<Vec<_>>(), "must be a bijection");
}
