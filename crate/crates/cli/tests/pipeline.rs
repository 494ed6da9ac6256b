//! End-to-end pipeline tests against the `groundtex` binary: smoke run of
//! every command, determinism, refusal semantics, and error codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_groundtex"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed (status {:?}):\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Small-scale config exercising the config-file path of every command.
fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(
        &path,
        r#"
[canvas]
style = "speckle"
extent_m = [0.8, 0.7]
resolution = 400.0
seed = 3

[mapset]
n_queries = 6
revisit_fraction = 0.5
patch_px = [64, 48]
query_heading_range = 0.35
seed = 4

[pairs]
augment_factor = 2
seed = 5

[net]
input_px = [64, 48]
stem_pool = 1
conv_widths = [4, 8]
embed_dim = 16

[train]
epochs = 2
batch_size = 16
learning_rate = 0.001
seed = 6

[vocab]
vocab_size = 64
features_per_image = 60
seed = 7

[campaign]
k = 5
max_features = 60

[campaign.ransac]
iterations = 300
inlier_px = 3.0
seed = 8
"#,
    )
    .unwrap();
    path
}

fn generate_map(dir: &Path, config: &Path) -> PathBuf {
    let map = dir.join("map");
    let out = run(&[
        "generate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        map.to_str().unwrap(),
    ]);
    assert_ok(&out, "generate");
    map
}

#[test]
fn full_pipeline_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let cfg = config.to_str().unwrap();
    let map = generate_map(dir.path(), &config);
    let map_s = map.to_str().unwrap();
    assert!(map.join("manifest.csv").exists());
    assert!(map.join("run_manifest.json").exists());
    assert!(map.join("generate_config.json").exists());

    // Manifest row count = references + queries.
    let manifest = fs::read_to_string(map.join("manifest.csv")).unwrap();
    let rows = manifest.lines().count() - 1;
    let images = fs::read_dir(map.join("images")).unwrap().count();
    assert_eq!(rows, images);

    // pairs
    let pairs = dir.path().join("pairs.csv");
    assert_ok(
        &run(&["pairs", "--config", cfg, "--mapset", map_s, "--out", pairs.to_str().unwrap()]),
        "pairs",
    );

    // train
    let model = dir.path().join("model.gnet");
    assert_ok(
        &run(&[
            "train", "--config", cfg, "--mapset", map_s, "--pairs",
            pairs.to_str().unwrap(), "--out", model.to_str().unwrap(),
        ]),
        "train",
    );
    assert!(model.exists());
    assert!(dir.path().join("model.loss.csv").exists());
    assert!(dir.path().join("model.gnet.manifest.json").exists());

    // embed references and queries
    let refs = dir.path().join("refs.gemb");
    let queries = dir.path().join("queries.gemb");
    for (role, out_path) in [("reference", &refs), ("query", &queries)] {
        assert_ok(
            &run(&[
                "embed", "--model", model.to_str().unwrap(), "--mapset", map_s,
                "--role", role, "--out", out_path.to_str().unwrap(),
            ]),
            "embed",
        );
    }

    // index stats
    let out = run(&["index", "--embeddings", refs.to_str().unwrap()]);
    assert_ok(&out, "index");
    assert!(String::from_utf8_lossy(&out.stdout).contains("records"));

    // retrieve
    let ranking = dir.path().join("retrieval.csv");
    assert_ok(
        &run(&[
            "retrieve", "--references", refs.to_str().unwrap(), "--queries",
            queries.to_str().unwrap(), "--k", "5", "--out", ranking.to_str().unwrap(),
        ]),
        "retrieve",
    );

    // eval
    let eval_dir = dir.path().join("eval");
    assert_ok(
        &run(&[
            "eval", "--retrieval", ranking.to_str().unwrap(), "--mapset", map_s,
            "--k", "5", "--method", "dml", "--out", eval_dir.to_str().unwrap(),
        ]),
        "eval",
    );
    let recall = fs::read_to_string(eval_dir.join("recall.csv")).unwrap();
    assert!(recall.lines().count() > 1, "recall.csv has data rows");

    // BoW path: vocab, embed, retrieve, eval
    let vocab = dir.path().join("vocab.gvoc");
    assert_ok(
        &run(&["bow-vocab", "--config", cfg, "--mapset", map_s, "--out", vocab.to_str().unwrap()]),
        "bow-vocab",
    );
    let bow_refs = dir.path().join("bow_refs.gemb");
    let bow_queries = dir.path().join("bow_queries.gemb");
    for (role, out_path) in [("reference", &bow_refs), ("query", &bow_queries)] {
        assert_ok(
            &run(&[
                "bow-embed", "--vocab", vocab.to_str().unwrap(), "--mapset", map_s,
                "--role", role, "--features-per-image", "60",
                "--out", out_path.to_str().unwrap(),
            ]),
            "bow-embed",
        );
    }
    let bow_ranking = dir.path().join("bow_retrieval.csv");
    assert_ok(
        &run(&[
            "retrieve", "--references", bow_refs.to_str().unwrap(), "--queries",
            bow_queries.to_str().unwrap(), "--k", "5", "--out", bow_ranking.to_str().unwrap(),
        ]),
        "bow retrieve",
    );
    let bow_eval_dir = dir.path().join("eval_bow");
    assert_ok(
        &run(&[
            "eval", "--retrieval", bow_ranking.to_str().unwrap(), "--mapset", map_s,
            "--k", "5", "--method", "bow", "--out", bow_eval_dir.to_str().unwrap(),
        ]),
        "bow eval",
    );

    // localize without and with retrieval
    let loc_none = dir.path().join("loc_none");
    assert_ok(
        &run(&[
            "localize", "--config", cfg, "--mapset", map_s, "--source", "none",
            "--out", loc_none.to_str().unwrap(),
        ]),
        "localize none",
    );
    let loc_dml = dir.path().join("loc_dml");
    assert_ok(
        &run(&[
            "localize", "--config", cfg, "--mapset", map_s, "--retrieval",
            ranking.to_str().unwrap(), "--source", "dml",
            "--out", loc_dml.to_str().unwrap(),
        ]),
        "localize dml",
    );

    // report merge with cross-texture averages
    let report_dir = dir.path().join("report");
    assert_ok(
        &run(&[
            "report", "--inputs", eval_dir.to_str().unwrap(), "--inputs",
            bow_eval_dir.to_str().unwrap(), "--out", report_dir.to_str().unwrap(),
        ]),
        "report",
    );
    let merged = fs::read_to_string(report_dir.join("recall.csv")).unwrap();
    assert!(merged.contains("all,"), "aggregate rows present:\n{merged}");
    assert!(merged.contains("dml") && merged.contains("bow"));

    // sweep
    let sweep_csv = dir.path().join("sweep.csv");
    let out = run(&[
        "sweep", "--config", cfg, "--mapset", map_s, "--n-values", "30,60",
        "--k", "5", "--out", sweep_csv.to_str().unwrap(),
    ]);
    assert_ok(&out, "sweep");
    let sweep = fs::read_to_string(&sweep_csv).unwrap();
    assert_eq!(sweep.lines().count(), 3, "header + 2 rows:\n{sweep}");
}

#[test]
fn generate_refuses_occupied_dir_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let map = generate_map(dir.path(), &config);

    let marker = map.join("manifest.csv");
    let before = fs::read(&marker).unwrap();
    let out = bin()
        .args(["generate", "--config", config.to_str().unwrap(), "--seed", "99"])
        .args(["--out", map.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "refusal is a usage error");
    assert_eq!(fs::read(&marker).unwrap(), before, "no writes happened");

    // --force allows the overwrite.
    let out = bin()
        .args(["generate", "--config", config.to_str().unwrap(), "--force"])
        .args(["--out", map.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn generate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        assert_ok(
            &run(&["generate", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]),
            "generate",
        );
    }
    assert_eq!(
        fs::read(a.join("manifest.csv")).unwrap(),
        fs::read(b.join("manifest.csv")).unwrap()
    );
    let first_image = |d: &Path| {
        let mut names: Vec<_> = fs::read_dir(d.join("images"))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        names.sort();
        fs::read(&names[0]).unwrap()
    };
    assert_eq!(first_image(&a), first_image(&b));
    assert_eq!(
        fs::read(a.join("generate_config.json")).unwrap(),
        fs::read(b.join("generate_config.json")).unwrap()
    );
}

#[test]
fn retrieve_with_oversized_k_warns_and_returns_full_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let map = generate_map(dir.path(), &config);
    let model = dir.path().join("model.gnet");
    let pairs = dir.path().join("pairs.csv");
    assert_ok(
        &run(&["pairs", "--config", config.to_str().unwrap(), "--mapset", map.to_str().unwrap(), "--out", pairs.to_str().unwrap()]),
        "pairs",
    );
    assert_ok(
        &run(&[
            "train", "--config", config.to_str().unwrap(), "--mapset", map.to_str().unwrap(),
            "--pairs", pairs.to_str().unwrap(), "--out", model.to_str().unwrap(),
        ]),
        "train",
    );
    let refs = dir.path().join("refs.gemb");
    let queries = dir.path().join("queries.gemb");
    for (role, out_path) in [("reference", &refs), ("query", &queries)] {
        assert_ok(
            &run(&[
                "embed", "--model", model.to_str().unwrap(), "--mapset", map.to_str().unwrap(),
                "--role", role, "--out", out_path.to_str().unwrap(),
            ]),
            "embed",
        );
    }
    let ranking = dir.path().join("retrieval.csv");
    let out = run(&[
        "retrieve", "--references", refs.to_str().unwrap(), "--queries",
        queries.to_str().unwrap(), "--k", "10000", "--out", ranking.to_str().unwrap(),
    ]);
    assert_ok(&out, "retrieve");
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("warning"),
        "expected a warning on stderr"
    );
    // Full ranking: one row per (query, reference).
    let n_refs = fs::read_to_string(map.join("manifest.csv"))
        .unwrap()
        .lines()
        .filter(|l| l.ends_with(",reference"))
        .count();
    let n_queries = fs::read_to_string(map.join("manifest.csv"))
        .unwrap()
        .lines()
        .filter(|l| l.ends_with(",query"))
        .count();
    let rows = fs::read_to_string(&ranking).unwrap().lines().count() - 1;
    assert_eq!(rows, n_refs * n_queries);

    // Rerunning eval on unchanged inputs gives identical CSVs.
    let eval_a = dir.path().join("eval_a");
    let eval_b = dir.path().join("eval_b");
    for out_dir in [&eval_a, &eval_b] {
        assert_ok(
            &run(&[
                "eval", "--retrieval", ranking.to_str().unwrap(), "--mapset",
                map.to_str().unwrap(), "--k", "5", "--out", out_dir.to_str().unwrap(),
            ]),
            "eval",
        );
    }
    assert_eq!(
        fs::read(eval_a.join("recall.csv")).unwrap(),
        fs::read(eval_b.join("recall.csv")).unwrap()
    );
    assert_eq!(
        fs::read(eval_a.join("bands.csv")).unwrap(),
        fs::read(eval_b.join("bands.csv")).unwrap()
    );
}

#[test]
fn missing_artifact_names_the_producing_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "retrieve",
        "--references",
        dir.path().join("gone.gemb").to_str().unwrap(),
        "--queries",
        dir.path().join("gone2.gemb").to_str().unwrap(),
        "--out",
        dir.path().join("r.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("embed"), "stderr: {stderr}");
}

#[test]
fn format_version_mismatch_is_an_explicit_error() {
    let dir = tempfile::tempdir().unwrap();
    // Handcraft a GEMB with a bogus version.
    let path = dir.path().join("bad.gemb");
    let mut bytes = Vec::new();
    bytes.extend_from_slice(b"GEMB");
    bytes.extend_from_slice(&9u32.to_le_bytes());
    bytes.extend_from_slice(&4u32.to_le_bytes());
    bytes.extend_from_slice(&0u64.to_le_bytes());
    fs::write(&path, bytes).unwrap();

    let out = run(&[
        "retrieve",
        "--references",
        path.to_str().unwrap(),
        "--queries",
        path.to_str().unwrap(),
        "--out",
        dir.path().join("r.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("version") && stderr.contains("9"),
        "stderr: {stderr}"
    );
}

#[test]
fn ingest_round_trips_a_generated_map() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let map = generate_map(dir.path(), &config);
    let out_dir = dir.path().join("canonical");
    let out = run(&[
        "ingest",
        "--manifest",
        map.join("manifest.csv").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_ok(&out, "ingest");
    assert_eq!(
        fs::read(map.join("manifest.csv")).unwrap(),
        fs::read(out_dir.join("manifest.csv")).unwrap()
    );
}
