mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::SceneFiles;

fn p(path: &Path) -> String {
    path.to_str().unwrap().to_string()
}

fn tag(args: &[&str], data_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tag"));
    cmd.args(args).env_remove("TAG_DATA_DIR").env_remove("RUST_LOG");
    if let Some(d) = data_dir {
        cmd.env("TAG_DATA_DIR", d);
    }
    cmd.output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Scene files plus a built caption database at `<root>/db`.
fn setup(root: &Path) -> SceneFiles {
    let files = common::write_scene(root);
    let out = tag(
        &[
            "build-db", "--captions", &p(&files.captions), "--embeddings", &p(&files.caption_embeddings),
            "--out", &p(&root.join("db")),
        ],
        None,
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    files
}

fn segment_args<'a>(files: &'a SceneFiles, db: &'a str, out: &'a str, rest: &[&'a str]) -> Vec<String> {
    let mut args: Vec<String> = [
        "segment", "--dino", &p(&files.dino), "--clip", &p(&files.clip), "--db", db,
        "--word-table", &p(&files.words), &p(&files.word_embeddings), "--out", out,
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    args.extend(rest.iter().map(|s| s.to_string()));
    args
}

fn run(args: &[String], data_dir: Option<&Path>) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    tag(&refs, data_dir)
}

fn legend_words(dir: &Path, stem: &str) -> Vec<String> {
    let text = fs::read_to_string(dir.join(format!("{stem}.legend.json"))).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    let mut words: Vec<String> = json["labels"]
        .as_array()
        .unwrap()
        .iter()
        .map(|l| l["word"].as_str().unwrap().to_string())
        .collect();
    words.sort();
    words
}

fn sorted_scene_words() -> Vec<String> {
    let mut w: Vec<String> = common::WORDS.iter().map(|s| s.to_string()).collect();
    w.sort();
    w
}

#[test]
fn segment_then_eval_scores_the_scene_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let files = setup(dir.path());
    let (db, out) = (p(&dir.path().join("db")), dir.path().join("pred"));
    let o = run(&segment_args(&files, &db, &p(&out), &["--clusters", "5", "--upsample", "nearest"]), None);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("scene: "));
    assert_eq!(legend_words(&out, "scene"), sorted_scene_words());
    for suffix in ["labels.png", "legend.json", "report.json", "overlay.png"] {
        assert!(out.join(format!("scene.{suffix}")).exists(), "{suffix}");
    }

    let report = dir.path().join("eval.json");
    let o = tag(
        &[
            "eval", "--pred-dir", &p(&out), "--gt-dir", &p(&files.gt_dir), "--classes", &p(&files.classes),
            "--sbert-table", &p(&files.sbert), &p(&files.sbert_embeddings), "--out", &p(&report),
        ],
        None,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    assert!((json["miou"].as_f64().unwrap() - 1.0).abs() < 1e-12, "{json}");
}

#[test]
fn single_cluster_gives_one_label() {
    let dir = tempfile::tempdir().unwrap();
    let files = setup(dir.path());
    let out = dir.path().join("pred");
    let o = run(&segment_args(&files, &p(&dir.path().join("db")), &p(&out), &["--clusters", "1"]), None);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(legend_words(&out, "scene").len(), 1);
}

#[test]
fn empty_candidates_label_unknown_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let files = setup(dir.path());
    let out = dir.path().join("pred");
    let rest = ["--clusters", "5", "--freq-threshold", "100", "--no-threshold-fallback"];
    let o = run(&segment_args(&files, &p(&dir.path().join("db")), &p(&out), &rest), None);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(legend_words(&out, "scene"), vec!["unknown"; 5]);
    assert!(stderr(&o).contains("labeled unknown"), "{}", stderr(&o));
}

#[test]
fn exit_codes_follow_error_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let files = setup(dir.path());
    let db = p(&dir.path().join("db"));
    let out = p(&dir.path().join("pred"));

    // missing input
    let missing = dir.path().join("nope.tens");
    let mut args = segment_args(&files, &db, &out, &[]);
    args[2] = p(&missing);
    assert_eq!(code(&run(&args, None)), 2);
    assert_eq!(code(&run(&segment_args(&files, &p(&dir.path().join("nodb")), &out, &[]), None)), 2);

    // malformed tensor
    let bad = dir.path().join("bad.tens");
    fs::write(&bad, b"NOTATENSOR").unwrap();
    let mut args = segment_args(&files, &db, &out, &[]);
    args[2] = p(&bad);
    assert_eq!(code(&run(&args, None)), 3);

    // parameters
    assert_eq!(code(&run(&segment_args(&files, &db, &out, &["--clusters", "0"]), None)), 4);
    assert_eq!(code(&run(&segment_args(&files, &db, &out, &["--no-such-flag"]), None)), 4);
    assert_eq!(code(&run(&segment_args(&files, &db, &out, &["--patch", "13", "--image-size", "84x112"]), None)), 4);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let files = setup(dir.path());
    let db = p(&dir.path().join("db"));
    let config = dir.path().join("tag.toml");
    fs::write(&config, "clusters = 1\nupsample = \"nearest\"\n").unwrap();

    let out = dir.path().join("a");
    let o = run(&segment_args(&files, &db, &p(&out), &["--config", &p(&config)]), None);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(legend_words(&out, "scene").len(), 1);

    let out = dir.path().join("b");
    let o = run(&segment_args(&files, &db, &p(&out), &["--config", &p(&config), "--clusters", "5"]), None);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(legend_words(&out, "scene"), sorted_scene_words());

    fs::write(&config, "clusterz = 3\n").unwrap();
    let o = run(&segment_args(&files, &db, &p(&dir.path().join("c")), &["--config", &p(&config)]), None);
    assert_eq!(code(&o), 3);
}

#[test]
fn data_dir_supplies_database_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let files = setup(dir.path());
    // setup already writes db/, words.{jsonl,tens} and sbert.{jsonl,tens} under the root
    let out = dir.path().join("pred");
    let o = tag(
        &[
            "segment", "--features-dir", &p(&files.features_dir), "--clusters", "5", "--upsample", "nearest",
            "--jobs", "2", "--out", &p(&out),
        ],
        Some(dir.path()),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(legend_words(&out, "scene"), sorted_scene_words());

    let o = tag(
        &["eval", "--pred-dir", &p(&out), "--gt-dir", &p(&files.gt_dir), "--classes", &p(&files.classes)],
        Some(dir.path()),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let o = tag(&["inspect-index"], Some(dir.path()));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("captions  50"), "{}", stdout(&o));

    // without the variable there is nothing to fall back on
    assert_eq!(code(&tag(&["inspect-index"], None)), 2);
}

#[test]
fn features_dir_batch_matches_single_runs() {
    let dir = tempfile::tempdir().unwrap();
    let files = setup(dir.path());
    let db = p(&dir.path().join("db"));
    for stem in ["b", "c"] {
        fs::copy(&files.dino, files.features_dir.join(format!("{stem}.dino.tens"))).unwrap();
        fs::copy(&files.clip, files.features_dir.join(format!("{stem}.clip.tens"))).unwrap();
    }
    let single = dir.path().join("single");
    assert_eq!(code(&run(&segment_args(&files, &db, &p(&single), &["--clusters", "5"]), None)), 0);

    let batch = dir.path().join("batch");
    let o = tag(
        &[
            "segment", "--features-dir", &p(&files.features_dir), "--db", &db, "--word-table", &p(&files.words),
            &p(&files.word_embeddings), "--clusters", "5", "--jobs", "3", "--out", &p(&batch),
        ],
        None,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 3);
    for stem in ["b", "c", "scene"] {
        for suffix in ["labels.png", "legend.json", "report.json"] {
            let a = fs::read(single.join(format!("scene.{suffix}"))).unwrap();
            let b = fs::read(batch.join(format!("{stem}.{suffix}"))).unwrap();
            assert_eq!(a, b, "{stem}.{suffix}");
        }
    }
}

#[test]
fn vocab_and_ivf_inspection() {
    let dir = tempfile::tempdir().unwrap();
    let files = common::write_scene(dir.path());
    let vocab = dir.path().join("vocab.txt");
    let o = tag(&["vocab", "--captions", &p(&files.captions), "--out", &p(&vocab)], None);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let words: Vec<String> = fs::read_to_string(&vocab).unwrap().lines().map(str::to_string).collect();
    let mut sorted = words.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(words, sorted);
    for w in common::WORDS {
        assert!(words.iter().any(|x| x == w), "{w}");
    }

    let db = dir.path().join("ivf");
    let o = tag(
        &[
            "build-db", "--captions", &p(&files.captions), "--embeddings", &p(&files.caption_embeddings),
            "--index", "ivf", "--lists", "5", "--probe", "2", "--out", &p(&db),
        ],
        None,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = tag(&["inspect-index", "--db", &p(&db)], None);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("lists     5") && text.contains("probe     2"), "{text}");
}
