use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use artsavant::corpus::{read_embedding_store, write_embedding_store, EmbeddingStore};
use serde_json::Value;

fn artsavant(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_artsavant"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn artsavant")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn fixture(artists: &str, images: &str, generated: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let out = artsavant(
        &["synthesize", "--artists", artists, "--images-per-artist", images, "--generated-per-artist", generated, "--out", "."],
        dir.path(),
    );
    ok(&out);
    dir
}

const CORPUS: [&str; 4] = ["--embeddings", "embeddings.arts", "--manifest", "manifest.json"];
const FAST_TRAINING: [&str; 6] = ["--learning-rate", "0.05", "--batch-size", "32", "--epochs", "20"];

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn staged_commands_attribute_a_portfolio() {
    let dir = fixture("4", "60", "0");
    let p = dir.path();
    ok(&artsavant(&[&["compose"][..], &CORPUS, &["--tags", "tags.json", "--out", "profiles.json"]].concat(), p));
    assert_eq!(read_json(p.join("profiles.json")).as_array().unwrap().len(), 4);

    let tags = read_json(p.join("tags.json"));
    let own: Vec<Value> = tags
        .as_array()
        .unwrap()
        .iter()
        .filter(|t| t["image_id"].as_str().unwrap().starts_with("a01-"))
        .cloned()
        .collect();
    fs::write(p.join("query.json"), serde_json::to_string(&own).unwrap()).unwrap();
    let out = artsavant(&["tagmatch", "--profiles", "profiles.json", "--tags", "query.json"], p);
    ok(&out);
    let result: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(result["attributed_artist"], 1);
    assert!(!result["attributions"].as_array().unwrap().is_empty());
}

#[test]
fn train_then_deepmatch_recognises_an_artist() {
    let dir = fixture("4", "30", "0");
    let p = dir.path();
    ok(&artsavant(&[&["train"][..], &CORPUS, &FAST_TRAINING, &["--min-test-per-artist", "5", "--out", "model.ckpt"]].concat(), p));
    let all = read_embedding_store(p.join("embeddings.arts")).unwrap();
    let d = all.d();
    let rows = all.as_slice()[60 * d..90 * d].to_vec();
    write_embedding_store(&EmbeddingStore::normalized(30, d, rows).unwrap(), p.join("artist2.arts")).unwrap();
    let out = artsavant(&["deepmatch", "--checkpoint", "model.ckpt", "--embeddings", "artist2.arts"], p);
    ok(&out);
    let decision: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(decision["predicted_artist"], 2);
    assert_eq!(decision["predictions"].as_array().unwrap().len(), 30);
}

#[test]
fn tag_report_round_trip() {
    let dir = fixture("4", "30", "10");
    let p = dir.path();
    ok(&artsavant(
        &[&["tag"][..], &CORPUS, &["--concepts", "concepts.arts", "--vocab", "vocab.json", "--out", "concept-tags.json"]].concat(),
        p,
    ));
    assert_eq!(read_json(p.join("concept-tags.json")).as_array().unwrap().len(), 4 * 30 + 2 * 10);

    ok(&artsavant(
        &[&["evaluate"][..], &CORPUS, &["--tags", "tags.json", "--vocab", "vocab.json", "--min-test-per-artist", "5", "--artist", "0", "--out", "out"], &FAST_TRAINING]
            .concat(),
        p,
    ));
    let report = read_json(p.join("out/report.json"));
    assert_eq!(report["holdout"]["summary"]["artists"], 4);
    let out = artsavant(&["report", "--report", "out/report.json", "--artist", "0"], p);
    ok(&out);
    let md = String::from_utf8(out.stdout).unwrap();
    assert_eq!(md, fs::read_to_string(p.join("out/report.md")).unwrap());
}

#[test]
fn exit_codes_separate_usage_from_data_errors() {
    let dir = fixture("2", "30", "0");
    let p = dir.path();
    let code = |args: &[&str]| artsavant(args, p).status.code();

    assert_eq!(code(&["tag", "--bogus"]), Some(2));
    assert_eq!(code(&[&["compose"][..], &CORPUS, &["--tags", "tags.json", "--min-count", "0", "--out", "x.json"]].concat()), Some(2));
    assert_eq!(code(&[&["compose"][..], &CORPUS, &["--tags", "missing.json", "--out", "x.json"]].concat()), Some(3));

    fs::write(p.join("broken.json"), "{not json").unwrap();
    assert_eq!(code(&[&["compose"][..], &CORPUS, &["--tags", "broken.json", "--out", "x.json"]].concat()), Some(3));
    assert_eq!(code(&["deepmatch", "--checkpoint", "manifest.json", "--embeddings", "embeddings.arts"]), Some(3));
}
