//! End-to-end runs of the `lanepilot` binary.

use std::path::Path;
use std::process::{Command, Output};

fn lanepilot(data_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lanepilot"))
        .args(args)
        .env("LANEPILOT_DATA_DIR", data_dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn gen_train_eval_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let s = |p: &str| dir.join(p).to_str().unwrap().to_string();

    ok(&lanepilot(dir, &["gen-data", "--frames", "20", "--seed", "3", "--out", &s("data")]));
    assert!(dir.join("data/manifest.json").is_file());
    assert_eq!(std::fs::read_dir(dir.join("data/frames")).unwrap().count(), 20 * 9);

    let out = ok(&lanepilot(
        dir,
        &["train", "--data", &s("data"), "--epochs", "2", "--batch", "100", "--seed", "3", "--out", &s("model")],
    ));
    assert!(out.contains("val mse"), "{out}");
    let csv = std::fs::read_to_string(dir.join("model/loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3, "header plus epochs 0..=2");
    assert!(dir.join("model/model.bin").is_file());

    let model = s("model/model.bin");
    let out = ok(&lanepilot(
        dir,
        &["eval", "--model", &model, "--scenario", "gentle-curve", "--duration", "5", "--seed", "1", "--out", &s("eval")],
    ));
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["elapsed_s"], 5.0);
    assert!(report["autonomy_percent"].is_number());
    for f in ["run.jsonl", "report.json", "autonomy.csv"] {
        assert!(dir.join("eval").join(f).is_file(), "{f}");
    }

    let out = ok(&lanepilot(dir, &["replay", "--verify", &s("eval/run.jsonl")]));
    assert!(out.contains("matches"), "{out}");

    // a log edited after the fact no longer verifies
    let text = std::fs::read_to_string(dir.join("eval/run.jsonl")).unwrap();
    let tampered = text.replacen("\"seed\":1", "\"seed\":2", 1);
    assert_ne!(tampered, text);
    std::fs::write(dir.join("tampered.jsonl"), tampered).unwrap();
    let out = lanepilot(dir, &["replay", "--verify", &s("tampered.jsonl")]);
    assert!(!out.status.success());

    // a different model than the one logged is refused
    let out = lanepilot(dir, &["replay", "--verify", &s("eval/run.jsonl"), "--model", "expert"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("digest"));
}

#[test]
fn golden_log_verifies() {
    let tmp = tempfile::tempdir().unwrap();
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/golden_run.jsonl");
    let out = ok(&lanepilot(tmp.path(), &["replay", "--verify", golden.to_str().unwrap()]));
    let digest = std::fs::read_to_string(golden.with_extension("digest")).unwrap();
    assert!(out.contains(digest.trim()), "{out}");
}

#[test]
fn ingest_pairs_external_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("rec");
    std::fs::create_dir_all(&input).unwrap();
    let mut images = String::from("timestamp_us,frame_file\n");
    for i in 0..4u64 {
        let mut pgm = b"P5\n64 32\n255\n".to_vec();
        pgm.extend(std::iter::repeat_n((i * 40) as u8, 64 * 32));
        std::fs::write(input.join(format!("f{i}.pgm")), pgm).unwrap();
        images.push_str(&format!("{},f{i}.pgm\n", i * 100_000));
    }
    std::fs::write(input.join("images.csv"), images).unwrap();
    // the last image has no steering within 50 ms
    std::fs::write(
        input.join("steering.csv"),
        "timestamp_us,steering_rad,speed_mps\n10000,0.1,2.0\n95000,-0.05,2.0\n210000,0.0,2.0\n",
    )
    .unwrap();
    let out = ok(&lanepilot(
        tmp.path(),
        &["ingest", "--input", input.to_str().unwrap(), "--out", tmp.path().join("ds").to_str().unwrap()],
    ));
    assert!(out.contains("paired 3 samples (1 dropped)"), "{out}");
    let ds = lanepilot_core::dataset::Dataset::load_dir(&tmp.path().join("ds")).unwrap();
    assert_eq!(ds.len(), 3);
}

#[test]
fn usage_errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cases: &[&[&str]] = &[
        &["eval", "--model", "expert", "--bogus"],
        &["eval", "--model", "nowhere.bin", "--duration", "1"],
        &["eval", "--model", "expert", "--scenario", "atlantis", "--duration", "1"],
        &["replay", "--verify", "/no/such/log.jsonl"],
        &["gen-data", "--frames", "2"],
        &["train", "--data", "/no/such/dataset", "--out", "x"],
        &["frobnicate"],
    ];
    for args in cases {
        let out = lanepilot(dir, args);
        assert!(!out.status.success(), "{args:?} succeeded");
        assert!(!out.stderr.is_empty(), "{args:?} gave no message");
    }
}

#[test]
fn eval_of_expert_prints_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&lanepilot(tmp.path(), &["eval", "--model", "expert", "--scenario", "straight", "--duration", "10"]));
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["autonomy_percent"], 100.0);
    assert_eq!(report["interventions"], 0);
}
