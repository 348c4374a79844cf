use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use iakrec::datagen::read_jsonl;
use iakrec::router::ScoreRequest;

const BIN: &str = env!("CARGO_BIN_EXE_iakrec");

fn small_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/small.toml")
}

fn iakrec(workdir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).arg("--workdir").arg(workdir).args(args).output().unwrap()
}

/// Runs a command that must succeed; returns the output directory it printed,
/// which is relative to the working directory.
fn ok(workdir: &Path, args: &[&str]) -> PathBuf {
    let out = iakrec(workdir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let printed = PathBuf::from(String::from_utf8(out.stdout).unwrap().trim());
    assert!(printed.is_relative(), "{}", printed.display());
    workdir.join(printed)
}

fn fails(workdir: &Path, args: &[&str], code: i32, message: &str) {
    let out = iakrec(workdir, args);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(code), "{args:?}: {stderr}");
    assert!(stderr.contains(message), "{args:?}: {stderr}");
}

fn config_arg() -> String {
    small_config().to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_recipe_emits_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let w = tmp.path();
    let cfg = config_arg();
    let start = Instant::now();

    let gen = ok(w, &["gen-data", "--config", &cfg]);
    let data = gen.join("data.jsonl");
    let pre = ok(w, &["pretrain", "--config", &cfg, "--data", s(&data)]);
    let backbone = pre.join("backbone.ckpt");
    let fine = ok(w, &["finetune", "--config", &cfg, "--data", s(&data), "--backbone", s(&backbone)]);
    let adapters = fine.join("adapters.ckpt");
    let eval = ok(
        w,
        &["eval", "--config", &cfg, "--data", s(&data), "--backbone", s(&backbone), "--adapters", s(&adapters)],
    );
    assert!(start.elapsed() < Duration::from_secs(600));

    for (dir, files) in [
        (&gen, &["data.jsonl"][..]),
        (&pre, &["backbone.ckpt", "pretrain_curve.csv"]),
        (&fine, &["adapters.ckpt", "finetune_curve.csv"]),
        (&eval, &["eval.csv"]),
    ] {
        assert!(dir.starts_with(w.join("runs")), "{}", dir.display());
        for f in files.iter().chain(&["config.toml"]) {
            assert!(dir.join(f).is_file(), "{} missing {f}", dir.display());
        }
    }
    // The echoed config is the effective one, defaults included.
    let echoed = fs::read_to_string(gen.join("config.toml")).unwrap();
    assert!(echoed.contains("n_users = 120") && echoed.contains("[router]"));

    let csv = fs::read_to_string(eval.join("eval.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    // Three target domains x {zero_shot, iak}, then the whole split zero-shot and routed.
    assert_eq!(rows.len(), 8, "{csv}");
    assert!(rows[6].starts_with("all,zero_shot") && rows[7].starts_with("all,routed"), "{csv}");

    // Serving the test records over stdin answers each with one line.
    let requests: String = read_jsonl(&data)
        .unwrap()
        .iter()
        .take(50)
        .map(|r| serde_json::to_string(&ScoreRequest::from_record(r)).unwrap() + "\n")
        .collect();
    let mut child = Command::new(BIN)
        .args(["--workdir", s(w), "serve", "--config", &cfg, "--backbone", s(&backbone), "--adapters", s(&adapters)])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(requests.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let replies = String::from_utf8(out.stdout).unwrap();
    assert_eq!(replies.lines().count(), 50);
    assert!(replies.lines().all(|l| l.contains("\"p_ctr\"")), "{replies}");
}

#[test]
fn reruns_are_reproducible_and_never_overwrite() {
    let tmp = tempfile::tempdir().unwrap();
    let w = tmp.path();
    let cfg = config_arg();
    let args = ["gen-data", "--config", &cfg, "--seed", "11", "--set", "datagen.n_days=6"];
    let a = ok(w, &args);
    let b = ok(w, &args);
    assert_ne!(a, b);
    assert!(a.file_name().unwrap().to_str().unwrap().contains("-seed11-gen-data"));
    assert_eq!(fs::read(a.join("data.jsonl")).unwrap(), fs::read(b.join("data.jsonl")).unwrap());
    assert_eq!(fs::read(a.join("config.toml")).unwrap(), fs::read(b.join("config.toml")).unwrap());

    let other = ok(w, &["gen-data", "--config", &cfg, "--seed", "12", "--set", "datagen.n_days=6"]);
    assert_ne!(fs::read(a.join("data.jsonl")).unwrap(), fs::read(other.join("data.jsonl")).unwrap());

    // An explicit output directory that is already in use is refused.
    fails(w, &["gen-data", "--config", &cfg, "--out", s(&a)], 6, "not empty");
    let fresh = ok(w, &["gen-data", "--config", &cfg, "--set", "datagen.n_days=6", "--out", "mine"]);
    assert_eq!(fresh, w.join("mine"));
}

#[test]
fn inputs_are_not_modified() {
    let tmp = tempfile::tempdir().unwrap();
    let w = tmp.path();
    let cfg = config_arg();
    let before = fs::read(&cfg).unwrap();
    let gen = ok(w, &["gen-data", "--config", &cfg, "--set", "datagen.n_days=6", "--set", "datagen.split=[5, 1]"]);
    let data = gen.join("data.jsonl");
    let bytes = fs::read(&data).unwrap();
    ok(
        w,
        &["pretrain", "--config", &cfg, "--data", s(&data), "--set", "datagen.split=[5, 1]", "--set", "train.pretrain_holdout_days=0", "--set", "train.epochs=1"],
    );
    assert_eq!(fs::read(&data).unwrap(), bytes);
    assert_eq!(fs::read(&cfg).unwrap(), before);
}

#[test]
fn failures_have_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let w = tmp.path();
    let cfg = config_arg();

    // Usage.
    fails(w, &["train"], 2, "unrecognized subcommand");
    fails(w, &["pretrain"], 2, "--data");
    // Configuration: missing file, unknown key, bad value.
    fails(w, &["gen-data", "--config", "nope.toml"], 3, "nope.toml");
    fails(w, &["gen-data", "--set", "datagen.colour=3"], 3, "colour");
    fails(w, &["gen-data", "--set", "datagen.n_users=0"], 3, "config");
    fails(w, &["experiment", "--kind", "everything"], 3, "everything");
    // Missing files.
    fails(w, &["pretrain", "--config", &cfg, "--data", "missing.jsonl"], 4, "missing.jsonl");
    // Precondition.
    fs::write(w.join("data.jsonl"), "").unwrap();
    fails(w, &["finetune", "--config", &cfg, "--data", "data.jsonl"], 6, "backbone checkpoint required");
    fails(w, &["serve", "--config", &cfg, "--adapters", "a.ckpt"], 6, "backbone checkpoint required");
    // Schema: malformed dataset line, corrupt checkpoint.
    fs::write(w.join("bad.jsonl"), "{\"user_id\": 1}\n").unwrap();
    fails(w, &["pretrain", "--config", &cfg, "--data", "bad.jsonl"], 5, "line 1");
    fs::write(w.join("bad.ckpt"), b"not a checkpoint").unwrap();
    fails(w, &["finetune", "--config", &cfg, "--data", "data.jsonl", "--backbone", "bad.ckpt"], 5, "checkpoint");

    // Nothing was written for any failed command.
    assert!(!w.join("runs").exists() || fs::read_dir(w.join("runs")).unwrap().next().is_none());
}

#[test]
fn experiment_writes_one_csv_per_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let w = tmp.path();
    let cfg = config_arg();
    let dir = ok(
        w,
        &[
            "experiment",
            "--config",
            &cfg,
            "--kind",
            "overlap",
            "--set",
            "datagen.n_days=8",
            "--set",
            "eval.target_domains=[\"region=4\"]",
        ],
    );
    let csv = fs::read_to_string(dir.join("overlap.csv")).unwrap();
    assert!(csv.starts_with("kind,condition,seed,domain,"));
    assert!(csv.contains("isolated") && csv.contains("mixed"));
    assert!(dir.join("config.toml").is_file());
}
