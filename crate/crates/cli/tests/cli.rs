use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn pigat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pigat"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace {
            dir: TempDir::new().unwrap(),
        }
    }

    fn file(&self, name: &str, text: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn synth(&self) -> PathBuf {
        let spec = self.file("spec.txt", "users = 30\nitems = 100\nevents = 1200\nseed = 4\n");
        let data = self.path("data.tsv");
        let out = pigat(&["synth", "--spec", s(&spec), "--out", s(&data)]);
        assert_eq!(code(&out), 0, "{out:?}");
        data
    }

    fn config(&self) -> PathBuf {
        self.file(
            "config.txt",
            "epochs = 3\nattention = dot\nembed_user = 8\nembed_item = 8\nhidden = 16\nlearning_rate = 1e-2\n",
        )
    }
}

#[test]
fn help_lists_every_flag() {
    let out = pigat(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    for verb in ["synth", "train", "eval", "gradcheck", "ablate"] {
        assert!(text.contains(verb), "{verb} missing from help");
    }
    for (verb, flags) in [
        ("synth", &["--spec", "--out", "--seed"][..]),
        ("train", &["--config", "--data", "--signal", "--out", "--seed"]),
        ("eval", &["--checkpoint", "--data", "--signal"]),
        ("gradcheck", &["--config", "--seeds"]),
        ("ablate", &["--matrix", "--data", "--signal", "--out"]),
    ] {
        let out = pigat(&[verb, "--help"]);
        assert_eq!(code(&out), 0);
        let text = stdout(&out);
        for flag in flags {
            assert!(text.contains(flag), "{verb} help lacks {flag}");
        }
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&pigat(&["train", "--bogus"])), 1);
    assert_eq!(code(&pigat(&["frobnicate"])), 1);
    assert_eq!(code(&pigat(&["synth", "--out", "x.tsv"])), 1);
    let ws = Workspace::new();
    let missing = ws.path("absent.txt");
    let out = pigat(&["synth", "--spec", s(&missing), "--out", s(&ws.path("x.tsv"))]);
    assert_eq!(code(&out), 1);
    let bad = ws.file("bad.txt", "users = 0\n");
    assert_eq!(code(&pigat(&["synth", "--spec", s(&bad), "--out", s(&ws.path("x.tsv"))])), 1);
}

#[test]
fn synth_writes_data_latents_and_summary() {
    let ws = Workspace::new();
    let data = ws.synth();
    let text = fs::read_to_string(&data).unwrap();
    assert_eq!(text.lines().count(), 1200);
    assert!(text.lines().next().unwrap().split('\t').count() == 4);
    assert!(ws.path("data.tsv.latents").exists());
    let spec = ws.path("spec.txt");
    let out = pigat(&["synth", "--spec", s(&spec), "--out", s(&ws.path("again.tsv"))]);
    let summary = stdout(&out);
    for key in ["items\t100", "max_degree", "fraction_degree<=3", "fraction_degree<=10"] {
        assert!(summary.contains(key), "{summary}");
    }
    assert_eq!(fs::read_to_string(ws.path("again.tsv")).unwrap(), text);
}

#[test]
fn train_then_eval() {
    let ws = Workspace::new();
    let data = ws.synth();
    let config = ws.config();
    let run = ws.path("run");
    let out = pigat(&["train", "--config", s(&config), "--data", s(&data), "--out", s(&run)]);
    assert_eq!(code(&out), 0, "{out:?}");
    for f in ["model.ckpt", "metrics.tsv", "resolved_config.txt", "schema.txt"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let metrics = fs::read_to_string(run.join("metrics.tsv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("epoch\ttrain_loss\tval_auc\tlr"));
    assert_eq!(lines.count(), 3);
    let resolved = fs::read_to_string(run.join("resolved_config.txt")).unwrap();
    assert!(resolved.contains("attention = dot") && resolved.contains("l2 = "));

    let out = pigat(&["eval", "--checkpoint", s(&run.join("model.ckpt")), "--data", s(&data)]);
    assert_eq!(code(&out), 0, "{out:?}");
    let report = stdout(&out);
    assert!(report.contains("\nauc\t"));
    for k in [3, 5, 10] {
        assert!(report.contains(&format!("auc@degree<={k}\t")), "{report}");
    }
}

#[test]
fn repeated_training_is_byte_identical() {
    let ws = Workspace::new();
    let data = ws.synth();
    let config = ws.config();
    let mut artefacts = Vec::new();
    for run in ["a", "b"] {
        let dir = ws.path(run);
        let out = pigat(&["train", "--config", s(&config), "--data", s(&data), "--out", s(&dir)]);
        assert_eq!(code(&out), 0, "{out:?}");
        artefacts.push((fs::read(dir.join("metrics.tsv")).unwrap(), fs::read(dir.join("model.ckpt")).unwrap()));
    }
    assert!(artefacts[0] == artefacts[1]);
    let dir = ws.path("c");
    pigat(&["train", "--config", s(&config), "--data", s(&data), "--out", s(&dir), "--seed", "9"]);
    assert_ne!(fs::read(dir.join("model.ckpt")).unwrap(), artefacts[0].1);
}

#[test]
fn eval_rejects_a_different_field_layout() {
    let ws = Workspace::new();
    let data = ws.synth();
    let config = ws.config();
    let run = ws.path("run");
    assert_eq!(code(&pigat(&["train", "--config", s(&config), "--data", s(&data), "--out", s(&run)])), 0);
    let renamed = fs::read_to_string(&data).unwrap().replace("item_cat=", "genre=");
    let other = ws.file("other.tsv", &renamed);
    let out = pigat(&["eval", "--checkpoint", s(&run.join("model.ckpt")), "--data", s(&other)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema mismatch"));
}

#[test]
fn data_errors_exit_two() {
    let ws = Workspace::new();
    let config = ws.config();
    let junk = ws.file("junk.tsv", "1\tuser_id=a\titem_id=b\n");
    let out = pigat(&["train", "--config", s(&config), "--data", s(&junk), "--out", s(&ws.path("r"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("junk.tsv:1"));
    let absent = ws.path("absent.tsv");
    assert_eq!(code(&pigat(&["train", "--config", s(&config), "--data", s(&absent), "--out", s(&ws.path("r"))])), 2);
}

#[test]
fn divergence_exits_three() {
    let ws = Workspace::new();
    let data = ws.synth();
    let config = ws.file("nan.txt", "epochs = 2\nlearning_rate = 1e300\nembed_user = 4\nembed_item = 4\nhidden = 8\n");
    let out = pigat(&["train", "--config", s(&config), "--data", s(&data), "--out", s(&ws.path("r"))]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite"));
}

#[test]
fn gradcheck_reports_groups() {
    let ws = Workspace::new();
    let config = ws.file("g.txt", "confidence = rce\nliteral_eq3 = true\ndropout = 0.1\n");
    let out = pigat(&["gradcheck", "--config", s(&config)]);
    assert_eq!(code(&out), 0, "{out:?}");
    let text = stdout(&out);
    for group in ["user_table", "user_confidence", "user_interactive", "item_adaptive", "mlp"] {
        assert!(text.contains(&format!("{group}\t")), "{text}");
    }
    assert!(text.trim_end().ends_with("PASS"));
}

#[test]
fn ablate_tabulates_and_rejects_empty_matrix() {
    let ws = Workspace::new();
    let data = ws.synth();
    let empty = ws.file("empty.txt", "epochs = 2\n");
    let table = ws.path("table.tsv");
    assert_eq!(code(&pigat(&["ablate", "--matrix", s(&empty), "--data", s(&data), "--out", s(&table)])), 1);

    let matrix = ws.file(
        "m.txt",
        "epochs = 2\nembed_user = 8\nembed_item = 8\nhidden = 16\nattention = dot\nseeds = 0, 1\n[attention]\n[average]\npooling = average\n",
    );
    let out = pigat(&["ablate", "--matrix", s(&matrix), "--data", s(&data), "--out", s(&table)]);
    assert_eq!(code(&out), 0, "{out:?}");
    let text = fs::read_to_string(&table).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert!(rows[0].starts_with("config\tfingerprint\tseed\ttest_auc"));
    assert_eq!(rows.len(), 1 + 4 + 4);
    assert!(rows.iter().any(|r| r.starts_with("average\t") && r.contains("\tmean\t")));
}
