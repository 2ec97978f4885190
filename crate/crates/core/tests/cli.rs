use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snn-ensemble")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    /// Synthetic data plus a trained two-member model.
    fn trained() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let ws = Workspace { _dir: dir, root };
        ok(&["gen-data", "--spec", "n_train=300,n_in=60,n_out=40,dims=3,seed=1", "--out-dir", &ws.p("data")]);
        std::fs::write(
            ws.root.join("tiny.cfg"),
            "# small and quick\nmembers = 2\nhidden_dim = 8\ntrunk_layers = 1\nupper_layers = 1\nprojection_dim = 4\nmax_epochs = 4\nbatch_size = 64\ngrad_clip = 1\n",
        )
        .unwrap();
        ok(&["train", "--data", &ws.p("data/train.csv"), "--target", "target", "--config", &ws.p("tiny.cfg"), "--out", &ws.p("m.snne")]);
        ws
    }

    fn p(&self, rel: &str) -> String {
        self.root.join(rel).to_string_lossy().into_owned()
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }
}

fn data_rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn usage_errors_exit_with_two() {
    let out = run(&["predict", "--data", "x.csv", "--out", "y.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.starts_with("error[usage]: "), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn train_then_predict_covers_every_row() {
    let ws = Workspace::trained();
    ok(&["predict", "--model", &ws.p("m.snne"), "--data", &ws.p("data/train.csv"), "--out", &ws.p("pred.csv")]);
    assert_eq!(data_rows(&ws.path("pred.csv")), data_rows(&ws.path("data/train.csv")));
    let text = std::fs::read_to_string(ws.path("pred.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("mu,sigma,uncertainty"));
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(v.len(), 3);
        assert!(v[1] > 0.0 && v[2] > 0.0);
    }
}

#[test]
fn evaluate_writes_report_curve_and_plot() {
    let ws = Workspace::trained();
    let stdout = ok(&[
        "evaluate", "--model", &ws.p("m.snne"), "--in", &ws.p("data/dev_in.csv"),
        "--out-shifted", &ws.p("data/dev_out.csv"), "--report", &ws.p("eval.csv"),
    ]);
    assert!(stdout.starts_with("split,n,mse,mae,r_auc_mse,mean_uncertainty"));
    let report = std::fs::read_to_string(ws.path("eval.csv")).unwrap();
    let names: Vec<&str> = report.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["in", "out", "pooled"]);
    assert_eq!(data_rows(&ws.path("eval_retention.csv")), 60 + 40 + 1);
    let svg = std::fs::read_to_string(ws.path("eval_retention.svg")).unwrap();
    assert!(roxmltree::Document::parse(&svg).is_ok());

    ok(&["plot-retention", "--curve", &ws.p("eval_retention.csv"), "--out", &ws.p("again.svg")]);
    assert!(roxmltree::Document::parse(&std::fs::read_to_string(ws.path("again.svg")).unwrap()).is_ok());
}

#[test]
fn runs_are_byte_identical() {
    let a = Workspace::trained();
    let b = Workspace::trained();
    for f in ["data/train.csv", "data/dev_in.csv", "data/dev_out.csv", "m.snne"] {
        assert_eq!(std::fs::read(a.path(f)).unwrap(), std::fs::read(b.path(f)).unwrap(), "{f}");
    }
    for ws in [&a, &b] {
        ok(&["predict", "--model", &ws.p("m.snne"), "--data", &ws.p("data/dev_in.csv"), "--out", &ws.p("p.csv")]);
    }
    assert_eq!(std::fs::read(a.path("p.csv")).unwrap(), std::fs::read(b.path("p.csv")).unwrap());
}

#[test]
fn corrupted_containers_have_distinct_codes() {
    let ws = Workspace::trained();
    let bytes = std::fs::read(ws.path("m.snne")).unwrap();
    let predict = |model: &str| {
        run(&["predict", "--model", &ws.p(model), "--data", &ws.p("data/dev_in.csv"), "--out", &ws.p("p.csv")])
    };

    let mut flipped = bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 1;
    std::fs::write(ws.path("flipped.snne"), &flipped).unwrap();
    let out = predict("flipped.snne");
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error[container_checksum]: "), "{}", stderr(&out));

    let mut magic = bytes;
    magic[..5].copy_from_slice(b"PK\x03\x04\x00");
    std::fs::write(ws.path("magic.snne"), &magic).unwrap();
    let out = predict("magic.snne");
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error[container_magic]: "), "{}", stderr(&out));
}

#[test]
fn runtime_errors_are_one_line() {
    let ws = Workspace::trained();
    std::fs::write(ws.path("bad.cfg"), "members = 2\nwidth = 3\n").unwrap();
    let out = run(&["train", "--data", &ws.p("data/train.csv"), "--target", "target", "--config", &ws.p("bad.cfg"), "--out", &ws.p("x.snne")]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.starts_with("error[config]: ") && err.contains("width"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);

    let out = run(&["train", "--data", &ws.p("data/train.csv"), "--target", "nope", "--out", &ws.p("x.snne")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error[contract]: "));

    let out = run(&["predict", "--model", &ws.p("missing.snne"), "--data", &ws.p("data/dev_in.csv"), "--out", &ws.p("p.csv")]);
    assert!(stderr(&out).starts_with("error[io]: "));
}

#[test]
fn demo_writes_report_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let stdout = ok(&["demo-extrapolation", "--seed", "2", "--truth", "linear", "--out-dir", &out]);
    assert!(stdout.contains("linear_out_mse="));
    let svg = std::fs::read_to_string(dir.path().join("demo_extrapolation.svg")).unwrap();
    assert!(roxmltree::Document::parse(&svg).is_ok());
    assert!(dir.path().join("demo_report.txt").exists());
    assert_eq!(run(&["demo-extrapolation", "--truth", "quartic", "--out-dir", &out]).status.code(), Some(1));
}
