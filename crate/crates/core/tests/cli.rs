use std::fs;
use std::path::{Path, PathBuf};

use hrtpp::eval::EvalReport;
use hrtpp::io::{load_model, read_corpus, read_json};

fn run(args: &[&str]) -> i32 {
    hrtpp::cli::run(std::iter::once("hrtpp").chain(args.iter().copied()))
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

const SPEC: &str = r#"
num_types = 3
target_type = 3
lambda0 = -0.3
horizon = 10.0
num_sequences = 80
seed = 11
rules = [{ rule = "X1 before X2 -> X3", alpha = 1.5 }]
covariates = [
  { event_type = 1, rate = 0.7, values = { kind = "normal", mean = 0.0, std = 1.0 } },
  { event_type = 2, rate = 0.7, values = { kind = "normal", mean = 0.0, std = 1.0 } },
]
"#;

fn simulated(dir: &Path) -> PathBuf {
    fs::write(dir.join("spec.toml"), SPEC).unwrap();
    let data = dir.join("data");
    assert_eq!(run(&["simulate", "--spec", &path(dir, "spec.toml"), "--out", &data.to_string_lossy()]), 0);
    data
}

#[test]
fn simulate_writes_corpus_manifest_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    let corpus = read_corpus(&data.join("corpus.jsonl")).unwrap();
    assert_eq!(corpus.len(), 80);
    let truth = fs::read_to_string(data.join("truth.rules")).unwrap();
    assert!(truth.starts_with("X1 before X2 -> X3 # weight=1.5"), "{truth}");
    assert!(data.join("manifest.json").exists());
}

#[test]
fn negative_rate_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("spec.toml"), SPEC.replace("rate = 0.7, values = { kind = \"normal\"", "rate = -1.0, values = { kind = \"normal\"")).unwrap();
    assert_eq!(run(&["simulate", "--spec", &path(dir.path(), "spec.toml"), "--out", &path(dir.path(), "d")]), 2);
    assert!(!dir.path().join("d/corpus.jsonl").exists());
}

#[test]
fn missing_files_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["simulate", "--spec", &path(dir.path(), "absent.toml"), "--out", &path(dir.path(), "d")]), 3);
    assert_eq!(
        run(&["fit", "--corpus", &path(dir.path(), "absent.jsonl"), "--rules", "x", "--out", &path(dir.path(), "m.json")]),
        3
    );
}

#[test]
fn bad_rule_line_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    fs::write(dir.path().join("bad.rules"), "X1 before X2 -> X3\nX1 during X2 -> X3\n").unwrap();
    let code = run(&[
        "fit",
        "--corpus",
        &data.join("corpus.jsonl").to_string_lossy(),
        "--rules",
        &path(dir.path(), "bad.rules"),
        "--out",
        &path(dir.path(), "m.json"),
    ]);
    assert_eq!(code, 2);
    assert!(!dir.path().join("m.json").exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    fs::write(dir.path().join("run.toml"), "[fit]\nlearnig_rate = 0.1\n").unwrap();
    fs::write(dir.path().join("empty.rules"), "").unwrap();
    let code = run(&[
        "fit",
        "--corpus",
        &data.join("corpus.jsonl").to_string_lossy(),
        "--rules",
        &path(dir.path(), "empty.rules"),
        "--config",
        &path(dir.path(), "run.toml"),
        "--out",
        &path(dir.path(), "m.json"),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn empty_rules_file_fits_a_rule_free_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    fs::write(dir.path().join("empty.rules"), "# nothing here\n").unwrap();
    let code = run(&[
        "fit",
        "--corpus",
        &data.join("corpus.jsonl").to_string_lossy(),
        "--rules",
        &path(dir.path(), "empty.rules"),
        "--out",
        &path(dir.path(), "m.json"),
    ]);
    assert_eq!(code, 0);
    let (model, _) = load_model(&dir.path().join("m.json")).unwrap();
    assert!(model.rules.is_empty());
    assert!(model.params.alpha.is_empty());
}

#[test]
fn fit_then_evaluate_reproduces_training_nll() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    let corpus = data.join("corpus.jsonl").to_string_lossy().into_owned();
    let truth = data.join("truth.rules").to_string_lossy().into_owned();
    let model = path(dir.path(), "model.json");
    assert_eq!(run(&["fit", "--corpus", &corpus, "--rules", &truth, "--out", &model]), 0);
    let report = path(dir.path(), "eval.json");
    assert_eq!(run(&["evaluate", "--model", &model, "--corpus", &corpus, "--truth", &truth, "--out", &report]), 0);
    let (fitted, _) = load_model(Path::new(&model)).unwrap();
    let eval: EvalReport = read_json(Path::new(&report)).unwrap();
    assert!((eval.nll - fitted.train_nll).abs() <= 1e-9, "{} vs {}", eval.nll, fitted.train_nll);
    assert_eq!(eval.rule_accuracy, Some(1.0));
    assert_eq!(eval.model_corpus, eval.test_corpus);

    let bare = path(dir.path(), "bare.json");
    let details = path(dir.path(), "details.csv");
    assert_eq!(run(&["evaluate", "--model", &model, "--corpus", &corpus, "--out", &bare, "--details", &details]), 0);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&bare).unwrap()).unwrap();
    assert!(json["rule_accuracy"].is_null());
    let rows = fs::read_to_string(&details).unwrap();
    assert_eq!(rows.lines().count(), 81);
}

#[test]
fn trace_writes_grid_and_annotations() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    let corpus = data.join("corpus.jsonl").to_string_lossy().into_owned();
    let truth = data.join("truth.rules").to_string_lossy().into_owned();
    let model = path(dir.path(), "model.json");
    assert_eq!(run(&["fit", "--corpus", &corpus, "--rules", &truth, "--out", &model]), 0);
    let trace = path(dir.path(), "trace.csv");
    assert_eq!(run(&["trace", "--model", &model, "--corpus", &corpus, "--seq", "0", "--out", &trace]), 0);
    let rows = fs::read_to_string(&trace).unwrap();
    assert!(rows.starts_with("time,side,intensity,preactivation,X1 before X2 -> X3\n"), "{rows}");
    let grid = rows.lines().filter(|l| l.split(',').nth(1) == Some("grid")).count();
    assert_eq!(grid, 2001);
    let ann = fs::read_to_string(dir.path().join("trace.annotations.csv")).unwrap();
    assert!(ann.starts_with("kind,time,label,value\n"));

    assert_eq!(run(&["trace", "--model", &model, "--corpus", &corpus, "--seq", "80", "--out", &trace]), 2);
}

#[test]
fn mine_writes_report_and_rules() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    fs::write(
        dir.path().join("run.toml"),
        "seed = 1\n[model]\nmax_predicates = 2\n[fit]\nmax_epochs = 80\n[mining]\nsubset_size = 1\nbudget = 6\n",
    )
    .unwrap();
    let out = path(dir.path(), "mining.json");
    let code = run(&[
        "mine",
        "--corpus",
        &data.join("corpus.jsonl").to_string_lossy(),
        "--config",
        &path(dir.path(), "run.toml"),
        "--out",
        &out,
    ]);
    assert_eq!(code, 0);
    let rules = fs::read_to_string(dir.path().join("mining.rules")).unwrap();
    assert_eq!(rules.lines().count(), 1);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!(report.is_object());
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(run(&["transmogrify"]), 2);
}

#[test]
fn evaluation_table_matches_golden_file() {
    let report = EvalReport {
        format_version: 1,
        nll: 12.345678,
        rmse: Some(0.98765),
        rmse_protocol: String::new(),
        predictions: 10,
        skipped_for_rmse: 0,
        rule_accuracy: Some(0.5),
        rule_recall: Some(1.0),
        model_corpus: Default::default(),
        test_corpus: Default::default(),
        details: Vec::new(),
    };
    let golden = include_str!("golden/eval_table.txt");
    assert_eq!(report.table("HRTPP"), golden);
    let bare = EvalReport {
        rmse: None,
        rule_accuracy: None,
        ..report
    };
    assert_eq!(bare.table("HRTPP").lines().nth(1).unwrap().split_whitespace().collect::<Vec<_>>(), ["HRTPP", "12.3457", "-", "-"]);
}
