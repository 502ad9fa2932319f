use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .display()
        .to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reweigh"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn weigh(out: &Path, extra: &[&str]) -> Output {
    let (ds, names) = (fixture("toy.tsv"), fixture("toy-names.jsonl"));
    let dir = out.display().to_string();
    let mut args = vec!["weigh", "--dataset", &ds, "--annotations", &names, "--out-dir", &dir];
    args.extend_from_slice(extra);
    run(&args)
}

fn weight_rows(path: &PathBuf) -> Vec<(String, f64)> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let (id, w) = l.split_once('\t').unwrap();
            (id.to_string(), w.parse().unwrap())
        })
        .collect()
}

#[test]
fn weigh_writes_balanced_weights_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let o = weigh(dir.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = weight_rows(&dir.path().join("W.tsv"));
    // 14 of the 16 fixture examples have a coreferent candidate
    assert_eq!(rows.len(), 14);
    let sum = |prefix: &str| rows.iter().filter(|(id, _)| id.starts_with(prefix)).map(|r| r.1).sum::<f64>();
    assert!((sum("m-") - 7.0).abs() < 1e-9);
    assert!((sum("f-") - 7.0).abs() < 1e-9);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("W.json")).unwrap()).unwrap();
    assert_eq!(meta["status"], "optimal");
    assert_eq!(meta["examples"], 14);
}

#[test]
fn weigh_is_byte_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert!(weigh(d.path(), &["--properties", "names"]).status.success());
    }
    for f in ["W_num.tsv", "W_num.json"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap()
        );
    }
}

#[test]
fn naive_and_collapsed_weighings_agree() {
    let dir = tempfile::tempdir().unwrap();
    assert!(weigh(dir.path(), &["--label", "c"]).status.success());
    assert!(weigh(dir.path(), &["--label", "n", "--naive"]).status.success());
    let obj = |l: &str| {
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("{l}.json"))).unwrap()).unwrap();
        v["objective"].as_f64().unwrap()
    };
    assert!((obj("c") - obj("n")).abs() < 1e-7);
}

#[test]
fn trimmed_weighing_is_labelled() {
    let dir = tempfile::tempdir().unwrap();
    let o = weigh(dir.path(), &["--trim", "--max-names", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("W_t.tsv").exists());
}

#[test]
fn infeasible_balance_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let (ds, names) = (fixture("skewed.tsv"), fixture("skewed-names.jsonl"));
    let d = dir.path().display().to_string();
    let o = run(&["weigh", "--dataset", &ds, "--annotations", &names, "--properties", "names", "--out-dir", &d]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("infeasible"));
    assert!(!dir.path().join("W_num.tsv").exists());
}

#[test]
fn bad_inputs_exit_with_two() {
    let missing = run(&["evaluate", "--dataset", "/nonexistent/gap.tsv", "--predictions", "x.tsv"]);
    assert_eq!(missing.status.code(), Some(2));

    let (ds, unknown) = (fixture("toy.tsv"), fixture("unknown-id.tsv"));
    let o = run(&["evaluate", "--dataset", &ds, "--predictions", &unknown]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ghost-1"));

    let o = run(&["evaluate", "--dataset", &ds, "--baseline", "random"]);
    assert_eq!(o.status.code(), Some(2), "baselines need annotations");

    let names = fixture("toy-names.jsonl");
    let o = run(&["evaluate", "--dataset", &ds, "--annotations", &names, "--baseline", "dist-5"]);
    assert_eq!(o.status.code(), Some(2));

    let mismatched = run(&["weigh", "--dataset", &ds, "--annotations", &fixture("skewed-names.jsonl")]);
    assert_eq!(mismatched.status.code(), Some(2));
}

#[test]
fn evaluate_adds_one_column_per_weight_file() {
    let dir = tempfile::tempdir().unwrap();
    assert!(weigh(dir.path(), &[]).status.success());
    assert!(weigh(dir.path(), &["--properties", "names"]).status.success());
    let (ds, names, model) = (fixture("toy.tsv"), fixture("toy-names.jsonl"), fixture("model-a.tsv"));
    let w = dir.path().join("W.tsv").display().to_string();
    let wn = format!("W_num={}", dir.path().join("W_num.tsv").display());

    let plain = stdout(&run(&["evaluate", "--dataset", &ds, "--predictions", &model]));
    assert_eq!(
        plain.lines().next().unwrap().split_whitespace().collect::<Vec<_>>(),
        ["System", "F1", "Accuracy", "F1-Bias", "acc-Bias"]
    );

    let o = run(&[
        "evaluate", "--dataset", &ds, "--annotations", &names, "--predictions", &model, "--baseline", "random",
        "--baseline", "dist-1", "--weights", &w, "--weights", &wn, "--format", "json",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert!(r.get("W-Bias").is_some() && r.get("W_num-Bias").is_some(), "{r}");
    }
}

#[test]
fn perfect_predictions_score_one() {
    // gold verdicts are the fixture's own coreference columns
    let dir = tempfile::tempdir().unwrap();
    let tsv = std::fs::read_to_string(fixture("toy.tsv")).unwrap();
    let mut gold = String::from("ID\tA-coref\tB-coref\n");
    for line in tsv.lines().skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        gold.push_str(&format!("{}\t{}\t{}\n", f[0], f[6], f[9]));
    }
    let gold_path = dir.path().join("gold.tsv");
    std::fs::write(&gold_path, gold).unwrap();
    let ds = fixture("toy.tsv");
    let o = run(&["evaluate", "--dataset", &ds, "--predictions", gold_path.to_str().unwrap(), "--format", "json"]);
    let rows: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(rows[0]["Accuracy"], 1.0);
    assert_eq!(rows[0]["acc-Bias"], 1.0);
}

#[test]
fn analyze_conserves_counts() {
    let dir = tempfile::tempdir().unwrap();
    assert!(weigh(dir.path(), &[]).status.success());
    let (ds, names) = (fixture("toy.tsv"), fixture("toy-names.jsonl"));
    let w = dir.path().join("W.tsv").display().to_string();
    let d = dir.path().display().to_string();
    let o = run(&["analyze", "--dataset", &ds, "--annotations", &names, "--weights", &w, "--out-dir", &d]);
    assert!(o.status.success(), "{}", stderr(&o));
    let total = |file: &str| -> usize {
        std::fs::read_to_string(dir.path().join(file))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
            .sum()
    };
    assert_eq!(total("names.csv"), 16);
    let outliers = std::fs::read_to_string(dir.path().join("weights-W-outliers.csv")).unwrap();
    assert_eq!(total("weights-W.csv") + outliers.lines().count() - 1, 14);
    assert!(dir.path().join("stats.json").exists());
}

#[test]
fn trim_output_loads_again() {
    let dir = tempfile::tempdir().unwrap();
    let (ds, names) = (fixture("toy.tsv"), fixture("toy-names.jsonl"));
    let d = dir.path().display().to_string();
    let o = run(&["trim", "--dataset", &ds, "--annotations", &names, "--max-names", "3", "--out-dir", &d]);
    assert!(o.status.success(), "{}", stderr(&o));
    // the two four-name examples go
    assert!(stdout(&o).contains("kept 14 of 16"));
    let t = dir.path().join("trimmed.tsv").display().to_string();
    let tn = dir.path().join("trimmed.jsonl").display().to_string();
    let again = run(&["trim", "--dataset", &t, "--annotations", &tn, "--max-names", "3", "--out-dir", &d]);
    assert!(stdout(&again).contains("kept 14 of 14"));
}

#[test]
fn significance_of_identical_models_is_one() {
    let (ds, a) = (fixture("toy.tsv"), fixture("model-a.tsv"));
    let o = run(&["significance", "--dataset", &ds, "--first", &a, "--second", &a, "--iterations", "500"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["p_value"], 1.0);
}

#[test]
fn significance_agrees_with_enumeration() {
    let (ds, a, b) = (fixture("toy.tsv"), fixture("model-a.tsv"), fixture("model-b.tsv"));
    let o = run(&["significance", "--dataset", &ds, "--first", &a, "--second", &b, "--exact", "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let (mc, exact) = (v["p_value"].as_f64().unwrap(), v["exact_p_value"].as_f64().unwrap());
    let n = v["iterations"].as_f64().unwrap();
    // 99% binomial interval plus the add-one shift
    assert!((mc - exact).abs() <= 2.5758 * (exact * (1.0 - exact) / n).sqrt() + 1.0 / (n + 1.0));
}

#[test]
fn weighted_significance_needs_weights() {
    let (ds, a, b) = (fixture("toy.tsv"), fixture("model-a.tsv"), fixture("model-b.tsv"));
    let o = run(&["significance", "--dataset", &ds, "--first", &a, "--second", &b, "--metric", "w-bias"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_passes() {
    let o = run(&["verify", "--instances", "8"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(), 4);
}
