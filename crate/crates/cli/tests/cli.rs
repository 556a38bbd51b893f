//! End-to-end checks of the command-line interface through real process
//! invocations: the synthetic-data round trip, submission comparison,
//! grid sweeps, and the exit-code contract.

use std::path::Path;
use std::process::{Command, Output};

fn wsi() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wsi"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert_eq!(
        out.status.code(),
        Some(0),
        "expected success\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn assert_files(dir: &Path, names: &[&str]) {
    for name in names {
        assert!(dir.join(name).is_file(), "missing {name} in {}", dir.display());
    }
}

#[test]
fn synthetic_pipeline_roundtrip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");

    run_ok(wsi()
        .arg("make-synthetic")
        .arg("--out-dir")
        .arg(&data)
        .args(["--seed", "11"]));
    assert_files(&data, &["corpus.txt", "dataset.tsv", "run.toml"]);

    let check = run_ok(wsi().arg("ingest-check").arg(data.join("dataset.tsv")));
    let text = stdout_of(&check);
    assert!(text.contains("examples"), "unexpected summary: {text}");
    assert!(text.contains("gold"), "unexpected summary: {text}");

    let run = run_ok(wsi().arg("run").arg("--config").arg(data.join("run.toml")));
    let text = stdout_of(&run);
    assert!(text.contains("artifacts:"), "missing artifact line: {text}");
    let run_dir = data.join("run");
    assert_files(
        &run_dir,
        &[
            "predictions.tsv",
            "eval.json",
            "eval.csv",
            "nc_differences.csv",
            "representatives.jsonl",
            "manifest.json",
        ],
    );

    let analysis = tmp.path().join("analysis");
    run_ok(wsi()
        .arg("analyze")
        .arg("--predictions")
        .arg(run_dir.join("predictions.tsv"))
        .arg("--representatives")
        .arg(run_dir.join("representatives.jsonl"))
        .arg("--out-dir")
        .arg(&analysis)
        .args(["--min-count", "2", "--top-n", "5"]));
    assert_files(&analysis, &["discriminative.csv", "profiles.json"]);
    let csv = std::fs::read_to_string(analysis.join("discriminative.csv")).unwrap();
    assert!(csv.lines().count() > 1, "no discriminative rows:\n{csv}");

    let grid_toml = data.join("grid.toml");
    std::fs::write(&grid_toml, "objective = \"ari\"\nzipf_z = [1.0, 2.0]\n").unwrap();
    let grid = run_ok(wsi()
        .arg("grid")
        .arg("--config")
        .arg(data.join("run.toml"))
        .arg("--grid")
        .arg(&grid_toml));
    let text = stdout_of(&grid);
    assert!(text.contains("objective"), "unexpected grid output: {text}");
    assert_files(&run_dir, &["grid.csv", "grid.json", "best_config.toml"]);
}

/// A copy of the predictions with every occurrence lumped into one sense.
fn lumped_submission(predictions: &Path, out: &Path) {
    let text = std::fs::read_to_string(predictions).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_owned();
    let mut rows = vec![header];
    for line in lines {
        let mut fields: Vec<&str> = line.split('\t').collect();
        fields[3] = "all";
        rows.push(fields.join("\t"));
    }
    rows.push(String::new());
    std::fs::write(out, rows.join("\n")).unwrap();
}

#[test]
fn compare_scores_and_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    run_ok(wsi()
        .arg("make-synthetic")
        .arg("--out-dir")
        .arg(&data)
        .args(["--seed", "12", "--pseudowords", "2"]));
    run_ok(wsi().arg("run").arg("--config").arg(data.join("run.toml")));

    let run_dir = data.join("run");
    let pred_a = run_dir.join("predictions.tsv");
    let pred_b = tmp.path().join("lumped.tsv");
    lumped_submission(&pred_a, &pred_b);

    let cmp_dir = tmp.path().join("cmp");
    let out = run_ok(wsi()
        .arg("compare")
        .arg("--pred-a")
        .arg(&pred_a)
        .arg("--pred-b")
        .arg(&pred_b)
        .arg("--gold")
        .arg(data.join("dataset.tsv"))
        .arg("--rerun-config")
        .arg(data.join("run.toml"))
        .arg("--out-dir")
        .arg(&cmp_dir));
    let text = stdout_of(&out);
    assert!(text.contains("agreement"), "missing agreement line: {text}");
    assert_files(&cmp_dir, &["comparison.json"]);
    // The reruns constrain the selectors to pred-b's single cluster per
    // word and leave full artifact sets of their own.
    assert_files(&run_dir.join("prevnc"), &["predictions.tsv", "eval.json"]);
    assert_files(&run_dir.join("prevnc2"), &["predictions.tsv", "eval.json"]);
}

#[test]
fn fatal_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = wsi()
        .arg("run")
        .arg("--config")
        .arg(tmp.path().join("missing.toml"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));

    let out = wsi()
        .arg("ingest-check")
        .arg(tmp.path().join("missing.tsv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn failed_words_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    let mut dataset = String::from(
        "context_id\tword\tgold_sense_id\tpredict_sense_id\tpositions\tcontext\n",
    );
    for i in 0..6 {
        let sense = if i < 3 { "A" } else { "B" };
        dataset.push_str(&format!(
            "probe.{i}\tprobe\t{sense}\t\t4-9\tthe probe here\n"
        ));
    }
    for i in 0..3 {
        dataset.push_str(&format!(
            "ghost.{i}\tghost\tG1\t\t4-9\tthe ghost here\n"
        ));
    }
    std::fs::write(dir.join("dataset.tsv"), dataset).unwrap();

    // Distributions cover only "probe": the other word has nothing to
    // combine and must fail without sinking the whole run.
    let mut subs = String::new();
    for i in 0..6 {
        let entries = if i < 3 {
            r#"[["alpha",0.6,3],["beta",0.3,4]]"#
        } else {
            r#"[["gamma",0.6,5],["delta",0.3,6]]"#
        };
        for direction in ["fwd", "bwd"] {
            subs.push_str(&format!(
                "{{\"context_id\":\"probe.{i}\",\"word\":\"probe\",\"direction\":\"{direction}\",\"entries\":{entries}}}\n"
            ));
        }
    }
    std::fs::write(dir.join("subs.jsonl"), subs).unwrap();

    let config = format!(
        "dataset = {:?}\noutput_dir = {:?}\n\n[source]\nkind = \"file\"\npath = {:?}\n",
        dir.join("dataset.tsv"),
        dir.join("out"),
        dir.join("subs.jsonl"),
    );
    std::fs::write(dir.join("run.toml"), config).unwrap();

    let out = wsi()
        .arg("run")
        .arg("--config")
        .arg(dir.join("run.toml"))
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(2),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.join("out").join("predictions.tsv").is_file());
}
