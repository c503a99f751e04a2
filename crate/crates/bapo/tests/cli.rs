//! End-to-end tests of the `bapo` binary: artifact schemas, determinism,
//! exit codes, and the score/compare flows.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bapo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bapo"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// A configuration small enough to train in well under a second.
const TINY_CONFIG: &str = r#"{
  "env": {"n_entities": 2000, "train_questions": 128, "test_questions": 40},
  "grpo": {"learning_rate": 1.0},
  "run": {"batch_size": 32, "epochs": 1}
}"#;

fn write_tiny_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, TINY_CONFIG).unwrap();
    path
}

#[test]
fn train_writes_versioned_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out = dir.path().join("run");
    let result = bapo(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");

    let timeline = fs::read_to_string(out.join("timeline.csv")).unwrap();
    let mut lines = timeline.lines();
    assert_eq!(lines.next().unwrap(), "# bapo.timeline.v1");
    assert_eq!(
        lines.next().unwrap(),
        "step,stage,mean_r_correct,mean_r_idk,idk_ratio,val_acc"
    );
    assert_eq!(timeline.lines().count(), 2 + 4); // 128 questions / batch 32

    let run_log = fs::read_to_string(out.join("run.jsonl")).unwrap();
    assert!(run_log.starts_with("{\"schema\":\"bapo.run.v1\"}"));

    for artifact in ["policy.json", "eval_best_of_5.jsonl", "report.csv", "report.json", "passk.csv"] {
        assert!(out.join(artifact).exists(), "missing {artifact}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema"], "bapo.report.v1");
    assert_eq!(report["datasets"][0]["dataset"], "simulator-test");
    assert_eq!(report["datasets"][0]["n"], 200); // 40 questions × 5 attempts
}

#[test]
fn train_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let result = bapo(&[
            "train",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "42",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(result.status.success());
    }
    for artifact in ["timeline.csv", "run.jsonl", "policy.json", "eval_best_of_5.jsonl", "report.csv", "passk.csv"] {
        let a = fs::read(out_a.join(artifact)).unwrap();
        let b = fs::read(out_b.join(artifact)).unwrap();
        assert_eq!(a, b, "{artifact} differs between identical runs");
    }
}

#[test]
fn invalid_alpha_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"modulator": {"alpha": 1.5}}"#).unwrap();
    let result = bapo(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("modulator.alpha"), "stderr: {stderr}");
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for (out, seed) in [(&out_a, "1"), (&out_b, "2")] {
        bapo(&[
            "train",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
    }
    assert_ne!(
        fs::read(out_a.join("timeline.csv")).unwrap(),
        fs::read(out_b.join("timeline.csv")).unwrap()
    );
}

/// Ten hand-labeled trajectories: 3 correct, 3 wrong (one via a missing box, one
/// unparseable), 4 IDK — across two datasets — plus two malformed log lines.
fn score_fixture() -> (String, String) {
    let answer = |text: &str| format!("<think>t</think><answer>\\boxed{{{text}}}</answer>");
    let records = [
        ("q1", "alpha", answer("Alpha")),                       // correct
        ("q2", "beta", answer("The Beta!")),                    // correct (normalization)
        ("q3", "gamma", answer("delta")),                       // wrong
        ("q4", "delta", answer("I DON'T KNOW")),                // idk
        ("q5", "epsilon", "<answer>no box</answer>".into()),    // wrong: no box
        ("q6", "zeta", "<think>never answered".into()),         // wrong: unparseable
        ("q7", "eta", answer("i don't know.")),                 // idk
        ("q8", "theta", answer("Eta")),                         // wrong
        ("q9", "iota", answer("iota")),                         // correct
        ("q10", "kappa", answer("I dont know")),                // idk
    ];
    let mut trajectories = String::new();
    let mut golds = String::new();
    for (i, (id, gold, text)) in records.iter().enumerate() {
        let dataset = if i < 5 { "set-a" } else { "set-b" };
        trajectories.push_str(
            &serde_json::json!({
                "id": id, "question": format!("what is {gold}?"),
                "gold_answers": [gold], "trajectory_text": text,
            })
            .to_string(),
        );
        trajectories.push('\n');
        golds.push_str(
            &serde_json::json!({"id": id, "gold_answers": [gold], "dataset": dataset})
                .to_string(),
        );
        golds.push('\n');
    }
    // One IDK answer matched against multiple golds, and two malformed lines.
    trajectories.push_str("this line is not json\n{\"id\": 12}\n");
    trajectories.push_str(
        &serde_json::json!({
            "id": "q11", "question": "?", "gold_answers": ["x"],
            "trajectory_text": answer("I DON'T KNOW"),
        })
        .to_string(),
    );
    trajectories.push('\n');
    golds.push_str(
        &serde_json::json!({"id": "q11", "gold_answers": ["x", "y"], "dataset": "set-b"})
            .to_string(),
    );
    golds.push('\n');
    (trajectories, golds)
}

#[test]
fn score_matches_hand_labels() {
    let dir = tempfile::tempdir().unwrap();
    let (trajectories, golds) = score_fixture();
    let t_path = dir.path().join("trajectories.jsonl");
    let g_path = dir.path().join("golds.jsonl");
    fs::write(&t_path, trajectories).unwrap();
    fs::write(&g_path, golds).unwrap();
    let out = dir.path().join("scored");
    let result = bapo(&[
        "score",
        "--trajectories",
        t_path.to_str().unwrap(),
        "--golds",
        g_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("skipped=2"), "stdout: {stdout}");

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["skipped"], 2);
    let sets = report["datasets"].as_array().unwrap();
    assert_eq!(sets.len(), 2);
    // set-a: q1..q5 → 2 correct, 2 wrong, 1 idk.
    assert_eq!(sets[0]["dataset"], "set-a");
    assert_eq!(sets[0]["n_correct"], 2);
    assert_eq!(sets[0]["n_wrong"], 2);
    assert_eq!(sets[0]["n_idk"], 1);
    // set-b: q6..q11 → 1 correct, 2 wrong, 3 idk.
    assert_eq!(sets[1]["dataset"], "set-b");
    assert_eq!(sets[1]["n_correct"], 1);
    assert_eq!(sets[1]["n_wrong"], 2);
    assert_eq!(sets[1]["n_idk"], 3);

    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with("# bapo.report.v1\n"));
    assert_eq!(csv.lines().count(), 2 + 2 + 1); // schema, header, two sets, macro
}

#[test]
fn score_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let t_path = dir.path().join("trajectories.jsonl");
    fs::write(
        &t_path,
        "{\"id\":\"q1\",\"trajectory_text\":\"<answer>\\\\boxed{x}</answer>\"}\n",
    )
    .unwrap();

    // Malformed gold file: exit 2.
    let bad_golds = dir.path().join("bad.jsonl");
    fs::write(&bad_golds, "not json\n").unwrap();
    let result = bapo(&[
        "score",
        "--trajectories",
        t_path.to_str().unwrap(),
        "--golds",
        bad_golds.to_str().unwrap(),
        "--out",
        dir.path().join("o1").to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));

    // Gold ids that never match any trajectory id: exit 2.
    let disjoint = dir.path().join("disjoint.jsonl");
    fs::write(&disjoint, "{\"id\":\"other\",\"gold_answers\":[\"x\"]}\n").unwrap();
    let result = bapo(&[
        "score",
        "--trajectories",
        t_path.to_str().unwrap(),
        "--golds",
        disjoint.to_str().unwrap(),
        "--out",
        dir.path().join("o2").to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("match"), "stderr: {stderr}");
}

#[test]
fn compare_reports_rejection_success() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    // Noise-free so refusals and failures line up with the missing links.
    fs::write(
        &config,
        r#"{
          "env": {"n_entities": 2000, "train_questions": 192, "test_questions": 60,
                   "noise_rate": 0.0, "hard_question_rate": 0.0},
          "grpo": {"learning_rate": 1.0},
          "run": {"batch_size": 32, "epochs": 3}
        }"#,
    )
    .unwrap();
    let out_a = dir.path().join("bapo-run");
    let out_b = dir.path().join("grpo-run");
    for (out, mode) in [(&out_a, "bapo"), (&out_b, "grpo_only")] {
        let with_mode = dir.path().join(format!("{mode}.json"));
        let mut parsed: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&config).unwrap()).unwrap();
        parsed["run"]["mode"] = serde_json::json!(mode);
        fs::write(&with_mode, parsed.to_string()).unwrap();
        let result = bapo(&[
            "train",
            "--config",
            with_mode.to_str().unwrap(),
            "--seed",
            "5",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(result.status.success());
    }

    let result = bapo(&[
        "compare",
        "--a",
        out_a.to_str().unwrap(),
        "--b",
        out_b.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(
        stdout.contains("rejection_success_rate="),
        "stdout: {stdout}"
    );
    assert!(stdout.contains("delta acc="), "stdout: {stdout}");

    // Missing dump: exit 2.
    let result = bapo(&["compare", "--a", out_a.to_str().unwrap(), "--b", "/nonexistent"]);
    assert_eq!(result.status.code(), Some(2));
}

/// Hand-built eval dumps where A's refusals are exactly B's failures.
#[test]
fn compare_constructed_dumps_give_rate_one() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    fs::create_dir_all(&a).unwrap();
    fs::create_dir_all(&b).unwrap();

    let attempt = |answer: &str, is_idk: bool, verdict: &str| {
        serde_json::json!({"answer": answer, "is_idk": is_idk, "verdict": verdict})
    };
    let idk = || attempt("i dont know", true, "idk");
    let right = || attempt("gold", false, "correct");
    let wrong = || attempt("zz", false, "wrong");

    let mut dump_a = String::from("{\"schema\":\"bapo.eval.v1\",\"attempts\":5}\n");
    let mut dump_b = dump_a.clone();
    for (id, refuse_in_a, fail_in_b) in
        [("q1", true, true), ("q2", true, true), ("q3", false, false), ("q4", false, true)]
    {
        let a_attempts: Vec<_> = (0..5).map(|_| if refuse_in_a { idk() } else { right() }).collect();
        let b_attempts: Vec<_> = (0..5).map(|_| if fail_in_b { wrong() } else { right() }).collect();
        dump_a.push_str(
            &serde_json::json!({"id": id, "answerable": !fail_in_b, "gold": "gold", "attempts": a_attempts})
                .to_string(),
        );
        dump_a.push('\n');
        dump_b.push_str(
            &serde_json::json!({"id": id, "answerable": !fail_in_b, "gold": "gold", "attempts": b_attempts})
                .to_string(),
        );
        dump_b.push('\n');
    }
    fs::write(a.join("eval_best_of_5.jsonl"), dump_a).unwrap();
    fs::write(b.join("eval_best_of_5.jsonl"), dump_b).unwrap();
    let report = r#"{"schema":"bapo.report.v1","datasets":[],"macro":{"n":4,"n_correct":1,"n_wrong":1,"n_idk":2,"acc":0.25,"prec":0.5,"idk_rate":0.5,"reliability":0.375}}"#;
    fs::write(a.join("report.json"), report).unwrap();
    fs::write(b.join("report.json"), report).unwrap();

    let result = bapo(&["compare", "--a", a.to_str().unwrap(), "--b", b.to_str().unwrap()]);
    assert!(result.status.success(), "{result:?}");
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(
        stdout.contains("rejection_success_rate=1.0000"),
        "stdout: {stdout}"
    );
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let outputs: Vec<Vec<u8>> = ["1", "3"]
        .iter()
        .map(|threads| {
            let out = dir.path().join(format!("t{threads}"));
            let result = Command::new(env!("CARGO_BIN_EXE_bapo"))
                .env("BAPO_SIM_THREADS", threads)
                .args([
                    "train",
                    "--config",
                    config.to_str().unwrap(),
                    "--seed",
                    "9",
                    "--out",
                    out.to_str().unwrap(),
                ])
                .output()
                .unwrap();
            assert!(result.status.success());
            fs::read(out.join("run.jsonl")).unwrap()
        })
        .collect();
    assert_eq!(outputs[0], outputs[1], "results depend on thread count");
}

#[test]
fn compare_with_no_refusals_is_undefined_but_ok() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    // A frozen policy that never refuses: evaluation only, IDK logits at -50.
    fs::write(
        &config,
        r#"{
          "env": {"n_entities": 2000, "train_questions": 64, "test_questions": 30},
          "policy": {"idk_logit": -50.0, "final_idk_logit": -50.0},
          "run": {"mode": "reliable_prompt_eval", "batch_size": 32, "epochs": 1}
        }"#,
    )
    .unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let result = bapo(&[
            "train",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(result.status.success());
    }
    let result = bapo(&[
        "compare",
        "--a",
        out_a.to_str().unwrap(),
        "--b",
        out_b.to_str().unwrap(),
    ]);
    assert!(result.status.success());
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(
        stdout.contains("undefined (no refusals)"),
        "stdout: {stdout}"
    );
}
