//! End-to-end tests of the `rrm` binary against the mock backend.

use rrm_core::dataset::write_jsonl;
use rrm_core::types::{Label, PreferenceRecord};
use std::path::Path;
use std::process::{Command, Output};

fn rrm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rrm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_labeled(path: &Path, n: usize) {
    let records: Vec<PreferenceRecord> = (0..n)
        .map(|i| {
            PreferenceRecord::labeled(
                &format!("question {i}"),
                &format!("first answer {i}"),
                &format!("second answer {i}"),
                if i % 2 == 0 { Label::A } else { Label::B },
            )
        })
        .collect();
    write_jsonl(path, &records).unwrap();
}

#[test]
fn missing_required_flag_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let batch = dir.path().join("batch.jsonl");
    write_jsonl::<PreferenceRecord>(&batch, &[]).unwrap();
    let out = rrm(&[
        "self-train",
        dir.path().join("state").to_str().unwrap(),
        batch.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "--tau is mandatory");
}

#[test]
fn unknown_backend_exits_2() {
    let out = rrm(&["--backend", "carrier-pigeon", "eval", "/dev/null"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_file_exits_3() {
    let out = rrm(&["eval", "/no/such/file.jsonl"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn synth_rationales_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    let output = dir.path().join("out.jsonl");
    write_labeled(&input, 3);
    let out = rrm(&[
        "synth-rationales",
        input.to_str().unwrap(),
        output.to_str().unwrap(),
        "--k",
        "2",
        "--seed",
        "7",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let records: Vec<PreferenceRecord> = rrm_core::dataset::read_jsonl(&output).unwrap();
    assert_eq!(records.len(), 3);
    assert!(records.iter().all(|r| r.rationale.is_some() && r.proof.is_some()));
}

#[test]
fn self_train_is_deterministic_across_runs() {
    let batch_dir = tempfile::tempdir().unwrap();
    let batch = batch_dir.path().join("batch.jsonl");
    let records: Vec<PreferenceRecord> = (0..6)
        .map(|i| PreferenceRecord::unlabeled(&format!("question {i}"), "left", "right"))
        .collect();
    write_jsonl(&batch, &records).unwrap();

    let run = || {
        let state = tempfile::tempdir().unwrap();
        let out = rrm(&[
            "self-train",
            state.path().to_str().unwrap(),
            batch.to_str().unwrap(),
            "--tau",
            "0.5",
            "--seed",
            "11",
        ]);
        assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
        let manifests = std::fs::read_to_string(state.path().join("manifests.jsonl")).unwrap();
        let training = std::fs::read_to_string(state.path().join("train_reward_iter0000.jsonl")).unwrap();
        (stdout(&out), manifests, training)
    };
    let a = run();
    let b = run();
    assert_eq!(a.1, b.1, "manifests differ");
    assert_eq!(a.2, b.2, "training files differ");
    assert!(a.0.contains("config digest:"));
}

#[test]
fn rank_prints_a_candidate_index() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("candidates.txt");
    std::fs::write(&file, "first candidate\nsecond candidate\nthird candidate\n").unwrap();
    for mode in ["linear", "dnc"] {
        let out = rrm(&[
            "rank",
            "--input",
            "pick the best",
            file.to_str().unwrap(),
            "--mode",
            mode,
        ]);
        assert_eq!(out.status.code(), Some(0));
        let idx: usize = stdout(&out).trim().parse().unwrap();
        assert!(idx < 3);
    }
    let out = rrm(&[
        "rank",
        "--input",
        "pick the best",
        file.to_str().unwrap(),
        "--mode",
        "full",
    ]);
    let mut ranking: Vec<usize> = stdout(&out)
        .lines()
        .map(|l| l.trim().parse().unwrap())
        .collect();
    assert_eq!(ranking.len(), 3);
    ranking.sort_unstable();
    assert_eq!(ranking, vec![0, 1, 2]);
}

#[test]
fn eval_reports_json_on_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("eval.jsonl");
    write_labeled(&dataset, 4);
    let out = rrm(&["eval", dataset.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(report["n"], 4);
    let acc = report["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn reward_prints_raw_and_scaled_values() {
    let out = rrm(&[
        "reward",
        "--input",
        "a question",
        "--response",
        "sampled answer",
        "--reference",
        "reference answer",
        "--gamma",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let lines: Vec<f64> = stdout(&out)
        .lines()
        .map(|l| l.trim().parse().unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert!((0.0..=1.0).contains(&lines[0]));
    assert!((lines[1] - lines[0] * 10.0).abs() < 1e-12);
}

#[test]
fn mock_spec_file_drives_judgments() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("mock.json");
    std::fs::write(
        &spec,
        r#"{"preferences":[
            {"input":"q0","response_a":"x","response_b":"y","label":"B"},
            {"input":"q1","response_a":"x","response_b":"y","label":"B"}
        ]}"#,
    )
    .unwrap();
    let dataset = dir.path().join("eval.jsonl");
    let records = vec![
        PreferenceRecord::labeled("q0", "x", "y", Label::B),
        PreferenceRecord::labeled("q1", "x", "y", Label::B),
    ];
    write_jsonl(&dataset, &records).unwrap();
    let backend_arg = format!("mock:{}", spec.display());
    let out = rrm(&["--backend", &backend_arg, "eval", dataset.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(report["accuracy"], 1.0);
}
