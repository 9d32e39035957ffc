//! End-to-end checks of the `r3` binary: artifact layout, file formats,
//! flag validation, and error reporting.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use r3_core::{Origin, PolicySnapshot, SampleRecord, StepMetrics, Task};

const TINY_CONFIG: &str = "\
epochs = 2
group_size = 4
batch_size = 4
seed = 11

[suite]
easy = 2
medium = 2
hard = 2
extreme = 2
";

fn r3(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_r3"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn train_into(dir: &Path) -> Output {
    let config = dir.join("config.toml");
    fs::write(&config, TINY_CONFIG).unwrap();
    let out = dir.join("run");
    r3(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
}

fn read_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect()
}

#[test]
fn train_writes_parseable_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let output = train_into(dir.path());
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));

    let run = dir.path().join("run");
    let metrics: Vec<StepMetrics> = read_lines(&run.join("metrics.jsonl"))
        .iter()
        .map(|line| serde_json::from_str(line).expect("metrics line parses"))
        .collect();
    assert_eq!(metrics.len(), 4);
    assert_eq!(metrics.last().unwrap().step, 4);

    let records: Vec<SampleRecord> = read_lines(&run.join("buffer.jsonl"))
        .iter()
        .map(|line| serde_json::from_str(line).expect("buffer line parses"))
        .collect();
    assert!(!records.is_empty());
    for record in &records {
        record.validate().expect("buffered records are well formed");
    }

    let tasks: Vec<Task> = read_lines(&run.join("suite.jsonl"))
        .iter()
        .map(|line| serde_json::from_str(line).expect("task line parses"))
        .collect();
    assert_eq!(tasks.len(), 8);

    let snapshot: PolicySnapshot =
        serde_json::from_str(&fs::read_to_string(run.join("policy.json")).unwrap()).unwrap();
    assert_eq!(snapshot.vocab_size, 16);

    let rates: BTreeMap<String, f64> =
        serde_json::from_str(&fs::read_to_string(run.join("solve_rates.json")).unwrap()).unwrap();
    let strata: Vec<&str> = rates.keys().map(String::as_str).collect();
    assert_eq!(strata, ["easy", "extreme", "hard", "medium"]);

    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("solve rates:"), "stdout was: {stdout}");
}

#[test]
fn train_rejects_unknown_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(&config, "bogus = 1\n").unwrap();
    let output = r3(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("run").to_str().unwrap(),
    ]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("parsing config"), "stderr was: {stderr}");
}

#[test]
fn train_accepts_the_generation_limit_alias() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("alias.toml");
    fs::write(
        &config,
        "epochs = 1\ngroup_size = 2\nbatch_size = 8\n\n[env]\nt_max = 24\n\n[suite]\neasy = 2\nmedium = 2\nhard = 2\nextreme = 2\n",
    )
    .unwrap();
    let out = dir.path().join("run");
    let output = r3(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let resolved = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(resolved.contains("max_tokens = 24"), "resolved config was: {resolved}");
}

#[test]
fn identical_runs_write_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    fs::write(&config, TINY_CONFIG).unwrap();
    for name in ["a", "b"] {
        let output = r3(&[
            "train",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.path().join(name).to_str().unwrap(),
        ]);
        assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    }
    for file in ["metrics.jsonl", "buffer.jsonl", "policy.json"] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
}

#[test]
fn compare_emits_the_pinned_header_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let r3_config = dir.path().join("r3.toml");
    fs::write(&r3_config, TINY_CONFIG).unwrap();
    let grpo_config = dir.path().join("grpo.toml");
    fs::write(&grpo_config, format!("mode = \"grpo\"\n{TINY_CONFIG}")).unwrap();
    let csv = dir.path().join("cmp.csv");

    let output = r3(&[
        "compare",
        "--configs",
        r3_config.to_str().unwrap(),
        grpo_config.to_str().unwrap(),
        "--seeds",
        "2",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));

    let trajectory = read_lines(&csv);
    assert_eq!(
        trajectory[0],
        "step,mode,seed,mean_reward,solve_all,solve_none,entropy,replay_injections,reflection_activations"
    );
    assert_eq!(trajectory.len(), 1 + 2 * 2 * 4);
    assert!(trajectory[1].starts_with("1,r3,1,"));

    let summary = read_lines(&dir.path().join("cmp_summary.csv"));
    assert_eq!(summary[0], "mode,config,seed,easy,medium,hard,extreme");
    assert_eq!(summary.len(), 1 + 4);
    assert!(summary[1].starts_with("r3,"));
    assert!(summary[3].starts_with("grpo,"));

    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("medians over 2 seed(s)"), "stdout was: {stdout}");
}

#[test]
fn compare_requires_two_configs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("only.toml");
    fs::write(&config, TINY_CONFIG).unwrap();
    let output = r3(&[
        "compare",
        "--configs",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("cmp.csv").to_str().unwrap(),
    ]);
    assert!(!output.status.success());
}

#[test]
fn inspect_buffer_filters_by_uid() {
    let dir = tempfile::tempdir().unwrap();
    let output = train_into(dir.path());
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));

    let buffer = dir.path().join("run").join("buffer.jsonl");
    let stored_q0 = read_lines(&buffer)
        .iter()
        .map(|line| serde_json::from_str::<SampleRecord>(line).unwrap())
        .filter(|record| record.uid == "q0")
        .count();
    assert!(stored_q0 > 0);

    let output = r3(&["inspect-buffer", buffer.to_str().unwrap(), "--uid", "q0"]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), stored_q0);
    for line in &lines {
        assert!(line.starts_with("q0 "), "unexpected line: {line}");
        assert!(line.contains("e_peak"), "unexpected line: {line}");
        assert!(line.contains("e_global"), "unexpected line: {line}");
    }
}

#[test]
fn inspect_buffer_names_the_corrupt_line() {
    let dir = tempfile::tempdir().unwrap();
    let record = SampleRecord {
        uid: "q0".into(),
        response: vec![3, 0],
        behavior_logprobs: vec![-0.1, -0.2],
        token_entropies: vec![0.4, 0.3],
        reward: 1.0,
        truncated: false,
        epoch: 1,
        origin: Origin::OnPolicy,
    };
    let valid = serde_json::to_string(&record).unwrap();
    let mut lines: Vec<String> = (0..11).map(|_| valid.clone()).collect();
    lines.push("{not json".into());
    let path = dir.path().join("buffer.jsonl");
    fs::write(&path, lines.join("\n")).unwrap();

    let output = r3(&["inspect-buffer", path.to_str().unwrap()]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 12"), "stderr was: {stderr}");
}

#[test]
fn inspect_buffer_accepts_an_empty_dump() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("buffer.jsonl");
    fs::write(&path, "").unwrap();
    let output = r3(&["inspect-buffer", path.to_str().unwrap()]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(output.stdout.is_empty());
}

#[test]
fn inspect_buffer_reports_a_missing_file() {
    let output = r3(&["inspect-buffer", "/nonexistent/buffer.jsonl"]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("/nonexistent/buffer.jsonl"), "stderr was: {stderr}");
}

#[test]
fn score_traces_ranks_by_dominance() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traces.jsonl");
    fs::write(&path, "[0.1, 2.5, 0.3]\n[2.0, 2.0, 2.0]\n[0.05, 0.1, 3.1, 0.2]\n").unwrap();

    let output = r3(&[
        "score-traces",
        path.to_str().unwrap(),
        "--p",
        "0.4",
        "--rmax",
        "0.5",
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert_eq!(stdout, "score,reward\n1,0.25\n0,0\n2,0.5\n");

    let csv = dir.path().join("scores.csv");
    let output = r3(&[
        "score-traces",
        path.to_str().unwrap(),
        "--p",
        "0.4",
        "--rmax",
        "0.5",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert_eq!(fs::read_to_string(&csv).unwrap(), "score,reward\n1,0.25\n0,0\n2,0.5\n");
}

#[test]
fn score_traces_names_the_corrupt_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traces.jsonl");
    fs::write(&path, "[0.1, 0.2]\nnot an array\n").unwrap();
    let output = r3(&["score-traces", path.to_str().unwrap()]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 2"), "stderr was: {stderr}");
}

#[test]
fn score_traces_rejects_bad_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traces.jsonl");
    fs::write(&path, "[0.1, 0.2]\n").unwrap();
    for args in [["--p", "0"], ["--p", "1.5"], ["--rmax", "0"], ["--rmax", "-1"]] {
        let output = r3(&["score-traces", path.to_str().unwrap(), args[0], args[1]]);
        assert!(!output.status.success(), "{} {} should be rejected", args[0], args[1]);
    }
}
