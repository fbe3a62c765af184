use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_osc-reservoir"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().expect("binary runs")
}

/// Short protocols so the sweeps finish quickly.
const FAST: &str = r#"
[network]
model = "rs"
topology = "complete"
n = 30

[sweep]
transient = 10.0
measure = 10.0
variance_window = 10.0

[readout]
train_end = 60
test_end = 80

[dynamics]
relax_t_max = 30.0
"#;

#[test]
fn sweep_order_writes_one_row_per_coupling() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("fast.cfg"), FAST).unwrap();
    let out = run(
        &["sweep-order", "--config", "fast.cfg", "--model", "rs", "--lambda", "0:5:0.1", "--seed", "4", "--out", "o"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run_dir = dir.path().join("o/run");
    let csv = fs::read_to_string(run_dir.join("data.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "direction,lambda,r,r_var,seed");
    assert_eq!(lines.len(), 52);
    assert!(lines[1..].iter().all(|l| l.starts_with("forward,")));
    assert!(run_dir.join("resolved.cfg").exists());
    assert!(run_dir.join("graph_seed4.txt").exists());
    assert!(fs::read_to_string(run_dir.join("plot.svg")).unwrap().contains("<svg"));

    // The resolved config reproduces the run.
    let resolved = fs::read_to_string(run_dir.join("resolved.cfg")).unwrap();
    assert!(resolved.contains("seeds = [4]"));
    assert!(resolved.contains("lambda_step = 0.1"));
}

#[test]
fn both_directions_double_the_rows() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("fast.cfg"), FAST).unwrap();
    let out = run(
        &["sweep-order", "--config", "fast.cfg", "--lambda", "1:3:0.5", "--direction", "both", "--seed", "1,2", "--out", "o", "--id", "dirs"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("o/dirs/data.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5 * 2 * 2);
}

#[test]
fn run_prints_one_report_line_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("fast.cfg"), FAST.replace("\"rs\"", "\"es\"").replace("complete", "er")).unwrap();
    let out = run(
        &["run", "--config", "fast.cfg", "--task", "predict", "--m", "5", "--lambda", "3", "--seed", "2", "--out", "o"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 1);
    assert!(lines[0].starts_with("model=es seed=2 task=predict-m5 lambda=3"));
    assert!(lines[0].contains("test_mse="));
    let weights = fs::read_to_string(dir.path().join("o/run/weights_seed2.csv")).unwrap();
    assert!(weights.starts_with("# taps=10"));
}

#[test]
fn sweep_error_and_fixed_coupling_commands() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("fast.cfg"), FAST).unwrap();
    let out = run(
        &["sweep-error", "--config", "fast.cfg", "--lambda", "2:4:1", "--task", "filter", "--m", "2,4", "--seed", "1", "--out", "o", "--id", "err"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("o/err/data.csv")).unwrap();
    assert!(csv.starts_with("model,seed,task,lambda,coupling,r,r_var,train_mse,test_mse,locked"));
    assert_eq!(csv.lines().count(), 1 + 3 * 2);

    let es = FAST.replace("\"rs\"", "\"es\"").replace("complete", "er");
    fs::write(dir.path().join("es.cfg"), es).unwrap();
    let out = run(
        &["degree", "--config", "es.cfg", "--k", "3:12", "--lambda", "3", "--task", "filter", "--seed", "1", "--out", "o", "--id", "deg"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("o/deg/data.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3);

    let out = run(
        &["modes", "--config", "es.cfg", "--modes", "1,3", "--lambda", "3", "--seed", "1", "--out", "o", "--id", "modes"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(
        &["task-length", "--config", "es.cfg", "--m", "2,4", "--lambda", "3", "--task", "predict", "--seed", "1", "--out", "o", "--id", "len"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(dir.path().join("o/len/data.csv")).unwrap().lines().count(), 3);
}

#[test]
fn gen_signal_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["gen-signal", "--signal", "mackey-glass", "--duration", "10", "--dt", "0.5", "--out", "o"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("o/gen-signal/data.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 1 + 21);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| run(args, dir.path()).status.code();
    assert_eq!(code(&["no-such-command"]), Some(2));
    assert_eq!(code(&["reproduce", "--fig", "9"]), Some(2));
    assert_eq!(code(&["sweep-order", "--lambda", "5:0:0.1"]), Some(2));
    assert_eq!(code(&["degree", "--model", "rs"]), Some(2));
    fs::write(dir.path().join("bad.cfg"), "[network]\nn = \"many\"\n").unwrap();
    assert_eq!(code(&["sweep-order", "--config", "bad.cfg"]), Some(2));
    assert_eq!(code(&["sweep-order", "--config", "missing.cfg"]), Some(3));
    // A file where the output directory should go.
    fs::write(dir.path().join("blocked"), "").unwrap();
    assert_eq!(code(&["sweep-order", "--n", "10", "--lambda", "1:2:1", "--out", "blocked"]), Some(2));
}
