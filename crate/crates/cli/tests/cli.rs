use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
n_samples = 32
oversampling = [2.0]
snr_db = [20.0]
train_size = 16
val_size = 8
test_size = 8
methods = ["hod", "b2r2", "lasso", "msquid"]

[training]
layers = [2]
sq = [true]
lr = [1e-3]
epochs = 1
batch_size = 8
"#;

fn msquid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msquid")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("cfg.toml");
    std::fs::write(&path, format!("out_dir = {:?}\n{body}", dir.join("out"))).unwrap();
    path.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// CSV rows with the runtime column blanked.
fn without_runtime(csv: &str) -> Vec<String> {
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|&h| h == "runtime_s").unwrap();
    csv.lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f[col] = "";
            f.join(",")
        })
        .collect()
}

#[test]
fn bench_without_model_fails_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let o = msquid(&["bench", "--config", &cfg, "--method", "msquid"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("train"));
}

#[test]
fn invalid_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n_samples = 0\n");
    assert_eq!(msquid(&["gen", "--config", &cfg]).status.code(), Some(2));
    let cfg = write_config(dir.path(), "no_such_field = 1\n");
    assert_eq!(msquid(&["gen", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn train_then_bench_writes_one_row_per_method_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    stdout(&msquid(&["gen", "--config", &cfg]));
    let trained = stdout(&msquid(&["train", "--config", &cfg]));
    assert!(trained.contains("of2_lam0.25_snr20"));

    let first = stdout(&msquid(&["bench", "--config", &cfg]));
    assert_eq!(first.lines().count(), 1 + 4);
    assert!(first.starts_with("method,of,lambda,snr_db,"));
    let results = dir.path().join("out/results");
    assert!(results.join("recovery.csv").exists());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(results.join("recovery.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 4);

    let second = stdout(&msquid(&["bench", "--config", &cfg]));
    assert_eq!(without_runtime(&first), without_runtime(&second));
}

#[test]
fn casestudy_reports_three_bands() {
    let dir = tempfile::tempdir().unwrap();
    let body = TINY.replace("snr_db = [20.0]", "mode = \"two_band\"\nlambda = [0.25]\nbits = 4")
        .replace("methods = [\"hod\", \"b2r2\", \"lasso\", \"msquid\"]", "methods = [\"hod\", \"b2r2\"]");
    let cfg = write_config(dir.path(), &body);
    let csv = stdout(&msquid(&["casestudy", "--config", &cfg]));
    assert!(csv.lines().next().unwrap().contains(",bits,"));
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    for band in ["all", "low", "high"] {
        assert!(csv.contains(&format!(",{band},")));
    }
}

#[test]
fn recover_unfolds_a_record_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let clean: Vec<f64> = (0..64)
        .map(|t| 0.6 * (2.0 * std::f64::consts::PI * 3.0 * t as f64 / 64.0).sin())
        .collect();
    let folded: Vec<String> = clean
        .iter()
        .map(|x| ((x + 0.25_f64).rem_euclid(0.5) - 0.25).to_string())
        .collect();
    let input = dir.path().join("record.txt");
    std::fs::write(&input, folded.join("\n")).unwrap();
    let out = stdout(&msquid(&[
        "recover",
        "--method",
        "b2r2",
        "--of",
        "2",
        "--lambda",
        "0.25",
        input.to_str().unwrap(),
    ]));
    let x: Vec<f64> = out.lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(x.len(), 64);
    let err = clean.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-9, "max error {err}");
}

#[test]
fn recover_rejects_malformed_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.txt");
    std::fs::write(&input, "0.1 abc 0.2").unwrap();
    let o = msquid(&["recover", "--method", "hod", "--of", "2", "--lambda", "0.25", input.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
