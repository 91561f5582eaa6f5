use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_kancql");

fn kancql(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let out = kancql(&[]);
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr) + String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("Usage"), "{text}");
}

#[test]
fn unknown_subcommand_and_flag_fail_with_usage() {
    for args in [&["frobnicate"][..], &["count-params", "--bogus"][..]] {
        let out = kancql(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    }
}

#[test]
fn count_params_table_and_json_agree() {
    let table = stdout(&kancql(&["count-params", "--obs-dim", "17", "--act-dim", "6"]));
    let row = table.lines().find(|l| l.starts_with("mlp-a3c3")).unwrap();
    let cells: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(cells[3], "139276");

    let json: serde_json::Value =
        serde_json::from_slice(&kancql(&["count-params", "--obs-dim", "17", "--act-dim", "6", "--json"]).stdout)
            .unwrap();
    let rows = json.as_array().unwrap();
    assert_eq!(rows.len(), 10);
    for (line, row) in table.lines().skip(1).zip(rows) {
        let cells: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(cells[0], row["config"].as_str().unwrap());
        assert_eq!(cells[3], row["actor_params"].to_string());
        assert_eq!(cells[4], row["critic_params"].to_string());
    }

    // Without dims both reference pairs are listed.
    let both: serde_json::Value = serde_json::from_slice(&kancql(&["count-params", "--json"]).stdout).unwrap();
    assert_eq!(both.as_array().unwrap().len(), 20);
}

#[test]
fn gen_train_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("pm.ords");
    let run = dir.path().join("run");
    let out = kancql(&[
        "gen-data",
        "--env",
        "pointmass2d",
        "--tier",
        "medium",
        "--n",
        "2000",
        "--seed",
        "1",
        "--out",
        path_str(&data),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = kancql(&[
        "train",
        "--config",
        "kan-a1c1",
        "--data",
        path_str(&data),
        "--epochs",
        "2",
        "--seed",
        "0",
        "--out-dir",
        path_str(&run),
        "--steps-per-epoch",
        "5",
        "--batch-size",
        "32",
        "--n-actions",
        "2",
        "--eval-episodes",
        "2",
        "--json",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 2);
    let csv = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let ckpt = run.join("checkpoint.kcql");
    let eval_args = [
        "eval",
        "--checkpoint",
        path_str(&ckpt),
        "--data",
        path_str(&data),
        "--episodes",
        "3",
        "--seed",
        "4",
    ];
    let table = kancql(&eval_args);
    assert!(table.status.success(), "{}", String::from_utf8_lossy(&table.stderr));
    let mut json_args = eval_args.to_vec();
    json_args.push("--json");
    let json: serde_json::Value = serde_json::from_slice(&kancql(&json_args).stdout).unwrap();
    assert_eq!(json["config"], "kan-a1c1");
    assert_eq!(json["episodes"], 3);

    // Every numeric field prints the same in the table as in the JSON.
    let table = stdout(&table);
    for key in ["return_mean", "return_std", "normalized_score"] {
        let line = table.lines().find(|l| l.starts_with(key)).unwrap();
        let shown: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
        assert_eq!(shown, json[key].as_f64().unwrap(), "{key}");
    }
}

#[test]
fn file_errors_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.ords");
    let out = kancql(&["bench", "--config", "mlp-a1c1", "--data", path_str(&missing)]);
    let io_code = out.status.code().unwrap();
    assert_eq!(io_code, 3);

    let garbage = dir.path().join("garbage.ords");
    fs::write(&garbage, b"not a dataset at all").unwrap();
    let out = kancql(&["bench", "--config", "mlp-a1c1", "--data", path_str(&garbage)]);
    let format_code = out.status.code().unwrap();
    assert_eq!(format_code, 4);

    let out = kancql(&["eval", "--checkpoint", path_str(&garbage), "--data", path_str(&garbage)]);
    assert_eq!(out.status.code(), Some(format_code));
}

#[test]
fn unknown_config_is_a_usage_error() {
    let out = kancql(&["bench", "--config", "mlp-a9c9", "--data", "whatever.ords"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mlp-a9c9"));
}

#[test]
fn bench_reports_three_timed_epochs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("pd.ords");
    assert!(kancql(&[
        "gen-data",
        "--env",
        "pendulum1d",
        "--tier",
        "expert",
        "--n",
        "400",
        "--out",
        path_str(&data),
    ])
    .status
    .success());
    let out = kancql(&[
        "bench",
        "--config",
        "hyb-a0c3",
        "--data",
        path_str(&data),
        "--steps-per-epoch",
        "2",
        "--batch-size",
        "16",
        "--n-actions",
        "2",
        "--json",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["epochs_timed"], 3);
    assert_eq!(r["epoch_seconds"].as_array().unwrap().len(), 3);
    let sps = r["steps_per_second"].as_f64().unwrap();
    let mean = r["mean_epoch_seconds"].as_f64().unwrap();
    assert!((sps - 2.0 / mean).abs() <= 1e-9 * sps);
    // One 3→1 KAN layer plus the 1→1 log-std head.
    assert_eq!(r["actor_params"], 30 + 2);
}
