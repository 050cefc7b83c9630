//! Harness contracts: config validation diagnostics, row counting,
//! byte-determinism across reruns and worker counts, summary
//! consistency, and process exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use qsnash_cli::{cmd_oracle, cmd_run, load_config, CliError};

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn small_run_config(out_dir: &Path, extra: &str) -> String {
    format!(
        r#"
manifold = "torus:1"
algorithm = "qslgd"
metric = "kl10"
record_every = 100
output_dir = "{}"
{extra}
[kernel]
type = "sine_torus"

[run]
n_x = 100
n_y = 100
k0 = 50
k1 = 2
k2 = 1
t = 300
h_x = 0.01
h_y = 0.01
beta = 10.0
seed = 11
init_x = {{ type = "box", lo = [0.0], hi = [0.25] }}
init_y = {{ type = "box", lo = [0.0], hi = [0.25] }}
"#,
        out_dir.display()
    )
}

/// Strips the elapsed_seconds column (the only nondeterministic one).
fn strip_elapsed(csv: &str) -> String {
    csv.lines()
        .map(|line| {
            if line.starts_with('#') {
                return line.to_string();
            }
            match line.rsplit_once(',') {
                Some((rest, _elapsed)) => rest.to_string(),
                None => line.to_string(),
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn single_run_row_count_is_t_over_cadence_plus_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg_path = write_config(tmp.path(), "exp.toml", &small_run_config(&out, ""));
    let cfg = load_config(&cfg_path).unwrap();
    let artifacts = cmd_run(&cfg).unwrap();
    // t = 300, record_every = 100 -> rows at 0, 100, 200, 300
    assert_eq!(artifacts.data_rows, 300 / 100 + 1);

    let text = fs::read_to_string(&artifacts.rows_path).unwrap();
    assert_eq!(text.lines().count(), 1 + 4); // header + data
    assert!(text.starts_with("sweep_value,repeat,seed,outer_iter,kl10,elapsed_seconds"));
}

#[test]
fn reruns_and_worker_counts_give_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let sweep = r#"
[sweep]
parameter = "beta"
values = [1.0, 10.0, 100.0]
repeats = 2
"#;

    let mut outputs = Vec::new();
    for (i, workers) in [1usize, 2, 4].iter().enumerate() {
        let out = tmp.path().join(format!("out{i}"));
        let text = small_run_config(&out, &format!("workers = {workers}\n{sweep}"));
        let cfg_path = write_config(tmp.path(), &format!("exp{i}.toml"), &text);
        let cfg = load_config(&cfg_path).unwrap();
        let artifacts = cmd_run(&cfg).unwrap();
        let rows = strip_elapsed(&fs::read_to_string(&artifacts.rows_path).unwrap());
        let summary = fs::read_to_string(&artifacts.summary_path).unwrap();
        outputs.push((rows, summary));
    }
    for pair in outputs.windows(2) {
        assert_eq!(
            pair[0].0, pair[1].0,
            "row bytes differ across worker counts"
        );
        assert_eq!(
            pair[0].1, pair[1].1,
            "summary bytes differ across worker counts"
        );
    }

    // a literal rerun of the same config file is also identical
    let out = tmp.path().join("out0b");
    let text = small_run_config(&out, &format!("workers = 1\n{sweep}"));
    let cfg_path = write_config(tmp.path(), "exp0b.toml", &text);
    let cfg = load_config(&cfg_path).unwrap();
    let artifacts = cmd_run(&cfg).unwrap();
    let rows = strip_elapsed(&fs::read_to_string(&artifacts.rows_path).unwrap());
    assert_eq!(rows, outputs[0].0);
}

#[test]
fn summary_means_match_final_rows_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let sweep = r#"
[sweep]
parameter = "n"
values = [50.0, 100.0]
repeats = 3
"#;
    let cfg_path = write_config(tmp.path(), "exp.toml", &small_run_config(&out, sweep));
    let cfg = load_config(&cfg_path).unwrap();
    let artifacts = cmd_run(&cfg).unwrap();

    let rows = fs::read_to_string(&artifacts.rows_path).unwrap();
    let mut finals: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
    for line in rows.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols[3] == "300" {
            finals
                .entry(cols[0].to_string())
                .or_default()
                .push(cols[4].parse().unwrap());
        }
    }
    let summary = fs::read_to_string(&artifacts.summary_path).unwrap();
    for line in summary.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let vals = &finals[cols[0]];
        assert_eq!(cols[1].parse::<usize>().unwrap(), vals.len());
        let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
        let reported: f64 = cols[3].parse().unwrap();
        assert!((mean - reported).abs() < 1e-12, "{mean} vs {reported}");
    }
}

#[test]
fn sweeping_t_tracks_the_final_iteration_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let sweep = r#"
[sweep]
parameter = "t"
values = [200.0, 400.0]
repeats = 2
"#;
    let cfg_path = write_config(tmp.path(), "exp.toml", &small_run_config(&out, sweep));
    let cfg = load_config(&cfg_path).unwrap();
    let artifacts = cmd_run(&cfg).unwrap();
    let summary = fs::read_to_string(&artifacts.summary_path).unwrap();
    let final_iters: Vec<&str> = summary
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap())
        .collect();
    assert_eq!(final_iters, vec!["200", "400"]);

    // every summary mean matches the rows at that value's own final iter
    let rows = fs::read_to_string(&artifacts.rows_path).unwrap();
    for (line, t_final) in summary.lines().skip(1).zip(["200", "400"]) {
        let cols: Vec<&str> = line.split(',').collect();
        let finals: Vec<f64> = rows
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .filter(|c| c[0] == cols[0] && c[3] == t_final)
            .map(|c| c[4].parse().unwrap())
            .collect();
        assert_eq!(finals.len(), 2);
        let mean = finals.iter().sum::<f64>() / 2.0;
        let reported: f64 = cols[3].parse().unwrap();
        assert!((mean - reported).abs() < 1e-12);
    }
}

#[test]
fn per_repeat_seeds_are_base_plus_index() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let sweep = r#"
[sweep]
parameter = "beta"
values = [10.0]
repeats = 3
"#;
    let cfg_path = write_config(tmp.path(), "exp.toml", &small_run_config(&out, sweep));
    let cfg = load_config(&cfg_path).unwrap();
    let artifacts = cmd_run(&cfg).unwrap();
    let rows = fs::read_to_string(&artifacts.rows_path).unwrap();
    for line in rows.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let repeat: u64 = cols[1].parse().unwrap();
        let seed: u64 = cols[2].parse().unwrap();
        assert_eq!(seed, 11 + repeat);
    }
}

#[test]
fn unknown_keys_are_rejected_with_the_key_name() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let bad = format!("{}\ntypo_key = 3\n", small_run_config(&out, ""));
    let cfg_path = write_config(tmp.path(), "exp.toml", &bad);
    match load_config(&cfg_path) {
        Err(CliError::Config(msg)) => assert!(msg.contains("typo_key"), "{msg}"),
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn invalid_fields_are_named_in_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");

    let cases = [
        (
            "manifold = \"torus:1\"",
            "manifold = \"disk:2\"",
            "manifold",
        ),
        ("beta = 10.0", "beta = -3.0", "beta"),
        ("metric = \"kl10\"", "metric = \"wasserstein\"", "metric"),
        ("record_every = 100", "record_every = 0", "record_every"),
    ];
    for (from, to, field) in cases {
        let text = small_run_config(&out, "").replace(from, to);
        let cfg_path = write_config(tmp.path(), "exp.toml", &text);
        match load_config(&cfg_path) {
            Err(CliError::Config(msg)) => {
                assert!(msg.contains(field), "diagnostic for `{field}` was: {msg}")
            }
            other => panic!("expected config error for {field}, got {other:?}"),
        }
    }
}

#[test]
fn kernel_and_manifold_must_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let text =
        small_run_config(&out, "").replace("manifold = \"torus:1\"", "manifold = \"sphere:3\"");
    let cfg_path = write_config(tmp.path(), "exp.toml", &text);
    match load_config(&cfg_path) {
        Err(CliError::Config(msg)) => assert!(msg.contains("manifold"), "{msg}"),
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn sweep_values_are_validated_per_parameter() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let sweep = r#"
[sweep]
parameter = "n"
values = [10.5]
"#;
    let cfg_path = write_config(tmp.path(), "exp.toml", &small_run_config(&out, sweep));
    match load_config(&cfg_path) {
        Err(CliError::Config(msg)) => assert!(msg.contains("sweep"), "{msg}"),
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn oracle_on_sine_kernel_returns_uniform_densities() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let oracle = r#"
[oracle]
beta = 10.0
pde = { init = "bump", steps = 3000, record_every = 300 }
"#;
    let cfg_path = write_config(tmp.path(), "exp.toml", &small_run_config(&out, oracle));
    let cfg = load_config(&cfg_path).unwrap();
    let artifacts = cmd_oracle(&cfg).unwrap();

    let text = fs::read_to_string(&artifacts.densities_path).unwrap();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let p: f64 = cols[1].parse().unwrap();
        let q: f64 = cols[2].parse().unwrap();
        assert!((p - 1.0).abs() < 1e-6 && (q - 1.0).abs() < 1e-6);
    }

    // the free-energy trace decreases monotonically
    let trace = fs::read_to_string(artifacts.trace_path.unwrap()).unwrap();
    let f: Vec<f64> = trace
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!(f.len() >= 10);
    for w in f.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "trace rose: {} -> {}", w[0], w[1]);
    }
}

#[test]
fn exit_codes_follow_the_contract() {
    let bin = env!("CARGO_BIN_EXE_qsnash");
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");

    // 0: success
    let good = write_config(tmp.path(), "good.toml", &small_run_config(&out, ""));
    let status = Command::new(bin)
        .args(["validate"])
        .arg(&good)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    // 1: config error
    let bad = write_config(tmp.path(), "bad.toml", "not valid toml [");
    let status = Command::new(bin).args(["run"]).arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(1));

    // 1: unknown subcommand / missing args
    let status = Command::new(bin)
        .arg("frobnicate")
        .arg(&good)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));

    // 2: numerical blow-up (a catastrophic step size overflows the
    // coordinates); the partial CSV still carries an error row
    let blow_out = tmp.path().join("blow");
    let blow_text = small_run_config(&blow_out, "")
        .replace("h_x = 0.01", "h_x = 1.0e308")
        .replace("h_y = 0.01", "h_y = 1.0e308");
    let blow = write_config(tmp.path(), "blow.toml", &blow_text);
    let output = Command::new(bin).args(["run"]).arg(&blow).output().unwrap();
    assert_eq!(
        output.status.code(),
        Some(2),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let rows = fs::read_to_string(blow_out.join("runs.csv")).unwrap();
    assert!(rows.lines().any(|l| l.starts_with("# error:")), "{rows}");
}

#[test]
fn workers_env_var_overrides_config() {
    let bin = env!("CARGO_BIN_EXE_qsnash");
    let tmp = tempfile::tempdir().unwrap();
    let out1 = tmp.path().join("o1");
    let out2 = tmp.path().join("o2");
    let sweep = r#"
[sweep]
parameter = "beta"
values = [1.0, 10.0]
repeats = 2
"#;
    let c1 = write_config(tmp.path(), "e1.toml", &small_run_config(&out1, sweep));
    let c2 = write_config(tmp.path(), "e2.toml", &small_run_config(&out2, sweep));

    let s1 = Command::new(bin).args(["run"]).arg(&c1).status().unwrap();
    let s2 = Command::new(bin)
        .args(["run"])
        .arg(&c2)
        .env("QSNASH_WORKERS", "4")
        .status()
        .unwrap();
    assert!(s1.success() && s2.success());

    let r1 = strip_elapsed(&fs::read_to_string(out1.join("runs.csv")).unwrap());
    let r2 = strip_elapsed(&fs::read_to_string(out2.join("runs.csv")).unwrap());
    assert_eq!(r1, r2);
}

#[test]
fn ni_metric_runs_on_the_sphere() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let text = format!(
        r#"
manifold = "sphere:3"
algorithm = "qslgd"
metric = "ni"
record_every = 50
output_dir = "{}"

[kernel]
type = "poly_sphere"
d = 3
matrix_seed = 5

[ni]
starts = 8
steps = 100

[run]
n_x = 50
n_y = 50
k0 = 20
k1 = 2
k2 = 1
t = 100
h_x = 0.05
h_y = 0.05
beta = 100.0
seed = 3
init_x = {{ type = "uniform" }}
init_y = {{ type = "uniform" }}
"#,
        out.display()
    );
    let cfg_path = write_config(tmp.path(), "exp.toml", &text);
    let cfg = load_config(&cfg_path).unwrap();
    let artifacts = cmd_run(&cfg).unwrap();
    assert_eq!(artifacts.data_rows, 100 / 50 + 1);
    let rows = fs::read_to_string(&artifacts.rows_path).unwrap();
    assert!(rows.starts_with("sweep_value,repeat,seed,outer_iter,ni,elapsed_seconds"));
    for line in rows.lines().skip(1) {
        let ni: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        assert!(ni.is_finite());
    }
}

#[test]
fn kl_metric_is_rejected_on_the_sphere() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
manifold = "sphere:3"
metric = "kl10"

[kernel]
type = "poly_sphere"
d = 3
matrix_seed = 5
"#;
    let cfg_path = write_config(tmp.path(), "exp.toml", text);
    match load_config(&cfg_path) {
        Err(CliError::Config(msg)) => assert!(msg.contains("metric"), "{msg}"),
        other => panic!("expected config error, got {other:?}"),
    }
}
