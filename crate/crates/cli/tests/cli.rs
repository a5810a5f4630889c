//! End-to-end checks of the command-line surface: exit codes, file
//! round-trips, determinism, and the stdin streaming protocol.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rtad_core::net::{save_model, NetConfig, Network};
use rtad_core::series::load_csv;

static DIR_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Fresh scratch directory for one test.
fn scratch(tag: &str) -> PathBuf {
    let id = DIR_COUNTER.fetch_add(1, Ordering::Relaxed);
    let dir = std::env::temp_dir().join(format!("rtad-cli-{tag}-{}-{id}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn rtad() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rtad"))
}

fn run(args: &[&str]) -> Output {
    rtad().args(args).output().unwrap()
}

fn stderr_text(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn stdout_text(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

/// Seasonal series with a linear drift and a few labeled spikes.
fn write_seasonal_csv(path: &Path, len: usize, period: usize, spikes: &[usize]) {
    let mut text = String::from("timestamp,value,is_anomaly\n");
    for t in 0..len {
        let phase = (t % period) as f64 / period as f64;
        let mut value = 0.002 * t as f64 + (phase * std::f64::consts::TAU).sin();
        let label = spikes.contains(&t);
        if label {
            value += 6.0;
        }
        text.push_str(&format!("{t},{value},{}\n", label as u8));
    }
    fs::write(path, text).unwrap();
}

/// Small architecture that keeps end-to-end runs fast.
fn tiny_config(dir: &Path) -> PathBuf {
    let text = r#"
window = 32
stride = 4
batch_size = 16
seed = 7
eval_buffer = 128

[net]
window = 32
depth = 2
base_channels = 4
epochs = 2
"#;
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn tiny_model(dir: &Path) -> PathBuf {
    let config = NetConfig {
        window: 32,
        depth: 2,
        base_channels: 4,
        epochs: 2,
        ..NetConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let net = Network::new(config, &mut rng).unwrap();
    let path = dir.join("tiny.rtad");
    save_model(&net, &path).unwrap();
    path
}

#[test]
fn decompose_emits_a_reconstructible_csv() {
    let dir = scratch("decompose");
    let input = dir.join("series.csv");
    write_seasonal_csv(&input, 240, 24, &[]);
    let output = dir.join("parts.csv");

    let result = run(&[
        "decompose",
        "--input",
        input.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{}", stderr_text(&result));

    let text = fs::read_to_string(&output).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "timestamp,input,trend,seasonal,remainder"
    );
    let mut rows = 0;
    for line in lines {
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.parse().unwrap())
            .collect();
        assert_eq!(fields.len(), 5);
        let reconstructed = fields[2] + fields[3] + fields[4];
        assert!(
            (fields[1] - reconstructed).abs() < 1e-9,
            "row {rows} does not reconstruct"
        );
        rows += 1;
    }
    assert_eq!(rows, 240);
}

#[test]
fn no_period_flag_forces_the_trend_only_path() {
    let dir = scratch("noperiod");
    let input = dir.join("series.csv");
    write_seasonal_csv(&input, 240, 24, &[]);
    let output = dir.join("parts.csv");

    let result = run(&[
        "decompose",
        "--input",
        input.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
        "--no-period",
    ]);
    assert!(result.status.success(), "{}", stderr_text(&result));

    let text = fs::read_to_string(&output).unwrap();
    for line in text.lines().skip(1) {
        let seasonal: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(seasonal, 0.0, "seasonal component leaked through");
    }
}

#[test]
fn missing_input_exits_3_and_names_the_path() {
    let result = run(&["decompose", "--input", "/definitely/not/here.csv"]);
    assert_eq!(result.status.code(), Some(3));
    assert!(
        stderr_text(&result).contains("/definitely/not/here.csv"),
        "stderr must name the missing path: {}",
        stderr_text(&result)
    );
}

#[test]
fn usage_errors_exit_2() {
    let result = run(&["frobnicate"]);
    assert_eq!(result.status.code(), Some(2));
    let result = run(&["decompose", "--no-such-flag"]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn augmented_variants_round_trip_through_the_loader() {
    let dir = scratch("augment");
    let input = dir.join("series.csv");
    write_seasonal_csv(&input, 300, 25, &[40, 140]);
    let out_dir = dir.join("variants");

    let result = run(&[
        "augment",
        "--input",
        input.to_str().unwrap(),
        "--output-dir",
        out_dir.to_str().unwrap(),
        "--seed",
        "11",
    ]);
    assert!(result.status.success(), "{}", stderr_text(&result));

    let mut emitted: Vec<PathBuf> = fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    emitted.sort();
    assert!(emitted.len() >= 2, "expected several variants, got {emitted:?}");
    for path in &emitted {
        let series = load_csv(path).unwrap();
        assert!(!series.is_empty(), "{} is empty", path.display());
    }

    // The same seed reproduces every emitted byte.
    let out_dir2 = dir.join("variants2");
    let result = run(&[
        "augment",
        "--input",
        input.to_str().unwrap(),
        "--output-dir",
        out_dir2.to_str().unwrap(),
        "--seed",
        "11",
    ]);
    assert!(result.status.success());
    for path in &emitted {
        let twin = out_dir2.join(path.file_name().unwrap());
        assert_eq!(
            fs::read(path).unwrap(),
            fs::read(&twin).unwrap(),
            "variant {} differs between identical seeds",
            path.display()
        );
    }
}

#[test]
fn training_is_deterministic_and_survives_a_corrupt_file() {
    let dir = scratch("train");
    let corpus = dir.join("corpus");
    fs::create_dir_all(&corpus).unwrap();
    write_seasonal_csv(&corpus.join("a.csv"), 300, 25, &[180, 260]);
    write_seasonal_csv(&corpus.join("b.csv"), 300, 25, &[200]);
    fs::write(corpus.join("broken.csv"), "timestamp,value\n1,not_a_number\n").unwrap();
    let config = tiny_config(&dir);

    let model1 = dir.join("one.rtad");
    let report_path = dir.join("report.json");
    let result = run(&[
        "train",
        "--corpus",
        corpus.to_str().unwrap(),
        "--model",
        model1.to_str().unwrap(),
        "--report",
        report_path.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--no-augmentation",
    ]);
    assert!(result.status.success(), "{}", stderr_text(&result));
    assert!(
        stderr_text(&result).contains("broken.csv"),
        "corrupt file should be skipped with a warning: {}",
        stderr_text(&result)
    );

    // Window accounting: two series, training halves of 150 points, window
    // 32, stride 4 -> floor((150 - 32) / 4) + 1 = 30 windows each.
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["series_used"], 2);
    assert_eq!(report["base_windows"], 60);
    assert_eq!(report["total_windows"], 60);

    let model2 = dir.join("two.rtad");
    let result = run(&[
        "train",
        "--corpus",
        corpus.to_str().unwrap(),
        "--model",
        model2.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--no-augmentation",
    ]);
    assert!(result.status.success(), "{}", stderr_text(&result));
    assert_eq!(
        fs::read(&model1).unwrap(),
        fs::read(&model2).unwrap(),
        "same seed must produce byte-identical models"
    );
}

#[test]
fn evaluate_rejects_architecture_mismatch_and_emits_plot_data() {
    let dir = scratch("evaluate");
    let corpus = dir.join("corpus");
    fs::create_dir_all(&corpus).unwrap();
    write_seasonal_csv(&corpus.join("a.csv"), 300, 25, &[180, 260]);
    let config = tiny_config(&dir);
    let model = tiny_model(&dir);

    // Default config wants window 240; the tiny model carries window 32.
    let result = run(&[
        "evaluate",
        "--model",
        model.to_str().unwrap(),
        "--corpus",
        corpus.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(3));
    assert!(
        stderr_text(&result).contains("does not match"),
        "{}",
        stderr_text(&result)
    );

    let report_path = dir.join("metrics.json");
    let scores_path = dir.join("scores.csv");
    let result = run(&[
        "evaluate",
        "--model",
        model.to_str().unwrap(),
        "--corpus",
        corpus.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--baseline",
        "--report",
        report_path.to_str().unwrap(),
        "--scores",
        scores_path.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{}", stderr_text(&result));
    let stdout = stdout_text(&result);
    assert!(stdout.contains("precision"), "missing metrics: {stdout}");
    assert!(stdout.contains("baseline"), "missing baseline block: {stdout}");

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    assert!(report["model"]["f1"].is_number());
    assert!(report["baseline"]["f1"].is_number());

    // One plot row per held-out point, reconstructible components.
    let text = fs::read_to_string(&scores_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "series,index,timestamp,value,trend,seasonal,remainder,score,is_anomaly,label"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 150, "expected one row per test point");
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        let value: f64 = fields[3].parse().unwrap();
        let trend: f64 = fields[4].parse().unwrap();
        let seasonal: f64 = fields[5].parse().unwrap();
        let remainder: f64 = fields[6].parse().unwrap();
        assert!((value - (trend + seasonal + remainder)).abs() < 1e-9);
        let score: f64 = fields[7].parse().unwrap();
        assert!((0.0..=1.0).contains(&score));
    }
}

#[test]
fn stream_scores_lines_and_rejects_malformed_input() {
    let dir = scratch("stream");
    let config = tiny_config(&dir);
    let model = tiny_model(&dir);
    let history = dir.join("history.csv");
    write_seasonal_csv(&history, 128, 16, &[]);

    // Empty input: clean exit, no output.
    let mut child = rtad()
        .args([
            "stream",
            "--model",
            model.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
        ])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    drop(child.stdin.take());
    let output = child.wait_with_output().unwrap();
    assert!(output.status.success(), "{}", stderr_text(&output));
    assert!(stdout_text(&output).is_empty());

    // Valid values: one verdict line per input line, in order.
    let mut child = rtad()
        .args([
            "stream",
            "--model",
            model.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--history",
            history.to_str().unwrap(),
            "--q",
            "3",
        ])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    {
        let stdin = child.stdin.as_mut().unwrap();
        for t in 0..10 {
            writeln!(stdin, "{}", (t as f64 * 0.39).sin()).unwrap();
        }
    }
    drop(child.stdin.take());
    let output = child.wait_with_output().unwrap();
    assert!(output.status.success(), "{}", stderr_text(&output));
    let stdout = stdout_text(&output);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 10);
    for (i, line) in lines.iter().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 3);
        assert_eq!(fields[0].parse::<u64>().unwrap(), i as u64);
        let score: f64 = fields[1].parse().unwrap();
        assert!((0.0..=1.0).contains(&score));
        assert!(fields[2] == "true" || fields[2] == "false");
    }

    // A malformed line fails with its line number.
    let mut child = rtad()
        .args([
            "stream",
            "--model",
            model.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
        ])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    {
        let stdin = child.stdin.as_mut().unwrap();
        write!(stdin, "1.0\n2.0\nbanana\n4.0\n").unwrap();
    }
    drop(child.stdin.take());
    let output = child.wait_with_output().unwrap();
    assert_eq!(output.status.code(), Some(3));
    let err = stderr_text(&output);
    assert!(err.contains("row 3") || err.contains("line 3"), "{err}");
}
