use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn gedanken(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gedanken"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("GEDANKEN_WORKERS")
        .output()
        .expect("binary runs")
}

fn write_manifest(dir: &TempDir, text: &str) -> String {
    let path = dir.path().join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap()
}

#[test]
fn expectation_reports_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args = [
        "--experiment",
        "1",
        "--model",
        "quantum",
        "--mode",
        "expectation",
        "--seed",
        "7",
    ];
    assert!(gedanken(&args, &a).status.success());
    assert!(gedanken(&args, &b).status.success());
    assert_eq!(
        fs::read(a.join("report.json")).unwrap(),
        fs::read(b.join("report.json")).unwrap()
    );
    let vis = read(&a.join("visibility.csv"));
    let mut lines = vis.lines();
    assert_eq!(lines.next(), Some("tau_seconds,visibility,p_click"));
    assert_eq!(lines.count(), 65);
    assert!(vis.ends_with('\n'));
    assert_eq!(read(&a.join("clicks.csv")), "trial,channel,t_seconds\n");
    let report: serde_json::Value = serde_json::from_str(&read(&a.join("report.json"))).unwrap();
    assert_eq!(report["config"]["seed"], 7);
    assert_eq!(report["results"]["experiment"], "1");
}

#[test]
fn transformer_model_is_identified() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("t");
    let o = gedanken(
        &[
            "--experiment",
            "3",
            "--model",
            "transformer",
            "--trials",
            "10000",
            "--mode",
            "monte-carlo",
        ],
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&read(&out.join("report.json"))).unwrap();
    assert_eq!(
        report["results"]["discrimination"]["verdict"],
        "transformer_like"
    );
    let clicks = read(&out.join("clicks.csv"));
    assert_eq!(clicks.lines().count(), 10_001);
    let first = clicks.lines().nth(1).unwrap();
    assert!(first.starts_with("0,"), "{first}");
}

#[test]
fn oversized_dispersion_exits_with_guard_code() {
    let tmp = TempDir::new().unwrap();
    let manifest = write_manifest(
        &tmp,
        r#"
schema_version = 1
experiment = 3

[[elements]]
kind = "fiber"
base_delay_s = 0.0
dispersion_s_per_hz = 5e-13

[[elements]]
kind = "spectrometer"
n_channels = 9
spacing_hz = 4e6
channel_hwhm_hz = 1e6

[[elements]]
kind = "detector"
"#,
    );
    let o = gedanken(&["--config", &manifest], &tmp.path().join("o"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("window overflow"));
}

#[test]
fn config_errors_exit_with_one() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");

    let o = gedanken(&["--config", "/nonexistent/run.toml"], &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot read config"));

    let unknown = write_manifest(
        &tmp,
        "schema_version = 1\nexperiment = 1\ncolour = \"blue\"\n",
    );
    assert_eq!(
        gedanken(&["--config", &unknown], &out).status.code(),
        Some(1)
    );

    let version = write_manifest(&tmp, "schema_version = 9\nexperiment = 1\n");
    let o = gedanken(&["--config", &version], &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema_version"));

    assert_eq!(
        gedanken(&["--experiment", "4"], &out).status.code(),
        Some(1)
    );
    assert_eq!(
        gedanken(&["--experiment", "1", "--model", "wave"], &out)
            .status
            .code(),
        Some(1)
    );
    assert_eq!(gedanken(&[], &out).status.code(), Some(1));
}

#[test]
fn unwritable_output_exits_with_one() {
    let tmp = TempDir::new().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = gedanken(&["--experiment", "1"], &blocker.join("sub"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn flags_override_manifest() {
    let tmp = TempDir::new().unwrap();
    let manifest = write_manifest(
        &tmp,
        r#"
schema_version = 1
experiment = "1"
model = "hv"
mode = "monte-carlo"
trials = 500
seed = 1

[source]
nu0_hz = 5e14
tau_r_s = 1e-8
"#,
    );
    let out = tmp.path().join("o");
    let o = gedanken(
        &["--config", &manifest, "--seed", "2", "--model", "quantum"],
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&read(&out.join("report.json"))).unwrap();
    assert_eq!(report["config"]["seed"], 2);
    assert_eq!(report["config"]["ontology"], "quantum");
    assert_eq!(report["config"]["mode"], "monte_carlo");
    assert_eq!(report["config"]["trials"], 500);
    assert_eq!(read(&out.join("clicks.csv")).lines().count(), 501);
}

#[test]
fn click_streams_ignore_worker_count() {
    let tmp = TempDir::new().unwrap();
    let run = |workers: &str, name: &str| {
        let out = tmp.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_gedanken"))
            .args([
                "--experiment",
                "3",
                "--mode",
                "monte-carlo",
                "--trials",
                "3000",
                "--seed",
                "11",
            ])
            .arg("--out")
            .arg(&out)
            .env("GEDANKEN_WORKERS", workers)
            .output()
            .unwrap();
        assert!(o.status.success());
        (
            fs::read(out.join("clicks.csv")).unwrap(),
            fs::read(out.join("report.json")).unwrap(),
        )
    };
    let one = run("1", "w1");
    let many = run("4", "w4");
    assert_eq!(one, many);
}

#[test]
fn delayed_choice_labels_both_arrangements() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("d");
    let o = gedanken(
        &[
            "--experiment",
            "delayed",
            "--mode",
            "monte-carlo",
            "--trials",
            "200",
        ],
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let clicks = read(&out.join("clicks.csv"));
    assert_eq!(
        clicks.lines().filter(|l| l.contains(",early:")).count(),
        200
    );
    assert_eq!(clicks.lines().filter(|l| l.contains(",late:")).count(), 200);
}

#[test]
fn filtered_run_writes_channel_scans() {
    let tmp = TempDir::new().unwrap();
    let manifest = write_manifest(
        &tmp,
        r#"
schema_version = 1
experiment = 2

[[elements]]
kind = "spectrometer"
centers_hz = [-1e6, 0.0, 1e6]
channel_hwhm_hz = 1e6
shape = "rectangular"
"#,
    );
    let out = tmp.path().join("o");
    let o = gedanken(&["--config", &manifest], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for k in 0..3 {
        let scan = read(&out.join(format!("visibility_channel_{k}.csv")));
        assert!(scan.starts_with("tau_seconds,visibility,p_click\n"));
    }
}

#[test]
fn shipped_manifests_resolve() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let args = gedanken_cli::Args {
            config: Some(path.clone()),
            ..Default::default()
        };
        let inv =
            gedanken_cli::resolve(&args).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(!inv.config.elements.is_empty() || path.ends_with("source.toml"));
        seen += 1;
    }
    assert_eq!(seen, 4);
}
