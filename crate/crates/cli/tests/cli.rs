use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wavescatter::evolve::StopCriterion;
use wavescatter::harness::CSV_HEADERS;
use wavescatter::{RunConfig, Scenario, SweepAxis, SweepSpec, Table};

fn wavescatter(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavescatter"))
        .args(args)
        .env("WAVESCATTER_OUT_DIR", out_dir)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// A short run: 25 wavelengths at 40 points per wavelength.
fn small_config(e_over_v0: f64) -> RunConfig {
    let mut scenario = Scenario::step(5.0, e_over_v0, 25.0);
    scenario.points_per_wavelength = 40.0;
    scenario.to_config().unwrap()
}

fn save(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn docs(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs").join(name)
}

#[test]
fn analytic_table_goes_to_the_default_directory() {
    let dir = tempfile::tempdir().unwrap();
    let output = wavescatter(&["analytic", "--ratios", "0.5,2,4"], dir.path());
    assert!(output.status.success(), "{}", stderr(&output));
    let text = fs::read_to_string(dir.path().join("analytic.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADERS.join(","));
    let table = Table::from_csv(&text).unwrap();
    assert_eq!(table.rows.len(), 3);
    assert_eq!(table.rows[0].r_analytic, Some(1.0));
    assert!((table.rows[1].r_analytic.unwrap() - 0.029437251522859414).abs() < 1e-15);
    assert!(!text.contains('\r'));
}

#[test]
fn formats_and_explicit_paths() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("nested/r.json");
    let output = wavescatter(
        &["analytic", "--format", "json", "--out", json.to_str().unwrap()],
        dir.path(),
    );
    assert!(output.status.success(), "{}", stderr(&output));
    let table = Table::from_json(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(table.rows.len(), 12);

    let output = wavescatter(&["emit", json.to_str().unwrap(), "--format", "plot"], dir.path());
    assert!(output.status.success(), "{}", stderr(&output));
    let script = fs::read_to_string(dir.path().join("emit.gp")).unwrap();
    assert!(script.contains("'emit.csv'"));
    assert_eq!(Table::load(&dir.path().join("emit.csv")).unwrap(), table);
}

#[test]
fn config_file_wins_over_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(2.0);
    let path = save(dir.path(), "run.toml", &config.to_toml().unwrap());
    let output = wavescatter(
        &["run", "--config", path.to_str().unwrap(), "--width", "60", "--scheme", "split"],
        dir.path(),
    );
    assert!(output.status.success(), "{}", stderr(&output));
    let log = stderr(&output);
    assert!(log.contains("--width ignored"), "{log}");
    assert!(log.contains("--scheme ignored"), "{log}");
    let table = Table::load(&dir.path().join("run.csv")).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert_eq!(table.rows[0].w_over_lambda, Some(25.0));
    assert!((table.rows[0].p_left.unwrap() - 0.0294).abs() < 0.01);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains(&config.fingerprint()), "{stdout}");
}

#[test]
fn exit_codes_follow_the_error_category() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.toml");
    let output = wavescatter(&["run", "--config", missing.to_str().unwrap()], dir.path());
    assert_eq!(output.status.code(), Some(5), "{}", stderr(&output));

    let garbled = save(dir.path(), "bad.toml", "record_every = \"often\"\n");
    let output = wavescatter(&["run", "--config", garbled.to_str().unwrap()], dir.path());
    assert_eq!(output.status.code(), Some(3), "{}", stderr(&output));

    let text = small_config(2.0).to_toml().unwrap() + "\n[extra]\nkey = 1\n";
    let unknown = save(dir.path(), "unknown.toml", &text);
    let output = wavescatter(&["run", "--config", unknown.to_str().unwrap()], dir.path());
    assert_eq!(output.status.code(), Some(3), "{}", stderr(&output));

    // Running far past the time the grid was sized for pushes the packet
    // into the wall.
    let mut overrun = small_config(2.0);
    overrun.stop = StopCriterion::MaxTime { t: 4.0 * overrun.stop.max_time() };
    let path = save(dir.path(), "overrun.toml", &overrun.to_toml().unwrap());
    let output = wavescatter(&["run", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(output.status.code(), Some(4), "{}", stderr(&output));
    assert!(stderr(&output).contains("boundary"));

    let output = wavescatter(&["analytic", "--ratios", "2,-1"], dir.path());
    assert_eq!(output.status.code(), Some(3), "{}", stderr(&output));
}

#[test]
fn failed_sweep_leaves_a_partial_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = small_config(1.2);
    base.stop = StopCriterion::MaxTime { t: base.stop.max_time() };
    let spec = SweepSpec::new(base, SweepAxis::EnergyRatio { values: vec![1.2, 8.0] });
    let path = save(dir.path(), "sweep.toml", &spec.to_toml().unwrap());
    let out = dir.path().join("sweep-out.csv");
    let output = wavescatter(
        &["sweep", "--config", path.to_str().unwrap(), "--jobs", "1", "--out", out.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(4), "{}", stderr(&output));
    assert!(!out.exists());
    let partial = Table::load(&dir.path().join("sweep-out.partial.csv")).unwrap();
    assert_eq!(partial.rows.len(), 1);
    assert_eq!(partial.rows[0].e_over_v0, Some(1.2));
}

#[test]
fn convergence_table_from_a_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SweepSpec::new(small_config(2.0), SweepAxis::PacketWidth { values: vec![35.0, 25.0, 30.0] });
    let path = save(dir.path(), "widths.toml", &spec.to_toml().unwrap());
    let output = wavescatter(
        &["converge", "--config", path.to_str().unwrap(), "--format", "json"],
        dir.path(),
    );
    assert!(output.status.success(), "{}", stderr(&output));
    let table = Table::load(&dir.path().join("converge.json")).unwrap();
    let widths: Vec<f64> = table.rows.iter().map(|r| r.w_over_lambda.unwrap()).collect();
    assert_eq!(widths, [25.0, 30.0, 35.0]);
    assert!(table.rows.iter().all(|r| r.config_fingerprint.is_some()));
}

#[test]
fn shipped_configs_parse() {
    let headline = RunConfig::load(&docs("headline.toml")).unwrap();
    assert_eq!(headline, Scenario::headline().to_config().unwrap());
    let sweep = SweepSpec::load(&docs("sweep.toml")).unwrap();
    assert_eq!(sweep.axis.values(), [0.5, 1.5, 2.0, 4.0, 8.0]);
}
