use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_noise-loom"));
    cmd.env_remove("NOISE_LOOM_WORKERS");
    cmd
}

fn models() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/models")
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn ok(cmd: &mut Command) -> String {
    let out = run(cmd);
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn sample(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let path = dir.join(name);
    let mut cmd = bin();
    cmd.args(["sample", "--gamma", "1", "--omega", "2", "--dt", "0.2", "--steps", "50", "--ensemble", "1000", "--seed", "42", "-o"])
        .arg(&path)
        .args(extra);
    ok(&mut cmd);
    path
}

fn data_lines(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    text.split_once('\n').unwrap().1.to_string()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn sampling_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = sample(dir.path(), "a.traj", &[]);
    let b = sample(dir.path(), "b.traj", &[]);
    assert_eq!(data_lines(&a), data_lines(&b));
    let header = fs::read_to_string(&a).unwrap();
    let header = header.lines().next().unwrap();
    assert!(header.starts_with("{\"format\":\"traj-ens/1\",\"dt\":0.20000000000000001,\"k\":50,\"n\":1000,"));
    assert!(header.contains("\"master_seed\":42"));
    assert_eq!(data_lines(&a).lines().count(), 1000);

    let single = dir.path().join("one.traj");
    ok(bin()
        .args(["sample", "--gamma", "1", "--omega", "2", "--dt", "0.2", "--steps", "5", "--ensemble", "1", "--seed", "3", "-o"])
        .arg(&single));
    assert_eq!(data_lines(&single).lines().count(), 1);
}

#[test]
fn worker_count_does_not_change_the_data() {
    let dir = TempDir::new().unwrap();
    let one = dir.path().join("one.traj");
    let four = dir.path().join("four.traj");
    ok(bin()
        .env("NOISE_LOOM_WORKERS", "1")
        .args(["sample", "--gamma", "1", "--omega", "2", "--dt", "0.2", "--steps", "20", "--ensemble", "300", "--seed", "9", "-o"])
        .arg(&one));
    // the environment variable overrides the flag
    ok(bin()
        .env("NOISE_LOOM_WORKERS", "4")
        .args(["--workers", "1", "sample", "--gamma", "1", "--omega", "2", "--dt", "0.2", "--steps", "20", "--ensemble", "300", "--seed", "9", "-o"])
        .arg(&four));
    assert_eq!(data_lines(&one), data_lines(&four));

    let bad = run(bin().env("NOISE_LOOM_WORKERS", "zero").args(["exact", "--gamma", "1", "--omega", "2", "--tmax", "1"]));
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("NOISE_LOOM_WORKERS"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("cfg.traj");
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        format!(
            r#"{{"gamma": 1, "omega": 2, "dt": 0.2, "steps": 10, "ensemble": 20, "seed": 5, "output": {:?}}}"#,
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    ok(bin().arg("--config").arg(&cfg).args(["sample", "--seed", "6"]));
    let header = fs::read_to_string(&out).unwrap();
    assert!(header.contains("\"master_seed\":6"));
    assert!(header.contains("\"k\":10,\"n\":20"));
}

#[test]
fn missing_seed_is_an_error() {
    let dir = TempDir::new().unwrap();
    let out = run(bin()
        .args(["sample", "--gamma", "1", "--omega", "2", "--dt", "0.2", "--steps", "5", "--ensemble", "3", "-o"])
        .arg(dir.path().join("x.traj")));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn evolve_reports_coherence_with_reference() {
    let dir = TempDir::new().unwrap();
    let ens = sample(dir.path(), "ens.traj", &[]);
    let report = dir.path().join("pc.csv");
    ok(bin()
        .args(["evolve", "--gamma", "1", "--omega", "2", "-i"])
        .arg(&ens)
        .arg("-o")
        .arg(&report));
    let text = fs::read_to_string(&report).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,re,im,abs,exact,abs_err");
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 51);
    assert_eq!(rows[0][1], "0.5");
    let worst = rows.iter().map(|r| r[5].parse::<f64>().unwrap()).fold(0.0, f64::max);
    assert!(worst < 0.05, "max deviation {worst}");

    // without a model there is no reference column; output goes to stdout
    let plain = ok(bin().args(["evolve", "--integrator", "rk4", "-i"]).arg(&ens));
    let rows = csv_rows(&plain);
    assert_eq!(rows.len(), 25);
    assert!(rows.iter().all(|r| r[4].is_empty() && r[5].is_empty()));

    let wrong = run(bin().args(["evolve", "--gamma", "1", "--omega", "3", "-i"]).arg(&ens));
    assert_eq!(wrong.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&wrong.stderr).contains("fingerprint"));
}

#[test]
fn integrators_agree_on_smooth_noise() {
    let dir = TempDir::new().unwrap();
    let ens = dir.path().join("const.traj");
    let row = vec!["1"; 50].join(",");
    let mut text = String::from(
        "{\"format\":\"traj-ens/1\",\"dt\":0.2,\"k\":50,\"n\":2,\"omega_values\":[-1,1],\"model_fingerprint\":\"none\",\"master_seed\":0,\"created_at\":\"x\"}\n",
    );
    text.push_str(&format!("{row}\n{}\n", vec!["0"; 50].join(",")));
    fs::write(&ens, text).unwrap();
    let pc = csv_rows(&ok(bin().args(["evolve", "-i"]).arg(&ens)));
    let rk = csv_rows(&ok(bin().args(["evolve", "--integrator", "rk4", "-i"]).arg(&ens)));
    for (n, r) in rk.iter().enumerate() {
        let p = &pc[2 * n];
        assert_eq!(r[0], p[0]);
        for c in 1..3 {
            let d = (r[c].parse::<f64>().unwrap() - p[c].parse::<f64>().unwrap()).abs();
            assert!(d <= 5e-3, "t = {}: {d}", r[0]);
        }
    }
}

#[test]
fn bad_ensemble_files_exit_with_code_2() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("empty.traj");
    fs::write(&empty, "").unwrap();
    let out = run(bin().args(["evolve", "-i"]).arg(&empty));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("format error"));

    let missing = run(bin().args(["stats", "-i"]).arg(dir.path().join("nope.traj")));
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn stats_outputs() {
    let dir = TempDir::new().unwrap();
    let ens = sample(dir.path(), "ens.traj", &[]);
    ok(bin().args(["stats", "-i"]).arg(&ens).arg("--out-dir").arg(dir.path()));
    let acf = csv_rows(&fs::read_to_string(dir.path().join("acf.csv")).unwrap());
    assert_eq!(acf.len(), 11);
    let c0: f64 = acf[0][1].parse().unwrap();
    let c1: f64 = acf[1][1].parse().unwrap();
    assert!((c1 / c0 - (-0.4f64).exp()).abs() < 0.03);

    let psd = csv_rows(&fs::read_to_string(dir.path().join("psd.csv")).unwrap());
    let n = psd.len();
    for i in 0..n {
        let (a, b) = (&psd[i], &psd[n - 1 - i]);
        assert_eq!(a[0].trim_start_matches('-'), b[0].trim_start_matches('-'));
        let (sa, sb): (f64, f64) = (a[1].parse().unwrap(), b[1].parse().unwrap());
        assert!((sa - sb).abs() <= 1e-12 * sa.abs().max(1.0));
    }

    let flat = dir.path().join("flat.traj");
    let row = ["1"; 8].join(",");
    fs::write(
        &flat,
        format!(
            "{{\"format\":\"traj-ens/1\",\"dt\":0.2,\"k\":8,\"n\":3,\"omega_values\":[-1,1],\"model_fingerprint\":\"none\",\"master_seed\":0,\"created_at\":\"x\"}}\n{row}\n{row}\n{row}\n"
        ),
    )
    .unwrap();
    let out_dir = dir.path().join("flat");
    fs::create_dir(&out_dir).unwrap();
    ok(bin().args(["stats", "-i"]).arg(&flat).arg("--out-dir").arg(&out_dir));
    let acf = csv_rows(&fs::read_to_string(out_dir.join("acf.csv")).unwrap());
    assert!(acf.iter().all(|r| r[1].parse::<f64>().unwrap() == 0.0));
}

#[test]
fn validate_prints_json_witnesses() {
    let parse = |text: &str| -> serde_json::Value { serde_json::from_str(text).unwrap() };
    let commuting = parse(&ok(bin()
        .args(["validate", "-k", "3", "--dt", "0.5", "--model"])
        .arg(models().join("commuting.json"))));
    for row in commuting["results"].as_array().unwrap() {
        assert!(row["offdiag_mass"].as_f64().unwrap() < 1e-10);
        assert!(row["kolmogorov_residual"].as_f64().unwrap() < 1e-10);
    }
    let demo = parse(&ok(bin()
        .args(["validate", "-k", "2", "--dt", "0.5", "--t0", "0.5", "--model"])
        .arg(models().join("noncommuting.json"))));
    let rows = demo["results"].as_array().unwrap();
    assert_eq!(rows[0]["offdiag_mass"].as_f64().unwrap(), 0.0);
    assert!(rows[1]["offdiag_mass"].as_f64().unwrap() > 1e-3);

    let rtn = run(bin().args(["validate", "-k", "2", "--dt", "0.5", "--model"]).arg(models().join("rtn.json")));
    assert_eq!(rtn.status.code(), Some(1));
}

#[test]
fn exact_table() {
    let text = ok(bin().args(["exact", "--gamma", "1", "--omega", "2", "--tmax", "2", "--points", "3"]));
    let rows = csv_rows(&text);
    assert_eq!(rows[0], vec!["0", "0.5"]);
    assert!((rows[1][1].parse::<f64>().unwrap() - 0.367879441171442).abs() < 1e-12);
    let flat = ok(bin().args(["exact", "--gamma", "1", "--omega", "0", "--tmax", "5", "--points", "4"]));
    assert!(csv_rows(&flat).iter().all(|r| (r[1].parse::<f64>().unwrap() - 0.5).abs() < 1e-12));
}
