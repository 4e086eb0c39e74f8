use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use risfair_cli::config::{ConfigError, SweepAxis};
use risfair_cli::ExperimentConfig;

const SMALL: &str = r#"
schema_version = 1

[system]
users = 2
antennas = 4
ris_elements = 4

[run]
schemes = ["S2", "S5", "S6"]
trials = 3
seed = 11

[sweep]
axis = "N"
values = [4, 8]
"#;

const SMALL_VALIDATE: &str = r#"
schema_version = 1

[system]
users = 2
antennas = 4
ris_elements = 8

[run]
schemes = ["S2"]
trials = 1
seed = 5

[validate]
trials = 10
dims = [[8, 16, 32], [16, 32, 64]]
gradient_instances = 3
resolvent_dims = [8, 16, 16]
resolvent_trials = 4
resolvent_tol = 0.5
"#;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_risfair"));
    for var in [
        "RISFAIR_SEED",
        "RISFAIR_TRIALS",
        "RISFAIR_OUT",
        "RISFAIR_THREADS",
        "RISFAIR_NO_TIMING",
    ] {
        cmd.env_remove(var);
    }
    cmd
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str], cfg: &Path) -> Output {
    bin().args(args).arg(cfg).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn parse(body: &str) -> Result<ExperimentConfig, ConfigError> {
    ExperimentConfig::from_str_named(body, "test.toml")
}

#[test]
fn presets_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets");
    let mut names: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    names.sort();
    assert!(names.len() >= 5);
    for p in &names {
        ExperimentConfig::from_path(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
    let k = ExperimentConfig::from_path(&dir.join("fig_minsinr_vs_K.toml")).unwrap();
    let sweep = k.sweep.as_ref().unwrap();
    assert_eq!(sweep.axis, SweepAxis::Users);
    assert_eq!(sweep.values, vec![2.0, 4.0, 6.0, 10.0]);
    let at6 = k.system_at(Some(6.0));
    assert_eq!((at6.users, at6.antennas, at6.ris_elements), (6, 12, 24));
    let p = ExperimentConfig::from_path(&dir.join("fig_sinr_vs_pmax.toml")).unwrap();
    let watts = &p.sweep.as_ref().unwrap().values;
    assert!((watts[2] - 0.1).abs() < 1e-12, "20 dBm is 100 mW");
}

#[test]
fn empty_scheme_list_is_rejected_with_a_line() {
    let body = SMALL.replace(r#"schemes = ["S2", "S5", "S6"]"#, "schemes = []");
    let err = parse(&body).unwrap_err().to_string();
    assert!(err.contains("test.toml:10: run.schemes"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "empty.toml", &body);
    let out = run(&["simulate"], &cfg);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("run.schemes"));
}

#[test]
fn parse_errors_point_at_the_line() {
    let err = parse(&SMALL.replace("users = 2", "users = 2\nbogus = 1"))
        .unwrap_err()
        .to_string();
    assert!(err.contains("line 6"), "{err}");
    assert!(err.contains("bogus"), "{err}");

    let err = parse(&SMALL.replace("[4, 8]", "[8, 4]")).unwrap_err().to_string();
    assert!(err.contains(":16: sweep.values"), "{err}");
    assert!(err.contains("strictly increasing"), "{err}");

    let err = parse(&SMALL.replace("[4, 8]", "[4, 4]")).unwrap_err().to_string();
    assert!(err.contains("strictly increasing"), "{err}");

    let err = parse(&SMALL.replace(r#""S6""#, r#""S9""#)).unwrap_err().to_string();
    assert!(err.contains("unknown scheme"), "{err}");

    let err = parse(&SMALL.replace("schema_version = 1", "schema_version = 2"))
        .unwrap_err()
        .to_string();
    assert!(err.contains("schema_version"), "{err}");

    let err = parse(&SMALL.replace("antennas = 4", "antennas = 4\nantennas_per_user = 2"))
        .unwrap_err()
        .to_string();
    assert!(err.contains("conflicts"), "{err}");

    let err = parse(&SMALL.replace("users = 2", "users = 2\np_max_w = 0.5\np_max_dbm = 27"))
        .unwrap_err()
        .to_string();
    assert!(err.contains("p_max_dbm"), "{err}");

    let err = parse(&SMALL.replace("antennas = 4", "antennas = 0"))
        .unwrap_err()
        .to_string();
    assert!(err.contains("system"), "{err}");
}

#[test]
fn exposure_override_needs_one_entry_per_user() {
    let ok = format!("{SMALL}\n[exposure]\nsar_ref = [0.0063, 0.0063]\nsar_max = [0.001, 0.004]\n");
    let body = ok
        .replace("axis = \"N\"", "axis = \"p_max\"")
        .replace("[4, 8]", "[0.1, 0.5]");
    let cfg = parse(&body).unwrap();
    assert_eq!(cfg.exposure_at(Some(0.1)).unwrap().p_max_common, 0.1);
    let bad = body.replace("sar_max = [0.001, 0.004]", "sar_max = [0.001]");
    assert!(parse(&bad).unwrap_err().to_string().contains("exposure"));
    let sar_sweep = ok
        .replace("axis = \"N\"", "axis = \"sar_max\"")
        .replace("[4, 8]", "[0.001, 0.002]");
    assert!(parse(&sar_sweep).is_err());
}

#[test]
fn simulate_is_byte_identical_without_timing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    let o = run(&["--no-timing", "--out", a.to_str().unwrap(), "simulate"], &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&["--no-timing", "--out", b.to_str().unwrap(), "sweep"], &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(
        &[
            "--no-timing",
            "--threads",
            "1",
            "--out",
            c.to_str().unwrap(),
            "simulate",
        ],
        &cfg,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let a = std::fs::read(&a).unwrap();
    assert_eq!(a, std::fs::read(&b).unwrap());
    assert_eq!(a, std::fs::read(&c).unwrap());

    let text = String::from_utf8(a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 2 * 3);
    assert!(lines[0].starts_with("scheme,sweep_axis,sweep_value,users"));
    assert!(lines[1].starts_with("S2,N,4,2,4,4,3,0,11,"), "{}", lines[1]);
    assert!(lines[6].starts_with("S6,N,8,2,4,8,3,0,11,"), "{}", lines[6]);
    assert!(lines[1].ends_with(",NA,NA,NA,"), "{}", lines[1]);
}

#[test]
fn seed_and_trials_follow_flags_then_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", &SMALL.replace("[4, 8]", "[4]"));
    let o = bin()
        .env("RISFAIR_TRIALS", "2")
        .env("RISFAIR_SEED", "99")
        .args(["--no-timing", "simulate"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(
        text.lines().nth(1).unwrap().starts_with("S2,N,4,2,4,4,2,0,99,"),
        "{text}"
    );

    let o = bin()
        .env("RISFAIR_TRIALS", "2")
        .args(["--no-timing", "--trials", "1", "simulate"])
        .arg(&cfg)
        .output()
        .unwrap();
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(
        text.lines().nth(1).unwrap().starts_with("S2,N,4,2,4,4,1,0,11,"),
        "{text}"
    );
}

#[test]
fn runtime_report_compares_s2_with_s1() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL
        .replace(r#"["S2", "S5", "S6"]"#, r#"["S1", "S2"]"#)
        .replace("[4, 8]", "[4]");
    let cfg = write(dir.path(), "rt.toml", &body);
    let o = run(&["--trials", "2", "simulate"], &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("runtime K=2 M=4 N=4 (N=4): S2"), "{err}");
    assert!(err.contains("S2 faster:"), "{err}");
}

#[test]
fn sweep_requires_a_sweep_section() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL.split("[sweep]").next().unwrap().to_string();
    let cfg = write(dir.path(), "nosweep.toml", &body);
    let o = run(&["sweep"], &cfg);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["--no-timing", "simulate"], &cfg);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(
        text.lines().nth(1).unwrap().starts_with("S2,none,,2,4,4,3,0,11,"),
        "{text}"
    );
}

#[test]
fn validate_passes_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "v.toml", SMALL_VALIDATE);
    let a = run(&["validate"], &cfg);
    let b = run(&["--threads", "1", "validate"], &cfg);
    let text = String::from_utf8(a.stdout.clone()).unwrap();
    for name in [
        "closed_form_dbar",
        "closed_form_taubar",
        "closed_form_taubar_identity",
        "resolvent_equivalent",
        "quadratic_form_concentration",
        "gradient_oracle",
    ] {
        assert!(text.contains(&format!("PASS {name} ")), "{name}:\n{text}");
    }
    assert!(text.contains("dbar_trend (8,16,32)="), "{text}");
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn injected_gradient_error_fails_the_named_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "v.toml", SMALL_VALIDATE);
    let o = run(&["validate", "--inject-gradient-error", "0.01"], &cfg);
    assert_eq!(o.status.code(), Some(1));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("FAIL gradient_oracle "), "{text}");
    assert!(text.contains("PASS closed_form_dbar "), "{text}");

    let o = run(&["grad-check"], &cfg);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let o = run(&["grad-check", "--inject-gradient-error", "0.01"], &cfg);
    assert_eq!(o.status.code(), Some(1));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("FAIL gradient_instance_0 "), "{text}");
}

#[test]
fn thresholds_are_reported_when_configured() {
    let body = SMALL_VALIDATE.replace(
        "trials = 10",
        "trials = 10\ndbar_max_error = 1e-9\ntaubar_max_error = 1e9",
    );
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "v.toml", &body);
    let o = run(&["validate"], &cfg);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("FAIL dbar_limit "), "{text}");
    assert!(text.contains("PASS taubar_limit "), "{text}");
    assert_eq!(o.status.code(), Some(1));
}
