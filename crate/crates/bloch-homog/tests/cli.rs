//! End-to-end runs of the binary: exit codes, diagnostics, determinism, cache.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bloch_homog::experiments::RunManifest;
use bloch_homog::io::parse_rate_csv;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bloch-homog"));
    c.env_remove("BLOCH_HOMOG_CACHE");
    c
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("bh-cli-{name}-{}", std::process::id()));
    std::fs::remove_dir_all(&d).ok();
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin().args(args).arg("--config").arg(config).arg("--out").arg(out).output().unwrap()
}

fn manifest(out: &Path, study: &str) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(out.join(format!("manifest-{study}.json"))).unwrap()).unwrap()
}

const ISO: &str = "k = 1\nseed = 5\n[medium]\nkind = \"isotropic\"\nlambda = 1.0\nmu = 1.0\n[eps]\ngrid_n = 2\nray_min_exp = 3\n";

const LAMINATE: &str = r#"
k = 2
seed = 11
[medium]
kind = "laminate"
a = { lambda = 1.0, mu = 1.0 }
b = { lambda = 2.0, mu = 2.0 }
fraction = 0.5
axis = 1
resolution = 8
[korn]
samples = 10000
ks = [2]
"#;

#[test]
fn cell_on_homogeneous_medium_records_exact_tensor() {
    let d = scratch("cell");
    let cfg = write_config(&d, ISO);
    let o = run(&["cell"], &cfg, &d.join("out"));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&d.join("out"), "cell");
    assert!(m.pass);
    assert_eq!(m.k, 1);
    assert_eq!(m.seed, 5);
    let exact = m.checks.iter().find(|c| c.name == "cell.homogeneous_exact").unwrap();
    assert!(exact.pass && exact.value <= 1e-12);
    assert!(d.join("out/homogenized.json").is_file());
    std::fs::remove_dir_all(d).ok();
}

#[test]
fn missing_k_exits_2_naming_the_field() {
    let d = scratch("nok");
    let cfg = write_config(&d, &ISO.replace("k = 1\n", ""));
    let o = run(&["cell"], &cfg, &d.join("out"));
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("missing field `k`"), "{err}");
    std::fs::remove_dir_all(d).ok();
}

#[test]
fn bad_value_reports_line() {
    let d = scratch("badline");
    let cfg = write_config(&d, &ISO.replace("seed = 5", "seed = \"five\""));
    let o = run(&["cell"], &cfg, &d.join("out"));
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2") && err.contains("seed"), "{err}");
    std::fs::remove_dir_all(d).ok();
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(bin().arg("nonsense").output().unwrap().status.code(), Some(2));
    assert_eq!(bin().arg("cell").output().unwrap().status.code(), Some(2));
}

#[test]
fn failed_check_exits_1() {
    let d = scratch("fail");
    // an unreachable tolerance makes the agreement check fail
    let cfg = write_config(&d, &format!("{ISO}[two_scale]\ntol = 0.0\nfields = 2\n"));
    let o = run(&["two-scale"], &cfg, &d.join("out"));
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(!manifest(&d.join("out"), "two-scale").pass);
    std::fs::remove_dir_all(d).ok();
}

#[test]
fn corrupt_medium_file_exits_3() {
    let d = scratch("corrupt");
    std::fs::write(d.join("bad.bhg"), b"BHG0 not a coefficient file").unwrap();
    let cfg = write_config(&d, "k = 1\n[medium]\nkind = \"file\"\npath = \"bad.bhg\"\n");
    let o = run(&["cell"], &cfg, &d.join("out"));
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::remove_dir_all(d).ok();
}

#[test]
fn fiber_rates_on_laminate_pass_and_rerun_is_byte_identical() {
    let d = scratch("rates");
    let cfg = write_config(&d, LAMINATE);
    let a = run(&["fiber-rates"], &cfg, &d.join("a"));
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stdout));
    let b = bin()
        .args(["fiber-rates", "--jobs", "3", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(d.join("b"))
        .output()
        .unwrap();
    assert_eq!(b.status.code(), Some(0));
    let m = manifest(&d.join("a"), "fiber-rates");
    assert!(m.slopes["fiber.z0.l2h1"] >= 0.9 && m.slopes["fiber.z0.withcorr"] >= 1.9);
    assert_eq!(manifest(&d.join("b"), "fiber-rates").jobs, 3);
    for i in 0..5 {
        let name = format!("fiber-rates-z{i}.csv");
        let (x, y) = (std::fs::read(d.join("a").join(&name)).unwrap(), std::fs::read(d.join("b").join(&name)).unwrap());
        assert_eq!(x, y, "{name} differs");
        let rows = parse_rate_csv(&String::from_utf8(x).unwrap()).unwrap();
        assert_eq!(rows.len(), 5);
    }
    std::fs::remove_dir_all(d).ok();
}

#[test]
fn seed_and_k_overrides_are_recorded() {
    let d = scratch("override");
    let cfg = write_config(&d, LAMINATE);
    let o = bin()
        .args(["bloch", "--seed", "99", "--k", "1", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(d.join("out"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&d.join("out"), "bloch");
    assert_eq!((m.seed, m.k), (99, 1));
    let spectra = std::fs::read_to_string(d.join("out/spectra.csv")).unwrap();
    assert!(spectra.starts_with("chi1,chi2,chi3,index,eigenvalue\n"));
    std::fs::remove_dir_all(d).ok();
}

#[test]
fn warm_cache_matches_cold_run() {
    let d = scratch("cache");
    let cfg = write_config(&d, LAMINATE);
    let cache = d.join("cache");
    let go = |out: &str| {
        let o = bin()
            .env("BLOCH_HOMOG_CACHE", &cache)
            .args(["cell", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(d.join(out))
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        manifest(&d.join(out), "cell")
    };
    let cold = go("cold");
    let warm = go("warm");
    assert_eq!(cold.cache_hits, 0);
    assert!(warm.cache_hits >= 1);
    assert!(std::fs::read_dir(&cache).unwrap().count() >= 1);
    for f in ["homogenized.json", "factorization.csv"] {
        assert_eq!(std::fs::read(d.join("cold").join(f)).unwrap(), std::fs::read(d.join("warm").join(f)).unwrap());
    }
    std::fs::remove_dir_all(d).ok();
}
