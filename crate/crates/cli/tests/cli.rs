use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use proptest::prelude::*;
use serde_json::Value;
use sha2::{Digest, Sha256};

use dipolesim::scenarios::{DetuningSpec, GeometrySpec, ScenarioConfig, Table};
use dipolesim_cli::{parse_config, parse_config_str, table_csv, RunManifest};

const SMALL_CHAIN: &str = r#"{
    "preset": "chain_steady",
    "geometry": {"kind": "chain", "n": 4, "d": 0.05},
    "drive": {"rabi": 1.0},
    "detector": {"phi_points": 21}
}"#;

fn simulate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simulate"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn run_writes_tables_summary_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "chain.json", SMALL_CHAIN);
    let out = tmp.path().join("out");
    let res = simulate(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let scan = fs::read_to_string(out.join("angular_scan.csv")).unwrap();
    assert_eq!(scan.lines().next().unwrap(), "phi,j_norm,g2");
    assert_eq!(scan.lines().count(), 22);

    let m = manifest(&out);
    assert_eq!(m.preset, "chain_steady");
    assert_eq!(m.config.detector.phi_points, 21);
    let names: Vec<&str> = m.files.iter().map(|f| f.name.as_str()).collect();
    assert_eq!(names, vec!["angular_scan.csv", "records.csv", "summary.json"]);
    for f in &m.files {
        let bytes = fs::read(out.join(&f.name)).unwrap();
        assert_eq!(f.bytes, bytes.len());
        assert_eq!(f.sha256, hex::encode(Sha256::digest(&bytes)));
    }
    let summary: Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["summary"]["gamma_out"].as_f64().unwrap() > 0.0);
}

#[test]
fn identical_runs_have_identical_checksums() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "dis.json",
        r#"{"preset": "disorder_sweep", "geometry": {"kind": "chain", "n": 3, "d": 0.025},
            "detector": {"phi_points": 21},
            "disorder": {"epsilon": [0.0, 0.1], "n_realizations": 4, "seed": 7}}"#,
    );
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        assert!(simulate(&["run", &cfg, "--out", dir.to_str().unwrap()]).status.success());
    }
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma.files, mb.files);
    assert_eq!(ma.config_sha256, mb.config_sha256);
    assert_eq!(ma.seeds, vec![7]);

    let c = tmp.path().join("c");
    assert!(simulate(&["run", &cfg, "--out", c.to_str().unwrap(), "--seed", "8"]).status.success());
    let mc = manifest(&c);
    assert_eq!(mc.seeds, vec![8]);
    assert_ne!(mc.config_sha256, ma.config_sha256);
    assert_ne!(mc.files, ma.files);
}

#[test]
fn model_comparison_has_paired_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let res = simulate(&["run", "figS5.json", out.to_str().unwrap(), "--set", "geometry.n=3", "--set", "sweep.values=[0.0,0.5]"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = fs::read_to_string(out.join("model_comparison.csv")).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    for q in ["n_ex", "gamma_out"] {
        for suffix in ["truncated", "full", "rel_dev"] {
            assert!(header.contains(&format!("{q}_{suffix}").as_str()), "{header:?}");
        }
    }
    assert!(header.contains(&"p2_truncated") && header.contains(&"p3_full"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn failures_exit_nonzero_with_error_json() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.json", r#"{"preset": "fig7", "geometry": {"kind": "chain", "n": 3, "d": 0.05}}"#);
    let out = tmp.path().join("out");
    let res = simulate(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&res.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "unknown_preset");
    let file: Value = serde_json::from_slice(&fs::read(out.join("error.json")).unwrap()).unwrap();
    assert_eq!(file, err);

    let cfg = write(tmp.path(), "big.json", r#"{"preset": "model_comparison", "geometry": {"kind": "chain", "n": 8, "d": 0.05}}"#);
    let res = simulate(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&res.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "resource_limit");

    let res = simulate(&["run", tmp.path().join("missing.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));

    // a later successful run into the same directory clears the error file
    let cfg = write(tmp.path(), "chain.json", SMALL_CHAIN);
    assert!(simulate(&["run", &cfg, "--out", out.to_str().unwrap()]).status.success());
    assert!(!out.join("error.json").exists());
}

#[test]
fn epsilon_without_seed_is_a_schema_error() {
    let err = parse_config_str(
        r#"{"preset": "disorder_sweep", "geometry": {"kind": "chain", "n": 3, "d": 0.05}, "disorder": {"epsilon": 0.1}}"#,
        &[],
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("disorder.seed"), "{err}");
}

#[test]
fn minimal_config_gets_documented_defaults() {
    let cfg = parse_config_str(r#"{"geometry": {"kind": "chain", "n": 3, "d": 0.05}, "drive": {"rabi": 1}}"#, &[]).unwrap();
    assert_eq!(cfg.detector.delta_phi, 0.01 * std::f64::consts::PI);
    assert_eq!(cfg.detector.r_far, 100.0);
    assert_eq!(cfg.n_max, 2);
}

#[test]
fn shipped_fig2_is_the_thirty_emitter_chain() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/fig2.json");
    let cfg = parse_config(&root).unwrap();
    assert_eq!(cfg.preset, "chain_steady");
    assert_eq!(cfg.geometry.len(), 30);
    assert_eq!(cfg.geometry.spacing(), 0.025);
    assert_eq!(cfg.drive.rabi, 1.0);
    assert!(matches!(cfg.drive.detuning, DetuningSpec::Target(_)));
    // the same file resolves from the embedded copy
    assert_eq!(parse_config(Path::new("no/such/dir/fig2.json")).unwrap(), cfg);
}

#[test]
fn presets_lists_the_shipped_configs() {
    let res = simulate(&["presets"]);
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    for name in ["fig2.json", "figS5.json", "figS6.json"] {
        assert!(text.contains(name));
    }
    let res = simulate(&["presets", "figS4"]);
    let cfg: ScenarioConfig = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(cfg.preset, "tilted_polarization");
}

#[test]
fn thread_count_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "chain.json", SMALL_CHAIN);
    let out = tmp.path().join("out");
    let res = Command::new(env!("CARGO_BIN_EXE_simulate"))
        .args(["run", &cfg, "--out", out.to_str().unwrap()])
        .env("DIPOLESIM_THREADS", "2")
        .output()
        .unwrap();
    assert!(res.status.success());
    assert_eq!(manifest(&out).threads, 2);
    let res = simulate(&["run", &cfg, "--out", out.to_str().unwrap(), "--threads", "3"]);
    assert!(res.status.success());
    assert_eq!(manifest(&out).threads, 3);
}

fn parse_csv(bytes: &[u8]) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|f| f.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn any_config() -> impl Strategy<Value = ScenarioConfig> {
    (1usize..12, 0.001f64..1.0, -50.0f64..50.0, 1usize..3, prop::bool::ANY, 0.0f64..30.0).prop_map(
        |(n, d, detuning, n_max, fixed, rabi)| {
            let mut cfg = parse_config_str(r#"{"geometry": {"kind": "chain", "n": 1, "d": 1}}"#, &[]).unwrap();
            cfg.geometry = GeometrySpec::Chain { n, d, axis: [0.0, 1.0, 0.0], orientation: [0.0, 0.0, 1.0] };
            cfg.n_max = n_max;
            cfg.drive.rabi = rabi;
            if fixed {
                cfg.drive.detuning = DetuningSpec::Value(detuning);
            }
            cfg
        },
    )
}

proptest! {
    #[test]
    fn csv_preserves_every_bit(rows in prop::collection::vec(prop::collection::vec(any::<f64>(), 3), 1..20)) {
        let table = Table { name: "t".into(), columns: vec!["a".into(), "b".into(), "c".into()], rows: rows.clone() };
        let (header, back) = parse_csv(&table_csv(&table));
        prop_assert_eq!(header, table.columns);
        for (x, y) in rows.iter().flatten().zip(back.iter().flatten()) {
            prop_assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()));
        }
    }

    #[test]
    fn config_round_trips_through_json(cfg in any_config()) {
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        prop_assert_eq!(parse_config_str(&text, &[]).unwrap(), cfg);
    }
}
