//! Config-file front end: strict JSON parsing, `key=value` overrides, and
//! CSV/JSON output with a checksummed run manifest.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use dipolesim::scenarios::{run_scenario, DetectorSpec, ScenarioConfig, ScenarioOutput, Table, Tolerances};

pub mod presets;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },

    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },

    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("schema violation at `{field}`{}: {message}", location(*.line, *.column))]
    Schema { field: String, line: usize, column: usize, message: String },

    #[error("bad override `{0}`")]
    Override(String),

    #[error(transparent)]
    Scenario(#[from] dipolesim::Error),
}

fn location(line: usize, column: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!(" (line {line}, column {column})")
    }
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Read { .. } | CliError::Write { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Schema { .. } => "schema",
            CliError::Override(_) => "override",
            CliError::Scenario(e) => e.kind(),
        }
    }

    /// 2 for problems with the input, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Read { .. } | CliError::Parse { .. } | CliError::Schema { .. } | CliError::Override(_) => 2,
            CliError::Scenario(dipolesim::Error::UnknownPreset(_) | dipolesim::Error::InvalidArgument(_)) => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> Value {
        serde_json::json!({
            "error": {
                "kind": self.kind(),
                "message": self.to_string(),
                "exit_code": self.exit_code(),
            }
        })
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn schema_error(err: serde_path_to_error::Error<serde_json::Error>) -> CliError {
    let field = err.path().to_string();
    let inner = err.into_inner();
    CliError::Schema { field, line: inner.line(), column: inner.column(), message: inner.to_string() }
}

fn syntax_error(err: serde_json::Error) -> CliError {
    CliError::Parse { line: err.line(), column: err.column(), message: err.to_string() }
}

/// Sets `dotted.path=value`; `value` is read as JSON when it parses, as a
/// string otherwise. Missing objects along the path are created.
pub fn apply_override(doc: &mut Value, assignment: &str) -> CliResult<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Override(format!("{assignment}: expected key=value")))?;
    if path.is_empty() {
        return Err(CliError::Override(format!("{assignment}: empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    for key in path.split('.') {
        node = match node {
            Value::Object(map) => map.entry(key).or_insert(Value::Object(Default::default())),
            Value::Array(items) => {
                let i: usize = key
                    .parse()
                    .map_err(|_| CliError::Override(format!("{assignment}: `{key}` is not an array index")))?;
                let len = items.len();
                items
                    .get_mut(i)
                    .ok_or_else(|| CliError::Override(format!("{assignment}: index {i} out of range ({len})")))?
            }
            _ => return Err(CliError::Override(format!("{assignment}: `{key}` is below a scalar"))),
        };
    }
    *node = value;
    Ok(())
}

/// Strict parse of a config document, overrides applied, defaults filled and
/// every field validated.
pub fn parse_config_str(text: &str, overrides: &[String]) -> CliResult<ScenarioConfig> {
    let cfg: ScenarioConfig = if overrides.is_empty() {
        let mut de = serde_json::Deserializer::from_str(text);
        let cfg = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            if e.inner().is_syntax() || e.inner().is_eof() {
                syntax_error(e.into_inner())
            } else {
                schema_error(e)
            }
        })?;
        de.end().map_err(syntax_error)?;
        cfg
    } else {
        let mut doc: Value = serde_json::from_str(text).map_err(syntax_error)?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        serde_path_to_error::deserialize(doc).map_err(schema_error)?
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> CliResult<ScenarioConfig> {
    parse_config_with(path, &[])
}

pub fn parse_config_with(path: &Path, overrides: &[String]) -> CliResult<ScenarioConfig> {
    parse_config_str(&read_config(path)?, overrides)
}

/// Reads `path`, falling back to a shipped config of the same file name.
fn read_config(path: &Path) -> CliResult<String> {
    match fs::read_to_string(path) {
        Ok(text) => Ok(text),
        Err(source) => {
            let shipped = path.file_name().and_then(|n| n.to_str()).and_then(presets::find);
            match shipped {
                Some(p) if !path.exists() => {
                    info!("{} not found; using the shipped config", path.display());
                    Ok(p.json.to_string())
                }
                _ => Err(CliError::Read { path: path.to_path_buf(), source }),
            }
        }
    }
}

/// Shortest text that parses back to the same `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:?}")
}

pub fn table_csv(table: &Table) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let row_err = "writing to memory cannot fail";
    w.write_record(&table.columns).expect(row_err);
    for row in &table.rows {
        w.write_record(row.iter().map(|&x| format_float(x))).expect(row_err);
    }
    w.into_inner().expect(row_err)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact: String,
    pub version: String,
    pub preset: String,
    pub config_path: String,
    /// SHA-256 of the effective config serialized as JSON.
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub threads: usize,
    pub wall_time_seconds: f64,
    pub tolerances: Tolerances,
    pub detector: DetectorSpec,
    pub config: ScenarioConfig,
    pub files: Vec<FileEntry>,
}

pub const MANIFEST: &str = "manifest.json";
pub const SUMMARY: &str = "summary.json";
pub const ERROR: &str = "error.json";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub overrides: Vec<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(dir: &Path, name: &str, bytes: &[u8], files: &mut Vec<FileEntry>) -> CliResult<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|source| CliError::Write { path, source })?;
    files.push(FileEntry { name: name.into(), bytes: bytes.len(), sha256: sha256_hex(bytes) });
    Ok(())
}

fn summary_json(out: &ScenarioOutput) -> Vec<u8> {
    let doc = serde_json::json!({
        "preset": out.preset,
        "summary": out.summary,
        "seeds": out.seeds,
        "records": out.records,
    });
    let mut bytes = serde_json::to_vec_pretty(&doc).expect("summary serializes");
    bytes.push(b'\n');
    bytes
}

/// Parses, runs and writes every output of one scenario into `out_dir`.
pub fn run(config_path: &Path, out_dir: &Path, opts: &RunOptions) -> CliResult<RunManifest> {
    let start = Instant::now();
    let text = read_config(config_path)?;
    let mut overrides = opts.overrides.clone();
    if let Some(seed) = opts.seed {
        // the seed only feeds an existing disorder block, never creates one
        let doc: Value = serde_json::from_str(&text).map_err(syntax_error)?;
        if doc.get("disorder").is_some() || overrides.iter().any(|o| o.starts_with("disorder.")) {
            overrides.push(format!("disorder.seed={seed}"));
        }
    }
    let cfg = parse_config_str(&text, &overrides)?;
    fs::create_dir_all(out_dir).map_err(|source| CliError::Write { path: out_dir.to_path_buf(), source })?;

    let output = run_scenario(&cfg)?;
    let mut files = Vec::new();
    for t in &output.tables {
        write_file(out_dir, &format!("{}.csv", t.name), &table_csv(t), &mut files)?;
    }
    write_file(out_dir, SUMMARY, &summary_json(&output), &mut files)?;

    let canonical = serde_json::to_vec(&cfg).expect("config serializes");
    let manifest = RunManifest {
        artifact: "dipolesim".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        preset: output.preset.clone(),
        config_path: config_path.display().to_string(),
        config_sha256: sha256_hex(&canonical),
        seeds: output.seeds.clone(),
        threads: rayon::current_num_threads(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        tolerances: cfg.tolerances.clone(),
        detector: cfg.detector.clone(),
        config: cfg,
        files,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    let path = out_dir.join(MANIFEST);
    fs::write(&path, bytes).map_err(|source| CliError::Write { path, source })?;
    // a stale error from an earlier failed run into the same directory
    let _ = fs::remove_file(out_dir.join(ERROR));
    Ok(manifest)
}

/// Best-effort `error.json` next to the outputs.
pub fn write_error(out_dir: &Path, err: &CliError) {
    if fs::create_dir_all(out_dir).is_ok() {
        let mut bytes = serde_json::to_vec_pretty(&err.to_json()).unwrap_or_default();
        bytes.push(b'\n');
        let _ = fs::write(out_dir.join(ERROR), bytes);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_follow_dotted_paths() {
        let mut doc = serde_json::json!({"geometry": {"n": 3}, "sweep": {"values": [1, 2]}});
        apply_override(&mut doc, "geometry.n=5").unwrap();
        apply_override(&mut doc, "drive.rabi=0.5").unwrap();
        apply_override(&mut doc, "sweep.values.1=7").unwrap();
        apply_override(&mut doc, "preset=ring_pair").unwrap();
        assert_eq!(doc["geometry"]["n"], 5);
        assert_eq!(doc["drive"]["rabi"], 0.5);
        assert_eq!(doc["sweep"]["values"][1], 7);
        assert_eq!(doc["preset"], "ring_pair");
        assert!(apply_override(&mut doc, "geometry.n").is_err());
        assert!(apply_override(&mut doc, "sweep.values.9=1").is_err());
        assert!(apply_override(&mut doc, "geometry.n.x=1").is_err());
    }

    #[test]
    fn syntax_errors_carry_a_position() {
        let err = parse_config_str("{\n  \"geometry\": {\"kind\": \"chain\",\n  \"n\": 3,, }\n}", &[]).unwrap_err();
        match err {
            CliError::Parse { line, column, .. } => assert_eq!((line, column), (3, 10)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schema_errors_name_the_field() {
        let err = parse_config_str(r#"{"geometry": {"kind": "chain", "n": 3, "d": 0.05}, "drive": {"rabi": "fast"}}"#, &[]).unwrap_err();
        match &err {
            CliError::Schema { field, line, .. } => {
                assert_eq!(field, "drive.rabi");
                assert_eq!(*line, 1);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(err.exit_code(), 2);
        let err = parse_config_str(r#"{"geometry": {"kind": "chain", "n": 3, "d": 0.05}, "detector": {"rfar": 1}}"#, &[]).unwrap_err();
        assert!(err.to_string().contains("rfar"), "{err}");
    }

    #[test]
    fn unknown_preset_is_reported_by_kind() {
        let err = parse_config_str(r#"{"preset": "fig7", "geometry": {"kind": "chain", "n": 3, "d": 0.05}}"#, &[]).unwrap_err();
        assert_eq!(err.kind(), "unknown_preset");
        assert_eq!(err.to_json()["error"]["kind"], "unknown_preset");
    }

    #[test]
    fn floats_print_in_shortest_round_trip_form() {
        for x in [0.1, 1.0, -2.5e-300, 1e300, std::f64::consts::PI, 5e-324, f64::NAN, f64::INFINITY] {
            let s = format_float(x);
            let back: f64 = s.parse().unwrap();
            assert!(back.to_bits() == x.to_bits() || (x.is_nan() && back.is_nan()), "{s}");
        }
        assert_eq!(format_float(0.1), "0.1");
    }
}
