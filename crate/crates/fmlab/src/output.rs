//! Artifact writers and the run manifest.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HResult, HarnessError};

pub const MANIFEST: &str = "manifest.json";

/// Shortest round-trip text for a float, in exponent form outside
/// `[1e-4, 1e15)`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn sha256_file(path: &Path) -> HResult<String> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// First line `# schema: <id> v<version>` of a CSV artifact.
pub fn read_schema(path: &Path) -> Option<(String, u32)> {
    let text = std::fs::read_to_string(path).ok()?;
    let line = text.lines().next()?;
    let rest = line.strip_prefix("# schema:")?.trim();
    let (id, ver) = rest.split_once(' ')?;
    Some((id.to_string(), ver.trim().strip_prefix('v')?.parse().ok()?))
}

/// Header and rows of a schema-tagged CSV file.
pub fn read_csv(path: &Path) -> HResult<(Vec<String>, Vec<Vec<String>>)> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| HarnessError::Other(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| HarnessError::Other(format!("{}: {e}", path.display())))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub seconds: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub stage: String,
    pub purpose: String,
    /// Derivation path below the master seed.
    pub path: Vec<u64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub stage: String,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub kind: String,
    pub config_sha256: String,
    pub seed: u64,
    pub seed_overridden: bool,
    pub workers: usize,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub module_defaults: BTreeMap<String, serde_json::Value>,
    pub stages: Vec<StageRecord>,
    pub files: Vec<FileRecord>,
    pub seeds: Vec<SeedRecord>,
    pub checks: Vec<Check>,
    /// `ok`, `failed` or `invariant_violation`.
    pub status: String,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
}

impl Manifest {
    pub fn load(dir: &Path) -> HResult<Manifest> {
        let p = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&p).map_err(|e| HarnessError::io(&p, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Other(format!("{}: {e}", p.display())))
    }

    /// `path -> sha256` of the data files.
    pub fn checksums(&self) -> BTreeMap<String, String> {
        self.files.iter().map(|f| (f.path.clone(), f.sha256.clone())).collect()
    }
}

/// Stages, files, seeds, checks and module defaults collected by a [`Ctx`].
pub type RunRecords = (Vec<StageRecord>, Vec<FileRecord>, Vec<SeedRecord>, Vec<Check>, BTreeMap<String, serde_json::Value>);

/// Mutable state of one run: output directory, stage timings, written
/// files, seed log and invariant checks.
pub struct Ctx {
    pub dir: PathBuf,
    pub seed: u64,
    current: String,
    stages: Vec<StageRecord>,
    files: Vec<FileRecord>,
    seeds: Vec<SeedRecord>,
    checks: Vec<Check>,
    defaults: BTreeMap<String, serde_json::Value>,
}

impl Ctx {
    pub fn new(dir: PathBuf, seed: u64) -> Ctx {
        Ctx {
            dir,
            seed,
            current: String::new(),
            stages: Vec::new(),
            files: Vec::new(),
            seeds: Vec::new(),
            checks: Vec::new(),
            defaults: BTreeMap::new(),
        }
    }

    /// Run `f` as the stage `name`, recording its wall time and outcome.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Ctx) -> HResult<T>) -> HResult<T> {
        log::info!("stage {name}");
        self.current = name.to_string();
        let t0 = Instant::now();
        let r = f(self);
        self.stages.push(StageRecord {
            name: name.to_string(),
            seconds: t0.elapsed().as_secs_f64(),
            status: if r.is_ok() { "ok" } else { "failed" }.into(),
        });
        r
    }

    /// Map a core error to a harness error tagged with the current stage.
    pub fn core<T>(&self, r: fmlab_core::Result<T>) -> HResult<T> {
        r.map_err(|e| HarnessError::from_core(&self.current, e))
    }

    /// Seed at `path` below the master seed, logged with its purpose.
    pub fn seed_for(&mut self, purpose: &str, path: &[u64]) -> u64 {
        let seed = fmlab_core::rng::derive(self.seed, path);
        self.seeds.push(SeedRecord {
            stage: self.current.clone(),
            purpose: purpose.to_string(),
            path: path.to_vec(),
            seed,
        });
        seed
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        let detail = detail.into();
        if !passed {
            log::warn!("check {name} failed: {detail}");
        }
        self.checks.push(Check {
            stage: self.current.clone(),
            name: name.to_string(),
            passed,
            detail,
        });
    }

    /// Record a constant used by the run that does not come from the config.
    pub fn module_default(&mut self, name: &str, value: impl Serialize) {
        self.defaults
            .insert(name.to_string(), serde_json::to_value(value).unwrap_or(serde_json::Value::Null));
    }

    fn record(&mut self, name: &str, bytes: &[u8]) -> HResult<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| HarnessError::io(&path, e))?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileRecord {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, schema: &str, header: &[&str], rows: &[Vec<String>]) -> HResult<()> {
        let mut buf = Vec::new();
        writeln!(buf, "# schema: {schema} v1").expect("write to Vec");
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            let fail = |e: csv::Error| HarnessError::Other(format!("{name}: {e}"));
            w.write_record(header).map_err(fail)?;
            for r in rows {
                w.write_record(r).map_err(fail)?;
            }
            w.flush().map_err(|e| HarnessError::io(Path::new(name), e))?;
        }
        self.record(name, &buf)
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> HResult<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Other(format!("{name}: {e}")))?;
        text.push('\n');
        self.record(name, text.as_bytes())
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn into_parts(self) -> RunRecords {
        (self.stages, self.files, self.seeds, self.checks, self.defaults)
    }

    pub fn current_stage(&self) -> &str {
        &self.current
    }
}
