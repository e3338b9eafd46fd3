//! File-backed run store. Each run lives in `<root>/<id>/` next to a
//! `manifest.json` holding its [`RunRecord`].

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{AppError, Result};

pub const MANIFEST: &str = "manifest.json";
pub const RUN_DIR_ENV: &str = "PLANNER_RUN_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunKind {
    Synth,
    Ingest,
    Features,
    Forecast,
    Simulate,
    ScenarioSweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RunStatus {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the run directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub kind: RunKind,
    pub created_at: DateTime<Utc>,
    pub seed: u64,
    pub config: Value,
    /// Logical input name to content digest.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<Artifact>,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunRecord {
    pub fn artifact(&self, path: &str) -> Option<&Artifact> {
        self.outputs.iter().find(|a| a.path == path)
    }
}

/// Everything that determines a run's identity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRequest {
    pub kind: RunKind,
    pub config: Value,
    pub inputs: BTreeMap<String, String>,
    pub seed: u64,
}

impl RunRequest {
    pub fn new(kind: RunKind, config: Value, seed: u64) -> Self {
        Self {
            kind,
            config,
            inputs: BTreeMap::new(),
            seed,
        }
    }

    pub fn input(mut self, name: &str, digest: String) -> Self {
        self.inputs.insert(name.to_string(), digest);
        self
    }

    /// sha256 of the canonical JSON form. `serde_json::Value` keeps object
    /// keys sorted, so equal requests always serialize identically.
    pub fn id(&self) -> String {
        let canonical = serde_json::to_value(self).expect("request serializes");
        digest_bytes(canonical.to_string().as_bytes())
    }
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    Ok(digest_bytes(&bytes))
}

/// Collects the files a run emits. Writing the same path twice keeps one
/// entry.
pub struct ArtifactWriter {
    dir: PathBuf,
    written: Mutex<Vec<String>>,
}

impl ArtifactWriter {
    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| AppError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| AppError::io(&path, e))?;
        self.register(name);
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Records a file some other code already wrote under the run directory.
    pub fn register(&self, name: &str) {
        let mut w = self.written.lock().expect("artifact list lock");
        if !w.iter().any(|n| n == name) {
            w.push(name.to_string());
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub record: RunRecord,
    pub cached: bool,
}

/// Serializes writers per run id; readers go straight to disk.
pub struct RunStore {
    root: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl RunStore {
    /// `--out` wins, then the environment variable, then `./runs`.
    pub fn resolve_root(out: Option<&Path>) -> PathBuf {
        if let Some(p) = out {
            return p.to_path_buf();
        }
        match std::env::var_os(RUN_DIR_ENV) {
            Some(p) if !p.is_empty() => PathBuf::from(p),
            _ => PathBuf::from("runs"),
        }
    }

    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| AppError::io(&root, e))?;
        Ok(Self {
            root,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    fn lock_for(&self, id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().expect("lock table");
        locks.entry(id.to_string()).or_default().clone()
    }

    fn valid_id(id: &str) -> bool {
        id.len() == 64 && id.bytes().all(|b| b.is_ascii_hexdigit())
    }

    /// Manifest without digest checks. Unknown ids are `NotFound`.
    pub fn record(&self, id: &str) -> Result<RunRecord> {
        if !Self::valid_id(id) {
            return Err(AppError::NotFound(format!("unknown run `{id}`")));
        }
        let path = self.run_dir(id).join(MANIFEST);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(AppError::NotFound(format!("unknown run `{id}`")))
            }
            Err(e) => return Err(AppError::io(&path, e)),
        };
        serde_json::from_str(&text).map_err(|e| AppError::Corrupt {
            id: id.to_string(),
            message: format!("unreadable manifest: {e}"),
        })
    }

    /// Manifest of a run, with every output re-digested when it is DONE.
    pub fn load(&self, id: &str) -> Result<RunRecord> {
        let rec = self.record(id)?;
        if rec.status == RunStatus::Done {
            self.verify(&rec)?;
        }
        Ok(rec)
    }

    pub fn verify(&self, rec: &RunRecord) -> Result<()> {
        for a in &rec.outputs {
            self.check_artifact(rec, a)?;
        }
        Ok(())
    }

    fn check_artifact(&self, rec: &RunRecord, a: &Artifact) -> Result<Vec<u8>> {
        let path = self.run_dir(&rec.id).join(&a.path);
        let bytes = fs::read(&path).map_err(|e| AppError::Corrupt {
            id: rec.id.clone(),
            message: format!("{}: {e}", a.path),
        })?;
        let got = digest_bytes(&bytes);
        if got != a.sha256 {
            return Err(AppError::Corrupt {
                id: rec.id.clone(),
                message: format!("{} digest {got} does not match manifest {}", a.path, a.sha256),
            });
        }
        Ok(bytes)
    }

    /// Bytes of one listed output, digest-checked.
    pub fn read_artifact(&self, rec: &RunRecord, name: &str) -> Result<Vec<u8>> {
        let a = rec
            .artifact(name)
            .ok_or_else(|| AppError::NotFound(format!("run {} has no artifact `{name}`", rec.id)))?;
        self.check_artifact(rec, a)
    }

    pub fn artifact_path(&self, rec: &RunRecord, name: &str) -> Result<PathBuf> {
        self.read_artifact(rec, name)?;
        Ok(self.run_dir(&rec.id).join(name))
    }

    fn write_manifest(&self, rec: &RunRecord) -> Result<()> {
        let dir = self.run_dir(&rec.id);
        let tmp = dir.join(format!("{MANIFEST}.tmp"));
        let mut text = serde_json::to_string_pretty(rec)?;
        text.push('\n');
        fs::write(&tmp, text).map_err(|e| AppError::io(&tmp, e))?;
        let path = dir.join(MANIFEST);
        fs::rename(&tmp, &path).map_err(|e| AppError::io(&path, e))
    }

    /// Returns the stored run when an identical DONE run exists, otherwise
    /// runs `produce` into a fresh directory and records its outputs.
    /// `force` recomputes even over a DONE run.
    pub fn execute<F>(&self, req: RunRequest, force: bool, produce: F) -> Result<Outcome>
    where
        F: FnOnce(&ArtifactWriter) -> Result<()>,
    {
        let id = req.id();
        let lock = self.lock_for(&id);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        if !force {
            match self.record(&id) {
                Ok(rec) if rec.status == RunStatus::Done => {
                    self.verify(&rec)?;
                    tracing::info!(run = %id, "cache hit");
                    return Ok(Outcome { record: rec, cached: true });
                }
                Ok(_) | Err(AppError::NotFound(_)) => {}
                Err(e) => return Err(e),
            }
        }
        let dir = self.run_dir(&id);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| AppError::io(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| AppError::io(&dir, e))?;
        let mut rec = RunRecord {
            id: id.clone(),
            kind: req.kind,
            created_at: Utc::now(),
            seed: req.seed,
            config: req.config,
            inputs: req.inputs,
            outputs: vec![],
            status: RunStatus::Running,
            error: None,
        };
        self.write_manifest(&rec)?;
        let writer = ArtifactWriter {
            dir: dir.clone(),
            written: Mutex::new(Vec::new()),
        };
        if let Err(e) = produce(&writer) {
            rec.status = RunStatus::Failed;
            rec.error = Some(e.to_string());
            self.write_manifest(&rec)?;
            return Err(e);
        }
        let mut names = writer.written.into_inner().expect("artifact list lock");
        names.sort();
        for name in names {
            let path = dir.join(&name);
            let bytes = fs::read(&path).map_err(|e| AppError::io(&path, e))?;
            rec.outputs.push(Artifact {
                path: name,
                sha256: digest_bytes(&bytes),
                bytes: bytes.len() as u64,
            });
        }
        rec.status = RunStatus::Done;
        self.write_manifest(&rec)?;
        tracing::info!(run = %id, kind = ?rec.kind, outputs = rec.outputs.len(), "run done");
        Ok(Outcome { record: rec, cached: false })
    }
}
