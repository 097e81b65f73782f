//! On-disk state: one JSON profile registry plus one JSON Lines session log
//! per profile. Image bytes are never written; log entries carry a digest.

use std::collections::{BTreeMap, HashMap};
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex as StdMutex};

use chrono::{DateTime, Utc};
use chromalens_core::{ModeHint, RequestMode, UserProfile};
use serde::{Deserialize, Serialize};
use tokio::io::AsyncWriteExt;
use tokio::sync::{Mutex, RwLock};
use tracing::warn;

const REGISTRY_FILE: &str = "profiles.json";
const LOG_DIR: &str = "logs";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    Error { kind: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionLogEntry {
    pub request_id: String,
    pub profile_id: String,
    pub mode_hint: ModeHint,
    /// Absent when the request could not be classified.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<RequestMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utterance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_digest: Option<String>,
    pub outcome: Outcome,
    pub received_at: DateTime<Utc>,
    pub completed_at: DateTime<Utc>,
}

/// Profile registry. Reads go through an in-memory map; every create
/// rewrites the registry file under the writer lock before returning.
#[derive(Debug)]
pub struct ProfileStore {
    path: PathBuf,
    profiles: RwLock<BTreeMap<String, UserProfile>>,
    writer: Mutex<()>,
}

impl ProfileStore {
    pub async fn open(data_dir: &Path) -> io::Result<Self> {
        tokio::fs::create_dir_all(data_dir).await?;
        let path = data_dir.join(REGISTRY_FILE);
        let profiles = match tokio::fs::read(&path).await {
            Ok(bytes) => {
                let list: Vec<UserProfile> = serde_json::from_slice(&bytes)
                    .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
                list.into_iter().map(|p| (p.profile_id.clone(), p)).collect()
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(e),
        };
        Ok(ProfileStore {
            path,
            profiles: RwLock::new(profiles),
            writer: Mutex::new(()),
        })
    }

    pub async fn insert(&self, profile: UserProfile) -> io::Result<UserProfile> {
        let _guard = self.writer.lock().await;
        let snapshot: Vec<UserProfile> = {
            let map = self.profiles.read().await;
            if map.contains_key(&profile.profile_id) {
                return Err(io::Error::new(io::ErrorKind::AlreadyExists, "duplicate profile id"));
            }
            map.values().cloned().chain(std::iter::once(profile.clone())).collect()
        };
        let tmp = self.path.with_extension("json.tmp");
        let body = serde_json::to_vec_pretty(&snapshot).map_err(io::Error::other)?;
        tokio::fs::write(&tmp, body).await?;
        tokio::fs::rename(&tmp, &self.path).await?;
        self.profiles
            .write()
            .await
            .insert(profile.profile_id.clone(), profile.clone());
        Ok(profile)
    }

    pub async fn get(&self, profile_id: &str) -> Option<UserProfile> {
        self.profiles.read().await.get(profile_id).cloned()
    }
}

/// Per-profile append-only logs. Appends and reads for one profile are
/// serialized by that profile's lock; different profiles proceed in
/// parallel.
#[derive(Debug)]
pub struct SessionLog {
    dir: PathBuf,
    locks: StdMutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl SessionLog {
    pub async fn open(data_dir: &Path) -> io::Result<Self> {
        let dir = data_dir.join(LOG_DIR);
        tokio::fs::create_dir_all(&dir).await?;
        Ok(SessionLog {
            dir,
            locks: StdMutex::new(HashMap::new()),
        })
    }

    fn lock_for(&self, profile_id: &str) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .expect("lock table poisoned")
            .entry(profile_id.to_string())
            .or_default()
            .clone()
    }

    pub fn path_for(&self, profile_id: &str) -> PathBuf {
        self.dir.join(format!("{profile_id}.jsonl"))
    }

    pub async fn append(&self, entry: &SessionLogEntry) -> io::Result<()> {
        let mut line = serde_json::to_vec(entry).map_err(io::Error::other)?;
        line.push(b'\n');
        let lock = self.lock_for(&entry.profile_id);
        let _guard = lock.lock().await;
        let mut file = tokio::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.path_for(&entry.profile_id))
            .await?;
        file.write_all(&line).await?;
        file.flush().await?;
        Ok(())
    }

    /// The `limit` most recent entries, newest first.
    pub async fn recent(&self, profile_id: &str, limit: usize) -> io::Result<Vec<SessionLogEntry>> {
        if limit == 0 {
            return Ok(Vec::new());
        }
        let lock = self.lock_for(profile_id);
        let _guard = lock.lock().await;
        let text = match tokio::fs::read_to_string(self.path_for(profile_id)).await {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        Ok(text
            .lines()
            .rev()
            .filter(|l| !l.trim().is_empty())
            .filter_map(|l| match serde_json::from_str(l) {
                Ok(entry) => Some(entry),
                Err(e) => {
                    warn!(profile_id, error = %e, "skipping unreadable log line");
                    None
                }
            })
            .take(limit)
            .collect())
    }
}
