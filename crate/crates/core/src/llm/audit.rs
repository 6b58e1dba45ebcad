//! Prompt audit log.
//!
//! `audit.jsonl` holds one record per model invocation:
//! `{seq, template_id, rendered_sha256, rendered_text_ref, response_text_ref}`.
//! Texts are stored content-addressed under `blobs/<sha256>.txt`; the refs
//! are paths relative to the audit directory.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::prompt::PromptId;

pub const AUDIT_FILE: &str = "audit.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: u64,
    pub template_id: PromptId,
    pub rendered_sha256: String,
    pub rendered_text_ref: String,
    pub response_text_ref: Option<String>,
}

/// A record together with the texts it references.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditEntry {
    pub record: AuditRecord,
    pub rendered: String,
    pub response: Option<String>,
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn blob_ref(hash: &str) -> String {
    format!("blobs/{hash}.txt")
}

struct Inner {
    next_seq: u64,
    retained: Option<Vec<AuditEntry>>,
    dir: Option<PathBuf>,
    file: Option<File>,
}

pub struct AuditLog {
    inner: Mutex<Inner>,
}

impl AuditLog {
    /// Keeps every entry in process memory only.
    pub fn in_memory() -> Self {
        Self {
            inner: Mutex::new(Inner {
                next_seq: 0,
                retained: Some(Vec::new()),
                dir: None,
                file: None,
            }),
        }
    }

    /// Writes entries under `dir` without retaining texts in memory.
    pub fn create(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir.join("blobs"))?;
        let file = OpenOptions::new().create(true).append(true).open(dir.join(AUDIT_FILE))?;
        Ok(Self {
            inner: Mutex::new(Inner {
                next_seq: 0,
                retained: None,
                dir: Some(dir.to_path_buf()),
                file: Some(file),
            }),
        })
    }

    pub fn record(&self, template_id: PromptId, rendered: &str, response: Option<&str>) -> io::Result<u64> {
        let mut inner = self.inner.lock().unwrap();
        let seq = inner.next_seq;
        inner.next_seq += 1;
        let rendered_sha256 = sha256_hex(rendered);
        let response_ref = response.map(|r| blob_ref(&sha256_hex(r)));
        let record = AuditRecord {
            seq,
            template_id,
            rendered_text_ref: blob_ref(&rendered_sha256),
            rendered_sha256,
            response_text_ref: response_ref,
        };
        if let Some(dir) = inner.dir.clone() {
            write_blob(&dir, &record.rendered_text_ref, rendered)?;
            if let (Some(r), Some(text)) = (&record.response_text_ref, response) {
                write_blob(&dir, r, text)?;
            }
            let mut line = serde_json::to_string(&record).map_err(io::Error::other)?;
            line.push('\n');
            if let Some(f) = inner.file.as_mut() {
                f.write_all(line.as_bytes())?;
            }
        }
        if let Some(entries) = inner.retained.as_mut() {
            entries.push(AuditEntry {
                record,
                rendered: rendered.to_string(),
                response: response.map(str::to_string),
            });
        }
        Ok(seq)
    }

    /// Entries retained in memory (empty for disk-backed logs).
    pub fn entries(&self) -> Vec<AuditEntry> {
        self.inner.lock().unwrap().retained.clone().unwrap_or_default()
    }

    pub fn len(&self) -> u64 {
        self.inner.lock().unwrap().next_seq
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn write_blob(dir: &Path, rel: &str, text: &str) -> io::Result<()> {
    let path = dir.join(rel);
    if !path.exists() {
        fs::write(path, text)?;
    }
    Ok(())
}

/// Loads an audit directory written by [`AuditLog::create`], verifying
/// each rendered prompt against its recorded hash.
pub fn read_audit_dir(dir: &Path) -> io::Result<Vec<AuditEntry>> {
    let reader = BufReader::new(File::open(dir.join(AUDIT_FILE))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: AuditRecord = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("audit line {}: {e}", i + 1)))?;
        let rendered = fs::read_to_string(dir.join(&record.rendered_text_ref))?;
        if sha256_hex(&rendered) != record.rendered_sha256 {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("audit line {}: rendered text hash mismatch", i + 1),
            ));
        }
        let response = match &record.response_text_ref {
            Some(r) => Some(fs::read_to_string(dir.join(r))?),
            None => None,
        };
        out.push(AuditEntry {
            record,
            rendered,
            response,
        });
    }
    Ok(out)
}
