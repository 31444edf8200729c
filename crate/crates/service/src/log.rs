//! Append-only JSONL feedback log.
//!
//! Each record is written with a single `write_all` of the serialized line
//! plus its newline, then synced. A crash can leave at most a partial last
//! line; readers ignore it and [`FeedbackLog::open`] cuts it off so the next
//! append starts on a clean line.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::{ServiceError, Verdict};

#[derive(Debug)]
pub struct FeedbackLog {
    path: PathBuf,
    file: File,
    records: usize,
}

/// Complete records of the log at `path`; a missing file is an empty log.
pub fn read_log(path: &Path) -> Result<Vec<Verdict>, ServiceError> {
    let mut text = String::new();
    match File::open(path) {
        Ok(mut f) => {
            f.read_to_string(&mut text)?;
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    }
    parse_complete(&text).map(|(v, _)| v)
}

/// Parses every newline-terminated line; returns the records and the byte
/// length of the complete prefix.
fn parse_complete(text: &str) -> Result<(Vec<Verdict>, usize), ServiceError> {
    let complete = text.rfind('\n').map_or(0, |i| i + 1);
    let mut out = Vec::new();
    for (n, line) in text[..complete].lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(line).map_err(|e| ServiceError::CorruptLog {
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(v);
    }
    Ok((out, complete))
}

impl FeedbackLog {
    /// Opens (creating if needed) the log for appending and returns the
    /// records already in it.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Vec<Verdict>), ServiceError> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let text = String::from_utf8_lossy(&bytes);
        let (records, complete) = parse_complete(&text)?;
        if complete < bytes.len() {
            log::warn!(
                "{}: dropping {} bytes of an unfinished record",
                path.display(),
                bytes.len() - complete
            );
            file.set_len(complete as u64)?;
            file.sync_all()?;
        }
        file.seek(SeekFrom::End(0))?;
        let n = records.len();
        Ok((
            FeedbackLog {
                path,
                file,
                records: n,
            },
            records,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records == 0
    }

    pub fn append(&mut self, verdict: &Verdict) -> Result<(), ServiceError> {
        let mut line = serde_json::to_vec(verdict).map_err(|e| ServiceError::Internal(e.to_string()))?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        self.records += 1;
        Ok(())
    }
}
