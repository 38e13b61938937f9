use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::{AnnotationError, AnnotationEvent};

/// Append-only JSON-lines event log. Each event is written as one complete
/// line and synced before `append` returns.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
}

/// Result of reading a log back.
#[derive(Debug, Default)]
pub struct Replayed {
    pub events: Vec<AnnotationEvent>,
    /// Bytes of an incomplete trailing line that were discarded.
    pub truncated_bytes: usize,
}

impl EventLog {
    /// Opens (creating if needed) and returns the events already present. An
    /// incomplete last line, left by a crash mid-append, is cut off the file.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Replayed), AnnotationError> {
        let path = path.as_ref().to_path_buf();
        let replayed = if path.exists() {
            read_events(&path)?
        } else {
            Replayed::default()
        };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        if replayed.truncated_bytes > 0 {
            let len = file.metadata()?.len() - replayed.truncated_bytes as u64;
            file.set_len(len)?;
            file.sync_all()?;
            log::warn!(
                "{}: dropped {} bytes of an incomplete trailing event",
                path.display(),
                replayed.truncated_bytes
            );
        }
        Ok((Self { path, file }, replayed))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, event: &AnnotationEvent) -> Result<(), AnnotationError> {
        let mut line = serde_json::to_vec(event).map_err(|e| AnnotationError::Log(e.to_string()))?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        Ok(())
    }
}

/// Reads every complete event. A final line with no newline is a torn
/// write and is reported in `truncated_bytes`; a complete line that fails to
/// parse is corruption and an error.
pub fn read_events(path: &Path) -> Result<Replayed, AnnotationError> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut out = Replayed::default();
    let mut buf = Vec::new();
    let mut lineno = 0;
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf)?;
        if n == 0 {
            break;
        }
        lineno += 1;
        if buf.last() != Some(&b'\n') {
            out.truncated_bytes = n;
            break;
        }
        let text = String::from_utf8_lossy(&buf);
        if text.trim().is_empty() {
            continue;
        }
        let ev = serde_json::from_str(text.trim_end())
            .map_err(|e| AnnotationError::Log(format!("{}:{lineno}: {e}", path.display())))?;
        out.events.push(ev);
    }
    Ok(out)
}
