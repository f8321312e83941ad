//! Append-only newline-delimited JSON files that survive being killed
//! mid-write: a trailing line without its newline is discarded on load.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

pub const FLUSH_EVERY_RECORDS: usize = 100;
pub const FLUSH_EVERY: Duration = Duration::from_secs(10);

#[derive(Error, Debug)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl JsonlError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Complete lines of a JSONL file plus the byte length they span.
#[derive(Debug, Clone, Default)]
pub struct JsonlContents {
    pub lines: Vec<String>,
    pub valid_len: u64,
}

impl JsonlContents {
    /// Reads `path`; a missing file reads as empty.
    pub fn read(path: &Path) -> Result<Self, JsonlError> {
        let data = match std::fs::read(path) {
            Ok(d) => d,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Self::default()),
            Err(e) => return Err(JsonlError::io(path, e)),
        };
        let valid_len = data.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        let text = std::str::from_utf8(&data[..valid_len]).map_err(|e| JsonlError::Corrupt {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        Ok(Self {
            lines: text.lines().map(str::to_string).collect(),
            valid_len: valid_len as u64,
        })
    }

    pub fn parse_line<T: DeserializeOwned>(&self, path: &Path, index: usize) -> Result<T, JsonlError> {
        serde_json::from_str(&self.lines[index]).map_err(|e| JsonlError::Corrupt {
            path: path.to_path_buf(),
            line: index + 1,
            message: e.to_string(),
        })
    }
}

/// Batched appender; flushes every [`FLUSH_EVERY_RECORDS`] records or
/// [`FLUSH_EVERY`], whichever comes first, and on [`JsonlWriter::finish`].
#[derive(Debug)]
pub struct JsonlWriter {
    path: PathBuf,
    out: BufWriter<File>,
    pending: usize,
    last_flush: Instant,
}

impl JsonlWriter {
    /// Opens `path` for appending after truncating it to `valid_len`, which
    /// drops any partially written trailing line.
    pub fn open(path: &Path, valid_len: u64) -> Result<Self, JsonlError> {
        let file = OpenOptions::new()
            .create(true)
            .read(true)
            .write(true)
            .truncate(false)
            .open(path)
            .map_err(|e| JsonlError::io(path, e))?;
        file.set_len(valid_len).map_err(|e| JsonlError::io(path, e))?;
        let mut file = file;
        use std::io::Seek;
        file.seek(std::io::SeekFrom::End(0))
            .map_err(|e| JsonlError::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            pending: 0,
            last_flush: Instant::now(),
        })
    }

    pub fn append<T: Serialize>(&mut self, record: &T) -> Result<(), JsonlError> {
        let mut line = serde_json::to_vec(record).expect("record serializes");
        line.push(b'\n');
        self.out
            .write_all(&line)
            .map_err(|e| JsonlError::io(&self.path, e))?;
        self.pending += 1;
        if self.pending >= FLUSH_EVERY_RECORDS || self.last_flush.elapsed() >= FLUSH_EVERY {
            self.flush()?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), JsonlError> {
        self.out.flush().map_err(|e| JsonlError::io(&self.path, e))?;
        self.pending = 0;
        self.last_flush = Instant::now();
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), JsonlError> {
        self.flush()?;
        self.out
            .get_ref()
            .sync_all()
            .map_err(|e| JsonlError::io(&self.path, e))
    }
}
