//! JSONL persistence for stage records.
//!
//! One UTF-8 JSON object per line, `\n`-terminated. Reads are
//! order-preserving and report the 1-based line number of any malformed
//! line. Writers validate each record against its stage schema before
//! serializing it.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::records::{StageRecord, ValidationReport};
use super::DataError;

/// How unknown fields found on read are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadMode {
    /// Unknown fields are an error. For files the pipeline itself produced.
    Strict,
    /// Unknown fields are preserved and written back verbatim. For
    /// user-supplied inputs.
    Lenient,
}

fn parse_line<T: StageRecord>(raw: &[u8], line: usize, mode: ReadMode) -> Result<T, DataError> {
    let text = std::str::from_utf8(raw).map_err(|_| DataError::Encoding { line })?;
    let record: T = serde_json::from_str(text).map_err(|err| DataError::Parse {
        line,
        message: err.to_string(),
    })?;
    if mode == ReadMode::Strict && !record.extra_fields().is_empty() {
        let fields: Vec<String> = record.extra_fields().keys().cloned().collect();
        return Err(DataError::UnknownFields { line, fields });
    }
    Ok(record)
}

fn is_blank(raw: &[u8]) -> bool {
    raw.iter().all(|b| b.is_ascii_whitespace())
}

fn trim_cr(raw: &[u8]) -> &[u8] {
    raw.strip_suffix(b"\r").unwrap_or(raw)
}

/// Reads a whole stage file. Blank lines are skipped; any malformed line is
/// an error carrying its line number.
pub fn read_stage_file<T: StageRecord>(
    path: impl AsRef<Path>,
    mode: ReadMode,
) -> Result<Vec<T>, DataError> {
    let bytes = std::fs::read(path.as_ref()).map_err(|err| DataError::Io {
        path: path.as_ref().to_path_buf(),
        source: err,
    })?;
    let mut records = Vec::new();
    for (idx, raw) in bytes.split(|b| *b == b'\n').enumerate() {
        let raw = trim_cr(raw);
        if is_blank(raw) {
            continue;
        }
        records.push(parse_line(raw, idx + 1, mode)?);
    }
    Ok(records)
}

/// Result of a resume-aware read: the parsed records, plus whether trailing
/// garbage from an interrupted write was dropped.
#[derive(Debug)]
pub struct ResumeRead<T> {
    pub records: Vec<T>,
    pub recovered: bool,
}

/// Reads a stage file the pipeline may have been killed while writing.
///
/// A malformed *final* line is treated as an interrupted append: the file is
/// truncated back to the last good record and reading succeeds. A malformed
/// line anywhere else is real corruption and stays an error. A missing file
/// reads as empty.
pub fn read_stage_file_resume<T: StageRecord>(
    path: impl AsRef<Path>,
) -> Result<ResumeRead<T>, DataError> {
    let path = path.as_ref();
    let bytes = match std::fs::read(path) {
        Ok(bytes) => bytes,
        Err(err) if err.kind() == std::io::ErrorKind::NotFound => {
            return Ok(ResumeRead {
                records: Vec::new(),
                recovered: false,
            })
        }
        Err(err) => {
            return Err(DataError::Io {
                path: path.to_path_buf(),
                source: err,
            })
        }
    };

    let mut records = Vec::new();
    let mut good_end = 0usize; // byte offset just past the last good line
    let mut offset = 0usize;
    let mut line = 0usize;
    while offset < bytes.len() {
        line += 1;
        let rel_end = bytes[offset..]
            .iter()
            .position(|b| *b == b'\n')
            .map(|p| offset + p);
        let (raw, next) = match rel_end {
            Some(end) => (&bytes[offset..end], end + 1),
            None => (&bytes[offset..], bytes.len()),
        };
        let trimmed = trim_cr(raw);
        if is_blank(trimmed) {
            offset = next;
            good_end = next;
            continue;
        }
        match parse_line::<T>(trimmed, line, ReadMode::Strict) {
            Ok(record) => {
                records.push(record);
                good_end = next;
                offset = next;
            }
            Err(err) => {
                let is_last = next >= bytes.len();
                if is_last {
                    // Interrupted append: drop the partial tail.
                    let file = OpenOptions::new().write(true).open(path).map_err(|e| {
                        DataError::Io {
                            path: path.to_path_buf(),
                            source: e,
                        }
                    })?;
                    file.set_len(good_end as u64).map_err(|e| DataError::Io {
                        path: path.to_path_buf(),
                        source: e,
                    })?;
                    return Ok(ResumeRead {
                        records,
                        recovered: true,
                    });
                }
                return Err(err);
            }
        }
    }
    Ok(ResumeRead {
        records,
        recovered: false,
    })
}

fn invalid(index: usize, report: ValidationReport) -> DataError {
    DataError::InvalidRecord { index, report }
}

/// Writes records to a fresh stage file (truncating any existing one), after
/// validating each against its stage schema.
pub fn write_stage_file<T: StageRecord>(
    records: &[T],
    path: impl AsRef<Path>,
) -> Result<(), DataError> {
    let path = path.as_ref();
    for (index, record) in records.iter().enumerate() {
        let report = record.validate();
        if !report.is_valid() {
            return Err(invalid(index, report));
        }
    }
    let file = File::create(path).map_err(|err| DataError::Io {
        path: path.to_path_buf(),
        source: err,
    })?;
    let mut writer = BufWriter::new(file);
    for record in records {
        write_record(&mut writer, record, path)?;
    }
    writer.flush().map_err(|err| DataError::Io {
        path: path.to_path_buf(),
        source: err,
    })
}

fn write_record<T: StageRecord, W: Write>(
    writer: &mut W,
    record: &T,
    path: &Path,
) -> Result<(), DataError> {
    let json = serde_json::to_string(record).map_err(|err| DataError::Parse {
        line: 0,
        message: err.to_string(),
    })?;
    writer
        .write_all(json.as_bytes())
        .and_then(|_| writer.write_all(b"\n"))
        .map_err(|err| DataError::Io {
            path: path.to_path_buf(),
            source: err,
        })
}

/// Exclusive append-mode writer for one stage file, flushing after every
/// record so an interrupted run loses at most the line being written.
pub struct StageAppender {
    writer: BufWriter<File>,
    path: PathBuf,
}

impl StageAppender {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|err| DataError::Io {
                path: path.clone(),
                source: err,
            })?;
        Ok(Self {
            writer: BufWriter::new(file),
            path,
        })
    }

    /// Opens the file truncated instead of appending.
    pub fn create(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|err| DataError::Io {
            path: path.clone(),
            source: err,
        })?;
        Ok(Self {
            writer: BufWriter::new(file),
            path,
        })
    }

    pub fn append<T: StageRecord>(&mut self, record: &T) -> Result<(), DataError> {
        let report = record.validate();
        if !report.is_valid() {
            return Err(invalid(0, report));
        }
        write_record(&mut self.writer, record, &self.path)?;
        self.writer.flush().map_err(|err| DataError::Io {
            path: self.path.clone(),
            source: err,
        })
    }

    /// Appends a line for a type that is not a stage record (sidecar files).
    pub fn append_json<T: serde::Serialize>(&mut self, value: &T) -> Result<(), DataError> {
        let json = serde_json::to_string(value).map_err(|err| DataError::Parse {
            line: 0,
            message: err.to_string(),
        })?;
        self.writer
            .write_all(json.as_bytes())
            .and_then(|_| self.writer.write_all(b"\n"))
            .and_then(|_| self.writer.flush())
            .map_err(|err| DataError::Io {
                path: self.path.clone(),
                source: err,
            })
    }
}
