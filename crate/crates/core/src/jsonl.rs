//! Line-delimited JSON with a trailing `{"sha256": ...}` record covering
//! every byte before it.

use std::io::BufRead;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChecksumRecord {
    sha256: String,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Buffers records and appends the checksum on `finish`.
pub struct ChecksumWriter {
    buf: Vec<u8>,
}

impl ChecksumWriter {
    pub fn new() -> Self {
        ChecksumWriter { buf: Vec::new() }
    }

    pub fn record<T: Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer(&mut self.buf, value)
            .map_err(|e| Error::Invariant(format!("serialization failed: {e}")))?;
        self.buf.push(b'\n');
        Ok(())
    }

    /// Returns the complete file contents.
    pub fn finish(mut self) -> Vec<u8> {
        let digest = hex(&Sha256::digest(&self.buf));
        let tail = serde_json::to_string(&ChecksumRecord { sha256: digest })
            .expect("checksum record serializes");
        self.buf.extend_from_slice(tail.as_bytes());
        self.buf.push(b'\n');
        self.buf
    }
}

impl Default for ChecksumWriter {
    fn default() -> Self {
        ChecksumWriter::new()
    }
}

/// Reads all lines, checks the trailing checksum, and returns the payload
/// lines with their 1-based line numbers.
pub fn read_checked<R: BufRead>(mut reader: R) -> Result<Vec<(usize, String)>> {
    let mut raw = Vec::new();
    reader
        .read_to_end(&mut raw)
        .map_err(|source| Error::Input { offset: 0, source })?;

    let mut lines = Vec::new();
    let mut start = 0;
    let mut line_no = 0;
    let mut checksum: Option<(usize, String, usize)> = None;
    while start < raw.len() {
        line_no += 1;
        let end = raw[start..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|p| start + p)
            .unwrap_or(raw.len());
        let text = std::str::from_utf8(&raw[start..end]).map_err(|_| Error::MalformedRecord {
            line: line_no,
            message: "not valid UTF-8".into(),
        })?;
        if checksum.is_some() {
            return Err(Error::MalformedRecord {
                line: line_no,
                message: "content after checksum record".into(),
            });
        }
        if end == raw.len() {
            // final line lacks its newline: the file was cut short
            return Err(Error::MalformedRecord {
                line: line_no,
                message: "truncated record (missing newline)".into(),
            });
        }
        if let Ok(rec) = serde_json::from_str::<ChecksumRecord>(text) {
            checksum = Some((line_no, rec.sha256, start));
        } else {
            lines.push((line_no, text.to_owned()));
        }
        start = end + 1;
    }
    let Some((_, expected, covered)) = checksum else {
        return Err(Error::MalformedRecord {
            line: line_no + 1,
            message: "missing checksum record".into(),
        });
    };
    let actual = hex(&Sha256::digest(&raw[..covered]));
    if actual != expected {
        return Err(Error::ChecksumMismatch { expected, actual });
    }
    Ok(lines)
}

pub fn parse_record<T: DeserializeOwned>(line: usize, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::MalformedRecord {
        line,
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample() -> Vec<u8> {
        let mut w = ChecksumWriter::new();
        w.record(&json!({"a": 1})).unwrap();
        w.record(&json!({"b": [1, 2]})).unwrap();
        w.finish()
    }

    #[test]
    fn round_trip() {
        let lines = read_checked(&sample()[..]).unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].0, 2);
    }

    #[test]
    fn tamper_is_detected() {
        let mut bytes = sample();
        bytes[5] = b'2';
        assert!(matches!(
            read_checked(&bytes[..]),
            Err(Error::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn truncation_reports_line() {
        let bytes = sample();
        // cut inside the second record
        let cut = bytes.iter().position(|&b| b == b'\n').unwrap() + 4;
        match read_checked(&bytes[..cut]) {
            Err(Error::MalformedRecord { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        // cut at a line boundary: the checksum is what's missing
        let cut = bytes.iter().rposition(|&b| b == b'\n').unwrap();
        let cut = bytes[..cut].iter().rposition(|&b| b == b'\n').unwrap() + 1;
        match read_checked(&bytes[..cut]) {
            Err(Error::MalformedRecord { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("checksum"));
            }
            other => panic!("{other:?}"),
        }
    }
}
