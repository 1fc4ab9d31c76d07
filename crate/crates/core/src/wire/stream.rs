//! Stream files: a sequence of `[u32 length][payload]` records, little-endian.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::WireError;

pub struct StreamWriter<W: Write> {
    out: W,
    offset: u64,
}

impl StreamWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self, WireError> {
        Ok(Self::new(BufWriter::new(File::create(path)?)))
    }
}

impl<W: Write> StreamWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out, offset: 0 }
    }

    /// Append one record, returning its byte offset.
    pub fn write(&mut self, payload: &[u8]) -> Result<u64, WireError> {
        let len = u32::try_from(payload.len())
            .map_err(|_| WireError::Invalid("record larger than u32::MAX"))?;
        let at = self.offset;
        self.out.write_all(&len.to_le_bytes())?;
        self.out.write_all(payload)?;
        self.offset += 4 + payload.len() as u64;
        Ok(at)
    }

    pub fn finish(mut self) -> Result<W, WireError> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn write_stream_file<'a>(
    path: &Path,
    payloads: impl IntoIterator<Item = &'a [u8]>,
) -> Result<(), WireError> {
    let mut w = StreamWriter::create(path)?;
    for p in payloads {
        w.write(p)?;
    }
    w.finish()?;
    Ok(())
}

/// Split a stream into `(offset, payload)` records.
pub fn read_records(bytes: &[u8]) -> Result<Vec<(u64, &[u8])>, WireError> {
    let mut out = Vec::new();
    let mut pos = 0usize;
    while pos < bytes.len() {
        let at = pos as u64;
        let wrap = |e| WireError::AtOffset {
            offset: at,
            source: Box::new(e),
        };
        if bytes.len() - pos < 4 {
            return Err(wrap(WireError::Truncated { at: 0 }));
        }
        let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 4;
        if bytes.len() - pos < len {
            return Err(wrap(WireError::Truncated {
                at: 4 + (bytes.len() - pos),
            }));
        }
        out.push((at, &bytes[pos..pos + len]));
        pos += len;
    }
    Ok(out)
}

/// Decode every record, tagging failures with the record's byte offset.
pub fn decode_stream<T>(
    bytes: &[u8],
    decode: impl Fn(&[u8]) -> Result<T, WireError>,
) -> Result<Vec<T>, WireError> {
    read_records(bytes)?
        .into_iter()
        .map(|(offset, payload)| {
            decode(payload).map_err(|e| WireError::AtOffset {
                offset,
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn read_stream_file<T>(
    path: &Path,
    decode: impl Fn(&[u8]) -> Result<T, WireError>,
) -> Result<Vec<T>, WireError> {
    let bytes = std::fs::read(path)?;
    decode_stream(&bytes, decode)
}
