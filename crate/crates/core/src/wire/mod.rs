//! Edge-to-server messages: binary codec, stream files, text fixtures and a
//! simulated lossy transport.

pub mod channel;
pub mod codec;
pub mod stream;
pub mod text;

use thiserror::Error;

pub use channel::{ChannelConfig, ChannelStats, SimChannel};
pub use codec::{
    decode_frame, decode_msg, encode_frame, encode_msg, FrameMsg, PaintRect, RasterMsg,
    TrackletMsg, SCHEMA_VERSION,
};
pub use stream::{decode_stream, read_records, read_stream_file, write_stream_file, StreamWriter};
pub use text::{format_msg, parse_lines, parse_msg};

#[derive(Debug, Error)]
pub enum WireError {
    #[error("truncated buffer at byte {at}")]
    Truncated { at: usize },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("trailing garbage: {0} bytes after message")]
    TrailingGarbage(usize),
    #[error("checksum mismatch: stored {stored:#010x}, computed {actual:#010x}")]
    ChecksumMismatch { stored: u32, actual: u32 },
    #[error("invalid message: {0}")]
    Invalid(&'static str),
    #[error("line {line}: {reason}")]
    Text { line: usize, reason: String },
    #[error("record at stream offset {offset}: {source}")]
    AtOffset {
        offset: u64,
        #[source]
        source: Box<WireError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl WireError {
    /// The underlying error with any stream offset stripped.
    pub fn root(&self) -> &WireError {
        match self {
            WireError::AtOffset { source, .. } => source.root(),
            e => e,
        }
    }
}
