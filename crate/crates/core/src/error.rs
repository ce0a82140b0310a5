use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failures that stop an operation. Forensic anomalies (broken chains,
/// reused clusters, malformed sets) are not errors; they are reported as
/// findings alongside the result.
#[derive(Debug, Error)]
pub enum Error {
    #[error("image not found: {0}")]
    NotFound(PathBuf),

    #[error("image too short: {len} bytes available past offset {offset}, need at least {needed}")]
    TooShort { offset: u64, len: u64, needed: u64 },

    #[error("image unreadable: {0}")]
    Unreadable(#[source] std::io::Error),

    #[error("read of {len} bytes at volume offset {offset} is outside the image ({image_len} bytes)")]
    OutOfBounds { offset: u64, len: usize, image_len: u64 },

    #[error("not an exFAT volume: {0}")]
    NotExfat(String),

    #[error("inconsistent volume geometry: {0}")]
    InconsistentGeometry(String),

    #[error("cluster {cluster} is outside the cluster heap (valid range 2..{end})")]
    ClusterOutOfRange { cluster: u64, end: u64 },

    #[error("FAT area too short: {available} bytes for {needed} cells")]
    FatTooShort { available: u64, needed: u64 },

    #[error("root directory holds no allocation bitmap entry (0x81)")]
    BitmapEntryMissing,

    #[error("allocation bitmap is {size_bytes} bytes, need at least {needed} for {cluster_count} clusters")]
    BitmapSizeInconsistent {
        size_bytes: u64,
        needed: u64,
        cluster_count: u32,
    },

    #[error("file size {size} starting at cluster {first_cluster} runs past the end of the volume")]
    FileSizeExceedsVolume { first_cluster: u32, size: u64 },

    #[error("invalid signature catalog line {line}: {reason}")]
    SignatureCatalog { line: usize, reason: String },

    #[error("scenario line {line}: {reason}")]
    Scenario { line: usize, reason: String },

    #[error("volume size {size} bytes cannot hold the system files (need {needed})")]
    SizeTooSmall { size: u64, needed: u64 },

    #[error("no space left: need {needed} clusters, {free} free")]
    NoSpace { needed: u64, free: u64 },

    #[error("path not found: {0}")]
    PathNotFound(String),

    #[error("invalid operation: {0}")]
    InvalidOperation(String),

    #[error("io error")]
    Io(#[from] std::io::Error),
}
