use thiserror::Error;

use crate::codec::FormatError;
use crate::flash::{FlashError, ImageError};
use crate::geometry::GeometryError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Flash(#[from] FlashError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("page {page}: {reason}")]
    Format { page: u32, reason: FormatError },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("flash full: no reclaimable page left")]
    FlashFull,
    #[error("object id {0} already exists")]
    DuplicateId(u32),
    #[error("object id {0} not found")]
    NotFound(u32),
    #[error("writer busy: {0}")]
    WriterBusy(String),
    #[error("no uncommitted version to {0}")]
    NotPending(&'static str),
    #[error("version {0} is not live")]
    VersionNotLive(u32),
    #[error("version conflict: package expects base {expected}, device is at {found}")]
    VersionConflict { expected: u32, found: u32 },
    #[error("page {page} of the update package collides with a page in use on this device")]
    Relocation { page: u32 },
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error("device is not formatted: {0}")]
    NotFormatted(String),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}, record {kind} {id}: {reason}")]
    Record {
        line: usize,
        kind: char,
        id: u32,
        reason: GeometryError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn format(page: u32) -> impl FnOnce(FormatError) -> Error {
        move |reason| Error::Format { page, reason }
    }
}
