use std::fmt;

use serde::{Deserialize, Serialize};

/// Attack class a detected backend deviation is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViolationKind {
    /// Page ciphertext, tag or nonce does not authenticate.
    ContentTamper,
    /// A page of the right file but the wrong position was served.
    PageOverlap,
    /// Backend namespace disagrees with the shadow layout.
    PathMismatch,
    /// Backend confused two open files.
    FdMismatch,
    /// Backend reported a length other than the one requested or recorded.
    SizeMismatch,
    /// Backend errno contradicts the shadow state.
    ErrnoLie,
    /// Anonymous mapping was not zero-filled.
    NonZeroMmap,
    /// Stale state image or stale page version.
    Rollback,
}

impl ViolationKind {
    pub const ALL: [ViolationKind; 8] = [
        ViolationKind::ContentTamper,
        ViolationKind::PageOverlap,
        ViolationKind::PathMismatch,
        ViolationKind::FdMismatch,
        ViolationKind::SizeMismatch,
        ViolationKind::ErrnoLie,
        ViolationKind::NonZeroMmap,
        ViolationKind::Rollback,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ViolationKind::ContentTamper => "ContentTamper",
            ViolationKind::PageOverlap => "PageOverlap",
            ViolationKind::PathMismatch => "PathMismatch",
            ViolationKind::FdMismatch => "FdMismatch",
            ViolationKind::SizeMismatch => "SizeMismatch",
            ViolationKind::ErrnoLie => "ErrnoLie",
            ViolationKind::NonZeroMmap => "NonZeroMmap",
            ViolationKind::Rollback => "Rollback",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Every non-success outcome of a filesystem call.
///
/// `Violation` is terminal: once a monitor returns it, all later calls on the
/// same monitor return the same value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, thiserror::Error, Serialize, Deserialize)]
pub enum FsError {
    #[error("eBadF")]
    BadF,
    #[error("eNoEnt")]
    NoEnt,
    #[error("eInval")]
    Inval,
    #[error("eExists")]
    Exists,
    #[error("eNotDir")]
    NotDir,
    #[error("eIsDir")]
    IsDir,
    #[error("eNotEmpty")]
    NotEmpty,
    #[error("eAcces")]
    Acces,
    #[error("eNoSpace")]
    NoSpace,
    #[error("eUnsupported")]
    Unsupported,
    #[error("eViolation({0})")]
    Violation(ViolationKind),
}

impl FsError {
    pub fn is_violation(&self) -> bool {
        matches!(self, FsError::Violation(_))
    }
}

pub type FsResult<T> = Result<T, FsError>;

/// Result code of a call as it appears in reports: `eSucc` or the error name.
pub fn code_name<T>(result: &FsResult<T>) -> String {
    match result {
        Ok(_) => "eSucc".to_string(),
        Err(e) => e.to_string(),
    }
}

/// Parses a code produced by [`code_name`]; `Ok(None)` stands for `eSucc`.
pub fn parse_code(s: &str) -> Option<Option<FsError>> {
    let e = match s {
        "eSucc" => return Some(None),
        "eBadF" => FsError::BadF,
        "eNoEnt" => FsError::NoEnt,
        "eInval" => FsError::Inval,
        "eExists" => FsError::Exists,
        "eNotDir" => FsError::NotDir,
        "eIsDir" => FsError::IsDir,
        "eNotEmpty" => FsError::NotEmpty,
        "eAcces" => FsError::Acces,
        "eNoSpace" => FsError::NoSpace,
        "eUnsupported" => FsError::Unsupported,
        other => {
            let inner = other.strip_prefix("eViolation(")?.strip_suffix(')')?;
            FsError::Violation(ViolationKind::from_name(inner)?)
        }
    };
    Some(Some(e))
}
