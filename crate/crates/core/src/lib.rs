//! Checked filesystem monitor over an untrusted storage backend.
//!
//! The [`monitor::Monitor`] keeps a trusted shadow of the whole filesystem
//! ([`state::FsState`]), forwards each call to a [`backend::Backend`] and
//! validates every answer against the shadow. File content travels as
//! authenticated-encrypted 4096-byte pages ([`page`]). Any deviation is
//! reported as [`error::FsError::Violation`] and latches the monitor.

pub mod backend;
pub mod codec;
pub mod compat;
pub mod error;
pub mod fs;
pub mod monitor;
pub mod page;
pub mod state;
pub mod statefile;
pub mod unprotected;

pub use error::{FsError, FsResult, ViolationKind};
pub use fs::{FileSystem, StatInfo};
pub use monitor::Monitor;
pub use page::SealingKey;
pub use state::{Fid, FsState, PathName, Permission};
pub use unprotected::TrustingClient;
