// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, MmgcError>;

#[derive(Debug, Error)]
pub enum MmgcError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("model type {mid} rejected payload: {reason}")]
    Decode { mid: u8, reason: String },
    #[error("unknown model type id {0}")]
    UnknownModelType(u8),
    #[error("unknown model type name {0:?}")]
    UnknownModelTypeName(String),
    #[error("duplicate segment key (gid {gid}, end_time {end_time}, gaps {gaps:#x})")]
    DuplicateKey { gid: u32, end_time: i64, gaps: u64 },
    #[error("unknown dimension {0:?}")]
    UnknownDimension(String),
    #[error("unknown level {level:?} in dimension {dimension:?}")]
    UnknownLevel { dimension: String, level: String },
    #[error("unknown time series id {0}")]
    UnknownTid(u32),
    #[error("no time series has member {0:?}")]
    UnknownMember(String),
    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },
    #[error("{path}: sampling interval violated at timestamp {timestamp}: {reason}")]
    SamplingInterval { path: PathBuf, timestamp: i64, reason: String },
    #[error("corrupt store file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("unsupported format version {found} in {path} (expected {expected})")]
    Version { path: PathBuf, found: u16, expected: u16 },
    #[error("original values missing for tid {tid} at {timestamp}")]
    MissingOriginal { tid: u32, timestamp: i64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl MmgcError {
    pub(crate) fn invalid(reason: impl Into<String>) -> Self {
        MmgcError::InvalidArgument(reason.into())
    }
}
