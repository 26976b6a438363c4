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

//! Binary segment files.
//!
//! A file starts with the magic `MMGC` and a little-endian `u16` version,
//! followed by records of `gid u32, end_time i64, size u32, gaps u64, mid u8,
//! payload_len u32` and the payload bytes, all little-endian.

use std::path::Path;

use crate::error::{MmgcError, Result};
use crate::types::{recompute_start_time, Gid, Mid, Segment, Timestamp};

pub const MAGIC: &[u8; 4] = b"MMGC";
pub const FORMAT_VERSION: u16 = 1;

const HEADER_LEN: usize = 6;
const RECORD_HEADER_LEN: usize = 4 + 8 + 4 + 8 + 1 + 4;

/// A record as stored, before the sampling interval is known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub gid: Gid,
    pub end_time: Timestamp,
    pub size: u32,
    pub gaps: u64,
    pub mid: Mid,
    pub payload: Vec<u8>,
}

impl Record {
    pub fn of(segment: &Segment) -> Self {
        Self {
            gid: segment.gid,
            end_time: segment.end_time,
            size: segment.size(),
            gaps: segment.gaps,
            mid: segment.mid,
            payload: segment.payload.clone(),
        }
    }

    pub fn into_segment(self, si: i64) -> Segment {
        Segment {
            gid: self.gid,
            start_time: recompute_start_time(self.end_time, self.size, si),
            end_time: self.end_time,
            si,
            gaps: self.gaps,
            mid: self.mid,
            payload: self.payload,
        }
    }
}

pub fn encode<'a>(segments: impl IntoIterator<Item = &'a Segment>) -> Vec<u8> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for segment in segments {
        bytes.extend_from_slice(&segment.gid.to_le_bytes());
        bytes.extend_from_slice(&segment.end_time.to_le_bytes());
        bytes.extend_from_slice(&segment.size().to_le_bytes());
        bytes.extend_from_slice(&segment.gaps.to_le_bytes());
        bytes.push(segment.mid);
        bytes.extend_from_slice(&(segment.payload.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&segment.payload);
    }
    bytes
}

pub fn decode(path: &Path, bytes: &[u8]) -> Result<Vec<Record>> {
    let corrupt = |reason: String| MmgcError::Corrupt { path: path.to_owned(), reason };
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(corrupt("missing MMGC header".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(MmgcError::Version { path: path.to_owned(), found: version, expected: FORMAT_VERSION });
    }
    let mut records = Vec::new();
    let mut rest = &bytes[HEADER_LEN..];
    while !rest.is_empty() {
        if rest.len() < RECORD_HEADER_LEN {
            return Err(corrupt(format!("truncated record header after {} records", records.len())));
        }
        let (header, tail) = rest.split_at(RECORD_HEADER_LEN);
        let payload_len = u32::from_le_bytes(header[25..29].try_into().unwrap()) as usize;
        if tail.len() < payload_len {
            return Err(corrupt(format!("truncated payload after {} records", records.len())));
        }
        let (payload, tail) = tail.split_at(payload_len);
        records.push(Record {
            gid: u32::from_le_bytes(header[0..4].try_into().unwrap()),
            end_time: i64::from_le_bytes(header[4..12].try_into().unwrap()),
            size: u32::from_le_bytes(header[12..16].try_into().unwrap()),
            gaps: u64::from_le_bytes(header[16..24].try_into().unwrap()),
            mid: header[24],
            payload: payload.to_vec(),
        });
        rest = tail;
    }
    Ok(records)
}
