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

//! Reading one series per CSV file.

use std::path::Path;

use chrono::{DateTime, NaiveDateTime};

use crate::error::{MmgcError, Result};
use crate::grouping::dimensions::csv_error;
use crate::types::Timestamp;

/// A regular series with gaps as read from disk, before scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub si: i64,
    pub start: Timestamp,
    /// One slot per sampling interval from `start`; `None` marks a gap.
    pub values: Vec<Option<f32>>,
}

impl RawSeries {
    pub fn at(&self, timestamp: Timestamp) -> Option<f32> {
        if timestamp < self.start || (timestamp - self.start) % self.si != 0 {
            return None;
        }
        self.values.get(((timestamp - self.start) / self.si) as usize).copied().flatten()
    }

    pub fn points(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// Milliseconds since the epoch, RFC 3339, or `YYYY-MM-DD HH:MM:SS[.fff]` in UTC.
pub fn parse_timestamp(text: &str) -> Option<Timestamp> {
    if let Ok(ms) = text.parse::<i64>() {
        return Some(ms);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(text) {
        return Some(dt.timestamp_millis());
    }
    ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(text, f).ok())
        .map(|dt| dt.and_utc().timestamp_millis())
}

/// Read a `timestamp,value` file. The sampling interval is the step between the
/// first two rows and every later step must be a positive multiple of it.
/// Missing steps and empty values become gaps.
pub fn load_series_csv(path: &Path) -> Result<RawSeries> {
    let parse_error =
        |line: u64, reason: String| MmgcError::Parse { path: path.to_owned(), line: line as usize, reason };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() < 2 || !header[0].eq_ignore_ascii_case("timestamp") || !header[1].eq_ignore_ascii_case("value") {
        return Err(parse_error(1, "expected header timestamp,value".into()));
    }
    let mut rows: Vec<(Timestamp, Option<f32>)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let timestamp = parse_timestamp(&record[0])
            .ok_or_else(|| parse_error(line, format!("invalid timestamp {:?}", &record[0])))?;
        let value = match record.get(1).unwrap_or("") {
            "" => None,
            text => {
                let v: f32 = text.parse().map_err(|_| parse_error(line, format!("invalid value {text:?}")))?;
                if !v.is_finite() {
                    return Err(parse_error(line, format!("non-finite value {text:?}")));
                }
                Some(v)
            }
        };
        rows.push((timestamp, value));
    }
    if rows.len() < 2 {
        return Err(parse_error(1, "at least two rows are needed to infer the sampling interval".into()));
    }
    let start = rows[0].0;
    let si = rows[1].0 - start;
    let violation =
        |timestamp: Timestamp, reason: String| MmgcError::SamplingInterval { path: path.to_owned(), timestamp, reason };
    if si <= 0 {
        return Err(violation(rows[1].0, "timestamps must increase".into()));
    }
    let mut values = Vec::with_capacity(rows.len());
    let mut previous = start - si;
    for (timestamp, value) in rows {
        let step = timestamp - previous;
        if step <= 0 || step % si != 0 {
            return Err(violation(timestamp, format!("step {step} is not a positive multiple of {si}")));
        }
        values.extend(std::iter::repeat_n(None, (step / si - 1) as usize));
        values.push(value);
        previous = timestamp;
    }
    Ok(RawSeries { si, start, values })
}
