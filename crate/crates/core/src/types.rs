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

//! Domain vocabulary shared by every other module: data points, series and
//! group metadata, dimensions, segments and error bounds.

use crate::error::{MmgcError, Result};

/// Milliseconds since the Unix epoch.
pub type Timestamp = i64;
/// Time series id.
pub type Tid = u32;
/// Time series group id.
pub type Gid = u32;
/// Model type id.
pub type Mid = u8;

/// Maximum number of series in a group, fixed by the width of the gaps bitmask.
pub const MAX_GROUP_SIZE: usize = 64;

/// A single observation. Missing values are carried as `Option<f32>` next to
/// the timestamp in buffers and never stored as NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataPoint {
    pub timestamp: Timestamp,
    pub value: f32,
}

impl DataPoint {
    pub fn new(timestamp: Timestamp, value: f32) -> Result<Self> {
        if timestamp < 0 {
            return Err(MmgcError::invalid(format!("negative timestamp {timestamp}")));
        }
        if !value.is_finite() {
            return Err(MmgcError::invalid(format!("non-finite value at {timestamp}")));
        }
        Ok(Self { timestamp, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMode {
    Absolute,
    /// Epsilon is a percentage of the real value.
    Relative,
}

/// Uniform-norm error bound applied to every reconstructed value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSpec {
    pub mode: ErrorMode,
    pub epsilon: f64,
}

impl ErrorSpec {
    pub fn new(mode: ErrorMode, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(MmgcError::invalid(format!("error bound must be finite and >= 0, got {epsilon}")));
        }
        Ok(Self { mode, epsilon })
    }

    pub fn absolute(epsilon: f64) -> Self {
        Self::new(ErrorMode::Absolute, epsilon).expect("valid absolute bound")
    }

    pub fn relative(percent: f64) -> Self {
        Self::new(ErrorMode::Relative, percent).expect("valid relative bound")
    }

    pub fn lossless() -> Self {
        Self::absolute(0.0)
    }

    pub fn is_lossless(&self) -> bool {
        self.epsilon == 0.0
    }

    /// Largest allowed deviation from `real`.
    pub fn bound(&self, real: f64) -> f64 {
        match self.mode {
            ErrorMode::Absolute => self.epsilon,
            ErrorMode::Relative => self.epsilon / 100.0 * real.abs(),
        }
    }

    /// True if `approx` is within the bound of `real`. In relative mode a real
    /// value of zero only admits an exact zero.
    pub fn within_bound(&self, real: f64, approx: f64) -> bool {
        (real - approx).abs() <= self.bound(real)
    }

    /// The closed interval of approximations admitted for `real`. Both ends
    /// satisfy [`ErrorSpec::within_bound`] exactly, and since the admitted set is
    /// convex so does every value in between.
    pub fn admissible_interval(&self, real: f64) -> (f64, f64) {
        let bound = self.bound(real);
        let mut low = real - bound;
        while !self.within_bound(real, low) {
            low = low.next_up();
        }
        let mut high = real + bound;
        while !self.within_bound(real, high) {
            high = high.next_down();
        }
        (low, high)
    }
}

/// A named hierarchy of levels. Level 0 is the implicit top member ⊤ and the
/// listed levels are numbered 1..=n from the top down.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimensionHierarchy {
    pub name: String,
    pub level_names: Vec<String>,
}

impl DimensionHierarchy {
    pub fn new(name: impl Into<String>, level_names: Vec<String>) -> Self {
        Self { name: name.into(), level_names }
    }

    pub fn levels(&self) -> usize {
        self.level_names.len()
    }

    /// 1-based level of `level_name`.
    pub fn level_of(&self, level_name: &str) -> Option<usize> {
        self.level_names.iter().position(|l| l == level_name).map(|i| i + 1)
    }
}

/// All configured dimensions. Series store their members flattened in this
/// order: every level of the first dimension, then the second, and so on.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dimensions {
    pub dimensions: Vec<DimensionHierarchy>,
}

impl Dimensions {
    pub fn new(dimensions: Vec<DimensionHierarchy>) -> Self {
        Self { dimensions }
    }

    pub fn len(&self) -> usize {
        self.dimensions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dimensions.is_empty()
    }

    pub fn member_columns(&self) -> usize {
        self.dimensions.iter().map(|d| d.levels()).sum()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.dimensions.iter().position(|d| d.name == name).ok_or_else(|| MmgcError::UnknownDimension(name.to_owned()))
    }

    /// Offset of the first member column of dimension `dim`.
    pub fn offset(&self, dim: usize) -> usize {
        self.dimensions[..dim].iter().map(|d| d.levels()).sum()
    }

    /// Resolve `dimension` and a level given as a name or a 1-based number.
    pub fn resolve_level(&self, dimension: &str, level: &str) -> Result<(usize, usize)> {
        let dim = self.index_of(dimension)?;
        let hierarchy = &self.dimensions[dim];
        let level_index = match level.parse::<usize>() {
            Ok(n) if n >= 1 && n <= hierarchy.levels() => Some(n),
            _ => hierarchy.level_of(level),
        };
        level_index
            .map(|l| (dim, l))
            .ok_or_else(|| MmgcError::UnknownLevel { dimension: dimension.to_owned(), level: level.to_owned() })
    }

    /// Find the dimension owning a level name, for `Level=member` shorthands.
    pub fn find_level(&self, level_name: &str) -> Result<(usize, usize)> {
        let mut found = None;
        for (dim, hierarchy) in self.dimensions.iter().enumerate() {
            if let Some(level) = hierarchy.level_of(level_name) {
                if found.is_some() {
                    return Err(MmgcError::invalid(format!(
                        "level name {level_name:?} is ambiguous, qualify it as Dimension:Level"
                    )));
                }
                found = Some((dim, level));
            }
        }
        found.ok_or_else(|| MmgcError::UnknownLevel { dimension: "*".to_owned(), level: level_name.to_owned() })
    }

    pub fn column_names(&self) -> Vec<String> {
        self.dimensions.iter().flat_map(|d| d.level_names.iter().map(move |l| format!("{}:{}", d.name, l))).collect()
    }
}

/// Row of the time series table.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesMeta {
    pub tid: Tid,
    pub gid: Gid,
    pub si: i64,
    pub scaling: f64,
    pub source: String,
    /// One member per (dimension, level), flattened in [`Dimensions`] order.
    pub members: Vec<String>,
}

impl TimeSeriesMeta {
    pub fn new(tid: Tid, si: i64, source: impl Into<String>, members: Vec<String>) -> Result<Self> {
        if tid == 0 {
            return Err(MmgcError::invalid("tids start at 1"));
        }
        if si <= 0 {
            return Err(MmgcError::invalid(format!("sampling interval must be positive, got {si}")));
        }
        Ok(Self { tid, gid: 0, si, scaling: 1.0, source: source.into(), members })
    }

    pub fn validate(&self, dims: &Dimensions) -> Result<()> {
        if self.si <= 0 {
            return Err(MmgcError::invalid(format!("tid {}: sampling interval must be positive", self.tid)));
        }
        if self.scaling == 0.0 || !self.scaling.is_finite() {
            return Err(MmgcError::invalid(format!("tid {}: scaling must be finite and non-zero", self.tid)));
        }
        if self.members.len() != dims.member_columns() {
            return Err(MmgcError::invalid(format!(
                "tid {}: expected {} members, found {}",
                self.tid,
                dims.member_columns(),
                self.members.len()
            )));
        }
        Ok(())
    }

    /// Members of dimension `dim` from level 1 down to its lowest level.
    pub fn chain<'a>(&'a self, dims: &Dimensions, dim: usize) -> &'a [String] {
        let offset = dims.offset(dim);
        &self.members[offset..offset + dims.dimensions[dim].levels()]
    }

    /// Member at the 1-based `level` of dimension `dim`, or ⊤ for level 0.
    pub fn member<'a>(&'a self, dims: &Dimensions, dim: usize, level: usize) -> &'a str {
        if level == 0 {
            "⊤"
        } else {
            &self.chain(dims, dim)[level - 1]
        }
    }
}

/// An aligned set of series ingested together. Member order is fixed and a
/// member's position is its bit in a segment's gaps bitmask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeSeriesGroup {
    pub gid: Gid,
    pub members: Vec<Tid>,
    pub si: i64,
}

impl TimeSeriesGroup {
    pub fn new(gid: Gid, members: Vec<Tid>, si: i64) -> Result<Self> {
        if members.is_empty() || members.len() > MAX_GROUP_SIZE {
            return Err(MmgcError::invalid(format!(
                "group {gid} must have between 1 and {MAX_GROUP_SIZE} members, has {}",
                members.len()
            )));
        }
        if si <= 0 {
            return Err(MmgcError::invalid(format!("group {gid}: non-positive sampling interval")));
        }
        Ok(Self { gid, members, si })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn position(&self, tid: Tid) -> Option<usize> {
        self.members.iter().position(|&t| t == tid)
    }

    /// Bitmask with one bit set per member position.
    pub fn full_mask(&self) -> u64 {
        full_mask(self.members.len())
    }
}

pub fn full_mask(len: usize) -> u64 {
    if len >= 64 {
        u64::MAX
    } else {
        (1u64 << len) - 1
    }
}

/// Start time of a segment from its end time and size in sampling intervals.
pub fn recompute_start_time(end_time: Timestamp, size: u32, si: i64) -> Timestamp {
    end_time - i64::from(size) * si
}

/// A model-compressed, time-bounded chunk of one group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub gid: Gid,
    pub start_time: Timestamp,
    pub end_time: Timestamp,
    pub si: i64,
    /// Bit `i` is set when group member `i` is absent for the whole segment.
    pub gaps: u64,
    pub mid: Mid,
    pub payload: Vec<u8>,
}

impl Segment {
    /// Number of sampling intervals between start and end.
    pub fn size(&self) -> u32 {
        ((self.end_time - self.start_time) / self.si) as u32
    }

    /// Number of timestamps represented.
    pub fn len(&self) -> usize {
        self.size() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn timestamps(&self) -> impl Iterator<Item = Timestamp> + '_ {
        (0..self.len() as i64).map(move |i| self.start_time + i * self.si)
    }

    /// Index of `timestamp` within the segment.
    pub fn tick_of(&self, timestamp: Timestamp) -> Option<usize> {
        if timestamp < self.start_time || timestamp > self.end_time {
            return None;
        }
        let offset = timestamp - self.start_time;
        (offset % self.si == 0).then_some((offset / self.si) as usize)
    }

    /// Positions of members present in this segment for a group of `group_len`.
    pub fn live_positions(&self, group_len: usize) -> Vec<usize> {
        (0..group_len).filter(|&p| self.gaps & (1u64 << p) == 0).collect()
    }

    pub fn live_count(&self, group_len: usize) -> usize {
        (full_mask(group_len) & !self.gaps).count_ones() as usize
    }

    pub fn validate(&self, group_len: usize) -> Result<()> {
        if self.si <= 0 {
            return Err(MmgcError::invalid("segment with non-positive sampling interval"));
        }
        if self.start_time > self.end_time || (self.end_time - self.start_time) % self.si != 0 {
            return Err(MmgcError::invalid(format!(
                "segment [{}, {}] is not a whole number of sampling intervals of {}",
                self.start_time, self.end_time, self.si
            )));
        }
        if self.live_count(group_len) == 0 {
            return Err(MmgcError::invalid("segment represents no group member"));
        }
        Ok(())
    }
}
