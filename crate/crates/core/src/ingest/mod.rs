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

//! Online group compression: the segment generator, gap handling, and dynamic
//! splitting and merging of groups whose members temporarily diverge.

pub mod generator;
pub mod split;

use std::sync::Arc;
use std::time::{Duration, Instant};

pub use generator::{SegmentGenerator, Tick};

use crate::error::{MmgcError, Result};
use crate::models::{ModelRegistry, ModelType};
use crate::types::{full_mask, ErrorSpec, Gid, Segment, Timestamp};

pub const DEFAULT_LENGTH_BOUND: usize = 50;
pub const DEFAULT_SPLIT_FRACTION: f64 = 10.0;
pub const DEFAULT_BATCH_SIZE: usize = 50_000;

/// Settings shared by every generator.
pub struct IngestConfig {
    /// Ordered list of model types tried for each segment.
    pub model_types: Vec<Arc<dyn ModelType>>,
    pub fallback: Arc<dyn ModelType>,
    pub error_spec: ErrorSpec,
    pub length_bound: usize,
    /// A segment whose ratio is below the running average divided by this
    /// value triggers a split attempt.
    pub split_fraction: f64,
    pub splitting: bool,
}

impl IngestConfig {
    pub fn new(
        registry: &ModelRegistry,
        model_types: &[String],
        error_spec: ErrorSpec,
        length_bound: usize,
        split_fraction: f64,
    ) -> Result<Self> {
        if model_types.is_empty() {
            return Err(MmgcError::invalid("at least one model type must be configured"));
        }
        if length_bound == 0 {
            return Err(MmgcError::invalid("length bound must be positive"));
        }
        if !(split_fraction > 0.0) {
            return Err(MmgcError::invalid("split fraction must be positive"));
        }
        Ok(Self {
            model_types: registry.resolve(model_types)?,
            fallback: registry.fallback().clone(),
            error_spec,
            length_bound,
            split_fraction,
            splitting: true,
        })
    }

    pub fn with_splitting(mut self, splitting: bool) -> Self {
        self.splitting = splitting;
        self
    }
}

/// Counters reported after ingestion.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestStats {
    pub ticks: u64,
    pub points: u64,
    pub segments: u64,
    pub splits: u64,
    pub merges: u64,
    pub merge_attempts: u64,
    pub split_merge_time: Duration,
    pub max_buffer_len: usize,
}

impl IngestStats {
    pub fn merge(&mut self, other: &IngestStats) {
        self.ticks += other.ticks;
        self.points += other.points;
        self.segments += other.segments;
        self.splits += other.splits;
        self.merges += other.merges;
        self.merge_attempts += other.merge_attempts;
        self.split_merge_time += other.split_merge_time;
        self.max_buffer_len = self.max_buffer_len.max(other.max_buffer_len);
    }
}

/// A group that was split: the children cover disjoint member subsets and tick
/// in lockstep. The group's own generator resumes after a full merge.
struct SplitSet {
    children: Vec<SegmentGenerator>,
    /// Segments each child emitted since the split or the last merge attempt.
    emitted_since: Vec<u64>,
    merge_threshold: u64,
}

enum Mode {
    Single(SegmentGenerator),
    Split(SplitSet),
}

/// Drives compression of one group, including splitting and merging.
pub struct GroupIngestor {
    gid: Gid,
    group_len: usize,
    si: i64,
    config: Arc<IngestConfig>,
    mode: Mode,
    stats: IngestStats,
}

impl GroupIngestor {
    pub fn new(gid: Gid, group_len: usize, si: i64, config: Arc<IngestConfig>) -> Result<Self> {
        if group_len == 0 || group_len > 64 {
            return Err(MmgcError::invalid(format!("group {gid} has {group_len} members")));
        }
        if si <= 0 {
            return Err(MmgcError::invalid(format!("group {gid}: non-positive sampling interval")));
        }
        let generator = SegmentGenerator::new(gid, group_len, si, config.clone());
        Ok(Self { gid, group_len, si, config, mode: Mode::Single(generator), stats: IngestStats::default() })
    }

    pub fn stats(&self) -> &IngestStats {
        &self.stats
    }

    pub fn is_split(&self) -> bool {
        matches!(self.mode, Mode::Split(_))
    }

    /// Subsets of the currently active generators.
    pub fn active_subsets(&self) -> Vec<u64> {
        match &self.mode {
            Mode::Single(generator) => vec![generator.subset()],
            Mode::Split(split) => split.children.iter().map(|c| c.subset()).collect(),
        }
    }

    pub fn merge_threshold(&self) -> Option<u64> {
        match &self.mode {
            Mode::Single(_) => None,
            Mode::Split(split) => Some(split.merge_threshold),
        }
    }

    fn generators(&self) -> Vec<&SegmentGenerator> {
        match &self.mode {
            Mode::Single(generator) => vec![generator],
            Mode::Split(split) => split.children.iter().collect(),
        }
    }

    /// Current total number of buffered ticks over all active generators.
    pub fn buffered_ticks(&self) -> usize {
        self.generators().iter().map(|g| g.buffer().len()).sum()
    }

    /// Ingest one value per member (`None` for gaps) at `timestamp`.
    pub fn ingest_tick(&mut self, timestamp: Timestamp, values: &[Option<f32>]) -> Result<Vec<Segment>> {
        self.stats.ticks += 1;
        self.stats.points += values.iter().filter(|v| v.is_some()).count() as u64;
        let mut segments = Vec::new();
        match &mut self.mode {
            Mode::Single(generator) => {
                segments.extend(generator.ingest_tick(timestamp, values)?);
                self.stats.max_buffer_len = self.stats.max_buffer_len.max(generator.max_buffer_len());
                if self.config.splitting && generator.split_requested() {
                    let started = Instant::now();
                    let split = split::maybe_split(generator, &self.config, self.gid, self.group_len, self.si)?;
                    if let Some((children, replayed)) = split {
                        segments.extend(replayed);
                        let emitted_since = vec![0; children.len()];
                        self.mode = Mode::Split(SplitSet { children, emitted_since, merge_threshold: 1 });
                        self.stats.splits += 1;
                    }
                    self.stats.split_merge_time += started.elapsed();
                }
            }
            Mode::Split(_) => segments.extend(self.ingest_split(timestamp, values)?),
        }
        self.stats.segments += segments.len() as u64;
        Ok(segments)
    }

    fn ingest_split(&mut self, timestamp: Timestamp, values: &[Option<f32>]) -> Result<Vec<Segment>> {
        let Mode::Split(split) = &mut self.mode else { unreachable!() };
        let mut segments = Vec::new();
        let mut index = 0;
        while index < split.children.len() {
            let child = &mut split.children[index];
            let emitted = child.ingest_tick(timestamp, values)?;
            split.emitted_since[index] += emitted.len() as u64;
            segments.extend(emitted);
            self.stats.max_buffer_len = self.stats.max_buffer_len.max(child.max_buffer_len());
            if self.config.splitting && child.split_requested() {
                let started = Instant::now();
                let result = split::maybe_split(child, &self.config, self.gid, self.group_len, self.si)?;
                if let Some((parts, replayed)) = result {
                    segments.extend(replayed);
                    let count = parts.len();
                    split.children.splice(index..=index, parts);
                    split.emitted_since.splice(index..=index, std::iter::repeat_n(0, count));
                    self.stats.splits += 1;
                    index += count;
                    self.stats.split_merge_time += started.elapsed();
                    continue;
                }
                self.stats.split_merge_time += started.elapsed();
            }
            index += 1;
        }

        // Merging is only attempted once every child has seen this tick.
        if split.emitted_since.iter().all(|&n| n >= split.merge_threshold) {
            let started = Instant::now();
            segments.extend(self.try_merge()?);
            self.stats.split_merge_time += started.elapsed();
        }
        Ok(segments)
    }

    fn try_merge(&mut self) -> Result<Vec<Segment>> {
        let Mode::Split(split) = &mut self.mode else { return Ok(Vec::new()) };
        self.stats.merge_attempts += 1;
        let clusters = split::merge_clusters(&split.children, &self.config.error_spec);
        let mut segments = Vec::new();
        if clusters.len() == split.children.len() {
            split.merge_threshold *= 2;
            split.emitted_since.iter_mut().for_each(|n| *n = 0);
            return Ok(segments);
        }

        let children = std::mem::take(&mut split.children);
        let mut slots: Vec<Option<SegmentGenerator>> = children.into_iter().map(Some).collect();
        let mut merged = Vec::with_capacity(clusters.len());
        for cluster in &clusters {
            if cluster.len() == 1 {
                merged.push(slots[cluster[0]].take().unwrap());
                continue;
            }
            let mut subset = 0u64;
            let mut ratio = (0.0, 0u64);
            let mut last = None;
            for &index in cluster {
                let mut child = slots[index].take().unwrap();
                segments.extend(child.flush()?);
                subset |= child.subset();
                let (sum, count) = child.ratio_state();
                ratio = (ratio.0 + sum, ratio.1 + count);
                last = last.max(child.last_timestamp());
            }
            let mut generator =
                SegmentGenerator::for_subset(self.gid, self.group_len, subset, self.si, self.config.clone());
            generator.inherit_ratio(ratio.0, ratio.1);
            generator.set_last_timestamp(last);
            merged.push(generator);
            self.stats.merges += 1;
        }

        if merged.len() == 1 && merged[0].subset() == full_mask(self.group_len) {
            self.mode = Mode::Single(merged.pop().unwrap());
        } else {
            let threshold = split.merge_threshold * 2;
            let count = merged.len();
            self.mode =
                Mode::Split(SplitSet { children: merged, emitted_since: vec![0; count], merge_threshold: threshold });
        }
        Ok(segments)
    }

    /// Emit everything still buffered.
    pub fn flush(&mut self) -> Result<Vec<Segment>> {
        let segments = match &mut self.mode {
            Mode::Single(generator) => generator.flush()?,
            Mode::Split(split) => {
                let mut segments = Vec::new();
                for child in &mut split.children {
                    segments.extend(child.flush()?);
                }
                segments
            }
        };
        self.stats.segments += segments.len() as u64;
        Ok(segments)
    }
}

/// A regular series with gaps, already divided by its scaling constant.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSeries {
    pub start: Timestamp,
    pub values: Vec<Option<f32>>,
}

impl AlignedSeries {
    pub fn end(&self, si: i64) -> Timestamp {
        self.start + (self.values.len() as i64 - 1).max(0) * si
    }

    pub fn at(&self, timestamp: Timestamp, si: i64) -> Option<f32> {
        if timestamp < self.start || (timestamp - self.start) % si != 0 {
            return None;
        }
        self.values.get(((timestamp - self.start) / si) as usize).copied().flatten()
    }
}

/// Segments and counters produced for one group.
#[derive(Debug, Clone, Default)]
pub struct GroupOutput {
    pub gid: Gid,
    pub segments: Vec<Segment>,
    pub stats: IngestStats,
}

/// Compress the aligned `series` of group `gid` (in member order).
pub fn compress_group(config: &Arc<IngestConfig>, gid: Gid, si: i64, series: &[&AlignedSeries]) -> Result<GroupOutput> {
    let mut ingestor = GroupIngestor::new(gid, series.len(), si, config.clone())?;
    let mut segments = Vec::new();
    let non_empty: Vec<_> = series.iter().filter(|s| !s.values.is_empty()).collect();
    if let (Some(start), Some(end)) =
        (non_empty.iter().map(|s| s.start).min(), non_empty.iter().map(|s| s.end(si)).max())
    {
        if non_empty.iter().any(|s| (s.start - start) % si != 0) {
            return Err(MmgcError::invalid(format!("group {gid}: series are not aligned to the sampling interval")));
        }
        let mut row = vec![None; series.len()];
        let mut timestamp = start;
        while timestamp <= end {
            for (slot, s) in row.iter_mut().zip(series) {
                *slot = s.at(timestamp, si);
            }
            segments.extend(ingestor.ingest_tick(timestamp, &row)?);
            timestamp += si;
        }
    }
    segments.extend(ingestor.flush()?);
    Ok(GroupOutput { gid, segments, stats: ingestor.stats().clone() })
}
