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

//! Online multi-model compression of one (sub)set of a group's members.
//!
//! Values are buffered per timestamp and the current model type is updated
//! incrementally. When it rejects a timestamp, the next model type in the list
//! is fitted to the entire buffer. Once every type has rejected, the candidate
//! with the best compression ratio is emitted as a segment, the timestamps it
//! covers are dropped from the buffer and the rest are replayed starting with
//! the first model type again.

use std::collections::VecDeque;
use std::sync::Arc;

use super::IngestConfig;
use crate::error::{MmgcError, Result};
use crate::models::{Finalized, FitContext, FitState};
use crate::types::{full_mask, Gid, Segment, Timestamp};

/// Bytes of one raw value, used for the compression ratio.
const VALUE_BYTES: usize = 4;

/// Values of the live members at one timestamp, in position order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tick {
    pub timestamp: Timestamp,
    pub values: Vec<f32>,
}

pub struct SegmentGenerator {
    gid: Gid,
    group_len: usize,
    /// Group positions this generator is responsible for.
    subset: u64,
    si: i64,
    config: Arc<IngestConfig>,
    context: FitContext,
    live_mask: u64,
    buffer: VecDeque<Tick>,
    /// Number of buffered ticks absorbed by `active`.
    absorbed: usize,
    cursor: usize,
    active: Box<dyn FitState>,
    candidates: Vec<Box<dyn FitState>>,
    last_timestamp: Option<Timestamp>,
    emitted_ratio_sum: f64,
    emitted_count: u64,
    split_signal: bool,
    max_buffer_len: usize,
}

impl SegmentGenerator {
    pub fn new(gid: Gid, group_len: usize, si: i64, config: Arc<IngestConfig>) -> Self {
        Self::for_subset(gid, group_len, full_mask(group_len), si, config)
    }

    pub fn for_subset(gid: Gid, group_len: usize, subset: u64, si: i64, config: Arc<IngestConfig>) -> Self {
        let context = FitContext { error_spec: config.error_spec, length_bound: config.length_bound, si };
        let active = config.model_types[0].new_state(&context);
        Self {
            gid,
            group_len,
            subset,
            si,
            context,
            config,
            live_mask: 0,
            buffer: VecDeque::new(),
            absorbed: 0,
            cursor: 0,
            active,
            candidates: Vec::new(),
            last_timestamp: None,
            emitted_ratio_sum: 0.0,
            emitted_count: 0,
            split_signal: false,
            max_buffer_len: 0,
        }
    }

    pub fn subset(&self) -> u64 {
        self.subset
    }

    pub fn live_mask(&self) -> u64 {
        self.live_mask
    }

    pub fn buffer(&self) -> &VecDeque<Tick> {
        &self.buffer
    }

    pub fn max_buffer_len(&self) -> usize {
        self.max_buffer_len
    }

    pub fn emitted_count(&self) -> u64 {
        self.emitted_count
    }

    pub fn emitted_ratio_avg(&self) -> Option<f64> {
        (self.emitted_count > 0).then(|| self.emitted_ratio_sum / self.emitted_count as f64)
    }

    /// Continue the running compression-ratio average of another generator.
    pub(crate) fn inherit_ratio(&mut self, sum: f64, count: u64) {
        self.emitted_ratio_sum = sum;
        self.emitted_count = count;
    }

    pub(crate) fn ratio_state(&self) -> (f64, u64) {
        (self.emitted_ratio_sum, self.emitted_count)
    }

    pub(crate) fn last_timestamp(&self) -> Option<Timestamp> {
        self.last_timestamp
    }

    pub(crate) fn set_last_timestamp(&mut self, timestamp: Option<Timestamp>) {
        self.last_timestamp = timestamp;
    }

    /// True when a segment emitted during the latest tick compressed poorly
    /// compared to the running average and points are still buffered.
    pub fn split_requested(&self) -> bool {
        self.split_signal && !self.buffer.is_empty()
    }

    /// Buffered values of the member at group `position`, if it is live.
    pub fn buffered_values(&self, position: usize) -> Option<Vec<(Timestamp, f32)>> {
        if self.live_mask & (1u64 << position) == 0 {
            return None;
        }
        let rank = (self.live_mask & ((1u64 << position) - 1)).count_ones() as usize;
        Some(self.buffer.iter().map(|t| (t.timestamp, t.values[rank])).collect())
    }

    /// Ingest the values of every group member at `timestamp`. Positions
    /// outside this generator's subset are ignored; `None` marks a gap.
    pub fn ingest_tick(&mut self, timestamp: Timestamp, values: &[Option<f32>]) -> Result<Vec<Segment>> {
        if values.len() != self.group_len {
            return Err(MmgcError::invalid(format!(
                "group {} has {} members but {} values were given",
                self.gid,
                self.group_len,
                values.len()
            )));
        }
        let mut segments = Vec::new();
        self.split_signal = false;
        if let Some(last) = self.last_timestamp {
            if timestamp <= last || (timestamp - last) % self.si != 0 {
                return Err(MmgcError::invalid(format!(
                    "group {}: timestamp {timestamp} does not follow {last} with sampling interval {}",
                    self.gid, self.si
                )));
            }
            // A skipped timestamp is a tick where every member is absent.
            if timestamp - last > self.si && !self.buffer.is_empty() {
                segments.extend(self.flush()?);
            }
        }
        self.last_timestamp = Some(timestamp);

        let mut live = 0u64;
        let mut tick_values = Vec::new();
        for (position, value) in values.iter().enumerate() {
            if self.subset & (1u64 << position) == 0 {
                continue;
            }
            if let Some(value) = value {
                if !value.is_finite() {
                    return Err(MmgcError::invalid(format!("group {}: non-finite value at {timestamp}", self.gid)));
                }
                live |= 1u64 << position;
                tick_values.push(*value);
            }
        }
        if live != self.live_mask {
            segments.extend(self.handle_gap_transition(live)?);
        }
        if live == 0 {
            return Ok(segments);
        }
        self.buffer.push_back(Tick { timestamp, values: tick_values });
        self.max_buffer_len = self.max_buffer_len.max(self.buffer.len());
        self.advance(&mut segments)?;
        Ok(segments)
    }

    /// Cut the current segment because the set of present members changed.
    /// Everything buffered for the old set is emitted before fitting restarts.
    pub fn handle_gap_transition(&mut self, new_live: u64) -> Result<Vec<Segment>> {
        let segments = self.flush()?;
        self.live_mask = new_live & self.subset;
        Ok(segments)
    }

    /// Emit segments until the buffer is empty.
    pub fn flush(&mut self) -> Result<Vec<Segment>> {
        let mut segments = Vec::new();
        loop {
            self.advance(&mut segments)?;
            if self.buffer.is_empty() {
                break;
            }
            // Every buffered tick is absorbed by the active type. Also give
            // the remaining types a chance before picking the best.
            let next = self.next_state(self.cursor);
            let active = std::mem::replace(&mut self.active, next);
            self.candidates.push(active);
            for index in self.cursor + 1..self.config.model_types.len() {
                let mut state = self.next_state(index);
                for tick in &self.buffer {
                    if !state.append(&tick.values) {
                        break;
                    }
                }
                self.candidates.push(state);
            }
            segments.push(self.emit_best()?);
        }
        Ok(segments)
    }

    fn next_state(&self, index: usize) -> Box<dyn FitState> {
        self.config.model_types[index].new_state(&self.context)
    }

    /// Feed buffered ticks to the active model type, switching types and
    /// emitting segments as they reject.
    fn advance(&mut self, segments: &mut Vec<Segment>) -> Result<()> {
        while self.absorbed < self.buffer.len() {
            if self.active.append(&self.buffer[self.absorbed].values) {
                self.absorbed += 1;
                continue;
            }
            self.cursor += 1;
            let next = if self.cursor < self.config.model_types.len() {
                self.next_state(self.cursor)
            } else {
                self.next_state(0)
            };
            let rejected = std::mem::replace(&mut self.active, next);
            self.candidates.push(rejected);
            self.absorbed = 0;
            if self.cursor >= self.config.model_types.len() {
                segments.push(self.emit_best()?);
            }
        }
        Ok(())
    }

    /// Emit the candidate with the best compression ratio, drop the ticks it
    /// covers and reset fitting to the first model type.
    pub fn emit_best(&mut self) -> Result<Segment> {
        let live = self.live_mask.count_ones() as usize;
        let mut best: Option<(f64, u8, Finalized)> = None;
        for candidate in &self.candidates {
            if candidate.points() == 0 {
                continue;
            }
            let finalized = candidate.finalize()?;
            let ratio = compression_ratio(finalized.points, live, finalized.payload.len());
            if best.as_ref().is_none_or(|(best_ratio, _, _)| ratio > *best_ratio) {
                best = Some((ratio, candidate.mid(), finalized));
            }
        }
        let (ratio, mid, finalized) = match best {
            Some(best) => best,
            None => {
                let fallback = self.config.fallback.clone();
                let mut state = fallback.new_state(&self.context);
                state.append(&self.buffer[0].values);
                let finalized = state.finalize()?;
                let ratio = compression_ratio(finalized.points, live, finalized.payload.len());
                (ratio, fallback.mid(), finalized)
            }
        };

        let segment = Segment {
            gid: self.gid,
            start_time: self.buffer[0].timestamp,
            end_time: self.buffer[finalized.points - 1].timestamp,
            si: self.si,
            gaps: full_mask(self.group_len) & !self.live_mask,
            mid,
            payload: finalized.payload,
        };
        self.buffer.drain(..finalized.points);
        self.candidates.clear();
        self.cursor = 0;
        self.active = self.next_state(0);
        self.absorbed = 0;

        if self.emitted_count > 0 {
            let average = self.emitted_ratio_sum / self.emitted_count as f64;
            if ratio < average / self.config.split_fraction {
                self.split_signal = true;
            }
        }
        self.emitted_ratio_sum += ratio;
        self.emitted_count += 1;
        Ok(segment)
    }
}

/// Raw bytes represented per payload byte, excluding segment metadata.
pub fn compression_ratio(points: usize, live: usize, payload_len: usize) -> f64 {
    (points * live * VALUE_BYTES) as f64 / payload_len.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelRegistry, FALLBACK_ID, GORILLA_ID, PMC_MEAN_ID, SWING_ID};
    use crate::types::ErrorSpec;

    fn config(spec: ErrorSpec, names: &[&str]) -> Arc<IngestConfig> {
        let registry = ModelRegistry::default();
        let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        Arc::new(IngestConfig::new(&registry, &names, spec, 50, 10.0).unwrap())
    }

    fn feed(generator: &mut SegmentGenerator, start: i64, si: i64, rows: &[Vec<Option<f32>>]) -> Vec<Segment> {
        let mut segments = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            segments.extend(generator.ingest_tick(start + i as i64 * si, row).unwrap());
        }
        segments
    }

    #[test]
    fn constant_stream_stays_buffered() {
        let config = config(ErrorSpec::absolute(0.5), &["pmc_mean", "swing", "gorilla"]);
        let mut generator = SegmentGenerator::new(1, 1, 100, config);
        let rows: Vec<_> = (0..500).map(|_| vec![Some(3.0)]).collect();
        assert!(feed(&mut generator, 0, 100, &rows).is_empty());
        let segments = generator.flush().unwrap();
        assert_eq!(segments.len(), 1);
        assert_eq!(segments[0].mid, PMC_MEAN_ID);
        assert_eq!(segments[0].len(), 500);
        assert!(generator.flush().unwrap().is_empty());
    }

    #[test]
    fn five_constant_points_flush_to_one_pmc_segment() {
        let config = config(ErrorSpec::relative(1.0), &["pmc_mean", "swing", "gorilla"]);
        let mut generator = SegmentGenerator::new(1, 2, 10, config);
        let rows: Vec<_> = (0..5).map(|_| vec![Some(7.0), Some(7.01)]).collect();
        assert!(feed(&mut generator, 1000, 10, &rows).is_empty());
        let segments = generator.flush().unwrap();
        assert_eq!(segments.len(), 1);
        assert_eq!((segments[0].start_time, segments[0].end_time), (1000, 1040));
        assert_eq!(segments[0].mid, PMC_MEAN_ID);
        assert_eq!(segments[0].payload.len(), 4);
    }

    #[test]
    fn swing_carries_after_pmc_rejects() {
        // Ramp that PMC cannot follow for long but Swing can, then noise.
        let config = config(ErrorSpec::absolute(0.5), &["pmc_mean", "swing", "gorilla"]);
        let mut generator = SegmentGenerator::new(1, 1, 1, config);
        let mut rows: Vec<_> = (0..100).map(|i| vec![Some(i as f32)]).collect();
        rows.extend((0..60).map(|i| vec![Some(if i % 2 == 0 { 500.0 } else { -500.0 })]));
        let mut segments = feed(&mut generator, 0, 1, &rows);
        segments.extend(generator.flush().unwrap());
        assert_eq!(segments[0].mid, SWING_ID);
        assert_eq!((segments[0].start_time, segments[0].end_time), (0, 99));
        let covered: usize = segments.iter().map(|s| s.len()).sum();
        assert_eq!(covered, rows.len());
        assert!(segments[1..].iter().all(|s| s.mid == GORILLA_ID || s.mid == PMC_MEAN_ID));
    }

    #[test]
    fn fallback_when_nothing_fits() {
        let config = config(ErrorSpec::absolute(0.1), &["pmc_mean", "swing"]);
        let mut generator = SegmentGenerator::new(1, 2, 1, config);
        let rows = vec![vec![Some(0.0), Some(5.0)], vec![Some(0.0), Some(5.0)]];
        let mut segments = feed(&mut generator, 0, 1, &rows);
        segments.extend(generator.flush().unwrap());
        assert_eq!(segments.len(), 2);
        assert!(segments.iter().all(|s| s.mid == FALLBACK_ID && s.len() == 1));
        assert_eq!(segments[0].payload.len(), 8);
    }

    #[test]
    fn gap_transition_cuts_segment() {
        let config = config(ErrorSpec::absolute(1.0), &["pmc_mean", "swing", "gorilla"]);
        let mut generator = SegmentGenerator::new(1, 3, 10, config);
        let mut rows: Vec<_> = (0..5).map(|_| vec![Some(1.0), Some(1.0), Some(1.0)]).collect();
        rows.extend((0..4).map(|_| vec![Some(1.0), None, Some(1.0)]));
        rows.extend((0..3).map(|_| vec![Some(1.0), Some(1.0), Some(1.0)]));
        let mut segments = feed(&mut generator, 0, 10, &rows);
        segments.extend(generator.flush().unwrap());
        let spans: Vec<_> = segments.iter().map(|s| (s.start_time, s.end_time, s.gaps)).collect();
        assert_eq!(spans, vec![(0, 40, 0), (50, 80, 0b010), (90, 110, 0)]);
    }

    #[test]
    fn all_members_absent_idles() {
        let config = config(ErrorSpec::absolute(1.0), &["pmc_mean"]);
        let mut generator = SegmentGenerator::new(1, 2, 10, config);
        let rows = vec![vec![Some(1.0), Some(1.0)], vec![None, None], vec![None, None], vec![Some(2.0), None]];
        let mut segments = feed(&mut generator, 0, 10, &rows);
        segments.extend(generator.flush().unwrap());
        assert_eq!(segments.len(), 2);
        assert_eq!((segments[1].start_time, segments[1].gaps), (30, 0b10));
        assert!(segments.iter().all(|s| s.validate(2).is_ok()));
    }

    #[test]
    fn rejects_bad_input() {
        let config = config(ErrorSpec::absolute(1.0), &["pmc_mean"]);
        let mut generator = SegmentGenerator::new(1, 2, 10, config);
        assert!(generator.ingest_tick(0, &[Some(1.0)]).is_err());
        generator.ingest_tick(0, &[Some(1.0), Some(1.0)]).unwrap();
        assert!(generator.ingest_tick(0, &[Some(1.0), Some(1.0)]).is_err());
        assert!(generator.ingest_tick(15, &[Some(1.0), Some(1.0)]).is_err());
        assert!(generator.ingest_tick(20, &[Some(f32::NAN), Some(1.0)]).is_err());
    }

    #[test]
    fn best_ratio_wins_with_ties_to_earlier_type() {
        // Oracle: PMC 10 points / 4 bytes = ratio 10, Swing 15 points / 8 bytes = 7.5.
        assert_eq!(compression_ratio(10, 1, 4), 10.0);
        assert_eq!(compression_ratio(15, 1, 8), 7.5);

        let config = config(ErrorSpec::absolute(0.5), &["pmc_mean", "swing"]);
        let mut generator = SegmentGenerator::new(1, 1, 1, config);
        // Ten flat values then a steep ramp: PMC covers 10 ticks in 4 bytes,
        // Swing covers 11 ticks in 8 bytes.
        let mut rows: Vec<_> = (0..10).map(|_| vec![Some(0.0)]).collect();
        rows.extend((1..=5).map(|i| vec![Some(i as f32)]));
        let segments = feed(&mut generator, 0, 1, &rows);
        assert_eq!(segments[0].mid, PMC_MEAN_ID);
        assert_eq!(segments[0].len(), 10);
    }
}
