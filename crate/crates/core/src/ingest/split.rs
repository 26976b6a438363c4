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

//! Temporary splitting of a group whose members stop being correlated, and
//! merging of the parts once they correlate again.

use std::sync::Arc;

use super::generator::SegmentGenerator;
use super::IngestConfig;
use crate::error::Result;
use crate::types::{ErrorSpec, Segment, Timestamp};

/// True if every value of `second` is within twice the bound of the value of
/// `first` at the same timestamp, over the timestamps both contain. No shared
/// timestamps means the series cannot be compared and are not grouped.
pub fn all_within_double_bound(
    first: &[(Timestamp, f32)],
    second: &[(Timestamp, f32)],
    error_spec: &ErrorSpec,
) -> bool {
    let mut shared = 0;
    let (mut i, mut j) = (0, 0);
    while i < first.len() && j < second.len() {
        match first[i].0.cmp(&second[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                let a = f64::from(first[i].1);
                let b = f64::from(second[j].1);
                if (a - b).abs() > 2.0 * error_spec.bound(a) {
                    return false;
                }
                shared += 1;
                i += 1;
                j += 1;
            }
        }
    }
    shared > 0
}

/// Partition the members of `generator` by their buffered values. Members are
/// taken in position order as seeds; every remaining member within twice the
/// bound of the seed joins it. Members currently in a gap join the first part.
/// Returns one subset bitmask per part.
pub fn partition_members(generator: &SegmentGenerator, error_spec: &ErrorSpec) -> Vec<u64> {
    let subset = generator.subset();
    let live = generator.live_mask();
    let mut remaining: Vec<(usize, Vec<(Timestamp, f32)>)> = (0..64)
        .filter(|&p| live & (1u64 << p) != 0)
        .map(|p| (p, generator.buffered_values(p).unwrap_or_default()))
        .collect();
    let mut parts = Vec::new();
    while !remaining.is_empty() {
        let (seed, seed_values) = remaining.remove(0);
        let mut part = 1u64 << seed;
        remaining.retain(|(position, values)| {
            if all_within_double_bound(&seed_values, values, error_spec) {
                part |= 1u64 << position;
                false
            } else {
                true
            }
        });
        parts.push(part);
    }
    let in_gap = subset & !live;
    match parts.first_mut() {
        Some(first) => *first |= in_gap,
        None => parts.push(subset),
    }
    parts
}

/// Replace `generator` by one generator per part if its members diverged.
/// Buffered ticks are replayed into the children; segments they emit while
/// replaying are returned.
pub fn maybe_split(
    generator: &mut SegmentGenerator,
    config: &Arc<IngestConfig>,
    gid: u32,
    group_len: usize,
    si: i64,
) -> Result<Option<(Vec<SegmentGenerator>, Vec<Segment>)>> {
    if !generator.split_requested() {
        return Ok(None);
    }
    let parts = partition_members(generator, &config.error_spec);
    if parts.len() < 2 {
        return Ok(None);
    }
    let (ratio_sum, ratio_count) = generator.ratio_state();
    let live = generator.live_mask();
    let ticks: Vec<_> = generator.buffer().iter().cloned().collect();
    let first_buffered = ticks.first().map(|t| t.timestamp);
    let mut children: Vec<SegmentGenerator> = parts
        .iter()
        .map(|&part| {
            let mut child = SegmentGenerator::for_subset(gid, group_len, part, si, config.clone());
            child.inherit_ratio(ratio_sum, ratio_count);
            child.set_last_timestamp(first_buffered.map(|t| t - si));
            child
        })
        .collect();

    let mut segments = Vec::new();
    let live_positions: Vec<usize> = (0..64).filter(|&p| live & (1u64 << p) != 0).collect();
    for tick in &ticks {
        let mut values = vec![None; group_len];
        for (rank, &position) in live_positions.iter().enumerate() {
            values[position] = Some(tick.values[rank]);
        }
        for child in &mut children {
            segments.extend(child.ingest_tick(tick.timestamp, &values)?);
        }
    }
    Ok(Some((children, segments)))
}

/// Group children whose representative series are within twice the bound.
/// Each cluster is a list of child indices; the first child of a cluster is its
/// seed and only seeds are compared against.
pub fn merge_clusters(children: &[SegmentGenerator], error_spec: &ErrorSpec) -> Vec<Vec<usize>> {
    let representative = |child: &SegmentGenerator| {
        let live = child.live_mask();
        (live != 0).then(|| child.buffered_values(live.trailing_zeros() as usize).unwrap_or_default())
    };
    let representatives: Vec<_> = children.iter().map(representative).collect();
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (index, rep) in representatives.iter().enumerate() {
        let home = clusters.iter().position(|cluster| {
            match (&representatives[cluster[0]], rep) {
                (Some(seed), Some(rep)) => all_within_double_bound(seed, rep, error_spec),
                // Series in a gap are grouped with any other part.
                _ => true,
            }
        });
        match home {
            Some(c) => clusters[c].push(index),
            None => clusters.push(vec![index]),
        }
    }
    clusters
}
