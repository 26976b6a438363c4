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

//! Point scans and model-based aggregates over a store.
//!
//! Predicates on tids and dimension members are rewritten into group ids and
//! a mask of wanted member positions per group. Aggregates use the models'
//! constant-time forms where available and decode the payload otherwise.

pub mod time;

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;
use std::str::FromStr;

pub use time::{format_timestamp, RollupLevel};

use crate::error::{MmgcError, Result};
use crate::models::{Aggregate, Model, ModelRegistry};
use crate::par;
use crate::store::{Store, StoreCatalog};
use crate::types::{Dimensions, Gid, Segment, Tid, TimeSeriesMeta, Timestamp};

/// Equality filter on one level of a dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemberFilter {
    /// `None` when the level name alone identifies the dimension.
    pub dimension: Option<String>,
    pub level: String,
    pub value: String,
}

impl MemberFilter {
    pub fn new(dimension: Option<&str>, level: &str, value: &str) -> Self {
        Self { dimension: dimension.map(str::to_owned), level: level.to_owned(), value: value.to_owned() }
    }

    /// Parse `Level=Value` or `Dimension:Level=Value`.
    pub fn parse(text: &str) -> Result<Self> {
        let (column, value) =
            text.split_once('=').ok_or_else(|| MmgcError::invalid(format!("expected Level=Value, got {text:?}")))?;
        let (dimension, level) = match column.split_once(':') {
            Some((d, l)) => (Some(d.trim()), l.trim()),
            None => (None, column.trim()),
        };
        Ok(Self::new(dimension, level, value.trim()))
    }
}

/// Resolve an optionally qualified level to `(dimension index, level)`.
fn resolve_column(dims: &Dimensions, dimension: Option<&str>, level: &str) -> Result<(usize, usize)> {
    match dimension {
        Some(d) => dims.resolve_level(d, level),
        None => dims.find_level(level),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Predicate {
    pub tids: Option<BTreeSet<Tid>>,
    pub members: Vec<MemberFilter>,
    /// Inclusive time range.
    pub range: Option<(Timestamp, Timestamp)>,
    /// Allows a predicate without any filter.
    pub full_scan: bool,
}

impl Predicate {
    pub fn all() -> Self {
        Self { full_scan: true, ..Self::default() }
    }

    pub fn tids(tids: impl IntoIterator<Item = Tid>) -> Self {
        Self { tids: Some(tids.into_iter().collect()), ..Self::default() }
    }

    pub fn with_member(mut self, filter: MemberFilter) -> Self {
        self.members.push(filter);
        self
    }

    pub fn between(mut self, from: Timestamp, to: Timestamp) -> Self {
        self.range = Some((from, to));
        self
    }

    fn validate(&self) -> Result<()> {
        if self.tids.is_none() && self.members.is_empty() && self.range.is_none() && !self.full_scan {
            return Err(MmgcError::invalid("empty predicate; request a full scan explicitly"));
        }
        if let Some((from, to)) = self.range {
            if from > to {
                return Err(MmgcError::invalid(format!("empty time range [{from}, {to}]")));
            }
        }
        Ok(())
    }
}

/// Groups touched by a predicate with the member positions it selects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rewritten {
    pub masks: BTreeMap<Gid, u64>,
}

impl Rewritten {
    pub fn gids(&self) -> BTreeSet<Gid> {
        self.masks.keys().copied().collect()
    }
}

/// Replace tid and member filters by group ids and position masks.
pub fn rewrite(predicate: &Predicate, catalog: &StoreCatalog) -> Result<Rewritten> {
    predicate.validate()?;
    let dims = catalog.dimensions();
    if let Some(tids) = &predicate.tids {
        if let Some(&missing) = tids.iter().find(|&&t| catalog.series_by_tid(t).is_none()) {
            return Err(MmgcError::UnknownTid(missing));
        }
    }
    let mut filters = Vec::new();
    for filter in &predicate.members {
        let (dim, level) = resolve_column(dims, filter.dimension.as_deref(), &filter.level)?;
        if !catalog.series().any(|s| s.member(dims, dim, level) == filter.value) {
            return Err(MmgcError::UnknownMember(filter.value.clone()));
        }
        filters.push((dim, level, filter.value.as_str()));
    }
    let mut masks = BTreeMap::new();
    for meta in catalog.series() {
        if predicate.tids.as_ref().is_some_and(|t| !t.contains(&meta.tid)) {
            continue;
        }
        if !filters.iter().all(|&(dim, level, value)| meta.member(dims, dim, level) == value) {
            continue;
        }
        let group = catalog.group(meta.gid).expect("catalog groups cover every series");
        let position = group.position(meta.tid).expect("series is a member of its group");
        *masks.entry(meta.gid).or_insert(0u64) |= 1 << position;
    }
    Ok(Rewritten { masks })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateFunction {
    Count,
    Min,
    Max,
    Sum,
    Avg,
}

impl AggregateFunction {
    /// Final value of a partial aggregate. Empty min, max and avg have none.
    pub fn finalize(self, aggregate: &Aggregate) -> Option<f64> {
        match self {
            AggregateFunction::Count => Some(aggregate.count as f64),
            AggregateFunction::Sum => Some(aggregate.sum),
            AggregateFunction::Avg => aggregate.avg(),
            AggregateFunction::Min => (aggregate.count > 0).then_some(aggregate.min),
            AggregateFunction::Max => (aggregate.count > 0).then_some(aggregate.max),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AggregateFunction::Count => "count",
            AggregateFunction::Min => "min",
            AggregateFunction::Max => "max",
            AggregateFunction::Sum => "sum",
            AggregateFunction::Avg => "avg",
        }
    }
}

impl FromStr for AggregateFunction {
    type Err = MmgcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "count" => Ok(AggregateFunction::Count),
            "min" => Ok(AggregateFunction::Min),
            "max" => Ok(AggregateFunction::Max),
            "sum" => Ok(AggregateFunction::Sum),
            "avg" => Ok(AggregateFunction::Avg),
            _ => Err(MmgcError::invalid(format!("unknown aggregate {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GroupBy {
    None,
    Tid,
    Member { dimension: Option<String>, level: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregateRequest {
    pub function: AggregateFunction,
    pub group_by: GroupBy,
    pub rollup: Option<RollupLevel>,
}

impl AggregateRequest {
    pub fn new(function: AggregateFunction) -> Self {
        Self { function, group_by: GroupBy::None, rollup: None }
    }

    pub fn by_tid(mut self) -> Self {
        self.group_by = GroupBy::Tid;
        self
    }

    pub fn by_member(mut self, dimension: Option<&str>, level: &str) -> Self {
        self.group_by = GroupBy::Member { dimension: dimension.map(str::to_owned), level: level.to_owned() };
        self
    }

    pub fn rolled_up(mut self, level: RollupLevel) -> Self {
        self.rollup = Some(level);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroupKey {
    All,
    Tid(Tid),
    Member(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    /// Start of the time bucket for roll-ups.
    pub bucket: Option<Timestamp>,
    pub key: GroupKey,
    pub aggregate: Aggregate,
    pub value: Option<f64>,
}

/// One row of the data point view.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow<'a> {
    pub tid: Tid,
    pub timestamp: Timestamp,
    pub value: f64,
    pub members: &'a [String],
}

type Partials = BTreeMap<(Option<Timestamp>, GroupKey), Aggregate>;

pub struct QueryEngine<'a> {
    store: &'a Store,
    registry: &'a ModelRegistry,
}

impl<'a> QueryEngine<'a> {
    pub fn new(store: &'a Store, registry: &'a ModelRegistry) -> Self {
        Self { store, registry }
    }

    pub fn rewrite(&self, predicate: &Predicate) -> Result<Rewritten> {
        rewrite(predicate, self.store.catalog())
    }

    /// Visit every selected live member of every segment of `gid` with the
    /// tick range that falls inside `range`.
    fn visit_group(
        &self,
        gid: Gid,
        mask: u64,
        range: Option<(Timestamp, Timestamp)>,
        mut visit: impl FnMut(&'a TimeSeriesMeta, &'a Segment, &dyn Model, usize, Range<usize>),
    ) -> Result<()> {
        let catalog = self.store.catalog();
        let group = catalog.group(gid).expect("rewritten gids exist");
        for segment in self.store.group_segments(gid, range) {
            let ticks = clip(segment, range);
            if ticks.is_empty() {
                continue;
            }
            let live = segment.live_positions(group.len());
            if live.iter().all(|&p| mask & (1 << p) == 0) {
                continue;
            }
            let model = self.registry.decode(segment, group.len())?;
            for (rank, &position) in live.iter().enumerate() {
                if mask & (1 << position) != 0 {
                    let meta = catalog.series_by_tid(group.members[position]).expect("group members are cataloged");
                    visit(meta, segment, model.as_ref(), rank, ticks.clone());
                }
            }
        }
        Ok(())
    }

    /// Rows of the data point view ordered by tid and timestamp, with values
    /// multiplied by each series' scaling constant.
    pub fn data_point_scan(&self, predicate: &Predicate) -> Result<Vec<ScanRow<'a>>> {
        let masks: Vec<(Gid, u64)> = self.rewrite(predicate)?.masks.into_iter().collect();
        let per_group = par::map(&masks, |&(gid, mask)| {
            let mut rows = Vec::new();
            self.visit_group(gid, mask, predicate.range, |meta, segment, model, rank, ticks| {
                for tick in ticks {
                    rows.push(ScanRow {
                        tid: meta.tid,
                        timestamp: segment.start_time + tick as i64 * segment.si,
                        value: meta.scaling * model.value(tick, rank),
                        members: &meta.members,
                    });
                }
            })?;
            Ok::<_, MmgcError>(rows)
        });
        let mut rows = Vec::new();
        for group_rows in per_group {
            rows.extend(group_rows?);
        }
        rows.sort_by_key(|r| (r.tid, r.timestamp));
        Ok(rows)
    }

    /// Aggregate without a time roll-up.
    pub fn simple_aggregate(&self, request: &AggregateRequest, predicate: &Predicate) -> Result<Vec<AggregateRow>> {
        if request.rollup.is_some() {
            return Err(MmgcError::invalid("simple aggregates take no time level"));
        }
        self.aggregate(request, predicate)
    }

    /// Aggregate per time bucket of `request.rollup`.
    pub fn cube_aggregate(&self, request: &AggregateRequest, predicate: &Predicate) -> Result<Vec<AggregateRow>> {
        if request.rollup.is_none() {
            return Err(MmgcError::invalid("cube aggregates need a time level"));
        }
        self.aggregate(request, predicate)
    }

    /// Simple or cube aggregate depending on `request.rollup`.
    pub fn aggregate(&self, request: &AggregateRequest, predicate: &Predicate) -> Result<Vec<AggregateRow>> {
        let catalog = self.store.catalog();
        let dims = catalog.dimensions();
        let member_column = match &request.group_by {
            GroupBy::Member { dimension, level } => Some(resolve_column(dims, dimension.as_deref(), level)?),
            _ => None,
        };
        let key_of = |meta: &TimeSeriesMeta| match (&request.group_by, member_column) {
            (GroupBy::Tid, _) => GroupKey::Tid(meta.tid),
            (GroupBy::Member { .. }, Some((dim, level))) => GroupKey::Member(meta.member(dims, dim, level).to_owned()),
            _ => GroupKey::All,
        };
        let masks: Vec<(Gid, u64)> = self.rewrite(predicate)?.masks.into_iter().collect();
        let per_group = par::map(&masks, |&(gid, mask)| {
            let mut partials = Partials::new();
            self.visit_group(gid, mask, predicate.range, |meta, segment, model, rank, ticks| {
                let key = key_of(meta);
                match request.rollup {
                    None => {
                        let partial = Aggregate::of_model(model, ticks, rank).scaled(meta.scaling);
                        partials.entry((None, key)).or_default().merge(&partial);
                    }
                    Some(level) => {
                        for (bucket, sub) in sub_intervals(segment, level) {
                            let sub = sub.start.max(ticks.start)..sub.end.min(ticks.end);
                            if sub.is_empty() {
                                continue;
                            }
                            let partial = Aggregate::of_model(model, sub, rank).scaled(meta.scaling);
                            partials.entry((Some(bucket), key.clone())).or_default().merge(&partial);
                        }
                    }
                }
            })?;
            Ok::<_, MmgcError>(partials)
        });
        let mut merged = Partials::new();
        for partials in per_group {
            for (key, partial) in partials? {
                merged.entry(key).or_default().merge(&partial);
            }
        }
        Ok(merged
            .into_iter()
            .map(|((bucket, key), aggregate)| AggregateRow {
                bucket,
                key,
                value: request.function.finalize(&aggregate),
                aggregate,
            })
            .collect())
    }

    /// Average relative error of the stored values against `original` in percent.
    pub fn average_error(
        &self,
        predicate: &Predicate,
        original: impl Fn(Tid, Timestamp) -> Option<f64>,
    ) -> Result<f64> {
        let rows = self.data_point_scan(predicate)?;
        let mut pairs = Vec::with_capacity(rows.len());
        for row in rows {
            let real = original(row.tid, row.timestamp)
                .ok_or(MmgcError::MissingOriginal { tid: row.tid, timestamp: row.timestamp })?;
            pairs.push((real, row.value));
        }
        Ok(average_error_of(pairs))
    }
}

/// `Σ|real − approx| / Σ|real| × 100` over `(real, approx)` pairs.
pub fn average_error_of(pairs: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let (mut deviation, mut magnitude) = (0.0, 0.0);
    for (real, approx) in pairs {
        deviation += (real - approx).abs();
        magnitude += real.abs();
    }
    if deviation == 0.0 {
        0.0
    } else {
        deviation / magnitude * 100.0
    }
}

/// Ticks of `segment` inside the inclusive `range`.
fn clip(segment: &Segment, range: Option<(Timestamp, Timestamp)>) -> Range<usize> {
    let len = segment.len();
    let Some((from, to)) = range else {
        return 0..len;
    };
    if to < segment.start_time || from > segment.end_time {
        return 0..0;
    }
    let si = segment.si;
    let first = if from <= segment.start_time { 0 } else { (from - segment.start_time + si - 1) / si } as usize;
    let end = if to >= segment.end_time { len } else { ((to - segment.start_time) / si + 1) as usize };
    first..end.max(first)
}

/// Cut `segment` at the bucket boundaries of `level`. Each piece ends before
/// the next boundary except the last, which runs through the segment end.
pub fn sub_intervals(segment: &Segment, level: RollupLevel) -> Vec<(Timestamp, Range<usize>)> {
    let (start, si, len) = (segment.start_time, segment.si, segment.len());
    let mut pieces = Vec::new();
    let mut tick = 0;
    while tick < len {
        let ts = start + tick as i64 * si;
        let boundary = level.next_boundary(ts);
        let end = if boundary >= segment.end_time { len } else { ((boundary - start + si - 1) / si) as usize };
        pieces.push((level.floor(ts), tick..end));
        tick = end;
    }
    pieces
}
