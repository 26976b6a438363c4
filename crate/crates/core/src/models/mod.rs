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

//! Model types and the registry mapping model type ids to implementations.
//!
//! A model type fits a [`FitState`] incrementally, one timestamp (one value per
//! live group member) at a time, and decodes stored payloads into a [`Model`]
//! that estimates values and, when possible, aggregates in constant time.
//! Additional model types are added by implementing [`ModelType`] and
//! registering it with [`ModelRegistry::register`] at startup.

mod bits;
pub mod fallback;
pub mod gorilla;
pub mod pmc_mean;
pub mod swing;

use std::collections::BTreeMap;
use std::ops::Range;
use std::sync::Arc;

use crate::error::{MmgcError, Result};
use crate::types::{ErrorSpec, Mid, Segment, Timestamp};

pub const PMC_MEAN_ID: Mid = 1;
pub const SWING_ID: Mid = 2;
pub const GORILLA_ID: Mid = 3;
pub const FALLBACK_ID: Mid = 127;

/// Parameters every fit state is created with.
#[derive(Debug, Clone, Copy)]
pub struct FitContext {
    pub error_spec: ErrorSpec,
    /// Maximum number of timestamps per segment for lossless model types.
    pub length_bound: usize,
    pub si: i64,
}

/// Dimensions of the value grid a payload represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub ticks: usize,
    pub live: usize,
    pub si: i64,
}

impl Shape {
    pub fn of(segment: &Segment, group_len: usize) -> Self {
        Self { ticks: segment.len(), live: segment.live_count(group_len), si: segment.si }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finalized {
    pub payload: Vec<u8>,
    /// Number of timestamps the payload represents, counted from the first.
    pub points: usize,
}

/// In-flight model fit. `append` is transactional: a rejected append leaves
/// the state exactly as it was.
pub trait FitState: Send {
    fn mid(&self) -> Mid;
    /// Add one value per live member for the next timestamp.
    fn append(&mut self, values: &[f32]) -> bool;
    /// Number of timestamps absorbed.
    fn points(&self) -> usize;
    fn finalize(&self) -> Result<Finalized>;
}

/// Decoded payload.
pub trait Model: Send + Sync {
    /// Estimate for the member with `rank` among the live members at `tick`.
    fn value(&self, tick: usize, rank: usize) -> f64;
    /// Aggregate over `ticks` in constant time, or `None` when the caller must
    /// fold over [`Model::value`].
    fn aggregate(&self, ticks: Range<usize>, rank: usize) -> Option<Aggregate>;
}

pub trait ModelType: Send + Sync {
    fn mid(&self) -> Mid;
    fn name(&self) -> &str;
    fn is_lossy(&self) -> bool;
    fn new_state(&self, context: &FitContext) -> Box<dyn FitState>;
    fn decode(&self, payload: &[u8], shape: Shape) -> Result<Box<dyn Model>>;
}

/// Distributive partial aggregate. `min`/`max` are infinite when empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub count: u64,
    pub sum: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for Aggregate {
    fn default() -> Self {
        Self { count: 0, sum: 0.0, min: f64::INFINITY, max: f64::NEG_INFINITY }
    }
}

impl Aggregate {
    pub fn constant(value: f64, count: u64) -> Self {
        if count == 0 {
            return Self::default();
        }
        Self { count, sum: value * count as f64, min: value, max: value }
    }

    pub fn add(&mut self, value: f64) {
        self.count += 1;
        self.sum += value;
        self.min = self.min.min(value);
        self.max = self.max.max(value);
    }

    pub fn merge(&mut self, other: &Aggregate) {
        self.count += other.count;
        self.sum += other.sum;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
    }

    /// Aggregate of the values multiplied by `factor`; min and max swap when
    /// the factor is negative. Count is unchanged.
    pub fn scaled(&self, factor: f64) -> Self {
        if self.count == 0 {
            return *self;
        }
        let (min, max) =
            if factor < 0.0 { (self.max * factor, self.min * factor) } else { (self.min * factor, self.max * factor) };
        Self { count: self.count, sum: self.sum * factor, min, max }
    }

    pub fn avg(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }

    /// Aggregate over `ticks` using the constant-time path when available.
    pub fn of_model(model: &dyn Model, ticks: Range<usize>, rank: usize) -> Self {
        model.aggregate(ticks.clone(), rank).unwrap_or_else(|| {
            let mut aggregate = Self::default();
            for tick in ticks {
                aggregate.add(model.value(tick, rank));
            }
            aggregate
        })
    }
}

/// A lossless fit must reproduce the sign of zero, which the arithmetic of
/// the lossy model types does not.
pub(crate) fn is_negative_zero(value: f32) -> bool {
    value == 0.0 && value.is_sign_negative()
}

/// Immutable set of model types keyed by id.
#[derive(Clone)]
pub struct ModelRegistry {
    types: BTreeMap<Mid, Arc<dyn ModelType>>,
}

impl std::fmt::Debug for ModelRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_map().entries(self.types.iter().map(|(mid, t)| (mid, t.name()))).finish()
    }
}

impl Default for ModelRegistry {
    fn default() -> Self {
        let mut registry = Self { types: BTreeMap::new() };
        for model_type in [
            Arc::new(pmc_mean::PmcMean) as Arc<dyn ModelType>,
            Arc::new(swing::Swing),
            Arc::new(gorilla::Gorilla),
            Arc::new(fallback::Fallback),
        ] {
            registry.register(model_type).expect("built-in ids are unique");
        }
        registry
    }
}

impl ModelRegistry {
    pub fn register(&mut self, model_type: Arc<dyn ModelType>) -> Result<()> {
        let mid = model_type.mid();
        if self.types.contains_key(&mid) {
            return Err(MmgcError::invalid(format!("model type id {mid} is already registered")));
        }
        if self.types.values().any(|t| t.name() == model_type.name()) {
            return Err(MmgcError::invalid(format!("model type name {:?} is already registered", model_type.name())));
        }
        self.types.insert(mid, model_type);
        Ok(())
    }

    pub fn get(&self, mid: Mid) -> Result<&Arc<dyn ModelType>> {
        self.types.get(&mid).ok_or(MmgcError::UnknownModelType(mid))
    }

    pub fn by_name(&self, name: &str) -> Result<&Arc<dyn ModelType>> {
        let normalized = name.trim().to_ascii_lowercase().replace('-', "_");
        self.types
            .values()
            .find(|t| t.name() == normalized)
            .ok_or_else(|| MmgcError::UnknownModelTypeName(name.to_owned()))
    }

    pub fn fallback(&self) -> &Arc<dyn ModelType> {
        self.get(FALLBACK_ID).expect("fallback is always registered")
    }

    /// `(mid, name)` for every registered type in id order.
    pub fn entries(&self) -> Vec<(Mid, String)> {
        self.types.iter().map(|(&mid, t)| (mid, t.name().to_owned())).collect()
    }

    /// Resolve an ordered list of model type names.
    pub fn resolve(&self, names: &[String]) -> Result<Vec<Arc<dyn ModelType>>> {
        names.iter().map(|n| self.by_name(n).cloned()).collect()
    }

    /// The default ordered model type list used for ingestion.
    pub fn default_list(&self) -> Vec<Arc<dyn ModelType>> {
        [PMC_MEAN_ID, SWING_ID, GORILLA_ID].iter().map(|mid| self.types[mid].clone()).collect()
    }

    pub fn decode(&self, segment: &Segment, group_len: usize) -> Result<Box<dyn Model>> {
        self.get(segment.mid)?.decode(&segment.payload, Shape::of(segment, group_len))
    }

    /// Estimate for the member at `rank` among the live members at `timestamp`.
    /// Scaling is not applied.
    pub fn evaluate(&self, segment: &Segment, group_len: usize, timestamp: Timestamp, rank: usize) -> Result<f64> {
        let tick = segment.tick_of(timestamp).ok_or_else(|| {
            MmgcError::invalid(format!(
                "timestamp {timestamp} is not in segment [{}, {}]",
                segment.start_time, segment.end_time
            ))
        })?;
        if rank >= segment.live_count(group_len) {
            return Err(MmgcError::invalid(format!("member rank {rank} is absent from the segment")));
        }
        Ok(self.decode(segment, group_len)?.value(tick, rank))
    }

    /// Per live member constant-time aggregates over the whole segment, or
    /// `None` when the model type requires decoding.
    pub fn aggregates(&self, segment: &Segment, group_len: usize) -> Result<Option<Vec<Aggregate>>> {
        let model = self.decode(segment, group_len)?;
        let live = segment.live_count(group_len);
        Ok((0..live).map(|rank| model.aggregate(0..segment.len(), rank)).collect())
    }
}
