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

//! Linear model whose line passes through the first value of the segment and
//! stays within the error bound of every later value. For groups the first value
//! is the PMC-Mean of the group's first values and each later timestamp narrows
//! the cone of feasible slopes by the intersection of its members' bounds.
//!
//! The line is anchored at the segment's start time so the two `f32`
//! parameters stay precise for epoch-millisecond timestamps.

use std::ops::Range;

use super::{is_negative_zero, Aggregate, Finalized, FitContext, FitState, Model, ModelType, Shape, SWING_ID};
use crate::error::{MmgcError, Result};
use crate::types::{ErrorSpec, Mid};

pub struct Swing;

impl ModelType for Swing {
    fn mid(&self) -> Mid {
        SWING_ID
    }

    fn name(&self) -> &str {
        "swing"
    }

    fn is_lossy(&self) -> bool {
        true
    }

    fn new_state(&self, context: &FitContext) -> Box<dyn FitState> {
        Box::new(SwingState::new(context.error_spec, context.si))
    }

    fn decode(&self, payload: &[u8], shape: Shape) -> Result<Box<dyn Model>> {
        if payload.len() != 8 {
            return Err(MmgcError::Decode {
                mid: SWING_ID,
                reason: format!("expected 8 bytes, found {}", payload.len()),
            });
        }
        let intercept = f32::from_le_bytes(payload[0..4].try_into().unwrap());
        let slope = f32::from_le_bytes(payload[4..8].try_into().unwrap());
        Ok(Box::new(Linear { intercept, slope, si: shape.si }))
    }
}

/// Value of the line `offset` milliseconds after the segment start. Fitting and
/// decoding both go through this function so they agree bit for bit.
pub fn line_value(intercept: f32, slope: f32, offset: i64) -> f64 {
    f64::from(intercept) + f64::from(slope) * offset as f64
}

#[derive(Debug, Clone)]
pub struct SwingState {
    error_spec: ErrorSpec,
    si: i64,
    intercept: f32,
    slope_low: f64,
    slope_high: f64,
    /// Admissible interval for every timestamp after the first.
    intervals: Vec<(f64, f64)>,
    points: usize,
}

impl SwingState {
    pub fn new(error_spec: ErrorSpec, si: i64) -> Self {
        Self {
            error_spec,
            si,
            intercept: 0.0,
            slope_low: f64::NEG_INFINITY,
            slope_high: f64::INFINITY,
            intervals: Vec::new(),
            points: 0,
        }
    }

    fn intersect(&self, values: &[f32]) -> (f64, f64) {
        values.iter().fold((f64::NEG_INFINITY, f64::INFINITY), |(low, high), &v| {
            let (l, h) = self.error_spec.admissible_interval(f64::from(v));
            (low.max(l), high.min(h))
        })
    }

    fn verifies(&self, slope: f32, upto: usize) -> usize {
        for (i, &(low, high)) in self.intervals[..upto].iter().enumerate() {
            let value = line_value(self.intercept, slope, (i as i64 + 1) * self.si);
            if !(low <= value && value <= high) {
                return i;
            }
        }
        upto
    }
}

/// An `f32` inside `[low, high]`, preferring the one nearest the midpoint.
fn pick_slope(low: f64, high: f64) -> Option<f32> {
    if low > high {
        return None;
    }
    if low.is_infinite() || high.is_infinite() {
        return Some(0.0);
    }
    let mut slope = ((low + high) / 2.0) as f32;
    if f64::from(slope) < low {
        slope = slope.next_up();
    } else if f64::from(slope) > high {
        slope = slope.next_down();
    }
    (low <= f64::from(slope) && f64::from(slope) <= high).then_some(slope)
}

impl FitState for SwingState {
    fn mid(&self) -> Mid {
        SWING_ID
    }

    fn append(&mut self, values: &[f32]) -> bool {
        if values.is_empty() || self.error_spec.is_lossless() && values.iter().any(|v| is_negative_zero(*v)) {
            return false;
        }
        let (low, high) = self.intersect(values);
        if low > high {
            return false;
        }
        if self.points == 0 {
            let mean = values.iter().map(|&v| f64::from(v)).sum::<f64>() / values.len() as f64;
            let intercept = mean as f32;
            if !(low <= f64::from(intercept) && f64::from(intercept) <= high) {
                return false;
            }
            self.intercept = intercept;
            self.points = 1;
            return true;
        }

        // Shrink by a few ulps so rounding in line_value cannot leave the bound.
        let intercept = f64::from(self.intercept);
        let margin = 4.0 * f64::EPSILON * (low.abs().max(high.abs()) + intercept.abs());
        let (low, high) = if low + margin <= high - margin { (low + margin, high - margin) } else { (low, high) };
        let offset = (self.points as i64 * self.si) as f64;
        let slope_low = self.slope_low.max((low - intercept) / offset);
        let slope_high = self.slope_high.min((high - intercept) / offset);
        if pick_slope(slope_low, slope_high).is_none() {
            return false;
        }
        self.slope_low = slope_low;
        self.slope_high = slope_high;
        self.intervals.push((low, high));
        self.points += 1;
        true
    }

    fn points(&self) -> usize {
        self.points
    }

    fn finalize(&self) -> Result<Finalized> {
        if self.points == 0 {
            return Err(MmgcError::invalid("cannot finalize an empty Swing model"));
        }
        let slope = pick_slope(self.slope_low, self.slope_high).unwrap_or(0.0);
        let verified = self.verifies(slope, self.intervals.len());
        let mut payload = Vec::with_capacity(8);
        payload.extend_from_slice(&self.intercept.to_le_bytes());
        payload.extend_from_slice(&slope.to_le_bytes());
        Ok(Finalized { payload, points: verified + 1 })
    }
}

pub struct Linear {
    pub intercept: f32,
    pub slope: f32,
    pub si: i64,
}

impl Model for Linear {
    fn value(&self, tick: usize, _rank: usize) -> f64 {
        line_value(self.intercept, self.slope, tick as i64 * self.si)
    }

    fn aggregate(&self, ticks: Range<usize>, _rank: usize) -> Option<Aggregate> {
        if ticks.is_empty() {
            return Some(Aggregate::default());
        }
        let n = ticks.len() as f64;
        let first = ticks.start as f64;
        let last = (ticks.end - 1) as f64;
        let intercept = f64::from(self.intercept);
        let slope_per_tick = f64::from(self.slope) * self.si as f64;
        let sum = n * intercept + slope_per_tick * (first + last) * n / 2.0;
        let a = self.value(ticks.start, 0);
        let b = self.value(ticks.end - 1, 0);
        Some(Aggregate { count: ticks.len() as u64, sum, min: a.min(b), max: a.max(b) })
    }
}
