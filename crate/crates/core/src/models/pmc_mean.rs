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

//! Constant model that represents every value in a segment by their mean.
//! Extended to groups by tracking the interval of approximations admitted by
//! every value seen so far, which for uniform-norm bounds is what the min and
//! max of the values determine.

use std::ops::Range;

use super::{is_negative_zero, Aggregate, Finalized, FitContext, FitState, Model, ModelType, Shape, PMC_MEAN_ID};
use crate::error::{MmgcError, Result};
use crate::types::{ErrorSpec, Mid};

pub struct PmcMean;

impl ModelType for PmcMean {
    fn mid(&self) -> Mid {
        PMC_MEAN_ID
    }

    fn name(&self) -> &str {
        "pmc_mean"
    }

    fn is_lossy(&self) -> bool {
        true
    }

    fn new_state(&self, context: &FitContext) -> Box<dyn FitState> {
        Box::new(PmcMeanState::new(context.error_spec))
    }

    fn decode(&self, payload: &[u8], _shape: Shape) -> Result<Box<dyn Model>> {
        let bytes: [u8; 4] = payload.try_into().map_err(|_| MmgcError::Decode {
            mid: PMC_MEAN_ID,
            reason: format!("expected 4 bytes, found {}", payload.len()),
        })?;
        Ok(Box::new(Constant { value: f32::from_le_bytes(bytes) }))
    }
}

#[derive(Debug, Clone)]
pub struct PmcMeanState {
    error_spec: ErrorSpec,
    sum: f64,
    count: u64,
    /// Intersection of the admissible intervals of all values.
    low: f64,
    high: f64,
    points: usize,
}

impl PmcMeanState {
    pub fn new(error_spec: ErrorSpec) -> Self {
        Self { error_spec, sum: 0.0, count: 0, low: f64::NEG_INFINITY, high: f64::INFINITY, points: 0 }
    }

    fn mean(sum: f64, count: u64) -> f32 {
        (sum / count as f64) as f32
    }
}

impl FitState for PmcMeanState {
    fn mid(&self) -> Mid {
        PMC_MEAN_ID
    }

    fn append(&mut self, values: &[f32]) -> bool {
        if self.error_spec.is_lossless() && values.iter().any(|v| is_negative_zero(*v)) {
            return false;
        }
        let mut low = self.low;
        let mut high = self.high;
        let mut sum = self.sum;
        for &value in values {
            let (l, h) = self.error_spec.admissible_interval(f64::from(value));
            low = low.max(l);
            high = high.min(h);
            sum += f64::from(value);
        }
        let count = self.count + values.len() as u64;
        let mean = f64::from(Self::mean(sum, count));
        if values.is_empty() || !(low <= mean && mean <= high) {
            return false;
        }
        self.low = low;
        self.high = high;
        self.sum = sum;
        self.count = count;
        self.points += 1;
        true
    }

    fn points(&self) -> usize {
        self.points
    }

    fn finalize(&self) -> Result<Finalized> {
        if self.points == 0 {
            return Err(MmgcError::invalid("cannot finalize an empty PMC-Mean model"));
        }
        Ok(Finalized { payload: Self::mean(self.sum, self.count).to_le_bytes().to_vec(), points: self.points })
    }
}

pub struct Constant {
    pub value: f32,
}

impl Model for Constant {
    fn value(&self, _tick: usize, _rank: usize) -> f64 {
        f64::from(self.value)
    }

    fn aggregate(&self, ticks: Range<usize>, _rank: usize) -> Option<Aggregate> {
        let count = ticks.len() as u64;
        let value = f64::from(self.value);
        Some(Aggregate::constant(value, count))
    }
}
