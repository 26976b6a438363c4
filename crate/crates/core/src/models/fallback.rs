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

//! Raw storage for ticks no other model type can represent.

use super::gorilla::RawValues;
use super::{Finalized, FitContext, FitState, Model, ModelType, Shape, FALLBACK_ID};
use crate::error::{MmgcError, Result};
use crate::types::Mid;

pub struct Fallback;

impl ModelType for Fallback {
    fn mid(&self) -> Mid {
        FALLBACK_ID
    }

    fn name(&self) -> &str {
        "fallback"
    }

    fn is_lossy(&self) -> bool {
        false
    }

    fn new_state(&self, context: &FitContext) -> Box<dyn FitState> {
        Box::new(FallbackState { length_bound: context.length_bound, values: Vec::new(), points: 0 })
    }

    fn decode(&self, payload: &[u8], shape: Shape) -> Result<Box<dyn Model>> {
        let expected = shape.ticks * shape.live * 4;
        if payload.len() != expected {
            return Err(MmgcError::Decode {
                mid: FALLBACK_ID,
                reason: format!("expected {expected} bytes, found {}", payload.len()),
            });
        }
        let values = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Box::new(RawValues { values, live: shape.live }))
    }
}

#[derive(Debug, Clone)]
pub struct FallbackState {
    length_bound: usize,
    values: Vec<f32>,
    points: usize,
}

impl FitState for FallbackState {
    fn mid(&self) -> Mid {
        FALLBACK_ID
    }

    fn append(&mut self, values: &[f32]) -> bool {
        if values.is_empty() || self.points >= self.length_bound {
            return false;
        }
        self.values.extend_from_slice(values);
        self.points += 1;
        true
    }

    fn points(&self) -> usize {
        self.points
    }

    fn finalize(&self) -> Result<Finalized> {
        if self.points == 0 {
            return Err(MmgcError::invalid("cannot finalize an empty fallback model"));
        }
        let payload = self.values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Ok(Finalized { payload, points: self.points })
    }
}
