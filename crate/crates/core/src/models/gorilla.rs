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

//! Lossless XOR compression of 32-bit floats. Group values are written in
//! time-ordered blocks, one value per live member per timestamp, so each value
//! is XORed against the previous member's value at the same timestamp or the
//! last member's value at the previous timestamp.
//!
//! Encoding per value after the first (stored verbatim as 32 bits):
//! - `0` when the XOR is zero,
//! - `10` + meaningful bits when they fit the previous leading/trailing window,
//! - `11` + 5 bits leading zeros + 5 bits (meaningful length − 1) + meaningful bits.

use std::ops::Range;

use super::bits::{BitReader, BitWriter};
use super::{Aggregate, Finalized, FitContext, FitState, Model, ModelType, Shape, GORILLA_ID};
use crate::error::{MmgcError, Result};
use crate::types::Mid;

pub struct Gorilla;

impl ModelType for Gorilla {
    fn mid(&self) -> Mid {
        GORILLA_ID
    }

    fn name(&self) -> &str {
        "gorilla"
    }

    fn is_lossy(&self) -> bool {
        false
    }

    fn new_state(&self, context: &FitContext) -> Box<dyn FitState> {
        Box::new(GorillaState::new(context.length_bound))
    }

    fn decode(&self, payload: &[u8], shape: Shape) -> Result<Box<dyn Model>> {
        let values = decode_values(payload, shape.ticks * shape.live)?;
        Ok(Box::new(RawValues { values, live: shape.live }))
    }
}

#[derive(Debug, Clone)]
pub struct GorillaState {
    length_bound: usize,
    writer: BitWriter,
    previous: u32,
    leading: u32,
    trailing: u32,
    values: usize,
    points: usize,
}

impl GorillaState {
    pub fn new(length_bound: usize) -> Self {
        Self {
            length_bound,
            writer: BitWriter::new(),
            previous: 0,
            leading: u32::MAX,
            trailing: 0,
            values: 0,
            points: 0,
        }
    }

    fn encode(&mut self, value: f32) {
        let bits = value.to_bits();
        if self.values == 0 {
            self.writer.write(u64::from(bits), 32);
        } else {
            let xor = bits ^ self.previous;
            if xor == 0 {
                self.writer.write(0, 1);
            } else {
                let leading = xor.leading_zeros();
                let trailing = xor.trailing_zeros();
                if self.leading != u32::MAX && leading >= self.leading && trailing >= self.trailing {
                    let meaningful = 32 - self.leading - self.trailing;
                    self.writer.write(0b10, 2);
                    self.writer.write(u64::from(xor >> self.trailing), meaningful);
                } else {
                    let meaningful = 32 - leading - trailing;
                    self.writer.write(0b11, 2);
                    self.writer.write(u64::from(leading), 5);
                    self.writer.write(u64::from(meaningful - 1), 5);
                    self.writer.write(u64::from(xor >> trailing), meaningful);
                    self.leading = leading;
                    self.trailing = trailing;
                }
            }
        }
        self.previous = bits;
        self.values += 1;
    }

    pub fn payload_len(&self) -> usize {
        self.writer.byte_len()
    }
}

impl FitState for GorillaState {
    fn mid(&self) -> Mid {
        GORILLA_ID
    }

    fn append(&mut self, values: &[f32]) -> bool {
        if values.is_empty() || self.points >= self.length_bound {
            return false;
        }
        for &value in values {
            self.encode(value);
        }
        self.points += 1;
        true
    }

    fn points(&self) -> usize {
        self.points
    }

    fn finalize(&self) -> Result<Finalized> {
        if self.points == 0 {
            return Err(MmgcError::invalid("cannot finalize an empty Gorilla model"));
        }
        Ok(Finalized { payload: self.writer.as_bytes().to_vec(), points: self.points })
    }
}

fn corrupt(reason: impl Into<String>) -> MmgcError {
    MmgcError::Decode { mid: GORILLA_ID, reason: reason.into() }
}

/// Decode `count` values from a Gorilla payload.
pub fn decode_values(payload: &[u8], count: usize) -> Result<Vec<f32>> {
    let mut reader = BitReader::new(payload);
    let mut values = Vec::with_capacity(count);
    if count == 0 {
        return Ok(values);
    }
    let mut previous = reader.read(32).ok_or_else(|| corrupt("missing first value"))? as u32;
    values.push(f32::from_bits(previous));
    let mut leading = 0u32;
    let mut trailing = 0u32;
    let truncated = || corrupt(format!("payload too short for {count} values"));
    while values.len() < count {
        if reader.read_bit().ok_or_else(truncated)? {
            if reader.read_bit().ok_or_else(truncated)? {
                leading = reader.read(5).ok_or_else(truncated)? as u32;
                let meaningful = reader.read(5).ok_or_else(truncated)? as u32 + 1;
                if leading + meaningful > 32 {
                    return Err(corrupt("control bits describe more than 32 bits"));
                }
                trailing = 32 - leading - meaningful;
            }
            let meaningful = 32 - leading - trailing;
            let xor = (reader.read(meaningful).ok_or_else(truncated)? as u32) << trailing;
            previous ^= xor;
        }
        values.push(f32::from_bits(previous));
    }
    Ok(values)
}

/// Values stored timestamp-major, member-minor.
pub struct RawValues {
    pub values: Vec<f32>,
    pub live: usize,
}

impl Model for RawValues {
    fn value(&self, tick: usize, rank: usize) -> f64 {
        f64::from(self.values[tick * self.live + rank])
    }

    fn aggregate(&self, _ticks: Range<usize>, _rank: usize) -> Option<Aggregate> {
        None
    }
}
