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

//! Model-based storage of groups of correlated, dimensional time series.
//!
//! Series are grouped using their dimension metadata ([`grouping`]), each group
//! is compressed online by [`ingest`] into segments using several model types
//! ([`models`]) within a user-defined error bound, the segments are persisted by
//! [`store`], and [`query`] computes aggregates directly on the models.

pub mod engine;
pub mod error;
pub mod grouping;
pub mod ingest;
pub mod models;
pub mod par;
pub mod query;
pub mod store;
pub mod types;

pub use error::{MmgcError, Result};
pub use types::{
    DataPoint, DimensionHierarchy, Dimensions, ErrorMode, ErrorSpec, Gid, Mid, Segment, Tid, TimeSeriesGroup,
    TimeSeriesMeta, Timestamp,
};
