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

//! Grouping of correlated series and partitioning of the groups.

pub mod algorithm;
pub mod clauses;
pub mod dimensions;
pub mod partition;
pub mod scaling;

pub use algorithm::{correlated, group_aligned, group_time_series, regroup, GroupingInput};
pub use clauses::{Atom, CorrelationClause, GroupingConfig, ScalingRule};
pub use dimensions::{auto_distance, distance, lca_level, load_dimensions, DimensionRow, Weights};
pub use partition::{group_load, lpt_partition, partition_groups, PartitionPlan};
pub use scaling::resolve_scaling;
