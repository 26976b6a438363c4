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

//! Per-series scaling constants.

use std::collections::BTreeMap;

use super::algorithm::same_source;
use super::clauses::ScalingRule;
use crate::error::Result;
use crate::types::{Dimensions, Tid, TimeSeriesMeta};

/// Scaling constant for every series. Later rules override earlier ones and
/// series matched by no rule keep 1.0.
pub fn resolve_scaling(
    series: &[TimeSeriesMeta],
    dims: &Dimensions,
    rules: &[ScalingRule],
) -> Result<BTreeMap<Tid, f64>> {
    let mut resolved = BTreeMap::new();
    for meta in series {
        let mut constant = 1.0;
        for rule in rules {
            let matches = match rule {
                ScalingRule::Source { source, .. } => same_source(&meta.source, source),
                ScalingRule::Member { dimension, level, member, .. } => {
                    let (dim, level) = dims.resolve_level(dimension, level)?;
                    meta.member(dims, dim, level) == member
                }
            };
            if matches {
                constant = rule.constant();
            }
        }
        resolved.insert(meta.tid, constant);
    }
    Ok(resolved)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grouping::dimensions::tests::location;
    use crate::types::DimensionHierarchy;

    #[test]
    fn defaults_to_one() {
        let (dims, series) = location();
        let resolved = resolve_scaling(&series, &dims, &[]).unwrap();
        assert!(resolved.values().all(|&c| c == 1.0));
    }

    #[test]
    fn member_rule_and_override() {
        let dims = Dimensions::new(vec![DimensionHierarchy::new("Measure", vec!["Category".into()])]);
        let series = vec![
            TimeSeriesMeta::new(3, 60_000, "a.csv", vec!["Temperature".into()]).unwrap(),
            TimeSeriesMeta::new(4, 60_000, "data/b.csv", vec!["Wind".into()]).unwrap(),
        ];
        let rules = vec![
            ScalingRule::Member {
                dimension: "Measure".into(),
                level: "1".into(),
                member: "Temperature".into(),
                constant: 4.75,
            },
            ScalingRule::Source { source: "b.csv".into(), constant: 2.0 },
            ScalingRule::Source { source: "data/b.csv".into(), constant: -0.5 },
        ];
        let resolved = resolve_scaling(&series, &dims, &rules).unwrap();
        assert_eq!(resolved[&3], 4.75);
        assert_eq!(resolved[&4], -0.5);
    }
}
