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

//! Grouping of series by correlation clauses.

use std::collections::BTreeMap;

use super::clauses::{Atom, CorrelationClause, GroupingConfig};
use super::dimensions::{auto_distance, distance, lca_level, Weights};
use crate::error::{MmgcError, Result};
use crate::types::{Dimensions, Gid, Tid, TimeSeriesGroup, TimeSeriesMeta, MAX_GROUP_SIZE};

/// True if `source` names the same file as `listed`, either exactly or by file name.
pub(crate) fn same_source(source: &str, listed: &str) -> bool {
    if source == listed {
        return true;
    }
    let name = |s: &str| s.rsplit(['/', '\\']).next().unwrap_or(s).to_owned();
    name(source) == name(listed)
}

/// Level an LCA must reach for an `lca` atom, 0 meaning any.
fn required_lca(levels: usize, level: i64) -> usize {
    match level {
        0 => levels,
        n if n > 0 => n as usize,
        n => levels.saturating_sub(n.unsigned_abs() as usize),
    }
}

fn evaluate_atom(
    atom: &Atom,
    a: &[&TimeSeriesMeta],
    b: &[&TimeSeriesMeta],
    dims: &Dimensions,
    weights: &Weights,
) -> Result<bool> {
    let all = || a.iter().chain(b.iter());
    Ok(match atom {
        Atom::Sources(sources) => all().all(|s| sources.iter().any(|l| same_source(&s.source, l))),
        Atom::Member { dimension, level, member } => {
            let (dim, level) = dims.resolve_level(dimension, level)?;
            all().all(|s| s.member(dims, dim, level) == member)
        }
        Atom::Lca { dimension, level } => {
            let dim = dims.index_of(dimension)?;
            lca_level(dims, dim, a, b) >= required_lca(dims.dimensions[dim].levels(), *level)
        }
        Atom::Distance(threshold) => distance(dims, a, b, weights) <= *threshold,
        Atom::Auto => distance(dims, a, b, weights) <= auto_distance(dims)?,
    })
}

/// True if every series in `a` and `b` is correlated under `clause`. Series
/// with different sampling intervals or misaligned first timestamps never are.
pub fn correlated(
    clause: &CorrelationClause,
    a: &[&TimeSeriesMeta],
    b: &[&TimeSeriesMeta],
    dims: &Dimensions,
    weights: &Weights,
) -> Result<bool> {
    for atom in &clause.atoms {
        if !evaluate_atom(atom, a, b, dims, weights)? {
            return Ok(false);
        }
    }
    Ok(!clause.atoms.is_empty())
}

/// A series to group and the phase of its first timestamp (`t₁ mod SI`).
#[derive(Debug, Clone, Copy)]
pub struct GroupingInput<'a> {
    pub meta: &'a TimeSeriesMeta,
    pub phase: i64,
}

/// Group `series` using `config` and assign gids from 1. Series are taken in
/// tid order and every tid ends up in exactly one group.
pub fn group_time_series(
    series: &[TimeSeriesMeta],
    dims: &Dimensions,
    config: &GroupingConfig,
) -> Result<Vec<TimeSeriesGroup>> {
    let inputs: Vec<_> = series.iter().map(|meta| GroupingInput { meta, phase: 0 }).collect();
    group_aligned(&inputs, dims, config)
}

pub fn group_aligned(
    inputs: &[GroupingInput],
    dims: &Dimensions,
    config: &GroupingConfig,
) -> Result<Vec<TimeSeriesGroup>> {
    let mut order: Vec<&GroupingInput> = inputs.iter().collect();
    order.sort_by_key(|i| i.meta.tid);
    for window in order.windows(2) {
        if window[0].meta.tid == window[1].meta.tid {
            return Err(MmgcError::invalid(format!("duplicate tid {}", window[0].meta.tid)));
        }
    }
    let sets = match fast_path(&order, dims, config)? {
        Some(sets) => sets,
        None => {
            let singletons: Vec<Vec<usize>> = (0..order.len()).map(|i| vec![i]).collect();
            merge_until_fixed_point(&order, singletons, dims, config)?
        }
    };
    to_groups(&order, sets)
}

/// The grouping loop starting from `groups` (indices into `order`).
fn merge_until_fixed_point(
    order: &[&GroupingInput],
    mut groups: Vec<Vec<usize>>,
    dims: &Dimensions,
    config: &GroupingConfig,
) -> Result<Vec<Vec<usize>>> {
    for clause in &config.clauses {
        let mut modified = true;
        while modified {
            modified = false;
            let mut i = 0;
            while i < groups.len() {
                let mut j = i + 1;
                while j < groups.len() {
                    if compatible(order, &groups[i], &groups[j])
                        && correlated(
                            clause,
                            &metas(order, &groups[i]),
                            &metas(order, &groups[j]),
                            dims,
                            &config.weights,
                        )?
                    {
                        let absorbed = groups.remove(j);
                        groups[i].extend(absorbed);
                        modified = true;
                    } else {
                        j += 1;
                    }
                }
                i += 1;
            }
        }
    }
    Ok(groups)
}

fn metas<'a>(order: &[&'a GroupingInput], group: &[usize]) -> Vec<&'a TimeSeriesMeta> {
    group.iter().map(|&i| order[i].meta).collect()
}

fn compatible(order: &[&GroupingInput], a: &[usize], b: &[usize]) -> bool {
    let (x, y) = (order[a[0]], order[b[0]]);
    x.meta.si == y.meta.si && x.phase == y.phase
}

/// Direct assignment when the clauses can only produce disjoint groups: a
/// single clause whose atoms are all equivalence relations (shared sources,
/// shared members, or shared member chains down to a level).
fn fast_path(order: &[&GroupingInput], dims: &Dimensions, config: &GroupingConfig) -> Result<Option<Vec<Vec<usize>>>> {
    let [clause] = &config.clauses[..] else {
        return Ok(if config.clauses.is_empty() { Some((0..order.len()).map(|i| vec![i]).collect()) } else { None });
    };
    if clause.atoms.is_empty() || clause.atoms.iter().any(|a| matches!(a, Atom::Distance(_) | Atom::Auto)) {
        return Ok(None);
    }
    let mut classes: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (index, input) in order.iter().enumerate() {
        let mut key = vec![input.meta.si.to_string(), input.phase.to_string()];
        let mut eligible = true;
        for atom in &clause.atoms {
            match atom {
                Atom::Sources(sources) => {
                    eligible &= sources.iter().any(|l| same_source(&input.meta.source, l));
                }
                Atom::Member { dimension, level, member } => {
                    let (dim, level) = dims.resolve_level(dimension, level)?;
                    eligible &= input.meta.member(dims, dim, level) == member;
                }
                Atom::Lca { dimension, level } => {
                    let dim = dims.index_of(dimension)?;
                    let depth = required_lca(dims.dimensions[dim].levels(), *level);
                    key.extend(input.meta.chain(dims, dim)[..depth.min(dims.dimensions[dim].levels())].iter().cloned());
                    key.push("|".to_owned());
                }
                Atom::Distance(_) | Atom::Auto => unreachable!(),
            }
        }
        if !eligible {
            groups.push(vec![index]);
            continue;
        }
        match classes.get(&key) {
            Some(&g) => groups[g].push(index),
            None => {
                classes.insert(key, groups.len());
                groups.push(vec![index]);
            }
        }
    }
    Ok(Some(groups))
}

/// Sort members by tid, cap groups at 64 members and assign gids in order of
/// each group's smallest tid.
fn to_groups(order: &[&GroupingInput], sets: Vec<Vec<usize>>) -> Result<Vec<TimeSeriesGroup>> {
    let mut sets: Vec<Vec<Tid>> = sets
        .into_iter()
        .map(|set| {
            let mut tids: Vec<Tid> = set.iter().map(|&i| order[i].meta.tid).collect();
            tids.sort_unstable();
            tids
        })
        .collect();
    sets.sort_by_key(|tids| tids[0]);
    let si_of: BTreeMap<Tid, i64> = order.iter().map(|i| (i.meta.tid, i.meta.si)).collect();
    let mut groups = Vec::new();
    for tids in sets {
        for chunk in tids.chunks(MAX_GROUP_SIZE) {
            let gid = groups.len() as Gid + 1;
            groups.push(TimeSeriesGroup::new(gid, chunk.to_vec(), si_of[&chunk[0]])?);
        }
    }
    Ok(groups)
}

/// Run the grouping loop again starting from `groups` instead of singletons. A
/// grouping is stable when this returns the same sets.
pub fn regroup(
    series: &[TimeSeriesMeta],
    groups: &[TimeSeriesGroup],
    dims: &Dimensions,
    config: &GroupingConfig,
) -> Result<Vec<TimeSeriesGroup>> {
    let inputs: Vec<_> = series.iter().map(|meta| GroupingInput { meta, phase: 0 }).collect();
    let mut order: Vec<&GroupingInput> = inputs.iter().collect();
    order.sort_by_key(|i| i.meta.tid);
    let index_of: BTreeMap<Tid, usize> = order.iter().enumerate().map(|(i, s)| (s.meta.tid, i)).collect();
    let initial: Vec<Vec<usize>> = groups.iter().map(|g| g.members.iter().map(|t| index_of[t]).collect()).collect();
    let sets = merge_until_fixed_point(&order, initial, dims, config)?;
    to_groups(&order, sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grouping::dimensions::tests::location;
    use crate::types::DimensionHierarchy;

    fn measure_series() -> (Dimensions, Vec<TimeSeriesMeta>) {
        let dims = Dimensions::new(vec![
            DimensionHierarchy::new("Location", vec!["Park".into(), "Entity".into()]),
            DimensionHierarchy::new("Measure", vec!["Category".into(), "Concrete".into()]),
        ]);
        let row = |tid: Tid, members: [&str; 4]| {
            TimeSeriesMeta::new(tid, 100, format!("s{tid}.csv"), members.iter().map(|m| m.to_string()).collect())
                .unwrap()
        };
        let series = vec![
            row(1, ["Aalborg", "1", "Temperature", "Nacelle"]),
            row(2, ["Aalborg", "2", "Temperature", "Nacelle"]),
            row(3, ["Aalborg", "1", "Wind", "Speed"]),
            row(4, ["Farsø", "3", "Temperature", "Nacelle"]),
            row(5, ["Aalborg", "1", "Production", "ProductionMWh"]),
            row(6, ["Aalborg", "1", "Production", "ProductionMWh"]),
        ];
        (dims, series)
    }

    fn tids(groups: &[TimeSeriesGroup]) -> Vec<Vec<Tid>> {
        groups.iter().map(|g| g.members.clone()).collect()
    }

    #[test]
    fn no_clauses_gives_singletons() {
        let (dims, series) = measure_series();
        let groups = group_time_series(&series, &dims, &GroupingConfig::default()).unwrap();
        assert_eq!(groups.len(), 6);
        assert_eq!(groups.iter().map(|g| g.gid).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn member_triple() {
        let (dims, series) = measure_series();
        let clause = CorrelationClause::single(Atom::Member {
            dimension: "Measure".into(),
            level: "1".into(),
            member: "Temperature".into(),
        });
        assert!(correlated(&clause, &[&series[0]], &[&series[1]], &dims, &Weights::default()).unwrap());
        assert!(!correlated(&clause, &[&series[0]], &[&series[2]], &dims, &Weights::default()).unwrap());
        let groups = group_time_series(&series, &dims, &GroupingConfig::with_clauses(vec![clause])).unwrap();
        assert_eq!(tids(&groups), vec![vec![1, 2, 4], vec![3], vec![5], vec![6]]);
    }

    #[test]
    fn production_entity_clause() {
        let (dims, series) = measure_series();
        let config = GroupingConfig::parse("Location 0 AND Measure 1 Production").unwrap();
        let groups = group_time_series(&series, &dims, &config).unwrap();
        assert_eq!(tids(&groups), vec![vec![1], vec![2], vec![3], vec![4], vec![5, 6]]);
    }

    #[test]
    fn lca_pair_on_location_hierarchy() {
        let (dims, series) = location();
        let weights = Weights::default();
        let park = CorrelationClause::single(Atom::Lca { dimension: "Location".into(), level: 2 });
        assert!(correlated(&park, &[&series[1]], &[&series[2]], &dims, &weights).unwrap());
        let exact = CorrelationClause::single(Atom::Lca { dimension: "Location".into(), level: 0 });
        assert!(!correlated(&exact, &[&series[1]], &[&series[2]], &dims, &weights).unwrap());
        let all_but_one = CorrelationClause::single(Atom::Lca { dimension: "Location".into(), level: -1 });
        assert!(correlated(&all_but_one, &[&series[1]], &[&series[2]], &dims, &weights).unwrap());
        let zero = CorrelationClause::single(Atom::Distance(0.0));
        assert!(!correlated(&zero, &[&series[1]], &[&series[2]], &dims, &weights).unwrap());
        let unknown = CorrelationClause::single(Atom::Lca { dimension: "Nope".into(), level: 1 });
        assert!(correlated(&unknown, &[&series[1]], &[&series[2]], &dims, &weights).is_err());
    }

    #[test]
    fn auto_groups_identical_members() {
        let (dims, mut series) = measure_series();
        series.truncate(3);
        for s in &mut series {
            s.members = vec!["P".into(), "E".into(), "C".into(), "X".into()];
        }
        let config = GroupingConfig::with_clauses(vec![CorrelationClause::single(Atom::Auto)]);
        let groups = group_time_series(&series, &dims, &config).unwrap();
        assert_eq!(tids(&groups), vec![vec![1, 2, 3]]);
        // Oracle: every pair is correlated under auto.
        let weights = Weights::default();
        for a in &series {
            for b in &series {
                assert!(correlated(&config.clauses[0], &[a], &[b], &dims, &weights).unwrap());
            }
        }
    }

    #[test]
    fn sampling_interval_and_phase_separate_groups() {
        let (dims, series) = location();
        let config = GroupingConfig::with_clauses(vec![CorrelationClause::single(Atom::Distance(1.0))]);
        let groups = group_time_series(&series, &dims, &config).unwrap();
        assert_eq!(tids(&groups), vec![vec![1], vec![2, 3, 4]]);
        let inputs: Vec<_> =
            series.iter().enumerate().map(|(i, meta)| GroupingInput { meta, phase: (i % 2) as i64 }).collect();
        let groups = group_aligned(&inputs, &dims, &config).unwrap();
        assert_eq!(tids(&groups), vec![vec![1], vec![2, 4], vec![3]]);
    }

    #[test]
    fn oversized_groups_are_chunked() {
        let dims = Dimensions::default();
        let series: Vec<_> = (1..=130).map(|t| TimeSeriesMeta::new(t, 10, "", vec![]).unwrap()).collect();
        let config = GroupingConfig::with_clauses(vec![CorrelationClause::single(Atom::Distance(0.0))]);
        let groups = group_time_series(&series, &dims, &config).unwrap();
        assert_eq!(groups.iter().map(|g| g.len()).collect::<Vec<_>>(), vec![64, 64, 2]);
        assert_eq!(groups[1].members[0], 65);
    }

    #[test]
    fn fast_path_matches_algorithm() {
        let (dims, series) = measure_series();
        for text in ["Location 1", "Measure 1 Temperature", "Location -1 AND Measure 0", "sources s1.csv s3.csv"] {
            let config = GroupingConfig::parse(text).unwrap();
            let fast = group_time_series(&series, &dims, &config).unwrap();
            let inputs: Vec<_> = series.iter().map(|meta| GroupingInput { meta, phase: 0 }).collect();
            let order: Vec<_> = inputs.iter().collect();
            let singletons = (0..order.len()).map(|i| vec![i]).collect();
            let slow = to_groups(&order, merge_until_fixed_point(&order, singletons, &dims, &config).unwrap()).unwrap();
            assert_eq!(fast, slow, "{text}");
        }
    }

    #[test]
    fn later_clauses_merge_earlier_groups() {
        let (dims, series) = measure_series();
        let config = GroupingConfig::parse("Measure 1 Production\nLocation 1").unwrap();
        let groups = group_time_series(&series, &dims, &config).unwrap();
        assert_eq!(tids(&groups), vec![vec![1, 2, 3, 5, 6], vec![4]]);
        assert_eq!(regroup(&series, &groups, &dims, &config).unwrap(), groups);
    }
}
