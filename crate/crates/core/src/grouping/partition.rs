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

//! Load balancing of groups across partitions.

use crate::types::{Gid, TimeSeriesGroup};

/// Node budget for the exact search. Inputs that exhaust it keep the best
/// assignment found so far.
pub const SEARCH_BUDGET: u64 = 5_000_000;

/// Data points per minute produced by a group.
pub fn group_load(group: &TimeSeriesGroup) -> f64 {
    group.len() as f64 * 60_000.0 / group.si as f64
}

/// Groups per partition with the resulting loads.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    pub partitions: Vec<Vec<Gid>>,
    pub loads: Vec<f64>,
}

impl PartitionPlan {
    fn from_assignment(groups: &[TimeSeriesGroup], loads: &[f64], assignment: &[usize], k: usize) -> Self {
        let mut partitions = vec![Vec::new(); k];
        let mut totals = vec![0.0; k];
        for (index, &p) in assignment.iter().enumerate() {
            partitions[p].push(groups[index].gid);
            totals[p] += loads[index];
        }
        for partition in &mut partitions {
            partition.sort_unstable();
        }
        Self { partitions, loads: totals }
    }

    /// Difference between the heaviest and the lightest partition.
    pub fn spread(&self) -> f64 {
        spread(&self.loads)
    }

    pub fn partition_of(&self, gid: Gid) -> Option<usize> {
        self.partitions.iter().position(|p| p.contains(&gid))
    }
}

fn spread(loads: &[f64]) -> f64 {
    let max = loads.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = loads.iter().copied().fold(f64::INFINITY, f64::min);
    if loads.is_empty() {
        0.0
    } else {
        max - min
    }
}

/// Indices sorted by descending load, ties by position.
fn by_load(loads: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..loads.len()).collect();
    order.sort_by(|&a, &b| loads[b].total_cmp(&loads[a]).then(a.cmp(&b)));
    order
}

fn lpt_assignment(loads: &[f64], k: usize) -> Vec<usize> {
    let mut totals = vec![0.0f64; k];
    let mut assignment = vec![0; loads.len()];
    for index in by_load(loads) {
        let lightest = (0..k).min_by(|&a, &b| totals[a].total_cmp(&totals[b])).unwrap_or(0);
        assignment[index] = lightest;
        totals[lightest] += loads[index];
    }
    assignment
}

/// Greedy longest-processing-time assignment.
pub fn lpt_partition(groups: &[TimeSeriesGroup], k: usize) -> PartitionPlan {
    let k = k.max(1);
    let loads: Vec<f64> = groups.iter().map(group_load).collect();
    PartitionPlan::from_assignment(groups, &loads, &lpt_assignment(&loads, k), k)
}

/// Assign `groups` to `k` partitions minimising the max-min load spread. The
/// LPT assignment seeds a depth-first search that stops after
/// [`SEARCH_BUDGET`] nodes, so small inputs are solved exactly.
pub fn partition_groups(groups: &[TimeSeriesGroup], k: usize) -> PartitionPlan {
    let k = k.max(1);
    let loads: Vec<f64> = groups.iter().map(group_load).collect();
    let mut best = lpt_assignment(&loads, k);
    if k > 1 && !groups.is_empty() {
        let mut search = Search::new(&loads, k, &best);
        search.run();
        best = search.best;
    }
    PartitionPlan::from_assignment(groups, &loads, &best, k)
}

struct Search<'a> {
    loads: &'a [f64],
    order: Vec<usize>,
    remaining: Vec<f64>,
    total: f64,
    k: usize,
    totals: Vec<f64>,
    current: Vec<usize>,
    best: Vec<usize>,
    best_spread: f64,
    nodes: u64,
}

impl<'a> Search<'a> {
    fn new(loads: &'a [f64], k: usize, seed: &[usize]) -> Self {
        let order = by_load(loads);
        let mut remaining = vec![0.0; order.len() + 1];
        for i in (0..order.len()).rev() {
            remaining[i] = remaining[i + 1] + loads[order[i]];
        }
        let mut seed_totals = vec![0.0; k];
        for (index, &p) in seed.iter().enumerate() {
            seed_totals[p] += loads[index];
        }
        Self {
            loads,
            total: remaining[0],
            remaining,
            order,
            k,
            totals: vec![0.0; k],
            current: vec![0; loads.len()],
            best: seed.to_vec(),
            best_spread: spread(&seed_totals),
            nodes: 0,
        }
    }

    fn run(&mut self) {
        self.descend(0);
    }

    fn lower_bound(&self, depth: usize) -> f64 {
        let mean = self.total / self.k as f64;
        let max = self.totals.iter().copied().fold(mean, f64::max);
        let min = self.totals.iter().copied().fold(f64::INFINITY, f64::min);
        max - (min + self.remaining[depth]).min(mean)
    }

    fn descend(&mut self, depth: usize) {
        if self.best_spread <= 0.0 || self.nodes >= SEARCH_BUDGET {
            return;
        }
        self.nodes += 1;
        if depth == self.order.len() {
            let s = spread(&self.totals);
            if s < self.best_spread {
                self.best_spread = s;
                self.best = self.current.clone();
            }
            return;
        }
        if self.lower_bound(depth) >= self.best_spread {
            return;
        }
        let index = self.order[depth];
        let mut tried: Vec<f64> = Vec::with_capacity(self.k);
        let mut candidates: Vec<usize> = (0..self.k).collect();
        candidates.sort_by(|&a, &b| self.totals[a].total_cmp(&self.totals[b]));
        for p in candidates {
            // Partitions with equal totals are interchangeable.
            if tried.contains(&self.totals[p]) {
                continue;
            }
            tried.push(self.totals[p]);
            self.totals[p] += self.loads[index];
            self.current[index] = p;
            self.descend(depth + 1);
            self.totals[p] -= self.loads[index];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn groups_with_loads(loads: &[usize]) -> Vec<TimeSeriesGroup> {
        // One member at si 60000 contributes load 1.
        loads
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let gid = i as Gid + 1;
                TimeSeriesGroup::new(gid, (0..n as u32).map(|m| gid * 100 + m).collect(), 60_000).unwrap()
            })
            .collect()
    }

    /// Smallest spread over every assignment of `loads` to `k` partitions.
    fn exhaustive_spread(loads: &[f64], k: usize) -> f64 {
        let n = loads.len();
        let mut best = f64::INFINITY;
        let mut assignment = vec![0usize; n];
        loop {
            let mut totals = vec![0.0; k];
            for (i, &p) in assignment.iter().enumerate() {
                totals[p] += loads[i];
            }
            best = best.min(spread(&totals));
            let mut i = 0;
            loop {
                if i == n {
                    return best;
                }
                assignment[i] += 1;
                if assignment[i] < k {
                    break;
                }
                assignment[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn equal_loads_split_evenly() {
        let plan = partition_groups(&groups_with_loads(&[2, 2, 2, 2]), 2);
        assert_eq!(plan.partitions.iter().map(Vec::len).collect::<Vec<_>>(), vec![2, 2]);
        assert_eq!(plan.spread(), 0.0);
    }

    #[test]
    fn search_beats_greedy() {
        let groups = groups_with_loads(&[5, 4, 3, 3, 3]);
        assert_eq!(lpt_partition(&groups, 2).spread(), 2.0);
        let plan = partition_groups(&groups, 2);
        assert_eq!(plan.spread(), 0.0);
        let mut parts = plan.partitions.clone();
        parts.sort();
        assert_eq!(parts, vec![vec![1, 2], vec![3, 4, 5]]);
    }

    #[test]
    fn single_partition_holds_everything() {
        let plan = partition_groups(&groups_with_loads(&[1, 7, 3]), 1);
        assert_eq!(plan.partitions, vec![vec![1, 2, 3]]);
        assert_eq!(plan.loads, vec![11.0]);
        assert!(partition_groups(&[], 3).partitions.iter().all(Vec::is_empty));
    }

    #[test]
    fn load_uses_sampling_interval() {
        let group = TimeSeriesGroup::new(1, vec![1, 2, 3], 100).unwrap();
        assert_eq!(group_load(&group), 1800.0);
    }

    proptest! {
        #[test]
        fn search_is_optimal_on_small_inputs(
            loads in prop::collection::vec(1usize..20, 1..9),
            k in 1usize..4,
        ) {
            let groups = groups_with_loads(&loads);
            let plan = partition_groups(&groups, k);
            let as_f64: Vec<f64> = loads.iter().map(|&l| l as f64).collect();
            prop_assert_eq!(plan.spread(), exhaustive_spread(&as_f64, k));
            let mut gids: Vec<Gid> = plan.partitions.concat();
            gids.sort_unstable();
            prop_assert_eq!(gids, (1..=loads.len() as Gid).collect::<Vec<_>>());
            prop_assert!(plan.spread() <= lpt_partition(&groups, k).spread());
        }
    }
}
