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

mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::*;
use mmgc::grouping::{GroupingConfig, ScalingRule};
use mmgc::models::{Aggregate, ModelRegistry};
use mmgc::query::{
    rewrite, AggregateFunction, AggregateRequest, GroupKey, MemberFilter, Predicate, QueryEngine, RollupLevel,
};
use mmgc::store::{Store, StoreCatalog};
use mmgc::{DimensionHierarchy, Dimensions, ErrorSpec, MmgcError};
use rand::seq::SliceRandom;
use rand::Rng;

fn location_dims() -> Dimensions {
    Dimensions::new(vec![DimensionHierarchy::new("Location", vec!["Park".into(), "Entity".into()])])
}

/// Six series in two parks with mixed behaviour and one negative scaling.
fn fixture(spec: ErrorSpec) -> (tempfile::TempDir, Store) {
    let mut rng = rng(42);
    let parks = ["Aalborg", "Aalborg", "Aalborg", "Farsø", "Farsø", "Skive"];
    let series = parks
        .iter()
        .enumerate()
        .map(|(i, park)| {
            let tid = i as u32 + 1;
            let entity = format!("e{tid}");
            (meta(tid, &[park, &entity]), synthetic(&mut rng, Regime::Mixed, 2_000, 0.05))
        })
        .collect();
    let mut grouping = GroupingConfig::parse("Location 1").unwrap();
    grouping.scaling.push(ScalingRule::Member {
        dimension: "Location".into(),
        level: "Entity".into(),
        member: "e5".into(),
        constant: -2.0,
    });
    let (dir, store, _, _) = ingest(location_dims(), series, &grouping, &engine_config(spec));
    (dir, store)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-5 * a.abs().max(b.abs()).max(1.0)
}

fn fold<'a>(rows: impl Iterator<Item = &'a f64>) -> Aggregate {
    let mut aggregate = Aggregate::default();
    for &v in rows {
        aggregate.add(v);
    }
    aggregate
}

fn assert_matches(got: &Aggregate, expected: &Aggregate, context: &str) {
    assert_eq!(got.count, expected.count, "{context}");
    assert!(close(got.sum, expected.sum), "{context}: sum {} vs {}", got.sum, expected.sum);
    if expected.count > 0 {
        assert!(close(got.min, expected.min), "{context}: min {} vs {}", got.min, expected.min);
        assert!(close(got.max, expected.max), "{context}: max {} vs {}", got.max, expected.max);
    }
}

fn random_predicate(rng: &mut rand_chacha::ChaCha8Rng) -> Predicate {
    let mut predicate = Predicate::all();
    if rng.gen_bool(0.5) {
        let mut tids: Vec<u32> = (1..=6).collect();
        tids.shuffle(rng);
        predicate.tids = Some(tids[..rng.gen_range(1..=6)].iter().copied().collect());
    }
    if rng.gen_bool(0.3) {
        let park = ["Aalborg", "Farsø", "Skive"][rng.gen_range(0..3)];
        predicate.members.push(MemberFilter::new(None, "Park", park));
    }
    if rng.gen_bool(0.6) {
        let from = START + rng.gen_range(-10..2_000) * SI + rng.gen_range(0..SI);
        let to = from + rng.gen_range(0..1_500) * SI;
        predicate.range = Some((from, to));
    }
    predicate
}

#[test]
fn aggregates_agree_with_point_folds() {
    let (_dir, store) = fixture(ErrorSpec::relative(5.0));
    let registry = ModelRegistry::default();
    let engine = QueryEngine::new(&store, &registry);
    let mut rng = rng(7);
    for round in 0..200 {
        let predicate = random_predicate(&mut rng);
        let rows = match engine.data_point_scan(&predicate) {
            Ok(rows) => rows,
            Err(MmgcError::UnknownMember(_)) => continue,
            Err(e) => panic!("{e}"),
        };
        if let Some(tids) = &predicate.tids {
            assert!(rows.iter().all(|r| tids.contains(&r.tid)));
        }
        let mut by_tid: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        let mut by_park: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut by_hour: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
        for row in &rows {
            by_tid.entry(row.tid).or_default().push(row.value);
            by_park.entry(row.members[0].clone()).or_default().push(row.value);
        }
        let all = fold(rows.iter().map(|r| &r.value));

        let simple = engine.simple_aggregate(&AggregateRequest::new(AggregateFunction::Sum), &predicate).unwrap();
        let total = simple.first().map(|r| r.aggregate).unwrap_or_default();
        assert_matches(&total, &all, &format!("round {round} total"));

        let per_tid =
            engine.simple_aggregate(&AggregateRequest::new(AggregateFunction::Avg).by_tid(), &predicate).unwrap();
        assert_eq!(per_tid.len(), by_tid.len());
        for row in &per_tid {
            let GroupKey::Tid(tid) = row.key else { panic!() };
            let expected = fold(by_tid[&tid].iter());
            assert_matches(&row.aggregate, &expected, &format!("round {round} tid {tid}"));
            assert!(close(row.value.unwrap(), expected.avg().unwrap()));
        }

        let per_park = engine
            .simple_aggregate(
                &AggregateRequest::new(AggregateFunction::Max).by_member(Some("Location"), "Park"),
                &predicate,
            )
            .unwrap();
        for row in &per_park {
            let GroupKey::Member(park) = &row.key else { panic!() };
            assert_matches(&row.aggregate, &fold(by_park[park].iter()), &format!("round {round} park {park}"));
        }

        let level = [RollupLevel::Hour, RollupLevel::Day][round % 2];
        let cube =
            engine.cube_aggregate(&AggregateRequest::new(AggregateFunction::Sum).rolled_up(level), &predicate).unwrap();
        let mut merged = Aggregate::default();
        for row in &cube {
            merged.merge(&row.aggregate);
        }
        assert_matches(&merged, &all, &format!("round {round} cube partition"));
        assert_eq!(merged.count, total.count);
        if level == RollupLevel::Hour {
            // Points strictly inside an hour land in that hour's bucket.
            for row in &rows {
                if row.timestamp % 3_600_000 != 0 {
                    by_hour.entry(row.timestamp - row.timestamp.rem_euclid(3_600_000)).or_default().push(row.value);
                }
            }
            let buckets: BTreeSet<i64> = cube.iter().filter_map(|r| r.bucket).collect();
            assert!(by_hour.keys().all(|b| buckets.contains(b)));
        }
    }
}

#[test]
fn pmc_aggregates_are_exact() {
    let series = vec![(meta(1, &["P", "E"]), vec![Some(8.92f32); 30])];
    let (_dir, store, _, _) =
        ingest(location_dims(), series, &GroupingConfig::default(), &engine_config(ErrorSpec::absolute(0.1)));
    assert!(store.segments().all(|s| s.mid == 1 && s.payload.len() == 4));
    let registry = ModelRegistry::default();
    let engine = QueryEngine::new(&store, &registry);
    let rows = engine.data_point_scan(&Predicate::all().between(START, START + 2 * SI)).unwrap();
    assert_eq!(rows.iter().map(|r| r.value).collect::<Vec<_>>(), vec![f64::from(8.92f32); 3]);
    let count = engine.simple_aggregate(&AggregateRequest::new(AggregateFunction::Count), &Predicate::all()).unwrap();
    assert_eq!(count[0].value, Some(30.0));
    let min = engine.simple_aggregate(&AggregateRequest::new(AggregateFunction::Min), &Predicate::all()).unwrap();
    assert_eq!(min[0].value, Some(f64::from(8.92f32)));
}

#[test]
fn scaling_is_linear_and_swaps_min_and_max() {
    let values: Vec<Option<f32>> = (0..100).map(|i| Some((i as f32 * 0.37).sin() * 10.0)).collect();
    let run = |constant: f64| {
        let mut grouping = GroupingConfig::default();
        grouping.scaling.push(ScalingRule::Source { source: "1.csv".into(), constant });
        let series =
            vec![(meta(1, &["P", "E"]), values.iter().map(|v| v.map(|x| (f64::from(x) * constant) as f32)).collect())];
        let (dir, store, _, _) = ingest(location_dims(), series, &grouping, &engine_config(ErrorSpec::lossless()));
        let registry = ModelRegistry::default();
        let engine = QueryEngine::new(&store, &registry);
        let rows = engine.simple_aggregate(&AggregateRequest::new(AggregateFunction::Sum), &Predicate::all()).unwrap();
        drop(dir);
        rows[0].aggregate
    };
    let base = run(1.0);
    let doubled = run(2.0);
    let negated = run(-2.0);
    assert_eq!(doubled.count, base.count);
    assert!(close(doubled.sum, 2.0 * base.sum));
    assert!(close(doubled.max, 2.0 * base.max));
    assert!(close(negated.min, -2.0 * base.max));
    assert!(close(negated.max, -2.0 * base.min));
}

#[test]
fn gaps_produce_no_rows() {
    let mut values: Vec<Option<f32>> = vec![Some(1.0); 20];
    for v in &mut values[5..10] {
        *v = None;
    }
    let series = vec![(meta(1, &["P", "a"]), values), (meta(2, &["P", "b"]), vec![Some(1.0); 20])];
    let grouping = GroupingConfig::parse("Location 1").unwrap();
    let (_dir, store, _, report) = ingest(location_dims(), series, &grouping, &engine_config(ErrorSpec::lossless()));
    assert_eq!(report.groups, 1);
    let rows: Vec<_> = cells(&store).into_keys().filter(|(tid, _)| *tid == 1).map(|(_, ts)| ts).collect();
    let expected: Vec<_> = (0..20).filter(|i| !(5..10).contains(i)).map(|i| START + i * SI).collect();
    assert_eq!(rows, expected);
}

#[test]
fn rewriting_uses_groups_and_positions() {
    let dims = location_dims();
    let metas = vec![
        {
            let mut m = meta(1, &["Farsø", "9572"]);
            m.gid = 1;
            m
        },
        {
            let mut m = meta(2, &["Aalborg", "9632"]);
            m.gid = 3;
            m
        },
        {
            let mut m = meta(3, &["Aalborg", "9634"]);
            m.gid = 3;
            m
        },
    ];
    let catalog = StoreCatalog::new(dims, metas, StoreCatalog::model_table(&ModelRegistry::default())).unwrap();
    let by_tid = rewrite(&Predicate::tids([1]), &catalog).unwrap();
    assert_eq!(by_tid.masks, BTreeMap::from([(1, 0b1)]));
    let by_park =
        rewrite(&Predicate::default().with_member(MemberFilter::parse("Park=Aalborg").unwrap()), &catalog).unwrap();
    assert_eq!(by_park.masks, BTreeMap::from([(3, 0b11)]));
    let narrowed =
        rewrite(&Predicate::tids([3]).with_member(MemberFilter::parse("Park=Aalborg").unwrap()), &catalog).unwrap();
    assert_eq!(narrowed.masks, BTreeMap::from([(3, 0b10)]));
    assert_eq!(rewrite(&Predicate::all(), &catalog).unwrap().gids(), BTreeSet::from([1, 3]));
    assert!(matches!(rewrite(&Predicate::tids([9]), &catalog), Err(MmgcError::UnknownTid(9))));
    let unknown = Predicate::default().with_member(MemberFilter::parse("Park=Skive").unwrap());
    assert!(matches!(rewrite(&unknown, &catalog), Err(MmgcError::UnknownMember(_))));
    assert!(rewrite(&Predicate::default(), &catalog).is_err());
}

#[test]
fn empty_store_returns_no_rows() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let registry = ModelRegistry::default();
    let engine = QueryEngine::new(&store, &registry);
    assert!(engine.data_point_scan(&Predicate::all()).unwrap().is_empty());
    assert!(engine
        .simple_aggregate(&AggregateRequest::new(AggregateFunction::Sum), &Predicate::all())
        .unwrap()
        .is_empty());
}
