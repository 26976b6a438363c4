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

//! Helpers shared by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;

use mmgc::engine::{ingest_prepared, prepare_series, EngineConfig, IngestReport, Prepared, RawSeries};
use mmgc::grouping::GroupingConfig;
use mmgc::ingest::{compress_group, AlignedSeries, IngestConfig};
use mmgc::models::ModelRegistry;
use mmgc::query::{Predicate, QueryEngine};
use mmgc::store::Store;
use mmgc::{Dimensions, ErrorSpec, Segment, Tid, TimeSeriesMeta, Timestamp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const START: Timestamp = 1_460_442_200_000;
pub const SI: i64 = 60_000;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Constant,
    Linear,
    Noisy,
    Mixed,
}

pub const REGIMES: [Regime; 4] = [Regime::Constant, Regime::Linear, Regime::Noisy, Regime::Mixed];

/// Values of one synthetic series. Roughly `gap_rate` of the points are
/// absent, in runs of one to five.
pub fn synthetic(rng: &mut ChaCha8Rng, regime: Regime, len: usize, gap_rate: f64) -> Vec<Option<f32>> {
    let base: f64 = rng.gen_range(-50.0..50.0);
    let slope: f64 = rng.gen_range(-0.5..0.5);
    let mut values = Vec::with_capacity(len);
    let mut phase = 0usize;
    let mut phase_left = 0usize;
    let mut level = base;
    let mut gap_left = 0usize;
    for i in 0..len {
        let regime = if regime == Regime::Mixed {
            if phase_left == 0 {
                phase = rng.gen_range(0..3);
                phase_left = rng.gen_range(10..80);
                level = base + rng.gen_range(-10.0..10.0);
            }
            phase_left -= 1;
            [Regime::Constant, Regime::Linear, Regime::Noisy][phase]
        } else {
            regime
        };
        let value = match regime {
            Regime::Constant => level,
            Regime::Linear => level + slope * i as f64,
            _ => level + rng.gen_range(-5.0..5.0),
        };
        if gap_left == 0 && rng.gen_bool(gap_rate / 3.0) {
            gap_left = rng.gen_range(1..=5);
        }
        if gap_left > 0 {
            gap_left -= 1;
            values.push(None);
        } else {
            values.push(Some(value as f32));
        }
    }
    values
}

pub fn meta(tid: Tid, members: &[&str]) -> TimeSeriesMeta {
    TimeSeriesMeta::new(tid, SI, format!("{tid}.csv"), members.iter().map(|m| m.to_string()).collect()).unwrap()
}

pub fn raw(values: Vec<Option<f32>>) -> RawSeries {
    RawSeries { si: SI, start: START, values }
}

/// Group and ingest in-memory series into a fresh store.
pub fn ingest(
    dims: Dimensions,
    series: Vec<(TimeSeriesMeta, Vec<Option<f32>>)>,
    grouping: &GroupingConfig,
    config: &EngineConfig,
) -> (tempfile::TempDir, Store, Prepared, IngestReport) {
    let mut metas = Vec::new();
    let mut raws = BTreeMap::new();
    for (meta, values) in series {
        raws.insert(meta.tid, raw(values));
        metas.push(meta);
    }
    let prepared = prepare_series(dims, metas, raws, grouping).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut store = Store::open(dir.path()).unwrap();
    let report = ingest_prepared(&mut store, config, &prepared, &ModelRegistry::default()).unwrap();
    (dir, store, prepared, report)
}

pub fn engine_config(spec: ErrorSpec) -> EngineConfig {
    EngineConfig { error_mode: spec.mode, epsilon: spec.epsilon, ..EngineConfig::default() }
}

/// Every reconstructed cell of the store keyed by `(tid, timestamp)`.
pub fn cells(store: &Store) -> BTreeMap<(Tid, Timestamp), f64> {
    let registry = ModelRegistry::default();
    let engine = QueryEngine::new(store, &registry);
    engine.data_point_scan(&Predicate::all()).unwrap().into_iter().map(|r| ((r.tid, r.timestamp), r.value)).collect()
}

/// Present input cells keyed by `(position, timestamp)`.
pub fn input_cells(series: &[Vec<Option<f32>>]) -> BTreeMap<(usize, Timestamp), f32> {
    let mut cells = BTreeMap::new();
    for (position, values) in series.iter().enumerate() {
        for (i, v) in values.iter().enumerate() {
            if let Some(v) = v {
                cells.insert((position, START + i as i64 * SI), *v);
            }
        }
    }
    cells
}

/// Compress one group directly and decode it back to `(position, timestamp)` cells.
pub fn roundtrip_group(
    config: IngestConfig,
    series: &[Vec<Option<f32>>],
) -> (Vec<Segment>, mmgc::ingest::IngestStats, BTreeMap<(usize, Timestamp), f64>) {
    let aligned: Vec<AlignedSeries> =
        series.iter().map(|v| AlignedSeries { start: START, values: v.clone() }).collect();
    let refs: Vec<&AlignedSeries> = aligned.iter().collect();
    let output = compress_group(&std::sync::Arc::new(config), 1, SI, &refs).unwrap();
    let registry = ModelRegistry::default();
    let mut decoded = BTreeMap::new();
    for segment in &output.segments {
        let model = registry.decode(segment, series.len()).unwrap();
        for (rank, position) in segment.live_positions(series.len()).into_iter().enumerate() {
            for (tick, ts) in segment.timestamps().enumerate() {
                let previous = decoded.insert((position, ts), model.value(tick, rank));
                assert!(previous.is_none(), "cell ({position}, {ts}) emitted twice");
            }
        }
    }
    (output.segments, output.stats, decoded)
}

pub fn ingest_config(spec: ErrorSpec) -> IngestConfig {
    let names: Vec<String> = ["pmc_mean", "swing", "gorilla"].iter().map(|s| s.to_string()).collect();
    IngestConfig::new(&ModelRegistry::default(), &names, spec, 50, 10.0).unwrap()
}

/// Two series: correlated steps, then one series
/// turns into noise, then both follow the same steps again.
pub fn diverging_streams() -> Vec<Vec<Option<f32>>> {
    let mut rng = rng(9);
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..900usize {
        let level = 10.0 + ((i / 40) % 4) as f32 * 5.0;
        a.push(Some(level));
        if (300..600).contains(&i) {
            b.push(Some(level + rng.gen_range(-40.0..40.0)));
        } else {
            b.push(Some(level));
        }
    }
    vec![a, b]
}
