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

//! End-to-end pipeline: read series, group, plan partitions, compress and store.

pub mod config;
pub mod csv_input;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

pub use config::EngineConfig;
pub use csv_input::{load_series_csv, parse_timestamp, RawSeries};

use crate::error::{MmgcError, Result};
use crate::grouping::{
    group_aligned, load_dimensions, partition_groups, resolve_scaling, GroupingConfig, GroupingInput, PartitionPlan,
};
use crate::ingest::{compress_group, AlignedSeries, GroupOutput, IngestConfig, IngestStats};
use crate::models::ModelRegistry;
use crate::par;
use crate::query::{Predicate, QueryEngine};
use crate::store::{Store, StoreCatalog};
use crate::types::{Dimensions, Gid, Tid, TimeSeriesGroup, TimeSeriesMeta};

/// Bytes of one uncompressed data point: a 32-bit tid, a 64-bit timestamp and
/// a 32-bit value.
pub const RAW_POINT_BYTES: u64 = 12;

/// Series read from disk with their metadata and groups.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dimensions: Dimensions,
    /// Metadata with gid and scaling assigned, in tid order.
    pub series: Vec<TimeSeriesMeta>,
    pub raw: BTreeMap<Tid, RawSeries>,
    pub groups: Vec<TimeSeriesGroup>,
}

/// Expand directories into the CSV files they contain, sorted by name.
pub fn expand_sources(sources: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for source in sources {
        if source.is_dir() {
            let mut inner: Vec<PathBuf> =
                std::fs::read_dir(source)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
            inner.retain(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")));
            inner.sort();
            files.extend(inner);
        } else {
            files.push(source.clone());
        }
    }
    Ok(files)
}

/// Tids from a dimensions file when configured. Otherwise file stems when
/// every stem is a number, else positions in argument order starting at 1.
fn identify(config: &EngineConfig, files: &[PathBuf]) -> Result<(Dimensions, Vec<(Tid, Vec<String>)>)> {
    let display = |p: &PathBuf| p.to_string_lossy().into_owned();
    if let Some(path) = &config.dimensions {
        let (dims, rows) = load_dimensions(path)?;
        let mut identities = Vec::new();
        for file in files {
            let name = display(file);
            let matches: Vec<_> =
                rows.iter().filter(|r| crate::grouping::algorithm::same_source(&name, &r.source)).collect();
            match matches.as_slice() {
                [row] => identities.push((row.tid, row.members.clone())),
                [] => return Err(MmgcError::invalid(format!("{name} is not listed in {}", path.display()))),
                _ => return Err(MmgcError::invalid(format!("{name} matches several rows of {}", path.display()))),
            }
        }
        return Ok((dims, identities));
    }
    let stems: Option<Vec<Tid>> =
        files.iter().map(|f| f.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse().ok())).collect();
    let tids = match stems {
        Some(tids) if tids.iter().all(|&t| t > 0) => tids,
        _ => (1..=files.len() as Tid).collect(),
    };
    Ok((Dimensions::default(), tids.into_iter().map(|t| (t, Vec::new())).collect()))
}

/// Read `sources`, attach metadata and scaling, and group the series.
pub fn prepare(config: &EngineConfig, sources: &[PathBuf]) -> Result<Prepared> {
    config.validate()?;
    let files = expand_sources(sources)?;
    if files.is_empty() {
        return Err(MmgcError::invalid("no input series"));
    }
    let (dimensions, identities) = identify(config, &files)?;
    let loaded = par::map(&files, |f| load_series_csv(f));
    let mut series = Vec::new();
    let mut raw = BTreeMap::new();
    for ((file, (tid, members)), data) in files.iter().zip(identities).zip(loaded) {
        let data = data?;
        series.push(TimeSeriesMeta::new(tid, data.si, file.to_string_lossy(), members)?);
        if raw.insert(tid, data).is_some() {
            return Err(MmgcError::invalid(format!("tid {tid} is used by more than one input")));
        }
    }
    let grouping = match &config.grouping {
        Some(path) => GroupingConfig::load(path)?,
        None => GroupingConfig::default(),
    };
    prepare_series(dimensions, series, raw, &grouping)
}

/// Resolve scaling and group series that are already in memory.
pub fn prepare_series(
    dimensions: Dimensions,
    mut series: Vec<TimeSeriesMeta>,
    raw: BTreeMap<Tid, RawSeries>,
    grouping: &GroupingConfig,
) -> Result<Prepared> {
    series.sort_by_key(|m| m.tid);
    for meta in &series {
        meta.validate(&dimensions)?;
        let data = raw.get(&meta.tid).ok_or_else(|| MmgcError::invalid(format!("no values for tid {}", meta.tid)))?;
        if data.si != meta.si {
            return Err(MmgcError::invalid(format!("tid {} has two sampling intervals", meta.tid)));
        }
    }
    let scaling = resolve_scaling(&series, &dimensions, &grouping.scaling)?;
    for meta in &mut series {
        meta.scaling = scaling[&meta.tid];
        if meta.scaling == 0.0 || !meta.scaling.is_finite() {
            return Err(MmgcError::invalid(format!("tid {} has invalid scaling {}", meta.tid, meta.scaling)));
        }
    }
    let inputs: Vec<GroupingInput> =
        series.iter().map(|meta| GroupingInput { meta, phase: raw[&meta.tid].start.rem_euclid(meta.si) }).collect();
    let groups = group_aligned(&inputs, &dimensions, grouping)?;
    let gid_of: BTreeMap<Tid, Gid> = groups.iter().flat_map(|g| g.members.iter().map(move |&t| (t, g.gid))).collect();
    for meta in &mut series {
        meta.gid = gid_of[&meta.tid];
    }
    Ok(Prepared { dimensions, series, raw, groups })
}

/// Summary of one ingestion run.
#[derive(Debug, Clone)]
pub struct IngestReport {
    pub series: usize,
    pub groups: usize,
    pub plan: PartitionPlan,
    pub stats: IngestStats,
    pub segments: usize,
    pub bytes_written: u64,
    pub raw_bytes: u64,
    pub mid_counts: BTreeMap<String, u64>,
    /// Time spent compressing, summed over groups.
    pub compress_time: Duration,
    pub elapsed: Duration,
    pub average_error: f64,
}

impl IngestReport {
    pub fn average_group_size(&self) -> f64 {
        if self.groups == 0 {
            0.0
        } else {
            self.series as f64 / self.groups as f64
        }
    }

    pub fn compression_ratio(&self) -> f64 {
        self.raw_bytes as f64 / self.bytes_written.max(1) as f64
    }

    /// Share of compression time spent splitting and merging groups.
    pub fn split_merge_share(&self) -> f64 {
        let total = self.compress_time.as_secs_f64();
        if total == 0.0 {
            0.0
        } else {
            self.stats.split_merge_time.as_secs_f64() / total
        }
    }
}

impl fmt::Display for IngestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "series\t{}", self.series)?;
        writeln!(f, "groups\t{} ({:.2} series on average)", self.groups, self.average_group_size())?;
        writeln!(f, "partitions\t{} (load spread {})", self.plan.partitions.len(), self.plan.spread())?;
        writeln!(f, "data points\t{}", self.stats.points)?;
        writeln!(f, "segments\t{}", self.segments)?;
        for (name, count) in &self.mid_counts {
            writeln!(f, "  {name}\t{count}")?;
        }
        writeln!(f, "bytes written\t{}", self.bytes_written)?;
        writeln!(f, "raw bytes\t{}", self.raw_bytes)?;
        writeln!(f, "compression ratio\t{:.2}", self.compression_ratio())?;
        writeln!(
            f,
            "splits / merges\t{} / {} ({:.2}% of compression time)",
            self.stats.splits,
            self.stats.merges,
            self.split_merge_share() * 100.0
        )?;
        writeln!(f, "average error\t{:.6}%", self.average_error)?;
        write!(f, "elapsed\t{:.3} s", self.elapsed.as_secs_f64())
    }
}

/// Read, group and store `sources` in the store named by `config`.
pub fn ingest(config: &EngineConfig, sources: &[PathBuf], registry: &ModelRegistry) -> Result<IngestReport> {
    let started = Instant::now();
    let prepared = prepare(config, sources)?;
    let mut store = Store::open(&config.store)?;
    let mut report = ingest_prepared(&mut store, config, &prepared, registry)?;
    report.elapsed = started.elapsed();
    Ok(report)
}

/// Compress `prepared` into an empty `store`.
pub fn ingest_prepared(
    store: &mut Store,
    config: &EngineConfig,
    prepared: &Prepared,
    registry: &ModelRegistry,
) -> Result<IngestReport> {
    let started = Instant::now();
    if !store.catalog().is_empty() || store.segment_count() > 0 {
        return Err(MmgcError::invalid(format!("store {} already holds data", store.dir().display())));
    }
    let catalog =
        StoreCatalog::new(prepared.dimensions.clone(), prepared.series.clone(), StoreCatalog::model_table(registry))?;
    store.set_catalog(catalog)?;
    let plan = partition_groups(&prepared.groups, config.partitions);
    let ingest_config: Arc<IngestConfig> = Arc::new(config.ingest_config(registry)?);

    let aligned: BTreeMap<Tid, AlignedSeries> = prepared
        .series
        .iter()
        .map(|meta| {
            let raw = &prepared.raw[&meta.tid];
            let values = if meta.scaling == 1.0 {
                raw.values.clone()
            } else {
                raw.values.iter().map(|v| v.map(|v| (f64::from(v) / meta.scaling) as f32)).collect()
            };
            (meta.tid, AlignedSeries { start: raw.start, values })
        })
        .collect();
    let groups: BTreeMap<Gid, &TimeSeriesGroup> = prepared.groups.iter().map(|g| (g.gid, g)).collect();

    let per_partition = par::map(&plan.partitions, |gids| -> Result<Vec<(GroupOutput, Duration)>> {
        gids.iter()
            .map(|gid| {
                let group = groups[gid];
                let members: Vec<&AlignedSeries> = group.members.iter().map(|t| &aligned[t]).collect();
                let started = Instant::now();
                let output = compress_group(&ingest_config, group.gid, group.si, &members)?;
                Ok((output, started.elapsed()))
            })
            .collect()
    });
    let mut outputs = Vec::new();
    for partition in per_partition {
        outputs.extend(partition?);
    }
    outputs.sort_by_key(|(o, _)| o.gid);

    let mut stats = IngestStats::default();
    let mut compress_time = Duration::ZERO;
    let mut mid_counts = BTreeMap::new();
    let mut batch = Vec::with_capacity(config.batch_size.min(1 << 16));
    let mut segments = 0;
    for (output, elapsed) in outputs {
        stats.merge(&output.stats);
        compress_time += elapsed;
        for segment in output.segments {
            let name = registry.get(segment.mid).map_or_else(|_| segment.mid.to_string(), |t| t.name().to_owned());
            *mid_counts.entry(name).or_insert(0) += 1;
            batch.push(segment);
            if batch.len() >= config.batch_size {
                segments += store.insert_segments(&batch)?;
                batch.clear();
            }
        }
    }
    segments += store.insert_segments(&batch)?;

    let engine = QueryEngine::new(store, registry);
    let average_error = engine
        .average_error(&Predicate::all(), |tid, ts| prepared.raw.get(&tid).and_then(|r| r.at(ts)).map(f64::from))?;
    Ok(IngestReport {
        series: prepared.series.len(),
        groups: prepared.groups.len(),
        plan,
        raw_bytes: stats.points * RAW_POINT_BYTES,
        stats,
        segments,
        bytes_written: store.file_bytes(),
        mid_counts,
        compress_time,
        elapsed: started.elapsed(),
        average_error,
    })
}

/// Groups and partition plan for `sources`, or for the groups already in the
/// store when no sources are given.
pub fn plan(config: &EngineConfig, sources: &[PathBuf]) -> Result<(Vec<TimeSeriesGroup>, PartitionPlan)> {
    let groups = if sources.is_empty() {
        let store = Store::open(&config.store)?;
        store.catalog().groups().cloned().collect()
    } else {
        prepare(config, sources)?.groups
    };
    let plan = partition_groups(&groups, config.partitions);
    Ok((groups, plan))
}

/// Summary of a store's contents.
#[derive(Debug, Clone, PartialEq)]
pub struct StoreStats {
    pub series: usize,
    pub groups: usize,
    pub segments: usize,
    pub points: u64,
    pub bytes: u64,
    pub raw_bytes: u64,
    pub mid_counts: BTreeMap<String, u64>,
}

impl StoreStats {
    pub fn of(store: &Store) -> Self {
        let catalog = store.catalog();
        let mut points = 0;
        let mut mid_counts = BTreeMap::new();
        for segment in store.segments() {
            let group_len = catalog.group(segment.gid).map_or(0, |g| g.len());
            points += (segment.len() * segment.live_count(group_len)) as u64;
            let name = catalog.model_types().get(&segment.mid).cloned().unwrap_or_else(|| segment.mid.to_string());
            *mid_counts.entry(name).or_insert(0) += 1;
        }
        Self {
            series: catalog.series().count(),
            groups: catalog.groups().count(),
            segments: store.segment_count(),
            points,
            bytes: store.file_bytes(),
            raw_bytes: points * RAW_POINT_BYTES,
            mid_counts,
        }
    }

    pub fn compression_ratio(&self) -> f64 {
        self.raw_bytes as f64 / self.bytes.max(1) as f64
    }
}

impl fmt::Display for StoreStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "series\t{}", self.series)?;
        writeln!(f, "groups\t{}", self.groups)?;
        writeln!(f, "data points\t{}", self.points)?;
        writeln!(f, "segments\t{}", self.segments)?;
        for (name, count) in &self.mid_counts {
            writeln!(f, "  {name}\t{count}")?;
        }
        writeln!(f, "bytes\t{}", self.bytes)?;
        writeln!(f, "raw bytes\t{}", self.raw_bytes)?;
        write!(f, "compression ratio\t{:.2}", self.compression_ratio())
    }
}

/// Path of the config file's store unless overridden.
pub fn store_path(config: &EngineConfig, overridden: Option<&Path>) -> PathBuf {
    overridden.map_or_else(|| config.store.clone(), Path::to_owned)
}
