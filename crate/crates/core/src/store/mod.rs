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

//! Durable storage of the catalog and of segments.
//!
//! Every inserted batch becomes one `segments-<n>.bin` file that is written to
//! a temporary name, synced and renamed, so readers only see complete batches.

pub mod catalog;
pub mod segment_file;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

pub use catalog::StoreCatalog;

use crate::error::{MmgcError, Result};
use crate::types::{Gid, Segment, Timestamp};

/// Primary key of a segment.
pub type SegmentKey = (Gid, Timestamp, u64);

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    catalog: StoreCatalog,
    segments: BTreeMap<SegmentKey, Segment>,
    next_file: u32,
    file_bytes: u64,
}

impl Store {
    /// Open the store in `dir`, creating the directory if needed.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_owned();
        fs::create_dir_all(&dir)?;
        let catalog = StoreCatalog::load(&dir)?;
        let mut store = Self { dir, catalog, segments: BTreeMap::new(), next_file: 0, file_bytes: 0 };
        let mut files = Vec::new();
        for entry in fs::read_dir(&store.dir)? {
            let path = entry?.path();
            let number = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_prefix("segments-"))
                .and_then(|n| n.strip_suffix(".bin"))
                .and_then(|n| n.parse::<u32>().ok());
            if let Some(number) = number {
                files.push((number, path));
            }
        }
        files.sort();
        for (number, path) in files {
            let bytes = fs::read(&path)?;
            store.file_bytes += bytes.len() as u64;
            for record in segment_file::decode(&path, &bytes)? {
                let group = store.catalog.group(record.gid).ok_or_else(|| MmgcError::Corrupt {
                    path: path.clone(),
                    reason: format!("segment for unknown group {}", record.gid),
                })?;
                let segment = record.into_segment(group.si);
                let key = (segment.gid, segment.end_time, segment.gaps);
                if store.segments.insert(key, segment).is_some() {
                    return Err(MmgcError::Corrupt {
                        path: path.clone(),
                        reason: format!("duplicate segment key {key:?}"),
                    });
                }
            }
            store.next_file = number + 1;
        }
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn catalog(&self) -> &StoreCatalog {
        &self.catalog
    }

    /// Replace the catalog and persist it. Groups that already have segments
    /// must keep their members and sampling interval.
    pub fn set_catalog(&mut self, catalog: StoreCatalog) -> Result<()> {
        for &(gid, _, _) in self.segments.keys() {
            if self.catalog.group(gid) != catalog.group(gid) {
                return Err(MmgcError::invalid(format!("group {gid} already has segments and cannot change")));
            }
        }
        catalog.save(&self.dir)?;
        self.catalog = catalog;
        Ok(())
    }

    /// Append `batch` as one new segment file. Nothing is written if any
    /// segment is invalid or its key already exists.
    pub fn insert_segments(&mut self, batch: &[Segment]) -> Result<usize> {
        if batch.is_empty() {
            return Ok(0);
        }
        let mut keys = BTreeSet::new();
        for segment in batch {
            let group = self
                .catalog
                .group(segment.gid)
                .ok_or_else(|| MmgcError::invalid(format!("segment for unknown group {}", segment.gid)))?;
            if segment.si != group.si {
                return Err(MmgcError::invalid(format!(
                    "segment sampling interval {} differs from group {} interval {}",
                    segment.si, group.gid, group.si
                )));
            }
            segment.validate(group.len())?;
            let key = (segment.gid, segment.end_time, segment.gaps);
            if self.segments.contains_key(&key) || !keys.insert(key) {
                return Err(MmgcError::DuplicateKey { gid: key.0, end_time: key.1, gaps: key.2 });
            }
        }
        let bytes = segment_file::encode(batch);
        let path = self.dir.join(format!("segments-{}.bin", self.next_file));
        catalog::write_atomically(&path, &bytes)?;
        self.next_file += 1;
        self.file_bytes += bytes.len() as u64;
        for segment in batch {
            self.segments.insert((segment.gid, segment.end_time, segment.gaps), segment.clone());
        }
        Ok(batch.len())
    }

    /// Segments of `gids` overlapping `[from, to]`, ordered by gid and end time.
    pub fn query_segments<'a>(
        &'a self,
        gids: &'a BTreeSet<Gid>,
        range: Option<(Timestamp, Timestamp)>,
    ) -> impl Iterator<Item = &'a Segment> + 'a {
        gids.iter().flat_map(move |&gid| self.group_segments(gid, range))
    }

    /// Segments of one group overlapping `[from, to]`, ordered by end time.
    pub fn group_segments(
        &self,
        gid: Gid,
        range: Option<(Timestamp, Timestamp)>,
    ) -> impl Iterator<Item = &Segment> + '_ {
        let (from, to) = range.unwrap_or((Timestamp::MIN, Timestamp::MAX));
        self.segments
            .range((gid, from, 0)..=(gid, Timestamp::MAX, u64::MAX))
            .map(|(_, s)| s)
            .filter(move |s| s.start_time <= to)
    }

    pub fn segments(&self) -> impl Iterator<Item = &Segment> {
        self.segments.values()
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    /// Total size of the segment files.
    pub fn file_bytes(&self) -> u64 {
        self.file_bytes
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grouping::dimensions::tests::location;
    use crate::models::ModelRegistry;
    use proptest::prelude::*;

    fn store_in(dir: &Path) -> Store {
        let (dims, mut series) = location();
        for (i, meta) in series.iter_mut().enumerate() {
            meta.gid = if i == 0 { 1 } else { 2 };
        }
        let mut store = Store::open(dir).unwrap();
        let catalog = StoreCatalog::new(dims, series, StoreCatalog::model_table(&ModelRegistry::default())).unwrap();
        store.set_catalog(catalog).unwrap();
        store
    }

    fn segment(gid: Gid, start: i64, end: i64, gaps: u64) -> Segment {
        let si = if gid == 1 { 60_000 } else { 30_000 };
        Segment { gid, start_time: start * si, end_time: end * si, si, gaps, mid: 1, payload: vec![gid as u8; 4] }
    }

    #[test]
    fn insert_query_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = store_in(dir.path());
        let batch = vec![segment(2, 0, 4, 0), segment(1, 0, 9, 0), segment(2, 5, 9, 0b1), segment(2, 5, 7, 0b10)];
        assert_eq!(store.insert_segments(&batch).unwrap(), 4);
        let err = store.insert_segments(&[segment(2, 1, 4, 0)]).unwrap_err();
        assert!(matches!(err, MmgcError::DuplicateKey { gid: 2, gaps: 0, .. }));

        let both: BTreeSet<Gid> = [1, 2].into();
        let all: Vec<_> = store.query_segments(&both, None).cloned().collect();
        assert_eq!(all, vec![batch[1].clone(), batch[0].clone(), batch[3].clone(), batch[2].clone()]);

        let reopened = Store::open(dir.path()).unwrap();
        assert_eq!(reopened.segments().cloned().collect::<Vec<_>>(), store.segments().cloned().collect::<Vec<_>>());
        assert_eq!(reopened.catalog(), store.catalog());

        let two: BTreeSet<Gid> = [2].into();
        assert_eq!(reopened.query_segments(&two, Some((-10, -1))).count(), 0);
        // A range inside a segment returns the whole segment.
        let inner: Vec<_> = reopened.query_segments(&two, Some((60_000, 60_000))).collect();
        assert_eq!(inner, vec![&batch[0]]);
    }

    #[test]
    fn invalid_batches_write_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = store_in(dir.path());
        assert!(store.insert_segments(&[segment(7, 0, 1, 0)]).is_err());
        assert!(store.insert_segments(&[segment(2, 0, 1, 0), segment(2, 0, 1, 0)]).is_err());
        assert!(store.insert_segments(&[segment(2, 0, 1, 0b111)]).is_err());
        assert_eq!(store.segment_count(), 0);
        assert_eq!(Store::open(dir.path()).unwrap().segment_count(), 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn push_down_matches_full_scan(
            spans in prop::collection::vec((1u32..3, 0i64..50, 0i64..10, 0u64..4), 1..40),
            from in -5i64..60,
            width in 0i64..30,
        ) {
            let dir = tempfile::tempdir().unwrap();
            let mut store = store_in(dir.path());
            let mut inserted = BTreeMap::new();
            for (gid, start, len, gaps) in spans {
                let gaps = if gid == 1 { 0 } else { gaps };
                let s = segment(gid, start, start + len, gaps);
                if let std::collections::btree_map::Entry::Vacant(e) = inserted.entry((s.gid, s.end_time, s.gaps)) {
                    e.insert(s.clone());
                    store.insert_segments(&[s]).unwrap();
                }
            }
            let store = Store::open(dir.path()).unwrap();
            for gids in [BTreeSet::from([1]), BTreeSet::from([2]), BTreeSet::from([1, 2])] {
                let range = (from * 30_000, (from + width) * 30_000);
                let got: Vec<_> = store.query_segments(&gids, Some(range)).cloned().collect();
                let expected: Vec<_> = inserted
                    .values()
                    .filter(|s| gids.contains(&s.gid) && s.start_time <= range.1 && s.end_time >= range.0)
                    .cloned()
                    .collect();
                prop_assert_eq!(got, expected);
            }
        }
    }
}
