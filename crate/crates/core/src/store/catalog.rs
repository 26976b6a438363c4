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

//! Text tables describing the stored series and model types.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{MmgcError, Result};
use crate::models::ModelRegistry;
use crate::types::{DimensionHierarchy, Dimensions, Gid, Mid, Tid, TimeSeriesGroup, TimeSeriesMeta};

pub const CATALOG_FILE: &str = "catalog.tsv";
pub const MODEL_TYPES_FILE: &str = "model_types.tsv";
pub const CATALOG_VERSION: u16 = 1;

const CATALOG_MAGIC: &str = "mmgc-catalog";
const MODEL_TYPES_MAGIC: &str = "mmgc-model-types";

/// The time series table, the dimensions it refers to and the model table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StoreCatalog {
    dimensions: Dimensions,
    series: BTreeMap<Tid, TimeSeriesMeta>,
    groups: BTreeMap<Gid, TimeSeriesGroup>,
    model_types: BTreeMap<Mid, String>,
}

impl StoreCatalog {
    /// Groups are derived from the series' gids with members in tid order.
    pub fn new(
        dimensions: Dimensions,
        series: Vec<TimeSeriesMeta>,
        model_types: BTreeMap<Mid, String>,
    ) -> Result<Self> {
        let mut by_tid = BTreeMap::new();
        let mut members: BTreeMap<Gid, (Vec<Tid>, i64)> = BTreeMap::new();
        for meta in series {
            meta.validate(&dimensions)?;
            if meta.gid == 0 {
                return Err(MmgcError::invalid(format!("tid {} has no group", meta.tid)));
            }
            let entry = members.entry(meta.gid).or_insert((Vec::new(), meta.si));
            if entry.1 != meta.si {
                return Err(MmgcError::invalid(format!("group {} mixes sampling intervals", meta.gid)));
            }
            entry.0.push(meta.tid);
            if let Some(previous) = by_tid.insert(meta.tid, meta) {
                return Err(MmgcError::invalid(format!("duplicate tid {}", previous.tid)));
            }
        }
        let groups = members
            .into_iter()
            .map(|(gid, (tids, si))| Ok((gid, TimeSeriesGroup::new(gid, tids, si)?)))
            .collect::<Result<_>>()?;
        Ok(Self { dimensions, series: by_tid, groups, model_types })
    }

    /// Model table listing every type in `registry`.
    pub fn model_table(registry: &ModelRegistry) -> BTreeMap<Mid, String> {
        registry.entries().into_iter().collect()
    }

    pub fn dimensions(&self) -> &Dimensions {
        &self.dimensions
    }

    pub fn series(&self) -> impl Iterator<Item = &TimeSeriesMeta> {
        self.series.values()
    }

    pub fn series_by_tid(&self, tid: Tid) -> Option<&TimeSeriesMeta> {
        self.series.get(&tid)
    }

    pub fn groups(&self) -> impl Iterator<Item = &TimeSeriesGroup> {
        self.groups.values()
    }

    pub fn group(&self, gid: Gid) -> Option<&TimeSeriesGroup> {
        self.groups.get(&gid)
    }

    pub fn model_types(&self) -> &BTreeMap<Mid, String> {
        &self.model_types
    }

    pub fn next_gid(&self) -> Gid {
        self.groups.keys().next_back().map_or(1, |g| g + 1)
    }

    pub fn next_tid(&self) -> Tid {
        self.series.keys().next_back().map_or(1, |t| t + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// Write both tables to `dir`, replacing earlier versions atomically.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut text = format!("{CATALOG_MAGIC}\t{CATALOG_VERSION}\n");
        for dimension in &self.dimensions.dimensions {
            let mut fields = vec!["dimension".to_owned(), escape(&dimension.name)];
            fields.extend(dimension.level_names.iter().map(|l| escape(l)));
            text.push_str(&fields.join("\t"));
            text.push('\n');
        }
        let mut header =
            vec!["tid", "gid", "scaling", "si", "source"].into_iter().map(String::from).collect::<Vec<_>>();
        header.extend(self.dimensions.column_names().iter().map(|c| escape(c)));
        text.push_str(&header.join("\t"));
        text.push('\n');
        for meta in self.series.values() {
            let mut fields = vec![
                meta.tid.to_string(),
                meta.gid.to_string(),
                meta.scaling.to_string(),
                meta.si.to_string(),
                escape(&meta.source),
            ];
            fields.extend(meta.members.iter().map(|m| escape(m)));
            text.push_str(&fields.join("\t"));
            text.push('\n');
        }
        write_atomically(&dir.join(CATALOG_FILE), text.as_bytes())?;

        let mut text = format!("{MODEL_TYPES_MAGIC}\t{CATALOG_VERSION}\nmid\tname\n");
        for (mid, name) in &self.model_types {
            text.push_str(&format!("{mid}\t{}\n", escape(name)));
        }
        write_atomically(&dir.join(MODEL_TYPES_FILE), text.as_bytes())
    }

    /// Read the tables from `dir`. A directory without them yields an empty catalog.
    pub fn load(dir: &Path) -> Result<Self> {
        let catalog_path = dir.join(CATALOG_FILE);
        if !catalog_path.exists() {
            return Ok(Self::default());
        }
        let text = fs::read_to_string(&catalog_path)?;
        let corrupt = |line: usize, reason: &str| MmgcError::Corrupt {
            path: catalog_path.clone(),
            reason: format!("line {line}: {reason}"),
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        check_version(&catalog_path, lines.next().map(|(_, l)| l), CATALOG_MAGIC)?;

        let mut dimensions = Vec::new();
        let mut header = None;
        for (number, line) in lines.by_ref() {
            let fields: Vec<String> = line.split('\t').map(unescape).collect();
            match fields.first().map(String::as_str) {
                Some("dimension") if fields.len() >= 3 => {
                    dimensions.push(DimensionHierarchy::new(fields[1].clone(), fields[2..].to_vec()))
                }
                Some("tid") => {
                    header = Some(fields);
                    break;
                }
                _ => return Err(corrupt(number, "expected a dimension or header line")),
            }
        }
        let dimensions = Dimensions::new(dimensions);
        let mut expected =
            vec!["tid", "gid", "scaling", "si", "source"].into_iter().map(String::from).collect::<Vec<_>>();
        expected.extend(dimensions.column_names());
        if header.as_ref() != Some(&expected) {
            return Err(corrupt(1, "missing or mismatched header"));
        }

        let mut series = Vec::new();
        for (number, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<String> = line.split('\t').map(unescape).collect();
            if fields.len() != expected.len() {
                return Err(corrupt(number, "wrong number of fields"));
            }
            let parse_error = |what: &str| corrupt(number, &format!("invalid {what}"));
            let mut meta = TimeSeriesMeta::new(
                fields[0].parse().map_err(|_| parse_error("tid"))?,
                fields[3].parse().map_err(|_| parse_error("si"))?,
                fields[4].clone(),
                fields[5..].to_vec(),
            )
            .map_err(|e| corrupt(number, &e.to_string()))?;
            meta.gid = fields[1].parse().map_err(|_| parse_error("gid"))?;
            meta.scaling = fields[2].parse().map_err(|_| parse_error("scaling"))?;
            series.push(meta);
        }

        let model_types = load_model_types(&dir.join(MODEL_TYPES_FILE))?;
        Self::new(dimensions, series, model_types)
            .map_err(|e| MmgcError::Corrupt { path: catalog_path.clone(), reason: e.to_string() })
    }
}

fn load_model_types(path: &Path) -> Result<BTreeMap<Mid, String>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    check_version(path, lines.next(), MODEL_TYPES_MAGIC)?;
    let corrupt = |reason: String| MmgcError::Corrupt { path: path.to_owned(), reason };
    if lines.next() != Some("mid\tname") {
        return Err(corrupt("missing header".into()));
    }
    let mut table = BTreeMap::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let (mid, name) = line.split_once('\t').ok_or_else(|| corrupt(format!("malformed line {line:?}")))?;
        let mid: Mid = mid.parse().map_err(|_| corrupt(format!("invalid model type id {mid:?}")))?;
        if table.insert(mid, unescape(name)).is_some() {
            return Err(corrupt(format!("duplicate model type id {mid}")));
        }
    }
    Ok(table)
}

fn check_version(path: &Path, first: Option<&str>, magic: &str) -> Result<()> {
    let corrupt = || MmgcError::Corrupt { path: path.to_owned(), reason: format!("missing {magic} line") };
    let (found_magic, version) = first.and_then(|l| l.split_once('\t')).ok_or_else(corrupt)?;
    if found_magic != magic {
        return Err(corrupt());
    }
    let found: u16 = version.parse().map_err(|_| corrupt())?;
    if found != CATALOG_VERSION {
        return Err(MmgcError::Version { path: path.to_owned(), found, expected: CATALOG_VERSION });
    }
    Ok(())
}

/// Write `bytes` to a temporary sibling, sync it and rename it over `path`.
pub(crate) fn write_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut temporary = path.as_os_str().to_owned();
    temporary.push(".tmp");
    let temporary = Path::new(&temporary);
    {
        let mut file = fs::File::create(temporary)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(temporary, path)?;
    if let Some(parent) = path.parent() {
        // Directory sync is not supported everywhere.
        let _ = fs::File::open(parent).and_then(|d| d.sync_all());
    }
    Ok(())
}

fn escape(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    for c in field.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}
