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

//! Dimension similarity: lowest common ancestor levels and the distance
//! between groups of series derived from them.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{MmgcError, Result};
use crate::types::{DimensionHierarchy, Dimensions, Tid, TimeSeriesMeta};

/// Deepest level of dimension `dim` at which every series in `a` and `b` has
/// the same chain of members from the top. 0 when only ⊤ is shared.
pub fn lca_level(dims: &Dimensions, dim: usize, a: &[&TimeSeriesMeta], b: &[&TimeSeriesMeta]) -> usize {
    let mut all = a.iter().chain(b.iter());
    let Some(first) = all.next() else {
        return dims.dimensions[dim].levels();
    };
    let reference = first.chain(dims, dim);
    let mut depth = reference.len();
    for series in all {
        let chain = series.chain(dims, dim);
        depth = depth.min(reference.iter().zip(chain).take_while(|(x, y)| x == y).count());
        if depth == 0 {
            break;
        }
    }
    depth
}

/// Like [`lca_level`] but with the dimension given by name.
pub fn lca_level_by_name(
    dims: &Dimensions,
    dimension: &str,
    a: &[&TimeSeriesMeta],
    b: &[&TimeSeriesMeta],
) -> Result<usize> {
    Ok(lca_level(dims, dims.index_of(dimension)?, a, b))
}

/// Per-dimension weights as given by the user, default 1. Each dimension's
/// term is multiplied by the reciprocal of its weight.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Weights {
    pub by_dimension: BTreeMap<String, f64>,
}

impl Weights {
    pub fn factor(&self, dimension: &str) -> f64 {
        1.0 / self.by_dimension.get(dimension).copied().unwrap_or(1.0)
    }
}

/// Distance in [0, 1] between two groups from their LCA levels. Without any
/// dimension every series matches on every (non-existent) level, giving 0.
pub fn distance(dims: &Dimensions, a: &[&TimeSeriesMeta], b: &[&TimeSeriesMeta], weights: &Weights) -> f64 {
    if dims.is_empty() {
        return 0.0;
    }
    let total: f64 = dims
        .dimensions
        .iter()
        .enumerate()
        .map(|(index, dimension)| {
            let levels = dimension.levels() as f64;
            let lca = lca_level(dims, index, a, b) as f64;
            weights.factor(&dimension.name) * ((levels - lca) / levels)
        })
        .sum();
    (total / dims.len() as f64).min(1.0)
}

/// The lowest non-zero distance possible with `dims` when all weights are 1.
pub fn auto_distance(dims: &Dimensions) -> Result<f64> {
    let max_levels = dims.dimensions.iter().map(|d| d.levels()).max().unwrap_or(0);
    if dims.is_empty() || max_levels == 0 {
        return Err(MmgcError::invalid("automatic grouping requires at least one dimension"));
    }
    Ok((1.0 / max_levels as f64) / dims.len() as f64)
}

/// A row of the dimensions file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimensionRow {
    pub tid: Tid,
    pub source: String,
    pub members: Vec<String>,
}

/// Read a dimensions file: a header `tid,source,Dim:Level,...` with the levels
/// of each dimension listed top-down, then one row per series.
pub fn load_dimensions(path: &Path) -> Result<(Dimensions, Vec<DimensionRow>)> {
    let parse_error = |line: usize, reason: String| MmgcError::Parse { path: path.to_owned(), line, reason };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() < 2 || &header[0] != "tid" || &header[1] != "source" {
        return Err(parse_error(1, "header must start with tid,source".to_owned()));
    }
    let mut dimensions: Vec<DimensionHierarchy> = Vec::new();
    for column in header.iter().skip(2) {
        let (dimension, level) = column
            .split_once(':')
            .ok_or_else(|| parse_error(1, format!("column {column:?} is not Dimension:Level")))?;
        match dimensions.last_mut() {
            Some(last) if last.name == dimension => last.level_names.push(level.to_owned()),
            _ => {
                if dimensions.iter().any(|d| d.name == dimension) {
                    return Err(parse_error(1, format!("levels of dimension {dimension:?} are not contiguous")));
                }
                dimensions.push(DimensionHierarchy::new(dimension, vec![level.to_owned()]));
            }
        }
    }
    let mut rows = Vec::new();
    for (index, record) in reader.records().enumerate() {
        let line = index + 2;
        let record = record.map_err(|e| csv_error(path, e))?;
        let tid = record[0].parse::<Tid>().map_err(|e| parse_error(line, format!("bad tid: {e}")))?;
        if tid == 0 {
            return Err(parse_error(line, "tids start at 1".to_owned()));
        }
        if rows.iter().any(|r: &DimensionRow| r.tid == tid) {
            return Err(parse_error(line, format!("duplicate tid {tid}")));
        }
        rows.push(DimensionRow {
            tid,
            source: record[1].to_owned(),
            members: record.iter().skip(2).map(str::to_owned).collect(),
        });
    }
    Ok((Dimensions::new(dimensions), rows))
}

pub(crate) fn csv_error(path: &Path, error: csv::Error) -> MmgcError {
    let line = error.position().map(|p| p.line() as usize).unwrap_or(0);
    MmgcError::Parse { path: path.to_owned(), line, reason: error.to_string() }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// A location dimension: Country → Region → Park → Entity.
    pub fn location() -> (Dimensions, Vec<TimeSeriesMeta>) {
        let dims = Dimensions::new(vec![DimensionHierarchy::new(
            "Location",
            vec!["Country".into(), "Region".into(), "Park".into(), "Entity".into()],
        )]);
        let row = |tid: Tid, si: i64, members: [&str; 4]| {
            TimeSeriesMeta::new(tid, si, format!("{tid}.csv"), members.iter().map(|m| m.to_string()).collect()).unwrap()
        };
        let series = vec![
            row(1, 60000, ["Denmark", "Nordjylland", "Farsø", "9572"]),
            row(2, 30000, ["Denmark", "Nordjylland", "Aalborg", "9632"]),
            row(3, 30000, ["Denmark", "Nordjylland", "Aalborg", "9634"]),
            row(4, 30000, ["Germany", "Bayern", "Aalborg", "1"]),
        ];
        (dims, series)
    }

    #[test]
    fn lca_on_location_hierarchy() {
        let (dims, s) = location();
        assert_eq!(lca_level(&dims, 0, &[&s[1]], &[&s[2]]), 3);
        assert_eq!(dims.dimensions[0].level_names[2], "Park");
        assert_eq!(lca_level(&dims, 0, &[&s[1]], &[&s[1]]), 4);
        assert_eq!(lca_level(&dims, 0, &[&s[0]], &[&s[1], &s[2]]), 2);
        // Same park name in another country shares nothing but ⊤.
        assert_eq!(lca_level(&dims, 0, &[&s[2]], &[&s[3]]), 0);
        assert!(lca_level_by_name(&dims, "Measure", &[&s[0]], &[&s[1]]).is_err());
    }

    #[test]
    fn distance_examples() {
        let (dims, s) = location();
        let weights = Weights::default();
        assert_eq!(distance(&dims, &[&s[1]], &[&s[2]], &weights), 0.25);
        assert_eq!(distance(&dims, &[&s[1]], &[&s[1]], &weights), 0.0);
        assert_eq!(distance(&dims, &[&s[2]], &[&s[3]], &weights), 1.0);
        let mut heavy = Weights::default();
        heavy.by_dimension.insert("Location".into(), 4.0);
        // Oracle: (1/4) * ((4 - 3) / 4) / 1.
        assert_eq!(distance(&dims, &[&s[1]], &[&s[2]], &heavy), 0.0625);
        let mut light = Weights::default();
        light.by_dimension.insert("Location".into(), 0.1);
        assert_eq!(distance(&dims, &[&s[2]], &[&s[3]], &light), 1.0);
    }

    #[test]
    fn auto_distance_examples() {
        let one = |levels: usize| DimensionHierarchy::new("D", (0..levels).map(|l| l.to_string()).collect());
        let dims = Dimensions::new(vec![one(3)]);
        assert_eq!(auto_distance(&dims).unwrap(), 1.0 / 3.0);
        let two = Dimensions::new(vec![
            DimensionHierarchy::new("A", vec!["1".into(), "2".into()]),
            DimensionHierarchy::new("B", vec!["1".into(), "2".into()]),
        ]);
        assert_eq!(auto_distance(&two).unwrap(), 0.25);
        assert_eq!(auto_distance(&Dimensions::new(vec![one(1)])).unwrap(), 1.0);
        assert!(auto_distance(&Dimensions::default()).is_err());
    }

    #[test]
    fn dimensions_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dims.csv");
        std::fs::write(
            &path,
            "tid,source,Location:Country,Location:Park,Measure:Category\n\
             1,a.csv,Denmark,Aalborg,Temperature\n2,b.csv,Denmark,Farsø,Wind\n",
        )
        .unwrap();
        let (dims, rows) = load_dimensions(&path).unwrap();
        assert_eq!(dims.len(), 2);
        assert_eq!(dims.dimensions[0].level_names, vec!["Country", "Park"]);
        assert_eq!(rows[1].members, vec!["Denmark", "Farsø", "Wind"]);

        std::fs::write(&path, "tid,source,A:x,B:y,A:z\n").unwrap();
        assert!(load_dimensions(&path).is_err());
        std::fs::write(&path, "id,source\n").unwrap();
        assert!(load_dimensions(&path).is_err());
    }
}
