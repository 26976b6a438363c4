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

//! Correlation clauses and the text format they are configured in.
//!
//! One clause per line; atoms within a line are joined by `AND` and the lines
//! are alternatives tried in order. Atoms:
//!
//! ```text
//! sources <path> <path>...
//! member <dimension> <level> <member>
//! lca <dimension> <level>
//! distance <0.0..=1.0>
//! auto
//! ```
//!
//! Parameter lines: `weight <dimension> <weight>`, `scale <source> <constant>`
//! and `scale <dimension> <level> <member> <constant>`. `#` starts a comment.

use std::collections::BTreeSet;
use std::path::Path;

use super::dimensions::Weights;
use crate::error::{MmgcError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Atom {
    Sources(Vec<String>),
    Member {
        dimension: String,
        level: String,
        member: String,
    },
    /// A negative level requires all but the lowest `|level|` levels to match
    /// and zero requires every level to match.
    Lca {
        dimension: String,
        level: i64,
    },
    Distance(f64),
    Auto,
}

/// Atoms that must all hold.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationClause {
    pub atoms: Vec<Atom>,
}

impl CorrelationClause {
    pub fn new(atoms: Vec<Atom>) -> Self {
        Self { atoms }
    }

    pub fn single(atom: Atom) -> Self {
        Self { atoms: vec![atom] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScalingRule {
    Source { source: String, constant: f64 },
    Member { dimension: String, level: String, member: String, constant: f64 },
}

impl ScalingRule {
    pub fn constant(&self) -> f64 {
        match self {
            ScalingRule::Source { constant, .. } | ScalingRule::Member { constant, .. } => *constant,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroupingConfig {
    pub clauses: Vec<CorrelationClause>,
    pub weights: Weights,
    pub scaling: Vec<ScalingRule>,
}

impl GroupingConfig {
    pub fn with_clauses(clauses: Vec<CorrelationClause>) -> Self {
        Self { clauses, ..Self::default() }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|(line, reason)| MmgcError::Parse { path: path.to_owned(), line, reason })
    }

    /// Parse the text format; errors carry the 1-based line number.
    pub fn parse(text: &str) -> std::result::Result<Self, (usize, String)> {
        let mut config = GroupingConfig::default();
        let mut listed_sources = BTreeSet::new();
        for (index, raw) in text.lines().enumerate() {
            let line_number = index + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let words: Vec<&str> = line.split_whitespace().collect();
            let fail = |reason: String| (line_number, reason);
            match words[0] {
                "weight" => {
                    let [_, dimension, weight] = words[..] else {
                        return Err(fail("expected: weight <dimension> <weight>".into()));
                    };
                    let weight = parse_real(weight).map_err(fail)?;
                    if !(weight > 0.0) {
                        return Err(fail(format!("weight must be positive, got {weight}")));
                    }
                    config.weights.by_dimension.insert(dimension.to_owned(), weight);
                }
                "scale" => {
                    let rule = match words[1..] {
                        [source, constant] => ScalingRule::Source {
                            source: source.to_owned(),
                            constant: parse_real(constant).map_err(fail)?,
                        },
                        [dimension, level, member, constant] => ScalingRule::Member {
                            dimension: dimension.to_owned(),
                            level: level.to_owned(),
                            member: member.to_owned(),
                            constant: parse_real(constant).map_err(fail)?,
                        },
                        _ => {
                            return Err(fail("expected: scale <source> <c> or scale <dim> <level> <member> <c>".into()))
                        }
                    };
                    if rule.constant() == 0.0 || !rule.constant().is_finite() {
                        return Err(fail("scaling constant must be finite and non-zero".into()));
                    }
                    config.scaling.push(rule);
                }
                _ => {
                    let mut atoms = Vec::new();
                    for part in split_and(&words) {
                        let atom = parse_atom(&part).map_err(fail)?;
                        if let Atom::Sources(sources) = &atom {
                            for source in sources {
                                if !listed_sources.insert(source.clone()) {
                                    return Err(fail(format!("source {source:?} is listed in more than one group")));
                                }
                            }
                        }
                        atoms.push(atom);
                    }
                    config.clauses.push(CorrelationClause::new(atoms));
                }
            }
        }
        Ok(config)
    }
}

fn split_and<'a>(words: &[&'a str]) -> Vec<Vec<&'a str>> {
    let mut parts = vec![Vec::new()];
    for &word in words {
        if word == "AND" {
            parts.push(Vec::new());
        } else {
            parts.last_mut().unwrap().push(word);
        }
    }
    parts
}

fn parse_real(text: &str) -> std::result::Result<f64, String> {
    text.parse::<f64>().map_err(|e| format!("bad number {text:?}: {e}"))
}

fn parse_atom(words: &[&str]) -> std::result::Result<Atom, String> {
    match words {
        [] => Err("empty atom".into()),
        ["auto"] => Ok(Atom::Auto),
        ["distance", threshold] => {
            let threshold = parse_real(threshold)?;
            if !(0.0..=1.0).contains(&threshold) {
                return Err(format!("distance must be within [0, 1], got {threshold}"));
            }
            Ok(Atom::Distance(threshold))
        }
        ["lca", dimension, level] => Ok(Atom::Lca {
            dimension: dimension.to_string(),
            level: level.parse().map_err(|e| format!("bad level {level:?}: {e}"))?,
        }),
        ["member", dimension, level, member] => {
            Ok(Atom::Member { dimension: dimension.to_string(), level: level.to_string(), member: member.to_string() })
        }
        ["sources", sources @ ..] if !sources.is_empty() => {
            Ok(Atom::Sources(sources.iter().map(|s| s.to_string()).collect()))
        }
        // Bare forms from the examples: `Measure 1 Temperature`, `Location 2`, `0.25`.
        [dimension, level, member] => {
            Ok(Atom::Member { dimension: dimension.to_string(), level: level.to_string(), member: member.to_string() })
        }
        [dimension, level] if level.parse::<i64>().is_ok() => {
            Ok(Atom::Lca { dimension: dimension.to_string(), level: level.parse().unwrap() })
        }
        [threshold] if threshold.parse::<f64>().is_ok() => parse_atom(&["distance", threshold]),
        other => Err(format!("unrecognized atom {:?}", other.join(" "))),
    }
}
