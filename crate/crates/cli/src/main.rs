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

//! `mmgc` command-line interface.

use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use mmgc::engine::{self, parse_timestamp, EngineConfig, StoreStats};
use mmgc::models::ModelRegistry;
use mmgc::query::{
    format_timestamp, AggregateRequest, GroupBy, GroupKey, MemberFilter, Predicate, QueryEngine, RollupLevel,
};
use mmgc::store::Store;

#[derive(Parser)]
#[command(name = "mmgc", version, about = "Model-based compression and querying of grouped time series")]
struct Cli {
    /// Configuration file with `key = value` settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Store directory, overriding the configuration.
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// Override one setting, e.g. `--set epsilon=5`. May be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    settings: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Group, compress and store CSV series (one `timestamp,value` file each).
    Ingest {
        /// Files or directories of CSV files.
        #[arg(required = true)]
        sources: Vec<PathBuf>,
    },
    /// Query the store: `scan`, an aggregate (`sum`, `count`, `min`, `max`,
    /// `avg`), or `cube <aggregate> <hour|day|month|year>`.
    Query(QueryArgs),
    /// Print the groups assigned to each partition.
    Plan {
        /// Series to group; the stored groups are used when omitted.
        sources: Vec<PathBuf>,
    },
    /// Summarise the contents of the store.
    Stats,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(required = true, num_args = 1..=3)]
    request: Vec<String>,
    /// Restrict to a series id. May be repeated.
    #[arg(long = "tid")]
    tids: Vec<u32>,
    /// Restrict to a member, as `Level=Value` or `Dimension:Level=Value`.
    #[arg(long = "member")]
    members: Vec<String>,
    /// First timestamp included (milliseconds or RFC 3339).
    #[arg(long)]
    from: Option<String>,
    /// Last timestamp included (milliseconds or RFC 3339).
    #[arg(long)]
    to: Option<String>,
    /// `tid`, or a level as `Level` or `Dimension:Level`.
    #[arg(long = "group-by")]
    group_by: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Tsv,
    Json,
}

enum Request {
    Scan,
    Aggregate(AggregateRequest),
}

fn load_config(cli: &Cli) -> Result<EngineConfig> {
    let mut config = match &cli.config {
        Some(path) => EngineConfig::load(path)?,
        None => EngineConfig::default(),
    };
    for setting in &cli.settings {
        let (key, value) = setting.split_once('=').ok_or_else(|| anyhow!("expected KEY=VALUE, got {setting:?}"))?;
        config.set(key.trim(), value.trim(), Path::new(""))?;
    }
    if let Some(store) = &cli.store {
        config.store = store.clone();
    }
    config.validate()?;
    Ok(config)
}

fn parse_request(words: &[String], group_by: Option<&str>) -> Result<Request> {
    let mut request = match words {
        [scan] if scan == "scan" => {
            if group_by.is_some() {
                bail!("--group-by applies to aggregates only");
            }
            return Ok(Request::Scan);
        }
        [function] => AggregateRequest::new(function.parse()?),
        [cube, function, level] if cube == "cube" => {
            AggregateRequest::new(function.parse()?).rolled_up(level.parse::<RollupLevel>()?)
        }
        _ => bail!("expected `scan`, an aggregate, or `cube <aggregate> <level>`"),
    };
    match group_by {
        None => {}
        Some("tid") => request = request.by_tid(),
        Some(column) => {
            request = match column.split_once(':') {
                Some((dimension, level)) => request.by_member(Some(dimension), level),
                None => request.by_member(None, column),
            }
        }
    }
    Ok(Request::Aggregate(request))
}

fn parse_predicate(args: &QueryArgs) -> Result<Predicate> {
    let mut predicate = Predicate::default();
    if !args.tids.is_empty() {
        predicate = Predicate::tids(args.tids.iter().copied());
    }
    for member in &args.members {
        predicate = predicate.with_member(MemberFilter::parse(member)?);
    }
    let time = |text: &Option<String>| -> Result<Option<i64>> {
        text.as_deref().map(|t| parse_timestamp(t).ok_or_else(|| anyhow!("invalid timestamp {t:?}"))).transpose()
    };
    let (from, to) = (time(&args.from)?, time(&args.to)?);
    if from.is_some() || to.is_some() {
        predicate.range = Some((from.unwrap_or(i64::MIN), to.unwrap_or(i64::MAX)));
    }
    predicate.full_scan = true;
    Ok(predicate)
}

fn run_query(config: &EngineConfig, args: &QueryArgs, out: &mut dyn Write) -> Result<()> {
    let request = parse_request(&args.request, args.group_by.as_deref())?;
    let predicate = parse_predicate(args)?;
    let store = Store::open(&config.store).with_context(|| format!("opening store {}", config.store.display()))?;
    let registry = ModelRegistry::default();
    let engine = QueryEngine::new(&store, &registry);
    let dims = store.catalog().dimensions();
    match request {
        Request::Scan => {
            let rows = engine.data_point_scan(&predicate)?;
            let columns = dims.column_names();
            if args.format == Format::Tsv {
                let mut header = vec!["tid".to_owned(), "timestamp".to_owned(), "value".to_owned()];
                header.extend(columns.iter().cloned());
                writeln!(out, "{}", header.join("\t"))?;
            }
            for row in rows {
                match args.format {
                    Format::Tsv => {
                        write!(out, "{}\t{}\t{}", row.tid, row.timestamp, row.value)?;
                        for member in row.members {
                            write!(out, "\t{member}")?;
                        }
                        writeln!(out)?;
                    }
                    Format::Json => {
                        let mut object = json!({"tid": row.tid, "timestamp": row.timestamp, "value": row.value});
                        for (column, member) in columns.iter().zip(row.members) {
                            object[column] = json!(member);
                        }
                        writeln!(out, "{object}")?;
                    }
                }
            }
        }
        Request::Aggregate(request) => {
            let rows = engine.aggregate(&request, &predicate)?;
            let function = request.function.name();
            if args.format == Format::Tsv {
                let mut header = Vec::new();
                if request.rollup.is_some() {
                    header.push("bucket");
                }
                if request.group_by != GroupBy::None {
                    header.push("key");
                }
                header.push(function);
                writeln!(out, "{}", header.join("\t"))?;
            }
            for row in rows {
                let key = match &row.key {
                    GroupKey::All => None,
                    GroupKey::Tid(tid) => Some(tid.to_string()),
                    GroupKey::Member(member) => Some(member.clone()),
                };
                match args.format {
                    Format::Tsv => {
                        let mut fields = Vec::new();
                        fields.extend(row.bucket.map(format_timestamp));
                        fields.extend(key);
                        fields.push(row.value.map_or_else(String::new, |v| v.to_string()));
                        writeln!(out, "{}", fields.join("\t"))?;
                    }
                    Format::Json => {
                        let mut object = json!({ function: row.value });
                        if let Some(bucket) = row.bucket {
                            object["bucket"] = json!(format_timestamp(bucket));
                        }
                        if let Some(key) = key {
                            object["key"] = json!(key);
                        }
                        writeln!(out, "{object}")?;
                    }
                }
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    match &cli.command {
        Command::Ingest { sources } => {
            let report = engine::ingest(&config, sources, &ModelRegistry::default())?;
            writeln!(out, "{report}")?;
        }
        Command::Query(args) => run_query(&config, args, &mut out)?,
        Command::Plan { sources } => {
            let (groups, plan) = engine::plan(&config, sources)?;
            writeln!(out, "partition\tload\tgroups")?;
            for (index, (gids, load)) in plan.partitions.iter().zip(&plan.loads).enumerate() {
                let listed: Vec<String> = gids
                    .iter()
                    .map(|gid| {
                        let group = groups.iter().find(|g| g.gid == *gid).expect("planned groups exist");
                        let tids: Vec<String> = group.members.iter().map(u32::to_string).collect();
                        format!("{gid}[{}]", tids.join(","))
                    })
                    .collect();
                writeln!(out, "{index}\t{load}\t{}", listed.join(" "))?;
            }
            writeln!(out, "spread\t{}", plan.spread())?;
        }
        Command::Stats => {
            let store = Store::open(&config.store)?;
            writeln!(out, "{}", StoreStats::of(&store))?;
        }
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        // The reader went away, e.g. `mmgc query scan | head`.
        Err(error) if error.downcast_ref::<io::Error>().is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(error) => {
            eprintln!("error: {error:#}");
            ExitCode::FAILURE
        }
    }
}
