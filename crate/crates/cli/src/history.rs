//! History files: a config header line followed by one line per evaluation.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CmdResult, Failure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub x: Vec<f64>,
    pub y: f64,
    /// The evaluation failed and `y` is a penalty.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub config: RunConfig,
    pub records: Vec<Record>,
}

impl History {
    pub fn observations(&self) -> impl Iterator<Item = (Vec<f64>, f64)> + '_ {
        self.records.iter().map(|r| (r.x.clone(), r.y))
    }
}

/// Writes a fresh file holding only the header.
pub fn create(path: &Path, config: &RunConfig) -> CmdResult {
    let mut f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    writeln!(f, "{}", serde_json::to_string(&Header { config: config.clone() }).map_err(anyhow::Error::from)?)?;
    f.flush()?;
    Ok(())
}

/// Reads and validates a history. Any malformed line is a config error
/// naming its 1-based line number.
pub fn read(path: &Path) -> CmdResult<History> {
    let file = File::open(path).with_context(|| format!("opening history {}", path.display()))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let bad = |line: usize, e: anyhow::Error| Failure::config(e.context(format!("{} line {line}", path.display())));

    let (_, first) = lines.next().ok_or_else(|| Failure::config(anyhow!("{}: empty history", path.display())))?;
    let header: Header = parse_line(&first?).map_err(|e| bad(1, e))?;
    let config = header.config;
    if config.version != crate::config::SCHEMA_VERSION {
        return Err(bad(1, anyhow!("unsupported version {:?}", config.version)));
    }
    let bounds = config.bounds().map_err(|e| bad(1, e))?;

    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = parse_line(&line).map_err(|e| bad(i + 1, e))?;
        if rec.x.len() != config.dimension {
            return Err(bad(i + 1, anyhow!("point has {} coordinates, expected {}", rec.x.len(), config.dimension)));
        }
        if !bounds.contains(&rec.x) {
            return Err(bad(i + 1, anyhow!("point {:?} lies outside the search box", rec.x)));
        }
        if !rec.y.is_finite() {
            return Err(bad(i + 1, anyhow!("value is not finite")));
        }
        records.push(rec);
    }
    Ok(History { config, records })
}

fn parse_line<T: for<'de> Deserialize<'de>>(line: &str) -> anyhow::Result<T> {
    let de = &mut serde_json::Deserializer::from_str(line);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        anyhow!("field `{path}`: {}", e.into_inner())
    })
}

/// Appends one record and flushes it.
pub fn append(path: &Path, record: &Record) -> CmdResult {
    let mut f = OpenOptions::new().append(true).open(path).with_context(|| format!("opening {}", path.display()))?;
    writeln!(f, "{}", serde_json::to_string(record).map_err(anyhow::Error::from)?)?;
    f.flush()?;
    Ok(())
}
