use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use log::{info, warn};
use serde::Serialize;

use robust_bo::bench::{aggregate, run_trials_streaming, SummaryRow, TrialRecord};
use robust_bo::{BoConfig, BoState};

use crate::config::{Overrides, RunConfig};
use crate::error::{CmdResult, ConfigContext, Failure};
use crate::history::{self, Record};
use crate::objective::{default_penalty, evaluate, format_point, parse_point};

fn open_output(out: Option<&Path>) -> CmdResult<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn write_json_line<T: Serialize>(w: &mut dyn Write, value: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")
}

/// Runs every trial and streams JSON Lines records in trial order.
pub fn bench(config: &Path, out: Option<&Path>, parallel: usize, overrides: &Overrides) -> CmdResult {
    let mut cfg = RunConfig::load(config).config_err()?;
    overrides.apply(&mut cfg);
    let spec = cfg.bench_spec().config_err()?;
    let mut w = open_output(out)?;
    let mut failures = 0;
    let mut write_error = None;
    run_trials_streaming(&spec, parallel, |trial, outcome| match outcome {
        Ok(records) => {
            if write_error.is_some() {
                return;
            }
            let written = records.iter().try_for_each(|r| write_json_line(&mut *w, r)).and_then(|_| w.flush());
            if let Err(e) = written {
                write_error = Some(e);
            }
        }
        Err(e) => {
            failures += 1;
            warn!("trial {trial} failed: {e}");
        }
    })
    .config_err()?;
    if let Some(e) = write_error {
        return Err(anyhow::Error::from(e).context("writing records").into());
    }
    if failures == spec.trials {
        return Err(Failure::numerical(anyhow!("all {failures} trials failed")));
    }
    info!("{} trials, {failures} failed", spec.trials);
    Ok(())
}

/// Settings specific to `run` that may come from flags instead of the file.
#[derive(Debug, Clone, Default)]
pub struct RunArgs {
    pub config: Option<PathBuf>,
    pub command: Option<String>,
    pub dimension: Option<usize>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub budget: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    x: &'a [f64],
    y: f64,
    evaluations: usize,
    failures: usize,
    flagged: usize,
}

/// Optimizes an external command. Each evaluation is appended to the
/// history at `out` as soon as it completes.
pub fn run(args: &RunArgs, overrides: &Overrides) -> CmdResult {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p).config_err()?,
        None => RunConfig::current(),
    };
    if let Some(c) = &args.command {
        cfg.command = Some(c.clone());
    }
    if let Some(d) = args.dimension {
        cfg.dimension = d;
    }
    if args.lower.is_some() || args.upper.is_some() {
        cfg.lower = args.lower.clone();
        cfg.upper = args.upper.clone();
    }
    if let Some(b) = args.budget {
        cfg.budget = b;
    }
    overrides.apply(&mut cfg);
    let command = cfg.command.clone().ok_or_else(|| Failure::config(anyhow!("no command given (use --command)")))?;
    let bo = cfg.bo_config().config_err()?;
    if let Some(p) = &args.out {
        history::create(p, &cfg)?;
    }

    let mut state = BoState::new(&bo).config_err()?;
    let mut successes = Vec::new();
    let mut failures = 0;
    for iteration in 0..bo.budget {
        let proposal = state.suggest(&bo).map_err(anyhow::Error::from)?;
        let x = proposal.point;
        let mut outcome = evaluate(&command, &x);
        for _ in 0..cfg.retries {
            match &outcome {
                Ok(_) => break,
                Err(e) => {
                    warn!("iteration {iteration}: {e}; retrying");
                    outcome = evaluate(&command, &x);
                }
            }
        }
        let (y, failed) = match outcome {
            Ok(y) => {
                successes.push(y);
                (y, false)
            }
            Err(e) => {
                failures += 1;
                let y = cfg.penalty.unwrap_or_else(|| default_penalty(&successes));
                warn!("iteration {iteration}: {e}; recording penalty {y}");
                (y, true)
            }
        };
        state.tell(x.clone(), y).map_err(anyhow::Error::from)?;
        if let Some(p) = &args.out {
            history::append(p, &Record { x, y, failed })?;
        }
    }
    if successes.is_empty() {
        return Err(Failure::numerical(anyhow!("all {} evaluations failed", bo.budget)));
    }
    let flags = state.flags();
    let (x, y) = state.incumbent().ok_or_else(|| anyhow!("no active observations"))?;
    let summary = RunSummary { x, y, evaluations: bo.budget, failures, flagged: flags.iter().filter(|f| **f).count() };
    println!("{}", serde_json::to_string(&summary).map_err(anyhow::Error::from)?);
    Ok(())
}

fn ask_tell_config(cfg: &RunConfig) -> CmdResult<BoConfig<f64>> {
    cfg.bo_config().config_err()
}

/// Prints the next point for the run recorded in `path`. A missing file is
/// created from `config` when one is given.
pub fn suggest(path: &Path, config: Option<&Path>, overrides: &Overrides) -> CmdResult<Vec<f64>> {
    if !path.exists() {
        let Some(config) = config else {
            return Err(Failure::config(anyhow!("{} does not exist; pass --config to start a new history", path.display())));
        };
        let mut cfg = RunConfig::load(config).config_err()?;
        overrides.apply(&mut cfg);
        ask_tell_config(&cfg)?;
        history::create(path, &cfg)?;
    } else if config.is_some() || *overrides != Overrides::default() {
        warn!("{} exists; its header settings take precedence", path.display());
    }
    let hist = history::read(path)?;
    let bo = ask_tell_config(&hist.config)?;
    if hist.records.len() >= bo.budget {
        warn!("budget of {} evaluations already spent", bo.budget);
    }
    let mut state = BoState::replay(&bo, hist.observations()).config_err()?;
    let proposal = state.suggest(&bo).map_err(anyhow::Error::from)?;
    println!("{}", format_point(&proposal.point));
    Ok(proposal.point)
}

/// Appends an evaluated point to the history.
pub fn tell(path: &Path, point: &str, value: f64) -> CmdResult {
    let hist = history::read(path)?;
    let x = parse_point(point).map_err(|e| Failure::config(anyhow!("point {e}")))?;
    if x.len() != hist.config.dimension {
        return Err(Failure::config(anyhow!("point has {} coordinates, expected {}", x.len(), hist.config.dimension)));
    }
    if !hist.config.bounds().config_err()?.contains(&x) {
        return Err(Failure::config(anyhow!("point lies outside the search box")));
    }
    if !value.is_finite() {
        return Err(Failure::config(anyhow!("value must be finite")));
    }
    history::append(path, &Record { x, y: value, failed: false })
}

pub const REPORT_HEADER: &str = "method,iter,mean,median,lo95,hi95";

pub fn read_records(path: &Path) -> CmdResult<Vec<TrialRecord>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Failure::config(anyhow!("{} line {}: {e}", path.display(), i + 1)))?;
        records.push(rec);
    }
    Ok(records)
}

pub fn format_report(rows: &[SummaryRow]) -> String {
    let mut s = String::from(REPORT_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!("{},{},{},{},{},{}\n", r.method, r.iter, r.mean, r.median, r.lo95, r.hi95));
    }
    s
}

/// Aggregates benchmark records into a comma-separated table.
pub fn report(input: &Path, out: Option<&Path>) -> CmdResult {
    let records = read_records(input)?;
    if records.is_empty() {
        return Err(Failure::config(anyhow!("{} holds no records", input.display())));
    }
    let rows = aggregate(&records).config_err()?;
    let mut w = open_output(out)?;
    w.write_all(format_report(&rows).as_bytes())?;
    w.flush()?;
    Ok(())
}
