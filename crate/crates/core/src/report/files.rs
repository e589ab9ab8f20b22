//! Result files: outcome JSON, trace CSV, evaluation records
//! (JSON-lines plus CSV summary), and tidy plot data. Formats are
//! versioned; every real value round-trips losslessly.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ppo::{AttackOutcome, TracePoint};
use crate::report::EvalRecord;

pub const TRACE_CSV_HEADER: [&str; 3] = ["episode", "best_score", "cumulative_queries"];
pub const RECORDS_CSV_HEADER: [&str; 9] = [
    "run_id",
    "score_target",
    "label_target",
    "label_evaluator",
    "top1_target",
    "top5_target",
    "top1_evaluator",
    "top5_evaluator",
    "schema_version",
];

pub fn write_outcome(dir: &Path, outcome: &AttackOutcome) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("outcome.json");
    let json =
        serde_json::to_string_pretty(outcome).map_err(|e| Error::malformed(&path, e.to_string()))?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn read_outcome(path: &Path) -> Result<AttackOutcome> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::malformed(path, e.to_string()))
}

pub fn write_trace(dir: &Path, trace: &[TracePoint]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("trace.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::malformed(&path, e.to_string()))?;
    w.write_record(TRACE_CSV_HEADER)
        .map_err(|e| Error::malformed(&path, e.to_string()))?;
    for p in trace {
        w.write_record([
            p.episode.to_string(),
            format_f64(p.best_score),
            p.cumulative_queries.to_string(),
        ])
        .map_err(|e| Error::malformed(&path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn read_trace(path: &Path) -> Result<Vec<TracePoint>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::malformed(path, e.to_string()))?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::malformed(path, e.to_string()))?;
        let field = |i: usize| -> Result<&str> {
            row.get(i)
                .ok_or_else(|| Error::malformed(path, format!("missing column {i}")))
        };
        out.push(TracePoint {
            episode: field(0)?
                .parse()
                .map_err(|e| Error::malformed(path, format!("episode: {e}")))?,
            best_score: field(1)?
                .parse()
                .map_err(|e| Error::malformed(path, format!("best_score: {e}")))?,
            cumulative_queries: field(2)?
                .parse()
                .map_err(|e| Error::malformed(path, format!("cumulative_queries: {e}")))?,
        });
    }
    Ok(out)
}

/// Writes `records.jsonl` (one record per line) and a `records.csv`
/// summary. Empty input still produces valid files with headers.
pub fn write_records(records: &[EvalRecord], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let jsonl_path = dir.join("records.jsonl");
    let mut jsonl = fs::File::create(&jsonl_path).map_err(|e| Error::io(&jsonl_path, e))?;
    for record in records {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::malformed(&jsonl_path, e.to_string()))?;
        writeln!(jsonl, "{line}").map_err(|e| Error::io(&jsonl_path, e))?;
    }

    let csv_path = dir.join("records.csv");
    let mut w =
        csv::Writer::from_path(&csv_path).map_err(|e| Error::malformed(&csv_path, e.to_string()))?;
    w.write_record(RECORDS_CSV_HEADER)
        .map_err(|e| Error::malformed(&csv_path, e.to_string()))?;
    for r in records {
        w.write_record([
            r.run_id.clone(),
            format_f64(r.score_target),
            r.label_target.to_string(),
            r.label_evaluator.to_string(),
            r.top1_target.to_string(),
            r.top5_target.to_string(),
            r.top1_evaluator.to_string(),
            r.top5_evaluator.to_string(),
            r.schema_version.to_string(),
        ])
        .map_err(|e| Error::malformed(&csv_path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    Ok(())
}

pub fn read_records(dir: &Path) -> Result<Vec<EvalRecord>> {
    let path = dir.join("records.jsonl");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: EvalRecord = serde_json::from_str(line)
            .map_err(|e| Error::malformed(&path, format!("line {}: {e}", i + 1)))?;
        out.push(record);
    }
    Ok(out)
}

/// One row of the tidy plot-data CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub method: String,
    pub seed: u64,
    pub episode: u64,
    pub best_score: f64,
    pub cumulative_queries: u64,
}

/// Collects every `runs/*/trace.csv` under `run_dir` into one tidy
/// `plot_data.csv` with columns exactly
/// (method, seed, episode, best_score, cumulative_queries).
pub fn emit_plot_data(run_dir: &Path) -> Result<PathBuf> {
    let runs_dir = run_dir.join("runs");
    let entries = fs::read_dir(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;
    let mut run_subdirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    run_subdirs.sort();

    let mut rows: Vec<PlotRow> = Vec::new();
    for sub in &run_subdirs {
        let trace_path = sub.join("trace.csv");
        let outcome_path = sub.join("outcome.json");
        if !trace_path.exists() || !outcome_path.exists() {
            continue;
        }
        let outcome = read_outcome(&outcome_path)?;
        for point in read_trace(&trace_path)? {
            rows.push(PlotRow {
                method: outcome.method.clone(),
                seed: outcome.seed,
                episode: point.episode,
                best_score: point.best_score,
                cumulative_queries: point.cumulative_queries,
            });
        }
    }
    if rows.is_empty() {
        return Err(Error::io(
            &runs_dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no score traces found"),
        ));
    }

    let path = run_dir.join("plot_data.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::malformed(&path, e.to_string()))?;
    w.write_record(["method", "seed", "episode", "best_score", "cumulative_queries"])
        .map_err(|e| Error::malformed(&path, e.to_string()))?;
    for r in &rows {
        w.write_record([
            r.method.clone(),
            r.seed.to_string(),
            r.episode.to_string(),
            format_f64(r.best_score),
            r.cumulative_queries.to_string(),
        ])
        .map_err(|e| Error::malformed(&path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Equality of outcomes with the timing field ignored; the comparison the
/// reproducibility contract is stated in.
pub fn outcomes_match_ignoring_timing(a: &AttackOutcome, b: &AttackOutcome) -> bool {
    let mut a = a.clone();
    let mut b = b.clone();
    a.wall_clock_seconds = 0.0;
    b.wall_clock_seconds = 0.0;
    a == b
}

/// Shortest round-trip decimal form; parses back to the identical f64.
fn format_f64(x: f64) -> String {
    format!("{x}")
}
