//! Result files. Every file starts with `# key = value` header lines carrying
//! the config hash, seed and map, so a run can be repeated exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{EpisodeTrace, Outcome, TraceStep};
use crate::env::{CellKind, GridMap, Pos};
use crate::oracle::{Provenance, VarianceMap};
use crate::{Error, Result};

use super::SweepPoint;

/// First 16 hex digits of the SHA-256 of the value's JSON form.
pub fn config_hash<T: Serialize + ?Sized>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serialises to JSON");
    Sha256::digest(&json).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Ordered header fields written at the top of every result file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub fields: Vec<(String, String)>,
}

impl RunMeta {
    pub fn new(config_hash: impl Into<String>, seed: u64, map: impl Into<String>) -> Self {
        RunMeta {
            fields: vec![
                ("config_hash".into(), config_hash.into()),
                ("seed".into(), seed.to_string()),
                ("map".into(), map.into()),
            ],
        }
    }

    pub fn with(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.fields.push((key.into(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn header(&self, kind: &str) -> String {
        let mut out = format!("# {kind}\n");
        for (k, v) in &self.fields {
            let _ = writeln!(out, "# {k} = {v}");
        }
        out
    }

    fn parse(text: &str) -> RunMeta {
        let fields = text
            .lines()
            .take_while(|l| l.starts_with('#'))
            .filter_map(|l| l.trim_start_matches('#').split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect();
        RunMeta { fields }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn curve_text(points: &[SweepPoint], meta: &RunMeta) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["param", "calls", "return", "stderr", "episodes"]).expect("in-memory write");
    for p in points {
        w.write_record([
            p.param_value.to_string(),
            p.mean_expert_calls.to_string(),
            p.mean_return.to_string(),
            p.return_stderr.to_string(),
            p.episodes.to_string(),
        ])
        .expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8");
    meta.header("hitl-curve v1") + &body
}

/// Comma-separated curve: `param,calls,return,stderr,episodes`.
pub fn write_curve(path: impl AsRef<Path>, points: &[SweepPoint], meta: &RunMeta) -> Result<()> {
    write(path.as_ref(), &curve_text(points, meta))
}

pub fn read_curve(path: impl AsRef<Path>) -> Result<(RunMeta, Vec<SweepPoint>)> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let points = reader
        .deserialize::<SweepPoint>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok((RunMeta::parse(&text), points))
}

/// Grid text in map orientation: one row per map row, space-separated tokens.
/// Cells in the map's domain hold a number; `#` walls, `T` traps, `G` goals,
/// and `.` free cells without a value.
pub fn variance_map_text(vmap: &VarianceMap, grid: &GridMap, meta: &RunMeta) -> String {
    let meta = meta.clone().with("policy", &vmap.policy_id).with("provenance", &vmap.provenance);
    let mut out = meta.header("hitl-variance-map v1");
    for y in 0..grid.height() {
        let row: Vec<String> = (0..grid.width())
            .map(|x| {
                let p = Pos::new(x, y);
                match (vmap.values.get(&p), grid.cell(p)) {
                    (Some(v), _) => v.to_string(),
                    (None, CellKind::Wall) => "#".into(),
                    (None, CellKind::Trap) => "T".into(),
                    (None, CellKind::Goal) => "G".into(),
                    (None, CellKind::Free) => ".".into(),
                }
            })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_variance_map(path: impl AsRef<Path>, vmap: &VarianceMap, grid: &GridMap, meta: &RunMeta) -> Result<()> {
    write(path.as_ref(), &variance_map_text(vmap, grid, meta))
}

pub fn read_variance_map(path: impl AsRef<Path>) -> Result<(RunMeta, VarianceMap)> {
    let path = path.as_ref();
    let text = read(path)?;
    let meta = RunMeta::parse(&text);
    let mut values = BTreeMap::new();
    // Grid rows may start with a wall `#`; header lines are the magic line and `# key = value`.
    let rows = text.lines().skip(1).filter(|l| !(l.starts_with('#') && l.contains('=')) && !l.trim().is_empty());
    for (y, line) in rows.enumerate() {
        for (x, tok) in line.split_whitespace().enumerate() {
            if matches!(tok, "#" | "T" | "G" | ".") {
                continue;
            }
            let v: f64 = tok.parse().map_err(|_| Error::format(path, format!("bad value {tok:?} at row {y}")))?;
            values.insert(Pos::new(x, y), v);
        }
    }
    let provenance = meta.get("provenance").map(str::parse::<Provenance>).transpose()?.unwrap_or(Provenance::Learned);
    let policy_id = meta.get("policy").unwrap_or_default().to_string();
    Ok((meta, VarianceMap { values, stderr: None, policy_id, provenance }))
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum TraceRecord {
    Header {
        format: String,
        meta: RunMeta,
    },
    Step {
        episode: usize,
        t: usize,
        #[serde(flatten)]
        step: TraceStep,
    },
    Episode {
        episode: usize,
        total_return: f64,
        expert_calls: u32,
        outcome: Outcome,
    },
}

/// JSON lines: a header, one record per step, one summary per episode.
pub fn traces_text(traces: &[EpisodeTrace], meta: &RunMeta) -> String {
    let mut out = String::new();
    let mut push = |rec: &TraceRecord| {
        out.push_str(&serde_json::to_string(rec).expect("trace serialises"));
        out.push('\n');
    };
    push(&TraceRecord::Header { format: "hitl-trace v1".into(), meta: meta.clone() });
    for (episode, trace) in traces.iter().enumerate() {
        for (t, step) in trace.steps.iter().enumerate() {
            push(&TraceRecord::Step { episode, t, step: *step });
        }
        push(&TraceRecord::Episode {
            episode,
            total_return: trace.total_return,
            expert_calls: trace.expert_calls,
            outcome: trace.outcome,
        });
    }
    out
}

pub fn write_traces(path: impl AsRef<Path>, traces: &[EpisodeTrace], meta: &RunMeta) -> Result<()> {
    write(path.as_ref(), &traces_text(traces, meta))
}

pub fn read_traces(path: impl AsRef<Path>) -> Result<(RunMeta, Vec<EpisodeTrace>)> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut meta = RunMeta::default();
    let mut traces = Vec::new();
    let mut steps = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: TraceRecord =
            serde_json::from_str(line).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        match rec {
            TraceRecord::Header { meta: m, .. } => meta = m,
            TraceRecord::Step { step, .. } => steps.push(step),
            TraceRecord::Episode { total_return, expert_calls, outcome, .. } => {
                traces.push(EpisodeTrace { steps: std::mem::take(&mut steps), total_return, expert_calls, outcome })
            }
        }
    }
    if !steps.is_empty() {
        return Err(Error::format(path, "steps after the last episode summary"));
    }
    Ok((meta, traces))
}
