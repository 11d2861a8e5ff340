//! Seeded episode batches and the success-rate report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::Verb;
use crate::orchestrator::{run_episode, BackendChoice, EpisodeConfig, EpisodeError, EpisodeResult, Mode, DEFAULT_MAX_STEPS};
use crate::llm::{BackendConfig, FixtureConfig, FixtureMode};
use crate::world::{NoiseMap, NOISY_VERBS};

/// Shown wherever a rate is undefined.
pub const UNDEFINED: &str = "–";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub tasks: Vec<PathBuf>,
    pub mode: Mode,
    pub episodes: u32,
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseMap>,
    pub max_steps: u32,
    #[serde(default)]
    pub backend: BackendChoice,
}

impl BenchmarkSpec {
    pub fn new(tasks: Vec<PathBuf>, mode: Mode, episodes: u32) -> Self {
        Self {
            tasks,
            mode,
            episodes,
            base_seed: 0,
            noise: None,
            max_steps: DEFAULT_MAX_STEPS,
            backend: BackendChoice::Symbolic,
        }
    }

    /// Episode `i` of `task` runs with seed `base_seed + i`.
    pub fn episode(&self, task: &Path, i: u32) -> EpisodeConfig {
        EpisodeConfig {
            seed: self.base_seed + u64::from(i),
            max_steps: self.max_steps,
            mode: self.mode,
            noise: self.noise.clone(),
            backend: self.backend.clone(),
            ..EpisodeConfig::for_scene(task)
        }
    }
}

/// The noise protocol used throughout the benchmarks: GRASP and OPEN fail half the time.
pub fn benchmark_noise() -> NoiseMap {
    NoiseMap::from([(Verb::Grasp, 0.5), (Verb::Open, 0.5)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub task: String,
    pub mode: Mode,
    pub episodes: u32,
    pub successes: u32,
    /// Episodes cut short by a backend failure; counted as unsuccessful.
    pub aborted: u32,
    pub success_rate: Option<f64>,
    pub mean_steps: Option<f64>,
    /// Failed GRASP/OPEN attempts per successful GRASP/OPEN.
    pub mean_retries: Option<f64>,
}

impl ReportRow {
    pub fn from_results(task: &str, mode: Mode, results: &[EpisodeResult]) -> Self {
        let episodes = results.len() as u32;
        let successes = results.iter().filter(|r| r.success).count() as u32;
        let aborted = results.iter().filter(|r| r.aborted()).count() as u32;
        let (mut ok, mut failed) = (0u64, 0u64);
        for e in results.iter().flat_map(|r| &r.trace) {
            if NOISY_VERBS.contains(&e.action.verb) && e.outcome.executed {
                if e.outcome.succeeded {
                    ok += 1;
                } else {
                    failed += 1;
                }
            }
        }
        let steps: u64 = results.iter().map(|r| u64::from(r.steps)).sum();
        Self {
            task: task.to_string(),
            mode,
            episodes,
            successes,
            aborted,
            success_rate: (episodes > 0).then(|| f64::from(successes) / f64::from(episodes)),
            mean_steps: (episodes > 0).then(|| steps as f64 / f64::from(episodes)),
            mean_retries: (ok > 0).then(|| failed as f64 / ok as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<ReportRow>,
}

impl BenchmarkReport {
    /// Mean of the defined task rates; present only when there are several rows.
    pub fn average(&self) -> Option<f64> {
        if self.rows.len() < 2 {
            return None;
        }
        let rates: Vec<f64> = self.rows.iter().filter_map(|r| r.success_rate).collect();
        (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64)
    }

    pub fn row(&self, task: &str, mode: Mode) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.task == task && r.mode == mode)
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("missing task fixtures: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingFixtures(Vec<PathBuf>),
    #[error("task {0}: {1}")]
    Episode(String, EpisodeError),
    #[error("unknown report format `{0}` (expected table or csv)")]
    Format(String),
    #[error("noise spec: {0}")]
    Noise(String),
    #[error("malformed report csv: {0}")]
    Csv(String),
}

/// Short task name: `tasks/task5.scene.json` becomes `task5`.
pub fn task_name(scene: &Path) -> String {
    let name = scene.file_name().and_then(|n| n.to_str()).unwrap_or("task");
    name.strip_suffix(".scene.json")
        .or_else(|| name.strip_suffix(".json"))
        .unwrap_or(name)
        .to_string()
}

/// Every scene and goal file the spec needs that is not on disk.
pub fn missing_fixtures(spec: &BenchmarkSpec) -> Vec<PathBuf> {
    spec.tasks
        .iter()
        .flat_map(|t| {
            let cfg = EpisodeConfig::for_scene(t);
            [cfg.scene, cfg.goal]
        })
        .chain(replay_fixture(&spec.backend))
        .filter(|p| !p.is_file())
        .collect()
}

fn replay_fixture(backend: &BackendChoice) -> Option<PathBuf> {
    match backend {
        BackendChoice::External(BackendConfig {
            fixture: Some(FixtureConfig {
                mode: FixtureMode::Replay,
                path,
            }),
            ..
        }) => Some(path.clone()),
        _ => None,
    }
}

/// Parses `grasp=0.5,open=0.5`.
pub fn parse_noise(text: &str) -> Result<NoiseMap, HarnessError> {
    let mut map = NoiseMap::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (verb, p) = part
            .split_once('=')
            .ok_or_else(|| HarnessError::Noise(format!("`{part}` is not verb=probability")))?;
        let verb: Verb = verb.parse().map_err(|e: crate::action::VerbParseError| HarnessError::Noise(e.to_string()))?;
        let p: f64 = p.trim().parse().map_err(|_| HarnessError::Noise(format!("bad probability in `{part}`")))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(HarnessError::Noise(format!("probability {p} outside [0, 1]")));
        }
        map.insert(verb, p);
    }
    Ok(map)
}

/// Results of one batch, in task order then seed order.
pub struct BatchOutcome {
    pub report: BenchmarkReport,
    pub episodes: Vec<(String, Vec<EpisodeResult>)>,
}

pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<BatchOutcome, HarnessError> {
    let missing = missing_fixtures(spec);
    if !missing.is_empty() {
        return Err(HarnessError::MissingFixtures(missing));
    }
    let mut report = BenchmarkReport::default();
    let mut episodes = Vec::new();
    for task in &spec.tasks {
        let name = task_name(task);
        let results: Vec<EpisodeResult> = (0..spec.episodes)
            .into_par_iter()
            .map(|i| run_episode(&spec.episode(task, i)))
            .collect::<Result<_, _>>()
            .map_err(|e| HarnessError::Episode(name.clone(), e))?;
        report.rows.push(ReportRow::from_results(&name, spec.mode, &results));
        episodes.push((name, results));
    }
    Ok(BatchOutcome { report, episodes })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Table,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(HarnessError::Format(other.to_string())),
        }
    }
}

fn fixed(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |x| format!("{x:.digits$}"))
}

fn percent(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |x| format!("{:.0}%", x * 100.0))
}

const CSV_HEADER: [&str; 8] = [
    "task",
    "mode",
    "episodes",
    "successes",
    "aborted",
    "success_rate",
    "mean_steps",
    "mean_retries",
];

pub fn emit_report(report: &BenchmarkReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => emit_csv(report),
        ReportFormat::Table => emit_table(report),
    }
}

fn emit_csv(report: &BenchmarkReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory csv");
    for r in &report.rows {
        w.write_record([
            r.task.clone(),
            r.mode.to_string(),
            r.episodes.to_string(),
            r.successes.to_string(),
            r.aborted.to_string(),
            fixed(r.success_rate, 4),
            fixed(r.mean_steps, 2),
            fixed(r.mean_retries, 3),
        ])
        .expect("in-memory csv");
    }
    if let Some(avg) = report.average() {
        let mode = report.rows.first().map(|r| r.mode.to_string()).unwrap_or_default();
        w.write_record(["Average", &mode, "", "", "", &fixed(Some(avg), 4), "", ""])
            .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
}

fn emit_table(report: &BenchmarkReport) -> String {
    let header = ["Task", "Mode", "Episodes", "Success", "Rate", "Mean steps", "Retries", "Aborted"];
    let mut lines: Vec<[String; 8]> = report
        .rows
        .iter()
        .map(|r| {
            [
                r.task.clone(),
                r.mode.to_string(),
                r.episodes.to_string(),
                r.successes.to_string(),
                percent(r.success_rate),
                fixed(r.mean_steps, 1),
                fixed(r.mean_retries, 2),
                r.aborted.to_string(),
            ]
        })
        .collect();
    if let Some(avg) = report.average() {
        let blank = String::new;
        lines.push(["Average".into(), blank(), blank(), blank(), percent(Some(avg)), blank(), blank(), blank()]);
    }
    let mut widths = header.map(|h| h.chars().count());
    for l in &lines {
        for (w, cell) in widths.iter_mut().zip(l) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let render = |cells: Vec<String>| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(widths).enumerate() {
            let pad = w - cell.chars().count();
            if i > 0 {
                s.push_str("  ");
            }
            if i < 2 {
                let _ = write!(s, "{cell}{}", " ".repeat(pad));
            } else {
                let _ = write!(s, "{}{cell}", " ".repeat(pad));
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = render(header.iter().map(|h| h.to_string()).collect());
    for l in lines {
        out.push_str(&render(l.to_vec()));
    }
    out
}

fn parse_opt(s: &str) -> Result<Option<f64>, HarnessError> {
    if s == UNDEFINED || s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| HarnessError::Csv(format!("bad number `{s}`")))
}

/// Reads back the rows of a csv report; the Average row is recomputed, not stored.
pub fn parse_csv_report(text: &str) -> Result<BenchmarkReport, HarnessError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| HarnessError::Csv(e.to_string()))?;
        if rec.get(0) == Some("Average") {
            continue;
        }
        let field = |i: usize| rec.get(i).ok_or_else(|| HarnessError::Csv(format!("missing column {i}")));
        let int = |i: usize| -> Result<u32, HarnessError> {
            field(i)?.parse().map_err(|_| HarnessError::Csv(format!("bad integer in column {i}")))
        };
        rows.push(ReportRow {
            task: field(0)?.to_string(),
            mode: field(1)?.parse().map_err(|e: crate::orchestrator::ModeParseError| HarnessError::Csv(e.to_string()))?,
            episodes: int(2)?,
            successes: int(3)?,
            aborted: int(4)?,
            success_rate: parse_opt(field(5)?)?,
            mean_steps: parse_opt(field(6)?)?,
            mean_retries: parse_opt(field(7)?)?,
        });
    }
    Ok(BenchmarkReport { rows })
}
