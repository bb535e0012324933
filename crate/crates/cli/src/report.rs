use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::config::RunConfig;
use crate::lab::{baseline_name, EvalReport, RlSummary};
use crate::table::{cell, Table};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("a report needs at least two run directories, got {0}")]
    TooFewRuns(usize),
    #[error("{dir}: {detail}")]
    Unreadable { dir: PathBuf, detail: String },
    #[error("{dir} has neither rl_summary.json nor eval.json")]
    NoMetrics { dir: PathBuf },
    #[error("runs are on different tasks: {first} uses `{a}`, {other} uses `{b}`")]
    TaskMismatch {
        first: PathBuf,
        other: PathBuf,
        a: String,
        b: String,
    },
}

/// Final metrics of one run directory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub dir: PathBuf,
    /// Policy optimisation mode, or `eval` for a run without one.
    pub label: String,
    pub seed: u64,
    pub config_hash: String,
    pub initial_reward: Option<f64>,
    pub final_reward: f64,
    pub final_accuracy: f64,
    pub outer_steps: Option<usize>,
}

/// Head-to-head of two labels on their shared seeds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub a: String,
    pub b: String,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub runs: Vec<RunSummary>,
    pub tallies: Vec<Tally>,
    /// Seeds that some label was run with and another was not.
    pub unshared_seeds: Vec<u64>,
}

fn unreadable(dir: &Path, e: impl std::fmt::Display) -> ReportError {
    ReportError::Unreadable {
        dir: dir.to_path_buf(),
        detail: e.to_string(),
    }
}

fn read_json<T: for<'de> serde::Deserialize<'de>>(dir: &Path, name: &str) -> Result<Option<T>, ReportError> {
    let p = dir.join(name);
    if !p.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&p).map_err(|e| unreadable(dir, e))?;
    serde_json::from_str(&text).map(Some).map_err(|e| unreadable(dir, format!("{name}: {e}")))
}

fn task_key(cfg: &RunConfig) -> String {
    let t = toml::to_string(&cfg.task).unwrap_or_default();
    t.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn load(dir: &Path) -> Result<(RunSummary, String), ReportError> {
    let text = fs::read_to_string(dir.join("config.toml")).map_err(|e| unreadable(dir, e))?;
    let cfg = RunConfig::from_toml(&text).map_err(|e| unreadable(dir, format!("{e:#}")))?;
    let base = |label: String| RunSummary {
        dir: dir.to_path_buf(),
        label,
        seed: cfg.seed,
        config_hash: cfg.hash(),
        initial_reward: None,
        final_reward: 0.0,
        final_accuracy: 0.0,
        outer_steps: None,
    };
    let summary = if let Some(rl) = read_json::<RlSummary>(dir, "rl_summary.json")? {
        RunSummary {
            initial_reward: Some(rl.initial.mean_reward),
            final_reward: rl.last.mean_reward,
            final_accuracy: rl.last.accuracy,
            outer_steps: Some(rl.outer_steps),
            ..base(baseline_name(cfg.rl.baseline))
        }
    } else if let Some(ev) = read_json::<EvalReport>(dir, "eval.json")? {
        RunSummary {
            final_reward: ev.overall.mean_reward,
            final_accuracy: ev.overall.accuracy,
            ..base("eval".into())
        }
    } else {
        return Err(ReportError::NoMetrics { dir: dir.to_path_buf() });
    };
    Ok((summary, task_key(&cfg)))
}

/// Side-by-side final metrics of completed runs on a common task.
pub fn compare_report(dirs: &[PathBuf]) -> Result<CompareReport, ReportError> {
    if dirs.len() < 2 {
        return Err(ReportError::TooFewRuns(dirs.len()));
    }
    let mut runs = Vec::new();
    let mut first_task: Option<String> = None;
    for d in dirs {
        let (run, task) = load(d)?;
        match &first_task {
            None => first_task = Some(task),
            Some(a) if *a != task => {
                return Err(ReportError::TaskMismatch {
                    first: dirs[0].clone(),
                    other: d.clone(),
                    a: a.clone(),
                    b: task,
                })
            }
            _ => {}
        }
        runs.push(run);
    }

    let mut by_label: BTreeMap<&str, BTreeMap<u64, f64>> = BTreeMap::new();
    for r in &runs {
        by_label.entry(&r.label).or_default().insert(r.seed, r.final_reward);
    }
    let all: BTreeSet<u64> = runs.iter().map(|r| r.seed).collect();
    let unshared_seeds = if by_label.len() > 1 {
        all.iter()
            .copied()
            .filter(|s| by_label.values().any(|m| !m.contains_key(s)))
            .collect()
    } else {
        Vec::new()
    };
    let labels: Vec<&str> = by_label.keys().copied().collect();
    let mut tallies = Vec::new();
    for (i, a) in labels.iter().enumerate() {
        for b in &labels[i + 1..] {
            let mut t = Tally {
                a: a.to_string(),
                b: b.to_string(),
                wins: 0,
                losses: 0,
                ties: 0,
            };
            for (seed, ra) in &by_label[a] {
                let Some(rb) = by_label[b].get(seed) else { continue };
                match ra.total_cmp(rb) {
                    std::cmp::Ordering::Greater => t.wins += 1,
                    std::cmp::Ordering::Less => t.losses += 1,
                    std::cmp::Ordering::Equal => t.ties += 1,
                }
            }
            tallies.push(t);
        }
    }
    Ok(CompareReport {
        runs,
        tallies,
        unshared_seeds,
    })
}

impl CompareReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new(
            "run",
            ["label", "seed", "config_hash", "initial_reward", "final_reward", "final_accuracy", "outer_steps"]
                .map(String::from)
                .to_vec(),
        );
        for r in &self.runs {
            t.push_text(
                &r.dir.display().to_string(),
                vec![
                    r.label.clone(),
                    r.seed.to_string(),
                    r.config_hash[..12].to_string(),
                    cell(r.initial_reward),
                    cell(Some(r.final_reward)),
                    cell(Some(r.final_accuracy)),
                    r.outer_steps.map_or("-".into(), |n| n.to_string()),
                ],
            );
        }
        t
    }

    pub fn tally_table(&self) -> Table {
        let mut t = Table::new("pair", vec!["wins".into(), "losses".into(), "ties".into()]);
        for x in &self.tallies {
            t.push_text(
                &format!("{} vs {}", x.a, x.b),
                vec![x.wins.to_string(), x.losses.to_string(), x.ties.to_string()],
            );
        }
        t
    }

    pub fn to_markdown(&self) -> String {
        let mut out = self.table().to_markdown();
        if !self.tallies.is_empty() {
            out.push_str("\nPer-seed final reward, first label against second:\n\n");
            out.push_str(&self.tally_table().to_markdown());
        }
        if !self.unshared_seeds.is_empty() {
            let s: Vec<String> = self.unshared_seeds.iter().map(u64::to_string).collect();
            out.push_str(&format!("\nWarning: seeds not shared by every label: {}\n", s.join(", ")));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        self.table().to_csv()
    }
}
