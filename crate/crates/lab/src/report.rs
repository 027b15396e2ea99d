//! Result tables keyed by (task, imitator, algorithm) and the threshold
//! checks behind `report --check`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ganmpc::env::Task;
use ganmpc::eval::{mean, std_dev};
use ganmpc::ganmpc::Algorithm;

use crate::config::{imitator_label, ExperimentConfig};
use crate::error::{LabError, Result};
use crate::evaluate::{read_eval, EvalDoc};
use crate::formats::write_atomic;
use crate::run::{read_manifest, read_run_config, Manifest, RunStatus};

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub config: Option<ExperimentConfig>,
    pub eval: Option<EvalDoc>,
}

impl RunSummary {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = read_manifest(dir)?;
        let config = read_run_config(dir, &manifest).ok();
        let eval = if dir.join("eval.json").exists() {
            Some(read_eval(dir)?)
        } else {
            None
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            config,
            eval,
        })
    }

    pub fn is_complete(&self) -> bool {
        self.manifest.status == RunStatus::Completed && self.eval.is_some()
    }
}

/// Runs matching a glob; entries without a manifest are ignored.
pub fn collect_runs(pattern: &str) -> Result<Vec<RunSummary>> {
    let paths = glob::glob(pattern).map_err(|e| LabError::Config(format!("bad glob `{pattern}`: {e}")))?;
    let mut dirs: Vec<PathBuf> = paths
        .filter_map(|p| p.ok())
        .filter(|p| p.join("manifest.json").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(LabError::Config(format!("no run directories match `{pattern}`")));
    }
    dirs.iter().map(|d| RunSummary::load(d)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Complete,
    /// Some seeds lack evaluation results.
    Partial,
    Absent,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub task: Task,
    pub imitator: [f64; 3],
    pub algorithm: Algorithm,
    pub label: String,
    pub seeds: Vec<u64>,
    /// Relative reward of each evaluated seed.
    pub per_seed: Vec<f64>,
    pub episodes: usize,
    /// Mean over seeds of the relative reward.
    pub mean: f64,
    /// Standard deviation of per-episode relative rewards, pooled over seeds.
    pub std: f64,
    pub status: RowStatus,
}

impl Row {
    pub fn imitator_label(&self) -> String {
        let p = self.imitator;
        imitator_label(&ganmpc::env::PhysicalParams {
            pole_mass_scale: p[0],
            cart_mass_scale: p[1],
            cart_dim_scale: p[2],
        })
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub rows: Vec<Row>,
    /// Run directories without a completed evaluation.
    pub incomplete: Vec<PathBuf>,
}

fn task_order(t: Task) -> usize {
    match t {
        Task::PendulumSwingup => 0,
        Task::CartpoleBalance => 1,
    }
}

type Key = (&'static str, [u64; 3], String);

fn key(m: &Manifest) -> Key {
    (m.task.name(), m.imitator.map(f64::to_bits), m.label.clone())
}

/// Aggregates runs into rows ordered by task, then by the position of the
/// imitator and the algorithm in the run's configuration.
pub fn build_report(runs: &[RunSummary]) -> Report {
    let mut groups: BTreeMap<Key, Vec<&RunSummary>> = BTreeMap::new();
    for r in runs {
        groups.entry(key(&r.manifest)).or_default().push(r);
    }
    let mut rows: Vec<(Vec<usize>, Row)> = groups
        .into_values()
        .map(|mut group| {
            group.sort_by_key(|r| r.manifest.seed);
            let m = &group[0].manifest;
            let cfg = group.iter().find_map(|r| r.config.as_ref());
            let pos = |found: Option<usize>| found.unwrap_or(usize::MAX);
            let order = vec![
                task_order(m.task),
                pos(cfg.and_then(|c| c.imitators.iter().position(|p| *p == m.imitator))),
                pos(cfg.and_then(|c| c.algorithms.iter().position(|a| *a == m.algorithm))),
                usize::from(m.label != m.algorithm.name()),
            ];
            let evals: Vec<&EvalDoc> = group.iter().filter(|r| r.is_complete()).filter_map(|r| r.eval.as_ref()).collect();
            let per_seed: Vec<f64> = evals.iter().map(|e| e.result.relative_reward).collect();
            let pooled: Vec<f64> = evals
                .iter()
                .flat_map(|e| e.result.imitator_rewards.iter().map(|r| r / e.result.demonstrator_mean))
                .collect();
            let status = if evals.is_empty() {
                RowStatus::Absent
            } else if evals.len() < group.len() {
                RowStatus::Partial
            } else {
                RowStatus::Complete
            };
            let row = Row {
                task: m.task,
                imitator: m.imitator,
                algorithm: m.algorithm,
                label: m.label.clone(),
                seeds: evals.iter().map(|e| e.seed).collect(),
                episodes: pooled.len(),
                mean: mean(&per_seed),
                std: std_dev(&pooled),
                per_seed,
                status,
            };
            (order, row)
        })
        .collect();
    rows.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then_with(|| a.1.imitator.partial_cmp(&b.1.imitator).unwrap())
            .then_with(|| a.1.label.cmp(&b.1.label))
    });
    let incomplete = runs.iter().filter(|r| !r.is_complete()).map(|r| r.dir.clone()).collect();
    Report {
        rows: rows.into_iter().map(|(_, r)| r).collect(),
        incomplete,
    }
}

fn status_name(s: RowStatus) -> &'static str {
    match s {
        RowStatus::Complete => "complete",
        RowStatus::Partial => "partial",
        RowStatus::Absent => "absent",
    }
}

impl Report {
    pub fn csv(&self) -> String {
        let mut out = String::from("task,imitator,pole_mass,cart_mass,dims,algorithm,seeds,episodes,mean,std,status\n");
        for r in &self.rows {
            let (m, s) = if r.status == RowStatus::Absent {
                (String::new(), String::new())
            } else {
                (r.mean.to_string(), r.std.to_string())
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{m},{s},{}",
                r.task.name(),
                r.imitator_label(),
                r.imitator[0],
                r.imitator[1],
                r.imitator[2],
                r.label,
                r.seeds.len(),
                r.episodes,
                status_name(r.status)
            )
            .unwrap();
        }
        out
    }

    /// One block per task: imitators down, algorithms across.
    pub fn text(&self) -> String {
        let mut out = String::new();
        let mut tasks: Vec<Task> = Vec::new();
        for r in &self.rows {
            if !tasks.contains(&r.task) {
                tasks.push(r.task);
            }
        }
        for task in tasks {
            let rows: Vec<&Row> = self.rows.iter().filter(|r| r.task == task).collect();
            let mut labels: Vec<&str> = Vec::new();
            let mut imitators: Vec<String> = Vec::new();
            for r in &rows {
                if !labels.contains(&r.label.as_str()) {
                    labels.push(&r.label);
                }
                if !imitators.contains(&r.imitator_label()) {
                    imitators.push(r.imitator_label());
                }
            }
            writeln!(out, "{} (relative trajectory reward, mean ± std)", task.name()).unwrap();
            write!(out, "{:<14}", "imitator").unwrap();
            for l in &labels {
                write!(out, " {l:>20}").unwrap();
            }
            out.push('\n');
            for imit in &imitators {
                write!(out, "{imit:<14}").unwrap();
                for l in &labels {
                    let cell = match rows.iter().find(|r| &r.imitator_label() == imit && r.label == *l) {
                        Some(r) if r.status == RowStatus::Absent => "absent".to_string(),
                        Some(r) => {
                            let mark = if r.status == RowStatus::Partial { "*" } else { "" };
                            format!("{:.3} ± {:.3}{mark}", r.mean, r.std)
                        }
                        None => "-".to_string(),
                    };
                    write!(out, " {cell:>20}").unwrap();
                }
                out.push('\n');
            }
            out.push('\n');
        }
        if !self.incomplete.is_empty() {
            writeln!(out, "incomplete runs:").unwrap();
            for d in &self.incomplete {
                writeln!(out, "  {}", d.display()).unwrap();
            }
        }
        out
    }

    /// Bar-chart data for one task: one bar per (imitator, algorithm).
    pub fn bars(&self, task: Task) -> String {
        let mut out = String::from("imitator,algorithm,mean,std\n");
        for r in self.rows.iter().filter(|r| r.task == task && r.status != RowStatus::Absent) {
            writeln!(out, "{},{},{},{}", r.imitator_label(), r.label, r.mean, r.std).unwrap();
        }
        out
    }

    /// Writes `report.csv`, `report.txt` and `bars-<task>.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut files = vec![
            (dir.join("report.csv"), self.csv()),
            (dir.join("report.txt"), self.text()),
        ];
        for task in [Task::PendulumSwingup, Task::CartpoleBalance] {
            if self.rows.iter().any(|r| r.task == task) {
                files.push((dir.join(format!("bars-{}.csv", task.name())), self.bars(task)));
            }
        }
        for (path, text) in &files {
            write_atomic(path, text.as_bytes())?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }

    pub fn find(&self, task: Task, imitator: [f64; 3], label: &str) -> Option<&Row> {
        self.rows
            .iter()
            .find(|r| r.task == task && r.imitator == imitator && r.label == label && r.status != RowStatus::Absent)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: impl Into<String>, passed: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        passed,
        detail,
    }
}

pub const IDENTICAL_DYNAMICS_MIN: f64 = 0.9;
pub const ORDERING_SLACK: f64 = 0.05;
pub const DEGRADATION_SLACK: f64 = 0.05;
pub const MASK_TOLERANCE: f64 = 0.1;

fn pendulum(p: f64) -> [f64; 3] {
    [p, 1.0, 1.0]
}

/// Threshold checks on whatever rows are present; a check whose rows are
/// missing is not reported.
pub fn checks(report: &Report, runs: &[RunSummary]) -> Vec<Check> {
    let mut out = Vec::new();
    let gan = Algorithm::GanMpc.name();
    if let Some(r) = report.find(Task::CartpoleBalance, [1.0; 3], gan) {
        out.push(check(
            "cartpole identical dynamics",
            r.mean >= IDENTICAL_DYNAMICS_MIN,
            format!("gan_mpc {:.4} >= {IDENTICAL_DYNAMICS_MIN}", r.mean),
        ));
    }
    for p in [2.0, 3.0] {
        if let (Some(g), Some(b)) = (
            report.find(Task::PendulumSwingup, pendulum(p), gan),
            report.find(Task::PendulumSwingup, pendulum(p), Algorithm::Bc.name()),
        ) {
            out.push(check(
                format!("pendulum p{p} gan_mpc vs bc"),
                g.mean >= b.mean - ORDERING_SLACK,
                format!("gan_mpc {:.4} >= bc {:.4} - {ORDERING_SLACK}", g.mean, b.mean),
            ));
        }
    }
    let scales: Vec<(f64, f64)> = [1.0, 2.0, 3.0, 4.0]
        .iter()
        .filter_map(|&p| report.find(Task::PendulumSwingup, pendulum(p), gan).map(|r| (p, r.mean)))
        .collect();
    if scales.len() >= 2 {
        let ok = scales.windows(2).all(|w| w[1].1 <= w[0].1 + DEGRADATION_SLACK);
        let trail: Vec<String> = scales.iter().map(|(p, m)| format!("p{p}={m:.4}")).collect();
        out.push(check("pendulum graceful degradation", ok, trail.join(" ")));
    }
    if let Some(full) = report.find(Task::PendulumSwingup, pendulum(1.0), gan) {
        for masked in report.rows.iter().filter(|r| {
            r.task == Task::PendulumSwingup
                && r.imitator == pendulum(1.0)
                && r.algorithm == Algorithm::GanMpc
                && r.label != gan
                && r.status != RowStatus::Absent
        }) {
            out.push(check(
                format!("pendulum p1 {} vs gan_mpc", masked.label),
                (masked.mean - full.mean).abs() <= MASK_TOLERANCE,
                format!("|{:.4} - {:.4}| <= {MASK_TOLERANCE}", masked.mean, full.mean),
            ));
        }
    }
    let bad: Vec<String> = runs
        .iter()
        .filter(|r| r.manifest.status == RunStatus::Completed)
        .filter(|r| {
            let m = &r.manifest;
            let expected_zero = !m.algorithm.uses_mpc();
            m.interaction_steps != m.expected_interaction_steps || (expected_zero && m.interaction_steps != 0)
        })
        .map(|r| r.dir.display().to_string())
        .collect();
    out.push(check(
        "interaction accounting",
        bad.is_empty(),
        if bad.is_empty() {
            "every completed run matches n_mpc · k · max_steps".into()
        } else {
            format!("mismatched: {}", bad.join(", "))
        },
    ));
    out
}
