//! Demonstration collection with the scripted expert.

use std::path::PathBuf;

use ganmpc::env::{expert_threshold, rollout, Expert, Trajectory};

use crate::config::ExperimentConfig;
use crate::error::{LabError, Result};
use crate::formats::{read_trajectories, write_trajectories, TrajectoryRecord};
use crate::hash::git_blob_hash;

#[derive(Debug, Clone)]
pub struct DemoSet {
    pub path: PathBuf,
    pub trajectories: Vec<Trajectory>,
    /// Git object id of the file.
    pub hash: String,
}

impl DemoSet {
    pub fn mean_reward(&self) -> f64 {
        let steps: usize = self.trajectories.iter().map(Trajectory::len).sum();
        self.trajectories.iter().map(Trajectory::total_reward).sum::<f64>() / steps.max(1) as f64
    }
}

/// Rolls the expert out `n_demos` times on the demonstrator and writes the
/// trajectory file. Nothing is written if the expert's mean per-step reward
/// falls below the task threshold.
pub fn collect_demos(cfg: &ExperimentConfig) -> Result<DemoSet> {
    cfg.validate()?;
    let seeds = cfg.seeds();
    let mut expert = Expert::new(&cfg.env)?;
    let mut records = Vec::with_capacity(cfg.n_demos);
    let mut trajectories = Vec::with_capacity(cfg.n_demos);
    for i in 0..cfg.n_demos as u64 {
        let seed = seeds.demo(i);
        let t = rollout(&cfg.env, &mut expert, seed, cfg.env.max_steps)?;
        records.push(TrajectoryRecord::new(cfg.task(), cfg.env.physical, seed, &t));
        trajectories.push(t);
    }
    let path = cfg.demo_path();
    let set = DemoSet {
        path: path.clone(),
        trajectories,
        hash: String::new(),
    };
    let (mean, threshold) = (set.mean_reward(), expert_threshold(cfg.task()));
    if !(mean >= threshold) {
        return Err(LabError::ExpertUnderperforms { mean, threshold });
    }
    let bytes = write_trajectories(&path, records)?;
    Ok(DemoSet {
        hash: git_blob_hash(&bytes),
        ..set
    })
}

/// Loads the configured demonstration file and checks that it matches the
/// configured task and demonstrator.
pub fn load_demos(cfg: &ExperimentConfig) -> Result<DemoSet> {
    let path = cfg.demo_path();
    if !path.exists() {
        return Err(LabError::Config(format!(
            "demonstrations {} not found; run `demo-collect` first",
            path.display()
        )));
    }
    let (file, bytes) = read_trajectories(&path)?;
    if file.records.is_empty() {
        return Err(LabError::Format(format!("{}: no trajectories", path.display())));
    }
    for r in &file.records {
        if r.task != cfg.task() || r.physical != cfg.env.physical.as_array() {
            return Err(LabError::Mismatch(format!(
                "{}: trajectory seed {} is not a {} demonstrator episode",
                path.display(),
                r.seed,
                cfg.task().name()
            )));
        }
    }
    Ok(DemoSet {
        trajectories: file.trajectories(),
        hash: git_blob_hash(&bytes),
        path,
    })
}
