//! Seeded closed-loop evaluation of a trained run against the demonstrator.

use std::path::{Path, PathBuf};

use ganmpc::env::{rollout, EnvSpec, Expert, Policy};
use ganmpc::eval::EvalResult;
use ganmpc::ganmpc::Algorithm;
use ganmpc::mpc::{mpc_plan, IlqrSolution, MpcConfig, MpcController, PlanModels};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{LabError, Result};
use crate::formats::{read_json, write_json, Checkpoint};
use crate::run::{checkpoint_dir, env_spec_hash, read_manifest, read_run_config, Manifest, RunStatus};

pub const EVAL_FORMAT: &str = "ganmpc-eval";
pub const EVAL_VERSION: u32 = 1;
pub const TRACE_FORMAT: &str = "ganmpc-ilqr-trace";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalDoc {
    pub format: String,
    pub version: u32,
    pub task: ganmpc::env::Task,
    pub algorithm: Algorithm,
    pub label: String,
    pub imitator: [f64; 3],
    pub seed: u64,
    pub config_hash: String,
    pub checkpoint_iteration: usize,
    pub result: EvalResult,
}

/// Total episode rewards of `policy` on `spec` for each seed.
pub fn episode_rewards(spec: &EnvSpec, policy: &mut dyn Policy, seeds: &[u64]) -> Result<Vec<f64>> {
    seeds
        .iter()
        .map(|&s| Ok(rollout(spec, policy, s, spec.max_steps)?.total_reward()))
        .collect()
}

/// Episode rewards of the scripted expert on the demonstrator itself.
pub fn demonstrator_rewards(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<Vec<f64>> {
    let mut expert = Expert::new(&cfg.env)?;
    episode_rewards(&cfg.env, &mut expert, seeds)
}

fn policy_rewards(
    algorithm: Algorithm,
    ckpt: &Checkpoint,
    mpc: &MpcConfig,
    spec: &EnvSpec,
    seeds: &[u64],
) -> Result<Vec<f64>> {
    if algorithm.uses_mpc() {
        let mut ctl = MpcController {
            models: ckpt.deployed(),
            config: mpc,
        };
        episode_rewards(spec, &mut ctl, seeds)
    } else {
        let mut bc = &ckpt.bc;
        episode_rewards(spec, &mut bc, seeds)
    }
}

#[derive(Debug, Clone, Serialize)]
struct TraceStep {
    step: usize,
    state: Vec<f64>,
    solution: IlqrSolution<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct TraceDoc {
    format: &'static str,
    version: u32,
    episode_seed: u64,
    steps: Vec<TraceStep>,
}

/// iLQR solves along the first `steps` states of one evaluation episode.
fn ilqr_trace(models: PlanModels<'_>, mpc: &MpcConfig, spec: &EnvSpec, seed: u64, steps: usize) -> Result<TraceDoc> {
    let mut s = ganmpc::env::reset(spec, seed);
    let mut out = Vec::with_capacity(steps);
    for step in 0..steps {
        let solution = mpc_plan(models, mpc, &s)?;
        let a = match solution.actions.first() {
            Some(a) => a.clone(),
            None => break,
        };
        let next = ganmpc::env::step(spec, &s, &a)?.0;
        out.push(TraceStep {
            step,
            state: std::mem::replace(&mut s, next),
            solution,
        });
    }
    Ok(TraceDoc {
        format: TRACE_FORMAT,
        version: 1,
        episode_seed: seed,
        steps: out,
    })
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    /// Where to write the iLQR trace of the first evaluation episode.
    pub dump_ilqr_trace: Option<PathBuf>,
    pub trace_steps: usize,
}

/// Loads a run's final checkpoint, evaluates it on the imitator with the
/// shared evaluation seeds, and writes `eval.json` into the run directory.
pub fn evaluate_run(run: &Path, opts: &EvalOptions) -> Result<EvalDoc> {
    let manifest = read_manifest(run)?;
    if manifest.status != RunStatus::Completed {
        return Err(LabError::Config(format!("{}: run did not complete", run.display())));
    }
    let cfg = read_run_config(run, &manifest)?;
    let spec = cfg.imitator_spec(manifest.imitator()?);
    let env_hash = env_spec_hash(&spec);
    if env_hash != manifest.env_spec_hash {
        return Err(LabError::Mismatch(format!(
            "{}: manifest environment hash does not match its configuration",
            run.display()
        )));
    }
    let ckpt = Checkpoint::load(&checkpoint_dir(run, manifest.iterations), cfg.task(), &cfg.models, &env_hash)?;
    let seeds = cfg.seeds().eval_seeds(cfg.eval_episodes);
    if let Some(path) = &opts.dump_ilqr_trace {
        if !manifest.algorithm.uses_mpc() {
            return Err(LabError::Config("an iLQR trace needs an MPC-based run".into()));
        }
        let trace = ilqr_trace(ckpt.deployed(), &cfg.mpc, &spec, seeds[0], opts.trace_steps.max(1))?;
        write_json(path, &trace)?;
    }
    let imitator = policy_rewards(manifest.algorithm, &ckpt, &cfg.mpc, &spec, &seeds)?;
    let demonstrator = demonstrator_rewards(&cfg, &seeds)?;
    let doc = eval_doc(&manifest, ckpt.iteration, EvalResult::new(seeds, imitator, demonstrator)?);
    write_json(&run.join("eval.json"), &doc)?;
    Ok(doc)
}

fn eval_doc(m: &Manifest, iteration: usize, result: EvalResult) -> EvalDoc {
    EvalDoc {
        format: EVAL_FORMAT.into(),
        version: EVAL_VERSION,
        task: m.task,
        algorithm: m.algorithm,
        label: m.label.clone(),
        imitator: m.imitator,
        seed: m.seed,
        config_hash: m.config_hash.clone(),
        checkpoint_iteration: iteration,
        result,
    }
}

pub fn read_eval(run: &Path) -> Result<EvalDoc> {
    let doc: EvalDoc = read_json(&run.join("eval.json"))?;
    if doc.format != EVAL_FORMAT || doc.version != EVAL_VERSION {
        return Err(LabError::Format(format!("{}: unsupported evaluation document", run.display())));
    }
    Ok(doc)
}
