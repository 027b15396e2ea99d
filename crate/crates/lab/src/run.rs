//! Training runs: one directory per (configuration, algorithm, imitator,
//! seed) holding the configuration copy, a manifest, the metric log and a
//! checkpoint for every outer iteration.
//!
//! ```text
//! <output_dir>/runs/<task>-<label>-<imitator>-<config hash>-s<seed>/
//!     config.toml  manifest.json  metrics.csv  state.json
//!     checkpoints/iter_0000/{dynamics,predictor,bc,cost_live,cost_deployed,discriminator}.json
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ganmpc::env::{EnvSpec, PhysicalParams, Task};
use ganmpc::ganmpc::{initialize, train, Algorithm, GanMpcHyper, Initialization, IterationMetrics, RolloutSeeds, TrainState};
use serde::{Deserialize, Serialize};

use crate::config::{imitator_label, ExperimentConfig};
use crate::demos::{load_demos, DemoSet};
use crate::error::{io_err, LabError, Result};
use crate::formats::{read_json, write_atomic, write_json, Checkpoint};
use crate::hash::json_hash;
use crate::seeds::SeedPlan;

pub const MANIFEST_FORMAT: &str = "ganmpc-run";
pub const MANIFEST_VERSION: u32 = 1;
pub const METRICS_HEADER: &str = "iteration,disc_loss,gen_loss,disc_accuracy,mean_env_reward,buffer_size,wall_time_s";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

/// A contiguous block of environment seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRange {
    pub first: u64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub task: Task,
    pub algorithm: Algorithm,
    /// Algorithm name, suffixed with the observation mask when one is set.
    pub label: String,
    pub imitator: [f64; 3],
    pub seed: u64,
    pub core_seed: u64,
    pub base_seed: u64,
    pub config_hash: String,
    pub env_spec_hash: String,
    pub demo_file: PathBuf,
    /// Git object id of the demonstration file.
    pub demo_hash: String,
    pub demo_seeds: SeedRange,
    pub training_seeds: SeedRange,
    pub eval_seeds: SeedRange,
    pub iterations: usize,
    pub interaction_steps: u64,
    pub expected_interaction_steps: u64,
}

impl Manifest {
    pub fn imitator(&self) -> Result<PhysicalParams> {
        let p = self.imitator;
        Ok(PhysicalParams::new(p[0], p[1], p[2])?)
    }
}

/// `gan_mpc`, or `gan_mpc_mask110` when the discriminator sees a subset of
/// the state.
pub fn run_label(algorithm: Algorithm, hyper: &GanMpcHyper) -> String {
    match &hyper.obs_mask {
        Some(m) if m.iter().any(|v| !v) => {
            let bits: String = m.iter().map(|&v| if v { '1' } else { '0' }).collect();
            format!("{}_mask{bits}", algorithm.name())
        }
        _ => algorithm.name().to_string(),
    }
}

pub fn run_hyper(cfg: &ExperimentConfig, algorithm: Algorithm) -> GanMpcHyper {
    GanMpcHyper {
        algorithm,
        ..cfg.hyper.clone()
    }
}

pub fn env_spec_hash(spec: &EnvSpec) -> String {
    json_hash(spec)
}

pub fn run_dir(cfg: &ExperimentConfig, algorithm: Algorithm, imitator: &PhysicalParams, seed: u64) -> PathBuf {
    cfg.output_dir.join("runs").join(format!(
        "{}-{}-{}-{}-s{seed}",
        cfg.task().name(),
        run_label(algorithm, &cfg.hyper),
        imitator_label(imitator),
        &cfg.hash()[..12]
    ))
}

pub fn checkpoint_dir(run: &Path, iteration: usize) -> PathBuf {
    run.join("checkpoints").join(format!("iter_{iteration:04}"))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn metrics_csv(rows: &[IterationMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for m in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            m.iteration,
            opt(m.disc_loss),
            m.gen_loss,
            opt(m.disc_accuracy),
            m.mean_env_reward,
            m.buffer_size,
            m.wall_time_s
        )
        .unwrap();
    }
    out
}

/// Pre-training, behavior cloning and the next-state predictor depend only
/// on the demonstrations, the model settings and the seed, so they are
/// computed once and shared by every run with the same inputs.
fn initialization(cfg: &ExperimentConfig, demos: &DemoSet, core_seed: u64) -> Result<Initialization> {
    #[derive(Serialize)]
    struct Key<'a> {
        version: u32,
        env: &'a EnvSpec,
        demo_hash: &'a str,
        models: &'a ganmpc::ganmpc::ModelConfig,
        n_pre: usize,
        core_seed: u64,
    }
    let key = json_hash(&Key {
        version: 1,
        env: &cfg.env,
        demo_hash: &demos.hash,
        models: &cfg.models,
        n_pre: cfg.hyper.n_pre,
        core_seed,
    });
    let path = cfg.output_dir.join("cache").join(format!("init-{}.json", &key[..20]));
    if path.exists() {
        return read_json(&path);
    }
    let init = initialize(&cfg.env, &demos.trajectories, &cfg.models, cfg.hyper.n_pre, core_seed)?;
    let bytes = serde_json::to_vec(&init).expect("initialization serializes");
    write_atomic(&path, &bytes)?;
    Ok(init)
}

/// Trains one run and returns its directory. An existing directory for the
/// same run is replaced. On failure the manifest is marked failed and the
/// checkpoints written so far, plus the in-memory state, are kept.
pub fn run_training(cfg: &ExperimentConfig, algorithm: Algorithm, imitator: PhysicalParams, seed: u64) -> Result<PathBuf> {
    cfg.validate()?;
    imitator.validate()?;
    SeedPlan::check_run_seed(seed)?;
    let demos = load_demos(cfg)?;
    let hyper = run_hyper(cfg, algorithm);
    let spec = cfg.imitator_spec(imitator);
    let env_hash = env_spec_hash(&spec);
    let plan = cfg.seeds();
    let core_seed = plan.core_seed(seed);
    let dir = run_dir(cfg, algorithm, &imitator, seed);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
    }
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write_atomic(&dir.join("config.toml"), cfg.to_toml().as_bytes())?;

    let rollouts = if algorithm.uses_mpc() {
        (hyper.n_mpc * hyper.k_rollouts) as u64
    } else {
        0
    };
    let mut manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        status: RunStatus::Running,
        error: None,
        task: cfg.task(),
        algorithm,
        label: run_label(algorithm, &hyper),
        imitator: imitator.as_array(),
        seed,
        core_seed,
        base_seed: cfg.base_seed,
        config_hash: cfg.hash(),
        env_spec_hash: env_hash.clone(),
        demo_file: demos.path.clone(),
        demo_hash: demos.hash.clone(),
        demo_seeds: SeedRange {
            first: plan.demo(0),
            count: demos.trajectories.len() as u64,
        },
        training_seeds: SeedRange {
            first: plan.training_offset(seed),
            count: rollouts,
        },
        eval_seeds: SeedRange {
            first: plan.eval(0),
            count: cfg.eval_episodes as u64,
        },
        iterations: 0,
        interaction_steps: 0,
        expected_interaction_steps: rollouts * cfg.env.max_steps as u64,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    write_atomic(&dir.join("metrics.csv"), metrics_csv(&[]).as_bytes())?;

    let started = Instant::now();
    let mut state = None;
    let result = (|| -> Result<()> {
        let init = initialization(cfg, &demos, core_seed)?;
        let st = state.insert(TrainState::new(init, &spec, &hyper, &cfg.models, core_seed)?);
        Checkpoint::from_state(st).save(&checkpoint_dir(&dir, 0), &env_hash)?;
        let mut save_error = None;
        let outcome = train(
            st,
            &spec,
            &demos.trajectories,
            &hyper,
            &cfg.mpc,
            RolloutSeeds {
                offset: plan.training_offset(seed),
            },
            &mut |st| {
                if cfg.record_wall_time {
                    if let Some(m) = st.metrics.last_mut() {
                        m.wall_time_s = started.elapsed().as_secs_f64();
                    }
                }
                let saved = write_atomic(&dir.join("metrics.csv"), metrics_csv(&st.metrics).as_bytes())
                    .and_then(|_| Checkpoint::from_state(st).save(&checkpoint_dir(&dir, st.iteration), &env_hash));
                saved.map_err(|e| {
                    let msg = e.to_string();
                    save_error = Some(e);
                    ganmpc::Error::InvalidArgument(msg)
                })
            },
        );
        match (outcome, save_error) {
            (_, Some(e)) => Err(e),
            (r, None) => Ok(r?),
        }
    })();

    if let Some(st) = &state {
        manifest.iterations = st.iteration;
        manifest.interaction_steps = st.interaction_steps;
        write_atomic(&dir.join("state.json"), &serde_json::to_vec(st).expect("train state serializes"))?;
    }
    match result {
        Ok(()) => {
            manifest.status = RunStatus::Completed;
            write_json(&dir.join("manifest.json"), &manifest)?;
            Ok(dir)
        }
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.error = Some(e.to_string());
            write_json(&dir.join("manifest.json"), &manifest)?;
            Err(e)
        }
    }
}

pub fn read_manifest(run: &Path) -> Result<Manifest> {
    let m: Manifest = read_json(&run.join("manifest.json"))?;
    if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
        return Err(LabError::Format(format!("{}: unsupported manifest", run.display())));
    }
    Ok(m)
}

/// The configuration copy of a run directory, checked against its manifest.
pub fn read_run_config(run: &Path, manifest: &Manifest) -> Result<ExperimentConfig> {
    let path = run.join("config.toml");
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    let cfg = ExperimentConfig::from_toml(&text).map_err(|e| crate::error::parse_err(&path, e))?;
    if cfg.hash() != manifest.config_hash {
        return Err(LabError::Mismatch(format!(
            "{}: configuration hash differs from the manifest",
            path.display()
        )));
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_leaves_missing_values_empty() {
        let rows = [IterationMetrics {
            iteration: 1,
            disc_loss: None,
            gen_loss: 0.25,
            disc_accuracy: None,
            mean_env_reward: 0.5,
            buffer_size: 500,
            wall_time_s: 0.0,
        }];
        assert_eq!(metrics_csv(&rows), format!("{METRICS_HEADER}\n1,,0.25,,0.5,500,0\n"));
    }

    #[test]
    fn labels_mark_masks() {
        let mut h = GanMpcHyper::default();
        assert_eq!(run_label(Algorithm::GanMpc, &h), "gan_mpc");
        h.obs_mask = Some(vec![true; 3]);
        assert_eq!(run_label(Algorithm::GanMpc, &h), "gan_mpc");
        h.obs_mask = Some(vec![true, true, false]);
        assert_eq!(run_label(Algorithm::L2MpcS, &h), "l2_mpc_s_mask110");
    }
}
