use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::disc::{discriminator_loss, generator_objective, Discriminator};
use super::{apply_obs_mask, polyak_update, unmask, Algorithm, GanMpcHyper};
use crate::env::{rollout, EnvSpec, Task, Trajectory};
use crate::error::{check_finite, check_len, Error, Result};
use crate::models::{
    finetune_dynamics, pretrain_dynamics, train_bc, train_next_state, AuxTrainConfig, BcPolicy, DynamicsModel,
    FitReport, NextStatePredictor, ReplayBuffer, Source,
};
use crate::mpc::{
    generator_rollout, rollout_gradient, spsa_gradient, CostConfig, CostModel, GeneratorGrad, GeneratorPath,
    MpcConfig, MpcController, PlanModels,
};
use crate::nn::{Activation, AdamConfig, AdamState, NetworkSpec, OutputActivation};
use crate::rng::{derive_seed, stream_rng, Rng, Stream};

/// Architectures and auxiliary training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Entries in each network's layer sizes (input, hidden..., output).
    pub dynamics_layers: usize,
    pub dynamics_hidden: usize,
    pub bc_layers: usize,
    pub bc_hidden: usize,
    pub predictor_layers: usize,
    pub predictor_hidden: usize,
    pub disc_hidden: usize,
    pub cost: CostConfig,
    /// Behavior cloning and next-state predictor training.
    pub aux: AuxTrainConfig,
    /// Adam step size for dynamics pre-training and fine-tuning.
    pub dynamics_learning_rate: f64,
    pub dynamics_batch_size: usize,
    pub replay_capacity: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dynamics_layers: 4,
            dynamics_hidden: 200,
            bc_layers: 4,
            bc_hidden: 128,
            predictor_layers: 4,
            predictor_hidden: 128,
            disc_hidden: 64,
            cost: CostConfig::default(),
            aux: AuxTrainConfig::default(),
            dynamics_learning_rate: 1e-3,
            dynamics_batch_size: 128,
            replay_capacity: 1_000_000,
        }
    }
}

fn relu_spec(input: usize, layers: usize, hidden: usize, output: usize) -> Result<NetworkSpec> {
    if layers < 2 {
        return Err(Error::InvalidArgument("a network needs at least two layer sizes".into()));
    }
    let mut sizes = vec![input];
    sizes.extend(core::iter::repeat(hidden).take(layers - 2));
    sizes.push(output);
    NetworkSpec::uniform(sizes, Activation::Relu, OutputActivation::Identity)
}

impl ModelConfig {
    pub fn dynamics_spec(&self, task: Task) -> Result<NetworkSpec> {
        let (n, m) = (task.state_dim(), task.action_dim());
        relu_spec(n + m, self.dynamics_layers, self.dynamics_hidden, n)
    }

    pub fn bc_spec(&self, task: Task) -> Result<NetworkSpec> {
        relu_spec(task.state_dim(), self.bc_layers, self.bc_hidden, task.action_dim())
    }

    pub fn predictor_spec(&self, task: Task) -> Result<NetworkSpec> {
        let n = task.state_dim();
        relu_spec(n, self.predictor_layers, self.predictor_hidden, n)
    }

    fn dynamics_adam(&self, n_params: usize) -> AdamState {
        AdamState::new(AdamConfig::default().with_learning_rate(self.dynamics_learning_rate), n_params)
    }
}

/// Models fitted to the demonstrations before any interaction: dynamics
/// pre-training, behavior cloning and the next-state predictor. Depends only
/// on the task, the demonstrations, the model configuration, `n_pre` and the
/// seed, so it can be shared across imitators and algorithms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Initialization {
    pub dynamics: DynamicsModel,
    pub dynamics_adam: AdamState,
    pub bc: BcPolicy,
    pub predictor: NextStatePredictor,
    pub bc_report: FitReport,
    pub predictor_report: FitReport,
}

pub fn initialize(
    spec: &EnvSpec,
    demos: &[Trajectory],
    models: &ModelConfig,
    n_pre: usize,
    seed: u64,
) -> Result<Initialization> {
    let task = spec.task;
    let mut dynamics = DynamicsModel::new(task, models.dynamics_spec(task)?, derive_seed(seed, Stream::Init, 0))?;
    let mut dynamics_adam = models.dynamics_adam(dynamics.net().params().len());
    pretrain_dynamics(
        &mut dynamics,
        demos,
        n_pre,
        models.dynamics_batch_size,
        &mut dynamics_adam,
        derive_seed(seed, Stream::Dynamics, 0),
    )?;
    let mut bc = BcPolicy::new(models.bc_spec(task)?, spec.action_bound, derive_seed(seed, Stream::Init, 1))?;
    let bc_report = train_bc(&mut bc, demos, &models.aux, derive_seed(seed, Stream::BehaviorCloning, 0))?;
    let mut predictor =
        NextStatePredictor::new(task, models.predictor_spec(task)?, derive_seed(seed, Stream::Init, 2))?;
    let predictor_report = train_next_state(&mut predictor, demos, &models.aux, derive_seed(seed, Stream::NextState, 0))?;
    Ok(Initialization {
        dynamics,
        dynamics_adam,
        bc,
        predictor,
        bc_report,
        predictor_report,
    })
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    /// 1-based outer iteration.
    pub iteration: usize,
    pub disc_loss: Option<f64>,
    pub gen_loss: f64,
    pub disc_accuracy: Option<f64>,
    pub mean_env_reward: f64,
    pub buffer_size: usize,
    pub wall_time_s: f64,
}

/// Everything needed to resume or deploy a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainState {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub iteration: usize,
    pub dynamics: DynamicsModel,
    pub bc: BcPolicy,
    pub predictor: NextStatePredictor,
    /// Parameters receiving gradient steps.
    pub cost_live: CostModel,
    /// Parameters used for every environment rollout.
    pub cost_deployed: CostModel,
    pub discriminator: Option<Discriminator>,
    pub dynamics_adam: AdamState,
    pub gen_adam: AdamState,
    pub disc_adam: Option<AdamState>,
    pub buffer: ReplayBuffer,
    pub metrics: Vec<IterationMetrics>,
    pub interaction_steps: u64,
}

impl TrainState {
    pub fn new(
        init: Initialization,
        spec: &EnvSpec,
        hyper: &GanMpcHyper,
        models: &ModelConfig,
        seed: u64,
    ) -> Result<Self> {
        hyper.validate()?;
        let n = spec.state_dim();
        let mask = hyper.mask(n)?;
        let cost = CostModel::new(&models.cost, n, derive_seed(seed, Stream::Init, 3))?;
        let adam = |lr: f64, k: usize| {
            AdamState::new(
                AdamConfig {
                    learning_rate: lr,
                    clip_norm: hyper.clip_norm,
                    ..AdamConfig::default()
                },
                k,
            )
        };
        let (discriminator, disc_adam) = if hyper.algorithm == Algorithm::GanMpc {
            let visible = mask.iter().filter(|&&m| m).count();
            let d = Discriminator::new(visible, models.disc_hidden, derive_seed(seed, Stream::Init, 4))?;
            let a = adam(hyper.learning_rate, d.param_count());
            (Some(d), Some(a))
        } else {
            (None, None)
        };
        Ok(Self {
            algorithm: hyper.algorithm,
            seed,
            iteration: 0,
            dynamics: init.dynamics,
            bc: init.bc,
            predictor: init.predictor,
            gen_adam: adam(hyper.learning_rate, cost.gen_param_count()),
            cost_deployed: cost.clone(),
            cost_live: cost,
            discriminator,
            dynamics_adam: init.dynamics_adam,
            disc_adam,
            buffer: ReplayBuffer::new(models.replay_capacity)?,
            metrics: Vec::new(),
            interaction_steps: 0,
        })
    }

    /// Models behind the deployed controller.
    pub fn deployed(&self) -> PlanModels<'_> {
        PlanModels {
            dynamics: &self.dynamics,
            cost: &self.cost_deployed,
            bc: &self.bc,
            predictor: &self.predictor,
        }
    }

    fn live(&self) -> PlanModels<'_> {
        PlanModels {
            cost: &self.cost_live,
            ..self.deployed()
        }
    }
}

/// Environment seeds for training rollouts: rollout `k` of iteration `i`
/// resets with `offset + i · K + k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RolloutSeeds {
    pub offset: u64,
}

/// A length-`len` slice of one demonstration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DemoWindow {
    pub trajectory: usize,
    pub start: usize,
    pub len: usize,
}

impl DemoWindow {
    pub fn states<'a>(&self, demos: &'a [Trajectory]) -> &'a [Vec<f64>] {
        &demos[self.trajectory].states[self.start..self.start + self.len]
    }

    pub fn actions<'a>(&self, demos: &'a [Trajectory]) -> &'a [Vec<f64>] {
        &demos[self.trajectory].actions[self.start..self.start + self.len - 1]
    }
}

/// Draws `count` windows of `len` consecutive states, choosing the
/// demonstration and the start offset uniformly (with replacement).
pub fn sample_windows(demos: &[Trajectory], count: usize, len: usize, rng: &mut Rng) -> Result<Vec<DemoWindow>> {
    let eligible: Vec<usize> = (0..demos.len()).filter(|&i| demos[i].states.len() >= len).collect();
    if eligible.is_empty() || len == 0 {
        return Err(Error::EmptyData("demonstrations long enough for a window"));
    }
    Ok((0..count)
        .map(|_| {
            let trajectory = eligible[rng.gen_range(0..eligible.len())];
            let start = rng.gen_range(0..=demos[trajectory].states.len() - len);
            DemoWindow { trajectory, start, len }
        })
        .collect())
}

/// Mean squared distance between a generator path and a demo window,
/// normalized by the window length. States are compared on the visible
/// dimensions; actions are added when `with_actions` is set.
pub fn l2_objective(
    path: &GeneratorPath<f64>,
    demo_states: &[Vec<f64>],
    demo_actions: &[Vec<f64>],
    mask: &[bool],
    with_actions: bool,
) -> Result<(f64, GeneratorPath<f64>)> {
    check_len("demo window", path.states.len(), demo_states.len())?;
    let p = path.states.len() as f64;
    let mut loss = 0.0;
    let mut adj = GeneratorPath {
        states: Vec::with_capacity(path.states.len()),
        actions: Vec::new(),
    };
    for (s, d) in path.states.iter().zip(demo_states) {
        check_len("demo state", s.len(), d.len())?;
        let mut g = vec![0.0; s.len()];
        for i in 0..s.len() {
            if with_actions || mask[i] {
                let e = s[i] - d[i];
                loss += e * e / p;
                g[i] = 2.0 * e / p;
            }
        }
        adj.states.push(g);
    }
    if with_actions {
        check_len("demo actions", path.actions.len(), demo_actions.len())?;
        for (a, d) in path.actions.iter().zip(demo_actions) {
            let g = a
                .iter()
                .zip(d)
                .map(|(x, y)| {
                    let e = x - y;
                    loss += e * e / p;
                    2.0 * e / p
                })
                .collect();
            adj.actions.push(g);
        }
    }
    Ok((loss, adj))
}

fn is_skippable(e: &Error) -> bool {
    matches!(e, Error::NonFinite(_))
}

struct GradientBatch {
    loss: f64,
    grad: Vec<f64>,
}

/// Averages per-window losses and gradients; non-finite samples are skipped.
fn batch_gradient(
    state: &TrainState,
    mpc: &MpcConfig,
    hyper: &GanMpcHyper,
    windows: &[DemoWindow],
    demos: &[Trajectory],
    objective: &dyn Fn(&GeneratorPath<f64>, &DemoWindow, f64) -> Result<(f64, GeneratorPath<f64>)>,
    rng: &mut Rng,
) -> Result<GradientBatch> {
    let models = state.live();
    let k = state.cost_live.gen_param_count();
    let weight = 1.0 / windows.len() as f64;
    let mut out = GradientBatch {
        loss: 0.0,
        grad: vec![0.0; k],
    };
    let mut used = 0usize;
    match mpc.generator_grad {
        GeneratorGrad::Unrolled => {
            for w in windows {
                let s0 = &w.states(demos)[0];
                match rollout_gradient(models, mpc, s0, hyper.rollout_len, |p| objective(p, w, weight)) {
                    Ok(r) => {
                        out.loss += r.loss;
                        for (g, v) in out.grad.iter_mut().zip(&r.grad) {
                            *g += v;
                        }
                        used += 1;
                    }
                    Err(e) if is_skippable(&e) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        GeneratorGrad::Spsa => {
            let base = state.cost_live.gen_params();
            let eval = |params: &[f64]| -> Result<(f64, usize)> {
                let mut cost = state.cost_live.clone();
                cost.set_gen_params(params)?;
                let m = PlanModels { cost: &cost, ..models };
                let (mut total, mut count) = (0.0, 0);
                for w in windows {
                    match generator_rollout(m, mpc, &w.states(demos)[0], hyper.rollout_len) {
                        Ok(path) => {
                            total += objective(&path, w, weight)?.0;
                            count += 1;
                        }
                        Err(e) if is_skippable(&e) => {}
                        Err(e) => return Err(e),
                    }
                }
                Ok((total, count))
            };
            let (loss, count) = eval(&base)?;
            out.loss = loss;
            used = count;
            out.grad = spsa_gradient(&base, mpc.spsa_perturbation, mpc.spsa_samples, rng, |p| Ok(eval(p)?.0))?;
        }
    }
    if used == 0 {
        return Err(Error::BatchExhausted);
    }
    let rescale = windows.len() as f64 / used as f64;
    out.loss *= rescale;
    out.grad.iter_mut().for_each(|g| *g *= rescale);
    Ok(out)
}

struct StepReport {
    disc_loss: Option<f64>,
    disc_accuracy: Option<f64>,
    gen_loss: f64,
}

fn gan_step(
    state: &mut TrainState,
    demos: &[Trajectory],
    hyper: &GanMpcHyper,
    mpc: &MpcConfig,
    windows: &[DemoWindow],
    mask: &[bool],
    rng: &mut Rng,
) -> Result<StepReport> {
    let real: Vec<Vec<Vec<f64>>> = windows
        .iter()
        .map(|w| apply_obs_mask(w.states(demos), mask))
        .collect::<Result<_>>()?;
    let mut report = StepReport {
        disc_loss: None,
        disc_accuracy: None,
        gen_loss: 0.0,
    };
    for _ in 0..hyper.disc_steps {
        let mut fake = Vec::with_capacity(windows.len());
        for w in windows {
            match generator_rollout(state.live(), mpc, &w.states(demos)[0], hyper.rollout_len) {
                Ok(path) => fake.push(apply_obs_mask(&path.states, mask)?),
                Err(e) if is_skippable(&e) => {}
                Err(e) => return Err(e),
            }
        }
        if fake.is_empty() {
            return Err(Error::BatchExhausted);
        }
        let disc = state.discriminator.as_mut().expect("GAN state has a discriminator");
        let out = discriminator_loss(disc, &real, &fake, hyper.r1_lambda)?;
        check_finite("discriminator gradient", &out.grad)?;
        if report.disc_loss.is_none() {
            report.disc_loss = Some(out.loss);
            report.disc_accuracy = Some(out.accuracy);
        }
        state
            .disc_adam
            .as_mut()
            .expect("GAN state has a discriminator optimizer")
            .update(&mut disc.params.values, &out.grad)?;
    }
    for step in 0..hyper.gen_steps {
        let disc = state.discriminator.clone().expect("GAN state has a discriminator");
        let objective = |path: &GeneratorPath<f64>, _: &DemoWindow, weight: f64| {
            let seq = apply_obs_mask(&path.states, mask)?;
            let (loss, dx) = generator_objective(&disc, &seq, weight)?;
            Ok((
                loss,
                GeneratorPath {
                    states: unmask(&dx, mask),
                    actions: Vec::new(),
                },
            ))
        };
        let batch = batch_gradient(state, mpc, hyper, windows, demos, &objective, rng)?;
        check_finite("generator gradient", &batch.grad)?;
        if step == 0 {
            report.gen_loss = batch.loss;
        }
        let mut live = state.cost_live.gen_params();
        state.gen_adam.update(&mut live, &batch.grad)?;
        state.cost_live.set_gen_params(&live)?;
        let mut deployed = state.cost_deployed.gen_params();
        polyak_update(&mut deployed, &live, hyper.polyak_rho)?;
        state.cost_deployed.set_gen_params(&deployed)?;
    }
    Ok(report)
}

fn l2_step(
    state: &mut TrainState,
    demos: &[Trajectory],
    hyper: &GanMpcHyper,
    mpc: &MpcConfig,
    windows: &[DemoWindow],
    mask: &[bool],
    rng: &mut Rng,
) -> Result<StepReport> {
    let with_actions = state.algorithm == Algorithm::L2MpcSa;
    let objective = |path: &GeneratorPath<f64>, w: &DemoWindow, weight: f64| {
        let (loss, mut adj) = l2_objective(path, w.states(demos), w.actions(demos), mask, with_actions)?;
        for v in adj.states.iter_mut().chain(adj.actions.iter_mut()).flatten() {
            *v *= weight;
        }
        Ok((loss * weight, adj))
    };
    let mut gen_loss = 0.0;
    for step in 0..hyper.gen_steps {
        let batch = batch_gradient(state, mpc, hyper, windows, demos, &objective, rng)?;
        if step == 0 {
            gen_loss = batch.loss;
        }
        let mut live = state.cost_live.gen_params();
        state.gen_adam.update(&mut live, &batch.grad)?;
        state.cost_live.set_gen_params(&live)?;
        state.cost_deployed = state.cost_live.clone();
    }
    Ok(StepReport {
        disc_loss: None,
        disc_accuracy: None,
        gen_loss,
    })
}

/// Runs outer iterations until `hyper.n_mpc`, calling `on_iteration` after
/// each one (for checkpoints and logging). Behavior cloning has no outer
/// loop and returns immediately.
pub fn train(
    state: &mut TrainState,
    spec: &EnvSpec,
    demos: &[Trajectory],
    hyper: &GanMpcHyper,
    mpc: &MpcConfig,
    seeds: RolloutSeeds,
    on_iteration: &mut dyn FnMut(&mut TrainState) -> Result<()>,
) -> Result<()> {
    hyper.validate()?;
    mpc.validate()?;
    if state.algorithm != hyper.algorithm {
        return Err(Error::InvalidArgument("train state and hyperparameters disagree on the algorithm".into()));
    }
    if !state.algorithm.uses_mpc() {
        return Ok(());
    }
    let mask = hyper.mask(spec.state_dim())?;
    let half = hyper.batch_size / 2;
    while state.iteration < hyper.n_mpc {
        let it = state.iteration;
        let mut reward = 0.0;
        for k in 0..hyper.k_rollouts {
            let env_seed = seeds.offset + (it * hyper.k_rollouts + k) as u64;
            let models = state.deployed();
            let mut ctl = MpcController { models, config: mpc };
            let traj = rollout(spec, &mut ctl, env_seed, spec.max_steps)?;
            state.interaction_steps += traj.len() as u64;
            reward += traj.mean_reward();
            state.buffer.push_trajectory(&traj, Source::Imitator)?;
        }
        finetune_dynamics(
            &mut state.dynamics,
            &state.buffer,
            hyper.n_dyn,
            hyper.batch_size,
            &mut state.dynamics_adam,
            derive_seed(state.seed, Stream::Dynamics, 1 + it as u64),
        )?;
        let mut rng = stream_rng(state.seed, Stream::Batches, it as u64);
        let windows = sample_windows(demos, half, hyper.rollout_len, &mut rng)?;
        let mut spsa_rng = stream_rng(state.seed, Stream::Spsa, it as u64);
        let report = match state.algorithm {
            Algorithm::GanMpc => gan_step(state, demos, hyper, mpc, &windows, &mask, &mut spsa_rng)?,
            Algorithm::L2MpcSa | Algorithm::L2MpcS => l2_step(state, demos, hyper, mpc, &windows, &mask, &mut spsa_rng)?,
            Algorithm::Bc => unreachable!(),
        };
        state.iteration += 1;
        state.metrics.push(IterationMetrics {
            iteration: state.iteration,
            disc_loss: report.disc_loss,
            gen_loss: report.gen_loss,
            disc_accuracy: report.disc_accuracy,
            mean_env_reward: reward / hyper.k_rollouts as f64,
            buffer_size: state.buffer.len(),
            wall_time_s: 0.0,
        });
        on_iteration(state)?;
    }
    Ok(())
}
