//! Learned auxiliary models: imitator dynamics `T̃`, the behavior-cloning
//! initial-guess policy `π^BC`, and the demonstrator next-state predictor `𝒩`.

mod bc;
mod buffer;
mod normalizer;
mod state;
mod train;

use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::env::{Task, Trajectory};
use crate::error::{check_len, Error, Result};
use crate::nn::{AdamConfig, AdamState, NetworkSpec};

pub use bc::{BcPass, BcPolicy};
pub use buffer::{ReplayBuffer, Source, Transition};
pub use normalizer::Normalizer;
pub use state::{renormalize, renormalize_jacobian, renormalize_jvp, StateModel, StatePass};
pub use train::{fit, mean_loss, Dataset, FitConfig, FitReport, Regressor};

/// Learned imitator dynamics `s' = T̃(s, a)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DynamicsModel(StateModel);

/// Learned demonstrator flow `s' = 𝒩(s)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NextStatePredictor(StateModel);

macro_rules! deref_state_model {
    ($t:ty) => {
        impl Deref for $t {
            type Target = StateModel;
            fn deref(&self) -> &StateModel {
                &self.0
            }
        }
        impl DerefMut for $t {
            fn deref_mut(&mut self) -> &mut StateModel {
                &mut self.0
            }
        }
    };
}

deref_state_model!(DynamicsModel);
deref_state_model!(NextStatePredictor);

fn check_spec(spec: &NetworkSpec, input: usize, output: usize) -> Result<()> {
    check_len("network input width", input, spec.input_dim())?;
    check_len("network output width", output, spec.output_dim())
}

impl DynamicsModel {
    pub fn new(task: Task, spec: NetworkSpec, seed: u64) -> Result<Self> {
        let (n, m) = (task.state_dim(), task.action_dim());
        check_spec(&spec, n + m, n)?;
        Ok(Self(StateModel::new(spec, n, m, task.trig_pairs(), true, seed)?))
    }

    pub fn from_state_model(m: StateModel) -> Self {
        Self(m)
    }
}

impl NextStatePredictor {
    pub fn new(task: Task, spec: NetworkSpec, seed: u64) -> Result<Self> {
        let n = task.state_dim();
        check_spec(&spec, n, n)?;
        Ok(Self(StateModel::new(spec, n, 0, task.trig_pairs(), true, seed)?))
    }

    pub fn from_state_model(m: StateModel) -> Self {
        Self(m)
    }

    pub fn step(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.0.predict(s, &[])
    }
}

/// `𝒩^(H)(s0)`: `horizon` applications of the predictor.
pub fn predict_target(predictor: &NextStatePredictor, s0: &[f64], horizon: usize) -> Result<Vec<f64>> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("target horizon must be at least 1".into()));
    }
    check_len("state", predictor.state_dim(), s0.len())?;
    let mut s = s0.to_vec();
    for _ in 0..horizon {
        s = predictor.predict_unchecked(&s, &[]);
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("predicted target"));
        }
    }
    Ok(s)
}

/// Settings for the auxiliary-model trainers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuxTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Early-stopping patience in epochs on held-out trajectories.
    pub patience: usize,
    pub holdout_fraction: f64,
}

impl Default for AuxTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 128,
            learning_rate: 1e-3,
            patience: 20,
            holdout_fraction: 0.1,
        }
    }
}

fn require_demos(demos: &[Trajectory]) -> Result<()> {
    if demos.iter().all(|t| t.is_empty()) {
        return Err(Error::EmptyData("demonstrations"));
    }
    demos.iter().try_for_each(|t| t.validate())
}

fn transition_dataset<'a>(trajs: impl IntoIterator<Item = &'a Trajectory>, n: usize, m: usize) -> Dataset {
    let mut d = Dataset::new(n + m, n);
    let mut x = Vec::with_capacity(n + m);
    for t in trajs {
        for (s, a, s2) in t.transitions() {
            x.clear();
            x.extend_from_slice(s);
            x.extend_from_slice(&a[..m]);
            d.push(&x, s2);
        }
    }
    d
}

/// Splits trajectories into training and held-out sets; the held-out
/// trajectories are the last `ceil(fraction · len)` (at least one is kept
/// for training).
fn split(demos: &[Trajectory], fraction: f64) -> (&[Trajectory], &[Trajectory]) {
    let k = (libm::ceil(demos.len() as f64 * fraction) as usize).min(demos.len().saturating_sub(1));
    demos.split_at(demos.len() - k)
}

/// Fits the input normalizer to the demonstrations, then runs `epochs`
/// passes of one-step MSE regression on every demo transition.
pub fn pretrain_dynamics(
    model: &mut DynamicsModel,
    demos: &[Trajectory],
    epochs: usize,
    batch_size: usize,
    adam: &mut AdamState,
    seed: u64,
) -> Result<FitReport> {
    require_demos(demos)?;
    let data = transition_dataset(demos, model.state_dim(), model.action_dim());
    model.fit_normalizers(&data.inputs, &data.targets)?;
    let cfg = FitConfig {
        epochs,
        batch_size,
        patience: None,
    };
    fit(&mut model.0, &data, None, &cfg, adam, seed)
}

/// One-step MSE regression restricted to imitator transitions in `buffer`.
pub fn finetune_dynamics(
    model: &mut DynamicsModel,
    buffer: &ReplayBuffer,
    epochs: usize,
    batch_size: usize,
    adam: &mut AdamState,
    seed: u64,
) -> Result<FitReport> {
    let (n, m) = (model.state_dim(), model.action_dim());
    let mut data = Dataset::new(n + m, n);
    let mut x = Vec::with_capacity(n + m);
    for t in buffer.from_source(Source::Imitator) {
        x.clear();
        x.extend_from_slice(&t.state);
        x.extend_from_slice(&t.action);
        data.push(&x, &t.next_state);
    }
    if data.is_empty() {
        return Err(Error::EmptyData("imitator transitions"));
    }
    let cfg = FitConfig {
        epochs,
        batch_size,
        patience: None,
    };
    fit(&mut model.0, &data, None, &cfg, adam, seed)
}

/// Regresses demonstrator actions on demonstrator states with early stopping.
pub fn train_bc(policy: &mut BcPolicy, demos: &[Trajectory], cfg: &AuxTrainConfig, seed: u64) -> Result<FitReport> {
    require_demos(demos)?;
    let (n, m) = (policy.state_dim(), policy.net().output_dim());
    let collect = |trajs: &[Trajectory]| {
        let mut d = Dataset::new(n, m);
        for t in trajs {
            for (s, a, _) in t.transitions() {
                d.push(s, a);
            }
        }
        d
    };
    let (train, hold) = split(demos, cfg.holdout_fraction);
    let train = collect(train);
    let hold = collect(hold);
    policy.set_input_normalizer(Normalizer::fit(train.inputs.chunks(n), n, 0.05)?)?;
    let mut adam = AdamState::new(
        AdamConfig::default().with_learning_rate(cfg.learning_rate),
        policy.net().params().len(),
    );
    fit(policy, &train, Some(&hold), &fit_config(cfg), &mut adam, seed)
}

/// Regresses consecutive demonstrator states `s → s'` with early stopping.
pub fn train_next_state(
    predictor: &mut NextStatePredictor,
    demos: &[Trajectory],
    cfg: &AuxTrainConfig,
    seed: u64,
) -> Result<FitReport> {
    if demos.iter().all(|t| t.states.len() < 2) {
        return Err(Error::EmptyData("state pairs"));
    }
    let n = predictor.state_dim();
    let (train, hold) = split(demos, cfg.holdout_fraction);
    let pairs = |trajs: &[Trajectory]| {
        let mut d = Dataset::new(n, n);
        for t in trajs {
            for w in t.states.windows(2) {
                d.push(&w[0], &w[1]);
            }
        }
        d
    };
    let train = pairs(train);
    let hold = pairs(hold);
    predictor.fit_normalizers(&train.inputs, &train.targets)?;
    let mut adam = AdamState::new(
        AdamConfig::default().with_learning_rate(cfg.learning_rate),
        predictor.net().params().len(),
    );
    fit(&mut predictor.0, &train, Some(&hold), &fit_config(cfg), &mut adam, seed)
}

fn fit_config(cfg: &AuxTrainConfig) -> FitConfig {
    FitConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        patience: Some(cfg.patience),
    }
}

/// Mean one-step squared error of `model` on the transitions of `trajs`.
pub fn dynamics_mse(model: &DynamicsModel, trajs: &[Trajectory]) -> f64 {
    mean_loss(&model.0, &transition_dataset(trajs, model.state_dim(), model.action_dim()))
}
