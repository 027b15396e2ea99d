//! Analytic pendulum swing-up and cartpole balance with scalable physical
//! parameters, shaped rewards in `[0, 1]`, and scripted demonstrators.
//!
//! States use a trigonometric embedding of the pole angle:
//! pendulum `(cos θ, sin θ, θ̇)`, cartpole `(x, cos θ, sin θ, ẋ, θ̇)`,
//! with θ = 0 upright.

mod expert;
pub mod physics;
mod reward;

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::math;
use crate::rng::rng_from_seed;
use physics::{rk4, CartpoleBody, PendulumBody};

pub use expert::{expert_action, expert_threshold, Expert};
pub use reward::{reward_tolerance, TOLERANCE_SCALE};

pub type State = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    PendulumSwingup,
    CartpoleBalance,
}

impl Task {
    pub fn state_dim(self) -> usize {
        match self {
            Task::PendulumSwingup => 3,
            Task::CartpoleBalance => 5,
        }
    }

    pub fn action_dim(self) -> usize {
        1
    }

    /// Index pairs `(cos, sin)` that must stay on the unit circle.
    pub fn trig_pairs(self) -> &'static [(usize, usize)] {
        match self {
            Task::PendulumSwingup => &[(0, 1)],
            Task::CartpoleBalance => &[(1, 2)],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::PendulumSwingup => "pendulum_swingup",
            Task::CartpoleBalance => "cartpole_balance",
        }
    }
}

/// Multipliers on the demonstrator's pole mass, cart mass and dimensions
/// (pole length and cart size).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub pole_mass_scale: f64,
    pub cart_mass_scale: f64,
    pub cart_dim_scale: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self::DEMONSTRATOR
    }
}

impl PhysicalParams {
    pub const DEMONSTRATOR: PhysicalParams = PhysicalParams {
        pole_mass_scale: 1.0,
        cart_mass_scale: 1.0,
        cart_dim_scale: 1.0,
    };

    pub fn new(pole_mass_scale: f64, cart_mass_scale: f64, cart_dim_scale: f64) -> Result<Self> {
        let p = Self {
            pole_mass_scale,
            cart_mass_scale,
            cart_dim_scale,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn pole_mass(scale: f64) -> Result<Self> {
        Self::new(scale, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.pole_mass_scale, self.cart_mass_scale, self.cart_dim_scale];
        if all.iter().all(|s| s.is_finite() && *s > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument("physical scales must be positive".into()))
        }
    }

    pub fn is_demonstrator(&self) -> bool {
        *self == Self::DEMONSTRATOR
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.pole_mass_scale, self.cart_mass_scale, self.cart_dim_scale]
    }
}

/// Imitator grids: pendulum `P1..P4`; cartpole `P1C1D1, P3C1D1, P2C2D1.5, P3C2.5D1.5`.
pub fn imitator_grid(task: Task) -> Vec<PhysicalParams> {
    let raw: &[[f64; 3]] = match task {
        Task::PendulumSwingup => &[[1.0, 1.0, 1.0], [2.0, 1.0, 1.0], [3.0, 1.0, 1.0], [4.0, 1.0, 1.0]],
        Task::CartpoleBalance => &[[1.0, 1.0, 1.0], [3.0, 1.0, 1.0], [2.0, 2.0, 1.5], [3.0, 2.5, 1.5]],
    };
    raw.iter()
        .map(|p| PhysicalParams {
            pole_mass_scale: p[0],
            cart_mass_scale: p[1],
            cart_dim_scale: p[2],
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub task: Task,
    pub physical: PhysicalParams,
    pub control_dt: f64,
    pub substeps: usize,
    pub max_steps: usize,
    pub action_bound: f64,
    /// Pendulum joint damping (N·m·s) before scaling; unused by the cartpole.
    pub damping: f64,
    /// Half-width of the uniform initial-angle perturbation.
    pub init_angle_spread: f64,
    /// Half-width of the uniform initial cart-position perturbation.
    pub init_position_spread: f64,
}

impl EnvSpec {
    /// Demonstrator body with default timing.
    pub fn demonstrator(task: Task) -> Self {
        match task {
            Task::PendulumSwingup => Self {
                task,
                physical: PhysicalParams::DEMONSTRATOR,
                control_dt: 0.02,
                substeps: 2,
                max_steps: 500,
                action_bound: 2.0,
                damping: 0.1,
                init_angle_spread: 0.1,
                init_position_spread: 0.0,
            },
            Task::CartpoleBalance => Self {
                task,
                physical: PhysicalParams::DEMONSTRATOR,
                control_dt: 0.02,
                substeps: 2,
                max_steps: 500,
                action_bound: 10.0,
                damping: 0.0,
                init_angle_spread: 0.05,
                init_position_spread: 0.1,
            },
        }
    }

    pub fn with_physical(mut self, physical: PhysicalParams) -> Self {
        self.physical = physical;
        self
    }

    pub fn state_dim(&self) -> usize {
        self.task.state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.task.action_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.physical.validate()?;
        if !(self.control_dt > 0.0) || self.substeps == 0 || !(self.action_bound > 0.0) {
            return Err(Error::InvalidArgument(
                "control_dt, substeps and action_bound must be positive".into(),
            ));
        }
        if self.damping < 0.0 {
            return Err(Error::InvalidArgument("damping must be non-negative".into()));
        }
        Ok(())
    }

    pub fn pendulum_body(&self) -> PendulumBody {
        PendulumBody {
            mass: 1.0 * self.physical.pole_mass_scale,
            length: 0.5 * self.physical.cart_dim_scale,
            damping: self.damping,
        }
    }

    pub fn cartpole_body(&self) -> CartpoleBody {
        CartpoleBody {
            cart_mass: 1.0 * self.physical.cart_mass_scale,
            pole_mass: 0.1 * self.physical.pole_mass_scale,
            half_length: 0.5 * self.physical.cart_dim_scale,
        }
    }

    /// Reward of arriving in `state`.
    pub fn reward(&self, state: &[f64]) -> f64 {
        match self.task {
            Task::PendulumSwingup => reward::tolerance_unchecked(state[0], 0.95, 1.0, 1.0),
            Task::CartpoleBalance => {
                reward::tolerance_unchecked(state[1], 0.995, 1.0, 0.25)
                    * reward::tolerance_unchecked(state[0], -0.25, 0.25, 1.0)
            }
        }
    }
}

pub(crate) fn encode_pendulum(q: [f64; 2]) -> State {
    vec![math::cos(q[0]), math::sin(q[0]), q[1]]
}

pub(crate) fn decode_pendulum(s: &[f64]) -> [f64; 2] {
    [math::atan2(s[1], s[0]), s[2]]
}

pub(crate) fn encode_cartpole(q: [f64; 4]) -> State {
    vec![q[0], math::cos(q[1]), math::sin(q[1]), q[2], q[3]]
}

pub(crate) fn decode_cartpole(s: &[f64]) -> [f64; 4] {
    [s[0], math::atan2(s[2], s[1]), s[3], s[4]]
}

/// Initial state: the pendulum hangs within ±0.1 rad of down at rest; the
/// cartpole starts within ±0.05 rad of upright and ±0.1 m of center at rest.
pub fn reset(spec: &EnvSpec, seed: u64) -> State {
    let mut rng = rng_from_seed(seed);
    match spec.task {
        Task::PendulumSwingup => {
            let w = spec.init_angle_spread;
            let theta = core::f64::consts::PI + rng.gen_range(-w..=w);
            encode_pendulum([theta, 0.0])
        }
        Task::CartpoleBalance => {
            let w = spec.init_angle_spread;
            let theta = rng.gen_range(-w..=w);
            let p = spec.init_position_spread;
            let x = rng.gen_range(-p..=p);
            encode_cartpole([x, theta, 0.0, 0.0])
        }
    }
}

/// Advances one control interval with RK4 and returns the next state and its reward.
pub fn step(spec: &EnvSpec, state: &[f64], action: &[f64]) -> Result<(State, f64)> {
    check_len("state", spec.state_dim(), state.len())?;
    check_len("action", spec.action_dim(), action.len())?;
    if state.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("environment state"));
    }
    if !action[0].is_finite() {
        return Err(Error::NonFinite("action"));
    }
    let u = action[0].clamp(-spec.action_bound, spec.action_bound);
    let h = spec.control_dt / spec.substeps as f64;
    let next = match spec.task {
        Task::PendulumSwingup => {
            let body = spec.pendulum_body();
            let mut q = decode_pendulum(state);
            for _ in 0..spec.substeps {
                q = rk4(q, h, |q| body.derivative(q, u));
            }
            encode_pendulum(q)
        }
        Task::CartpoleBalance => {
            let body = spec.cartpole_body();
            let mut q = decode_cartpole(state);
            for _ in 0..spec.substeps {
                q = rk4(q, h, |q| body.derivative(q, u));
            }
            encode_cartpole(q)
        }
    };
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("environment state"));
    }
    let r = spec.reward(&next);
    Ok((next, r))
}

/// Anything mapping a state to an action.
pub trait Policy {
    fn act(&mut self, state: &[f64]) -> Result<Vec<f64>>;
}

impl<F: FnMut(&[f64]) -> Result<Vec<f64>>> Policy for F {
    fn act(&mut self, state: &[f64]) -> Result<Vec<f64>> {
        self(state)
    }
}

/// One episode: `T + 1` states, `T` actions and `T` rewards.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn mean_reward(&self) -> f64 {
        if self.rewards.is_empty() {
            0.0
        } else {
            self.total_reward() / self.rewards.len() as f64
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_len("trajectory states", self.actions.len() + 1, self.states.len())?;
        check_len("trajectory rewards", self.actions.len(), self.rewards.len())?;
        Ok(())
    }

    /// `(s, a, s')` triples.
    pub fn transitions(&self) -> impl Iterator<Item = (&[f64], &[f64], &[f64])> + '_ {
        (0..self.actions.len()).map(move |t| {
            (
                self.states[t].as_slice(),
                self.actions[t].as_slice(),
                self.states[t + 1].as_slice(),
            )
        })
    }
}

/// Resets with `seed` and runs `policy` for `max_len` steps.
pub fn rollout(
    spec: &EnvSpec,
    policy: &mut dyn Policy,
    seed: u64,
    max_len: usize,
) -> Result<Trajectory> {
    let mut s = reset(spec, seed);
    let mut traj = Trajectory {
        states: Vec::with_capacity(max_len + 1),
        actions: Vec::with_capacity(max_len),
        rewards: Vec::with_capacity(max_len),
    };
    for t in 0..max_len {
        let a = policy.act(&s)?;
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::PolicyDiverged { step: t });
        }
        let (next, r) = step(spec, &s, &a)?;
        traj.states.push(core::mem::replace(&mut s, next));
        traj.actions.push(a);
        traj.rewards.push(r);
    }
    traj.states.push(s);
    Ok(traj)
}
