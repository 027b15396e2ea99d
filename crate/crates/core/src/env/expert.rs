//! Scripted demonstrators: discrete-time LQR for the cartpole, energy
//! shaping plus LQR catch for the pendulum.

use alloc::vec;
use alloc::vec::Vec;

use super::physics::GRAVITY;
use super::{decode_cartpole, decode_pendulum, EnvSpec, Task};
use crate::error::{Error, Result};
use crate::linalg::{matmul, matvec};
use crate::math;

/// Angle (rad from upright) inside which the pendulum expert hands over to LQR.
pub const PENDULUM_CATCH_ANGLE: f64 = 0.3;
const ENERGY_GAIN: f64 = 5.0;

/// Lowest mean per-step reward a demonstrator episode may score before its
/// demonstrations are considered unusable. The pendulum's swing-up is
/// torque-limited and takes about 120 of the 500 steps.
pub fn expert_threshold(task: Task) -> f64 {
    match task {
        Task::PendulumSwingup => 0.77,
        Task::CartpoleBalance => 0.98,
    }
}

/// Demonstrator controller with its gains computed once.
#[derive(Debug, Clone)]
pub struct Expert {
    spec: EnvSpec,
    gain: Vec<f64>,
}

impl Expert {
    pub fn new(spec: &EnvSpec) -> Result<Self> {
        spec.validate()?;
        if !spec.physical.is_demonstrator() {
            return Err(Error::ExpertUnavailable);
        }
        let (a, b, q, r) = match spec.task {
            Task::PendulumSwingup => {
                let body = spec.pendulum_body();
                let inertia = body.inertia();
                let a = vec![0.0, 1.0, GRAVITY / body.length, -body.damping / inertia];
                let b = vec![0.0, 1.0 / inertia];
                (a, b, vec![10.0, 0.0, 0.0, 1.0], 0.1)
            }
            Task::CartpoleBalance => {
                let body = spec.cartpole_body();
                let (m, l) = (body.pole_mass, body.half_length);
                let total = body.cart_mass + m;
                let eff = l * (4.0 / 3.0 - m / total);
                let th_th = GRAVITY / eff;
                let th_u = -1.0 / (total * eff);
                let x_th = -m * l * th_th / total;
                let x_u = 1.0 / total - m * l * th_u / total;
                #[rustfmt::skip]
                let a = vec![
                    0.0, 0.0, 1.0, 0.0,
                    0.0, 0.0, 0.0, 1.0,
                    0.0, x_th, 0.0, 0.0,
                    0.0, th_th, 0.0, 0.0,
                ];
                let b = vec![0.0, 0.0, x_u, th_u];
                let mut q = vec![0.0; 16];
                for (i, w) in [1.0, 10.0, 0.1, 0.1].iter().enumerate() {
                    q[i * 4 + i] = *w;
                }
                (a, b, q, 0.01)
            }
        };
        let n = b.len();
        let (ad, bd) = discretize(&a, &b, n, spec.control_dt);
        let gain = discrete_lqr_gain(&ad, &bd, &q, r, n)?;
        Ok(Self {
            spec: spec.clone(),
            gain,
        })
    }

    /// Feedback gain `K` with `u = −K q` in generalized coordinates.
    pub fn gain(&self) -> &[f64] {
        &self.gain
    }

    pub fn act(&self, state: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_len("state", self.spec.state_dim(), state.len())?;
        let bound = self.spec.action_bound;
        let u = match self.spec.task {
            Task::CartpoleBalance => -dot(&self.gain, &decode_cartpole(state)),
            Task::PendulumSwingup => {
                let q = decode_pendulum(state);
                if math::abs(q[0]) <= PENDULUM_CATCH_ANGLE {
                    -dot(&self.gain, &q)
                } else {
                    let body = self.spec.pendulum_body();
                    let deficit = body.mass * GRAVITY * body.length - body.energy(&q);
                    if q[1] == 0.0 {
                        bound
                    } else {
                        ENERGY_GAIN * q[1] * deficit
                    }
                }
            }
        };
        Ok(vec![u.clamp(-bound, bound)])
    }
}

/// Demonstrator action for one state; builds the gains on every call.
pub fn expert_action(spec: &EnvSpec, state: &[f64]) -> Result<Vec<f64>> {
    Expert::new(spec)?.act(state)
}

impl super::Policy for Expert {
    fn act(&mut self, state: &[f64]) -> Result<Vec<f64>> {
        Expert::act(self, state)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Zero-order-hold discretization via a truncated series of the augmented
/// matrix exponential.
fn discretize(a: &[f64], b: &[f64], n: usize, dt: f64) -> (Vec<f64>, Vec<f64>) {
    let k = n + 1;
    let mut m = vec![0.0; k * k];
    for i in 0..n {
        for j in 0..n {
            m[i * k + j] = a[i * n + j] * dt;
        }
        m[i * k + n] = b[i] * dt;
    }
    let mut sum = vec![0.0; k * k];
    let mut term = vec![0.0; k * k];
    for i in 0..k {
        sum[i * k + i] = 1.0;
        term[i * k + i] = 1.0;
    }
    for p in 1..30 {
        term = matmul(&term, &m, k, k, k);
        let inv = 1.0 / p as f64;
        for (t, s) in term.iter_mut().zip(sum.iter_mut()) {
            *t *= inv;
            *s += *t;
        }
    }
    let mut ad = vec![0.0; n * n];
    let mut bd = vec![0.0; n];
    for i in 0..n {
        ad[i * n..(i + 1) * n].copy_from_slice(&sum[i * k..i * k + n]);
        bd[i] = sum[i * k + n];
    }
    (ad, bd)
}

/// Single-input infinite-horizon LQR gain by Riccati iteration in the
/// closed-loop form `P ← Q + r KᵀK + (A − BK)ᵀ P (A − BK)`, which stays
/// symmetric positive semidefinite under rounding.
pub(crate) fn discrete_lqr_gain(a: &[f64], b: &[f64], q: &[f64], r: f64, n: usize) -> Result<Vec<f64>> {
    let gain = |p: &[f64]| -> Vec<f64> {
        let pb = matvec(p, n, n, b);
        let denom = r + dot(b, &pb);
        (0..n).map(|j| (0..n).map(|i| pb[i] * a[i * n + j]).sum::<f64>() / denom).collect()
    };
    let mut p = q.to_vec();
    for _ in 0..100_000 {
        let k = gain(&p);
        let mut cl = a.to_vec();
        for i in 0..n {
            for j in 0..n {
                cl[i * n + j] -= b[i] * k[j];
            }
        }
        let pc = matmul(&p, &cl, n, n, n);
        let mut next = q.to_vec();
        for i in 0..n {
            for j in 0..n {
                let mut acc = r * k[i] * k[j];
                for l in 0..n {
                    acc += cl[l * n + i] * pc[l * n + j];
                }
                next[i * n + j] += acc;
            }
        }
        let delta = next.iter().zip(&p).map(|(x, y)| math::abs(x - y)).fold(0.0, f64::max);
        let scale = next.iter().map(|x| math::abs(*x)).fold(1.0, f64::max);
        p = next;
        if !delta.is_finite() {
            break;
        }
        if delta <= 1e-12 * scale {
            return Ok(gain(&p));
        }
    }
    Err(Error::NonFinite("Riccati iteration did not converge"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{reset, rollout, step, PhysicalParams};

    #[test]
    fn cartpole_upright_gives_zero() {
        let spec = EnvSpec::demonstrator(Task::CartpoleBalance);
        assert_eq!(expert_action(&spec, &[0.0, 1.0, 0.0, 0.0, 0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn non_demonstrator_rejected() {
        let spec = EnvSpec::demonstrator(Task::PendulumSwingup)
            .with_physical(PhysicalParams::pole_mass(2.0).unwrap());
        assert_eq!(Expert::new(&spec).unwrap_err(), Error::ExpertUnavailable);
    }

    #[test]
    fn gain_is_a_riccati_fixed_point() {
        // Scalar plant x' = 2x + u, Q = R = 1: P² − 4P − 1 = 0.
        let k = discrete_lqr_gain(&[2.0], &[1.0], &[1.0], 1.0, 1).unwrap();
        let p = 2.0 + math::sqrt(5.0);
        assert!((k[0] - 2.0 * p / (1.0 + p)).abs() < 1e-9, "{k:?}");
    }

    #[test]
    fn discretization_of_double_integrator() {
        let (ad, bd) = discretize(&[0.0, 1.0, 0.0, 0.0], &[0.0, 1.0], 2, 0.1);
        assert!((ad[1] - 0.1).abs() < 1e-15 && (ad[0] - 1.0).abs() < 1e-15);
        assert!((bd[0] - 0.005).abs() < 1e-15 && (bd[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn expert_episodes_score_high() {
        for task in [Task::PendulumSwingup, Task::CartpoleBalance] {
            let threshold = expert_threshold(task);
            let spec = EnvSpec::demonstrator(task);
            let mut expert = Expert::new(&spec).unwrap();
            for seed in 0..5 {
                let traj = rollout(&spec, &mut expert, seed, spec.max_steps).unwrap();
                assert!(traj.mean_reward() >= threshold, "{task:?} seed {seed}: {}", traj.mean_reward());
            }
        }
    }

    #[test]
    fn cartpole_expert_stabilizes() {
        let spec = EnvSpec::demonstrator(Task::CartpoleBalance);
        let expert = Expert::new(&spec).unwrap();
        let mut s = reset(&spec, 11);
        for _ in 0..500 {
            let a = expert.act(&s).unwrap();
            s = step(&spec, &s, &a).unwrap().0;
        }
        assert!(s[0].abs() < 1e-3 && s[2].abs() < 1e-3);
    }
}
