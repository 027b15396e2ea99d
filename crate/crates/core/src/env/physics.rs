//! Equations of motion in generalized coordinates and the RK4 integrator.
//!
//! Angles are measured from upright. Pendulum coordinates are `(θ, θ̇)`;
//! cartpole coordinates are `(x, θ, ẋ, θ̇)`.

use crate::math;

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumBody {
    pub mass: f64,
    pub length: f64,
    pub damping: f64,
}

impl PendulumBody {
    pub fn inertia(&self) -> f64 {
        self.mass * self.length * self.length
    }

    /// `m l² θ̈ = m g l sin θ − b θ̇ + u`
    pub fn derivative(&self, q: &[f64; 2], u: f64) -> [f64; 2] {
        let grav = GRAVITY / self.length * math::sin(q[0]);
        let rest = (u - self.damping * q[1]) / self.inertia();
        [q[1], grav + rest]
    }

    pub fn energy(&self, q: &[f64; 2]) -> f64 {
        0.5 * self.inertia() * q[1] * q[1] + self.mass * GRAVITY * self.length * math::cos(q[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartpoleBody {
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Distance from pivot to the pole's center of mass.
    pub half_length: f64,
}

impl CartpoleBody {
    pub fn derivative(&self, q: &[f64; 4], u: f64) -> [f64; 4] {
        let (m, l) = (self.pole_mass, self.half_length);
        let total = self.cart_mass + m;
        let (s, c) = (math::sin(q[1]), math::cos(q[1]));
        let temp = (u + m * l * q[3] * q[3] * s) / total;
        let theta_acc = (GRAVITY * s - c * temp) / (l * (4.0 / 3.0 - m * c * c / total));
        let x_acc = temp - m * l * theta_acc * c / total;
        [q[2], q[3], x_acc, theta_acc]
    }
}

pub fn rk4<const N: usize>(q: [f64; N], h: f64, f: impl Fn(&[f64; N]) -> [f64; N]) -> [f64; N] {
    let k1 = f(&q);
    let k2 = f(&axpy(&q, 0.5 * h, &k1));
    let k3 = f(&axpy(&q, 0.5 * h, &k2));
    let k4 = f(&axpy(&q, h, &k3));
    let mut out = q;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn axpy<const N: usize>(q: &[f64; N], a: f64, d: &[f64; N]) -> [f64; N] {
    let mut out = *q;
    for i in 0..N {
        out[i] += a * d[i];
    }
    out
}
