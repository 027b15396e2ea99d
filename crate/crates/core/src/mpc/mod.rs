//! Model-predictive control: iLQR over the learned dynamics with a
//! BC-seeded initial guess, a control-effort staging cost and a learnable
//! terminal cost toward the predicted target state.
//!
//! [`mpc_policy`] is the plain controller. [`differentiable_rollout`] records
//! a truncated solve on a [`Tape`](crate::autodiff::Tape) so that losses on
//! the resulting state sequence can be differentiated with respect to the
//! cost parameters.

mod cost;
mod ilqr;
mod planner;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cost::{CostConfig, CostModel};
pub use ilqr::{
    ilqr_solve, IlqrIteration, IlqrOptions, IlqrSolution, Linearization, RunningExpansion,
    TerminalExpansion, TrajectoryProblem,
};
pub use planner::{
    differentiable_rollout, generator_rollout, mpc_plan, GeneratorPath, mpc_policy, rollout_gradient, spsa_gradient, MpcController,
    PlanModels, PlanResolver, RolloutGradient,
};

/// How generator gradients are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorGrad {
    /// Reverse mode through the truncated solver.
    Unrolled,
    /// Simultaneous-perturbation estimate.
    Spsa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    pub horizon: usize,
    pub gamma: f64,
    pub max_ilqr_iters: usize,
    pub unroll_iters: usize,
    pub mu_init: f64,
    pub mu_factor: f64,
    pub mu_max: f64,
    pub line_search_alphas: Vec<f64>,
    pub convergence_tol: f64,
    pub generator_grad: GeneratorGrad,
    pub spsa_perturbation: f64,
    pub spsa_samples: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        let o = IlqrOptions::default();
        Self {
            horizon: 10,
            gamma: 1.0,
            max_ilqr_iters: o.max_iters,
            unroll_iters: 2,
            mu_init: o.mu_init,
            mu_factor: o.mu_factor,
            mu_max: o.mu_max,
            line_search_alphas: o.line_search_alphas,
            convergence_tol: o.convergence_tol,
            generator_grad: GeneratorGrad::Unrolled,
            spsa_perturbation: 1e-3,
            spsa_samples: 4,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("MPC horizon must be positive".into()));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidArgument("terminal weight must be finite and non-negative".into()));
        }
        if self.unroll_iters == 0 || self.unroll_iters > self.max_ilqr_iters {
            return Err(Error::InvalidArgument(
                "unroll iterations must be in 1..=max_ilqr_iters".into(),
            ));
        }
        if !(self.spsa_perturbation > 0.0) || self.spsa_samples == 0 {
            return Err(Error::InvalidArgument("SPSA needs a positive perturbation and sample count".into()));
        }
        self.ilqr_options(self.max_ilqr_iters).validate()
    }

    pub fn ilqr_options(&self, max_iters: usize) -> IlqrOptions {
        IlqrOptions {
            max_iters,
            mu_init: self.mu_init,
            mu_factor: self.mu_factor,
            mu_max: self.mu_max,
            line_search_alphas: self.line_search_alphas.clone(),
            convergence_tol: self.convergence_tol,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = MpcConfig::default();
        assert_eq!((c.horizon, c.gamma, c.unroll_iters), (10, 1.0, 2));
        c.validate().unwrap();
    }

    #[test]
    fn rejects_unroll_beyond_max() {
        let c = MpcConfig {
            unroll_iters: 11,
            ..MpcConfig::default()
        };
        assert!(c.validate().is_err());
        let c = MpcConfig {
            line_search_alphas: alloc::vec![1.0, 0.5, 0.5],
            ..MpcConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
