//! Adversarial training of the MPC terminal cost and the L2 trajectory
//! matching baselines.
//!
//! Each outer iteration rolls the deployed controller out on the imitator,
//! fine-tunes the learned dynamics on what it saw, then updates the cost
//! parameters so that short generator rollouts from demonstration states
//! look like the demonstrations that follow those states.

mod disc;
mod train;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

pub use disc::{discriminator_loss, generator_objective, DiscLoss, Discriminator};
pub use train::{
    initialize, l2_objective, sample_windows, train, DemoWindow, Initialization, IterationMetrics, ModelConfig,
    RolloutSeeds, TrainState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    GanMpc,
    /// L2 matching of states and actions.
    L2MpcSa,
    /// L2 matching of states only.
    L2MpcS,
    /// The behavior-cloning policy alone.
    Bc,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::GanMpc, Algorithm::L2MpcSa, Algorithm::L2MpcS, Algorithm::Bc];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::GanMpc => "gan_mpc",
            Algorithm::L2MpcSa => "l2_mpc_sa",
            Algorithm::L2MpcS => "l2_mpc_s",
            Algorithm::Bc => "bc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidArgument(alloc::format!("unknown algorithm `{s}`")))
    }

    /// Whether the algorithm deploys an MPC controller (and interacts with
    /// the imitator during training).
    pub fn uses_mpc(self) -> bool {
        self != Algorithm::Bc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanMpcHyper {
    /// Dynamics pre-training epochs on demonstrations.
    pub n_pre: usize,
    /// Dynamics fine-tuning epochs per iteration.
    pub n_dyn: usize,
    /// Outer iterations.
    pub n_mpc: usize,
    /// Environment rollouts per iteration.
    pub k_rollouts: usize,
    /// Discriminator batch (half real, half generated).
    pub batch_size: usize,
    /// Generator rollout and demo window length in states.
    pub rollout_len: usize,
    pub learning_rate: f64,
    pub polyak_rho: f64,
    pub r1_lambda: f64,
    /// Global gradient-norm clip; written as `0` when disabled.
    #[serde(with = "zero_is_none")]
    pub clip_norm: Option<f64>,
    /// State dimensions visible to the discriminator and L2-S matching;
    /// `None` shows every dimension.
    pub obs_mask: Option<Vec<bool>>,
    pub algorithm: Algorithm,
    pub disc_steps: usize,
    pub gen_steps: usize,
}

mod zero_is_none {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(v.unwrap_or(0.0))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        let v = f64::deserialize(d)?;
        Ok(if v == 0.0 { None } else { Some(v) })
    }
}

impl Default for GanMpcHyper {
    fn default() -> Self {
        Self {
            n_pre: 2,
            n_dyn: 2,
            n_mpc: 10,
            k_rollouts: 1,
            batch_size: 128,
            rollout_len: 10,
            learning_rate: 1e-5,
            polyak_rho: 0.95,
            r1_lambda: 5.0,
            clip_norm: Some(10.0),
            obs_mask: None,
            algorithm: Algorithm::GanMpc,
            disc_steps: 1,
            gen_steps: 1,
        }
    }
}

impl GanMpcHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.batch_size < 2 || self.batch_size % 2 != 0 {
            return bad("batch size must be a positive even number");
        }
        if self.k_rollouts == 0 || self.rollout_len == 0 || self.disc_steps == 0 || self.gen_steps == 0 {
            return bad("rollout counts, rollout length and step counts must be positive");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.polyak_rho) {
            return bad("polyak rho must lie in [0, 1]");
        }
        if !(self.r1_lambda >= 0.0) || !self.r1_lambda.is_finite() {
            return bad("r1 weight must be non-negative");
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad("clip norm must be positive");
            }
        }
        if let Some(m) = &self.obs_mask {
            if !m.iter().any(|&v| v) {
                return bad("observation mask hides every dimension");
            }
        }
        Ok(())
    }

    /// The mask as a concrete vector for `state_dim` dimensions.
    pub fn mask(&self, state_dim: usize) -> Result<Vec<bool>> {
        match &self.obs_mask {
            Some(m) => {
                check_len("observation mask", state_dim, m.len())?;
                Ok(m.clone())
            }
            None => Ok(alloc::vec![true; state_dim]),
        }
    }
}

/// `deployed ← ρ · deployed + (1 − ρ) · live`, entrywise.
pub fn polyak_update(deployed: &mut [f64], live: &[f64], rho: f64) -> Result<()> {
    check_len("polyak parameters", deployed.len(), live.len())?;
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidArgument("polyak rho must lie in [0, 1]".into()));
    }
    for (d, l) in deployed.iter_mut().zip(live) {
        *d = rho * *d + (1.0 - rho) * l;
    }
    Ok(())
}

/// Projects each state onto the dimensions where `mask` is true.
pub fn apply_obs_mask(states: &[Vec<f64>], mask: &[bool]) -> Result<Vec<Vec<f64>>> {
    if !mask.iter().any(|&v| v) {
        return Err(Error::InvalidArgument("observation mask hides every dimension".into()));
    }
    states
        .iter()
        .map(|s| {
            check_len("masked state", mask.len(), s.len())?;
            Ok(s.iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| *v).collect())
        })
        .collect()
}

/// Scatters masked-coordinate values back into full-width vectors.
pub(crate) fn unmask(values: &[Vec<f64>], mask: &[bool]) -> Vec<Vec<f64>> {
    values
        .iter()
        .map(|v| {
            let mut it = v.iter();
            mask.iter().map(|&m| if m { *it.next().unwrap() } else { 0.0 }).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn polyak_closed_forms() {
        let live = [1.0, -3.0, 0.25];
        let old = [0.5, 2.0, -7.0];
        let mut d = old;
        polyak_update(&mut d, &live, 1.0).unwrap();
        assert_eq!(d, old);
        polyak_update(&mut d, &live, 0.0).unwrap();
        assert_eq!(d, live);
        let mut d = old;
        polyak_update(&mut d, &live, 0.5).unwrap();
        for i in 0..3 {
            assert_eq!(d[i], (old[i] + live[i]) / 2.0);
        }
        assert!(polyak_update(&mut d, &live[..2], 0.5).is_err());
    }

    #[test]
    fn mask_projection() {
        let s = vec![vec![0.1, 0.2, 0.3], vec![1.0, 2.0, 3.0]];
        assert_eq!(apply_obs_mask(&s, &[true; 3]).unwrap(), s);
        assert_eq!(
            apply_obs_mask(&s, &[true, true, false]).unwrap(),
            vec![vec![0.1, 0.2], vec![1.0, 2.0]]
        );
        assert!(apply_obs_mask(&s, &[false; 3]).is_err());
        let back = unmask(&apply_obs_mask(&s, &[true, false, true]).unwrap(), &[true, false, true]);
        assert_eq!(back, vec![vec![0.1, 0.0, 0.3], vec![1.0, 0.0, 3.0]]);
    }

    #[test]
    fn hyper_defaults_and_validation() {
        let h = GanMpcHyper::default();
        assert_eq!((h.n_pre, h.n_dyn, h.n_mpc, h.k_rollouts, h.batch_size, h.rollout_len), (2, 2, 10, 1, 128, 10));
        h.validate().unwrap();
        assert!(GanMpcHyper { batch_size: 7, ..h.clone() }.validate().is_err());
        assert!(GanMpcHyper { obs_mask: Some(vec![false, false]), ..h.clone() }.validate().is_err());
        assert!(GanMpcHyper { polyak_rho: 1.5, ..h }.validate().is_err());
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(Algorithm::parse(a.name()).unwrap(), a);
        }
        assert!(Algorithm::parse("sac").is_err());
    }

    proptest! {
        #[test]
        fn polyak_step_is_bounded(
            old in prop::collection::vec(-10.0f64..10.0, 1..20),
            shift in prop::collection::vec(-10.0f64..10.0, 20),
            rho in 0.0f64..=1.0,
        ) {
            let live: Vec<f64> = old.iter().zip(&shift).map(|(a, b)| a + b).collect();
            let mut d = old.clone();
            polyak_update(&mut d, &live, rho).unwrap();
            let moved = crate::math::norm2(&d.iter().zip(&old).map(|(a, b)| a - b).collect::<Vec<_>>());
            let gap = crate::math::norm2(&live.iter().zip(&old).map(|(a, b)| a - b).collect::<Vec<_>>());
            prop_assert!(moved <= (1.0 - rho) * gap * (1.0 + 1e-12) + 1e-12);
        }
    }
}
