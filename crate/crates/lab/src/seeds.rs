//! Seed ranges derived from `base_seed`.
//!
//! | stream | seeds |
//! |---|---|
//! | demonstrations | `base + i`, `i < n_demos` |
//! | training rollouts of run seed `r` | `base + 2^32 + r·2^20 + j`, `j < 2^20` |
//! | evaluation episodes | `base + 2^48 + i` |
//!
//! With `base < 2^32`, `n_demos ≤ 2^32` and `r < 2^20` the three ranges are
//! disjoint, and the evaluation seeds do not depend on the run seed, so every
//! algorithm is evaluated on the same initial states.

use ganmpc::rng::mix64;

use crate::error::{LabError, Result};

pub const TRAINING_BASE: u64 = 1 << 32;
pub const EVAL_BASE: u64 = 1 << 48;
pub const RUN_STRIDE: u64 = 1 << 20;
pub const MAX_BASE_SEED: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedPlan {
    pub base: u64,
}

impl SeedPlan {
    pub fn new(base: u64) -> Result<Self> {
        if base >= MAX_BASE_SEED {
            return Err(LabError::Config(format!("base_seed must be below 2^32, got {base}")));
        }
        Ok(Self { base })
    }

    pub fn demo(&self, i: u64) -> u64 {
        self.base + i
    }

    pub fn check_run_seed(run_seed: u64) -> Result<()> {
        if run_seed >= RUN_STRIDE {
            return Err(LabError::Config(format!("run seed must be below 2^20, got {run_seed}")));
        }
        Ok(())
    }

    /// First environment seed of a run's training rollouts.
    pub fn training_offset(&self, run_seed: u64) -> u64 {
        self.base + TRAINING_BASE + run_seed * RUN_STRIDE
    }

    pub fn eval(&self, i: u64) -> u64 {
        self.base + EVAL_BASE + i
    }

    pub fn eval_seeds(&self, episodes: usize) -> Vec<u64> {
        (0..episodes as u64).map(|i| self.eval(i)).collect()
    }

    /// Seed of the in-process random streams (initialization, batches, SPSA).
    pub fn core_seed(&self, run_seed: u64) -> u64 {
        mix64(self.base ^ mix64(run_seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn streams_never_overlap(
            base in 0u64..MAX_BASE_SEED,
            run in 0u64..RUN_STRIDE,
            demo in 0u64..(1 << 32),
            step in 0u64..RUN_STRIDE,
            ep in 0u64..(1 << 20),
        ) {
            let p = SeedPlan::new(base).unwrap();
            let d = p.demo(demo);
            let t = p.training_offset(run) + step;
            let e = p.eval(ep);
            prop_assert!(d < p.training_offset(0));
            prop_assert!(d != t && t != e && d != e);
            prop_assert!(t < p.eval(0));
        }
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(SeedPlan::new(MAX_BASE_SEED).is_err());
        assert!(SeedPlan::check_run_seed(RUN_STRIDE).is_err());
        SeedPlan::check_run_seed(RUN_STRIDE - 1).unwrap();
    }

    #[test]
    fn runs_use_separate_training_ranges() {
        let p = SeedPlan::new(7).unwrap();
        assert_eq!(p.training_offset(1) - p.training_offset(0), RUN_STRIDE);
        assert_eq!(p.eval_seeds(3), vec![7 + EVAL_BASE, 8 + EVAL_BASE, 9 + EVAL_BASE]);
        assert_ne!(p.core_seed(0), p.core_seed(1));
    }
}
