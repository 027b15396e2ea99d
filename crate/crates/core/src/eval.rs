//! Relative trajectory reward: the imitator's mean episode reward divided by
//! the demonstrator's.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    math::sqrt(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64)
}

/// `mean(imitator) / mean(demonstrator)`.
pub fn relative_reward(imitator: &[f64], demonstrator: &[f64]) -> Result<f64> {
    if imitator.is_empty() || demonstrator.is_empty() {
        return Err(Error::EmptyData("episode rewards"));
    }
    let d = mean(demonstrator);
    if !(d > 0.0) {
        return Err(Error::InvalidArgument("demonstrator mean reward must be positive".into()));
    }
    Ok(mean(imitator) / d)
}

/// Per-episode rewards of an imitator and the demonstrator reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub seeds: Vec<u64>,
    pub imitator_rewards: Vec<f64>,
    pub demonstrator_rewards: Vec<f64>,
    pub imitator_mean: f64,
    pub imitator_std: f64,
    pub demonstrator_mean: f64,
    pub demonstrator_std: f64,
    pub relative_reward: f64,
    /// Per-episode imitator rewards divided by the demonstrator mean.
    pub relative_std: f64,
}

impl EvalResult {
    pub fn new(seeds: Vec<u64>, imitator_rewards: Vec<f64>, demonstrator_rewards: Vec<f64>) -> Result<Self> {
        let relative = relative_reward(&imitator_rewards, &demonstrator_rewards)?;
        let dm = mean(&demonstrator_rewards);
        Ok(Self {
            imitator_mean: mean(&imitator_rewards),
            imitator_std: std_dev(&imitator_rewards),
            demonstrator_mean: dm,
            demonstrator_std: std_dev(&demonstrator_rewards),
            relative_reward: relative,
            relative_std: std_dev(&imitator_rewards) / dm,
            seeds,
            imitator_rewards,
            demonstrator_rewards,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn identical_rewards_give_one() {
        let r = vec![120.0, 130.5, 99.0];
        assert_eq!(relative_reward(&r, &r).unwrap(), 1.0);
        let e = EvalResult::new(vec![1, 2, 3], r.clone(), r).unwrap();
        assert_eq!(e.relative_reward, 1.0);
    }

    #[test]
    fn ratio_of_means() {
        assert_eq!(relative_reward(&[1.0, 3.0], &[4.0]).unwrap(), 0.5);
        assert!(relative_reward(&[], &[1.0]).is_err());
        assert!(relative_reward(&[1.0], &[0.0]).is_err());
    }
}
