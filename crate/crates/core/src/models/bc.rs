use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::normalizer::Normalizer;
use super::train::Regressor;
use crate::env::Policy;
use crate::error::{check_len, Error, Result};
use crate::math;
use crate::nn::{glorot_init, DenseNet, DenseTrace, NetworkParams, NetworkSpec};

#[derive(Serialize, Deserialize)]
struct BcData {
    spec: NetworkSpec,
    params: NetworkParams,
    action_bound: f64,
    input_normalizer: Normalizer,
}

/// Behavior-cloning policy `a = bound · tanh(net(normalize(s)))`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "BcData", into = "BcData")]
pub struct BcPolicy {
    net: DenseNet,
    action_bound: f64,
    input_normalizer: Normalizer,
}

impl TryFrom<BcData> for BcPolicy {
    type Error = Error;
    fn try_from(d: BcData) -> Result<Self> {
        check_len("policy normalizer", d.spec.input_dim(), d.input_normalizer.dim())?;
        if !(d.action_bound > 0.0) {
            return Err(Error::InvalidArgument("action bound must be positive".into()));
        }
        Ok(Self {
            net: DenseNet::new(d.spec, d.params)?,
            action_bound: d.action_bound,
            input_normalizer: d.input_normalizer,
        })
    }
}

impl From<BcPolicy> for BcData {
    fn from(p: BcPolicy) -> Self {
        BcData {
            spec: p.net.spec().clone(),
            params: p.net.params().clone(),
            action_bound: p.action_bound,
            input_normalizer: p.input_normalizer,
        }
    }
}

pub struct BcPass {
    trace: DenseTrace,
    pub action: Vec<f64>,
}

impl BcPolicy {
    pub fn new(spec: NetworkSpec, action_bound: f64, seed: u64) -> Result<Self> {
        let params = glorot_init(&spec, seed);
        Self::with_params(spec, params, action_bound)
    }

    pub fn with_params(spec: NetworkSpec, params: NetworkParams, action_bound: f64) -> Result<Self> {
        BcData {
            input_normalizer: Normalizer::identity(spec.input_dim()),
            spec,
            params,
            action_bound,
        }
        .try_into()
    }

    pub fn action_bound(&self) -> f64 {
        self.action_bound
    }

    pub fn state_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn input_normalizer(&self) -> &Normalizer {
        &self.input_normalizer
    }

    pub fn set_input_normalizer(&mut self, n: Normalizer) -> Result<()> {
        check_len("policy normalizer", self.state_dim(), n.dim())?;
        self.input_normalizer = n;
        Ok(())
    }

    pub fn act(&self, s: &[f64]) -> Result<Vec<f64>> {
        check_len("state", self.state_dim(), s.len())?;
        Ok(self.act_unchecked(s))
    }

    pub(crate) fn act_unchecked(&self, s: &[f64]) -> Vec<f64> {
        let out = self.net.forward(&self.input_normalizer.apply(s));
        out.iter().map(|&z| self.action_bound * math::tanh(z)).collect()
    }

    pub(crate) fn pass(&self, s: &[f64]) -> BcPass {
        let trace = self.net.trace(&self.input_normalizer.apply(s));
        let action = trace.output().iter().map(|&z| self.action_bound * math::tanh(z)).collect();
        BcPass { trace, action }
    }

    /// `vᵀ ∂a/∂s`, optionally accumulating the parameter gradient.
    pub(crate) fn vjp(&self, pass: &BcPass, a_adj: &[f64], param_grad: Option<&mut [f64]>) -> Vec<f64> {
        let upstream: Vec<f64> = a_adj
            .iter()
            .zip(&pass.action)
            .map(|(v, a)| {
                let t = a / self.action_bound;
                v * self.action_bound * (1.0 - t * t)
            })
            .collect();
        let gx = self.net.backward(&pass.trace, &upstream, param_grad);
        gx.iter().zip(&self.input_normalizer.std).map(|(g, s)| g / s).collect()
    }
}

impl Regressor for BcPolicy {
    fn dims(&self) -> (usize, usize) {
        (self.net.input_dim(), self.net.output_dim())
    }

    fn loss_grad(&self, input: &[f64], target: &[f64], grad: &mut [f64]) -> f64 {
        let pass = self.pass(input);
        let m = target.len() as f64;
        let mut loss = 0.0;
        let adj: Vec<f64> = pass
            .action
            .iter()
            .zip(target)
            .map(|(a, t)| {
                loss += (a - t) * (a - t);
                2.0 * (a - t) / m
            })
            .collect();
        self.vjp(&pass, &adj, Some(grad));
        loss / m
    }

    fn loss(&self, input: &[f64], target: &[f64]) -> f64 {
        let a = self.act_unchecked(input);
        a.iter().zip(target).map(|(a, t)| (a - t) * (a - t)).sum::<f64>() / a.len() as f64
    }

    fn net(&self) -> &DenseNet {
        &self.net
    }

    fn net_mut(&mut self) -> &mut DenseNet {
        &mut self.net
    }
}

impl Policy for BcPolicy {
    fn act(&mut self, state: &[f64]) -> Result<Vec<f64>> {
        BcPolicy::act(self, state)
    }
}

impl Policy for &BcPolicy {
    fn act(&mut self, state: &[f64]) -> Result<Vec<f64>> {
        BcPolicy::act(self, state)
    }
}
