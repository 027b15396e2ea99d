use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::math;
use crate::nn::{glorot_init, Activation, DenseNet, NetworkParams, NetworkSpec, OutputActivation};

/// Shape and initialization of a [`CostModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostConfig {
    /// `c_a` in the staging cost `c_a ‖a‖²`.
    pub control_weight: f64,
    /// Number of entries in the terminal network's layer sizes.
    pub layers: usize,
    pub hidden: usize,
    pub init_engineered_weight: f64,
    pub init_learned_weight: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            control_weight: 0.01,
            layers: 4,
            hidden: 128,
            init_engineered_weight: 1000.0,
            init_learned_weight: 0.1,
        }
    }
}

impl CostConfig {
    pub fn network_spec(&self, state_dim: usize) -> Result<NetworkSpec> {
        if self.layers < 2 {
            return Err(Error::InvalidArgument("cost network needs at least two layer sizes".into()));
        }
        let mut sizes = vec![2 * state_dim];
        sizes.extend(core::iter::repeat(self.hidden).take(self.layers - 2));
        sizes.push(1);
        NetworkSpec::uniform(sizes, Activation::Relu, OutputActivation::Softplus)
    }
}

#[derive(Serialize, Deserialize)]
struct CostData {
    control_weight: f64,
    spec: NetworkSpec,
    params: NetworkParams,
    engineered_logit: f64,
    learned_logit: f64,
}

/// Staging cost `c_a ‖a‖²` and terminal cost
/// `sp(λ_e) ‖s − t‖² + sp(λ_l) f_Φ(s ⊕ t)` with `sp = softplus`.
///
/// The generator parameter vector is `Φ` followed by `λ_e` and `λ_l`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "CostData", into = "CostData")]
pub struct CostModel {
    control_weight: f64,
    net: DenseNet,
    engineered_logit: f64,
    learned_logit: f64,
}

impl TryFrom<CostData> for CostModel {
    type Error = Error;
    fn try_from(d: CostData) -> Result<Self> {
        if !(d.control_weight >= 0.0) || !d.control_weight.is_finite() {
            return Err(Error::InvalidArgument("control weight must be finite and non-negative".into()));
        }
        if d.spec.output_dim() != 1 || d.spec.input_dim() % 2 != 0 {
            return Err(Error::InvalidArgument("cost network must map s ⊕ t to a scalar".into()));
        }
        if d.spec.output_activation() != OutputActivation::Softplus {
            return Err(Error::InvalidArgument("cost network output must be softplus".into()));
        }
        if !d.engineered_logit.is_finite() || !d.learned_logit.is_finite() {
            return Err(Error::NonFinite("cost mix logits"));
        }
        Ok(Self {
            control_weight: d.control_weight,
            net: DenseNet::new(d.spec, d.params)?,
            engineered_logit: d.engineered_logit,
            learned_logit: d.learned_logit,
        })
    }
}

impl From<CostModel> for CostData {
    fn from(c: CostModel) -> Self {
        CostData {
            control_weight: c.control_weight,
            spec: c.net.spec().clone(),
            params: c.net.params().clone(),
            engineered_logit: c.engineered_logit,
            learned_logit: c.learned_logit,
        }
    }
}

impl CostModel {
    pub fn new(cfg: &CostConfig, state_dim: usize, seed: u64) -> Result<Self> {
        let spec = cfg.network_spec(state_dim)?;
        let params = glorot_init(&spec, seed);
        if !(cfg.init_engineered_weight > 0.0) || !(cfg.init_learned_weight > 0.0) {
            return Err(Error::InvalidArgument("initial mix weights must be positive".into()));
        }
        CostData {
            control_weight: cfg.control_weight,
            spec,
            params,
            engineered_logit: math::softplus_inverse(cfg.init_engineered_weight),
            learned_logit: math::softplus_inverse(cfg.init_learned_weight),
        }
        .try_into()
    }

    pub fn state_dim(&self) -> usize {
        self.net.input_dim() / 2
    }

    pub fn control_weight(&self) -> f64 {
        self.control_weight
    }

    pub fn set_control_weight(&mut self, c: f64) -> Result<()> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::InvalidArgument("control weight must be finite and non-negative".into()));
        }
        self.control_weight = c;
        Ok(())
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn logits(&self) -> (f64, f64) {
        (self.engineered_logit, self.learned_logit)
    }

    pub fn set_logits(&mut self, engineered: f64, learned: f64) {
        self.engineered_logit = engineered;
        self.learned_logit = learned;
    }

    /// Effective `(engineered, learned)` weights.
    pub fn mix_weights(&self) -> (f64, f64) {
        (math::softplus(self.engineered_logit), math::softplus(self.learned_logit))
    }

    pub fn network_param_count(&self) -> usize {
        self.net.params().len()
    }

    pub fn gen_param_count(&self) -> usize {
        self.network_param_count() + 2
    }

    pub fn gen_params(&self) -> Vec<f64> {
        let mut p = self.net.params().as_slice().to_vec();
        p.push(self.engineered_logit);
        p.push(self.learned_logit);
        p
    }

    pub fn set_gen_params(&mut self, p: &[f64]) -> Result<()> {
        check_len("generator parameters", self.gen_param_count(), p.len())?;
        let k = self.network_param_count();
        self.net.update_params(|w| w.copy_from_slice(&p[..k]));
        self.engineered_logit = p[k];
        self.learned_logit = p[k + 1];
        Ok(())
    }

    pub fn staging_cost(&self, a: &[f64]) -> f64 {
        self.control_weight * a.iter().map(|v| v * v).sum::<f64>()
    }

    fn joint(s: &[f64], target: &[f64]) -> Vec<f64> {
        let mut z = Vec::with_capacity(2 * s.len());
        z.extend_from_slice(s);
        z.extend_from_slice(target);
        z
    }

    /// `f_Φ(s ⊕ t)`.
    pub fn network_cost(&self, s: &[f64], target: &[f64]) -> f64 {
        self.net.forward(&Self::joint(s, target))[0]
    }

    /// `∇_s f_Φ(s ⊕ t)`.
    pub fn network_grad(&self, s: &[f64], target: &[f64]) -> Vec<f64> {
        let trace = self.net.trace(&Self::joint(s, target));
        let mut g = self.net.backward(&trace, &[1.0], None);
        g.truncate(s.len());
        g
    }

    pub fn terminal_cost(&self, s: &[f64], target: &[f64]) -> Result<f64> {
        check_len("terminal state", self.state_dim(), s.len())?;
        check_len("target state", self.state_dim(), target.len())?;
        Ok(self.terminal_cost_unchecked(s, target))
    }

    pub(crate) fn terminal_cost_unchecked(&self, s: &[f64], target: &[f64]) -> f64 {
        let (we, wl) = self.mix_weights();
        let d2: f64 = s.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
        we * d2 + wl * self.network_cost(s, target)
    }

    /// Gradient of the terminal cost with respect to `s`.
    pub fn terminal_cost_grad(&self, s: &[f64], target: &[f64]) -> Result<Vec<f64>> {
        check_len("terminal state", self.state_dim(), s.len())?;
        check_len("target state", self.state_dim(), target.len())?;
        let (we, wl) = self.mix_weights();
        let g = self.network_grad(s, target);
        Ok((0..s.len()).map(|i| 2.0 * we * (s[i] - target[i]) + wl * g[i]).collect())
    }

    /// Zeroes every network weight, leaving `f_Φ ≡ softplus(0) = ln 2`.
    pub fn zero_network(&mut self) {
        self.net.update_params(|w| w.iter_mut().for_each(|v| *v = 0.0));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    fn model() -> CostModel {
        CostModel::new(&CostConfig::default(), 3, 4).unwrap()
    }

    #[test]
    fn staging_cost_examples() {
        let c = model();
        assert_eq!(c.staging_cost(&[0.0]), 0.0);
        assert!((c.staging_cost(&[2.0]) - 0.04).abs() < 1e-15);
    }

    #[test]
    fn zeroed_network_at_target_costs_ln2_times_weight() {
        let mut c = model();
        c.zero_network();
        let s = [0.3, -0.1, 2.0];
        let expected = c.mix_weights().1 * core::f64::consts::LN_2;
        assert!((c.terminal_cost(&s, &s).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn engineered_term_is_quadratic() {
        let mut c = model();
        c.zero_network();
        let t = [0.0; 3];
        let base = c.mix_weights().1 * core::f64::consts::LN_2;
        let one = c.terminal_cost(&[0.1, 0.2, -0.3], &t).unwrap() - base;
        let two = c.terminal_cost(&[0.2, 0.4, -0.6], &t).unwrap() - base;
        assert!((two / one - 4.0).abs() < 1e-12);
    }

    #[test]
    fn initial_weights_and_gen_params() {
        let mut c = model();
        let (we, wl) = c.mix_weights();
        assert!((we - 1000.0).abs() < 1e-9 && (wl - 0.1).abs() < 1e-12);
        let mut p = c.gen_params();
        assert_eq!(p.len(), c.gen_param_count());
        p[0] += 1.0;
        *p.last_mut().unwrap() = 0.0;
        c.set_gen_params(&p).unwrap();
        assert_eq!(c.gen_params(), p);
        assert!((c.mix_weights().1 - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn terminal_gradient_matches_finite_differences() {
        let c = model();
        let mut rng = rng_from_seed(9);
        for _ in 0..10 {
            let s: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let t: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g = c.terminal_cost_grad(&s, &t).unwrap();
            for i in 0..3 {
                let h = 1e-6;
                let (mut sp, mut sm) = (s.clone(), s.clone());
                sp[i] += h;
                sm[i] -= h;
                let fd = (c.terminal_cost(&sp, &t).unwrap() - c.terminal_cost(&sm, &t).unwrap()) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-4 * fd.abs().max(1e-3), "{fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn serde_round_trip() {
        let c = model();
        let json = serde_json::to_string(&c).unwrap();
        let back: CostModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back.gen_params(), c.gen_params());
        assert_eq!(back.control_weight(), c.control_weight());
    }
}
