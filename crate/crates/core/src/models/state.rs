//! Residual state-transition networks shared by the learned dynamics
//! `T̃(s, a)` and the next-state predictor `𝒩(s)`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::normalizer::Normalizer;
use super::train::Regressor;
use crate::error::{check_len, Error, Result};
use crate::nn::{glorot_init, DenseNet, DenseTrace, NetworkParams, NetworkSpec};
use crate::scalar::Scalar;

const INPUT_MIN_STD: f64 = 0.05;
const OUTPUT_MIN_STD: f64 = 1e-4;

/// Projects every `(cos, sin)` pair back onto the unit circle.
pub fn renormalize<S: Scalar>(y: &mut [S], pairs: &[(usize, usize)]) {
    for &(c, s) in pairs {
        let r = (y[c] * y[c] + y[s] * y[s]).sqrt();
        y[c] = y[c] / r;
        y[s] = y[s] / r;
    }
}

/// Applies the (symmetric) Jacobian of [`renormalize`] at `y` to `v` in place.
pub fn renormalize_jvp(y: &[f64], pairs: &[(usize, usize)], v: &mut [f64]) {
    for &(c, s) in pairs {
        let (yc, ys) = (y[c], y[s]);
        let r2 = yc * yc + ys * ys;
        let r3 = r2 * crate::math::sqrt(r2);
        let (vc, vs) = (v[c], v[s]);
        v[c] = (ys * ys * vc - yc * ys * vs) / r3;
        v[s] = (yc * yc * vs - yc * ys * vc) / r3;
    }
}

/// Dense `n × n` Jacobian of [`renormalize`] at `y`.
pub fn renormalize_jacobian<S: Scalar>(y: &[S], pairs: &[(usize, usize)]) -> Vec<S> {
    let n = y.len();
    let mut j = vec![S::zero(); n * n];
    for i in 0..n {
        j[i * n + i] = S::constant(1.0);
    }
    for &(c, s) in pairs {
        let (yc, ys) = (y[c], y[s]);
        let r2 = yc * yc + ys * ys;
        let r3 = r2 * r2.sqrt();
        j[c * n + c] = ys * ys / r3;
        j[c * n + s] = S::zero() - yc * ys / r3;
        j[s * n + c] = S::zero() - yc * ys / r3;
        j[s * n + s] = yc * yc / r3;
    }
    j
}

#[derive(Serialize, Deserialize)]
struct StateModelData {
    spec: NetworkSpec,
    params: NetworkParams,
    state_dim: usize,
    action_dim: usize,
    trig_pairs: Vec<(usize, usize)>,
    residual: bool,
    input_normalizer: Normalizer,
    output_scale: Vec<f64>,
    output_offset: Vec<f64>,
}

/// `s' = renorm(base + scale ⊙ net(normalize(s ⊕ a)))` where `base` is `s`
/// for the residual form and a fitted offset otherwise.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "StateModelData", into = "StateModelData")]
pub struct StateModel {
    net: DenseNet,
    state_dim: usize,
    action_dim: usize,
    trig_pairs: Vec<(usize, usize)>,
    residual: bool,
    input_normalizer: Normalizer,
    output_scale: Vec<f64>,
    output_offset: Vec<f64>,
}

impl TryFrom<StateModelData> for StateModel {
    type Error = Error;
    fn try_from(d: StateModelData) -> Result<Self> {
        let n = d.state_dim;
        check_len("model input", n + d.action_dim, d.spec.input_dim())?;
        check_len("model output", n, d.spec.output_dim())?;
        check_len("input normalizer", n + d.action_dim, d.input_normalizer.dim())?;
        check_len("output scale", n, d.output_scale.len())?;
        check_len("output offset", n, d.output_offset.len())?;
        if d.trig_pairs.iter().any(|&(c, s)| c >= n || s >= n) {
            return Err(Error::InvalidArgument("trig pair out of range".into()));
        }
        Ok(Self {
            net: DenseNet::new(d.spec, d.params)?,
            state_dim: n,
            action_dim: d.action_dim,
            trig_pairs: d.trig_pairs,
            residual: d.residual,
            input_normalizer: d.input_normalizer,
            output_scale: d.output_scale,
            output_offset: d.output_offset,
        })
    }
}

impl From<StateModel> for StateModelData {
    fn from(m: StateModel) -> Self {
        StateModelData {
            spec: m.net.spec().clone(),
            params: m.net.params().clone(),
            state_dim: m.state_dim,
            action_dim: m.action_dim,
            trig_pairs: m.trig_pairs,
            residual: m.residual,
            input_normalizer: m.input_normalizer,
            output_scale: m.output_scale,
            output_offset: m.output_offset,
        }
    }
}

/// Intermediate values of one prediction.
pub struct StatePass {
    pub trace: DenseTrace,
    /// Pre-renormalization output.
    pub raw: Vec<f64>,
    pub next: Vec<f64>,
}

impl StateModel {
    /// Glorot-initialized network with a zeroed final layer, so the residual
    /// form starts as the identity map.
    pub fn new(
        spec: NetworkSpec,
        state_dim: usize,
        action_dim: usize,
        trig_pairs: &[(usize, usize)],
        residual: bool,
        seed: u64,
    ) -> Result<Self> {
        let mut params = glorot_init(&spec, seed);
        params.zero_last_layer(&spec);
        StateModelData {
            input_normalizer: Normalizer::identity(spec.input_dim()),
            spec,
            params,
            state_dim,
            action_dim,
            trig_pairs: trig_pairs.to_vec(),
            residual,
            output_scale: vec![1.0; state_dim],
            output_offset: vec![0.0; state_dim],
        }
        .try_into()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn input_dim(&self) -> usize {
        self.state_dim + self.action_dim
    }

    pub fn trig_pairs(&self) -> &[(usize, usize)] {
        &self.trig_pairs
    }

    pub fn is_residual(&self) -> bool {
        self.residual
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut DenseNet {
        &mut self.net
    }

    pub fn input_normalizer(&self) -> &Normalizer {
        &self.input_normalizer
    }

    pub fn output_scale(&self) -> &[f64] {
        &self.output_scale
    }

    pub fn output_offset(&self) -> &[f64] {
        &self.output_offset
    }

    /// Restores normalizer constants saved with a checkpoint.
    pub fn set_normalizers(&mut self, input: Normalizer, output_scale: Vec<f64>, output_offset: Vec<f64>) -> Result<()> {
        check_len("input normalizer", self.input_dim(), input.dim())?;
        check_len("output scale", self.state_dim, output_scale.len())?;
        check_len("output offset", self.state_dim, output_offset.len())?;
        if output_scale.iter().any(|s| !(*s > 0.0)) || input.std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidArgument("normalizer scales must be positive".into()));
        }
        self.input_normalizer = input;
        self.output_scale = output_scale;
        self.output_offset = output_offset;
        Ok(())
    }

    /// Fits input statistics and the output scale from `(input, next state)` pairs.
    pub fn fit_normalizers(&mut self, inputs: &[f64], targets: &[f64]) -> Result<()> {
        let (d, n) = (self.input_dim(), self.state_dim);
        if inputs.is_empty() {
            return Err(Error::EmptyData("normalizer samples"));
        }
        check_len("normalizer targets", inputs.len() / d * n, targets.len())?;
        self.input_normalizer = Normalizer::fit(inputs.chunks(d), d, INPUT_MIN_STD)?;
        let outputs: Vec<f64> = if self.residual {
            inputs
                .chunks(d)
                .zip(targets.chunks(n))
                .flat_map(|(x, t)| (0..n).map(move |i| t[i] - x[i]))
                .collect()
        } else {
            targets.to_vec()
        };
        let stats = Normalizer::fit(outputs.chunks(n), n, OUTPUT_MIN_STD)?;
        // the residual head has no offset, so it is scaled by the RMS
        self.output_scale = if self.residual {
            stats.std.iter().zip(&stats.mean).map(|(s, m)| crate::math::sqrt(s * s + m * m)).collect()
        } else {
            stats.std
        };
        self.output_offset = if self.residual { vec![0.0; n] } else { stats.mean };
        Ok(())
    }

    fn check_input(&self, s: &[f64], a: &[f64]) -> Result<()> {
        check_len("state", self.state_dim, s.len())?;
        check_len("action", self.action_dim, a.len())
    }

    fn network_input(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.input_dim());
        x.extend_from_slice(s);
        x.extend_from_slice(a);
        self.input_normalizer.apply(&x)
    }

    fn assemble(&self, s: &[f64], out: &[f64]) -> Vec<f64> {
        (0..self.state_dim)
            .map(|i| {
                let base = if self.residual { s[i] } else { self.output_offset[i] };
                base + self.output_scale[i] * out[i]
            })
            .collect()
    }

    pub fn predict(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        self.check_input(s, a)?;
        Ok(self.predict_unchecked(s, a))
    }

    pub(crate) fn predict_unchecked(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        let out = self.net.forward(&self.network_input(s, a));
        let mut y = self.assemble(s, &out);
        renormalize(&mut y, &self.trig_pairs);
        y
    }

    pub(crate) fn pass(&self, s: &[f64], a: &[f64]) -> StatePass {
        let trace = self.net.trace(&self.network_input(s, a));
        let raw = self.assemble(s, trace.output());
        let mut next = raw.clone();
        renormalize(&mut next, &self.trig_pairs);
        StatePass { trace, raw, next }
    }

    /// Jacobian of the pre-renormalization output with respect to `s ⊕ a`
    /// (`n × (n + m)`).
    pub(crate) fn raw_jacobian(&self, pass: &StatePass) -> Vec<f64> {
        let (n, d) = (self.state_dim, self.input_dim());
        let jn = self.net.jacobian_from(&pass.trace);
        let mut j = vec![0.0; n * d];
        for r in 0..n {
            for c in 0..d {
                j[r * d + c] = self.output_scale[r] * jn[r * d + c] / self.input_normalizer.std[c];
            }
            if self.residual {
                j[r * d + r] += 1.0;
            }
        }
        j
    }

    /// Next state and its Jacobian with respect to `s ⊕ a` (`n × (n + m)`).
    pub fn jacobian(&self, s: &[f64], a: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_input(s, a)?;
        let pass = self.pass(s, a);
        let jy = self.raw_jacobian(&pass);
        let (n, d) = (self.state_dim, self.input_dim());
        let mut j = jy;
        let mut col = vec![0.0; n];
        for c in 0..d {
            for r in 0..n {
                col[r] = j[r * d + c];
            }
            renormalize_jvp(&pass.raw, &self.trig_pairs, &mut col);
            for r in 0..n {
                j[r * d + c] = col[r];
            }
        }
        Ok((pass.next, j))
    }

    /// `vᵀ ∂s'/∂(s ⊕ a)` for a recorded pass.
    pub(crate) fn vjp(&self, pass: &StatePass, s_adj: &[f64], param_grad: Option<&mut [f64]>) -> Vec<f64> {
        let (n, d) = (self.state_dim, self.input_dim());
        let mut v = s_adj.to_vec();
        renormalize_jvp(&pass.raw, &self.trig_pairs, &mut v);
        let upstream: Vec<f64> = v.iter().zip(&self.output_scale).map(|(a, b)| a * b).collect();
        let gx = self.net.backward(&pass.trace, &upstream, param_grad);
        let mut out: Vec<f64> = (0..d).map(|c| gx[c] / self.input_normalizer.std[c]).collect();
        if self.residual {
            for i in 0..n {
                out[i] += v[i];
            }
        }
        out
    }

    /// Mean squared error of one prediction against `target`.
    pub fn sample_loss(&self, s: &[f64], a: &[f64], target: &[f64]) -> f64 {
        let pred = self.predict_unchecked(s, a);
        pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64
    }
}

impl Regressor for StateModel {
    fn dims(&self) -> (usize, usize) {
        (self.input_dim(), self.state_dim)
    }

    fn loss_grad(&self, input: &[f64], target: &[f64], grad: &mut [f64]) -> f64 {
        let (s, a) = input.split_at(self.state_dim);
        let pass = self.pass(s, a);
        let n = self.state_dim as f64;
        let mut loss = 0.0;
        let adj: Vec<f64> = pass
            .next
            .iter()
            .zip(target)
            .map(|(p, t)| {
                loss += (p - t) * (p - t);
                2.0 * (p - t) / n
            })
            .collect();
        self.vjp(&pass, &adj, Some(grad));
        loss / n
    }

    fn loss(&self, input: &[f64], target: &[f64]) -> f64 {
        let (s, a) = input.split_at(self.state_dim);
        self.sample_loss(s, a, target)
    }

    fn net_mut(&mut self) -> &mut DenseNet {
        &mut self.net
    }

    fn net(&self) -> &DenseNet {
        &self.net
    }
}
