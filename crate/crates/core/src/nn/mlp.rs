use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::rng::rng_from_seed;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Softplus,
}

impl Activation {
    #[inline]
    pub(crate) fn apply<S: Scalar>(self, z: S) -> S {
        match self {
            Activation::Relu => z.relu(),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    pub(crate) fn derivative<S: Scalar>(self, z: S, a: S) -> S {
        match self {
            Activation::Relu => {
                if z.value() > 0.0 {
                    S::constant(1.0)
                } else {
                    S::zero()
                }
            }
            Activation::Tanh => S::constant(1.0) - a * a,
            Activation::Identity => S::constant(1.0),
        }
    }
}

impl OutputActivation {
    #[inline]
    pub(crate) fn apply<S: Scalar>(self, z: S) -> S {
        match self {
            OutputActivation::Identity => z,
            OutputActivation::Softplus => z.softplus(),
        }
    }

    #[inline]
    pub(crate) fn derivative<S: Scalar>(self, z: S) -> S {
        match self {
            OutputActivation::Identity => S::constant(1.0),
            OutputActivation::Softplus => z.sigmoid(),
        }
    }
}

#[derive(Deserialize)]
struct RawSpec {
    layer_sizes: Vec<usize>,
    activations: Vec<Activation>,
    output_activation: OutputActivation,
}

/// Architecture of a fully connected network: `layer_sizes` lists the input
/// width, each hidden width and the output width. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct NetworkSpec {
    layer_sizes: Vec<usize>,
    activations: Vec<Activation>,
    output_activation: OutputActivation,
}

impl TryFrom<RawSpec> for NetworkSpec {
    type Error = Error;
    fn try_from(raw: RawSpec) -> Result<Self> {
        NetworkSpec::new(raw.layer_sizes, raw.activations, raw.output_activation)
    }
}

impl NetworkSpec {
    pub fn new(
        layer_sizes: Vec<usize>,
        activations: Vec<Activation>,
        output_activation: OutputActivation,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidArgument(
                "a network needs at least an input and an output layer".into(),
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument("layer sizes must be positive".into()));
        }
        check_len("hidden activations", layer_sizes.len() - 2, activations.len())?;
        Ok(Self {
            layer_sizes,
            activations,
            output_activation,
        })
    }

    /// Same activation on every hidden layer.
    pub fn uniform(
        layer_sizes: Vec<usize>,
        activation: Activation,
        output_activation: OutputActivation,
    ) -> Result<Self> {
        let hidden = layer_sizes.len().saturating_sub(2);
        Self::new(layer_sizes, vec![activation; hidden], output_activation)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output_activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of affine layers.
    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// `(weights offset, bias offset, fan_in, fan_out)` per affine layer.
    pub fn layout(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut off = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let (fi, fo) = (w[0], w[1]);
                let entry = (off, off + fi * fo, fi, fo);
                off += fi * fo + fo;
                entry
            })
            .collect()
    }

    /// True when the map is piecewise linear in its input, i.e. its input
    /// Jacobian is locally constant.
    pub fn is_piecewise_linear(&self) -> bool {
        self.output_activation == OutputActivation::Identity
            && self
                .activations
                .iter()
                .all(|a| matches!(a, Activation::Relu | Activation::Identity))
    }

    pub(crate) fn activation_of(&self, layer: usize) -> Option<Activation> {
        self.activations.get(layer).copied()
    }

    pub fn check_params(&self, params: &NetworkParams) -> Result<()> {
        check_len("network parameters", self.param_count(), params.len())
    }

    /// Standard affine + activation composition.
    pub fn forward<S: Scalar>(&self, params: &[f64], input: &[S]) -> Result<Vec<S>> {
        check_len("network input", self.input_dim(), input.len())?;
        check_len("network parameters", self.param_count(), params.len())?;
        Ok(self.forward_unchecked(params, input))
    }

    pub(crate) fn forward_unchecked<S: Scalar>(&self, params: &[f64], input: &[S]) -> Vec<S> {
        let layout = self.layout();
        let last = layout.len() - 1;
        let mut x: Vec<S> = input.to_vec();
        for (l, &(w, b, fi, fo)) in layout.iter().enumerate() {
            let mut y = Vec::with_capacity(fo);
            for i in 0..fo {
                let row = &params[w + i * fi..w + (i + 1) * fi];
                let mut acc = S::constant(params[b + i]);
                for (wv, xv) in row.iter().zip(&x) {
                    acc += *xv * *wv;
                }
                y.push(if l == last {
                    self.output_activation.apply(acc)
                } else {
                    self.activation_of(l).unwrap().apply(acc)
                });
            }
            x = y;
        }
        x
    }

    /// Forward pass keeping what the backward pass needs.
    pub fn forward_trace<S: Scalar>(&self, params: &[f64], input: &[S]) -> Result<ForwardTrace<S>> {
        check_len("network input", self.input_dim(), input.len())?;
        check_len("network parameters", self.param_count(), params.len())?;
        let layout = self.layout();
        let last = layout.len() - 1;
        let mut acts = Vec::with_capacity(layout.len() + 1);
        let mut pres = Vec::with_capacity(layout.len());
        acts.push(input.to_vec());
        for (l, &(w, b, fi, fo)) in layout.iter().enumerate() {
            let x = acts.last().unwrap();
            let mut z = Vec::with_capacity(fo);
            let mut a = Vec::with_capacity(fo);
            for i in 0..fo {
                let row = &params[w + i * fi..w + (i + 1) * fi];
                let mut acc = S::constant(params[b + i]);
                for (wv, xv) in row.iter().zip(x) {
                    acc += *xv * *wv;
                }
                z.push(acc);
                a.push(if l == last {
                    self.output_activation.apply(acc)
                } else {
                    self.activation_of(l).unwrap().apply(acc)
                });
            }
            pres.push(z);
            acts.push(a);
        }
        Ok(ForwardTrace { pres, acts })
    }

    /// Reverse-mode gradients of `⟨upstream, output⟩`. Parameter gradients
    /// are accumulated into `param_grad`; the input gradient is returned.
    pub fn backward<S: Scalar>(
        &self,
        params: &[f64],
        trace: &ForwardTrace<S>,
        upstream: &[S],
        param_grad: &mut [S],
    ) -> Result<Vec<S>> {
        check_len("upstream gradient", self.output_dim(), upstream.len())?;
        check_len("parameter gradient", self.param_count(), param_grad.len())?;
        let layout = self.layout();
        let last = layout.len() - 1;
        let mut delta: Vec<S> = upstream
            .iter()
            .zip(&trace.pres[last])
            .map(|(g, z)| *g * self.output_activation.derivative(*z))
            .collect();
        for l in (0..layout.len()).rev() {
            let (w, b, fi, fo) = layout[l];
            let x = &trace.acts[l];
            for i in 0..fo {
                let d = delta[i];
                if d.is_exact_zero() {
                    continue;
                }
                param_grad[b + i] += d;
                let g = &mut param_grad[w + i * fi..w + (i + 1) * fi];
                for (gv, xv) in g.iter_mut().zip(x) {
                    *gv += d * *xv;
                }
            }
            let mut prev = vec![S::zero(); fi];
            for i in 0..fo {
                let d = delta[i];
                if d.is_exact_zero() {
                    continue;
                }
                let row = &params[w + i * fi..w + (i + 1) * fi];
                for (pv, wv) in prev.iter_mut().zip(row) {
                    *pv += d * *wv;
                }
            }
            if l > 0 {
                let act = self.activation_of(l - 1).unwrap();
                for (j, pv) in prev.iter_mut().enumerate() {
                    *pv = *pv * act.derivative(trace.pres[l - 1][j], trace.acts[l][j]);
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    /// Input Jacobian (`output × input`, row-major) together with the output.
    pub fn jacobian<S: Scalar>(&self, params: &[f64], input: &[S]) -> Result<(Vec<S>, Vec<S>)> {
        let trace = self.forward_trace(params, input)?;
        let layout = self.layout();
        let last = layout.len() - 1;
        let k = self.output_dim();
        // g holds k rows of d(output_r)/d(layer activations)
        let mut width = k;
        let mut g = vec![S::zero(); k * k];
        for r in 0..k {
            g[r * k + r] = self.output_activation.derivative(trace.pres[last][r]);
        }
        for l in (0..layout.len()).rev() {
            let (w, _, fi, fo) = layout[l];
            debug_assert_eq!(fo, width);
            let mut next = vec![S::zero(); k * fi];
            for r in 0..k {
                let grow = &g[r * fo..(r + 1) * fo];
                let nrow = &mut next[r * fi..(r + 1) * fi];
                for (i, &gi) in grow.iter().enumerate() {
                    if gi.is_exact_zero() {
                        continue;
                    }
                    let wrow = &params[w + i * fi..w + (i + 1) * fi];
                    for (nv, wv) in nrow.iter_mut().zip(wrow) {
                        *nv += gi * *wv;
                    }
                }
            }
            if l > 0 {
                let act = self.activation_of(l - 1).unwrap();
                let d: Vec<S> = (0..fi)
                    .map(|j| act.derivative(trace.pres[l - 1][j], trace.acts[l][j]))
                    .collect();
                for r in 0..k {
                    for j in 0..fi {
                        next[r * fi + j] = next[r * fi + j] * d[j];
                    }
                }
            }
            g = next;
            width = fi;
        }
        let out = trace.acts.last().unwrap().clone();
        Ok((out, g))
    }
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<S> {
    pres: Vec<Vec<S>>,
    acts: Vec<Vec<S>>,
}

impl<S: Copy> ForwardTrace<S> {
    pub fn output(&self) -> &[S] {
        self.acts.last().unwrap()
    }

    pub fn input(&self) -> &[S] {
        &self.acts[0]
    }
}

/// Flat parameter store laid out layer by layer as `W` (row-major,
/// `fan_out × fan_in`) followed by `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    values: Vec<f64>,
}

impl NetworkParams {
    pub fn from_vec(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self {
            values: vec![0.0; spec.param_count()],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Zeroes the final affine layer so the network outputs exactly zero
    /// (before the output activation).
    pub fn zero_last_layer(&mut self, spec: &NetworkSpec) {
        let &(w, b, fi, fo) = spec.layout().last().unwrap();
        self.values[w..w + fi * fo].fill(0.0);
        self.values[b..b + fo].fill(0.0);
    }

    /// `(weights, bias)` slices of affine layer `l`.
    pub fn layer<'a>(&'a self, spec: &NetworkSpec, l: usize) -> (&'a [f64], &'a [f64]) {
        let (w, b, fi, fo) = spec.layout()[l];
        (&self.values[w..w + fi * fo], &self.values[b..b + fo])
    }
}

/// Glorot-uniform weights in `[-b, b]`, `b = sqrt(6 / (fan_in + fan_out))`;
/// zero biases.
pub fn glorot_init(spec: &NetworkSpec, seed: u64) -> NetworkParams {
    let mut rng = rng_from_seed(seed);
    let mut values = vec![0.0; spec.param_count()];
    for (w, _, fi, fo) in spec.layout() {
        let bound = crate::math::sqrt(6.0 / (fi + fo) as f64);
        for v in &mut values[w..w + fi * fo] {
            *v = rng.gen_range(-bound..=bound);
        }
    }
    NetworkParams { values }
}
