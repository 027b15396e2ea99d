//! Allocation-light `f64` evaluation of a [`NetworkSpec`].
//!
//! Forward passes accumulate each unit as `b + Σ_j x_j w_j` in ascending `j`,
//! exactly like the generic path, so results are bit-identical to
//! [`NetworkSpec::forward`] on `f64`. Weights are kept transposed so the
//! inner loops run over contiguous memory.

use alloc::vec;
use alloc::vec::Vec;

use super::mlp::{NetworkParams, NetworkSpec};
use crate::error::{check_len, Result};

#[derive(Debug, Clone)]
struct Layer {
    w: usize,
    b: usize,
    fan_in: usize,
    fan_out: usize,
}

/// A network with its parameters, ready for fast evaluation.
#[derive(Debug, Clone)]
pub struct DenseNet {
    spec: NetworkSpec,
    params: NetworkParams,
    layers: Vec<Layer>,
    /// Per layer, `fan_in × fan_out` transposed weights.
    wt: Vec<Vec<f64>>,
}

/// Pre-activations and activations of one forward pass.
#[derive(Debug, Clone, Default)]
pub struct DenseTrace {
    pub pres: Vec<Vec<f64>>,
    pub acts: Vec<Vec<f64>>,
}

impl DenseTrace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

impl DenseNet {
    pub fn new(spec: NetworkSpec, params: NetworkParams) -> Result<Self> {
        spec.check_params(&params)?;
        let layers = spec
            .layout()
            .into_iter()
            .map(|(w, b, fan_in, fan_out)| Layer {
                w,
                b,
                fan_in,
                fan_out,
            })
            .collect();
        let mut net = Self {
            spec,
            params,
            layers,
            wt: Vec::new(),
        };
        net.refresh();
        Ok(net)
    }

    fn refresh(&mut self) {
        let p = self.params.as_slice();
        self.wt = self
            .layers
            .iter()
            .map(|l| {
                let mut t = vec![0.0; l.fan_in * l.fan_out];
                for i in 0..l.fan_out {
                    for j in 0..l.fan_in {
                        t[j * l.fan_out + i] = p[l.w + i * l.fan_in + j];
                    }
                }
                t
            })
            .collect();
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn set_params(&mut self, params: NetworkParams) -> Result<()> {
        self.spec.check_params(&params)?;
        self.params = params;
        self.refresh();
        Ok(())
    }

    /// Applies `f` to the parameters and refreshes the cached layout.
    pub fn update_params<T>(&mut self, f: impl FnOnce(&mut [f64]) -> T) -> T {
        let out = f(self.params.as_mut_slice());
        self.refresh();
        out
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    fn affine(&self, l: usize, x: &[f64], z: &mut Vec<f64>) {
        let layer = &self.layers[l];
        let p = self.params.as_slice();
        z.clear();
        z.extend_from_slice(&p[layer.b..layer.b + layer.fan_out]);
        let wt = &self.wt[l];
        for (j, &xj) in x.iter().enumerate() {
            let col = &wt[j * layer.fan_out..(j + 1) * layer.fan_out];
            for (zi, wi) in z.iter_mut().zip(col) {
                *zi += xj * *wi;
            }
        }
    }

    fn activate(&self, l: usize, z: &[f64], a: &mut Vec<f64>) {
        a.clear();
        if l + 1 == self.layers.len() {
            let act = self.spec.output_activation();
            a.extend(z.iter().map(|&v| act.apply(v)));
        } else {
            let act = self.spec.activation_of(l).unwrap();
            a.extend(z.iter().map(|&v| act.apply(v)));
        }
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.input_dim());
        let mut x = input.to_vec();
        let mut z = Vec::new();
        for l in 0..self.layers.len() {
            self.affine(l, &x, &mut z);
            self.activate(l, &z, &mut x);
        }
        x
    }

    pub fn checked_forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_len("network input", self.input_dim(), input.len())?;
        Ok(self.forward(input))
    }

    pub fn trace(&self, input: &[f64]) -> DenseTrace {
        let n = self.layers.len();
        let mut pres = Vec::with_capacity(n);
        let mut acts = Vec::with_capacity(n + 1);
        acts.push(input.to_vec());
        for l in 0..n {
            let mut z = Vec::new();
            let mut a = Vec::new();
            self.affine(l, &acts[l], &mut z);
            self.activate(l, &z, &mut a);
            pres.push(z);
            acts.push(a);
        }
        DenseTrace { pres, acts }
    }

    fn hidden_derivative(&self, l: usize, trace: &DenseTrace, j: usize) -> f64 {
        self.spec
            .activation_of(l)
            .unwrap()
            .derivative(trace.pres[l][j], trace.acts[l + 1][j])
    }

    /// Gradient of `⟨upstream, output⟩` with respect to the input; parameter
    /// gradients are accumulated into `param_grad` when given.
    pub fn backward(
        &self,
        trace: &DenseTrace,
        upstream: &[f64],
        mut param_grad: Option<&mut [f64]>,
    ) -> Vec<f64> {
        let p = self.params.as_slice();
        let n = self.layers.len();
        let out_act = self.spec.output_activation();
        let mut delta: Vec<f64> = upstream
            .iter()
            .zip(&trace.pres[n - 1])
            .map(|(g, z)| g * out_act.derivative(*z))
            .collect();
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let x = &trace.acts[l];
            if let Some(g) = param_grad.as_deref_mut() {
                for (i, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    g[layer.b + i] += d;
                    let row = &mut g[layer.w + i * layer.fan_in..layer.w + (i + 1) * layer.fan_in];
                    for (gv, xv) in row.iter_mut().zip(x) {
                        *gv += d * xv;
                    }
                }
            }
            let mut prev = vec![0.0; layer.fan_in];
            for (i, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &p[layer.w + i * layer.fan_in..layer.w + (i + 1) * layer.fan_in];
                for (pv, wv) in prev.iter_mut().zip(row) {
                    *pv += d * wv;
                }
            }
            if l > 0 {
                for (j, pv) in prev.iter_mut().enumerate() {
                    *pv *= self.hidden_derivative(l - 1, trace, j);
                }
            }
            delta = prev;
        }
        delta
    }

    /// Output and input Jacobian (`output × input`, row-major).
    pub fn jacobian(&self, input: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let trace = self.trace(input);
        let jac = self.jacobian_from(&trace);
        (trace.acts.last().unwrap().clone(), jac)
    }

    pub fn jacobian_from(&self, trace: &DenseTrace) -> Vec<f64> {
        let p = self.params.as_slice();
        let n = self.layers.len();
        let k = self.output_dim();
        let out_act = self.spec.output_activation();
        let mut g = vec![0.0; k * k];
        for r in 0..k {
            g[r * k + r] = out_act.derivative(trace.pres[n - 1][r]);
        }
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let (fi, fo) = (layer.fan_in, layer.fan_out);
            let mut next = vec![0.0; k * fi];
            for r in 0..k {
                let nrow = &mut next[r * fi..(r + 1) * fi];
                for i in 0..fo {
                    let gi = g[r * fo + i];
                    if gi == 0.0 {
                        continue;
                    }
                    let wrow = &p[layer.w + i * fi..layer.w + (i + 1) * fi];
                    for (nv, wv) in nrow.iter_mut().zip(wrow) {
                        *nv += gi * wv;
                    }
                }
            }
            if l > 0 {
                for j in 0..fi {
                    let d = self.hidden_derivative(l - 1, trace, j);
                    for r in 0..k {
                        next[r * fi + j] *= d;
                    }
                }
            }
            g = next;
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{glorot_init, Activation, OutputActivation};
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    fn net(out: OutputActivation, act: Activation, seed: u64) -> DenseNet {
        let spec = NetworkSpec::uniform(vec![4, 9, 7, 3], act, out).unwrap();
        let mut params = glorot_init(&spec, seed);
        let mut rng = rng_from_seed(seed + 100);
        for v in params.as_mut_slice() {
            *v += rng.gen_range(-0.1..0.1);
        }
        DenseNet::new(spec, params).unwrap()
    }

    #[test]
    fn matches_generic_path_bitwise() {
        for (seed, out, act) in [
            (1, OutputActivation::Identity, Activation::Relu),
            (2, OutputActivation::Softplus, Activation::Tanh),
        ] {
            let n = net(out, act, seed);
            let x = [0.3, -1.2, 0.7, 2.0];
            let generic = n.spec().forward(n.params().as_slice(), &x).unwrap();
            assert_eq!(n.forward(&x), generic);
            let (_, gj) = n.spec().jacobian(n.params().as_slice(), &x).unwrap();
            assert_eq!(n.jacobian(&x).1, gj);
            let up = [0.5, -1.0, 2.0];
            let trace = n.trace(&x);
            let mut pg = vec![0.0; n.spec().param_count()];
            let gi = n.backward(&trace, &up, Some(&mut pg));
            let gtrace = n.spec().forward_trace(n.params().as_slice(), &x).unwrap();
            let mut gpg = vec![0.0; pg.len()];
            let ggi = n.spec().backward(n.params().as_slice(), &gtrace, &up, &mut gpg).unwrap();
            assert_eq!(gi, ggi);
            assert_eq!(pg, gpg);
        }
    }

    #[test]
    fn parameter_updates_refresh_cache() {
        let mut n = net(OutputActivation::Identity, Activation::Relu, 3);
        let x = [1.0, 2.0, 3.0, 4.0];
        let before = n.forward(&x);
        n.update_params(|p| p.iter_mut().for_each(|v| *v *= 2.0));
        assert_ne!(n.forward(&x), before);
        assert_eq!(n.forward(&x), n.spec().forward(n.params().as_slice(), &x).unwrap());
    }
}
