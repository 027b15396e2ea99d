use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::rng::rng_from_seed;
use crate::scalar::Scalar;

/// Shape of a single-layer gated recurrent cell with a scalar read-out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecurrentEncoder {
    pub input_dim: usize,
    pub hidden: usize,
}

/// Flat parameters: `W_z, W_r, W_h` (`hidden × input`), `U_z, U_r, U_h`
/// (`hidden × hidden`), biases `b_z, b_r, b_h`, read-out `w_o`, `b_o`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentEncoderParams {
    pub values: Vec<f64>,
}

struct Offsets {
    w: [usize; 3],
    u: [usize; 3],
    b: [usize; 3],
    wo: usize,
    bo: usize,
}

/// Per-step activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderTrace<S> {
    xs: Vec<Vec<S>>,
    hs: Vec<Vec<S>>,
    zs: Vec<Vec<S>>,
    rs: Vec<Vec<S>>,
    cs: Vec<Vec<S>>,
    pub logit: S,
}

impl RecurrentEncoder {
    pub fn new(input_dim: usize, hidden: usize) -> Result<Self> {
        if input_dim == 0 || hidden == 0 {
            return Err(Error::InvalidArgument(
                "encoder dimensions must be positive".into(),
            ));
        }
        Ok(Self { input_dim, hidden })
    }

    pub fn param_count(&self) -> usize {
        let (i, h) = (self.input_dim, self.hidden);
        3 * h * i + 3 * h * h + 3 * h + h + 1
    }

    fn offsets(&self) -> Offsets {
        let (i, h) = (self.input_dim, self.hidden);
        let w = [0, h * i, 2 * h * i];
        let u0 = 3 * h * i;
        let u = [u0, u0 + h * h, u0 + 2 * h * h];
        let b0 = u0 + 3 * h * h;
        let b = [b0, b0 + h, b0 + 2 * h];
        Offsets {
            w,
            u,
            b,
            wo: b0 + 3 * h,
            bo: b0 + 4 * h,
        }
    }

    /// Glorot-uniform matrices and read-out, zero biases.
    pub fn init(&self, seed: u64) -> RecurrentEncoderParams {
        let mut rng = rng_from_seed(seed);
        let (i, h) = (self.input_dim, self.hidden);
        let o = self.offsets();
        let mut values = vec![0.0; self.param_count()];
        let bw = crate::math::sqrt(6.0 / (i + h) as f64);
        let bu = crate::math::sqrt(6.0 / (2 * h) as f64);
        let bo = crate::math::sqrt(6.0 / (h + 1) as f64);
        for g in 0..3 {
            for v in &mut values[o.w[g]..o.w[g] + h * i] {
                *v = rng.gen_range(-bw..=bw);
            }
            for v in &mut values[o.u[g]..o.u[g] + h * h] {
                *v = rng.gen_range(-bu..=bu);
            }
        }
        for v in &mut values[o.wo..o.wo + h] {
            *v = rng.gen_range(-bo..=bo);
        }
        RecurrentEncoderParams { values }
    }

    fn check(&self, params: &RecurrentEncoderParams, seq_len: usize) -> Result<()> {
        check_len("encoder parameters", self.param_count(), params.values.len())?;
        if seq_len == 0 {
            return Err(Error::EmptyData("state sequence"));
        }
        Ok(())
    }

    /// Scalar logit of a state sequence.
    pub fn encode<S: Scalar>(&self, params: &RecurrentEncoderParams, seq: &[Vec<S>]) -> Result<S> {
        Ok(self.trace(params, seq)?.logit)
    }

    pub fn trace<S: Scalar>(
        &self,
        params: &RecurrentEncoderParams,
        seq: &[Vec<S>],
    ) -> Result<EncoderTrace<S>> {
        self.check(params, seq.len())?;
        let p = &params.values;
        let (ni, nh) = (self.input_dim, self.hidden);
        let o = self.offsets();
        let mut h = vec![S::zero(); nh];
        let mut tr = EncoderTrace {
            xs: Vec::with_capacity(seq.len()),
            hs: Vec::with_capacity(seq.len() + 1),
            zs: Vec::with_capacity(seq.len()),
            rs: Vec::with_capacity(seq.len()),
            cs: Vec::with_capacity(seq.len()),
            logit: S::zero(),
        };
        tr.hs.push(h.clone());
        for x in seq {
            check_len("encoder input", ni, x.len())?;
            let gate = |g: usize, hv: &[S]| -> Vec<S> {
                (0..nh)
                    .map(|k| {
                        let mut acc = S::constant(p[o.b[g] + k]);
                        let wr = &p[o.w[g] + k * ni..o.w[g] + (k + 1) * ni];
                        for (wv, xv) in wr.iter().zip(x) {
                            acc += *xv * *wv;
                        }
                        let ur = &p[o.u[g] + k * nh..o.u[g] + (k + 1) * nh];
                        for (uv, hv) in ur.iter().zip(hv) {
                            acc += *hv * *uv;
                        }
                        acc
                    })
                    .collect()
            };
            let z: Vec<S> = gate(0, &h).into_iter().map(|a| a.sigmoid()).collect();
            let r: Vec<S> = gate(1, &h).into_iter().map(|a| a.sigmoid()).collect();
            let rh: Vec<S> = r.iter().zip(&h).map(|(a, b)| *a * *b).collect();
            let c: Vec<S> = gate(2, &rh).into_iter().map(|a| a.tanh()).collect();
            let next: Vec<S> = (0..nh)
                .map(|k| (S::constant(1.0) - z[k]) * h[k] + z[k] * c[k])
                .collect();
            tr.xs.push(x.clone());
            tr.zs.push(z);
            tr.rs.push(r);
            tr.cs.push(c);
            h = next;
            tr.hs.push(h.clone());
        }
        let mut logit = S::constant(p[o.bo]);
        for k in 0..nh {
            logit += h[k] * p[o.wo + k];
        }
        tr.logit = logit;
        Ok(tr)
    }

    /// Gradient of `upstream · logit`: parameter part accumulated into
    /// `param_grad`, per-step input gradients returned.
    pub fn backward<S: Scalar>(
        &self,
        params: &RecurrentEncoderParams,
        tr: &EncoderTrace<S>,
        upstream: S,
        param_grad: &mut [S],
    ) -> Result<Vec<Vec<S>>> {
        check_len("encoder gradient", self.param_count(), param_grad.len())?;
        let p = &params.values;
        let (ni, nh) = (self.input_dim, self.hidden);
        let o = self.offsets();
        let steps = tr.xs.len();
        let h_last = &tr.hs[steps];
        param_grad[o.bo] += upstream;
        let mut dh: Vec<S> = (0..nh)
            .map(|k| {
                param_grad[o.wo + k] += upstream * h_last[k];
                upstream * p[o.wo + k]
            })
            .collect();
        let mut dxs = vec![Vec::new(); steps];
        for t in (0..steps).rev() {
            let (x, h, z, r, c) = (&tr.xs[t], &tr.hs[t], &tr.zs[t], &tr.rs[t], &tr.cs[t]);
            let one = S::constant(1.0);
            let mut daz = vec![S::zero(); nh];
            let mut dah = vec![S::zero(); nh];
            let mut dh_prev = vec![S::zero(); nh];
            for k in 0..nh {
                let dz = dh[k] * (c[k] - h[k]);
                let dc = dh[k] * z[k];
                dh_prev[k] = dh[k] * (one - z[k]);
                dah[k] = dc * (one - c[k] * c[k]);
                daz[k] = dz * z[k] * (one - z[k]);
            }
            // through U_h (r ⊙ h)
            let mut drh = vec![S::zero(); nh];
            for k in 0..nh {
                let row = &p[o.u[2] + k * nh..o.u[2] + (k + 1) * nh];
                for j in 0..nh {
                    drh[j] += dah[k] * row[j];
                }
            }
            let mut dar = vec![S::zero(); nh];
            for j in 0..nh {
                dh_prev[j] += drh[j] * r[j];
                dar[j] = drh[j] * h[j] * r[j] * (one - r[j]);
            }
            let pre = [&daz, &dar, &dah];
            let mut dx = vec![S::zero(); ni];
            for g in 0..3 {
                let d = pre[g];
                for k in 0..nh {
                    let dk = d[k];
                    if dk.is_exact_zero() {
                        continue;
                    }
                    param_grad[o.b[g] + k] += dk;
                    for i in 0..ni {
                        param_grad[o.w[g] + k * ni + i] += dk * x[i];
                        dx[i] += dk * p[o.w[g] + k * ni + i];
                    }
                    let ur = o.u[g] + k * nh;
                    for j in 0..nh {
                        let hin = if g == 2 { r[j] * h[j] } else { h[j] };
                        param_grad[ur + j] += dk * hin;
                        if g < 2 {
                            dh_prev[j] += dk * p[ur + j];
                        }
                    }
                }
            }
            dxs[t] = dx;
            dh = dh_prev;
        }
        Ok(dxs)
    }
}
