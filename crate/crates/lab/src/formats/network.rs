use ganmpc::nn::{NetworkParams, NetworkSpec, RecurrentEncoder, RecurrentEncoderParams};
use serde::{Deserialize, Serialize};

use super::{decode_all, encode_all};
use crate::error::{LabError, Result};

pub const NETWORK_FORMAT: &str = "ganmpc-network";
pub const RECURRENT_FORMAT: &str = "ganmpc-recurrent";
pub const NETWORK_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDoc {
    /// `fan_out` rows of `fan_in` entries.
    pub weights: Vec<Vec<String>>,
    pub bias: Vec<String>,
}

/// A dense network: its spec plus one row-major weight matrix and bias
/// vector per affine layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDoc {
    pub format: String,
    pub version: u32,
    pub spec: NetworkSpec,
    pub layers: Vec<LayerDoc>,
}

fn rows(values: &[f64], cols: usize) -> Vec<Vec<String>> {
    values.chunks(cols).map(encode_all).collect()
}

fn check_header(format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        return Err(LabError::Format(format!("expected a `{expected}` document, found `{format}`")));
    }
    if version != NETWORK_VERSION {
        return Err(LabError::Format(format!("unsupported {expected} version {version}")));
    }
    Ok(())
}

impl NetworkDoc {
    pub fn new(spec: &NetworkSpec, params: &NetworkParams) -> Result<Self> {
        spec.check_params(params)?;
        let layers = (0..spec.depth())
            .map(|l| {
                let (w, b) = params.layer(spec, l);
                LayerDoc {
                    weights: rows(w, spec.layer_sizes()[l]),
                    bias: encode_all(b),
                }
            })
            .collect();
        Ok(Self {
            format: NETWORK_FORMAT.into(),
            version: NETWORK_VERSION,
            spec: spec.clone(),
            layers,
        })
    }

    pub fn params(&self) -> Result<NetworkParams> {
        check_header(&self.format, self.version, NETWORK_FORMAT)?;
        let spec = &self.spec;
        if self.layers.len() != spec.depth() {
            return Err(LabError::Format(format!(
                "network has {} layers, spec expects {}",
                self.layers.len(),
                spec.depth()
            )));
        }
        let mut values = Vec::with_capacity(spec.param_count());
        for (l, layer) in self.layers.iter().enumerate() {
            let (fi, fo) = (spec.layer_sizes()[l], spec.layer_sizes()[l + 1]);
            if layer.weights.len() != fo || layer.weights.iter().any(|r| r.len() != fi) || layer.bias.len() != fo {
                return Err(LabError::Format(format!("layer {l} is not {fo}×{fi} with {fo} biases")));
            }
            for row in &layer.weights {
                values.extend(decode_all(row)?);
            }
            values.extend(decode_all(&layer.bias)?);
        }
        Ok(NetworkParams::from_vec(values))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDoc {
    /// `hidden × input`.
    pub w: Vec<Vec<String>>,
    /// `hidden × hidden`.
    pub u: Vec<Vec<String>>,
    pub b: Vec<String>,
}

/// The gated recurrent encoder: update, reset and candidate gates plus a
/// scalar read-out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentDoc {
    pub format: String,
    pub version: u32,
    pub input_dim: usize,
    pub hidden: usize,
    pub update: GateDoc,
    pub reset: GateDoc,
    pub candidate: GateDoc,
    pub readout_weights: Vec<String>,
    pub readout_bias: String,
}

impl RecurrentDoc {
    pub fn new(encoder: &RecurrentEncoder, params: &RecurrentEncoderParams) -> Result<Self> {
        let (i, h) = (encoder.input_dim, encoder.hidden);
        if params.values.len() != encoder.param_count() {
            return Err(LabError::Format("recurrent parameter count does not match its shape".into()));
        }
        let v = &params.values;
        let u0 = 3 * h * i;
        let b0 = u0 + 3 * h * h;
        let gate = |g: usize| GateDoc {
            w: rows(&v[g * h * i..(g + 1) * h * i], i),
            u: rows(&v[u0 + g * h * h..u0 + (g + 1) * h * h], h),
            b: encode_all(&v[b0 + g * h..b0 + (g + 1) * h]),
        };
        Ok(Self {
            format: RECURRENT_FORMAT.into(),
            version: NETWORK_VERSION,
            input_dim: i,
            hidden: h,
            update: gate(0),
            reset: gate(1),
            candidate: gate(2),
            readout_weights: encode_all(&v[b0 + 3 * h..b0 + 4 * h]),
            readout_bias: super::encode(v[b0 + 4 * h]),
        })
    }

    pub fn encoder(&self) -> Result<(RecurrentEncoder, RecurrentEncoderParams)> {
        check_header(&self.format, self.version, RECURRENT_FORMAT)?;
        let enc = RecurrentEncoder::new(self.input_dim, self.hidden)?;
        let (i, h) = (self.input_dim, self.hidden);
        let gates = [&self.update, &self.reset, &self.candidate];
        let shape_ok = |m: &Vec<Vec<String>>, r: usize, c: usize| m.len() == r && m.iter().all(|row| row.len() == c);
        if gates.iter().any(|g| !shape_ok(&g.w, h, i) || !shape_ok(&g.u, h, h) || g.b.len() != h)
            || self.readout_weights.len() != h
        {
            return Err(LabError::Format("recurrent gate shapes do not match input_dim and hidden".into()));
        }
        let mut values = Vec::with_capacity(enc.param_count());
        for g in gates {
            for row in &g.w {
                values.extend(decode_all(row)?);
            }
        }
        for g in gates {
            for row in &g.u {
                values.extend(decode_all(row)?);
            }
        }
        for g in gates {
            values.extend(decode_all(&g.b)?);
        }
        values.extend(decode_all(&self.readout_weights)?);
        values.push(super::decode(&self.readout_bias)?);
        Ok((enc, RecurrentEncoderParams { values }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ganmpc::nn::{glorot_init, Activation, OutputActivation};
    use proptest::prelude::*;

    fn spec(sizes: Vec<usize>) -> NetworkSpec {
        NetworkSpec::uniform(sizes, Activation::Tanh, OutputActivation::Softplus).unwrap()
    }

    #[test]
    fn layers_are_row_major() {
        let s = spec(vec![2, 3]);
        let p = NetworkParams::from_vec((0..9).map(f64::from).collect());
        let doc = NetworkDoc::new(&s, &p).unwrap();
        assert_eq!(doc.layers[0].weights[1], vec!["2.0", "3.0"]);
        assert_eq!(doc.layers[0].bias, vec!["6.0", "7.0", "8.0"]);
    }

    #[test]
    fn rejects_wrong_shapes_and_versions() {
        let s = spec(vec![2, 3, 1]);
        let doc = NetworkDoc::new(&s, &glorot_init(&s, 1)).unwrap();
        let mut bad = doc.clone();
        bad.layers[1].weights[0].pop();
        assert!(bad.params().is_err());
        let mut bad = doc;
        bad.version = 2;
        assert!(bad.params().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn dense_json_round_trip_is_bit_exact(
            sizes in prop::collection::vec(1usize..5, 2..5),
            seed in any::<u64>(),
            scale in -40i32..40,
        ) {
            let s = spec(sizes);
            let mut p = glorot_init(&s, seed);
            p.as_mut_slice().iter_mut().enumerate().for_each(|(k, v)| *v = (*v + k as f64 * 1e-3) * 2f64.powi(scale));
            let text = serde_json::to_string(&NetworkDoc::new(&s, &p).unwrap()).unwrap();
            let back: NetworkDoc = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(&back.spec, &s);
            let q = back.params().unwrap();
            let bits = |x: &NetworkParams| x.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&q), bits(&p));
        }

        #[test]
        fn recurrent_json_round_trip_is_bit_exact(i in 1usize..4, h in 1usize..5, seed in any::<u64>()) {
            let enc = RecurrentEncoder::new(i, h).unwrap();
            let mut p = enc.init(seed);
            p.values.iter_mut().enumerate().for_each(|(k, v)| *v += k as f64 / 7.0);
            let text = serde_json::to_string(&RecurrentDoc::new(&enc, &p).unwrap()).unwrap();
            let back: RecurrentDoc = serde_json::from_str(&text).unwrap();
            let (e2, p2) = back.encoder().unwrap();
            prop_assert_eq!(e2, enc);
            prop_assert_eq!(
                p2.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                p.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
