use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::nn::{RecurrentEncoder, RecurrentEncoderParams};
use crate::scalar::Dual;

/// Recurrent classifier of (masked) state sequences; `Q = σ(logit)` is the
/// probability that a sequence came from the demonstrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    pub encoder: RecurrentEncoder,
    pub params: RecurrentEncoderParams,
}

impl Discriminator {
    pub fn new(input_dim: usize, hidden: usize, seed: u64) -> Result<Self> {
        let encoder = RecurrentEncoder::new(input_dim, hidden)?;
        let params = encoder.init(seed);
        Ok(Self { encoder, params })
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count()
    }

    pub fn logit(&self, seq: &[Vec<f64>]) -> Result<f64> {
        self.encoder.encode(&self.params, seq)
    }

    pub fn classify(&self, seq: &[Vec<f64>]) -> Result<f64> {
        Ok(math::sigmoid(self.logit(seq)?))
    }

    /// Logit and `upstream · ∂logit/∂x_t` for every step.
    pub fn input_grad(&self, seq: &[Vec<f64>], upstream: f64) -> Result<(f64, Vec<Vec<f64>>)> {
        let tr = self.encoder.trace(&self.params, seq)?;
        let mut scratch = vec![0.0; self.param_count()];
        let dx = self.encoder.backward(&self.params, &tr, upstream, &mut scratch)?;
        Ok((tr.logit, dx))
    }
}

/// Value, parameter gradient and diagnostics of the discriminator objective.
#[derive(Debug, Clone)]
pub struct DiscLoss {
    pub loss: f64,
    pub grad: Vec<f64>,
    /// Fraction of the batch classified correctly at threshold 0.5.
    pub accuracy: f64,
    /// Mean squared input-gradient norm on real samples (before weighting).
    pub r1: f64,
}

/// `mean softplus(−ℓ_real) + mean softplus(ℓ_fake) + (λ/2) mean_real ‖∇_x ℓ‖²`,
/// i.e. the logistic cross-entropy computed in logit space plus an R1
/// penalty on demonstrations.
pub fn discriminator_loss(
    disc: &Discriminator,
    real: &[Vec<Vec<f64>>],
    fake: &[Vec<Vec<f64>>],
    r1_lambda: f64,
) -> Result<DiscLoss> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::EmptyData("discriminator batch"));
    }
    let enc = &disc.encoder;
    let np = enc.param_count();
    let mut grad = vec![0.0; np];
    let mut scratch = vec![0.0; np];
    let (nr, nf) = (real.len() as f64, fake.len() as f64);
    let (mut loss, mut r1, mut correct) = (0.0, 0.0, 0usize);
    for seq in real {
        let tr = enc.trace(&disc.params, seq)?;
        let l = tr.logit;
        loss += math::softplus(-l) / nr;
        correct += (l > 0.0) as usize;
        scratch.iter_mut().for_each(|v| *v = 0.0);
        let dx = enc.backward(&disc.params, &tr, 1.0, &mut scratch)?;
        let coef = -math::sigmoid(-l) / nr;
        for (g, s) in grad.iter_mut().zip(&scratch) {
            *g += coef * s;
        }
        let norm2: f64 = dx.iter().flatten().map(|v| v * v).sum();
        r1 += norm2 / nr;
        if r1_lambda > 0.0 && norm2 > 0.0 {
            // ∇_Φ ½‖∇_x ℓ‖² as the x-directional derivative of ∇_Φ ℓ along ∇_x ℓ.
            let dual_seq: Vec<Vec<Dual>> = seq
                .iter()
                .zip(&dx)
                .map(|(x, d)| x.iter().zip(d).map(|(a, b)| Dual::new(*a, *b)).collect())
                .collect();
            let dtr = enc.trace(&disc.params, &dual_seq)?;
            let mut pg = vec![Dual::new(0.0, 0.0); np];
            enc.backward(&disc.params, &dtr, Dual::new(1.0, 0.0), &mut pg)?;
            let w = r1_lambda / nr;
            for (g, p) in grad.iter_mut().zip(&pg) {
                *g += w * p.du;
            }
        }
    }
    for seq in fake {
        let tr = enc.trace(&disc.params, seq)?;
        let l = tr.logit;
        loss += math::softplus(l) / nf;
        correct += (l < 0.0) as usize;
        scratch.iter_mut().for_each(|v| *v = 0.0);
        enc.backward(&disc.params, &tr, 1.0, &mut scratch)?;
        let coef = math::sigmoid(l) / nf;
        for (g, s) in grad.iter_mut().zip(&scratch) {
            *g += coef * s;
        }
    }
    Ok(DiscLoss {
        loss: loss + 0.5 * r1_lambda * r1,
        grad,
        accuracy: correct as f64 / (real.len() + fake.len()) as f64,
        r1,
    })
}

/// Per-sample generator objective `log(1 − Q) = −softplus(ℓ)` scaled by
/// `weight`, with its gradient for each step of `seq`.
pub fn generator_objective(disc: &Discriminator, seq: &[Vec<f64>], weight: f64) -> Result<(f64, Vec<Vec<f64>>)> {
    let l = disc.logit(seq)?;
    let (_, dx) = disc.input_grad(seq, -math::sigmoid(l) * weight)?;
    Ok((-math::softplus(l) * weight, dx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::AdamConfig;
    use crate::nn::AdamState;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    fn constant_disc(bias: f64) -> Discriminator {
        let mut d = Discriminator::new(2, 8, 1).unwrap();
        d.params.values.iter_mut().for_each(|v| *v = 0.0);
        *d.params.values.last_mut().unwrap() = bias;
        d
    }

    fn batch(rng: &mut crate::rng::Rng, n: usize, offset: f64) -> Vec<Vec<Vec<f64>>> {
        (0..n)
            .map(|_| {
                (0..6)
                    .map(|_| vec![offset + rng.gen_range(-0.3..0.3), rng.gen_range(-1.0..1.0)])
                    .collect()
            })
            .collect()
    }

    #[test]
    fn half_probability_costs_two_ln_two() {
        let d = constant_disc(0.0);
        let mut rng = rng_from_seed(0);
        let (r, f) = (batch(&mut rng, 5, 1.0), batch(&mut rng, 7, -1.0));
        let out = discriminator_loss(&d, &r, &f, 5.0).unwrap();
        assert!((out.loss - 2.0 * core::f64::consts::LN_2).abs() < 1e-9);
        assert_eq!(out.r1, 0.0);
        let (g, dx) = generator_objective(&d, &f[0], 1.0).unwrap();
        assert!((g + core::f64::consts::LN_2).abs() < 1e-12);
        assert!(dx.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let d = Discriminator::new(2, 6, 3).unwrap();
        let mut rng = rng_from_seed(1);
        let (r, f) = (batch(&mut rng, 3, 0.5), batch(&mut rng, 3, -0.5));
        let out = discriminator_loss(&d, &r, &f, 2.0).unwrap();
        let h = 1e-6;
        for idx in (0..d.param_count()).step_by(5) {
            let (mut a, mut b) = (d.clone(), d.clone());
            a.params.values[idx] += h;
            b.params.values[idx] -= h;
            let fd = (discriminator_loss(&a, &r, &f, 2.0).unwrap().loss - discriminator_loss(&b, &r, &f, 2.0).unwrap().loss)
                / (2.0 * h);
            assert!((out.grad[idx] - fd).abs() < 1e-7 + 1e-4 * fd.abs(), "param {idx}: {} vs {fd}", out.grad[idx]);
        }
    }

    #[test]
    fn learns_to_separate_fixed_sets() {
        let mut d = Discriminator::new(2, 16, 4).unwrap();
        let mut rng = rng_from_seed(2);
        let (r, f) = (batch(&mut rng, 16, 1.0), batch(&mut rng, 16, -1.0));
        let mut adam = AdamState::new(AdamConfig::default(), d.param_count());
        for _ in 0..500 {
            let out = discriminator_loss(&d, &r, &f, 0.0).unwrap();
            adam.update(&mut d.params.values, &out.grad).unwrap();
        }
        let acc = discriminator_loss(&d, &r, &f, 0.0).unwrap().accuracy;
        assert!(acc >= 0.99, "{acc}");
    }

    #[test]
    fn accuracy_does_not_drop_on_frozen_generator() {
        let mut d = Discriminator::new(2, 16, 5).unwrap();
        let mut rng = rng_from_seed(3);
        let (r, f) = (batch(&mut rng, 32, 0.3), batch(&mut rng, 32, -0.3));
        let mut adam = AdamState::new(AdamConfig::default().with_learning_rate(1e-3), d.param_count());
        let first = discriminator_loss(&d, &r, &f, 5.0).unwrap().accuracy;
        for _ in 0..20 {
            let out = discriminator_loss(&d, &r, &f, 5.0).unwrap();
            adam.update(&mut d.params.values, &out.grad).unwrap();
        }
        let last = discriminator_loss(&d, &r, &f, 5.0).unwrap().accuracy;
        assert!(last >= first, "{first} -> {last}");
    }

    #[test]
    fn empty_batches_rejected() {
        let d = constant_disc(0.0);
        assert!(discriminator_loss(&d, &[], &[vec![vec![0.0, 0.0]]], 1.0).is_err());
    }
}
