//! Chunked CVAE: patch-mean encoders, MLP posterior encoder, MLP decoder
//! with an action head and a completion head. Parameters live in one flat
//! buffer so the optimizer, gradient checks and checkpoints share a layout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{PolicyConfig, ACTION_DIM, KIN_DIM};
use super::loss::LossBreakdown;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Dense layer `y = W x + b` with `W` stored row-major (out × in).
#[derive(Debug, Clone, Copy, PartialEq)]
struct Linear {
    w: usize,
    b: usize,
    n_in: usize,
    n_out: usize,
}

impl Linear {
    fn forward(&self, p: &[f64], x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_in);
        let w = &p[self.w..self.w + self.n_in * self.n_out];
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &w[o * self.n_in..(o + 1) * self.n_in];
            *yo = p[self.b + o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// Accumulates parameter gradients and, if requested, writes `dL/dx`.
    fn backward(&self, p: &[f64], x: &[f64], dy: &[f64], grad: &mut [f64], dx: Option<&mut [f64]>) {
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad[self.b + o] += g;
            let row = &mut grad[self.w + o * self.n_in..self.w + (o + 1) * self.n_in];
            for (r, xi) in row.iter_mut().zip(x) {
                *r += g * xi;
            }
        }
        if let Some(dx) = dx {
            dx.fill(0.0);
            let w = &p[self.w..self.w + self.n_in * self.n_out];
            for (o, &g) in dy.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                for (d, wi) in dx.iter_mut().zip(&w[o * self.n_in..(o + 1) * self.n_in]) {
                    *d += g * wi;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layers {
    visual: Linear,
    tactile: Linear,
    kin: Linear,
    enc0: Linear,
    enc1: Linear,
    dec0: Linear,
    dec1: Linear,
    action: Linear,
    completion: Linear,
}

/// Network inputs for one sample, already normalized and pooled.
#[derive(Debug, Clone, PartialEq)]
pub struct NetInput {
    pub visual: Vec<f64>,
    pub tactile: Vec<f64>,
    pub kin: [f64; KIN_DIM],
}

/// Training targets for one chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkTarget {
    /// Normalized actions, k × 4 row-major.
    pub actions: Vec<f64>,
    pub weights: Vec<f64>,
    pub completion: Vec<f64>,
}

/// Decoder output in normalized action space.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPrediction {
    pub actions: Vec<f64>,
    pub completion: Vec<f64>,
}

/// Loss weights for one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_reg: f64,
    pub lambda_task: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub config: PolicyConfig,
    pub tensors: Vec<TensorSpec>,
    pub params: Vec<f64>,
    layers: Layers,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl PolicyNet {
    /// Zero-initialized network.
    pub fn zeros(config: &PolicyConfig) -> Result<Self> {
        config.validate()?;
        let c = config;
        let k = c.chunk;
        let mut tensors = Vec::new();
        let mut offset = 0;
        let mut linear = |name: &str, n_in: usize, n_out: usize| {
            let w = offset;
            tensors.push(TensorSpec {
                name: format!("{name}.weight"),
                shape: vec![n_out, n_in],
                offset,
            });
            offset += n_in * n_out;
            let b = offset;
            tensors.push(TensorSpec {
                name: format!("{name}.bias"),
                shape: vec![n_out],
                offset,
            });
            offset += n_out;
            Linear { w, b, n_in, n_out }
        };
        let visual = linear("visual_embed", c.visual_features(), c.visual_embed);
        let tactile = linear("tactile_embed", c.tactile_features(), c.tactile_embed);
        let kin = linear("kin_embed", KIN_DIM, c.kin_embed);
        let enc0 = linear("encoder.0", k * ACTION_DIM + c.kin_embed, c.encoder_hidden);
        let enc1 = linear("encoder.1", c.encoder_hidden, 2 * c.latent_dim);
        let dec0 = linear(
            "decoder.0",
            c.visual_embed + c.tactile_embed + c.kin_embed + c.latent_dim,
            c.decoder_hidden,
        );
        let dec1 = linear("decoder.1", c.decoder_hidden, c.decoder_hidden);
        let action = linear("action_head", c.decoder_hidden, k * ACTION_DIM);
        let completion = linear("completion_head", c.decoder_hidden, k);
        Ok(Self {
            config: config.clone(),
            tensors,
            params: vec![0.0; offset],
            layers: Layers {
                visual,
                tactile,
                kin,
                enc0,
                enc1,
                dec0,
                dec1,
                action,
                completion,
            },
        })
    }

    /// Seeded uniform ±1/√fan_in initialization of weights and biases.
    pub fn new(config: &PolicyConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in net.all_layers() {
            let bound = 1.0 / (l.n_in as f64).sqrt();
            for v in &mut net.params[l.w..l.b + l.n_out] {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    fn all_layers(&self) -> [Linear; 9] {
        let l = &self.layers;
        [l.visual, l.tactile, l.kin, l.enc0, l.enc1, l.dec0, l.dec1, l.action, l.completion]
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| &self.params[t.offset..t.offset + t.len()])
    }

    fn check_input(&self, input: &NetInput) -> Result<()> {
        if input.visual.len() != self.config.visual_features() || input.tactile.len() != self.config.tactile_features() {
            return Err(Error::ShapeMismatch(format!(
                "network expects {} visual and {} tactile features, got {} and {}",
                self.config.visual_features(),
                self.config.tactile_features(),
                input.visual.len(),
                input.tactile.len()
            )));
        }
        Ok(())
    }

    fn check_target(&self, target: &ChunkTarget) -> Result<()> {
        let k = self.config.chunk;
        if target.actions.len() != k * ACTION_DIM || target.weights.len() != k || target.completion.len() != k {
            return Err(Error::ShapeMismatch(format!("chunk target does not match chunk size {k}")));
        }
        Ok(())
    }

    fn kin_embed(&self, kin: &[f64; KIN_DIM]) -> Vec<f64> {
        let mut e = vec![0.0; self.config.kin_embed];
        self.layers.kin.forward(&self.params, kin, &mut e);
        e
    }

    /// Posterior parameters `(μ, logσ)` for a normalized action chunk.
    pub fn encode(&self, kin: &[f64; KIN_DIM], actions: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if actions.len() != self.config.chunk * ACTION_DIM {
            return Err(Error::ShapeMismatch("action chunk length".into()));
        }
        let ek = self.kin_embed(kin);
        let (_, _, out) = self.encode_inner(actions, &ek);
        let d = self.config.latent_dim;
        Ok((out[..d].to_vec(), out[d..].to_vec()))
    }

    fn encode_inner(&self, actions: &[f64], ek: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let l = &self.layers;
        let x: Vec<f64> = actions.iter().chain(ek).copied().collect();
        let mut h = vec![0.0; l.enc0.n_out];
        l.enc0.forward(&self.params, &x, &mut h);
        h.iter_mut().for_each(|v| *v = v.tanh());
        let mut out = vec![0.0; l.enc1.n_out];
        l.enc1.forward(&self.params, &h, &mut out);
        (x, h, out)
    }

    /// Decodes with latent `z`; returns the prediction and the activations needed for backprop.
    fn decode_inner(&self, input: &NetInput, ek: &[f64], z: &[f64]) -> (RawPrediction, DecodeCache) {
        let l = &self.layers;
        let p = &self.params;
        let mut ev = vec![0.0; l.visual.n_out];
        l.visual.forward(p, &input.visual, &mut ev);
        let mut et = vec![0.0; l.tactile.n_out];
        l.tactile.forward(p, &input.tactile, &mut et);
        let x: Vec<f64> = ev.iter().chain(&et).chain(ek).chain(z).copied().collect();
        let mut h0 = vec![0.0; l.dec0.n_out];
        l.dec0.forward(p, &x, &mut h0);
        h0.iter_mut().for_each(|v| *v = v.tanh());
        let mut h1 = vec![0.0; l.dec1.n_out];
        l.dec1.forward(p, &h0, &mut h1);
        h1.iter_mut().for_each(|v| *v = v.tanh());
        let mut actions = vec![0.0; l.action.n_out];
        l.action.forward(p, &h1, &mut actions);
        let mut completion = vec![0.0; l.completion.n_out];
        l.completion.forward(p, &h1, &mut completion);
        completion.iter_mut().for_each(|v| *v = sigmoid(*v));
        (RawPrediction { actions, completion }, DecodeCache { x, h0, h1 })
    }

    /// Decoder output for a given latent (`z = 0` at inference).
    pub fn decode(&self, input: &NetInput, z: &[f64]) -> Result<RawPrediction> {
        self.check_input(input)?;
        if z.len() != self.config.latent_dim {
            return Err(Error::ShapeMismatch("latent length".into()));
        }
        let ek = self.kin_embed(&input.kin);
        Ok(self.decode_inner(input, &ek, z).0)
    }

    /// Per-sample losses and their gradient, accumulated into `grad`.
    ///
    /// `eps` is the reparameterization noise; `None` uses `z = μ`.
    pub fn sample_loss(
        &self,
        input: &NetInput,
        target: &ChunkTarget,
        eps: Option<&[f64]>,
        weights: LossWeights,
        grad: Option<&mut [f64]>,
    ) -> Result<LossBreakdown> {
        self.check_input(input)?;
        self.check_target(target)?;
        let c = &self.config;
        let l = &self.layers;
        let p = &self.params;
        let k = c.chunk;
        let d = c.latent_dim;

        let ek = self.kin_embed(&input.kin);
        let (enc_x, enc_h, enc_out) = self.encode_inner(&target.actions, &ek);
        let (mu, log_sigma) = enc_out.split_at(d);
        let sigma: Vec<f64> = log_sigma.iter().map(|v| v.exp()).collect();
        let z: Vec<f64> = match eps {
            Some(e) => {
                if e.len() != d {
                    return Err(Error::ShapeMismatch("noise length".into()));
                }
                (0..d).map(|i| mu[i] + sigma[i] * e[i]).collect()
            }
            None => mu.to_vec(),
        };
        let (pred, cache) = self.decode_inner(input, &ek, &z);

        let center = super::loss::center_loss(&pred.actions, &target.actions, &target.weights)?;
        let reg = super::loss::kl_loss(mu, log_sigma);
        let task = super::loss::task_loss(&pred.completion, &target.completion)?;
        let breakdown = LossBreakdown::combine(center, reg, task, weights);

        let Some(grad) = grad else {
            return Ok(breakdown);
        };

        // Heads.
        let scale = 1.0 / (k * ACTION_DIM) as f64;
        let d_actions: Vec<f64> = (0..k * ACTION_DIM)
            .map(|i| {
                let diff = pred.actions[i] - target.actions[i];
                let s = if diff > 0.0 {
                    1.0
                } else if diff < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                s * target.weights[i / ACTION_DIM] * scale
            })
            .collect();
        let d_comp_logit: Vec<f64> = (0..k)
            .map(|j| {
                let y = pred.completion[j];
                weights.lambda_task * 2.0 * (y - target.completion[j]) / k as f64 * y * (1.0 - y)
            })
            .collect();
        let mut dh1 = vec![0.0; l.dec1.n_out];
        let mut tmp = vec![0.0; l.dec1.n_out];
        l.action.backward(p, &cache.h1, &d_actions, grad, Some(&mut dh1));
        l.completion.backward(p, &cache.h1, &d_comp_logit, grad, Some(&mut tmp));
        for (a, (b, h)) in dh1.iter_mut().zip(tmp.iter().zip(&cache.h1)) {
            *a = (*a + b) * (1.0 - h * h);
        }
        let mut dh0 = vec![0.0; l.dec0.n_out];
        l.dec1.backward(p, &cache.h0, &dh1, grad, Some(&mut dh0));
        for (a, h) in dh0.iter_mut().zip(&cache.h0) {
            *a *= 1.0 - h * h;
        }
        let mut dx = vec![0.0; l.dec0.n_in];
        l.dec0.backward(p, &cache.x, &dh0, grad, Some(&mut dx));
        let (dev, rest) = dx.split_at(l.visual.n_out);
        let (det, rest) = rest.split_at(l.tactile.n_out);
        let (dek_dec, dz) = rest.split_at(l.kin.n_out);
        l.visual.backward(p, &input.visual, dev, grad, None);
        l.tactile.backward(p, &input.tactile, det, grad, None);

        // Latent: z = μ + σ ε, plus the KL term.
        let lr = weights.lambda_reg;
        let mut d_enc_out = vec![0.0; 2 * d];
        for i in 0..d {
            d_enc_out[i] = dz[i] + lr * mu[i];
            let dz_dlogsig = eps.map_or(0.0, |e| sigma[i] * e[i]);
            d_enc_out[d + i] = dz[i] * dz_dlogsig + lr * (sigma[i] * sigma[i] - 1.0);
        }
        let mut dh_enc = vec![0.0; l.enc0.n_out];
        l.enc1.backward(p, &enc_h, &d_enc_out, grad, Some(&mut dh_enc));
        for (a, h) in dh_enc.iter_mut().zip(&enc_h) {
            *a *= 1.0 - h * h;
        }
        let mut d_enc_x = vec![0.0; l.enc0.n_in];
        l.enc0.backward(p, &enc_x, &dh_enc, grad, Some(&mut d_enc_x));
        let dek: Vec<f64> = dek_dec
            .iter()
            .zip(&d_enc_x[k * ACTION_DIM..])
            .map(|(a, b)| a + b)
            .collect();
        l.kin.backward(p, &input.kin, &dek, grad, None);
        Ok(breakdown)
    }
}

struct DecodeCache {
    x: Vec<f64>,
    h0: Vec<f64>,
    h1: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> PolicyConfig {
        PolicyConfig {
            chunk: 3,
            latent_dim: 2,
            visual_resolution: 16,
            visual_patch: 8,
            tactile_height: 8,
            tactile_width: 8,
            tactile_patch: 4,
            visual_embed: 4,
            tactile_embed: 3,
            kin_embed: 3,
            encoder_hidden: 5,
            decoder_hidden: 6,
        }
    }

    #[test]
    fn layout_is_contiguous() {
        let net = PolicyNet::new(&tiny(), 1).unwrap();
        let mut expected = 0;
        for t in &net.tensors {
            assert_eq!(t.offset, expected);
            expected += t.len();
        }
        assert_eq!(expected, net.num_params());
    }

    #[test]
    fn zero_weights_give_standard_posterior() {
        let net = PolicyNet::zeros(&tiny()).unwrap();
        let (mu, ls) = net.encode(&[0.3, -0.1, 0.2, 0.0], &[0.5; 12]).unwrap();
        assert!(mu.iter().chain(&ls).all(|&v| v == 0.0));
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let net = PolicyNet::new(&PolicyConfig::default(), 3).unwrap();
        let w = net.tensor("decoder.1.weight").unwrap();
        let bound = 1.0 / 128f64.sqrt();
        assert!(w.iter().all(|v| v.abs() <= bound));
        assert!(w.iter().any(|v| v.abs() > 0.9 * bound));
    }

    #[test]
    fn shape_errors() {
        let net = PolicyNet::new(&tiny(), 1).unwrap();
        let input = NetInput {
            visual: vec![0.0; 3],
            tactile: vec![0.0; 4],
            kin: [0.0; 4],
        };
        assert!(matches!(net.decode(&input, &[0.0; 2]), Err(Error::ShapeMismatch(_))));
    }
}
