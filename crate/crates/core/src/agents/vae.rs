//! Linear Gaussian β-VAE with a unit-variance decoder and a standard-normal
//! prior.
//!
//! Encoder: `μ = W_μ x + b_μ`, `log σ² = W_v x + b_v`. Decoder:
//! `x̂ = W_d z + b_d`. Latents are drawn by reparameterization,
//! `z = μ + σ ⊙ ε` with `ε ~ N(0, I)`.

use serde::{Deserialize, Serialize};

use super::{AgentError, GradientVector};
use crate::rng::{self, SimRng};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Parameters are ordered `W_μ, b_μ, W_v, b_v, W_d, b_d`; weight matrices
/// are row-major with one row per output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GaussianVae {
    obs_dim: usize,
    latent_dim: usize,
    beta: f64,
    params: Vec<f64>,
}

struct Offsets {
    wm: usize,
    bm: usize,
    wv: usize,
    bv: usize,
    wd: usize,
    bd: usize,
}

impl GaussianVae {
    /// All-zero parameters: the encoder outputs the prior exactly.
    pub fn new(obs_dim: usize, latent_dim: usize, beta: f64) -> Result<Self, AgentError> {
        if obs_dim == 0 || latent_dim == 0 {
            return Err(AgentError::Config(format!("dimensions must be positive (obs {obs_dim}, latent {latent_dim})")));
        }
        if !(beta.is_finite() && beta >= 1.0) {
            return Err(AgentError::Config(format!("beta {beta} must be at least 1")));
        }
        let n = 3 * latent_dim * obs_dim + 2 * latent_dim + obs_dim;
        Ok(GaussianVae { obs_dim, latent_dim, beta, params: vec![0.0; n] })
    }

    /// Weights drawn from `N(0, scale²)`, biases zero.
    pub fn random(obs_dim: usize, latent_dim: usize, beta: f64, scale: f64, seed: u64) -> Result<Self, AgentError> {
        let mut vae = GaussianVae::new(obs_dim, latent_dim, beta)?;
        let mut r = rng::seeded(seed);
        let o = vae.offsets();
        let ld = latent_dim * obs_dim;
        for range in [o.wm..o.wm + ld, o.wv..o.wv + ld, o.wd..o.wd + ld] {
            for i in range {
                vae.params[i] = scale * rng::standard_normal(&mut r);
            }
        }
        Ok(vae)
    }

    fn offsets(&self) -> Offsets {
        let (d, l) = (self.obs_dim, self.latent_dim);
        let wm = 0;
        let bm = wm + l * d;
        let wv = bm + l;
        let bv = wv + l * d;
        let wd = bv + l;
        let bd = wd + d * l;
        Offsets { wm, bm, wv, bv, wd, bd }
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self, AgentError> {
        if !(beta.is_finite() && beta >= 1.0) {
            return Err(AgentError::Config(format!("beta {beta} must be at least 1")));
        }
        self.beta = beta;
        Ok(self)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), AgentError> {
        if params.len() != self.params.len() {
            return Err(AgentError::ShapeMismatch(format!("{} parameters, expected {}", params.len(), self.params.len())));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn check(&self, x: &[f64]) -> Result<(), AgentError> {
        if x.len() == self.obs_dim {
            Ok(())
        } else {
            Err(AgentError::ShapeMismatch(format!("observation of length {}, expected {}", x.len(), self.obs_dim)))
        }
    }

    fn affine(&self, w: usize, b: usize, rows: usize, input: &[f64]) -> Vec<f64> {
        let cols = input.len();
        (0..rows)
            .map(|i| {
                let row = &self.params[w + i * cols..w + (i + 1) * cols];
                self.params[b + i] + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>()
            })
            .collect()
    }

    /// Posterior mean and log-variance for `x`.
    pub fn encode(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), AgentError> {
        self.check(x)?;
        let o = self.offsets();
        Ok((self.affine(o.wm, o.bm, self.latent_dim, x), self.affine(o.wv, o.bv, self.latent_dim, x)))
    }

    pub fn decode(&self, z: &[f64]) -> Vec<f64> {
        let o = self.offsets();
        self.affine(o.wd, o.bd, self.obs_dim, z)
    }
}

fn kl(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu.iter().zip(logvar).map(|(m, lv)| m * m + lv.exp() - lv - 1.0).sum::<f64>()
}

/// Mean over `batch` of (Monte-Carlo log-likelihood, closed-form KL), drawing
/// `n_samples` latents per observation from one stream seeded by `seed`.
fn batch_terms(vae: &GaussianVae, batch: &[Vec<f64>], n_samples: usize, seed: u64) -> Result<(f64, f64), AgentError> {
    if n_samples == 0 {
        return Err(AgentError::Config("at least one latent sample".into()));
    }
    if batch.is_empty() {
        return Err(AgentError::Empty);
    }
    let mut r = rng::seeded(seed);
    let (mut ll, mut kl_total) = (0.0, 0.0);
    for x in batch {
        let (mu, logvar) = vae.encode(x)?;
        kl_total += kl(&mu, &logvar);
        for _ in 0..n_samples {
            let z = draw(&mut r, &mu, &logvar).0;
            let recon = vae.decode(&z);
            let sq: f64 = x.iter().zip(&recon).map(|(a, b)| (a - b) * (a - b)).sum();
            ll += (-0.5 * sq - 0.5 * vae.obs_dim as f64 * LN_2PI) / n_samples as f64;
        }
    }
    let n = batch.len() as f64;
    Ok((ll / n, kl_total / n))
}

fn draw(r: &mut SimRng, mu: &[f64], logvar: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let eps: Vec<f64> = (0..mu.len()).map(|_| rng::standard_normal(r)).collect();
    let z = mu.iter().zip(logvar).zip(&eps).map(|((m, lv), e)| m + (0.5 * lv).exp() * e).collect();
    (z, eps)
}

/// `(E_q[log p(x|z)], KL(q(z|x) ‖ N(0, I)))` for one observation.
pub fn elbo_terms(vae: &GaussianVae, x: &[f64], n_samples: usize, seed: u64) -> Result<(f64, f64), AgentError> {
    batch_terms(vae, std::slice::from_ref(&x.to_vec()), n_samples, seed)
}

/// `E_q[log p(x|z)] − β KL(q(z|x) ‖ N(0, I))`, the expectation estimated with
/// `n_samples` reparameterized draws.
pub fn elbo(vae: &GaussianVae, x: &[f64], n_samples: usize, seed: u64) -> Result<f64, AgentError> {
    let (ll, kl) = elbo_terms(vae, x, n_samples, seed)?;
    Ok(ll - vae.beta * kl)
}

/// Mean ELBO over a batch, with the same latent draws as [`vae_gradient`].
pub fn batch_elbo(vae: &GaussianVae, batch: &[Vec<f64>], n_samples: usize, seed: u64) -> Result<f64, AgentError> {
    let (ll, kl) = batch_terms(vae, batch, n_samples, seed)?;
    Ok(ll - vae.beta * kl)
}

/// Gradient of [`batch_elbo`] with respect to every parameter.
pub fn vae_gradient(vae: &GaussianVae, batch: &[Vec<f64>], n_samples: usize, seed: u64) -> Result<GradientVector, AgentError> {
    if n_samples == 0 {
        return Err(AgentError::Config("at least one latent sample".into()));
    }
    if batch.is_empty() {
        return Err(AgentError::Empty);
    }
    let (d, l) = (vae.obs_dim, vae.latent_dim);
    let o = vae.offsets();
    let mut g = vec![0.0; vae.params.len()];
    let mut r = rng::seeded(seed);
    let inv_k = 1.0 / n_samples as f64;
    for x in batch {
        let (mu, logvar) = vae.encode(x)?;
        let sigma: Vec<f64> = logvar.iter().map(|lv| (0.5 * lv).exp()).collect();
        // KL part, exact
        let mut d_mu: Vec<f64> = mu.iter().map(|m| -vae.beta * m).collect();
        let mut d_lv: Vec<f64> = sigma.iter().map(|s| -0.5 * vae.beta * (s * s - 1.0)).collect();
        for _ in 0..n_samples {
            let (z, eps) = draw(&mut r, &mu, &logvar);
            let recon = vae.decode(&z);
            let resid: Vec<f64> = x.iter().zip(&recon).map(|(a, b)| a - b).collect();
            for i in 0..d {
                g[o.bd + i] += inv_k * resid[i];
                for k in 0..l {
                    g[o.wd + i * l + k] += inv_k * resid[i] * z[k];
                }
            }
            for k in 0..l {
                // ∂ log p / ∂ z_k = Σ_i W_d[i][k] r_i
                let dz: f64 = (0..d).map(|i| vae.params[o.wd + i * l + k] * resid[i]).sum();
                d_mu[k] += inv_k * dz;
                d_lv[k] += inv_k * dz * eps[k] * 0.5 * sigma[k];
            }
        }
        for k in 0..l {
            g[o.bm + k] += d_mu[k];
            g[o.bv + k] += d_lv[k];
            for j in 0..d {
                g[o.wm + k * d + j] += d_mu[k] * x[j];
                g[o.wv + k * d + j] += d_lv[k] * x[j];
            }
        }
    }
    let n = batch.len() as f64;
    g.iter_mut().for_each(|v| *v /= n);
    Ok(GradientVector(g))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct VaeConfig {
    pub latent_dim: usize,
    pub beta: f64,
    pub steps: usize,
    pub step_size: f64,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    /// Minibatch size; 0 uses the full dataset each step.
    #[serde(default)]
    pub batch_size: usize,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_samples() -> usize {
    1
}

fn default_init_scale() -> f64 {
    0.1
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            latent_dim: 4,
            beta: 4.0,
            steps: 2000,
            step_size: 0.001,
            n_samples: 1,
            batch_size: 0,
            init_scale: 0.1,
            seed: 0,
        }
    }
}

/// Fixed-step gradient ascent on the mean ELBO. Returns the model and a
/// 64-sample ELBO estimate over the whole dataset.
pub fn train_encoder(dataset: &[Vec<f64>], config: &VaeConfig) -> Result<(GaussianVae, f64), AgentError> {
    if dataset.is_empty() {
        return Err(AgentError::Empty);
    }
    if !(config.step_size.is_finite() && config.step_size > 0.0) {
        return Err(AgentError::Config(format!("step size {}", config.step_size)));
    }
    let mut vae = GaussianVae::random(dataset[0].len(), config.latent_dim, config.beta, config.init_scale, config.seed)?;
    let mut picker = rng::seeded(rng::derive_seed(config.seed, 1));
    let mut batch = Vec::new();
    for step in 0..config.steps {
        let data: &[Vec<f64>] = if config.batch_size == 0 || config.batch_size >= dataset.len() {
            dataset
        } else {
            batch.clear();
            batch.extend((0..config.batch_size).map(|_| dataset[rng::below(&mut picker, dataset.len())].clone()));
            &batch
        };
        let g = vae_gradient(&vae, data, config.n_samples, rng::derive_seed(config.seed, 2 + step as u64))?;
        for (p, gi) in vae.params.iter_mut().zip(g.as_slice()) {
            *p += config.step_size * gi;
        }
    }
    let final_elbo = batch_elbo(&vae, dataset, 64, rng::derive_seed(config.seed, 0))?;
    Ok((vae, final_elbo))
}
