//! Variance schedules and the forward (noising) process.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::range_image::DenseImage;

/// Discrete DDPM schedule indexed by `t = 1..=T`; `alpha_bar(0) == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn from_betas(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        if let Some(b) = beta.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::invalid(format!("beta {b} outside (0, 1)")));
        }
        let mut alpha_bar = Vec::with_capacity(beta.len());
        let mut acc = 1.0;
        for b in &beta {
            acc *= 1.0 - b;
            alpha_bar.push(acc);
        }
        Ok(Self { beta, alpha_bar })
    }

    /// Betas linear in `t` from `beta_start` to `beta_end`.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::invalid(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start}..{beta_end}"
            )));
        }
        let beta = if steps == 1 {
            vec![beta_start]
        } else {
            (0..steps)
                .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64)
                .collect()
        };
        Self::from_betas(beta)
    }

    /// The 1000-step 1e-4..0.02 linear schedule, rescaled by `1000/steps` for shorter chains
    /// (end value capped below 1).
    pub fn linear_for_steps(steps: usize) -> Result<Self> {
        let scale = 1000.0 / steps.max(1) as f64;
        let start = (scale * 1e-4).min(0.5);
        let end = (scale * 0.02).min(0.999).max(start);
        Self::linear(steps, start, end)
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.beta[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    /// Ancestral sampling noise scale, `√β_t`.
    pub fn sigma(&self, t: usize) -> f64 {
        self.beta(t).sqrt()
    }

    /// Whether the chain starts close to pure noise and ends close to the data.
    pub fn is_well_conditioned(&self) -> bool {
        self.alpha_bar(self.steps()) <= 0.01 && self.alpha_bar(1) >= 0.99
    }
}

pub fn standard_normal_image<R: Rng + ?Sized>(h: usize, w: usize, rng: &mut R) -> DenseImage {
    let mut img = DenseImage::zeros(h, w);
    for v in img.data_mut() {
        *v = rng.sample::<f64, _>(StandardNormal) as f32;
    }
    img
}

/// `√ᾱ_t·x0 + √(1−ᾱ_t)·z` for a given noise image.
pub fn forward_noise_with(x0: &DenseImage, t: usize, schedule: &NoiseSchedule, z: &DenseImage) -> DenseImage {
    debug_assert_eq!(x0.dims(), z.dims());
    let ab = schedule.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    let data = x0
        .data()
        .iter()
        .zip(z.data())
        .map(|(&x, &n)| (a * x as f64 + b * n as f64) as f32)
        .collect();
    DenseImage::from_vec(x0.height(), x0.width(), data).expect("same shape")
}

/// Samples `q(x_t | x0)`, drawing one standard normal per element from `rng`.
pub fn forward_noise<R: Rng + ?Sized>(
    x0: &DenseImage,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<DenseImage> {
    if t == 0 || t > schedule.steps() {
        return Err(Error::invalid(format!("step {t} outside 1..={}", schedule.steps())));
    }
    let z = standard_normal_image(x0.height(), x0.width(), rng);
    Ok(forward_noise_with(x0, t, schedule, &z))
}
