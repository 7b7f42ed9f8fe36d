//! Noise predictors used by the sampler.
//!
//! Every denoiser predicts the noise ε in `x_t = √ᾱ_t·x0 + √(1−ᾱ_t)·ε`. Calls
//! are batched: position `i` of the batch belongs to view `i` of the current
//! view set, so analytic denoisers keep one target per view.

pub mod protocol;
pub mod remote;

use crate::error::{Error, Result};
use crate::range_image::{check_dims, DenseImage, RangeImage, CHANNELS};
use crate::schedule::NoiseSchedule;

pub use remote::{Endpoint, RemoteDenoiser};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenoiserDescriptor {
    pub name: String,
    pub channels: usize,
    pub accepts_batch: bool,
    pub concurrent_safe: bool,
    pub expected_h: usize,
    pub expected_w: usize,
}

pub trait Denoiser: Send + Sync {
    fn descriptor(&self) -> DenoiserDescriptor;

    /// Noise predictions for a batch at step `t`.
    fn predict(&self, t: usize, batch: &[DenseImage]) -> Result<Vec<DenseImage>>;
}

/// Predicts the noise that would turn `target_x0` into `x_t`.
pub fn oracle_denoise(
    x_t: &DenseImage,
    t: usize,
    schedule: &NoiseSchedule,
    target_x0: &DenseImage,
) -> Result<DenseImage> {
    check_dims(x_t.dims(), target_x0.dims())?;
    let ab = schedule.alpha_bar(t);
    if ab >= 1.0 {
        return Err(Error::invalid("oracle undefined at alpha_bar == 1"));
    }
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    let data = x_t
        .data()
        .iter()
        .zip(target_x0.data())
        .map(|(&x, &x0)| ((x as f64 - a * x0 as f64) / b) as f32)
        .collect();
    DenseImage::from_vec(x_t.height(), x_t.width(), data)
}

pub fn zero_denoise(x_t: &DenseImage) -> DenseImage {
    DenseImage::zeros(x_t.height(), x_t.width())
}

fn check_batch(batch_len: usize, available: usize) -> Result<()> {
    if batch_len > available {
        return Err(Error::ShapeMismatch(format!(
            "batch of {batch_len} but only {available} targets"
        )));
    }
    Ok(())
}

/// Analytic denoiser that knows the clean image of every view.
#[derive(Debug, Clone)]
pub struct OracleDenoiser {
    schedule: NoiseSchedule,
    targets: Vec<DenseImage>,
}

impl OracleDenoiser {
    pub fn new(schedule: NoiseSchedule, targets: Vec<DenseImage>) -> Self {
        Self { schedule, targets }
    }

    pub fn targets(&self) -> &[DenseImage] {
        &self.targets
    }
}

impl Denoiser for OracleDenoiser {
    fn descriptor(&self) -> DenoiserDescriptor {
        let (h, w) = self.targets.first().map(DenseImage::dims).unwrap_or((0, 0));
        DenoiserDescriptor {
            name: "oracle".into(),
            channels: CHANNELS,
            accepts_batch: true,
            concurrent_safe: true,
            expected_h: h,
            expected_w: w,
        }
    }

    fn predict(&self, t: usize, batch: &[DenseImage]) -> Result<Vec<DenseImage>> {
        check_batch(batch.len(), self.targets.len())?;
        batch
            .iter()
            .zip(&self.targets)
            .map(|(x, target)| oracle_denoise(x, t, &self.schedule, target))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDenoiser {
    pub h: usize,
    pub w: usize,
}

impl Denoiser for ZeroDenoiser {
    fn descriptor(&self) -> DenoiserDescriptor {
        DenoiserDescriptor {
            name: "zero".into(),
            channels: CHANNELS,
            accepts_batch: true,
            concurrent_safe: true,
            expected_h: self.h,
            expected_w: self.w,
        }
    }

    fn predict(&self, _t: usize, batch: &[DenseImage]) -> Result<Vec<DenseImage>> {
        Ok(batch.iter().map(zero_denoise).collect())
    }
}

/// Per-pixel independent Gaussian prior over the clean image of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelPrior {
    pub mean: DenseImage,
    /// Standard deviation per element, same layout as `mean`.
    pub std: Vec<f32>,
}

impl PixelPrior {
    /// Exact knowledge of `x0`; the posterior-mean denoiser then equals the oracle.
    pub fn exact(x0: DenseImage) -> Self {
        let n = x0.data().len();
        Self {
            mean: x0,
            std: vec![0.0; n],
        }
    }

    /// Empirical prior from what a view can see: known pixels are exact, unknown pixels
    /// get the per-row mean and spread of that row's known values (global statistics for
    /// rows with nothing known).
    pub fn from_condition(condition: &RangeImage, mask: &[bool]) -> Result<Self> {
        let (h, w) = condition.dims();
        if mask.len() != h * w {
            return Err(Error::LengthMismatch {
                what: "condition mask",
                left: mask.len(),
                right: h * w,
            });
        }
        let known = |i: usize| mask[i] && condition.valid()[i];
        let stats = |pixels: &mut dyn Iterator<Item = usize>| -> Option<[(f64, f64); 2]> {
            let mut n = 0.0;
            let mut sum = [0.0; 2];
            let mut sq = [0.0; 2];
            for i in pixels {
                let v = [condition.depth()[i] as f64, condition.remission()[i] as f64];
                for c in 0..2 {
                    sum[c] += v[c];
                    sq[c] += v[c] * v[c];
                }
                n += 1.0;
            }
            (n > 0.0).then(|| {
                [0, 1].map(|c| {
                    let mean = sum[c] / n;
                    (mean, (sq[c] / n - mean * mean).max(0.0).sqrt())
                })
            })
        };
        let global = stats(&mut (0..h * w).filter(|&i| known(i))).ok_or(Error::Empty("condition has no known pixels"))?;

        let mut mean = DenseImage::zeros(h, w);
        let mut std = vec![0.0f32; h * w * CHANNELS];
        for v in 0..h {
            let row = stats(&mut (v * w..(v + 1) * w).filter(|&i| known(i))).unwrap_or(global);
            for i in v * w..(v + 1) * w {
                if known(i) {
                    mean.set_pixel(i, [condition.depth()[i], condition.remission()[i]]);
                } else {
                    mean.set_pixel(i, [row[0].0 as f32, row[1].0 as f32]);
                    // floor keeps the posterior from collapsing onto the row mean
                    std[i * CHANNELS] = row[0].1.max(0.05) as f32;
                    std[i * CHANNELS + 1] = row[1].1.max(0.05) as f32;
                }
            }
        }
        Ok(Self { mean, std })
    }
}

/// Minimum mean squared error denoiser under a [`PixelPrior`] per view.
///
/// `E[x0 | x_t] = μ + √ᾱ·s²/(ᾱ·s² + 1 − ᾱ)·(x_t − √ᾱ·μ)`; the predicted noise is
/// the residual of that estimate. With `s = 0` it reduces to [`oracle_denoise`].
#[derive(Debug, Clone)]
pub struct PosteriorMeanDenoiser {
    schedule: NoiseSchedule,
    priors: Vec<PixelPrior>,
}

impl PosteriorMeanDenoiser {
    pub fn new(schedule: NoiseSchedule, priors: Vec<PixelPrior>) -> Self {
        Self { schedule, priors }
    }
}

impl Denoiser for PosteriorMeanDenoiser {
    fn descriptor(&self) -> DenoiserDescriptor {
        let (h, w) = self.priors.first().map(|p| p.mean.dims()).unwrap_or((0, 0));
        DenoiserDescriptor {
            name: "posterior-mean".into(),
            channels: CHANNELS,
            accepts_batch: true,
            concurrent_safe: true,
            expected_h: h,
            expected_w: w,
        }
    }

    fn predict(&self, t: usize, batch: &[DenseImage]) -> Result<Vec<DenseImage>> {
        check_batch(batch.len(), self.priors.len())?;
        let ab = self.schedule.alpha_bar(t);
        if ab >= 1.0 {
            return Err(Error::invalid("denoiser undefined at alpha_bar == 1"));
        }
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        batch
            .iter()
            .zip(&self.priors)
            .map(|(x, prior)| {
                check_dims(x.dims(), prior.mean.dims())?;
                let data = x
                    .data()
                    .iter()
                    .zip(prior.mean.data())
                    .zip(&prior.std)
                    .map(|((&xt, &mu), &s)| {
                        let (xt, mu, s2) = (xt as f64, mu as f64, (s as f64) * (s as f64));
                        let gain = a * s2 / (ab * s2 + 1.0 - ab);
                        let x0 = mu + gain * (xt - a * mu);
                        ((xt - a * x0) / b) as f32
                    })
                    .collect();
                DenseImage::from_vec(x.height(), x.width(), data)
            })
            .collect()
    }
}

/// Wraps a score-predicting model: `ε = −√(1−ᾱ_t)·score`.
pub struct ScoreAdapter<D> {
    pub inner: D,
    pub schedule: NoiseSchedule,
}

impl<D: Denoiser> Denoiser for ScoreAdapter<D> {
    fn descriptor(&self) -> DenoiserDescriptor {
        let mut d = self.inner.descriptor();
        d.name = format!("score:{}", d.name);
        d
    }

    fn predict(&self, t: usize, batch: &[DenseImage]) -> Result<Vec<DenseImage>> {
        let scale = (1.0 - self.schedule.alpha_bar(t)).sqrt();
        let mut out = self.inner.predict(t, batch)?;
        for img in &mut out {
            for v in img.data_mut() {
                *v = (-(*v as f64) * scale) as f32;
            }
        }
        Ok(out)
    }
}

impl<T: Denoiser + ?Sized> Denoiser for Box<T> {
    fn descriptor(&self) -> DenoiserDescriptor {
        (**self).descriptor()
    }

    fn predict(&self, t: usize, batch: &[DenseImage]) -> Result<Vec<DenseImage>> {
        (**self).predict(t, batch)
    }
}
