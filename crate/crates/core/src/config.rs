//! Run configuration files (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::SensorModel;
use crate::sampler::SamplerConfig;
use crate::schedule::NoiseSchedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSection {
    pub height: usize,
    pub width: usize,
    pub fov_up: f64,
    pub fov_down: f64,
    pub alpha: f64,
    pub min_range: f64,
    pub max_range: f64,
}

impl Default for SensorSection {
    fn default() -> Self {
        Self {
            height: 64,
            width: 1024,
            fov_up: 3.0,
            fov_down: 25.0,
            alpha: 6.0,
            min_range: 1.0,
            max_range: 80.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub steps: usize,
    pub beta_start: Option<f64>,
    pub beta_end: Option<f64>,
    pub omega: f64,
    /// Meters; `"inf"` or `"none"` removes the limit.
    #[serde(with = "delta_serde")]
    pub delta: f64,
    pub seed: u64,
    pub stochastic: bool,
    pub final_step_noise: bool,
    pub consistency_zbuffer: bool,
    pub hard_synthetic_conditions: bool,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            steps: 50,
            beta_start: None,
            beta_end: None,
            omega: 0.1,
            delta: 5.0,
            seed: 0,
            stochastic: true,
            final_step_noise: false,
            consistency_zbuffer: true,
            hard_synthetic_conditions: true,
        }
    }
}

mod delta_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Int(i64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Int(v) => Ok(v as f64),
            Raw::Text(s) => super::parse_delta(&s).map_err(de::Error::custom),
        }
    }
}

/// Parses a δ value; `inf`, `none` and `no-limit` mean unlimited.
pub fn parse_delta(s: &str) -> Result<f64> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "none" | "no-limit" | "nolimit" => Ok(f64::INFINITY),
        other => other
            .parse::<f64>()
            .map_err(|_| Error::invalid(format!("delta '{s}' is neither a number nor 'inf'"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    pub placement: String,
    pub denoiser: String,
    /// Completion threshold in meters (not a published value).
    pub tau: f64,
    pub keep_every: usize,
    pub gap_center_deg: f64,
    pub gap_width_deg: f64,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self {
            placement: "circle:5,4".into(),
            denoiser: "oracle".into(),
            tau: 0.2,
            keep_every: 4,
            gap_center_deg: -72.0,
            gap_width_deg: 90.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSection {
    pub input: Option<PathBuf>,
    pub poses: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sensor: SensorSection,
    pub sampler: SamplerSection,
    pub task: TaskSection,
    pub paths: PathSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::format(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.sensor_model()?;
        self.sampler_config()?.validate()?;
        if !(self.task.tau > 0.0) {
            return Err(Error::invalid("tau must be positive"));
        }
        if self.task.keep_every == 0 {
            return Err(Error::invalid("keep_every must be at least 1"));
        }
        if !(0.0..360.0).contains(&self.task.gap_width_deg) {
            return Err(Error::invalid("gap width must be in [0, 360)"));
        }
        for p in [&self.paths.input, &self.paths.poses, &self.paths.output].into_iter().flatten() {
            if p.as_os_str().is_empty() {
                return Err(Error::invalid("empty path"));
            }
        }
        Ok(())
    }

    pub fn sensor_model(&self) -> Result<SensorModel> {
        let s = &self.sensor;
        SensorModel::new(s.height, s.width, s.fov_up, s.fov_down, s.alpha, s.min_range, s.max_range)
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        let s = &self.sampler;
        match (s.beta_start, s.beta_end) {
            (None, None) => NoiseSchedule::linear_for_steps(s.steps),
            (Some(a), Some(b)) => NoiseSchedule::linear(s.steps, a, b),
            _ => Err(Error::invalid("beta_start and beta_end must be given together")),
        }
    }

    pub fn sampler_config(&self) -> Result<SamplerConfig> {
        let s = &self.sampler;
        let mut c = SamplerConfig::new(self.schedule()?);
        c.omega = s.omega;
        c.delta = s.delta;
        c.master_seed = s.seed;
        c.stochastic = s.stochastic;
        c.final_step_noise = s.final_step_noise;
        c.consistency_zbuffer = s.consistency_zbuffer;
        c.hard_synthetic_conditions = s.hard_synthetic_conditions;
        c.validate()?;
        Ok(c)
    }
}
