//! Task drivers: densification, inpainting, novel views, scene completion,
//! recasting statistics and parameter sweeps.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::Serialize;

use crate::denoiser::{Denoiser, Endpoint, OracleDenoiser, PixelPrior, PosteriorMeanDenoiser, RemoteDenoiser, ZeroDenoiser};
use crate::error::{Error, Result};
use crate::geometry::{merge_to_world, PointCloud, RigidTransform, WorldPointSet};
use crate::metrics::{completion_score, mae, mae_in_region, recast_stats, CompletionScore, MetricReport};
use crate::projection::{apply_condition_mask, backproject, project, SensorModel};
use crate::range_image::RangeImage;
use crate::recast::{place_views_circle, place_views_road, place_views_trajectory, recast, RoadOptions, ViewSet};
use crate::sampler::{sample_simultaneous, sample_single, SamplerConfig};
use crate::scene::SyntheticScene;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DenoiserChoice {
    /// Knows the ground truth of every view.
    Oracle,
    /// Gaussian posterior mean under a per-pixel prior estimated from the condition.
    Prior,
    Zero,
    Remote(Endpoint),
}

impl FromStr for DenoiserChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Self::Oracle),
            "prior" => Ok(Self::Prior),
            "zero" => Ok(Self::Zero),
            other => match other.strip_prefix("remote:") {
                Some(ep) => Ok(Self::Remote(ep.parse()?)),
                None => Err(Error::invalid(format!(
                    "unknown denoiser '{other}' (oracle, prior, zero, remote:<endpoint>)"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Placement {
    None,
    Circle { radius: f64, count: usize },
    /// Several concentric circles, `count` views each, concatenated in order.
    Circles { radii: Vec<f64>, count: usize },
    Road { offsets: Vec<f64> },
    Trajectory { stride: usize, count: usize },
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|_| Error::invalid(format!("bad {what} value '{t}'"))))
        .collect()
}

impl FromStr for Placement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = s.split_once(':').unwrap_or((s, ""));
        match (kind, args) {
            ("none", "") => Ok(Self::None),
            ("circle", a) => {
                let v: Vec<f64> = parse_list(a, "circle")?;
                match v.as_slice() {
                    [r] => Ok(Self::Circle { radius: *r, count: 4 }),
                    [r, n] if n.fract() == 0.0 && *n >= 1.0 => Ok(Self::Circle {
                        radius: *r,
                        count: *n as usize,
                    }),
                    _ => Err(Error::invalid("circle placement is circle:<radius>[,<count>]")),
                }
            }
            ("circles", "") => Ok(Self::Circles {
                radii: vec![5.0, 15.0],
                count: 4,
            }),
            ("circles", a) => Ok(Self::Circles {
                radii: parse_list(a, "circles")?,
                count: 4,
            }),
            ("road", a) => Ok(Self::Road {
                offsets: parse_list(a, "road")?,
            }),
            ("trajectory", a) => match parse_list::<usize>(a, "trajectory")?.as_slice() {
                [stride, count] if *stride > 0 => Ok(Self::Trajectory {
                    stride: *stride,
                    count: *count,
                }),
                _ => Err(Error::invalid("trajectory placement is trajectory:<stride>,<count>")),
            },
            _ => Err(Error::invalid(format!(
                "unknown placement '{s}' (none, circle:r[,n], circles[:r1,r2..], road:o1,o2.., trajectory:stride,count)"
            ))),
        }
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        match self {
            Self::None => write!(f, "none"),
            Self::Circle { radius, count } => write!(f, "circle:{radius},{count}"),
            Self::Circles { radii, .. } => write!(f, "circles:{}", join(radii)),
            Self::Road { offsets } => write!(f, "road:{}", join(offsets)),
            Self::Trajectory { stride, count } => write!(f, "trajectory:{stride},{count}"),
        }
    }
}

/// An input scan in its sensor frame, with its `world_from_sensor` pose.
#[derive(Debug, Clone)]
pub struct Scan {
    pub cloud: PointCloud,
    pub pose: RigidTransform,
}

/// Everything a task needs besides the scan itself.
pub struct Context {
    pub sensor: SensorModel,
    pub sampler: SamplerConfig,
    pub denoiser: DenoiserChoice,
    /// Ground-truth renderer for views away from the input.
    pub scene: Option<SyntheticScene>,
    /// Poses indexed by frame, for trajectory placements.
    pub trajectory: Vec<RigidTransform>,
    pub start_frame: usize,
    /// Reference set for completion scoring.
    pub completion_truth: Option<WorldPointSet>,
    pub tau: f64,
}

impl Context {
    pub fn new(sensor: SensorModel, sampler: SamplerConfig, denoiser: DenoiserChoice) -> Self {
        Self {
            sensor,
            sampler,
            denoiser,
            scene: None,
            trajectory: Vec::new(),
            start_frame: 0,
            completion_truth: None,
            tau: 0.2,
        }
    }

    pub fn with_scene(mut self, scene: SyntheticScene) -> Self {
        self.completion_truth = Some(scene.points.clone());
        self.scene = Some(scene);
        self
    }

    pub fn build_views(&self, scan: &Scan, placement: &Placement) -> Result<ViewSet> {
        match placement {
            Placement::None => Ok(ViewSet::single(scan.pose)),
            Placement::Circle { radius, count } => place_views_circle(&scan.pose, *radius, *count),
            Placement::Circles { radii, count } => {
                let mut views = ViewSet::single(scan.pose);
                for r in radii {
                    views = views.concat(&place_views_circle(&scan.pose, *r, *count)?)?;
                }
                Ok(views)
            }
            Placement::Road { offsets } => place_views_road(&scan.pose, &scan.cloud, offsets, &RoadOptions::default()),
            Placement::Trajectory { stride, count } => {
                if self.trajectory.is_empty() {
                    return Err(Error::invalid("trajectory placement needs poses"));
                }
                let mut views = place_views_trajectory(&self.trajectory, self.start_frame, *stride, *count)?;
                // the scan defines view 0 even if the pose file disagrees slightly
                views = ViewSet::new(
                    std::iter::once(scan.pose).chain(views.poses()[1..].iter().copied()).collect(),
                    views.labels().to_vec(),
                )?;
                Ok(views)
            }
        }
    }

    fn truth_for(&self, k: usize, pose: &RigidTransform, scan: &Scan) -> Option<RangeImage> {
        if k == 0 {
            Some(project(&scan.cloud, &self.sensor))
        } else {
            self.scene.as_ref().map(|s| s.render(pose, &self.sensor))
        }
    }

    fn make_denoiser(
        &self,
        truths: &[Option<RangeImage>],
        conditions: &[RangeImage],
        masks: &[Vec<bool>],
    ) -> Result<Box<dyn Denoiser>> {
        let schedule = self.sampler.schedule.clone();
        Ok(match &self.denoiser {
            DenoiserChoice::Oracle => {
                let targets = truths
                    .iter()
                    .map(|t| {
                        t.as_ref()
                            .map(|img| img.to_dense())
                            .ok_or_else(|| Error::invalid("the oracle denoiser needs ground truth for every view"))
                    })
                    .collect::<Result<_>>()?;
                Box::new(OracleDenoiser::new(schedule, targets))
            }
            DenoiserChoice::Prior => {
                let priors = conditions
                    .iter()
                    .zip(masks)
                    .map(|(c, m)| PixelPrior::from_condition(c, m))
                    .collect::<Result<_>>()?;
                Box::new(PosteriorMeanDenoiser::new(schedule, priors))
            }
            DenoiserChoice::Zero => Box::new(ZeroDenoiser {
                h: self.sensor.height(),
                w: self.sensor.width(),
            }),
            DenoiserChoice::Remote(ep) => Box::new(RemoteDenoiser::connect(ep)?),
        })
    }
}

#[derive(Debug, Clone)]
pub struct ViewResult {
    pub label: String,
    pub pose: RigidTransform,
    pub condition: RangeImage,
    /// Pixels held fixed during sampling.
    pub mask: Vec<bool>,
    pub output: RangeImage,
    pub truth: Option<RangeImage>,
    /// Metrics over the pixels that had to be generated.
    pub generated: Option<MetricReport>,
    pub full: Option<MetricReport>,
}

#[derive(Debug, Clone)]
pub struct TaskOutcome {
    pub views: Vec<ViewResult>,
    pub completion: Option<CompletionScore>,
    pub world: Option<WorldPointSet>,
}

impl TaskOutcome {
    /// Flat numeric summary used for sweep rows.
    pub fn summary(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        let nan = f64::NAN;
        let g0 = self.views[0].generated;
        out.push(("depth_mae".into(), g0.map_or(nan, |r| r.depth_mae)));
        out.push(("remission_mae".into(), g0.map_or(nan, |r| r.remission_mae)));
        let synth: Vec<f64> = self.views[1..].iter().filter_map(|v| v.generated.map(|r| r.depth_mae)).collect();
        let synth_mean = if synth.is_empty() { nan } else { synth.iter().sum::<f64>() / synth.len() as f64 };
        out.push(("synthetic_depth_mae".into(), synth_mean));
        if let Some(c) = &self.completion {
            out.push(("accuracy".into(), c.accuracy));
            out.push(("completeness".into(), c.completeness));
            out.push(("f1".into(), c.f1));
        }
        out
    }

    /// Per-view `key=value` report, one block per view.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.views.iter().enumerate() {
            writeln!(s, "[view {k}] label={}", v.label).unwrap();
            writeln!(s, "known_pixels={}", v.mask.iter().filter(|&&m| m).count()).unwrap();
            writeln!(s, "output_valid_pixels={}", v.output.valid_count()).unwrap();
            match &v.generated {
                Some(r) => s.push_str(&prefixed("generated.", &r.to_key_values())),
                None => s.push_str("generated=n/a\n"),
            }
            match &v.full {
                Some(r) => s.push_str(&prefixed("full.", &r.to_key_values())),
                None => s.push_str("full=n/a\n"),
            }
        }
        if let Some(c) = &self.completion {
            s.push_str("[completion]\n");
            s.push_str(&c.to_key_values());
        }
        s
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct View<'a> {
            label: &'a str,
            known_pixels: usize,
            output_valid_pixels: usize,
            generated: Option<MetricReport>,
            full: Option<MetricReport>,
        }
        #[derive(Serialize)]
        struct Doc<'a> {
            views: Vec<View<'a>>,
            completion: Option<CompletionScore>,
        }
        let doc = Doc {
            views: self
                .views
                .iter()
                .map(|v| View {
                    label: &v.label,
                    known_pixels: v.mask.iter().filter(|&&m| m).count(),
                    output_valid_pixels: v.output.valid_count(),
                    generated: v.generated,
                    full: v.full,
                })
                .collect(),
            completion: self.completion,
        };
        serde_json::to_string_pretty(&doc).expect("report serializes")
    }
}

fn prefixed(prefix: &str, kv: &str) -> String {
    kv.lines().map(|l| format!("{prefix}{l}\n")).collect()
}

/// Known-pixel mask keeping every `keep_every`-th beam, starting with row 0.
pub fn beam_mask(h: usize, w: usize, keep_every: usize) -> Result<Vec<bool>> {
    if keep_every == 0 {
        return Err(Error::invalid("keep_every must be at least 1"));
    }
    Ok((0..h * w).map(|i| (i / w).is_multiple_of(keep_every)).collect())
}

/// Known-pixel mask with a contiguous band of unknown columns `width_deg` wide, centered
/// on azimuth `center_deg` (counter-clockwise from +x, so negative is to the right).
pub fn angular_gap_mask(h: usize, w: usize, center_deg: f64, width_deg: f64) -> Result<Vec<bool>> {
    if !(0.0..360.0).contains(&width_deg) {
        return Err(Error::invalid(format!("gap width {width_deg} outside [0, 360)")));
    }
    let n = (width_deg / 360.0 * w as f64).round() as usize;
    let center_col = 0.5 * (1.0 - center_deg / 180.0) * w as f64;
    let start = (center_col - n as f64 / 2.0).round() as i64;
    let mut cols = vec![true; w];
    for j in 0..n as i64 {
        cols[(start + j).rem_euclid(w as i64) as usize] = false;
    }
    Ok((0..h * w).map(|i| cols[i % w]).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskKind {
    Densify { keep_every: usize },
    Inpaint { center_deg: f64, width_deg: f64 },
    NovelView { stride: usize, count: usize },
    SceneComplete,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Synthetic views for densify, inpaint and scene completion.
    pub placement: Placement,
    /// Keep only the first n synthetic views.
    pub max_views: Option<usize>,
}

pub fn run_task(ctx: &Context, scan: &Scan, spec: &TaskSpec) -> Result<TaskOutcome> {
    let (h, w) = ctx.sensor.dims();
    let (placement, mask0) = match &spec.kind {
        TaskKind::Densify { keep_every } => {
            if h % keep_every != 0 {
                return Err(Error::invalid(format!("{h} rows are not divisible by {keep_every}")));
            }
            (spec.placement.clone(), beam_mask(h, w, *keep_every)?)
        }
        TaskKind::Inpaint { center_deg, width_deg } => {
            (spec.placement.clone(), angular_gap_mask(h, w, *center_deg, *width_deg)?)
        }
        TaskKind::NovelView { stride, count } => (
            Placement::Trajectory {
                stride: *stride,
                count: *count,
            },
            vec![true; h * w],
        ),
        TaskKind::SceneComplete => (spec.placement.clone(), vec![true; h * w]),
    };
    let mut views = ctx.build_views(scan, &placement)?;
    if let Some(n) = spec.max_views {
        views = views.truncated(n);
    }
    let mut outcome = run_views(ctx, scan, &views, mask0)?;
    if spec.kind == TaskKind::SceneComplete {
        let truth = ctx
            .completion_truth
            .as_ref()
            .ok_or_else(|| Error::invalid("scene completion needs a ground-truth point set"))?;
        let clouds = outcome
            .views
            .iter()
            .map(|v| backproject(&v.output, &ctx.sensor))
            .collect::<Result<Vec<_>>>()?;
        let world = merge_to_world(&clouds, views.poses())?;
        outcome.completion = Some(completion_score(&world, truth, ctx.tau)?);
        outcome.world = Some(world);
    }
    Ok(outcome)
}

/// Conditions every view on the known part of the input, samples, and scores each view
/// against whatever ground truth is available.
pub fn run_views(ctx: &Context, scan: &Scan, views: &ViewSet, mask0: Vec<bool>) -> Result<TaskOutcome> {
    let sensor = &ctx.sensor;
    let full0 = project(&scan.cloud, sensor);
    let cond0 = apply_condition_mask(&full0, &mask0)?;
    let known = backproject(&cond0, sensor)?;
    let recasts = recast(&known, views)?;

    let mut conditions = vec![cond0];
    let mut masks = vec![mask0.iter().zip(full0.valid()).map(|(&m, &v)| m && v).collect::<Vec<_>>()];
    for cloud in &recasts[1..] {
        let c = project(cloud, sensor);
        masks.push(c.valid().to_vec());
        conditions.push(c);
    }
    let truths: Vec<Option<RangeImage>> = views
        .poses()
        .iter()
        .enumerate()
        .map(|(k, p)| ctx.truth_for(k, p, scan))
        .collect();
    let denoiser = ctx.make_denoiser(&truths, &conditions, &masks)?;

    let outputs = if views.len() == 1 {
        vec![sample_single(&conditions[0], &masks[0], sensor, denoiser.as_ref(), &ctx.sampler)?]
    } else {
        sample_simultaneous(&conditions, &masks, views, sensor, denoiser.as_ref(), &ctx.sampler)?
    };

    let mut results = Vec::with_capacity(views.len());
    for (k, ((output, condition), mask)) in outputs.into_iter().zip(conditions).zip(masks).enumerate() {
        let truth = truths[k].clone();
        let (generated, full) = match &truth {
            Some(gt) => {
                let region: Vec<bool> = mask.iter().map(|m| !m).collect();
                (
                    no_overlap_to_none(mae_in_region(&output, gt, sensor, Some(&region)))?,
                    no_overlap_to_none(mae(&output, gt, sensor))?,
                )
            }
            None => (None, None),
        };
        results.push(ViewResult {
            label: views.labels()[k].clone(),
            pose: views.poses()[k],
            condition,
            mask,
            output,
            truth,
            generated,
            full,
        });
    }
    Ok(TaskOutcome {
        views: results,
        completion: None,
        world: None,
    })
}

fn no_overlap_to_none(r: Result<MetricReport>) -> Result<Option<MetricReport>> {
    match r {
        Ok(m) => Ok(Some(m)),
        Err(Error::NoOverlap) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RecastRow {
    pub label: String,
    pub input_pixels_with_values: f64,
    pub report: Option<MetricReport>,
}

/// Recasting statistics along the trajectory: how much of each view the recast input
/// covers, and its depth error where ground truth exists.
pub fn run_recast_eval(ctx: &Context, scan: &Scan, stride: usize, count: usize) -> Result<Vec<RecastRow>> {
    let views = ctx.build_views(scan, &Placement::Trajectory { stride, count })?;
    let recasts = recast(&scan.cloud, &views)?;
    let mut rows = Vec::new();
    for (k, cloud) in recasts.iter().enumerate() {
        let img = project(cloud, &ctx.sensor);
        let report = match ctx.truth_for(k, &views.poses()[k], scan) {
            Some(gt) if img.valid_count() > 0 => no_overlap_to_none(recast_stats(&img, &gt, &ctx.sensor))?,
            _ => None,
        };
        rows.push(RecastRow {
            label: views.labels()[k].clone(),
            input_pixels_with_values: 100.0 * img.valid_fraction(),
            report,
        });
    }
    Ok(rows)
}

pub fn recast_rows_to_text(rows: &[RecastRow]) -> String {
    let mut s = format!("{:<12} {:>10} {:>10} {:>10}\n", "view", "pixels_%", "depth_mae", "coverage");
    for r in rows {
        let (d, c) = r
            .report
            .map_or(("n/a".to_string(), "n/a".to_string()), |m| (format!("{:.4}", m.depth_mae), format!("{:.4}", m.coverage_fraction)));
        writeln!(s, "{:<12} {:>10.2} {:>10} {:>10}", r.label, r.input_pixels_with_values, d, c).unwrap();
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Omega,
    Delta,
    Views,
    Placement,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omega" => Ok(Self::Omega),
            "delta" => Ok(Self::Delta),
            "views" => Ok(Self::Views),
            "placement" => Ok(Self::Placement),
            other => Err(Error::invalid(format!("unknown sweep axis '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub axis: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

fn cell(v: f64) -> String {
    if v.is_nan() {
        "n/a".into()
    } else {
        format!("{v:.4}")
    }
}

impl SweepTable {
    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.0.len()).chain([self.axis.len()]).max().unwrap_or(0);
        let mut s = format!("{:<width$}", self.axis);
        for c in &self.columns {
            write!(s, "  {c:>19}").unwrap();
        }
        s.push('\n');
        for (label, vals) in &self.rows {
            write!(s, "{label:<width$}").unwrap();
            for v in vals {
                write!(s, "  {:>19}", cell(*v)).unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = std::iter::once(self.axis.clone())
            .chain(self.columns.iter().cloned())
            .collect::<Vec<_>>()
            .join(",");
        s.push('\n');
        for (label, vals) in &self.rows {
            s.push_str(label);
            for v in vals {
                write!(s, ",{}", if v.is_nan() { String::new() } else { format!("{v}") }).unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        // NaN has no JSON form; missing cells become null
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|(label, vals)| {
                let mut m = serde_json::Map::new();
                m.insert(self.axis.clone(), label.clone().into());
                for (c, v) in self.columns.iter().zip(vals) {
                    m.insert(c.clone(), if v.is_nan() { serde_json::Value::Null } else { (*v).into() });
                }
                serde_json::Value::Object(m)
            })
            .collect();
        serde_json::to_string_pretty(&rows).expect("table serializes")
    }
}

/// Repeats a task once per value of one parameter, with everything else fixed.
///
/// Views-axis values count synthetic views taken in placement order, so `1..=n` adds
/// them progressively.
pub fn run_sweep(ctx: &mut Context, scan: &Scan, spec: &TaskSpec, axis: SweepAxis, values: &[String]) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::invalid("sweep needs at least one value"));
    }
    let base_sampler = ctx.sampler.clone();
    let mut table = SweepTable {
        axis: format!("{axis:?}").to_lowercase(),
        columns: Vec::new(),
        rows: Vec::new(),
    };
    let result = (|| -> Result<()> {
        for value in values {
            ctx.sampler = base_sampler.clone();
            let mut spec = spec.clone();
            match axis {
                SweepAxis::Omega => {
                    ctx.sampler.omega = value
                        .parse()
                        .map_err(|_| Error::invalid(format!("omega value '{value}'")))?
                }
                SweepAxis::Delta => ctx.sampler.delta = crate::config::parse_delta(value)?,
                SweepAxis::Views => {
                    spec.max_views = Some(value.parse().map_err(|_| Error::invalid(format!("views value '{value}'")))?)
                }
                SweepAxis::Placement => spec.placement = value.parse()?,
            }
            ctx.sampler.validate()?;
            let outcome = run_task(ctx, scan, &spec)?;
            let summary = outcome.summary();
            if table.columns.is_empty() {
                table.columns = summary.iter().map(|(k, _)| k.clone()).collect();
            }
            table.rows.push((value.clone(), summary.into_iter().map(|(_, v)| v).collect()));
        }
        Ok(())
    })();
    ctx.sampler = base_sampler;
    result.map(|_| table)
}

/// Poses every `spacing` meters along +x, starting at `origin`.
pub fn straight_trajectory(origin: &RigidTransform, frames: usize, spacing: f64) -> Vec<RigidTransform> {
    (0..frames)
        .map(|i| crate::geometry::compose(origin, &RigidTransform::from_translation(i as f64 * spacing, 0.0, 0.0)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beam_mask_counts() {
        let m = beam_mask(64, 8, 4).unwrap();
        let rows: Vec<usize> = (0..64).filter(|v| m[v * 8]).collect();
        assert_eq!(rows.len(), 16);
        assert_eq!(rows[..3], [0, 4, 8]);
    }

    #[test]
    fn gap_of_ninety_degrees() {
        let m = angular_gap_mask(2, 1024, -72.0, 90.0).unwrap();
        assert_eq!(m[..1024].iter().filter(|&&k| !k).count(), 256);
        assert!(angular_gap_mask(1, 1024, 0.0, 0.0).unwrap().iter().all(|&k| k));
        // wraps across the -180/180 seam
        let m = angular_gap_mask(1, 1024, 180.0, 90.0).unwrap();
        assert_eq!(m.iter().filter(|&&k| !k).count(), 256);
        assert!(!m[0] && !m[1023] && m[512]);
        assert!(angular_gap_mask(1, 16, 0.0, 360.0).is_err());
    }

    #[test]
    fn parse_placements() {
        assert_eq!("circle:5".parse::<Placement>().unwrap(), Placement::Circle { radius: 5.0, count: 4 });
        assert_eq!("circle:5,8".parse::<Placement>().unwrap(), Placement::Circle { radius: 5.0, count: 8 });
        assert_eq!(
            "circles".parse::<Placement>().unwrap(),
            Placement::Circles {
                radii: vec![5.0, 15.0],
                count: 4
            }
        );
        assert_eq!(
            "road:5,-5,10".parse::<Placement>().unwrap(),
            Placement::Road {
                offsets: vec![5.0, -5.0, 10.0]
            }
        );
        assert_eq!(
            "trajectory:5,7".parse::<Placement>().unwrap(),
            Placement::Trajectory { stride: 5, count: 7 }
        );
        for bad in ["circle:", "circle:5,2.5", "road:x", "trajectory:0,3", "grid"] {
            assert!(bad.parse::<Placement>().is_err(), "{bad}");
        }
        for p in ["none", "circle:5,4", "circles:5,15", "road:5,-5", "trajectory:5,7"] {
            assert_eq!(p.parse::<Placement>().unwrap().to_string(), p);
        }
    }

    #[test]
    fn parse_denoisers() {
        assert_eq!("oracle".parse::<DenoiserChoice>().unwrap(), DenoiserChoice::Oracle);
        assert!(matches!(
            "remote:tcp:127.0.0.1:1".parse::<DenoiserChoice>().unwrap(),
            DenoiserChoice::Remote(Endpoint::Tcp(_))
        ));
        assert!("magic".parse::<DenoiserChoice>().is_err());
    }

    #[test]
    fn sweep_table_formats() {
        let t = SweepTable {
            axis: "omega".into(),
            columns: vec!["depth_mae".into(), "f1".into()],
            rows: vec![("0".into(), vec![0.5, f64::NAN]), ("0.1".into(), vec![0.25, 1.0])],
        };
        assert_eq!(t.to_csv(), "omega,depth_mae,f1\n0,0.5,\n0.1,0.25,1\n");
        assert!(t.to_text().contains("n/a"));
        let v: serde_json::Value = serde_json::from_str(&t.to_json()).unwrap();
        assert!(v[0]["f1"].is_null());
    }
}
