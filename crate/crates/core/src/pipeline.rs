//! Experiment driver: realize sensor streams per trial, fuse them with each
//! method, and score the fused boxes on an evaluation grid.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assoc::CsbaParams;
use crate::baselines::{
    csba_wls, distance_late, nms_giou, nms_std, psa, sliding_window_sync, wbf, ScoredDetection,
};
use crate::error::{Error, Result};
use crate::eval::{aggregate, match_by_id, FpReference, FrameMetrics, Prediction, RunSummary};
use crate::geometry::{OverlapMode, Point2};
use crate::io::NoisePreset;
use crate::noise::{
    realize_detections, stream_rng, trial_stream, Annulus, ClassLabel, Detection, NoiseConfig, Placement, Scene,
    SceneSpec, SensorSpec,
};
use crate::unikf::{Tracker, TrackerParams};
use crate::Micros;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "unikf")]
    Unikf,
    #[serde(rename = "wls")]
    Wls,
    #[serde(rename = "nms-std")]
    NmsStd,
    #[serde(rename = "nms-giou")]
    NmsGiou,
    #[serde(rename = "wbf")]
    Wbf,
    #[serde(rename = "psa")]
    Psa,
    #[serde(rename = "dist-late")]
    DistLate,
    #[serde(rename = "none")]
    None,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Unikf,
        Method::Wls,
        Method::NmsStd,
        Method::NmsGiou,
        Method::Wbf,
        Method::Psa,
        Method::DistLate,
        Method::None,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Unikf => "unikf",
            Method::Wls => "wls",
            Method::NmsStd => "nms-std",
            Method::NmsGiou => "nms-giou",
            Method::Wbf => "wbf",
            Method::Psa => "psa",
            Method::DistLate => "dist-late",
            Method::None => "none",
        }
    }

    pub fn names() -> String {
        Self::ALL.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(", ")
    }

    /// Comma-separated list; duplicates are dropped, first occurrence wins.
    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let m: Method = part.parse()?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return Err(Error::Config(format!("no methods given; choose from {}", Self::names())));
        }
        Ok(out)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'; choose from {}", Self::names())))
    }
}

/// Noise presets of the ego and the secondary sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevel {
    pub label: String,
    pub ego: NoisePreset,
    pub secondary: NoisePreset,
}

impl NoiseLevel {
    pub fn pair(ego: NoisePreset, secondary: NoisePreset) -> Self {
        let label = if ego.name == secondary.name {
            ego.name.clone()
        } else {
            format!("{}+{}", ego.name, secondary.name)
        };
        Self { label, ego, secondary }
    }

    /// `"noise2"` (both sensors) or `"noise1+noise3"` (ego + secondary).
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('+').map(str::trim).collect();
        match parts.as_slice() {
            [one] => {
                let p = crate::io::resolve_noise_preset(one)?;
                Ok(Self::pair(p.clone(), p))
            }
            [a, b] => Ok(Self::pair(
                crate::io::resolve_noise_preset(a)?,
                crate::io::resolve_noise_preset(b)?,
            )),
            _ => Err(Error::Config(format!("noise level '{s}' must be 'name' or 'name+name'"))),
        }
    }

    /// IoU threshold: the looser (smaller) of the two presets.
    pub fn iou_th(&self) -> f64 {
        self.ego.iou_th.min(self.secondary.iou_th)
    }

    pub fn dist_th(&self) -> f64 {
        self.ego.dist_th.max(self.secondary.dist_th)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorTiming {
    pub period_us: Micros,
    pub phase_us: Micros,
    pub latency_us: Micros,
}

impl Default for SensorTiming {
    fn default() -> Self {
        Self {
            period_us: 500_000,
            phase_us: 0,
            latency_us: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scene: SceneSpec,
    pub levels: Vec<NoiseLevel>,
    pub methods: Vec<Method>,
    pub ego_timing: SensorTiming,
    pub secondary_timing: SensorTiming,
    pub annulus: Annulus,
    pub tracker: TrackerParams,
    /// Synchronization window of the WLS baseline.
    pub window_us: Micros,
    /// Evaluation grid spacing; the ego period when unset.
    pub eval_period_us: Option<Micros>,
    pub overlap_mode: OverlapMode,
    pub fp_reference: FpReference,
    /// Overrides of the preset-derived thresholds.
    pub iou_th: Option<f64>,
    pub dist_th: Option<f64>,
    pub trials: u32,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let n1 = crate::io::resolve_noise_preset("noise1").expect("built-in preset");
        Self {
            scene: SceneSpec::mixed("synthetic", 50, 5_000_000, 500_000),
            levels: vec![NoiseLevel::pair(n1.clone(), n1)],
            methods: vec![Method::Unikf],
            ego_timing: SensorTiming::default(),
            secondary_timing: SensorTiming::default(),
            annulus: Annulus::default(),
            tracker: TrackerParams::default(),
            window_us: 100_000,
            eval_period_us: None,
            overlap_mode: OverlapMode::Rotated,
            fp_reference: FpReference::Lineage,
            iou_th: None,
            dist_th: None,
            trials: 5,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.levels.is_empty() || self.methods.is_empty() {
            return Err(Error::Config("need at least one noise level and one method".into()));
        }
        if self.window_us <= 0 {
            return Err(Error::Config("window must be > 0".into()));
        }
        if matches!(self.eval_period_us, Some(p) if p <= 0) {
            return Err(Error::Config("eval period must be > 0".into()));
        }
        for th in [self.iou_th, self.dist_th].into_iter().flatten() {
            if !(th.is_finite() && th >= 0.0) {
                return Err(Error::Config(format!("thresholds must be >= 0, got {th}")));
            }
        }
        self.tracker.filter.validate()?;
        self.scene.validate()?;
        for level in &self.levels {
            for s in self.sensors(level) {
                s.validate()?;
            }
        }
        Ok(())
    }

    pub fn eval_period(&self) -> Micros {
        self.eval_period_us.unwrap_or(self.ego_timing.period_us)
    }

    /// Ego sensor (id 0) fixed at the origin and a secondary sensor (id 1)
    /// redrawn on an annulus around the scene for every frame.
    pub fn sensors(&self, level: &NoiseLevel) -> Vec<SensorSpec> {
        let make = |id: u32, placement: Placement, t: &SensorTiming, noise: NoiseConfig| SensorSpec {
            sensor_id: id,
            placement,
            period_us: t.period_us,
            phase_us: t.phase_us,
            latency_us: t.latency_us,
            noise,
        };
        vec![
            make(0, Placement::Fixed { origin: Point2::ORIGIN }, &self.ego_timing, level.ego.noise),
            make(
                1,
                Placement::RandomPerFrame { annulus: self.annulus },
                &self.secondary_timing,
                level.secondary.noise,
            ),
        ]
    }

    pub fn method_params(&self, level: &NoiseLevel) -> MethodParams {
        MethodParams {
            iou_th: self.iou_th.unwrap_or_else(|| level.iou_th()),
            dist_th: self.dist_th.unwrap_or_else(|| level.dist_th()),
            window_us: self.window_us,
            overlap_mode: self.overlap_mode,
            csba: self.tracker.csba,
            tracker: self.tracker,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodParams {
    pub iou_th: f64,
    pub dist_th: f64,
    pub window_us: Micros,
    pub overlap_mode: OverlapMode,
    pub csba: CsbaParams,
    pub tracker: TrackerParams,
}

/// Detections of every sensor for one trial, ego first.
pub fn realize_trial(scene: &Scene, sensors: &[SensorSpec], seed: u64, trial: u32) -> Vec<Vec<Detection>> {
    sensors
        .iter()
        .enumerate()
        .map(|(k, s)| realize_detections(scene, s, &mut stream_rng(seed, trial_stream(trial, k as u32))))
        .collect()
}

/// Scene times on the evaluation grid.
pub fn eval_ticks(scene: &Scene, period: Micros) -> Vec<Micros> {
    scene
        .frames
        .iter()
        .map(|f| f.t_us)
        .filter(|t| t.rem_euclid(period) == 0)
        .collect()
}

/// Detections received in `[t - period/2, t + period/2)`.
pub fn tick_batch(streams: &[Vec<Detection>], t: Micros, period: Micros) -> Vec<Detection> {
    let lo = t - period / 2;
    let hi = lo + period;
    let mut batch: Vec<Detection> = streams
        .iter()
        .flatten()
        .filter(|d| d.t_recv >= lo && d.t_recv < hi)
        .cloned()
        .collect();
    batch.sort_by_key(|d| (d.t_recv, d.source, d.t_meas));
    batch
}

fn as_prediction(d: &Detection) -> Prediction {
    Prediction {
        bbox: d.bbox,
        class: d.class,
        gt_id: d.gt_id,
    }
}

fn by_class(batch: &[Detection]) -> BTreeMap<ClassLabel, Vec<Detection>> {
    let mut m: BTreeMap<ClassLabel, Vec<Detection>> = BTreeMap::new();
    for d in batch {
        m.entry(d.class).or_default().push(d.clone());
    }
    m
}

/// Stateful per-trial fuser for one method.
pub struct Fuser {
    method: Method,
    params: MethodParams,
    tracker: Option<Tracker>,
}

impl Fuser {
    pub fn new(method: Method, params: MethodParams) -> Self {
        let tracker = (method == Method::Unikf).then(|| Tracker::new(params.tracker));
        Self { method, params, tracker }
    }

    /// Fuses one tick's batch into predictions. `none` passes the ego (source 0)
    /// detections through.
    pub fn fuse(&mut self, batch: &[Detection], t_eval: Micros) -> Result<Vec<Prediction>> {
        let p = &self.params;
        let scored = || -> Vec<ScoredDetection> { batch.iter().cloned().map(ScoredDetection::from_detection).collect() };
        let from_scored = |v: Vec<ScoredDetection>| v.iter().map(|s| as_prediction(&s.det)).collect();
        Ok(match self.method {
            Method::None => batch.iter().filter(|d| d.source == 0).map(as_prediction).collect(),
            Method::NmsStd => from_scored(nms_std(&scored(), p.iou_th, p.overlap_mode)),
            Method::NmsGiou => from_scored(nms_giou(&scored(), p.iou_th, p.overlap_mode)),
            Method::Wbf => from_scored(wbf(&scored(), p.iou_th, p.overlap_mode)),
            Method::Psa => from_scored(psa(&scored(), p.iou_th, p.overlap_mode)),
            Method::DistLate => {
                let mut out = Vec::new();
                for dets in by_class(batch).values() {
                    let mut sources: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
                    for d in dets {
                        sources.entry(d.source).or_default().push(d.clone());
                    }
                    let mut iter = sources.into_values();
                    let mut acc = iter.next().unwrap_or_default();
                    for next in iter {
                        acc = distance_late(&acc, &next, p.dist_th);
                    }
                    out.extend(acc.iter().map(as_prediction));
                }
                out
            }
            Method::Wls => {
                let mut sources: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
                for d in batch {
                    sources.entry(d.source).or_default().push(d.clone());
                }
                let streams: Vec<Vec<Detection>> = sources.into_values().collect();
                let mut out = Vec::new();
                for (_, window) in sliding_window_sync(&streams, p.window_us)? {
                    out.extend(csba_wls(&window, &p.csba)?.iter().map(as_prediction));
                }
                out
            }
            Method::Unikf => {
                let tracker = self.tracker.as_mut().expect("tracker exists for unikf");
                tracker
                    .run_frame(batch, t_eval)?
                    .iter()
                    .map(|o| Prediction {
                        bbox: o.bbox,
                        class: o.class,
                        gt_id: o.gt_id,
                    })
                    .collect()
            }
        })
    }
}

/// Predictions of one trial at one evaluation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickPredictions {
    pub trial: u32,
    pub t_us: Micros,
    pub predictions: Vec<Prediction>,
}

/// Runs one method over one trial's streams.
pub fn fuse_trial(
    scene: &Scene,
    streams: &[Vec<Detection>],
    method: Method,
    params: MethodParams,
    eval_period: Micros,
    trial: u32,
) -> Result<Vec<TickPredictions>> {
    let mut fuser = Fuser::new(method, params);
    eval_ticks(scene, eval_period)
        .into_iter()
        .map(|t| {
            let batch = tick_batch(streams, t, eval_period);
            Ok(TickPredictions {
                trial,
                t_us: t,
                predictions: fuser.fuse(&batch, t)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub trial: u32,
    pub t_us: Micros,
    pub metrics: FrameMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub summary: RunSummary,
    pub frames: Vec<FrameRecord>,
    pub per_class: BTreeMap<ClassLabel, RunSummary>,
}

/// Scores tick predictions against the scene. Every tick must name a scene
/// frame; trials are numbered `0..trials`.
pub fn evaluate_ticks(scene: &Scene, ticks: &[TickPredictions], trials: u32, fp_ref: FpReference) -> Result<Evaluation> {
    let mut per_trial: Vec<Vec<FrameMetrics>> = vec![Vec::new(); trials as usize];
    let mut per_class: BTreeMap<ClassLabel, Vec<Vec<FrameMetrics>>> = BTreeMap::new();
    let mut frames = Vec::with_capacity(ticks.len());
    for tick in ticks {
        let frame = scene.frame_at(tick.t_us).ok_or_else(|| {
            Error::Validation(format!("no scene frame at t_us={} in scene '{}'", tick.t_us, scene.scene_id))
        })?;
        let slot = per_trial.get_mut(tick.trial as usize).ok_or_else(|| {
            Error::Validation(format!("trial {} outside 0..{trials}", tick.trial))
        })?;
        let metrics = FrameMetrics::from_outcome(&match_by_id(&tick.predictions, &frame.objects, fp_ref));
        slot.push(metrics);
        frames.push(FrameRecord {
            trial: tick.trial,
            t_us: tick.t_us,
            metrics,
        });
        let mut classes: Vec<ClassLabel> = frame.objects.iter().map(|o| o.class).collect();
        classes.extend(tick.predictions.iter().map(|p| p.class));
        classes.sort_unstable();
        classes.dedup();
        for class in classes {
            let preds: Vec<Prediction> = tick.predictions.iter().filter(|p| p.class == class).copied().collect();
            let gts: Vec<_> = frame.objects.iter().filter(|o| o.class == class).cloned().collect();
            let m = FrameMetrics::from_outcome(&match_by_id(&preds, &gts, fp_ref));
            per_class
                .entry(class)
                .or_insert_with(|| vec![Vec::new(); trials as usize])[tick.trial as usize]
                .push(m);
        }
    }
    Ok(Evaluation {
        summary: aggregate(&per_trial),
        frames,
        per_class: per_class.into_iter().map(|(c, t)| (c, aggregate(&t))).collect(),
    })
}

/// One (noise level, method) cell of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    pub level: String,
    pub method: Method,
    pub evaluation: Evaluation,
    pub ticks: Vec<TickPredictions>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub scene: Scene,
    pub runs: Vec<MethodRun>,
}

/// Synthesizes the scene from the master seed (stream 0).
pub fn build_scene(cfg: &ExperimentConfig) -> Result<Scene> {
    crate::noise::synth_scene(&cfg.scene, &mut stream_rng(cfg.seed, 0))
}

/// Runs every (level, method, trial) on `jobs` worker threads. Results are
/// merged in (level, method, trial) order, so they do not depend on `jobs`.
pub fn run_experiment(cfg: &ExperimentConfig, scene: &Scene, jobs: usize) -> Result<ExperimentResult> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let period = cfg.eval_period();
    let mut cells: Vec<(usize, Method, u32)> = Vec::new();
    for li in 0..cfg.levels.len() {
        for &m in &cfg.methods {
            for trial in 0..cfg.trials {
                cells.push((li, m, trial));
            }
        }
    }
    let outputs: Vec<Result<Vec<TickPredictions>>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(li, method, trial)| {
                let level = &cfg.levels[li];
                let streams = realize_trial(scene, &cfg.sensors(level), cfg.seed, trial);
                fuse_trial(scene, &streams, method, cfg.method_params(level), period, trial)
            })
            .collect()
    });
    let mut outputs = outputs.into_iter();
    let mut runs = Vec::new();
    for level in &cfg.levels {
        for &method in &cfg.methods {
            let mut ticks = Vec::new();
            for _ in 0..cfg.trials {
                ticks.extend(outputs.next().expect("one output per cell")?);
            }
            let evaluation = evaluate_ticks(scene, &ticks, cfg.trials, cfg.fp_reference)?;
            runs.push(MethodRun {
                level: level.label.clone(),
                method,
                evaluation,
                ticks,
            });
        }
    }
    Ok(ExperimentResult {
        scene: scene.clone(),
        runs,
    })
}
