//! Flat `key = value` experiment configs. `#` starts a comment.

use crate::assoc::CsbaParams;
use crate::error::{Error, Result};
use crate::eval::FpReference;
use crate::geometry::OverlapMode;
use crate::noise::SceneSpec;
use crate::pipeline::{ExperimentConfig, Method, NoiseLevel};
use crate::Micros;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigEntry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Keys that belong to the command line rather than the experiment; they are
/// handed back to the caller untouched.
const PASSTHROUGH: [&str; 2] = ["out", "jobs"];

pub fn parse_config(text: &str) -> Result<Vec<ConfigEntry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected key = value, got '{line}'"),
            });
        };
        out.push(ConfigEntry {
            line: i + 1,
            key: k.trim().to_string(),
            value: v.trim().to_string(),
        });
    }
    Ok(out)
}

/// Integer microseconds, or a number with an `us`, `ms` or `s` suffix.
pub fn parse_duration(s: &str) -> Result<Micros> {
    let s = s.trim();
    let (num, scale) = if let Some(n) = s.strip_suffix("us") {
        (n, 1.0)
    } else if let Some(n) = s.strip_suffix("ms") {
        (n, 1e3)
    } else if let Some(n) = s.strip_suffix('s') {
        (n, 1e6)
    } else {
        (s, 1.0)
    };
    let v: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad duration '{s}'")))?;
    let us = v * scale;
    if !us.is_finite() || us.fract().abs() > 1e-6 || us.abs() > 9.0e15 {
        return Err(Error::Config(format!("duration '{s}' is not a whole number of microseconds")));
    }
    Ok(us.round() as Micros)
}

fn num<T: std::str::FromStr>(e: &ConfigEntry) -> Result<T> {
    e.value.parse().map_err(|_| {
        Error::Config(format!("line {}: bad value '{}' for {}", e.line, e.value, e.key))
    })
}

fn at_line<T>(e: &ConfigEntry, r: Result<T>) -> Result<T> {
    r.map_err(|err| Error::Config(format!("line {}: {}: {err}", e.line, e.key)))
}

/// Applies entries on top of `cfg`, returning the passthrough entries.
pub fn apply_config(entries: &[ConfigEntry], cfg: &mut ExperimentConfig) -> Result<Vec<ConfigEntry>> {
    let mut rest = Vec::new();
    for e in entries {
        let dur = || at_line(e, parse_duration(&e.value));
        match e.key.as_str() {
            k if PASSTHROUGH.contains(&k) => rest.push(e.clone()),
            "seed" => cfg.seed = num(e)?,
            "trials" => cfg.trials = num(e)?,
            "scene_id" => cfg.scene.scene_id = e.value.clone(),
            "objects" => {
                let n: usize = num(e)?;
                cfg.scene.counts = SceneSpec::mixed("", n, 1, 1).counts;
            }
            "duration" => cfg.scene.duration_us = dur()?,
            "frame_period" => cfg.scene.frame_period_us = dur()?,
            "area_radius" => cfg.scene.area_radius = num(e)?,
            "turning_fraction" => cfg.scene.turning_fraction = num(e)?,
            "noise" => {
                cfg.levels = e
                    .value
                    .split(',')
                    .map(|s| at_line(e, NoiseLevel::parse(s.trim())))
                    .collect::<Result<_>>()?
            }
            "methods" => cfg.methods = at_line(e, Method::parse_list(&e.value))?,
            "ego_period" => cfg.ego_timing.period_us = dur()?,
            "ego_phase" => cfg.ego_timing.phase_us = dur()?,
            "ego_latency" => cfg.ego_timing.latency_us = dur()?,
            "secondary_period" => cfg.secondary_timing.period_us = dur()?,
            "secondary_phase" => cfg.secondary_timing.phase_us = dur()?,
            "secondary_latency" => cfg.secondary_timing.latency_us = dur()?,
            "annulus_min" => cfg.annulus.r_min = num(e)?,
            "annulus_max" => cfg.annulus.r_max = num(e)?,
            "window" => cfg.window_us = dur()?,
            "eval_period" => cfg.eval_period_us = Some(dur()?),
            "overlap" => {
                cfg.overlap_mode = match e.value.as_str() {
                    "rotated" => OverlapMode::Rotated,
                    "axis_aligned" => OverlapMode::AxisAligned,
                    v => return Err(Error::Config(format!("line {}: overlap must be rotated or axis_aligned, got '{v}'", e.line))),
                }
            }
            "fp_reference" => {
                cfg.fp_reference = match e.value.as_str() {
                    "lineage" => FpReference::Lineage,
                    "nearest" => FpReference::Nearest,
                    v => return Err(Error::Config(format!("line {}: fp_reference must be lineage or nearest, got '{v}'", e.line))),
                }
            }
            "iou_th" => cfg.iou_th = Some(num(e)?),
            "dist_th" => cfg.dist_th = Some(num(e)?),
            "epsilon_s" => cfg.tracker.filter.epsilon_s = dur()?,
            "delta_max" => cfg.tracker.filter.delta_max = dur()?,
            "accel_density" => cfg.tracker.filter.accel_density = num(e)?,
            "size_walk" => cfg.tracker.filter.size_walk = num(e)?,
            "theta_walk" => cfg.tracker.filter.theta_walk = num(e)?,
            "velocity_var0" => cfg.tracker.filter.velocity_var0 = num(e)?,
            "retire_after" => cfg.tracker.retire_after = dur()?,
            "track_gate" => cfg.tracker.track_gate = num(e)?,
            "csba_gate" => cfg.tracker.csba.gate = num(e)?,
            "csba_weights" => {
                let w: Vec<f64> = e
                    .value
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Config(format!("line {}: csba_weights needs three numbers", e.line)))?;
                let [c, d, o] = w[..] else {
                    return Err(Error::Config(format!("line {}: csba_weights needs three numbers", e.line)));
                };
                cfg.tracker.csba = CsbaParams {
                    w_center: c,
                    w_dim: d,
                    w_orient: o,
                    ..cfg.tracker.csba
                };
            }
            k => return Err(Error::Config(format!("line {}: unknown key '{k}'", e.line))),
        }
    }
    Ok(rest)
}
