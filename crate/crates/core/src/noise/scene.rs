//! Synthetic ground-truth scenes.
//!
//! Objects travel along their depth axis, i.e. the direction of motion is
//! `theta + pi/2`. Static classes (barriers, cones) never move.

use std::collections::HashSet;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle_unchecked, BevBox};
use crate::Micros;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    Car,
    Truck,
    Bus,
    Pedestrian,
    Bicycle,
    Motorcycle,
    Barrier,
    TrafficCone,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 8] = [
        ClassLabel::Car,
        ClassLabel::Truck,
        ClassLabel::Bus,
        ClassLabel::Pedestrian,
        ClassLabel::Bicycle,
        ClassLabel::Motorcycle,
        ClassLabel::Barrier,
        ClassLabel::TrafficCone,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ClassLabel::Car => "car",
            ClassLabel::Truck => "truck",
            ClassLabel::Bus => "bus",
            ClassLabel::Pedestrian => "pedestrian",
            ClassLabel::Bicycle => "bicycle",
            ClassLabel::Motorcycle => "motorcycle",
            ClassLabel::Barrier => "barrier",
            ClassLabel::TrafficCone => "traffic_cone",
        }
    }

    /// Typical (width, depth) in meters.
    pub fn typical_size(&self) -> (f64, f64) {
        match self {
            ClassLabel::Car => (1.9, 4.6),
            ClassLabel::Truck => (2.5, 7.0),
            ClassLabel::Bus => (2.9, 11.0),
            ClassLabel::Pedestrian => (0.6, 0.7),
            ClassLabel::Bicycle => (0.6, 1.7),
            ClassLabel::Motorcycle => (0.8, 2.1),
            ClassLabel::Barrier => (2.5, 0.5),
            ClassLabel::TrafficCone => (0.4, 0.4),
        }
    }

    /// Speed range in m/s.
    pub fn speed_range(&self) -> (f64, f64) {
        match self {
            ClassLabel::Car => (0.0, 12.0),
            ClassLabel::Truck => (0.0, 10.0),
            ClassLabel::Bus => (0.0, 9.0),
            ClassLabel::Pedestrian => (0.3, 1.8),
            ClassLabel::Bicycle => (1.5, 6.0),
            ClassLabel::Motorcycle => (2.0, 12.0),
            ClassLabel::Barrier | ClassLabel::TrafficCone => (0.0, 0.0),
        }
    }

    pub fn is_static(&self) -> bool {
        matches!(self, ClassLabel::Barrier | ClassLabel::TrafficCone)
    }

    /// Share of each class in a default mixed scene, in `ALL` order.
    fn default_mix() -> [f64; 8] {
        [0.40, 0.08, 0.04, 0.25, 0.06, 0.05, 0.07, 0.05]
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassLabel::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown class label '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtObject {
    pub gt_id: u64,
    pub class: ClassLabel,
    pub bbox: BevBox,
    pub vx: f64,
    pub vy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t_us: Micros,
    pub objects: Vec<GtObject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scene_id: String,
    pub frames: Vec<Frame>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        for pair in self.frames.windows(2) {
            if pair[1].t_us <= pair[0].t_us {
                return Err(Error::Validation(format!(
                    "scene '{}': frame timestamps not strictly increasing ({} then {})",
                    self.scene_id, pair[0].t_us, pair[1].t_us
                )));
            }
        }
        for frame in &self.frames {
            let mut seen = HashSet::new();
            for obj in &frame.objects {
                if !seen.insert(obj.gt_id) {
                    return Err(Error::Validation(format!(
                        "scene '{}': duplicate gt_id {} at t={}",
                        self.scene_id, obj.gt_id, frame.t_us
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn frame_at(&self, t_us: Micros) -> Option<&Frame> {
        self.frames
            .binary_search_by_key(&t_us, |f| f.t_us)
            .ok()
            .map(|i| &self.frames[i])
    }

    pub fn object_count(&self) -> usize {
        self.frames.iter().map(|f| f.objects.len()).sum()
    }
}

/// Constant-velocity (zero yaw rate) or constant-turn motion of one object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trajectory {
    pub gt_id: u64,
    pub class: ClassLabel,
    pub start: BevBox,
    pub speed: f64,
    pub yaw_rate: f64,
}

impl Trajectory {
    /// Box and velocity `t_s` seconds after the start.
    pub fn at(&self, t_s: f64) -> (BevBox, f64, f64) {
        let heading0 = self.start.theta + FRAC_PI_2;
        let heading = heading0 + self.yaw_rate * t_s;
        let (dx, dy) = if self.yaw_rate.abs() < 1e-9 {
            (self.speed * t_s * heading0.cos(), self.speed * t_s * heading0.sin())
        } else {
            let r = self.speed / self.yaw_rate;
            (r * (heading.sin() - heading0.sin()), -r * (heading.cos() - heading0.cos()))
        };
        let bbox = BevBox {
            x: self.start.x + dx,
            y: self.start.y + dy,
            w: self.start.w,
            d: self.start.d,
            theta: wrap_angle_unchecked(self.start.theta + self.yaw_rate * t_s),
        };
        (bbox, self.speed * heading.cos(), self.speed * heading.sin())
    }

    /// A straight-line trajectory with the given velocity vector.
    pub fn constant_velocity(gt_id: u64, class: ClassLabel, start: BevBox, vx: f64, vy: f64) -> Self {
        let speed = vx.hypot(vy);
        let start = if speed > 0.0 {
            BevBox {
                theta: wrap_angle_unchecked(vy.atan2(vx) - FRAC_PI_2),
                ..start
            }
        } else {
            start
        };
        Self {
            gt_id,
            class,
            start,
            speed,
            yaw_rate: 0.0,
        }
    }
}

/// Samples trajectories on a uniform time grid `[0, duration]`.
pub fn scene_from_trajectories(
    scene_id: &str,
    trajectories: &[Trajectory],
    duration_us: Micros,
    frame_period_us: Micros,
) -> Result<Scene> {
    if frame_period_us <= 0 || duration_us < 0 {
        return Err(Error::InvalidArgument(format!(
            "need frame period > 0 and duration >= 0, got {frame_period_us} / {duration_us}"
        )));
    }
    let n_frames = duration_us / frame_period_us + 1;
    let frames = (0..n_frames)
        .map(|k| {
            let t_us = k * frame_period_us;
            let t_s = t_us as f64 * 1e-6;
            let objects = trajectories
                .iter()
                .map(|tr| {
                    let (bbox, vx, vy) = tr.at(t_s);
                    GtObject {
                        gt_id: tr.gt_id,
                        class: tr.class,
                        bbox,
                        vx,
                        vy,
                    }
                })
                .collect();
            Frame { t_us, objects }
        })
        .collect();
    let scene = Scene {
        scene_id: scene_id.to_string(),
        frames,
    };
    scene.validate()?;
    Ok(scene)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub scene_id: String,
    /// Object count per class.
    pub counts: Vec<(ClassLabel, usize)>,
    pub duration_us: Micros,
    pub frame_period_us: Micros,
    /// Initial centers are uniform in a disc of this radius around the origin.
    pub area_radius: f64,
    /// Probability that a moving object follows a constant-turn path.
    pub turning_fraction: f64,
    /// Upper bound of |yaw rate| for turning objects, rad/s.
    pub max_yaw_rate: f64,
    /// Extra clearance between initial boxes, meters.
    pub min_gap: f64,
}

impl SceneSpec {
    /// A mixed-class scene with `total` objects split by the default class shares.
    pub fn mixed(scene_id: &str, total: usize, duration_us: Micros, frame_period_us: Micros) -> Self {
        let mix = ClassLabel::default_mix();
        let raw: Vec<f64> = mix.iter().map(|s| s * total as f64).collect();
        let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
        let mut remaining = total - counts.iter().sum::<usize>();
        // Largest remainder, ties by class order.
        let mut order: Vec<usize> = (0..mix.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = raw[a] - raw[a].floor();
            let rb = raw[b] - raw[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if remaining == 0 {
                break;
            }
            counts[i] += 1;
            remaining -= 1;
        }
        Self {
            scene_id: scene_id.to_string(),
            counts: ClassLabel::ALL.iter().copied().zip(counts).filter(|(_, n)| *n > 0).collect(),
            duration_us,
            frame_period_us,
            area_radius: 40.0,
            turning_fraction: 0.3,
            max_yaw_rate: 0.3,
            min_gap: 1.0,
        }
    }

    pub fn total_objects(&self) -> usize {
        self.counts.iter().map(|(_, n)| n).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_period_us <= 0 {
            return Err(Error::InvalidArgument("frame period must be > 0".into()));
        }
        if self.duration_us < 0 {
            return Err(Error::InvalidArgument("duration must be >= 0".into()));
        }
        if !(self.area_radius > 0.0) {
            return Err(Error::InvalidArgument("area radius must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.turning_fraction) {
            return Err(Error::InvalidArgument("turning fraction must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Draws a scene: initial poses uniform in a disc without initial overlap,
/// class-typical sizes (+-10%) and speeds, CV or constant-turn motion.
pub fn synth_scene<R: Rng + ?Sized>(spec: &SceneSpec, rng: &mut R) -> Result<Scene> {
    spec.validate()?;
    let mut trajectories: Vec<Trajectory> = Vec::with_capacity(spec.total_objects());
    let mut next_id = 1u64;
    for &(class, count) in &spec.counts {
        let (w0, d0) = class.typical_size();
        let (vmin, vmax) = class.speed_range();
        for _ in 0..count {
            let w = w0 * rng.random_range(0.9..=1.1);
            let d = d0 * rng.random_range(0.9..=1.1);
            let theta = rng.random_range(-PI..PI);
            let radius = 0.5 * w.hypot(d);
            let mut placed = None;
            for _ in 0..1000 {
                let r = spec.area_radius * rng.random::<f64>().sqrt();
                let phi = rng.random_range(-PI..PI);
                let (x, y) = (r * phi.cos(), r * phi.sin());
                let clear = trajectories.iter().all(|t| {
                    let other = 0.5 * t.start.w.hypot(t.start.d);
                    (t.start.x - x).hypot(t.start.y - y) > radius + other + spec.min_gap
                });
                if clear {
                    placed = Some((x, y));
                    break;
                }
            }
            let (x, y) = placed.ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "could not place {} objects in a {} m disc",
                    spec.total_objects(),
                    spec.area_radius
                ))
            })?;
            let speed = if vmax > vmin { rng.random_range(vmin..vmax) } else { vmin };
            let yaw_rate = if !class.is_static() && rng.random::<f64>() < spec.turning_fraction {
                rng.random_range(-spec.max_yaw_rate..spec.max_yaw_rate)
            } else {
                0.0
            };
            trajectories.push(Trajectory {
                gt_id: next_id,
                class,
                start: BevBox::new(x, y, w, d, theta)?,
                speed,
                yaw_rate,
            });
            next_id += 1;
        }
    }
    scene_from_trajectories(&spec.scene_id, &trajectories, spec.duration_us, spec.frame_period_us)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::stream_rng;

    #[test]
    fn static_object_is_constant() {
        let b = BevBox::new(5.0, 5.0, 2.5, 0.5, 0.2).unwrap();
        let tr = Trajectory::constant_velocity(1, ClassLabel::Barrier, b, 0.0, 0.0);
        let scene = scene_from_trajectories("s", &[tr], 900_000, 100_000).unwrap();
        assert_eq!(scene.frames.len(), 10);
        for f in &scene.frames {
            assert_eq!(f.objects[0].bbox, b);
        }
    }

    #[test]
    fn constant_velocity_displacement() {
        let b = BevBox::new(0.0, 0.0, 1.9, 4.6, 0.0).unwrap();
        let tr = Trajectory::constant_velocity(1, ClassLabel::Car, b, 2.0, -1.0);
        let (p, vx, vy) = tr.at(0.5);
        assert!((p.x - 1.0).abs() < 1e-12);
        assert!((p.y + 0.5).abs() < 1e-12);
        assert!((vx - 2.0).abs() < 1e-12 && (vy + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_turn_keeps_speed_and_radius() {
        let b = BevBox::new(0.0, 0.0, 1.9, 4.6, 0.0).unwrap();
        let tr = Trajectory {
            gt_id: 1,
            class: ClassLabel::Car,
            start: b,
            speed: 5.0,
            yaw_rate: 0.5,
        };
        // Turning left from heading +y: the circle center sits at (-r, 0).
        let r = 10.0;
        for t in [0.3, 1.0, 2.7] {
            let (p, vx, vy) = tr.at(t);
            assert!(((p.x + r).hypot(p.y) - r).abs() < 1e-9);
            assert!((vx.hypot(vy) - 5.0).abs() < 1e-9);
        }
    }

    #[test]
    fn synth_is_deterministic() {
        let spec = SceneSpec::mixed("det", 20, 2_000_000, 100_000);
        let a = synth_scene(&spec, &mut stream_rng(7, 0)).unwrap();
        let b = synth_scene(&spec, &mut stream_rng(7, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(spec.total_objects(), 20);
        assert_eq!(a.frames.len(), 21);
        assert!(a.frames.iter().all(|f| f.objects.len() == 20));
    }

    #[test]
    fn mixed_counts_sum_to_total() {
        for total in [1, 7, 20, 33, 100] {
            assert_eq!(SceneSpec::mixed("m", total, 0, 1).total_objects(), total);
        }
    }

    #[test]
    fn validate_catches_bad_frames() {
        let mut scene = scene_from_trajectories(
            "v",
            &[Trajectory::constant_velocity(
                1,
                ClassLabel::Car,
                BevBox::new(0.0, 0.0, 1.0, 1.0, 0.0).unwrap(),
                0.0,
                0.0,
            )],
            200_000,
            100_000,
        )
        .unwrap();
        scene.frames[2].t_us = 100_000;
        assert!(scene.validate().is_err());
    }

    #[test]
    fn class_label_parses() {
        for c in ClassLabel::ALL {
            assert_eq!(c.as_str().parse::<ClassLabel>().unwrap(), c);
        }
        assert!("spaceship".parse::<ClassLabel>().is_err());
    }
}
