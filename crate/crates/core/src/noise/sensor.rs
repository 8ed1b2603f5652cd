use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{perturb_pose, perturb_size, ClassLabel, Frame, NoiseConfig, Scene};
use crate::error::{Error, Result};
use crate::geometry::{BevBox, Point2};
use crate::Micros;

/// Annulus `[r_min, r_max]` around the centroid of a frame's objects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annulus {
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for Annulus {
    fn default() -> Self {
        Self {
            r_min: 10.0,
            r_max: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Placement {
    Fixed { origin: Point2 },
    /// Redrawn for every observed frame.
    RandomPerFrame { annulus: Annulus },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub sensor_id: u32,
    pub placement: Placement,
    pub period_us: Micros,
    pub phase_us: Micros,
    pub latency_us: Micros,
    pub noise: NoiseConfig,
}

impl SensorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.period_us <= 0 {
            return Err(Error::Config(format!(
                "sensor {}: period must be > 0",
                self.sensor_id
            )));
        }
        if self.latency_us < 0 {
            return Err(Error::Config(format!(
                "sensor {}: latency must be >= 0",
                self.sensor_id
            )));
        }
        if let Placement::RandomPerFrame { annulus } = self.placement {
            if !(annulus.r_min >= 0.0 && annulus.r_max >= annulus.r_min) {
                return Err(Error::Config(format!(
                    "sensor {}: annulus needs 0 <= r_min <= r_max",
                    self.sensor_id
                )));
            }
        }
        self.noise.validate()
    }

    pub fn observes(&self, t_us: Micros) -> bool {
        (t_us - self.phase_us).rem_euclid(self.period_us) == 0
    }
}

/// Per-component standard deviations of a detection (theta in radians).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Sigma {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub w: f64,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BevBox,
    pub source: u32,
    pub t_meas: Micros,
    pub t_recv: Micros,
    pub gt_id: u64,
    pub class: ClassLabel,
    pub sigma: Sigma,
}

impl Detection {
    pub fn validate(&self) -> Result<()> {
        if self.t_recv < self.t_meas {
            return Err(Error::Validation(format!(
                "detection received before it was measured ({} < {})",
                self.t_recv, self.t_meas
            )));
        }
        let s = self.sigma;
        if [s.x, s.y, s.theta, s.w, s.d].iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Validation("negative detection sigma".into()));
        }
        BevBox::new(self.bbox.x, self.bbox.y, self.bbox.w, self.bbox.d, self.bbox.theta)?;
        Ok(())
    }
}

/// Uniform-area draw on an annulus about the frame's object centroid; the scene
/// origin stands in for the centroid of an empty frame.
pub fn place_secondary_sensor<R: Rng + ?Sized>(frame: &Frame, annulus: &Annulus, rng: &mut R) -> Point2 {
    let center = if frame.objects.is_empty() {
        Point2::ORIGIN
    } else {
        let n = frame.objects.len() as f64;
        let (sx, sy) = frame
            .objects
            .iter()
            .fold((0.0, 0.0), |(sx, sy), o| (sx + o.bbox.x, sy + o.bbox.y));
        Point2::new(sx / n, sy / n)
    };
    let lo2 = annulus.r_min * annulus.r_min;
    let hi2 = annulus.r_max * annulus.r_max;
    let r = if hi2 > lo2 {
        rng.random_range(lo2..hi2).sqrt()
    } else {
        annulus.r_min
    };
    let phi = rng.random_range(-PI..PI);
    Point2::new(center.x + r * phi.cos(), center.y + r * phi.sin())
}

/// One noisy detection per ground-truth object for every frame on the sensor's
/// sampling grid, in measurement-time order.
pub fn realize_detections<R: Rng + ?Sized>(
    scene: &Scene,
    sensor: &SensorSpec,
    rng: &mut R,
) -> Vec<Detection> {
    let mut out = Vec::new();
    for frame in scene.frames.iter().filter(|f| sensor.observes(f.t_us)) {
        let origin = match sensor.placement {
            Placement::Fixed { origin } => origin,
            Placement::RandomPerFrame { annulus } => place_secondary_sensor(frame, &annulus, rng),
        };
        for obj in &frame.objects {
            let pose = perturb_pose(&obj.bbox, origin, &sensor.noise, rng);
            let (w, d) = perturb_size(obj.bbox.w, obj.bbox.d, &sensor.noise, rng);
            out.push(Detection {
                bbox: BevBox {
                    x: pose.x,
                    y: pose.y,
                    w,
                    d,
                    theta: pose.theta,
                },
                source: sensor.sensor_id,
                t_meas: frame.t_us,
                t_recv: frame.t_us + sensor.latency_us,
                gt_id: obj.gt_id,
                class: obj.class,
                sigma: Sigma {
                    x: pose.sigma_x,
                    y: pose.sigma_y,
                    theta: pose.sigma_theta,
                    w: sensor.noise.sigma_alpha * obj.bbox.w,
                    d: sensor.noise.sigma_beta * obj.bbox.d,
                },
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::scene::{scene_from_trajectories, Trajectory};
    use crate::noise::{stream_rng, GtObject};

    fn one_object_scene(duration_us: Micros, period_us: Micros) -> Scene {
        let b = BevBox::new(12.0, -3.0, 1.9, 4.6, 0.4).unwrap();
        let tr = Trajectory::constant_velocity(9, ClassLabel::Car, b, 1.0, 0.5);
        scene_from_trajectories("one", &[tr], duration_us, period_us).unwrap()
    }

    fn sensor(period_us: Micros, latency_us: Micros, noise: NoiseConfig) -> SensorSpec {
        SensorSpec {
            sensor_id: 0,
            placement: Placement::Fixed { origin: Point2::ORIGIN },
            period_us,
            phase_us: 0,
            latency_us,
            noise,
        }
    }

    #[test]
    fn zero_noise_matches_ground_truth() {
        let scene = one_object_scene(1_000_000, 100_000);
        let dets = realize_detections(&scene, &sensor(100_000, 0, NoiseConfig::zero()), &mut stream_rng(1, 0));
        assert_eq!(dets.len(), scene.frames.len());
        for (det, frame) in dets.iter().zip(&scene.frames) {
            assert_eq!(det.bbox, frame.objects[0].bbox);
            assert_eq!(det.gt_id, 9);
            assert_eq!(det.class, ClassLabel::Car);
            assert_eq!(det.t_meas, det.t_recv);
        }
    }

    #[test]
    fn period_grid_selects_frames() {
        let scene = one_object_scene(1_000_000, 50_000);
        assert_eq!(scene.frames.len(), 21);
        let dets = realize_detections(&scene, &sensor(100_000, 0, NoiseConfig::zero()), &mut stream_rng(1, 0));
        assert_eq!(dets.len(), 11);
    }

    #[test]
    fn latency_shifts_arrival() {
        let scene = one_object_scene(1_000_000, 100_000);
        let dets = realize_detections(&scene, &sensor(100_000, 80_000, NoiseConfig::zero()), &mut stream_rng(1, 0));
        assert!(dets.iter().all(|d| d.t_recv - d.t_meas == 80_000));
    }

    fn frame_with(points: &[(f64, f64)]) -> Frame {
        Frame {
            t_us: 0,
            objects: points
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| GtObject {
                    gt_id: i as u64,
                    class: ClassLabel::Car,
                    bbox: BevBox::new(x, y, 1.0, 1.0, 0.0).unwrap(),
                    vx: 0.0,
                    vy: 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn placement_is_seeded_and_bounded() {
        let frame = frame_with(&[(10.0, 0.0), (20.0, 10.0)]);
        let ann = Annulus::default();
        let a = place_secondary_sensor(&frame, &ann, &mut stream_rng(3, 0));
        let b = place_secondary_sensor(&frame, &ann, &mut stream_rng(3, 0));
        assert_eq!(a, b);

        let centroid = Point2::new(15.0, 5.0);
        let mut rng = stream_rng(4, 0);
        for _ in 0..10_000 {
            let p = place_secondary_sensor(&frame, &ann, &mut rng);
            let r = p.distance(&centroid);
            assert!(r >= ann.r_min - 1e-9 && r <= ann.r_max + 1e-9);
        }
    }

    #[test]
    fn placement_radii_are_area_uniform() {
        // Under a uniform-area law the radius CDF is (r^2 - lo^2) / (hi^2 - lo^2),
        // so each area decile has radial edges at sqrt(lo^2 + k/10 (hi^2 - lo^2)).
        let frame = frame_with(&[]);
        let ann = Annulus::default();
        let mut rng = stream_rng(5, 0);
        let n = 100_000;
        let lo2 = ann.r_min.powi(2);
        let span = ann.r_max.powi(2) - lo2;
        let mut bins = [0usize; 10];
        for _ in 0..n {
            let r = place_secondary_sensor(&frame, &ann, &mut rng).distance(&Point2::ORIGIN);
            let k = (((r * r - lo2) / span) * 10.0).floor().clamp(0.0, 9.0) as usize;
            bins[k] += 1;
        }
        for count in bins {
            let frac = count as f64 / n as f64;
            assert!((frac - 0.1).abs() <= 0.1 * 0.05, "decile share {frac}");
        }
    }

    #[test]
    fn empty_frame_falls_back_to_origin() {
        let ann = Annulus { r_min: 5.0, r_max: 5.0 };
        let p = place_secondary_sensor(&frame_with(&[]), &ann, &mut stream_rng(1, 1));
        assert!((p.distance(&Point2::ORIGIN) - 5.0).abs() < 1e-9);
    }
}
