//! Controlled noise injection on ground-truth boxes.
//!
//! Position and yaw errors are zero-mean Gaussians whose standard deviation grows
//! linearly with the object-sensor distance. Width and depth are scaled by
//! multiplicative factors drawn from a unit-mean Gaussian truncated to
//! `[clip_lo, clip_hi]`.

mod scene;
mod sensor;

pub use scene::{
    scene_from_trajectories, synth_scene, ClassLabel, Frame, GtObject, Scene, SceneSpec, Trajectory,
};
pub use sensor::{
    place_secondary_sensor, realize_detections, Annulus, Detection, Placement, SensorSpec, Sigma,
};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle_unchecked, BevBox, Point2};

/// One sensor's error profile. Angles are radians, rates are per meter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub sigma_x0: f64,
    pub sigma_y0: f64,
    pub sigma_theta0: f64,
    pub k_x: f64,
    pub k_y: f64,
    pub k_theta: f64,
    pub sigma_alpha: f64,
    pub sigma_beta: f64,
    pub clip_lo: f64,
    pub clip_hi: f64,
}

impl NoiseConfig {
    pub const DEFAULT_CLIP_LO: f64 = 0.3;
    pub const DEFAULT_CLIP_HI: f64 = 3.0;

    /// A profile that leaves boxes untouched.
    pub fn zero() -> Self {
        Self {
            sigma_x0: 0.0,
            sigma_y0: 0.0,
            sigma_theta0: 0.0,
            k_x: 0.0,
            k_y: 0.0,
            k_theta: 0.0,
            sigma_alpha: 0.0,
            sigma_beta: 0.0,
            clip_lo: Self::DEFAULT_CLIP_LO,
            clip_hi: Self::DEFAULT_CLIP_HI,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("sigma_x0", self.sigma_x0),
            ("sigma_y0", self.sigma_y0),
            ("sigma_theta0", self.sigma_theta0),
            ("k_x", self.k_x),
            ("k_y", self.k_y),
            ("k_theta", self.k_theta),
            ("sigma_alpha", self.sigma_alpha),
            ("sigma_beta", self.sigma_beta),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.clip_lo > 0.0 && self.clip_lo < 1.0 && self.clip_hi > 1.0 && self.clip_hi.is_finite()) {
            return Err(Error::Config(format!(
                "size clip bounds must satisfy 0 < lo < 1 < hi, got [{}, {}]",
                self.clip_lo, self.clip_hi
            )));
        }
        Ok(())
    }

    /// Position and yaw standard deviations at `dist` meters from the sensor.
    pub fn sigmas_at(&self, dist: f64) -> (f64, f64, f64) {
        (
            self.sigma_x0 + self.k_x * dist,
            self.sigma_y0 + self.k_y * dist,
            self.sigma_theta0 + self.k_theta * dist,
        )
    }
}

/// Linear growth of a standard deviation with distance: `base + rate * dist`.
pub fn sigma_at_distance(base: f64, rate: f64, dist: f64) -> Result<f64> {
    if !(dist.is_finite() && dist >= 0.0) {
        return Err(Error::InvalidArgument(format!("distance must be >= 0, got {dist}")));
    }
    if !(base >= 0.0 && rate >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "base and rate must be >= 0, got base={base} rate={rate}"
        )));
    }
    Ok(base + rate * dist)
}

/// Perturbed pose plus the standard deviations it was drawn with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSample {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_theta: f64,
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    let n: f64 = rng.sample(StandardNormal);
    n * sigma
}

/// Adds distance-scaled Gaussian noise to a box's center and yaw.
///
/// The distance is taken from the unperturbed center. Three normals are always
/// drawn (x, y, theta in that order) so streams stay aligned across profiles.
pub fn perturb_pose<R: Rng + ?Sized>(
    b: &BevBox,
    sensor_origin: Point2,
    cfg: &NoiseConfig,
    rng: &mut R,
) -> PoseSample {
    let dist = b.center().distance(&sensor_origin);
    let (sx, sy, st) = cfg.sigmas_at(dist);
    let dx = gaussian(rng, sx);
    let dy = gaussian(rng, sy);
    let dt = gaussian(rng, st);
    PoseSample {
        x: b.x + dx,
        y: b.y + dy,
        theta: wrap_angle_unchecked(b.theta + dt),
        sigma_x: sx,
        sigma_y: sy,
        sigma_theta: st,
    }
}

/// Draws a factor from `N(1, sigma^2)` restricted to `[lo, hi]` by rejection.
pub fn truncated_scale<R: Rng + ?Sized>(sigma: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    for _ in 0..100_000 {
        let f = 1.0 + gaussian(rng, sigma);
        if (lo..=hi).contains(&f) {
            return f;
        }
    }
    // Only reachable for absurd sigmas; the clamp keeps the output valid.
    (1.0 + gaussian(rng, sigma)).clamp(lo, hi)
}

/// Multiplicative width/depth noise with soft clipping of the scale factors.
pub fn perturb_size<R: Rng + ?Sized>(w: f64, d: f64, cfg: &NoiseConfig, rng: &mut R) -> (f64, f64) {
    let alpha = truncated_scale(cfg.sigma_alpha, cfg.clip_lo, cfg.clip_hi, rng);
    let beta = truncated_scale(cfg.sigma_beta, cfg.clip_lo, cfg.clip_hi, rng);
    (alpha * w, beta * d)
}

/// Independent, reproducible random stream for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream id for one sensor within one trial. Trials never share streams.
pub fn trial_stream(trial: u32, sensor_index: u32) -> u64 {
    ((trial as u64 + 1) << 16) | sensor_index as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise1() -> NoiseConfig {
        NoiseConfig {
            sigma_x0: 0.2,
            sigma_y0: 0.2,
            sigma_theta0: 0.2f64.to_radians(),
            k_x: 0.01,
            k_y: 0.01,
            k_theta: 0.1f64.to_radians(),
            sigma_alpha: 0.2,
            sigma_beta: 0.2,
            ..NoiseConfig::zero()
        }
    }

    #[test]
    fn sigma_at_distance_examples() {
        assert_eq!(sigma_at_distance(0.2, 0.01, 0.0).unwrap(), 0.2);
        assert!((sigma_at_distance(0.2, 0.01, 50.0).unwrap() - 0.7).abs() < 1e-12);
        assert!((sigma_at_distance(1.0, 0.01, 100.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(sigma_at_distance(0.2, 0.01, -1.0).is_err());
    }

    #[test]
    fn zero_noise_is_identity() {
        let b = BevBox::new(3.0, -4.0, 2.0, 4.5, 0.7).unwrap();
        let mut rng = stream_rng(1, 0);
        let p = perturb_pose(&b, Point2::ORIGIN, &NoiseConfig::zero(), &mut rng);
        assert_eq!((p.x, p.y, p.theta), (b.x, b.y, b.theta));
        assert_eq!(perturb_size(2.0, 4.5, &NoiseConfig::zero(), &mut rng), (2.0, 4.5));
    }

    #[test]
    fn seeded_perturbation_replays() {
        let b = BevBox::new(10.0, 0.0, 2.0, 4.0, 0.0).unwrap();
        let a = perturb_pose(&b, Point2::ORIGIN, &noise1(), &mut stream_rng(42, 0));
        let c = perturb_pose(&b, Point2::ORIGIN, &noise1(), &mut stream_rng(42, 0));
        assert_eq!(a, c);
        let other = perturb_pose(&b, Point2::ORIGIN, &noise1(), &mut stream_rng(42, 1));
        assert_ne!(a, other);
    }

    #[test]
    fn pose_noise_std_at_50m() {
        let b = BevBox::new(50.0, 0.0, 2.0, 4.0, 0.0).unwrap();
        let mut rng = stream_rng(7, 0);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let p = perturb_pose(&b, Point2::ORIGIN, &noise1(), &mut rng);
            assert!((p.sigma_x - 0.7).abs() < 1e-12);
            let e = p.x - b.x;
            sum += e;
            sum2 += e * e;
        }
        let mean = sum / n as f64;
        let std = (sum2 / n as f64 - mean * mean).sqrt();
        assert!((std - 0.7).abs() / 0.7 < 0.03, "std {std}");
        assert!(mean.abs() < 3.0 * 0.7 / (n as f64).sqrt());
    }

    #[test]
    fn size_factors_respect_bounds() {
        let cfg = NoiseConfig {
            sigma_alpha: 1.0,
            sigma_beta: 1.0,
            ..NoiseConfig::zero()
        };
        let mut rng = stream_rng(3, 0);
        for _ in 0..20_000 {
            let (w, d) = perturb_size(2.0, 5.0, &cfg, &mut rng);
            assert!((0.6..=6.0).contains(&w));
            assert!((1.5..=15.0).contains(&d));
        }
    }

    #[test]
    fn size_factor_mean_near_one() {
        let cfg = NoiseConfig {
            sigma_alpha: 0.2,
            ..NoiseConfig::zero()
        };
        let mut rng = stream_rng(5, 0);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| perturb_size(1.0, 1.0, &cfg, &mut rng).0).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn config_validation() {
        assert!(noise1().validate().is_ok());
        let bad = NoiseConfig { clip_lo: 1.2, ..noise1() };
        assert!(bad.validate().is_err());
        let bad = NoiseConfig { k_x: -0.1, ..noise1() };
        assert!(bad.validate().is_err());
    }
}
