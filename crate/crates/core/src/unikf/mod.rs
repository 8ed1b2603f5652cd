//! Per-object Kalman fusion over the BEV state `[x y vx vy w d theta]`.
//!
//! Measurements carry their own timestamps and are routed by [`TrackState::ingest`]:
//! updates within `epsilon_s` of the filter clock are synchronous, older ones roll
//! the filter back to a stored snapshot and replay, newer ones advance the clock.
//! Anything further than `delta_max` away is discarded.

mod tracker;

pub use tracker::{FusedOutput, Tracker, TrackerParams};

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle_unchecked, BevBox};
use crate::noise::{ClassLabel, Detection, Sigma};
use crate::{micros_to_secs, Micros};

pub type StateVector = SVector<f64, 7>;
pub type StateCov = SMatrix<f64, 7, 7>;
pub type MeasVector = SVector<f64, 5>;

const IX: usize = 0;
const IY: usize = 1;
const IVX: usize = 2;
const IVY: usize = 3;
const IW: usize = 4;
const ID: usize = 5;
const ITH: usize = 6;

/// State indices observed by a measurement, in measurement order.
pub const OBSERVED: [usize; 5] = [IX, IY, IW, ID, ITH];
/// Smallest admissible width/depth after an update.
const MIN_SIZE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub epsilon_s: Micros,
    pub delta_max: Micros,
    /// Spectral density of the white-noise acceleration, m^2/s^3.
    pub accel_density: f64,
    /// Random-walk intensity on width and depth, m/sqrt(s).
    pub size_walk: f64,
    /// Random-walk intensity on yaw, rad/sqrt(s).
    pub theta_walk: f64,
    /// Multiplier on the measurement variances for the initial covariance.
    pub p0_scale: f64,
    /// Initial velocity variance, (m/s)^2.
    pub velocity_var0: f64,
    /// Lower bound applied to every measurement variance.
    pub r_floor: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            epsilon_s: 10_000,
            delta_max: 500_000,
            accel_density: 1.0,
            size_walk: 0.05,
            theta_walk: 0.05,
            p0_scale: 1.0,
            velocity_var0: 100.0,
            r_floor: 1e-6,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon_s < 0 || self.delta_max <= self.epsilon_s {
            return Err(Error::Config(format!(
                "need 0 <= epsilon_s < delta_max, got {} and {}",
                self.epsilon_s, self.delta_max
            )));
        }
        for (name, v) in [
            ("accel_density", self.accel_density),
            ("size_walk", self.size_walk),
            ("theta_walk", self.theta_walk),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [
            ("p0_scale", self.p0_scale),
            ("velocity_var0", self.velocity_var0),
            ("r_floor", self.r_floor),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Observation of `(x, y, w, d, theta)` with a diagonal covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub z: MeasVector,
    /// Diagonal of the measurement covariance.
    pub r: MeasVector,
    pub t_meas: Micros,
    pub source: u32,
}

impl Measurement {
    pub fn new(z: MeasVector, r: MeasVector, t_meas: Micros, source: u32) -> Result<Self> {
        if r.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "measurement variances must be > 0, got {:?}",
                r.as_slice()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite measurement".into()));
        }
        let mut z = z;
        z[4] = wrap_angle_unchecked(z[4]);
        Ok(Self { z, r, t_meas, source })
    }

    /// Variances are the squared detection sigmas, floored at `params.r_floor`.
    pub fn from_detection(det: &Detection, params: &FilterParams) -> Self {
        let b = &det.bbox;
        let s = &det.sigma;
        let floor = |sd: f64| (sd * sd).max(params.r_floor);
        Self {
            z: MeasVector::new(b.x, b.y, b.w, b.d, wrap_angle_unchecked(b.theta)),
            r: MeasVector::new(floor(s.x), floor(s.y), floor(s.w), floor(s.d), floor(s.theta)),
            t_meas: det.t_meas,
            source: det.source,
        }
    }

    pub fn r_matrix(&self) -> SMatrix<f64, 5, 5> {
        SMatrix::from_diagonal(&self.r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    /// Older than `delta_max`.
    TooOld,
    /// Further ahead than `delta_max`.
    TooNew,
    /// Within `delta_max` but older than every stored snapshot.
    HistoryUnderflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    Synchronous,
    OutOfSequence,
    Asynchronous,
    Discarded(DiscardReason),
}

impl Disposition {
    pub fn accepted(&self) -> bool {
        !matches!(self, Disposition::Discarded(_))
    }
}

/// Filter state after all measurements applied at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: Micros,
    pub x: StateVector,
    pub p: StateCov,
    pub applied: Vec<Measurement>,
}

/// A state estimate detached from the track, e.g. a query at an output time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub t: Micros,
    pub x: StateVector,
    pub p: StateCov,
}

/// Read-out of an estimate as a box with velocity and per-component std.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusedBox {
    pub bbox: BevBox,
    pub vx: f64,
    pub vy: f64,
    pub sigma: Sigma,
}

impl Estimate {
    pub fn fused_box(&self) -> FusedBox {
        let x = &self.x;
        let sd = |i: usize| self.p[(i, i)].max(0.0).sqrt();
        FusedBox {
            bbox: BevBox {
                x: x[IX],
                y: x[IY],
                w: x[IW],
                d: x[ID],
                theta: wrap_angle_unchecked(x[ITH]),
            },
            vx: x[IVX],
            vy: x[IVY],
            sigma: Sigma {
                x: sd(IX),
                y: sd(IY),
                theta: sd(ITH),
                w: sd(IW),
                d: sd(ID),
            },
        }
    }
}

/// Constant-velocity transition for `dt` seconds.
pub fn transition(dt: f64) -> StateCov {
    let mut f = StateCov::identity();
    f[(IX, IVX)] = dt;
    f[(IY, IVY)] = dt;
    f
}

/// Process noise for an elapsed `|dt|` seconds.
pub fn process_noise(dt: f64, params: &FilterParams) -> StateCov {
    let dt = dt.abs();
    let q = params.accel_density;
    let mut m = StateCov::zeros();
    for (p, v) in [(IX, IVX), (IY, IVY)] {
        m[(p, p)] = q * dt.powi(3) / 3.0;
        m[(p, v)] = q * dt * dt / 2.0;
        m[(v, p)] = q * dt * dt / 2.0;
        m[(v, v)] = q * dt;
    }
    m[(IW, IW)] = params.size_walk.powi(2) * dt;
    m[(ID, ID)] = params.size_walk.powi(2) * dt;
    m[(ITH, ITH)] = params.theta_walk.powi(2) * dt;
    m
}

fn symmetrize(p: &mut StateCov) {
    *p = (*p + p.transpose()) * 0.5;
}

fn propagate(x: &mut StateVector, p: &mut StateCov, dt_us: Micros, params: &FilterParams) {
    if dt_us == 0 {
        return;
    }
    let dt = micros_to_secs(dt_us);
    let f = transition(dt);
    *x = f * *x;
    x[ITH] = wrap_angle_unchecked(x[ITH]);
    *p = f * *p * f.transpose() + process_noise(dt, params);
    symmetrize(p);
}

fn kalman_update(x: &mut StateVector, p: &mut StateCov, m: &Measurement) -> Result<()> {
    let mut h = SMatrix::<f64, 5, 7>::zeros();
    for (row, &col) in OBSERVED.iter().enumerate() {
        h[(row, col)] = 1.0;
    }
    let mut nu = m.z - h * *x;
    nu[4] = wrap_angle_unchecked(nu[4]);
    let s = h * *p * h.transpose() + m.r_matrix();
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::FilterDegenerate("innovation covariance is not positive definite".into()))?;
    // K = P H^T S^-1, computed as (S^-1 H P)^T with S symmetric.
    let k = chol.solve(&(h * *p)).transpose();
    let mut xn = *x + k * nu;
    xn[ITH] = wrap_angle_unchecked(xn[ITH]);
    xn[IW] = xn[IW].max(MIN_SIZE);
    xn[ID] = xn[ID].max(MIN_SIZE);
    let i_kh = StateCov::identity() - k * h;
    let mut pn = i_kh * *p * i_kh.transpose() + k * m.r_matrix() * k.transpose();
    symmetrize(&mut pn);
    if xn.iter().chain(pn.iter()).any(|v| !v.is_finite()) {
        return Err(Error::FilterDegenerate("non-finite posterior".into()));
    }
    *x = xn;
    *p = pn;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub track_id: u64,
    pub class: ClassLabel,
    /// Ground-truth lineage of the latest accepted detection; bookkeeping only.
    pub last_gt_id: u64,
    x: StateVector,
    p: StateCov,
    t_filter: Micros,
    /// Receive time of the latest accepted measurement's detection, if known.
    last_accept: Micros,
    history: Vec<Snapshot>,
}

/// Starts a track from a detection with zero velocity.
pub fn init_track(det: &Detection, params: &FilterParams) -> TrackState {
    TrackState::new(0, det, params)
}

impl TrackState {
    pub fn new(track_id: u64, det: &Detection, params: &FilterParams) -> Self {
        let m = Measurement::from_detection(det, params);
        let mut x = StateVector::zeros();
        let mut p = StateCov::zeros();
        for (row, &col) in OBSERVED.iter().enumerate() {
            x[col] = m.z[row];
            p[(col, col)] = m.r[row] * params.p0_scale;
        }
        p[(IVX, IVX)] = params.velocity_var0;
        p[(IVY, IVY)] = params.velocity_var0;
        let t = det.t_meas;
        Self {
            track_id,
            class: det.class,
            last_gt_id: det.gt_id,
            x,
            p,
            t_filter: t,
            last_accept: det.t_recv,
            history: vec![Snapshot {
                t,
                x,
                p,
                applied: vec![m],
            }],
        }
    }

    pub fn x(&self) -> &StateVector {
        &self.x
    }

    pub fn p(&self) -> &StateCov {
        &self.p
    }

    pub fn t_filter(&self) -> Micros {
        self.t_filter
    }

    pub fn last_accept(&self) -> Micros {
        self.last_accept
    }

    pub fn history(&self) -> &[Snapshot] {
        &self.history
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            t: self.t_filter,
            x: self.x,
            p: self.p,
        }
    }

    pub fn fused_box(&self) -> FusedBox {
        self.estimate().fused_box()
    }

    /// Moves the filter clock by `dt_us` (either sign) without touching history.
    pub fn predict(&mut self, dt_us: Micros, params: &FilterParams) -> Result<()> {
        if dt_us.abs() > params.delta_max {
            return Err(Error::OutOfRange(format!(
                "prediction step {dt_us} us exceeds delta_max {} us",
                params.delta_max
            )));
        }
        propagate(&mut self.x, &mut self.p, dt_us, params);
        self.t_filter += dt_us;
        Ok(())
    }

    /// Kalman update at the current filter time; history is not touched.
    pub fn update(&mut self, m: &Measurement) -> Result<()> {
        kalman_update(&mut self.x, &mut self.p, m)
    }

    /// Estimate at `t`, propagated from the latest snapshot at or before `t`
    /// (or the oldest one when `t` precedes them all).
    pub fn state_at(&self, t: Micros, params: &FilterParams) -> Estimate {
        let snap = self
            .history
            .iter()
            .rev()
            .find(|s| s.t <= t)
            .unwrap_or(&self.history[0]);
        let mut x = snap.x;
        let mut p = snap.p;
        propagate(&mut x, &mut p, t - snap.t, params);
        Estimate { t, x, p }
    }

    /// Routes a measurement by its timestamp relative to the filter clock.
    /// On error and on discard the track is left unchanged.
    pub fn ingest(&mut self, m: &Measurement, params: &FilterParams) -> Result<Disposition> {
        self.ingest_received(m, m.t_meas, params)
    }

    /// Like [`ingest`](Self::ingest), recording `t_recv` as the acceptance time.
    pub fn ingest_received(&mut self, m: &Measurement, t_recv: Micros, params: &FilterParams) -> Result<Disposition> {
        let dt = m.t_meas - self.t_filter;
        let disposition = if dt.abs() <= params.epsilon_s {
            let mut x = self.x;
            let mut p = self.p;
            kalman_update(&mut x, &mut p, m)?;
            self.x = x;
            self.p = p;
            let last = self.history.last_mut().expect("history is never empty");
            last.x = x;
            last.p = p;
            last.applied.push(m.clone());
            Disposition::Synchronous
        } else if dt < 0 {
            if -dt > params.delta_max {
                return Ok(Disposition::Discarded(DiscardReason::TooOld));
            }
            match self.rollback(m, params)? {
                Some(()) => Disposition::OutOfSequence,
                None => return Ok(Disposition::Discarded(DiscardReason::HistoryUnderflow)),
            }
        } else {
            if dt > params.delta_max {
                return Ok(Disposition::Discarded(DiscardReason::TooNew));
            }
            let mut x = self.x;
            let mut p = self.p;
            propagate(&mut x, &mut p, dt, params);
            kalman_update(&mut x, &mut p, m)?;
            self.x = x;
            self.p = p;
            self.t_filter = m.t_meas;
            self.history.push(Snapshot {
                t: m.t_meas,
                x,
                p,
                applied: vec![m.clone()],
            });
            Disposition::Asynchronous
        };
        self.last_accept = self.last_accept.max(t_recv);
        self.prune(params);
        Ok(disposition)
    }

    /// Rolls back to the latest snapshot at or before `m.t_meas` and replays `m`
    /// together with every later buffered measurement in time order. `None` when
    /// no snapshot is old enough.
    fn rollback(&mut self, m: &Measurement, params: &FilterParams) -> Result<Option<()>> {
        let Some(k) = self.history.iter().rposition(|s| s.t <= m.t_meas) else {
            return Ok(None);
        };
        let mut replay: Vec<Measurement> = self.history[k + 1..]
            .iter()
            .flat_map(|s| s.applied.iter().cloned())
            .collect();
        replay.push(m.clone());
        replay.sort_by_key(|mm| mm.t_meas);

        let mut history: Vec<Snapshot> = self.history[..=k].to_vec();
        let mut x = history[k].x;
        let mut p = history[k].p;
        let mut t = history[k].t;
        for mm in &replay {
            if (mm.t_meas - t).abs() <= params.epsilon_s {
                kalman_update(&mut x, &mut p, mm)?;
                let last = history.last_mut().expect("non-empty");
                last.x = x;
                last.p = p;
                last.applied.push(mm.clone());
            } else {
                propagate(&mut x, &mut p, mm.t_meas - t, params);
                kalman_update(&mut x, &mut p, mm)?;
                t = mm.t_meas;
                history.push(Snapshot {
                    t,
                    x,
                    p,
                    applied: vec![mm.clone()],
                });
            }
        }
        if t != self.t_filter {
            propagate(&mut x, &mut p, self.t_filter - t, params);
            history.push(Snapshot {
                t: self.t_filter,
                x,
                p,
                applied: Vec::new(),
            });
        }
        self.x = x;
        self.p = p;
        self.history = history;
        Ok(Some(()))
    }

    fn prune(&mut self, params: &FilterParams) {
        let horizon = self.t_filter - params.delta_max;
        let keep_from = self
            .history
            .iter()
            .position(|s| s.t >= horizon)
            .unwrap_or(self.history.len() - 1);
        self.history.drain(..keep_from);
    }
}
