use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Disposition, FilterParams, Measurement, TrackState};
use crate::assoc::{assign_max_score, combined_score, CsbaParams};
use crate::baselines::{csba_groups, wls_fuse};
use crate::error::Result;
use crate::geometry::BevBox;
use crate::noise::{ClassLabel, Detection, Sigma};
use crate::Micros;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerParams {
    pub filter: FilterParams,
    pub csba: CsbaParams,
    /// Minimum combined score between a group and a predicted track.
    pub track_gate: f64,
    /// Tracks without an accepted measurement for this long are dropped.
    pub retire_after: Micros,
}

impl Default for TrackerParams {
    fn default() -> Self {
        let filter = FilterParams::default();
        let csba = CsbaParams::default();
        Self {
            filter,
            csba,
            track_gate: csba.gate,
            retire_after: 2 * filter.delta_max,
        }
    }
}

/// One fused box emitted for a track at an evaluation time.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedOutput {
    pub track_id: u64,
    pub class: ClassLabel,
    /// Majority lineage of the detections accepted this frame.
    pub gt_id: u64,
    pub t: Micros,
    pub bbox: BevBox,
    pub vx: f64,
    pub vy: f64,
    pub sigma: Sigma,
}

/// The track table plus the bookkeeping of the most recent frame.
#[derive(Debug, Clone)]
pub struct Tracker {
    params: TrackerParams,
    tracks: Vec<TrackState>,
    next_id: u64,
    last_dispositions: Vec<(usize, Disposition)>,
    /// Lineage votes of the current frame, keyed by track id.
    votes: BTreeMap<u64, Vec<u64>>,
}

impl Tracker {
    pub fn new(params: TrackerParams) -> Self {
        Self {
            params,
            tracks: Vec::new(),
            next_id: 1,
            last_dispositions: Vec::new(),
            votes: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> &TrackerParams {
        &self.params
    }

    pub fn tracks(&self) -> &[TrackState] {
        &self.tracks
    }

    /// `(detection index, disposition)` for every detection of the last frame,
    /// including the ones that started a track (reported as synchronous).
    pub fn last_dispositions(&self) -> &[(usize, Disposition)] {
        &self.last_dispositions
    }

    /// Processes one evaluation frame of raw detections.
    ///
    /// Detections are cut into scans (measurement times within `epsilon_s` of
    /// each other), scans are taken in arrival order, and each scan is grouped
    /// across sources with CSBA before being handed to the filters.
    pub fn run_frame(&mut self, dets: &[Detection], t_eval: Micros) -> Result<Vec<FusedOutput>> {
        self.begin_frame(t_eval);
        for scan in scans(dets, self.params.filter.epsilon_s) {
            let sub: Vec<Detection> = scan.iter().map(|&i| dets[i].clone()).collect();
            let groups: Vec<Vec<usize>> = csba_groups(&sub, &self.params.csba)?
                .into_iter()
                .map(|g| g.into_iter().map(|k| scan[k]).collect())
                .collect();
            self.ingest_groups(dets, &groups)?;
        }
        Ok(self.emit(t_eval))
    }

    /// Ingests pre-associated groups (indices into `dets`) and emits one box at
    /// `t_eval` for every track that accepted a measurement.
    pub fn run_unikf_frame(
        &mut self,
        dets: &[Detection],
        groups: &[Vec<usize>],
        t_eval: Micros,
    ) -> Result<Vec<FusedOutput>> {
        self.begin_frame(t_eval);
        self.ingest_groups(dets, groups)?;
        Ok(self.emit(t_eval))
    }

    fn begin_frame(&mut self, t_eval: Micros) {
        let retire_after = self.params.retire_after;
        self.tracks.retain(|t| t_eval - t.last_accept() <= retire_after);
        self.last_dispositions.clear();
        self.votes.clear();
    }

    /// Matches groups to live tracks by combined score against the track
    /// predicted to the group's time (Hungarian, gated); unmatched groups open
    /// tracks. Members are ingested in arrival order.
    fn ingest_groups(&mut self, dets: &[Detection], groups: &[Vec<usize>]) -> Result<()> {
        let fp = self.params.filter;
        let groups: Vec<&Vec<usize>> = groups.iter().filter(|g| !g.is_empty()).collect();
        let mut reps = Vec::with_capacity(groups.len());
        for g in &groups {
            let members: Vec<Detection> = g.iter().map(|&i| dets[i].clone()).collect();
            let est = wls_fuse(&members)?;
            let t_rep = members.iter().map(|m| m.t_meas).max().expect("non-empty group");
            reps.push((est.bbox(), est.sigma(), t_rep, members[0].class));
        }

        let n_t = self.tracks.len();
        let mut scores = vec![0.0; groups.len() * n_t];
        for (gi, (rb, rs, t_rep, class)) in reps.iter().enumerate() {
            for (ti, track) in self.tracks.iter().enumerate() {
                if track.class != *class || (t_rep - track.t_filter()).abs() > fp.delta_max {
                    continue;
                }
                let fb = track.state_at(*t_rep, &fp).fused_box();
                scores[gi * n_t + ti] = combined_score(rb, rs, &fb.bbox, &fb.sigma, &self.params.csba);
            }
        }
        let mut target: Vec<Option<usize>> = vec![None; groups.len()];
        for (gi, ti) in assign_max_score(&scores, groups.len(), n_t) {
            let s = scores[gi * n_t + ti];
            if s > 0.0 && s >= self.params.track_gate {
                target[gi] = Some(ti);
            }
        }

        for (gi, g) in groups.iter().enumerate() {
            let mut order: Vec<usize> = g.to_vec();
            order.sort_by_key(|&i| (dets[i].t_recv, i));
            let ti = match target[gi] {
                Some(ti) => ti,
                None => {
                    let first = *order
                        .iter()
                        .min_by_key(|&&i| (dets[i].t_meas, dets[i].t_recv, i))
                        .expect("non-empty group");
                    let track = TrackState::new(self.next_id, &dets[first], &fp);
                    self.votes.entry(self.next_id).or_default().push(dets[first].gt_id);
                    self.next_id += 1;
                    self.tracks.push(track);
                    self.last_dispositions.push((first, Disposition::Synchronous));
                    order.retain(|&i| i != first);
                    self.tracks.len() - 1
                }
            };
            for i in order {
                let m = Measurement::from_detection(&dets[i], &fp);
                let track = &mut self.tracks[ti];
                let d = track.ingest_received(&m, dets[i].t_recv, &fp)?;
                if d.accepted() {
                    track.last_gt_id = dets[i].gt_id;
                    self.votes.entry(track.track_id).or_default().push(dets[i].gt_id);
                }
                self.last_dispositions.push((i, d));
            }
        }
        Ok(())
    }

    fn emit(&self, t_eval: Micros) -> Vec<FusedOutput> {
        let fp = self.params.filter;
        self.tracks
            .iter()
            .filter_map(|track| {
                let votes = self.votes.get(&track.track_id)?;
                let fb = track.state_at(t_eval, &fp).fused_box();
                Some(FusedOutput {
                    track_id: track.track_id,
                    class: track.class,
                    gt_id: majority(votes),
                    t: t_eval,
                    bbox: fb.bbox,
                    vx: fb.vx,
                    vy: fb.vy,
                    sigma: fb.sigma,
                })
            })
            .collect()
    }
}

/// Splits detections into scans: runs of measurement times no more than
/// `epsilon` apart. Scans are ordered by earliest arrival, then by time.
fn scans(dets: &[Detection], epsilon: Micros) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by_key(|&i| (dets[i].t_meas, i));
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut start = Micros::MIN;
    for i in order {
        match out.last_mut() {
            Some(scan) if dets[i].t_meas - start <= epsilon => scan.push(i),
            _ => {
                start = dets[i].t_meas;
                out.push(vec![i]);
            }
        }
    }
    out.sort_by_key(|scan| {
        let recv = scan.iter().map(|&i| dets[i].t_recv).min().unwrap_or(0);
        (recv, dets[scan[0]].t_meas)
    });
    out
}

/// Most frequent value; ties go to the one seen first.
fn majority(votes: &[u64]) -> u64 {
    let mut best = votes[0];
    let mut best_count = 0;
    for &v in votes {
        let c = votes.iter().filter(|&&u| u == v).count();
        if c > best_count {
            best = v;
            best_count = c;
        }
    }
    best
}
