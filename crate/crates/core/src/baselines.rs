//! Reference late-fusion methods: NMS (IoU and GIoU), WBF, PSA, distance-based
//! pairing, and inverse-variance (WLS) fusion of associated groups.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::assoc::{combined_score, assign_max_score, dist_associate, CsbaParams};
use crate::error::{Error, Result};
use crate::geometry::{giou_with_mode, iou_with_mode, wrap_angle_unchecked, BevBox, OverlapMode};
use crate::noise::{Detection, Sigma};
use crate::Micros;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDetection {
    pub det: Detection,
    /// Confidence in `(0, 1]`.
    pub score: f64,
}

/// Certainty-derived confidence: `1 / (1 + sigma_x + sigma_y)`.
pub fn detection_score(det: &Detection) -> f64 {
    1.0 / (1.0 + det.sigma.x + det.sigma.y)
}

impl ScoredDetection {
    pub fn from_detection(det: Detection) -> Self {
        let score = detection_score(&det);
        Self { det, score }
    }
}

/// Score descending, then source ascending, then measurement time ascending.
fn rank(a: &ScoredDetection, b: &ScoredDetection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.det.source.cmp(&b.det.source))
        .then(a.det.t_meas.cmp(&b.det.t_meas))
}

fn ranked(dets: &[ScoredDetection]) -> Vec<&ScoredDetection> {
    let mut order: Vec<&ScoredDetection> = dets.iter().collect();
    order.sort_by(|a, b| rank(a, b));
    order
}

fn suppress<F>(dets: &[ScoredDetection], overlaps: F) -> Vec<ScoredDetection>
where
    F: Fn(&BevBox, &BevBox) -> bool,
{
    let mut kept: Vec<ScoredDetection> = Vec::new();
    for cand in ranked(dets) {
        let suppressed = kept
            .iter()
            .any(|k| k.det.class == cand.det.class && overlaps(&k.det.bbox, &cand.det.bbox));
        if !suppressed {
            kept.push(cand.clone());
        }
    }
    kept
}

/// Greedy NMS: keep the best remaining box, drop same-class boxes with IoU >= `iou_th`.
pub fn nms_std(dets: &[ScoredDetection], iou_th: f64, mode: OverlapMode) -> Vec<ScoredDetection> {
    suppress(dets, |a, b| iou_with_mode(a, b, mode) >= iou_th)
}

/// NMS with GIoU as the suppression predicate.
pub fn nms_giou(dets: &[ScoredDetection], giou_th: f64, mode: OverlapMode) -> Vec<ScoredDetection> {
    suppress(dets, |a, b| giou_with_mode(a, b, mode) >= giou_th)
}

/// Weighted circular mean of angles.
pub fn circular_mean(angles: &[f64], weights: &[f64]) -> f64 {
    let (s, c) = angles
        .iter()
        .zip(weights)
        .fold((0.0, 0.0), |(s, c), (a, w)| (s + w * a.sin(), c + w * a.cos()));
    if s == 0.0 && c == 0.0 {
        return wrap_angle_unchecked(angles.first().copied().unwrap_or(0.0));
    }
    wrap_angle_unchecked(s.atan2(c))
}

fn weighted_box(members: &[&ScoredDetection]) -> BevBox {
    let total: f64 = members.iter().map(|m| m.score).sum();
    let avg = |f: fn(&BevBox) -> f64| members.iter().map(|m| m.score * f(&m.det.bbox)).sum::<f64>() / total;
    let thetas: Vec<f64> = members.iter().map(|m| m.det.bbox.theta).collect();
    let weights: Vec<f64> = members.iter().map(|m| m.score).collect();
    BevBox {
        x: avg(|b| b.x),
        y: avg(|b| b.y),
        w: avg(|b| b.w),
        d: avg(|b| b.d),
        theta: circular_mean(&thetas, &weights),
    }
}

struct Cluster<'a> {
    members: Vec<&'a ScoredDetection>,
    /// Box new members are compared against.
    anchor: BevBox,
}

/// Visits detections best-first and joins each to the same-class cluster whose
/// anchor overlaps most (IoU >= `iou_th`), or opens a new cluster.
fn cluster<'a>(
    dets: &'a [ScoredDetection],
    iou_th: f64,
    mode: OverlapMode,
    running_mean: bool,
) -> Vec<Cluster<'a>> {
    let mut clusters: Vec<Cluster<'a>> = Vec::new();
    for cand in ranked(dets) {
        let mut best: Option<(usize, f64)> = None;
        for (ci, c) in clusters.iter().enumerate() {
            if c.members[0].det.class != cand.det.class {
                continue;
            }
            let iou = iou_with_mode(&c.anchor, &cand.det.bbox, mode);
            if iou >= iou_th && iou > 0.0 && best.is_none_or(|(_, b)| iou > b) {
                best = Some((ci, iou));
            }
        }
        match best {
            Some((ci, _)) => {
                let c = &mut clusters[ci];
                c.members.push(cand);
                if running_mean {
                    c.anchor = weighted_box(&c.members);
                }
            }
            None => clusters.push(Cluster {
                members: vec![cand],
                anchor: cand.det.bbox,
            }),
        }
    }
    clusters
}

/// Weighted Box Fusion: clusters against running score-weighted means, one
/// fused box per cluster. The fused score is the members' mean score.
pub fn wbf(dets: &[ScoredDetection], iou_th: f64, mode: OverlapMode) -> Vec<ScoredDetection> {
    cluster(dets, iou_th, mode, true)
        .into_iter()
        .map(|c| {
            let top = c.members[0];
            let score = c.members.iter().map(|m| m.score).sum::<f64>() / c.members.len() as f64;
            ScoredDetection {
                det: Detection {
                    bbox: c.anchor,
                    t_meas: c.members.iter().map(|m| m.det.t_meas).max().unwrap_or(top.det.t_meas),
                    t_recv: c.members.iter().map(|m| m.det.t_recv).max().unwrap_or(top.det.t_recv),
                    ..top.det.clone()
                },
                score,
            }
        })
        .collect()
}

/// Promote-Suppress Aggregation: the best member of each cluster is emitted
/// with its score raised by 0.1 per supporter, capped at 1.
pub fn psa(dets: &[ScoredDetection], iou_th: f64, mode: OverlapMode) -> Vec<ScoredDetection> {
    cluster(dets, iou_th, mode, false)
        .into_iter()
        .map(|c| {
            let top = c.members[0];
            let supporters = (c.members.len() - 1) as f64;
            ScoredDetection {
                det: top.det.clone(),
                score: (top.score + 0.1 * supporters).min(1.0),
            }
        })
        .collect()
}

/// Center-distance pairing across two sources; pairs are averaged component-wise
/// (circularly for yaw), unmatched detections pass through.
pub fn distance_late(a: &[Detection], b: &[Detection], dist_th: f64) -> Vec<Detection> {
    let r = dist_associate(a, b, dist_th);
    let mut out: Vec<Detection> = Vec::with_capacity(r.pairs.len() + r.unmatched_a.len() + r.unmatched_b.len());
    for &(i, j, _) in &r.pairs {
        let (da, db) = (&a[i], &b[j]);
        let mid = |u: f64, v: f64| 0.5 * (u + v);
        let half_rss = |u: f64, v: f64| 0.5 * (u * u + v * v).sqrt();
        out.push(Detection {
            bbox: BevBox {
                x: mid(da.bbox.x, db.bbox.x),
                y: mid(da.bbox.y, db.bbox.y),
                w: mid(da.bbox.w, db.bbox.w),
                d: mid(da.bbox.d, db.bbox.d),
                theta: circular_mean(&[da.bbox.theta, db.bbox.theta], &[1.0, 1.0]),
            },
            source: da.source.min(db.source),
            t_meas: da.t_meas.max(db.t_meas),
            t_recv: da.t_recv.max(db.t_recv),
            gt_id: da.gt_id,
            class: da.class,
            sigma: Sigma {
                x: half_rss(da.sigma.x, db.sigma.x),
                y: half_rss(da.sigma.y, db.sigma.y),
                theta: half_rss(da.sigma.theta, db.sigma.theta),
                w: half_rss(da.sigma.w, db.sigma.w),
                d: half_rss(da.sigma.d, db.sigma.d),
            },
        });
    }
    out.extend(r.unmatched_a.iter().map(|&i| a[i].clone()));
    out.extend(r.unmatched_b.iter().map(|&j| b[j].clone()));
    out
}

/// Inverse-variance weighted mean and its variance. Zero-variance entries
/// dominate: their plain mean is returned with variance 0.
pub fn inverse_variance_mean(values: &[f64], variances: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() || values.len() != variances.len() {
        return Err(Error::InvalidArgument(format!(
            "need matching non-empty inputs, got {} values and {} variances",
            values.len(),
            variances.len()
        )));
    }
    if variances.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument("variances must be finite and >= 0".into()));
    }
    let exact: Vec<f64> = values
        .iter()
        .zip(variances)
        .filter(|(_, v)| **v == 0.0)
        .map(|(z, _)| *z)
        .collect();
    if !exact.is_empty() {
        return Ok((exact.iter().sum::<f64>() / exact.len() as f64, 0.0));
    }
    let info: f64 = variances.iter().map(|v| 1.0 / v).sum();
    let weighted: f64 = values.iter().zip(variances).map(|(z, v)| z / v).sum();
    Ok((weighted / info, 1.0 / info))
}

/// Fused `(x, y, w, d, theta)` with per-component variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WlsEstimate {
    pub z: [f64; 5],
    pub var: [f64; 5],
}

impl WlsEstimate {
    pub fn bbox(&self) -> BevBox {
        BevBox {
            x: self.z[0],
            y: self.z[1],
            w: self.z[2],
            d: self.z[3],
            theta: self.z[4],
        }
    }

    pub fn sigma(&self) -> Sigma {
        Sigma {
            x: self.var[0].sqrt(),
            y: self.var[1].sqrt(),
            w: self.var[2].sqrt(),
            d: self.var[3].sqrt(),
            theta: self.var[4].sqrt(),
        }
    }
}

/// Per-component inverse-variance fusion of an associated group. Yaw is fused
/// as wrapped residuals about the first member's yaw.
pub fn wls_fuse(group: &[Detection]) -> Result<WlsEstimate> {
    let first = group
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot fuse an empty group".into()))?;
    let comps: [(fn(&Detection) -> f64, fn(&Detection) -> f64); 4] = [
        (|d| d.bbox.x, |d| d.sigma.x),
        (|d| d.bbox.y, |d| d.sigma.y),
        (|d| d.bbox.w, |d| d.sigma.w),
        (|d| d.bbox.d, |d| d.sigma.d),
    ];
    let mut z = [0.0; 5];
    let mut var = [0.0; 5];
    for (k, (value, sd)) in comps.iter().enumerate() {
        let vals: Vec<f64> = group.iter().map(value).collect();
        let vars: Vec<f64> = group.iter().map(|d| sd(d).powi(2)).collect();
        (z[k], var[k]) = inverse_variance_mean(&vals, &vars)?;
    }
    let anchor = first.bbox.theta;
    let residuals: Vec<f64> = group
        .iter()
        .map(|d| wrap_angle_unchecked(d.bbox.theta - anchor))
        .collect();
    let vars: Vec<f64> = group.iter().map(|d| d.sigma.theta.powi(2)).collect();
    let (r, v) = inverse_variance_mean(&residuals, &vars)?;
    z[4] = wrap_angle_unchecked(anchor + r);
    var[4] = v;
    Ok(WlsEstimate { z, var })
}

/// Buckets detections by `floor(t_meas / window)`; ticks come out ascending and
/// keep each stream's order within a tick.
pub fn sliding_window_sync(streams: &[Vec<Detection>], window: Micros) -> Result<Vec<(i64, Vec<Detection>)>> {
    if window <= 0 {
        return Err(Error::InvalidArgument(format!("window must be > 0, got {window}")));
    }
    let mut ticks: BTreeMap<i64, Vec<Detection>> = BTreeMap::new();
    for stream in streams {
        for det in stream {
            ticks.entry(det.t_meas.div_euclid(window)).or_default().push(det.clone());
        }
    }
    Ok(ticks.into_iter().collect())
}

/// Builds cross-source groups: sources are visited in ascending id and each
/// source's detections are matched (per class, CSBA, Hungarian) against the
/// fused representatives of the groups formed so far. Returns indices into `dets`.
pub fn csba_groups(dets: &[Detection], params: &CsbaParams) -> Result<Vec<Vec<usize>>> {
    let mut by_source: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        by_source.entry(d.source).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut reps: Vec<(BevBox, Sigma)> = Vec::new();
    for idx in by_source.values() {
        let mut scores = vec![0.0; groups.len() * idx.len()];
        for (g, group) in groups.iter().enumerate() {
            let class = dets[group[0]].class;
            for (k, &i) in idx.iter().enumerate() {
                if dets[i].class == class {
                    let (rb, rs) = &reps[g];
                    scores[g * idx.len() + k] = combined_score(rb, rs, &dets[i].bbox, &dets[i].sigma, params);
                }
            }
        }
        let mut taken = vec![false; idx.len()];
        for (g, k) in assign_max_score(&scores, groups.len(), idx.len()) {
            let i = idx[k];
            if dets[i].class == dets[groups[g][0]].class && scores[g * idx.len() + k] >= params.gate {
                groups[g].push(i);
                taken[k] = true;
                let members: Vec<Detection> = groups[g].iter().map(|&m| dets[m].clone()).collect();
                let est = wls_fuse(&members)?;
                reps[g] = (est.bbox(), est.sigma());
            }
        }
        for (k, &i) in idx.iter().enumerate() {
            if !taken[k] {
                groups.push(vec![i]);
                reps.push((dets[i].bbox, dets[i].sigma));
            }
        }
    }
    Ok(groups)
}

/// CSBA grouping followed by WLS fusion of every group. The fused detection
/// keeps the first member's identity fields.
pub fn csba_wls(dets: &[Detection], params: &CsbaParams) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for group in csba_groups(dets, params)? {
        let members: Vec<Detection> = group.iter().map(|&i| dets[i].clone()).collect();
        let est = wls_fuse(&members)?;
        let first = &members[0];
        out.push(Detection {
            bbox: est.bbox(),
            sigma: est.sigma(),
            t_meas: members.iter().map(|m| m.t_meas).max().unwrap_or(first.t_meas),
            t_recv: members.iter().map(|m| m.t_recv).max().unwrap_or(first.t_recv),
            ..first.clone()
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::ClassLabel;
    use proptest::prelude::*;

    fn det_at(x: f64, y: f64, source: u32, sigma: f64) -> Detection {
        Detection {
            bbox: BevBox::new(x, y, 1.0, 1.0, 0.0).unwrap(),
            source,
            t_meas: 0,
            t_recv: 0,
            gt_id: source as u64,
            class: ClassLabel::Car,
            sigma: Sigma {
                x: sigma,
                y: sigma,
                theta: sigma,
                w: sigma,
                d: sigma,
            },
        }
    }

    fn scored(x: f64, score: f64, source: u32) -> ScoredDetection {
        ScoredDetection {
            det: det_at(x, 0.0, source, 0.1),
            score,
        }
    }

    #[test]
    fn score_ranks_certainty() {
        let a = det_at(0.0, 0.0, 0, 0.1);
        let b = det_at(0.0, 0.0, 0, 1.0);
        assert!(detection_score(&a) > detection_score(&b));
        assert!((detection_score(&det_at(0.0, 0.0, 0, 0.0)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn nms_examples() {
        let m = OverlapMode::Rotated;
        assert_eq!(nms_std(&[scored(0.0, 0.9, 0)], 0.5, m).len(), 1);
        assert_eq!(nms_std(&[scored(0.0, 0.9, 0), scored(0.0, 0.8, 1)], 0.5, m).len(), 1);
        let out = nms_std(&[scored(0.0, 0.9, 0), scored(0.5, 0.8, 1)], 0.5, m);
        assert_eq!(out.len(), 2);
        assert_eq!(nms_std(&[scored(0.0, 0.9, 0), scored(0.5, 0.8, 1)], 0.3, m).len(), 1);
    }

    #[test]
    fn nms_survivor_is_unmodified_best() {
        let out = nms_std(&[scored(0.1, 0.5, 1), scored(0.0, 0.9, 0)], 0.5, OverlapMode::Rotated);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0], scored(0.0, 0.9, 0));
    }

    #[test]
    fn nms_giou_examples() {
        let m = OverlapMode::Rotated;
        assert_eq!(nms_giou(&[scored(0.0, 0.9, 0), scored(0.0, 0.8, 1)], 0.5, m).len(), 1);
        assert_eq!(nms_giou(&[scored(0.0, 0.9, 0), scored(1.0, 0.8, 1)], 0.5, m).len(), 2);
        assert_eq!(nms_giou(&[scored(0.0, 0.9, 0), scored(40.0, 0.8, 1)], 0.5, m).len(), 2);
    }

    #[test]
    fn wbf_examples() {
        let m = OverlapMode::AxisAligned;
        // Unit boxes at x = 0 and x = 1 only touch; a wide box makes them overlap.
        let wide = |x: f64, score: f64, source: u32| {
            let mut s = scored(x, score, source);
            s.det.bbox.w = 4.0;
            s
        };
        let out = wbf(&[wide(0.0, 0.5, 0), wide(1.0, 0.5, 1)], 0.5, m);
        assert_eq!(out.len(), 1);
        assert!((out[0].det.bbox.x - 0.5).abs() < 1e-12);
        let out = wbf(&[wide(0.0, 0.8, 0), wide(1.0, 0.2, 1)], 0.5, m);
        assert!((out[0].det.bbox.x - 0.2).abs() < 1e-12);
        let apart = [scored(0.0, 0.9, 0), scored(10.0, 0.8, 1)];
        let out = wbf(&apart, 0.5, m);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].det, apart[0].det);
        assert_eq!(out[1].det, apart[1].det);
    }

    #[test]
    fn wbf_averages_yaw_circularly() {
        let mut a = scored(0.0, 0.5, 0);
        let mut b = scored(0.0, 0.5, 1);
        a.det.bbox.theta = 3.1;
        b.det.bbox.theta = -3.1;
        let out = wbf(&[a, b], 0.3, OverlapMode::Rotated);
        assert_eq!(out.len(), 1);
        assert!(out[0].det.bbox.theta.abs() > 3.1);
    }

    #[test]
    fn psa_examples() {
        let m = OverlapMode::Rotated;
        assert_eq!(psa(&[scored(0.0, 0.6, 0)], 0.5, m), vec![scored(0.0, 0.6, 0)]);
        let three = [scored(0.0, 0.6, 0), scored(0.05, 0.7, 1), scored(0.1, 0.5, 2)];
        let out = psa(&three, 0.5, m);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].det, three[1].det);
        assert!((out[0].score - 0.9).abs() < 1e-12);
        let pairs = [
            scored(0.0, 0.9, 0),
            scored(0.6, 0.8, 1),
            scored(20.0, 0.9, 0),
            scored(20.6, 0.8, 1),
        ];
        assert_eq!(psa(&pairs, 0.5, m).len(), 4);
    }

    #[test]
    fn distance_late_examples() {
        let a = vec![det_at(0.0, 0.0, 0, 0.2)];
        let out = distance_late(&a, &a, 3.0);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].bbox, a[0].bbox);
        let out = distance_late(&a, &[det_at(2.0, 0.0, 1, 0.2)], 3.0);
        assert_eq!(out.len(), 1);
        assert!((out[0].bbox.x - 1.0).abs() < 1e-12);
        assert_eq!(distance_late(&a, &[det_at(3.1, 0.0, 1, 0.2)], 3.0).len(), 2);
    }

    #[test]
    fn inverse_variance_fixtures() {
        let (m, v) = inverse_variance_mean(&[0.0, 1.0], &[1.0, 4.0]).unwrap();
        assert!((m - 0.2).abs() < 1e-12);
        assert!((v - 0.8).abs() < 1e-12);
        let (m, _) = inverse_variance_mean(&[0.0, 1.0], &[2.0, 2.0]).unwrap();
        assert_eq!(m, 0.5);
        let (m, v) = inverse_variance_mean(&[3.0, 1.0], &[0.0, 4.0]).unwrap();
        assert_eq!((m, v), (3.0, 0.0));
        assert!(inverse_variance_mean(&[], &[]).is_err());
    }

    #[test]
    fn wls_single_member_is_itself() {
        let d = det_at(3.0, -2.0, 0, 0.4);
        let est = wls_fuse(std::slice::from_ref(&d)).unwrap();
        assert_eq!(est.bbox(), d.bbox);
        assert!((est.var[0] - 0.16).abs() < 1e-15);
        assert!(wls_fuse(&[]).is_err());
    }

    #[test]
    fn wls_yaw_across_pi() {
        let mut a = det_at(0.0, 0.0, 0, 0.1);
        let mut b = det_at(0.0, 0.0, 1, 0.1);
        a.bbox.theta = 3.1;
        b.bbox.theta = -3.1;
        let est = wls_fuse(&[a, b]).unwrap();
        assert!((est.z[4].abs() - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn window_sync_examples() {
        let mut a = det_at(0.0, 0.0, 0, 0.1);
        let mut b = det_at(0.0, 0.0, 1, 0.1);
        b.t_meas = 40_000;
        let out = sliding_window_sync(&[vec![a.clone()], vec![b.clone()]], 100_000).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].1.len(), 2);
        b.t_meas = 140_000;
        let out = sliding_window_sync(&[vec![a.clone()], vec![b]], 100_000).unwrap();
        assert_eq!(out.len(), 2);
        assert!(sliding_window_sync(&[], 100_000).unwrap().is_empty());
        a.t_meas = -1;
        assert_eq!(sliding_window_sync(&[vec![a]], 100_000).unwrap()[0].0, -1);
    }

    #[test]
    fn csba_groups_pair_duplicates() {
        let a: Vec<Detection> = (0..4).map(|i| det_at(i as f64 * 10.0, 0.0, 0, 0.2)).collect();
        let mut all = a.clone();
        all.extend(a.iter().map(|d| Detection { source: 1, ..d.clone() }));
        let groups = csba_groups(&all, &CsbaParams::default()).unwrap();
        assert_eq!(groups.len(), 4);
        for g in &groups {
            assert_eq!(g.len(), 2);
            assert_eq!(all[g[0]].bbox, all[g[1]].bbox);
        }
        assert_eq!(csba_wls(&all, &CsbaParams::default()).unwrap().len(), 4);
    }

    proptest! {
        #[test]
        fn wls_equal_variance_is_arithmetic_mean(vals in prop::collection::vec(-100.0f64..100.0, 1..8), var in 0.01f64..10.0) {
            let vars = vec![var; vals.len()];
            let (m, v) = inverse_variance_mean(&vals, &vars).unwrap();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            prop_assert!((m - mean).abs() <= 1e-12 * (1.0 + mean.abs()));
            prop_assert!(v <= var * (1.0 + 1e-12));
        }

        #[test]
        fn wls_variance_never_exceeds_min(vars in prop::collection::vec(0.01f64..10.0, 1..8)) {
            let vals = vec![1.0; vars.len()];
            let (_, v) = inverse_variance_mean(&vals, &vars).unwrap();
            let min = vars.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!(v <= min * (1.0 + 1e-12));
        }

        #[test]
        fn nms_is_order_invariant_with_distinct_scores(
            xs in prop::collection::vec(-5.0f64..5.0, 1..8),
            seed in 0u64..1000,
        ) {
            let dets: Vec<ScoredDetection> = xs
                .iter()
                .enumerate()
                .map(|(i, &x)| scored(x, 0.1 + 0.1 * i as f64, i as u32))
                .collect();
            let mut rev = dets.clone();
            rev.reverse();
            let rot = (seed as usize) % dets.len();
            let mut rotated = dets.clone();
            rotated.rotate_left(rot);
            let base = nms_std(&dets, 0.3, OverlapMode::Rotated);
            prop_assert_eq!(&base, &nms_std(&rev, 0.3, OverlapMode::Rotated));
            prop_assert_eq!(&base, &nms_std(&rotated, 0.3, OverlapMode::Rotated));
            prop_assert!(base.len() <= dets.len());
            prop_assert!(psa(&dets, 0.3, OverlapMode::Rotated).len() <= dets.len());
        }
    }
}
