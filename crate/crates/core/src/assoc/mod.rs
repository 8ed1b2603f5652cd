//! Cross-source association of detections.
//!
//! Three associators share one result type: the combined-score matcher (CSBA),
//! greedy IoU matching and Hungarian center-distance matching. Every associator
//! returns a partition of both input lists.

mod hungarian;

pub use hungarian::{assign_max_score, assign_min_cost};

use serde::{Deserialize, Serialize};

use crate::geometry::{angular_distance_unchecked, center_distance, iou_with_mode, BevBox, OverlapMode};
use crate::noise::{Detection, Sigma};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssociationResult {
    /// `(index into a, index into b, score)`; sorted by the `a` index.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_a: Vec<usize>,
    pub unmatched_b: Vec<usize>,
}

impl AssociationResult {
    fn from_pairs(pairs: Vec<(usize, usize, f64)>, len_a: usize, len_b: usize) -> Self {
        let mut used_a = vec![false; len_a];
        let mut used_b = vec![false; len_b];
        for &(i, j, _) in &pairs {
            used_a[i] = true;
            used_b[j] = true;
        }
        let mut pairs = pairs;
        pairs.sort_by_key(|p| p.0);
        Self {
            pairs,
            unmatched_a: (0..len_a).filter(|&i| !used_a[i]).collect(),
            unmatched_b: (0..len_b).filter(|&j| !used_b[j]).collect(),
        }
    }

    /// True when every index of both lists appears exactly once.
    pub fn is_partition(&self, len_a: usize, len_b: usize) -> bool {
        let mut count_a = vec![0usize; len_a];
        let mut count_b = vec![0usize; len_b];
        for &(i, j, _) in &self.pairs {
            if i >= len_a || j >= len_b {
                return false;
            }
            count_a[i] += 1;
            count_b[j] += 1;
        }
        for &i in &self.unmatched_a {
            if i >= len_a {
                return false;
            }
            count_a[i] += 1;
        }
        for &j in &self.unmatched_b {
            if j >= len_b {
                return false;
            }
            count_b[j] += 1;
        }
        count_a.iter().chain(&count_b).all(|&c| c == 1)
    }
}

/// Weights and scales of the combined score. Weights are normalized by their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsbaParams {
    pub w_center: f64,
    pub w_dim: f64,
    pub w_orient: f64,
    /// Meters.
    pub scale_dim: f64,
    /// Radians.
    pub scale_theta: f64,
    /// Matched pairs scoring below this are dissolved.
    pub gate: f64,
    /// Pairs whose center Mahalanobis distance exceeds this score 0 and are
    /// never matched. `f64::INFINITY` disables the cutoff.
    pub max_mahalanobis: f64,
}

impl Default for CsbaParams {
    fn default() -> Self {
        Self {
            w_center: 0.5,
            w_dim: 0.3,
            w_orient: 0.2,
            scale_dim: 1.0,
            scale_theta: 0.5,
            gate: 0.05,
            max_mahalanobis: 4.0,
        }
    }
}

/// Squared Mahalanobis distance between centers under the summed diagonal
/// position covariances; infinite for a zero variance with a nonzero offset.
pub fn center_mahalanobis2(a: &BevBox, sa: &Sigma, b: &BevBox, sb: &Sigma) -> f64 {
    let mut m2 = 0.0;
    for (delta, var) in [
        (a.x - b.x, sa.x * sa.x + sb.x * sb.x),
        (a.y - b.y, sa.y * sa.y + sb.y * sb.y),
    ] {
        if var > 0.0 {
            m2 += delta * delta / var;
        } else if delta != 0.0 {
            return f64::INFINITY;
        }
    }
    m2
}

/// Combined score of two boxes with their standard deviations.
pub fn combined_score(a: &BevBox, sa: &Sigma, b: &BevBox, sb: &Sigma, params: &CsbaParams) -> f64 {
    let m2 = center_mahalanobis2(a, sa, b, sb);
    if !(m2 <= params.max_mahalanobis * params.max_mahalanobis) {
        return 0.0;
    }
    let s_center = (-0.5 * m2).exp();
    let s_dim = (-(a.w - b.w).hypot(a.d - b.d) / params.scale_dim).exp();
    let s_orient = (-angular_distance_unchecked(a.theta, b.theta) / params.scale_theta).exp();
    let total = params.w_center + params.w_dim + params.w_orient;
    if total <= 0.0 {
        return 0.0;
    }
    ((params.w_center * s_center + params.w_dim * s_dim + params.w_orient * s_orient) / total)
        .clamp(0.0, 1.0)
}

pub fn csba_score(a: &Detection, b: &Detection, params: &CsbaParams) -> f64 {
    combined_score(&a.bbox, &a.sigma, &b.bbox, &b.sigma, params)
}

/// Row-major score matrix; cross-class pairs score 0.
pub fn csba_score_matrix(a: &[Detection], b: &[Detection], params: &CsbaParams) -> Vec<f64> {
    let mut scores = Vec::with_capacity(a.len() * b.len());
    for da in a {
        for db in b {
            scores.push(if da.class == db.class {
                csba_score(da, db, params)
            } else {
                0.0
            });
        }
    }
    scores
}

/// Optimal score-maximizing assignment, then gating.
pub fn csba_associate(a: &[Detection], b: &[Detection], params: &CsbaParams) -> AssociationResult {
    let scores = csba_score_matrix(a, b, params);
    let pairs = assign_max_score(&scores, a.len(), b.len())
        .into_iter()
        .map(|(i, j)| (i, j, scores[i * b.len() + j]))
        .filter(|&(i, j, s)| s > 0.0 && s >= params.gate && a[i].class == b[j].class)
        .collect();
    AssociationResult::from_pairs(pairs, a.len(), b.len())
}

/// Greedy matching in descending IoU order; pairs below `threshold` are rejected.
pub fn iou_associate(
    a: &[Detection],
    b: &[Detection],
    threshold: f64,
    mode: OverlapMode,
) -> AssociationResult {
    let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
    for (i, da) in a.iter().enumerate() {
        for (j, db) in b.iter().enumerate() {
            if da.class != db.class {
                continue;
            }
            let iou = iou_with_mode(&da.bbox, &db.bbox, mode);
            if iou >= threshold && iou > 0.0 {
                candidates.push((i, j, iou));
            }
        }
    }
    candidates.sort_by(|x, y| y.2.total_cmp(&x.2).then(x.0.cmp(&y.0)).then(x.1.cmp(&y.1)));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut pairs = Vec::new();
    for (i, j, iou) in candidates {
        if used_a[i] || used_b[j] {
            continue;
        }
        used_a[i] = true;
        used_b[j] = true;
        pairs.push((i, j, iou));
    }
    AssociationResult::from_pairs(pairs, a.len(), b.len())
}

/// Hungarian matching on center distance; pairs farther than `threshold` meters
/// are dissolved. The reported score is the distance.
pub fn dist_associate(a: &[Detection], b: &[Detection], threshold: f64) -> AssociationResult {
    // Out-of-gate pairs get a flat cost so they never displace admissible ones.
    let forbidden = 1e6 + threshold;
    let mut costs = Vec::with_capacity(a.len() * b.len());
    for da in a {
        for db in b {
            let dist = center_distance(&da.bbox, &db.bbox);
            costs.push(if da.class == db.class && dist <= threshold {
                dist
            } else {
                forbidden
            });
        }
    }
    let pairs = assign_min_cost(&costs, a.len(), b.len())
        .into_iter()
        .map(|(i, j)| (i, j, costs[i * b.len() + j]))
        .filter(|&(_, _, c)| c < forbidden)
        .collect();
    AssociationResult::from_pairs(pairs, a.len(), b.len())
}
