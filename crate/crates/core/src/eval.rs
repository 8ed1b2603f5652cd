//! Identifier-based evaluation: closest-prediction TP selection, FP-aware error
//! metrics (denominator TP + FP), TP-only variants, and trial aggregation.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{angular_distance_unchecked, center_distance, BevBox};
use crate::noise::{ClassLabel, GtObject};

/// A fused or pass-through box carrying the ground-truth lineage of its inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub bbox: BevBox,
    pub class: ClassLabel,
    pub gt_id: u64,
}

/// Which ground truth an FP's error is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FpReference {
    /// The object named by the prediction's lineage.
    #[default]
    Lineage,
    /// The nearest ground-truth center in the frame.
    Nearest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FalsePositive {
    pub pred: Prediction,
    /// Object the error is measured against; `None` only in a frame without objects.
    pub reference: Option<GtObject>,
    /// The prediction's gt_id does not exist in the frame.
    pub unknown_id: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchOutcome {
    pub tp: Vec<(Prediction, GtObject)>,
    pub fp: Vec<FalsePositive>,
    pub fn_: Vec<GtObject>,
}

impl MatchOutcome {
    pub fn unknown_ids(&self) -> usize {
        self.fp.iter().filter(|f| f.unknown_id).count()
    }
}

/// Total order on predictions, used to make matching independent of input order.
fn pred_order(a: &Prediction, b: &Prediction) -> Ordering {
    let ka = [a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.d, a.bbox.theta];
    let kb = [b.bbox.x, b.bbox.y, b.bbox.w, b.bbox.d, b.bbox.theta];
    a.gt_id
        .cmp(&b.gt_id)
        .then(a.class.cmp(&b.class))
        .then_with(|| {
            ka.iter()
                .zip(&kb)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

fn nearest(gts: &[GtObject], b: &BevBox) -> Option<GtObject> {
    gts.iter()
        .min_by(|p, q| {
            center_distance(&p.bbox, b)
                .total_cmp(&center_distance(&q.bbox, b))
                .then(p.gt_id.cmp(&q.gt_id))
        })
        .cloned()
}

/// Per gt_id the closest prediction is the TP and the others are FPs; objects
/// without predictions are FNs. Predictions naming an absent object are FPs
/// measured against the nearest object.
pub fn match_by_id(preds: &[Prediction], gts: &[GtObject], fp_ref: FpReference) -> MatchOutcome {
    let by_id: BTreeMap<u64, &GtObject> = gts.iter().map(|g| (g.gt_id, g)).collect();
    let mut sorted: Vec<Prediction> = preds.to_vec();
    sorted.sort_by(pred_order);
    let mut claims: BTreeMap<u64, Vec<Prediction>> = BTreeMap::new();
    let mut out = MatchOutcome::default();
    for p in sorted {
        if by_id.contains_key(&p.gt_id) {
            claims.entry(p.gt_id).or_default().push(p);
        } else {
            out.fp.push(FalsePositive {
                pred: p,
                reference: nearest(gts, &p.bbox),
                unknown_id: true,
            });
        }
    }
    for (id, gt) in &by_id {
        let Some(cands) = claims.remove(id) else {
            out.fn_.push((*gt).clone());
            continue;
        };
        let best = cands
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                center_distance(&a.bbox, &gt.bbox)
                    .total_cmp(&center_distance(&b.bbox, &gt.bbox))
                    .then_with(|| pred_order(a, b))
            })
            .map(|(i, _)| i)
            .expect("non-empty claims");
        for (i, p) in cands.into_iter().enumerate() {
            if i == best {
                out.tp.push((p, (*gt).clone()));
            } else {
                let reference = match fp_ref {
                    FpReference::Lineage => Some((*gt).clone()),
                    FpReference::Nearest => nearest(gts, &p.bbox),
                };
                out.fp.push(FalsePositive {
                    pred: p,
                    reference,
                    unknown_id: false,
                });
            }
        }
    }
    out.fp.sort_by(|a, b| pred_order(&a.pred, &b.pred));
    out
}

fn translation_error(p: &Prediction, g: &GtObject) -> f64 {
    center_distance(&p.bbox, &g.bbox)
}

fn orientation_error(p: &Prediction, g: &GtObject) -> f64 {
    angular_distance_unchecked(p.bbox.theta, g.bbox.theta)
}

fn dimension_error(p: &Prediction, g: &GtObject) -> f64 {
    (p.bbox.w - g.bbox.w).hypot(p.bbox.d - g.bbox.d)
}

/// Sum of an error over TP and FP entries divided by TP + FP; 0 when empty.
fn fp_aware(o: &MatchOutcome, err: fn(&Prediction, &GtObject) -> f64) -> f64 {
    let n = o.tp.len() + o.fp.len();
    if n == 0 {
        return 0.0;
    }
    let tp: f64 = o.tp.iter().map(|(p, g)| err(p, g)).sum();
    let fp: f64 = o
        .fp
        .iter()
        .filter_map(|f| f.reference.as_ref().map(|g| err(&f.pred, g)))
        .sum();
    (tp + fp) / n as f64
}

fn tp_only(o: &MatchOutcome, err: fn(&Prediction, &GtObject) -> f64) -> Option<f64> {
    if o.tp.is_empty() {
        return None;
    }
    Some(o.tp.iter().map(|(p, g)| err(p, g)).sum::<f64>() / o.tp.len() as f64)
}

/// Average translation error over TP + FP, meters.
pub fn ate_frame(o: &MatchOutcome) -> f64 {
    fp_aware(o, translation_error)
}

/// Average orientation error over TP + FP, radians in `[0, pi]`.
pub fn aoe_frame(o: &MatchOutcome) -> f64 {
    fp_aware(o, orientation_error)
}

/// Average `(w, d)` error over TP + FP, meters.
pub fn ade_frame(o: &MatchOutcome) -> f64 {
    fp_aware(o, dimension_error)
}

/// `(precision, recall)`, each 1 when its denominator is 0.
pub fn precision_recall(o: &MatchOutcome) -> (f64, f64) {
    ratio_pair(o.tp.len(), o.fp.len(), o.fn_.len())
}

fn ratio_pair(tp: usize, fp: usize, fn_: usize) -> (f64, f64) {
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    (ratio(tp, tp + fp), ratio(tp, tp + fn_))
}

/// TP-only `(ATE, AOE, ADE)`; `None` without true positives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpOnly {
    pub ate: f64,
    pub aoe: f64,
    pub ade: f64,
}

pub fn sota_metrics(o: &MatchOutcome) -> Option<TpOnly> {
    Some(TpOnly {
        ate: tp_only(o, translation_error)?,
        aoe: tp_only(o, orientation_error)?,
        ade: tp_only(o, dimension_error)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub ate: f64,
    pub aoe: f64,
    pub ade: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub sota: Option<TpOnly>,
}

impl FrameMetrics {
    pub fn from_outcome(o: &MatchOutcome) -> Self {
        let (precision, recall) = precision_recall(o);
        Self {
            ate: ate_frame(o),
            aoe: aoe_frame(o),
            ade: ade_frame(o),
            tp: o.tp.len(),
            fp: o.fp.len(),
            fn_: o.fn_.len(),
            precision,
            recall,
            sota: sota_metrics(o),
        }
    }
}

pub fn evaluate_frame(preds: &[Prediction], gts: &[GtObject], fp_ref: FpReference) -> FrameMetrics {
    FrameMetrics::from_outcome(&match_by_id(preds, gts, fp_ref))
}

/// Mean and sample standard deviation across trials.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

/// Frame means of one trial; precision and recall use the trial's pooled counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub m_ate: f64,
    pub m_aoe: f64,
    pub m_ade: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub frames: usize,
    /// TP-only frame means over frames that have true positives.
    pub sota: Option<TpOnly>,
}

impl TrialMetrics {
    pub fn from_frames(frames: &[FrameMetrics]) -> Self {
        let n = frames.len().max(1) as f64;
        let mean = |f: fn(&FrameMetrics) -> f64| frames.iter().map(f).sum::<f64>() / n;
        let tp = frames.iter().map(|f| f.tp).sum();
        let fp = frames.iter().map(|f| f.fp).sum();
        let fn_ = frames.iter().map(|f| f.fn_).sum();
        let (precision, recall) = ratio_pair(tp, fp, fn_);
        let with_tp: Vec<TpOnly> = frames.iter().filter_map(|f| f.sota).collect();
        let sota = (!with_tp.is_empty()).then(|| {
            let k = with_tp.len() as f64;
            TpOnly {
                ate: with_tp.iter().map(|s| s.ate).sum::<f64>() / k,
                aoe: with_tp.iter().map(|s| s.aoe).sum::<f64>() / k,
                ade: with_tp.iter().map(|s| s.ade).sum::<f64>() / k,
            }
        });
        Self {
            m_ate: mean(|f| f.ate),
            m_aoe: mean(|f| f.aoe),
            m_ade: mean(|f| f.ade),
            precision,
            recall,
            tp,
            fp,
            fn_,
            frames: frames.len(),
            sota,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub trials: usize,
    pub m_ate: Stat,
    pub m_aoe: Stat,
    pub m_ade: Stat,
    pub precision: Stat,
    pub recall: Stat,
    /// Present when every trial had at least one true positive.
    pub sota_ate: Option<Stat>,
    pub sota_aoe: Option<Stat>,
    pub sota_ade: Option<Stat>,
    pub per_trial: Vec<TrialMetrics>,
}

/// Per-trial frame means, then mean and sample std across trials.
pub fn aggregate(trials: &[Vec<FrameMetrics>]) -> RunSummary {
    let per_trial: Vec<TrialMetrics> = trials.iter().map(|f| TrialMetrics::from_frames(f)).collect();
    let stat = |f: fn(&TrialMetrics) -> f64| Stat::of(&per_trial.iter().map(f).collect::<Vec<_>>());
    let sota_stat = |f: fn(&TpOnly) -> f64| -> Option<Stat> {
        let vals: Option<Vec<f64>> = per_trial.iter().map(|t| t.sota.as_ref().map(f)).collect();
        vals.filter(|v| !v.is_empty()).map(|v| Stat::of(&v))
    };
    RunSummary {
        trials: per_trial.len(),
        m_ate: stat(|t| t.m_ate),
        m_aoe: stat(|t| t.m_aoe),
        m_ade: stat(|t| t.m_ade),
        precision: stat(|t| t.precision),
        recall: stat(|t| t.recall),
        sota_ate: sota_stat(|s| s.ate),
        sota_aoe: sota_stat(|s| s.aoe),
        sota_ade: sota_stat(|s| s.ade),
        per_trial,
    }
}
