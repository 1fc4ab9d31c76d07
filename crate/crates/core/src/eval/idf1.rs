//! Identification metrics (IDF1 / IDP / IDR).
//!
//! Boxes are first put in correspondence frame by frame (greedy by IoU), then
//! ground-truth identities are assigned one-to-one to predicted global IDs so
//! that the number of frames where both agree is maximal.

use std::collections::BTreeMap;

use pathfinding::matrix::Matrix;
use pathfinding::prelude::kuhn_munkres;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::geometry::{iou, BBox};
use crate::server::{GlobalId, TrajectoryRow};
use crate::sim::GroundTruth;
use crate::types::CameraId;

pub const DEFAULT_IOU_THRESH: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IdScore {
    pub idf1: f64,
    pub idp: f64,
    pub idr: f64,
    pub idtp: u64,
    pub idfp: u64,
    pub idfn: u64,
}

fn pct(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64 * 100.0
    }
}

impl IdScore {
    pub fn from_counts(idtp: u64, idfp: u64, idfn: u64) -> Self {
        Self {
            idf1: pct(2 * idtp, 2 * idtp + idfp + idfn),
            idp: pct(idtp, idtp + idfp),
            idr: pct(idtp, idtp + idfn),
            idtp,
            idfp,
            idfn,
        }
    }
}

/// One box of either side, keyed by the frame it lives in.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdBox {
    pub camera: CameraId,
    pub frame: u32,
    pub id: u64,
    pub bbox: BBox,
}

/// Frame-level matched pairs `(gt id, pred id)` plus box totals.
pub fn frame_correspondence(gt: &[IdBox], pred: &[IdBox], iou_thresh: f64) -> Vec<(u64, u64)> {
    let mut frames: BTreeMap<(CameraId, u32), (Vec<&IdBox>, Vec<&IdBox>)> = BTreeMap::new();
    for b in gt {
        frames.entry((b.camera, b.frame)).or_default().0.push(b);
    }
    for b in pred {
        frames.entry((b.camera, b.frame)).or_default().1.push(b);
    }
    let mut pairs = Vec::new();
    for (g, p) in frames.values() {
        if g.is_empty() || p.is_empty() {
            continue;
        }
        let mut cand = Vec::new();
        for (i, gb) in g.iter().enumerate() {
            for (j, pb) in p.iter().enumerate() {
                let v = iou(&gb.bbox, &pb.bbox);
                if v >= iou_thresh && v > 0.0 {
                    cand.push((v, i, j));
                }
            }
        }
        // descending IoU; ties broken by position for determinism
        cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut gu = vec![false; g.len()];
        let mut pu = vec![false; p.len()];
        for (_, i, j) in cand {
            if !gu[i] && !pu[j] {
                gu[i] = true;
                pu[j] = true;
                pairs.push((g[i].id, p[j].id));
            }
        }
    }
    pairs
}

/// Maximum total overlap under a one-to-one identity mapping.
pub fn optimal_identity_overlap(overlap: &BTreeMap<(u64, u64), u64>) -> u64 {
    if overlap.is_empty() {
        return 0;
    }
    let mut gids: Vec<u64> = overlap.keys().map(|k| k.0).collect();
    let mut pids: Vec<u64> = overlap.keys().map(|k| k.1).collect();
    gids.sort_unstable();
    gids.dedup();
    pids.sort_unstable();
    pids.dedup();
    let gi: BTreeMap<u64, usize> = gids.iter().enumerate().map(|(i, &g)| (g, i)).collect();
    let pi: BTreeMap<u64, usize> = pids.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    // the solver wants rows <= columns
    let transpose = gids.len() > pids.len();
    let (nr, nc) = if transpose {
        (pids.len(), gids.len())
    } else {
        (gids.len(), pids.len())
    };
    let mut m = Matrix::new(nr, nc, 0i64);
    for (&(g, p), &c) in overlap {
        let (r, col) = if transpose {
            (pi[&p], gi[&g])
        } else {
            (gi[&g], pi[&p])
        };
        m[(r, col)] = c as i64;
    }
    let (total, _) = kuhn_munkres(&m);
    total as u64
}

pub fn score_boxes(gt: &[IdBox], pred: &[IdBox], iou_thresh: f64) -> Result<IdScore, EvalError> {
    if gt.is_empty() {
        return Err(EvalError::EmptyGroundTruth);
    }
    let mut overlap: BTreeMap<(u64, u64), u64> = BTreeMap::new();
    for pair in frame_correspondence(gt, pred, iou_thresh) {
        *overlap.entry(pair).or_default() += 1;
    }
    let idtp = optimal_identity_overlap(&overlap);
    Ok(IdScore::from_counts(
        idtp,
        pred.len() as u64 - idtp,
        gt.len() as u64 - idtp,
    ))
}

pub fn gt_boxes(gt: &GroundTruth) -> Vec<IdBox> {
    gt.boxes
        .iter()
        .map(|b| IdBox {
            camera: b.camera,
            frame: b.frame,
            id: b.vehicle as u64,
            bbox: b.bbox,
        })
        .collect()
}

pub fn pred_boxes(rows: &[TrajectoryRow]) -> Vec<IdBox> {
    rows.iter()
        .map(|r| IdBox {
            camera: r.camera_id,
            frame: r.frame_index,
            id: r.global_id as GlobalId,
            bbox: BBox::new(r.bbox[0], r.bbox[1], r.bbox[2], r.bbox[3]),
        })
        .collect()
}

pub fn idf1_score(
    gt: &GroundTruth,
    pred: &[TrajectoryRow],
    iou_thresh: f64,
) -> Result<IdScore, EvalError> {
    score_boxes(&gt_boxes(gt), &pred_boxes(pred), iou_thresh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(frame: u32, id: u64, x: f64) -> IdBox {
        IdBox {
            camera: 0,
            frame,
            id,
            bbox: BBox::new(x, 0.0, 10.0, 10.0),
        }
    }

    /// Enumerate every injective map of gt ids into pred ids (or nothing).
    fn brute_force(overlap: &BTreeMap<(u64, u64), u64>) -> u64 {
        let mut g: Vec<u64> = overlap.keys().map(|k| k.0).collect();
        let mut p: Vec<u64> = overlap.keys().map(|k| k.1).collect();
        g.sort_unstable();
        g.dedup();
        p.sort_unstable();
        p.dedup();
        fn rec(
            i: usize,
            g: &[u64],
            p: &[u64],
            used: &mut Vec<bool>,
            o: &BTreeMap<(u64, u64), u64>,
        ) -> u64 {
            if i == g.len() {
                return 0;
            }
            let mut best = rec(i + 1, g, p, used, o);
            for j in 0..p.len() {
                if !used[j] {
                    used[j] = true;
                    let v = o.get(&(g[i], p[j])).copied().unwrap_or(0) + rec(i + 1, g, p, used, o);
                    best = best.max(v);
                    used[j] = false;
                }
            }
            best
        }
        rec(0, &g, &p, &mut vec![false; p.len()], overlap)
    }

    #[test]
    fn identical_prediction_is_perfect() {
        let gt: Vec<IdBox> = (0..10)
            .flat_map(|f| [bx(f, 1, 0.0), bx(f, 2, 100.0)])
            .collect();
        let pred: Vec<IdBox> = gt
            .iter()
            .map(|b| IdBox {
                id: b.id + 40,
                ..*b
            })
            .collect();
        let s = score_boxes(&gt, &pred, 0.5).unwrap();
        assert_eq!((s.idf1, s.idp, s.idr), (100.0, 100.0, 100.0));
    }

    #[test]
    fn split_identity_scores_half() {
        let gt: Vec<IdBox> = (0..10).map(|f| bx(f, 1, 0.0)).collect();
        let pred: Vec<IdBox> = (0..10)
            .map(|f| bx(f, if f < 5 { 7 } else { 8 }, 0.0))
            .collect();
        let s = score_boxes(&gt, &pred, 0.5).unwrap();
        assert_eq!((s.idtp, s.idfp, s.idfn), (5, 5, 5));
        assert_eq!((s.idf1, s.idp, s.idr), (50.0, 50.0, 50.0));
    }

    #[test]
    fn swapped_identities_score_half() {
        let gt: Vec<IdBox> = (0..10)
            .flat_map(|f| [bx(f, 1, 0.0), bx(f, 2, 100.0)])
            .collect();
        let pred: Vec<IdBox> = (0..10)
            .flat_map(|f| {
                let (a, b) = if f < 5 { (1, 2) } else { (2, 1) };
                [bx(f, a, 0.0), bx(f, b, 100.0)]
            })
            .collect();
        let s = score_boxes(&gt, &pred, 0.5).unwrap();
        assert_eq!(s.idf1, 50.0);
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(
            score_boxes(&[], &[bx(0, 1, 0.0)], 0.5),
            Err(EvalError::EmptyGroundTruth)
        ));
        let s = score_boxes(&[bx(0, 1, 0.0)], &[], 0.5).unwrap();
        assert_eq!(s.idf1, 0.0);
        assert_eq!(s.idfn, 1);
    }

    #[test]
    fn low_iou_boxes_do_not_match() {
        let s = score_boxes(&[bx(0, 1, 0.0)], &[bx(0, 1, 6.0)], 0.5).unwrap();
        assert_eq!((s.idtp, s.idfp, s.idfn), (0, 1, 1));
    }

    #[test]
    fn greedy_frame_match_prefers_higher_iou() {
        // pred box at x=1 overlaps both gt boxes; the closer one wins
        let gt = [bx(0, 1, 0.0), bx(0, 2, 3.0)];
        let pred = [bx(0, 9, 2.5)];
        let pairs = frame_correspondence(&gt, &pred, 0.3);
        assert_eq!(pairs, vec![(2, 9)]);
    }

    #[test]
    fn assignment_handles_more_pred_than_gt_and_vice_versa() {
        let mut o = BTreeMap::new();
        o.insert((1, 10), 4);
        o.insert((1, 11), 6);
        o.insert((2, 11), 5);
        assert_eq!(optimal_identity_overlap(&o), 9);
        let t: BTreeMap<(u64, u64), u64> = o.iter().map(|(&(g, p), &c)| ((p, g), c)).collect();
        assert_eq!(optimal_identity_overlap(&t), 9);
    }

    /// Small scene: each gt identity at a fixed lane, predictions relabel
    /// segments of each track with ids drawn from a small pool.
    fn scene() -> impl Strategy<Value = (Vec<IdBox>, Vec<IdBox>)> {
        (1usize..=6, 1u32..=30).prop_flat_map(|(n_id, frames)| {
            let cells = n_id * frames as usize;
            (
                proptest::collection::vec(0u64..6, cells),
                proptest::collection::vec(any::<bool>(), cells),
            )
                .prop_map(move |(labels, keep)| {
                    let mut gt = Vec::new();
                    let mut pred = Vec::new();
                    for f in 0..frames {
                        for g in 0..n_id {
                            let x = g as f64 * 50.0;
                            gt.push(bx(f, g as u64 + 1, x));
                            let c = f as usize * n_id + g;
                            if keep[c] {
                                pred.push(bx(f, labels[c] + 100, x));
                            }
                        }
                    }
                    (gt, pred)
                })
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force_oracle((gt, pred) in scene()) {
            let mut overlap = BTreeMap::new();
            for pair in frame_correspondence(&gt, &pred, 0.5) {
                *overlap.entry(pair).or_insert(0u64) += 1;
            }
            let s = score_boxes(&gt, &pred, 0.5).unwrap();
            prop_assert_eq!(s.idtp, brute_force(&overlap));
            // count identities
            let again = IdScore::from_counts(s.idtp, s.idfp, s.idfn);
            prop_assert_eq!(s, again);
            prop_assert_eq!(s.idtp + s.idfp, pred.len() as u64);
            prop_assert_eq!(s.idtp + s.idfn, gt.len() as u64);
        }

        #[test]
        fn relabeling_predictions_is_invariant((gt, pred) in scene(), shift in 1u64..1000) {
            let a = score_boxes(&gt, &pred, 0.5).unwrap();
            // reverse-order bijection plus offset
            let relabeled: Vec<IdBox> = pred.iter().map(|b| IdBox { id: shift + 1000 - b.id, ..*b }).collect();
            let b = score_boxes(&gt, &relabeled, 0.5).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn merging_ids_of_one_identity_never_hurts((gt, pred) in scene()) {
            let mut overlap = BTreeMap::new();
            for pair in frame_correspondence(&gt, &pred, 0.5) {
                *overlap.entry(pair).or_insert(0u64) += 1;
            }
            let before = score_boxes(&gt, &pred, 0.5).unwrap();
            // pred ids whose matched frames all belong to a single gt identity
            let mut owner: BTreeMap<u64, Option<u64>> = BTreeMap::new();
            for &(g, p) in overlap.keys() {
                let e = owner.entry(p).or_insert(Some(g));
                if *e != Some(g) { *e = None; }
            }
            let major: BTreeMap<u64, (u64, u64)> = owner.iter().filter_map(|(&p, &g)| g.map(|g| (p, (g, 0)))).collect();
            let ids: Vec<(u64, u64)> = major.iter().map(|(&p, &(g, _))| (p, g)).collect();
            for i in 0..ids.len() {
                for j in i + 1..ids.len() {
                    if ids[i].1 != ids[j].1 { continue; }
                    let (keep, drop) = (ids[i].0, ids[j].0);
                    let merged: Vec<IdBox> = pred.iter().map(|b| IdBox { id: if b.id == drop { keep } else { b.id }, ..*b }).collect();
                    let mut mo = BTreeMap::new();
                    for pair in frame_correspondence(&gt, &merged, 0.5) {
                        *mo.entry(pair).or_insert(0u64) += 1;
                    }
                    let after = score_boxes(&gt, &merged, 0.5).unwrap();
                    prop_assert_eq!(after.idtp, brute_force(&mo));
                    prop_assert!(after.idf1 >= before.idf1);
                }
            }
        }
    }
}
