//! Re-merging of fragmented tracklets within one camera.
//!
//! `A` and `B` are merged when `B` starts shortly after `A` ends, near where
//! `A` ended, and looks like `A` by either the aggregate features or the
//! boundary features.

use serde::{Deserialize, Serialize};

use crate::feature::{aggregate_features, cosine_similarity};
use crate::types::{BoundaryFeatures, Tracklet, TrackletKey};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemergeConfig {
    /// Maximum temporal gap, milliseconds.
    pub t_th_ms: f64,
    /// Maximum end-to-start center distance as a fraction of image width.
    pub d_th: f64,
    /// Maximum appearance distance (1 - cosine).
    pub f_th: f64,
}

impl Default for RemergeConfig {
    fn default() -> Self {
        Self {
            t_th_ms: 4000.0,
            d_th: 0.25,
            f_th: 0.2,
        }
    }
}

impl RemergeConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.t_th_ms > 0.0 && self.d_th > 0.0 && self.f_th > 0.0) {
            return Err("remerge thresholds must be positive".into());
        }
        Ok(())
    }
}

/// Whether `b` may be appended to `a`; returns the gap when it may.
pub fn mergeable(a: &Tracklet, b: &Tracklet, cfg: &RemergeConfig, image_width: f64) -> Option<f64> {
    let gap = b.start_ms() - a.end_ms();
    if !(gap > 0.0 && gap < cfg.t_th_ms) {
        return None;
    }
    if a.last().bbox.center_distance(&b.first().bbox) / image_width >= cfg.d_th {
        return None;
    }
    let cos = |x, y| cosine_similarity(x, y).ok();
    let agg = cos(a.feature.as_ref()?, b.feature.as_ref()?)?;
    let boundary = match (a.end_feature(), b.start_feature()) {
        (Some(x), Some(y)) => cos(x, y).unwrap_or(agg),
        _ => agg,
    };
    if 1.0 - agg.max(boundary) >= cfg.f_th {
        return None;
    }
    Some(gap)
}

/// Concatenate `b` onto `a`; the aggregate is re-weighted by observation counts.
pub fn merge_pair(a: &Tracklet, b: &Tracklet) -> Tracklet {
    let mut m = a.clone();
    m.extend_with(b).expect("merge order checked by caller");
    if let (Some(fa), Some(fb)) = (&a.feature, &b.feature) {
        m.feature =
            aggregate_features(&[(fa.clone(), a.len() as f64), (fb.clone(), b.len() as f64)])
                .ok()
                .or_else(|| a.feature.clone());
    }
    m.boundary = match (a.start_feature(), b.end_feature()) {
        (Some(s), Some(e)) => Some(BoundaryFeatures {
            start: s.clone(),
            end: e.clone(),
        }),
        _ => None,
    };
    m
}

/// Merge to fixpoint; also returns `(kept, absorbed)` for every merge in order.
pub fn remerge_with_log(
    mut ts: Vec<Tracklet>,
    cfg: &RemergeConfig,
    image_width: f64,
) -> (Vec<Tracklet>, Vec<(TrackletKey, TrackletKey)>) {
    let mut log = Vec::new();
    loop {
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for (i, a) in ts.iter().enumerate() {
            for (j, b) in ts.iter().enumerate() {
                if i != j {
                    if let Some(gap) = mergeable(a, b, cfg, image_width) {
                        cands.push((gap, i, j));
                    }
                }
            }
        }
        if cands.is_empty() {
            break;
        }
        cands.sort_by(|x, y| {
            x.0.total_cmp(&y.0)
                .then_with(|| ts[x.1].key().cmp(&ts[y.1].key()))
                .then_with(|| ts[x.2].key().cmp(&ts[y.2].key()))
        });
        let mut touched = vec![false; ts.len()];
        let mut absorbed = vec![false; ts.len()];
        let mut merged: Vec<(usize, Tracklet)> = Vec::new();
        for (_, i, j) in cands {
            if touched[i] || touched[j] {
                continue;
            }
            touched[i] = true;
            touched[j] = true;
            absorbed[j] = true;
            log.push((ts[i].key(), ts[j].key()));
            merged.push((i, merge_pair(&ts[i], &ts[j])));
        }
        for (i, m) in merged {
            ts[i] = m;
        }
        ts = ts
            .into_iter()
            .zip(absorbed)
            .filter_map(|(t, gone)| (!gone).then_some(t))
            .collect();
    }
    (ts, log)
}

pub fn remerge(ts: Vec<Tracklet>, cfg: &RemergeConfig, image_width: f64) -> Vec<Tracklet> {
    remerge_with_log(ts, cfg, image_width).0
}
