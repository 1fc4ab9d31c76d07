//! Self-supervised camera links: which exit zone of one camera feeds which
//! entry zone of the next, and how long the transition takes.

use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::kde::{silverman_bandwidth, Kde};
use super::zones::{cluster_zones, ClusterParams, Zone, ZoneKind, ZoneShape};
use crate::feature::cosine_similarity;
use crate::types::{CameraId, Tracklet};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandwidthRule {
    /// Always use `bandwidth_s`.
    #[default]
    Fixed,
    /// Silverman's rule on the collected samples, `bandwidth_s` as fallback.
    Silverman,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkFitConfig {
    pub bandwidth_s: f64,
    pub bandwidth_rule: BandwidthRule,
    /// Minimum transition density for a candidate pair to pass the gate.
    pub t_prob: f64,
    /// Clustering radius as a fraction of image width.
    pub eps_frac: f64,
    pub min_pts: usize,
    /// Zone membership tolerance as a fraction of image width.
    pub slack_frac: f64,
    /// Similarity a candidate pair must exceed to count as evidence.
    pub margin: f64,
    /// Longest exit-to-entry gap considered during fitting, seconds.
    pub w_max_s: f64,
    pub min_link_score: f64,
    pub min_transitions: usize,
}

impl Default for LinkFitConfig {
    fn default() -> Self {
        Self {
            bandwidth_s: 5.0,
            bandwidth_rule: BandwidthRule::Fixed,
            t_prob: 0.01,
            eps_frac: 0.05,
            min_pts: 5,
            slack_frac: 0.05,
            margin: 0.5,
            w_max_s: 120.0,
            min_link_score: 1.0,
            min_transitions: 3,
        }
    }
}

impl LinkFitConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.bandwidth_s > 0.0) {
            return Err("bandwidth_s must be positive".into());
        }
        if !(self.t_prob >= 0.0) {
            return Err("t_prob must be >= 0".into());
        }
        if !(self.eps_frac > 0.0 && self.slack_frac >= 0.0 && self.w_max_s > 0.0) {
            return Err("eps_frac, slack_frac and w_max_s must be positive".into());
        }
        if self.min_pts == 0 || self.min_transitions == 0 {
            return Err("min_pts and min_transitions must be at least 1".into());
        }
        Ok(())
    }
}

/// A fitted directed link from `cam_i` (exit) to `cam_j` (entry).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraLink {
    pub cam_i: CameraId,
    pub cam_j: CameraId,
    pub exit_index: usize,
    pub entry_index: usize,
    pub exit_zone: ZoneShape,
    pub entry_zone: ZoneShape,
    pub slack_px: f64,
    pub t_prob: f64,
    pub kde: Kde,
}

impl CameraLink {
    pub fn exits_here(&self, t: &Tracklet) -> bool {
        t.camera_id == self.cam_i
            && self
                .exit_zone
                .contains(t.last().bbox.center(), self.slack_px)
    }

    pub fn enters_here(&self, t: &Tracklet) -> bool {
        t.camera_id == self.cam_j
            && self
                .entry_zone
                .contains(t.first().bbox.center(), self.slack_px)
    }

    pub fn density(&self, dt_s: f64) -> f64 {
        self.kde.eval(dt_s)
    }
}

/// Exit-to-entry time in seconds.
pub fn transition_s(exit: &Tracklet, entry: &Tracklet) -> f64 {
    (entry.start_ms() - exit.end_ms()) / 1000.0
}

/// All `(a, b)` with `b` entering within `(0, w_max_s]` seconds after `a` exits.
pub fn candidate_pairs<'a>(
    ti: &'a [Tracklet],
    tj: &'a [Tracklet],
    w_max_s: f64,
) -> Vec<(&'a Tracklet, &'a Tracklet)> {
    let mut out = Vec::new();
    for a in ti {
        for b in tj {
            let dt = transition_s(a, b);
            if dt > 0.0 && dt <= w_max_s {
                out.push((a, b));
            }
        }
    }
    out
}

fn similarity(a: &Tracklet, b: &Tracklet) -> f64 {
    match (&a.feature, &b.feature) {
        (Some(f), Some(g)) => cosine_similarity(f, g).unwrap_or(0.0),
        _ => 0.0,
    }
}

/// Appearance-weighted transit count between an exit and an entry zone.
pub fn zone_pair_score(
    exit: &Zone,
    entry: &Zone,
    candidates: &[(&Tracklet, &Tracklet)],
    margin: f64,
    slack_px: f64,
) -> f64 {
    candidates
        .iter()
        .filter(|(a, b)| {
            exit.contains(a.last().bbox.center(), slack_px)
                && entry.contains(b.first().bbox.center(), slack_px)
        })
        .map(|(a, b)| (similarity(a, b) - margin).max(0.0))
        .sum()
}

/// Argmax over the score matrix; first maximum in row-major order wins.
pub fn select_link(scores: &[Vec<f64>], min_link_score: f64) -> Option<(usize, usize)> {
    let mut best: Option<(f64, usize, usize)> = None;
    for (m, row) in scores.iter().enumerate() {
        for (n, &s) in row.iter().enumerate() {
            if best.is_none_or(|(b, _, _)| s > b) {
                best = Some((s, m, n));
            }
        }
    }
    best.filter(|(s, _, _)| *s >= min_link_score)
        .map(|(_, m, n)| (m, n))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoLink {
    pub cam_i: CameraId,
    pub cam_j: CameraId,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LinkOutcome {
    Linked(CameraLink),
    NoLink(NoLink),
}

fn endpoints(ts: &[Tracklet], kind: ZoneKind) -> Vec<(f64, f64)> {
    ts.iter()
        .map(|t| match kind {
            ZoneKind::Entry => t.first().bbox.center(),
            ZoneKind::Exit => t.last().bbox.center(),
        })
        .collect()
}

/// Learn the link `cam_i -> cam_j` from training tracklets of both cameras.
pub fn fit_link(
    cam_i: CameraId,
    cam_j: CameraId,
    ti: &[Tracklet],
    tj: &[Tracklet],
    image_width_i: f64,
    image_width_j: f64,
    cfg: &LinkFitConfig,
) -> LinkOutcome {
    let no_link = |reason: String| {
        warn!("no link {cam_i}->{cam_j}: {reason}");
        LinkOutcome::NoLink(NoLink {
            cam_i,
            cam_j,
            reason,
        })
    };
    let params = |w: f64| ClusterParams {
        eps_px: cfg.eps_frac * w,
        min_pts: cfg.min_pts,
    };
    let exits = cluster_zones(
        &endpoints(ti, ZoneKind::Exit),
        cam_i,
        ZoneKind::Exit,
        params(image_width_i),
    );
    let entries = cluster_zones(
        &endpoints(tj, ZoneKind::Entry),
        cam_j,
        ZoneKind::Entry,
        params(image_width_j),
    );
    if exits.is_empty() || entries.is_empty() {
        return no_link(format!(
            "{} exit and {} entry zones",
            exits.len(),
            entries.len()
        ));
    }

    // zones of the two cameras may use different slack if resolutions differ
    let slack_i = cfg.slack_frac * image_width_i;
    let slack_j = cfg.slack_frac * image_width_j;
    let cands = candidate_pairs(ti, tj, cfg.w_max_s);
    let in_pair = |m: usize, n: usize, a: &Tracklet, b: &Tracklet| {
        exits[m].contains(a.last().bbox.center(), slack_i)
            && entries[n].contains(b.first().bbox.center(), slack_j)
    };
    let scores: Vec<Vec<f64>> = (0..exits.len())
        .map(|m| {
            (0..entries.len())
                .map(|n| {
                    cands
                        .iter()
                        .filter(|(a, b)| in_pair(m, n, a, b))
                        .map(|(a, b)| (similarity(a, b) - cfg.margin).max(0.0))
                        .sum()
                })
                .collect()
        })
        .collect();
    let Some((m, n)) = select_link(&scores, cfg.min_link_score) else {
        return no_link("no zone pair reaches min_link_score".into());
    };

    // one-to-one pairing inside the chosen zones, most similar first
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (a_idx, a) in ti.iter().enumerate() {
        for (b_idx, b) in tj.iter().enumerate() {
            let dt = transition_s(a, b);
            if dt > 0.0 && dt <= cfg.w_max_s && in_pair(m, n, a, b) {
                let s = similarity(a, b);
                if s > cfg.margin {
                    pairs.push((s, a_idx, b_idx));
                }
            }
        }
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_a = vec![false; ti.len()];
    let mut used_b = vec![false; tj.len()];
    let mut samples = Vec::new();
    for (_, a, b) in pairs {
        if !used_a[a] && !used_b[b] {
            used_a[a] = true;
            used_b[b] = true;
            samples.push(transition_s(&ti[a], &tj[b]));
        }
    }
    if samples.len() < cfg.min_transitions {
        return no_link(format!(
            "{} transitions, {} required",
            samples.len(),
            cfg.min_transitions
        ));
    }
    let h = match cfg.bandwidth_rule {
        BandwidthRule::Fixed => cfg.bandwidth_s,
        BandwidthRule::Silverman => silverman_bandwidth(&samples).unwrap_or(cfg.bandwidth_s),
    };
    let kde = Kde::new(samples, h).expect("samples non-empty and finite, bandwidth validated");
    LinkOutcome::Linked(CameraLink {
        cam_i,
        cam_j,
        exit_index: m,
        entry_index: n,
        exit_zone: exits[m].shape(),
        entry_zone: entries[n].shape(),
        slack_px: slack_i.max(slack_j),
        t_prob: cfg.t_prob,
        kde,
    })
}

/// Fitted links and the declared pairs that failed to produce one (TOML).
///
/// ```toml
/// [[link]]
/// cam_i = 0
/// cam_j = 1
/// exit_index = 1
/// entry_index = 0
/// exit_zone = { centroid = [1848.0, 636.0], radius = 3.2 }
/// entry_zone = { centroid = [72.0, 636.0], radius = 2.9 }
/// slack_px = 96.0
/// t_prob = 0.01
/// kde = { samples = [11.2, 12.9, 10.4], bandwidth = 5.0 }
///
/// [[no_link]]
/// cam_i = 1
/// cam_j = 0
/// reason = "1 transitions, 3 required"
/// ```
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkFile {
    #[serde(default)]
    pub link: Vec<CameraLink>,
    #[serde(default)]
    pub no_link: Vec<NoLink>,
}

impl LinkFile {
    pub fn from_outcomes(outcomes: impl IntoIterator<Item = LinkOutcome>) -> Self {
        let mut f = LinkFile::default();
        for o in outcomes {
            match o {
                LinkOutcome::Linked(l) => f.link.push(l),
                LinkOutcome::NoLink(n) => f.no_link.push(n),
            }
        }
        f
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let f: LinkFile = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        for l in &f.link {
            Kde::new(l.kde.samples().to_vec(), l.kde.bandwidth())
                .map_err(|e| format!("{}: link {}->{}: {e}", path.display(), l.cam_i, l.cam_j))?;
        }
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, toml::to_string(self).map_err(std::io::Error::other)?)
    }
}

/// Declared adjacent camera pairs (TOML), directed from exit to entry camera.
///
/// ```toml
/// [[pair]]
/// from = 0
/// to = 1
/// segment_m = 150.0
/// ```
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    #[serde(default)]
    pub pair: Vec<TopologyPair>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologyPair {
    pub from: CameraId,
    pub to: CameraId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_m: Option<f64>,
}

impl Topology {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let t: Topology = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        if let Some(p) = t.pair.iter().find(|p| p.from == p.to) {
            return Err(format!(
                "{}: pair {}->{} links a camera to itself",
                path.display(),
                p.from,
                p.to
            ));
        }
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, toml::to_string(self).map_err(std::io::Error::other)?)
    }
}
