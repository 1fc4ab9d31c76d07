//! Candidate gating, pair costs and greedy matching between two cameras.

use serde::{Deserialize, Serialize};

use super::link::{transition_s, CameraLink};
use crate::feature::cosine_similarity;
use crate::types::Tracklet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssociationConfig {
    /// Cycle period, seconds.
    pub alpha_s: f64,
    /// Buffer horizon, seconds.
    pub beta_s: f64,
    /// Appearance weight.
    pub delta: f64,
    /// Transition-density weight.
    pub epsilon: f64,
    pub match_threshold: f64,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        Self {
            alpha_s: 200.0,
            beta_s: 300.0,
            delta: 1.0,
            epsilon: 5.0,
            match_threshold: 0.4,
        }
    }
}

impl AssociationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha_s > 0.0) {
            return Err("alpha_s must be positive".into());
        }
        if !(self.beta_s >= self.alpha_s) {
            return Err("beta_s must be >= alpha_s".into());
        }
        if !(self.delta >= 0.0 && self.epsilon >= 0.0) {
            return Err("delta and epsilon must be >= 0".into());
        }
        if !self.match_threshold.is_finite() {
            return Err("match_threshold must be finite".into());
        }
        Ok(())
    }
}

/// Transition density of the pair, if it passes the zone and density gate.
pub fn gate_pair(link: &CameraLink, a: &Tracklet, b: &Tracklet) -> Option<f64> {
    let dt = transition_s(a, b);
    if !(dt > 0.0) || !link.exits_here(a) || !link.enters_here(b) {
        return None;
    }
    let p = link.density(dt);
    (p >= link.t_prob).then_some(p)
}

pub fn gate_candidates<'a>(
    link: &CameraLink,
    pairs: &[(&'a Tracklet, &'a Tracklet)],
) -> Vec<(&'a Tracklet, &'a Tracklet)> {
    pairs
        .iter()
        .copied()
        .filter(|(a, b)| gate_pair(link, a, b).is_some())
        .collect()
}

/// `delta * (1 - cos) - epsilon * density`; lower is better.
pub fn cost_from(cos: f64, density: f64, cfg: &AssociationConfig) -> f64 {
    cfg.delta * (1.0 - cos) - cfg.epsilon * density
}

pub fn pair_cost(a: &Tracklet, b: &Tracklet, link: &CameraLink, cfg: &AssociationConfig) -> f64 {
    let cos = match (&a.feature, &b.feature) {
        (Some(f), Some(g)) => cosine_similarity(f, g).unwrap_or(0.0),
        _ => 0.0,
    };
    cost_from(cos, link.density(transition_s(a, b)), cfg)
}

/// Rows are exit-camera tracklets, columns entry-camera tracklets; gated-out pairs are `+inf`.
pub fn build_cost_matrix(
    ti: &[&Tracklet],
    tj: &[&Tracklet],
    link: &CameraLink,
    cfg: &AssociationConfig,
) -> Vec<Vec<f64>> {
    ti.iter()
        .map(|a| {
            tj.iter()
                .map(|b| match gate_pair(link, a, b) {
                    Some(_) => pair_cost(a, b, link, cfg),
                    None => f64::INFINITY,
                })
                .collect()
        })
        .collect()
}

/// Repeatedly take the cheapest finite entry `<= threshold` and strike its row and column.
pub fn greedy_match(c: &[Vec<f64>], threshold: f64) -> Vec<(usize, usize)> {
    let mut entries: Vec<(f64, usize, usize)> = c
        .iter()
        .enumerate()
        .flat_map(|(r, row)| row.iter().enumerate().map(move |(k, &v)| (v, r, k)))
        .filter(|(v, _, _)| v.is_finite() && *v <= threshold)
        .collect();
    entries.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let rows = c.len();
    let cols = c.iter().map(Vec::len).max().unwrap_or(0);
    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    let mut out = Vec::new();
    for (_, r, k) in entries {
        if !row_used[r] && !col_used[k] {
            row_used[r] = true;
            col_used[k] = true;
            out.push((r, k));
        }
    }
    out
}
