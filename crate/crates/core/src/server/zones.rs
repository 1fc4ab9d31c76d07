//! Entry/exit zones: density clustering of tracklet endpoints in image space.

use serde::{Deserialize, Serialize};

use crate::types::CameraId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZoneKind {
    Entry,
    Exit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Zone {
    pub camera_id: CameraId,
    pub kind: ZoneKind,
    pub centroid: (f64, f64),
    pub members: Vec<(f64, f64)>,
    /// Largest member distance from the centroid.
    pub radius: f64,
}

/// Centroid and radius, the part of a zone a fitted link keeps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoneShape {
    pub centroid: [f64; 2],
    pub radius: f64,
}

impl ZoneShape {
    pub fn contains(&self, p: (f64, f64), slack: f64) -> bool {
        (p.0 - self.centroid[0]).hypot(p.1 - self.centroid[1]) <= self.radius + slack
    }
}

impl Zone {
    pub fn shape(&self) -> ZoneShape {
        ZoneShape {
            centroid: [self.centroid.0, self.centroid.1],
            radius: self.radius,
        }
    }

    pub fn contains(&self, p: (f64, f64), slack: f64) -> bool {
        self.shape().contains(p, slack)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub eps_px: f64,
    pub min_pts: usize,
}

/// DBSCAN labels: `Some(cluster)` or `None` for noise. Clusters are numbered
/// in order of their first core point.
pub fn dbscan(points: &[(f64, f64)], params: ClusterParams) -> Vec<Option<usize>> {
    let eps2 = params.eps_px * params.eps_px;
    let neighbors = |i: usize| -> Vec<usize> {
        let p = points[i];
        (0..points.len())
            .filter(|&j| {
                let q = points[j];
                (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2) <= eps2
            })
            .collect()
    };

    let mut labels: Vec<Option<usize>> = vec![None; points.len()];
    let mut visited = vec![false; points.len()];
    let mut next = 0;
    for i in 0..points.len() {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let seeds = neighbors(i);
        if seeds.len() < params.min_pts {
            continue;
        }
        let c = next;
        next += 1;
        labels[i] = Some(c);
        let mut stack = seeds;
        while let Some(j) = stack.pop() {
            if labels[j].is_none() {
                labels[j] = Some(c);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let nj = neighbors(j);
            if nj.len() >= params.min_pts {
                stack.extend(
                    nj.into_iter()
                        .filter(|&k| labels[k].is_none() || !visited[k]),
                );
            }
        }
    }
    labels
}

pub fn cluster_zones(
    points: &[(f64, f64)],
    camera_id: CameraId,
    kind: ZoneKind,
    params: ClusterParams,
) -> Vec<Zone> {
    let labels = dbscan(points, params);
    let n = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n];
    for (p, l) in points.iter().zip(&labels) {
        if let Some(c) = l {
            members[*c].push(*p);
        }
    }
    members
        .into_iter()
        .map(|m| {
            let k = m.len() as f64;
            let centroid = (
                m.iter().map(|p| p.0).sum::<f64>() / k,
                m.iter().map(|p| p.1).sum::<f64>() / k,
            );
            let radius = m
                .iter()
                .map(|p| (p.0 - centroid.0).hypot(p.1 - centroid.1))
                .fold(0.0, f64::max);
            Zone {
                camera_id,
                kind,
                centroid,
                members: m,
                radius,
            }
        })
        .collect()
}
