//! Central association: tracklet re-merge, camera-link learning, gated cost
//! matching across camera pairs and the global identity store.

pub mod assoc;
pub mod kde;
pub mod link;
pub mod remerge;
pub mod store;
pub mod zones;

use std::collections::{BTreeMap, BTreeSet};

use log::debug;
use serde::{Deserialize, Serialize};

pub use assoc::{build_cost_matrix, gate_candidates, greedy_match, pair_cost, AssociationConfig};
pub use kde::{fit_kde, Kde, KdeError};
pub use link::{
    fit_link, select_link, zone_pair_score, BandwidthRule, CameraLink, LinkFile, LinkFitConfig,
    LinkOutcome, NoLink, Topology, TopologyPair,
};
pub use remerge::{remerge, remerge_with_log, RemergeConfig};
pub use store::{read_table, write_table, GlobalId, GlobalStore, GlobalTrajectory, TrajectoryRow};
pub use zones::{cluster_zones, ClusterParams, Zone, ZoneKind, ZoneShape};

use crate::types::{CameraId, Tracklet, TrackletKey};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub association: AssociationConfig,
    pub remerge: RemergeConfig,
    pub remerge_enabled: bool,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            association: AssociationConfig::default(),
            remerge: RemergeConfig::default(),
            remerge_enabled: true,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ServerStats {
    pub ingested: u64,
    pub duplicates: u64,
    pub rejected: u64,
    pub cycles: u64,
    pub matches: u64,
    pub merges: u64,
    pub evicted: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CycleReport {
    pub now_ms: f64,
    pub merges: Vec<(TrackletKey, TrackletKey)>,
    pub matches: Vec<(TrackletKey, TrackletKey)>,
    pub evicted: usize,
}

pub struct Server {
    cfg: ServerConfig,
    links: Vec<CameraLink>,
    image_widths: BTreeMap<CameraId, f64>,
    buffer: BTreeMap<CameraId, Vec<Tracklet>>,
    used_exit: BTreeSet<TrackletKey>,
    used_entry: BTreeSet<TrackletKey>,
    store: GlobalStore,
    stats: ServerStats,
}

impl Server {
    pub fn new(
        cfg: ServerConfig,
        links: Vec<CameraLink>,
        image_widths: BTreeMap<CameraId, f64>,
    ) -> Self {
        Self {
            cfg,
            links,
            image_widths,
            buffer: BTreeMap::new(),
            used_exit: BTreeSet::new(),
            used_entry: BTreeSet::new(),
            store: GlobalStore::new(),
            stats: ServerStats::default(),
        }
    }

    pub fn config(&self) -> &ServerConfig {
        &self.cfg
    }

    pub fn store(&self) -> &GlobalStore {
        &self.store
    }

    pub fn stats(&self) -> ServerStats {
        self.stats
    }

    pub fn buffered(&self) -> usize {
        self.buffer.values().map(Vec::len).sum()
    }

    /// Accept a completed tracklet. Tracklets without a feature or with a
    /// key already seen are counted and dropped.
    pub fn ingest(&mut self, t: Tracklet) -> bool {
        if t.feature.is_none() {
            self.stats.rejected += 1;
            return false;
        }
        if !self.store.insert(t.clone()) {
            self.stats.duplicates += 1;
            return false;
        }
        self.stats.ingested += 1;
        self.buffer.entry(t.camera_id).or_default().push(t);
        true
    }

    /// Run one association cycle at `now_ms`.
    pub fn cycle(&mut self, now_ms: f64) -> CycleReport {
        let mut report = CycleReport {
            now_ms,
            ..Default::default()
        };
        self.stats.cycles += 1;

        if self.cfg.remerge_enabled {
            for (cam, ts) in self.buffer.iter_mut() {
                let width = self.image_widths.get(cam).copied().unwrap_or(1920.0);
                let (merged, log) = remerge_with_log(std::mem::take(ts), &self.cfg.remerge, width);
                *ts = merged;
                for &(kept, absorbed) in &log {
                    self.store.union(kept, absorbed, now_ms);
                    if self.used_exit.remove(&absorbed) {
                        self.used_exit.insert(kept);
                    }
                }
                report.merges.extend(log);
            }
        }

        let horizon = now_ms - self.cfg.association.beta_s * 1000.0;
        let empty = Vec::new();
        for link in &self.links {
            let rows: Vec<&Tracklet> = self
                .buffer
                .get(&link.cam_i)
                .unwrap_or(&empty)
                .iter()
                .filter(|t| t.end_ms() >= horizon && t.end_ms() <= now_ms)
                .filter(|t| !self.used_exit.contains(&t.key()) && link.exits_here(t))
                .collect();
            let cols: Vec<&Tracklet> = self
                .buffer
                .get(&link.cam_j)
                .unwrap_or(&empty)
                .iter()
                .filter(|t| t.end_ms() >= horizon && t.end_ms() <= now_ms)
                .filter(|t| !self.used_entry.contains(&t.key()) && link.enters_here(t))
                .collect();
            if rows.is_empty() || cols.is_empty() {
                continue;
            }
            let c = build_cost_matrix(&rows, &cols, link, &self.cfg.association);
            for (r, k) in greedy_match(&c, self.cfg.association.match_threshold) {
                let (a, b) = (rows[r].key(), cols[k].key());
                debug!("match {a} -> {b} cost {:.4}", c[r][k]);
                self.used_exit.insert(a);
                self.used_entry.insert(b);
                report.matches.push((a, b));
            }
        }
        for &(a, b) in &report.matches {
            self.store.union(a, b, now_ms);
        }

        for ts in self.buffer.values_mut() {
            let (old, keep): (Vec<Tracklet>, Vec<Tracklet>) = std::mem::take(ts)
                .into_iter()
                .partition(|t| t.end_ms() < horizon);
            *ts = keep;
            for t in old {
                self.store.ensure_id(t.key(), now_ms);
                report.evicted += 1;
            }
        }

        self.stats.merges += report.merges.len() as u64;
        self.stats.matches += report.matches.len() as u64;
        self.stats.evicted += report.evicted as u64;
        report
    }

    /// Final cycle at `now_ms`, then give every remaining identity an ID.
    pub fn finish(&mut self, now_ms: f64) -> CycleReport {
        let report = self.cycle(now_ms);
        self.buffer.clear();
        self.store.assign_all(now_ms);
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature::FeatureVector;
    use crate::geometry::BBox;
    use crate::types::Observation;

    fn tracklet(cam: u32, id: u32, t0_ms: f64, x0: f64, x1: f64, f: &[f64]) -> Tracklet {
        let obs = (0..10)
            .map(|k| Observation {
                frame_index: (t0_ms / 100.0) as u32 + k,
                timestamp_ms: t0_ms + k as f64 * 100.0,
                bbox: BBox::from_center(x0 + (x1 - x0) * k as f64 / 9.0, 500.0, 100.0, 50.0),
                confidence: 0.9,
                gps: None,
            })
            .collect();
        Tracklet::new(cam, id, obs)
            .unwrap()
            .with_feature(FeatureVector::new(f.to_vec()))
    }

    fn link(i: u32, j: u32) -> CameraLink {
        CameraLink {
            cam_i: i,
            cam_j: j,
            exit_index: 0,
            entry_index: 0,
            exit_zone: ZoneShape {
                centroid: [1800.0, 500.0],
                radius: 5.0,
            },
            entry_zone: ZoneShape {
                centroid: [100.0, 500.0],
                radius: 5.0,
            },
            slack_px: 10.0,
            t_prob: 0.01,
            kde: Kde::new(vec![10.0], 5.0).unwrap(),
        }
    }

    fn widths() -> BTreeMap<CameraId, f64> {
        (0..4).map(|c| (c, 1920.0)).collect()
    }

    #[test]
    fn empty_buffer_leaves_store_unchanged() {
        let mut s = Server::new(ServerConfig::default(), vec![link(1, 2)], widths());
        let r = s.cycle(200_000.0);
        assert!(r.matches.is_empty() && r.merges.is_empty());
        assert!(s.store().is_empty());
    }

    #[test]
    fn single_pair_shares_an_id() {
        let mut s = Server::new(ServerConfig::default(), vec![link(1, 2)], widths());
        s.ingest(tracklet(1, 1, 0.0, 100.0, 1800.0, &[1.0, 0.0]));
        s.ingest(tracklet(2, 1, 10_900.0, 100.0, 1800.0, &[1.0, 0.0]));
        let r = s.cycle(200_000.0);
        assert_eq!(r.matches.len(), 1);
        let a = TrackletKey {
            camera_id: 1,
            track_id: 1,
        };
        let b = TrackletKey {
            camera_id: 2,
            track_id: 1,
        };
        assert!(s.store().global_id(&a).is_some());
        assert_eq!(s.store().global_id(&a), s.store().global_id(&b));
    }

    #[test]
    fn chain_over_two_cycles() {
        let mut s = Server::new(
            ServerConfig::default(),
            vec![link(1, 2), link(2, 3)],
            widths(),
        );
        s.ingest(tracklet(1, 1, 180_000.0, 100.0, 1800.0, &[1.0, 0.0]));
        s.ingest(tracklet(2, 1, 190_900.0, 100.0, 1800.0, &[1.0, 0.0]));
        s.cycle(200_000.0);
        s.ingest(tracklet(3, 1, 201_800.0, 100.0, 1800.0, &[1.0, 0.0]));
        s.finish(400_000.0);
        let ids: BTreeSet<_> = [(1, 1), (2, 1), (3, 1)]
            .iter()
            .map(|&(c, t)| {
                s.store()
                    .global_id(&TrackletKey {
                        camera_id: c,
                        track_id: t,
                    })
                    .unwrap()
            })
            .collect();
        assert_eq!(ids.len(), 1);
    }

    #[test]
    fn unmatched_get_singletons_on_eviction() {
        let mut s = Server::new(ServerConfig::default(), vec![link(1, 2)], widths());
        s.ingest(tracklet(1, 1, 0.0, 100.0, 1800.0, &[1.0, 0.0]));
        s.ingest(tracklet(2, 1, 10_900.0, 100.0, 1800.0, &[0.0, 1.0]));
        s.cycle(200_000.0);
        let a = TrackletKey {
            camera_id: 1,
            track_id: 1,
        };
        assert_eq!(s.store().global_id(&a), None);
        let r = s.cycle(400_000.0);
        assert_eq!(r.evicted, 2);
        assert_ne!(
            s.store().global_id(&a),
            s.store().global_id(&TrackletKey {
                camera_id: 2,
                track_id: 1
            })
        );
    }

    #[test]
    fn remerge_toggle() {
        let frag = |on: bool| {
            let cfg = ServerConfig {
                remerge_enabled: on,
                ..ServerConfig::default()
            };
            let mut s = Server::new(cfg, vec![], widths());
            s.ingest(tracklet(0, 1, 0.0, 100.0, 900.0, &[1.0, 0.0]));
            s.ingest(tracklet(0, 2, 1_900.0, 1000.0, 1800.0, &[1.0, 0.0]));
            s.finish(10_000.0);
            s.store().trajectories().len()
        };
        assert_eq!(frag(true), 1);
        assert_eq!(frag(false), 2);
    }

    #[test]
    fn rejects_featureless_and_duplicates() {
        let mut s = Server::new(ServerConfig::default(), vec![], widths());
        let mut t = tracklet(0, 1, 0.0, 0.0, 1.0, &[1.0]);
        assert!(s.ingest(t.clone()));
        assert!(!s.ingest(t.clone()));
        t.feature = None;
        t.track_id = 2;
        assert!(!s.ingest(t));
        assert_eq!((s.stats().duplicates, s.stats().rejected), (1, 1));
    }
}
