//! Global identities: a union-find over tracklet keys with stable numeric IDs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::types::{Tracklet, TrackletKey};

pub type GlobalId = u64;

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalTrajectory {
    pub global_id: GlobalId,
    /// Ordered by start time.
    pub tracklets: Vec<TrackletKey>,
    pub created_at_ms: f64,
    pub updated_at_ms: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GlobalStore {
    tracklets: BTreeMap<TrackletKey, Tracklet>,
    parent: BTreeMap<TrackletKey, TrackletKey>,
    ids: BTreeMap<TrackletKey, GlobalId>,
    times: BTreeMap<GlobalId, (f64, f64)>,
    next_id: GlobalId,
}

impl GlobalStore {
    pub fn new() -> Self {
        Self {
            next_id: 1,
            ..Default::default()
        }
    }

    /// Store a tracklet as received; returns false for a duplicate key.
    pub fn insert(&mut self, t: Tracklet) -> bool {
        let k = t.key();
        if self.tracklets.contains_key(&k) {
            return false;
        }
        self.parent.insert(k, k);
        self.tracklets.insert(k, t);
        true
    }

    pub fn contains(&self, k: &TrackletKey) -> bool {
        self.tracklets.contains_key(k)
    }

    pub fn get(&self, k: &TrackletKey) -> Option<&Tracklet> {
        self.tracklets.get(k)
    }

    pub fn len(&self) -> usize {
        self.tracklets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracklets.is_empty()
    }

    pub fn find(&mut self, k: TrackletKey) -> TrackletKey {
        let mut root = k;
        while self.parent[&root] != root {
            root = self.parent[&root];
        }
        let mut cur = k;
        while cur != root {
            let next = self.parent[&cur];
            self.parent.insert(cur, root);
            cur = next;
        }
        root
    }

    fn find_ro(&self, k: &TrackletKey) -> Option<TrackletKey> {
        let mut root = *self.parent.get(k)?;
        while self.parent[&root] != root {
            root = self.parent[&root];
        }
        Some(root)
    }

    fn fresh_id(&mut self, now_ms: f64) -> GlobalId {
        let id = self.next_id;
        self.next_id += 1;
        self.times.insert(id, (now_ms, now_ms));
        id
    }

    /// Join two identities. When both already carry IDs the smaller survives.
    pub fn union(&mut self, a: TrackletKey, b: TrackletKey, now_ms: f64) -> GlobalId {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            return match self.ids.get(&ra) {
                Some(&id) => id,
                None => {
                    let id = self.fresh_id(now_ms);
                    self.ids.insert(ra, id);
                    id
                }
            };
        }
        let (root, child) = if ra < rb { (ra, rb) } else { (rb, ra) };
        let id = match (self.ids.remove(&root), self.ids.remove(&child)) {
            (Some(x), Some(y)) => {
                let (keep, drop) = (x.min(y), x.max(y));
                let created = self.times.remove(&drop).map_or(now_ms, |t| t.0);
                let t = self.times.get_mut(&keep).unwrap();
                t.0 = t.0.min(created);
                keep
            }
            (Some(x), None) | (None, Some(x)) => x,
            (None, None) => self.fresh_id(now_ms),
        };
        self.parent.insert(child, root);
        self.ids.insert(root, id);
        self.times.get_mut(&id).unwrap().1 = now_ms;
        id
    }

    /// Give `k`'s identity an ID if it has none.
    pub fn ensure_id(&mut self, k: TrackletKey, now_ms: f64) -> GlobalId {
        let r = self.find(k);
        if let Some(&id) = self.ids.get(&r) {
            return id;
        }
        let id = self.fresh_id(now_ms);
        self.ids.insert(r, id);
        id
    }

    pub fn global_id(&self, k: &TrackletKey) -> Option<GlobalId> {
        self.ids.get(&self.find_ro(k)?).copied()
    }

    pub fn same_identity(&self, a: &TrackletKey, b: &TrackletKey) -> bool {
        matches!((self.find_ro(a), self.find_ro(b)), (Some(x), Some(y)) if x == y)
    }

    /// Assign IDs to every identity that still lacks one, in key order.
    pub fn assign_all(&mut self, now_ms: f64) {
        let keys: Vec<TrackletKey> = self.tracklets.keys().copied().collect();
        for k in keys {
            self.ensure_id(k, now_ms);
        }
    }

    pub fn trajectories(&self) -> Vec<GlobalTrajectory> {
        let mut groups: BTreeMap<GlobalId, Vec<&Tracklet>> = BTreeMap::new();
        for (k, t) in &self.tracklets {
            if let Some(id) = self.global_id(k) {
                groups.entry(id).or_default().push(t);
            }
        }
        groups
            .into_iter()
            .map(|(id, mut ts)| {
                ts.sort_by(|a, b| {
                    a.start_ms()
                        .total_cmp(&b.start_ms())
                        .then(a.key().cmp(&b.key()))
                });
                let (created_at_ms, updated_at_ms) = self.times[&id];
                GlobalTrajectory {
                    global_id: id,
                    tracklets: ts.iter().map(|t| t.key()).collect(),
                    created_at_ms,
                    updated_at_ms,
                }
            })
            .collect()
    }

    /// One row per observation of every identified tracklet, sorted.
    pub fn rows(&self) -> Vec<TrajectoryRow> {
        let mut rows = Vec::new();
        for (k, t) in &self.tracklets {
            let Some(id) = self.global_id(k) else {
                continue;
            };
            for o in t.obs() {
                rows.push(TrajectoryRow {
                    global_id: id,
                    camera_id: k.camera_id,
                    track_id: k.track_id,
                    frame_index: o.frame_index,
                    bbox: [o.bbox.x, o.bbox.y, o.bbox.w, o.bbox.h],
                    gps: o.gps.map(|g| [g.lat, g.lon]),
                });
            }
        }
        rows.sort_by_key(|r| (r.global_id, r.camera_id, r.track_id, r.frame_index));
        rows
    }
}

/// A line of the trajectory table:
/// `global_id camera_id track_id frame_index x y w h lat lon`,
/// with `-` for both coordinates when no GPS fix exists.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub global_id: GlobalId,
    pub camera_id: u32,
    pub track_id: u32,
    pub frame_index: u32,
    pub bbox: [f64; 4],
    pub gps: Option<[f64; 2]>,
}

pub const TABLE_HEADER: &str = "# global_id camera_id track_id frame_index x y w h lat lon";

impl TrajectoryRow {
    pub fn format(&self) -> String {
        let mut s = format!(
            "{} {} {} {}",
            self.global_id, self.camera_id, self.track_id, self.frame_index
        );
        for v in self.bbox {
            write!(s, " {v}").unwrap();
        }
        match self.gps {
            Some([lat, lon]) => write!(s, " {lat} {lon}").unwrap(),
            None => s.push_str(" - -"),
        }
        s
    }

    pub fn parse(line: &str) -> Result<Self, String> {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 10 {
            return Err(format!("expected 10 fields, found {}", f.len()));
        }
        let int = |i: usize| {
            f[i].parse::<u64>()
                .map_err(|_| format!("field {}: bad integer {:?}", i + 1, f[i]))
        };
        let real = |i: usize| {
            f[i].parse::<f64>()
                .map_err(|_| format!("field {}: bad real {:?}", i + 1, f[i]))
        };
        let narrow = |v: u64, i: usize| {
            u32::try_from(v).map_err(|_| format!("field {}: out of range", i + 1))
        };
        Ok(Self {
            global_id: int(0)?,
            camera_id: narrow(int(1)?, 1)?,
            track_id: narrow(int(2)?, 2)?,
            frame_index: narrow(int(3)?, 3)?,
            bbox: [real(4)?, real(5)?, real(6)?, real(7)?],
            gps: if f[8] == "-" && f[9] == "-" {
                None
            } else {
                Some([real(8)?, real(9)?])
            },
        })
    }
}

pub fn write_table(path: &Path, rows: &[TrajectoryRow]) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{TABLE_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.format())?;
    }
    w.flush()
}

pub fn read_table(path: &Path) -> Result<Vec<TrajectoryRow>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            TrajectoryRow::parse(l).map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))
        })
        .collect()
}
