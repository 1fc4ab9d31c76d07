//! Canonical binary layout for edge-to-server messages.
//!
//! All integers are little-endian `u32`, all reals little-endian IEEE-754
//! binary64. Fields appear in declaration order, lists carry a `u32` length
//! prefix and optional fields a presence byte (`0` absent, `1` present).
//! Every message ends with a CRC-32 (IEEE) of the preceding bytes.
//!
//! `TrackletMsg`:
//!
//! ```text
//! u32 schema_version (=1)
//! u32 camera_id
//! u32 track_id
//! u32 n_obs, then per observation:
//!     u32 frame_index, f64 timestamp_ms, f64 x, f64 y, f64 w, f64 h,
//!     f64 confidence, u8 gps_present, [f64 lat, f64 lon]
//! u32 dim, f64 x dim                      aggregated feature
//! u8 boundary_present, [u32 dim, f64 x dim, u32 dim, f64 x dim]
//! f64 emitted_at_ms
//! u32 crc32
//! ```
//!
//! `FrameMsg`:
//!
//! ```text
//! u32 schema_version (=1)
//! u32 camera_id
//! u32 frame_index
//! f64 timestamp_ms
//! u32 n_dets, then per detection: f64 x, f64 y, f64 w, f64 h, f64 confidence, u32 class_id
//! u8 raster_present, [u32 width, u32 height, u32 n_rects,
//!                     then per rect: u32 x0, u32 y0, u32 x1, u32 y1, f64 value]
//! u32 crc32
//! ```

use crate::edge::Grid;
use crate::feature::FeatureVector;
use crate::geometry::{BBox, GeoPoint};
use crate::types::{BoundaryFeatures, CameraId, Detection, Observation, TrackId, Tracklet};

use super::WireError;

pub const SCHEMA_VERSION: u32 = 1;

const OBS_MIN_BYTES: usize = 4 + 8 * 6 + 1;
const DET_BYTES: usize = 8 * 5 + 4;
const RECT_BYTES: usize = 4 * 4 + 8;

/// A completed tracklet as transmitted from an edge node.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackletMsg {
    pub schema_version: u32,
    pub camera_id: CameraId,
    pub track_id: TrackId,
    pub obs: Vec<Observation>,
    pub feature: FeatureVector,
    pub boundary: Option<BoundaryFeatures>,
    pub emitted_at_ms: f64,
}

impl TrackletMsg {
    pub fn from_tracklet(t: &Tracklet, emitted_at_ms: f64) -> Result<Self, WireError> {
        let feature = t
            .feature
            .clone()
            .ok_or(WireError::Invalid("tracklet has no feature"))?;
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            camera_id: t.camera_id,
            track_id: t.track_id,
            obs: t.obs().to_vec(),
            feature,
            boundary: t.boundary.clone(),
            emitted_at_ms,
        })
    }

    pub fn to_tracklet(&self) -> Result<Tracklet, WireError> {
        let mut t = Tracklet::new(self.camera_id, self.track_id, self.obs.clone())
            .map_err(|_| WireError::Invalid("observations empty or out of order"))?;
        t.feature = Some(self.feature.clone());
        t.boundary = self.boundary.clone();
        Ok(t)
    }
}

/// Painted cell rectangle `[x0, x1) x [y0, y1)` of a motion raster.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PaintRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
    pub value: f64,
}

/// Sparse occupancy raster: a zero background with painted rectangles.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterMsg {
    pub width: u32,
    pub height: u32,
    pub rects: Vec<PaintRect>,
}

impl RasterMsg {
    pub fn to_grid(&self) -> Grid {
        let mut g = Grid::filled(self.width as usize, self.height as usize, 0.0);
        for r in &self.rects {
            g.paint(
                r.x0 as usize,
                r.y0 as usize,
                r.x1 as usize,
                r.y1 as usize,
                r.value as f32,
            );
        }
        g
    }
}

/// One camera frame of detector output.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameMsg {
    pub schema_version: u32,
    pub camera_id: CameraId,
    pub frame_index: u32,
    pub timestamp_ms: f64,
    pub detections: Vec<(BBox, f64, u32)>,
    pub raster: Option<RasterMsg>,
}

impl FrameMsg {
    pub fn detections(&self) -> Vec<Detection> {
        self.detections
            .iter()
            .map(|&(bbox, confidence, class_id)| Detection {
                camera_id: self.camera_id,
                frame_index: self.frame_index,
                timestamp_ms: self.timestamp_ms,
                bbox,
                confidence,
                class_id,
            })
            .collect()
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("list longer than u32::MAX"));
    }
    fn bbox(&mut self, b: &BBox) {
        self.f64(b.x);
        self.f64(b.y);
        self.f64(b.w);
        self.f64(b.h);
    }
    fn feature(&mut self, f: &FeatureVector) {
        self.len(f.dim());
        for &v in f.as_slice() {
            self.f64(v);
        }
    }
    fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.0);
        self.u32(crc);
        self.0
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() - self.pos < n {
            return Err(WireError::Truncated { at: self.pos });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn finite(&mut self) -> Result<f64, WireError> {
        let v = self.f64()?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(WireError::Invalid("non-finite real"))
        }
    }
    fn flag(&mut self) -> Result<bool, WireError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(WireError::Invalid("presence byte must be 0 or 1")),
        }
    }
    /// List length, rejected early if the remaining bytes cannot hold it.
    fn count(&mut self, min_item_bytes: usize) -> Result<usize, WireError> {
        let at = self.pos;
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item_bytes) > self.buf.len() - self.pos {
            return Err(WireError::Truncated { at });
        }
        Ok(n)
    }
    fn bbox(&mut self) -> Result<BBox, WireError> {
        let b = BBox::new(
            self.finite()?,
            self.finite()?,
            self.finite()?,
            self.finite()?,
        );
        if !b.is_valid() {
            return Err(WireError::Invalid("bounding box must have positive size"));
        }
        Ok(b)
    }
    fn confidence(&mut self) -> Result<f64, WireError> {
        let c = self.finite()?;
        if !(0.0..=1.0).contains(&c) {
            return Err(WireError::Invalid("confidence outside [0, 1]"));
        }
        Ok(c)
    }
    fn feature(&mut self) -> Result<FeatureVector, WireError> {
        let dim = self.count(8)?;
        if dim == 0 {
            return Err(WireError::Invalid("empty feature vector"));
        }
        let values = (0..dim)
            .map(|_| self.finite())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FeatureVector::new(values))
    }
    fn version(&mut self) -> Result<u32, WireError> {
        let v = self.u32()?;
        if v != SCHEMA_VERSION {
            return Err(WireError::UnsupportedVersion(v));
        }
        Ok(v)
    }
    /// Verify the trailing checksum and that nothing follows it.
    fn finish(mut self) -> Result<(), WireError> {
        let body_end = self.pos;
        let stored = self.u32()?;
        let actual = crc32fast::hash(&self.buf[..body_end]);
        if stored != actual {
            return Err(WireError::ChecksumMismatch { stored, actual });
        }
        if self.pos != self.buf.len() {
            return Err(WireError::TrailingGarbage(self.buf.len() - self.pos));
        }
        Ok(())
    }
}

pub fn encode_msg(m: &TrackletMsg) -> Vec<u8> {
    let mut w = Writer(Vec::with_capacity(
        64 + m.obs.len() * 70 + m.feature.dim() * 24,
    ));
    w.u32(m.schema_version);
    w.u32(m.camera_id);
    w.u32(m.track_id);
    w.len(m.obs.len());
    for o in &m.obs {
        w.u32(o.frame_index);
        w.f64(o.timestamp_ms);
        w.bbox(&o.bbox);
        w.f64(o.confidence);
        match o.gps {
            Some(g) => {
                w.u8(1);
                w.f64(g.lat);
                w.f64(g.lon);
            }
            None => w.u8(0),
        }
    }
    w.feature(&m.feature);
    match &m.boundary {
        Some(b) => {
            w.u8(1);
            w.feature(&b.start);
            w.feature(&b.end);
        }
        None => w.u8(0),
    }
    w.f64(m.emitted_at_ms);
    w.finish()
}

pub fn decode_msg(b: &[u8]) -> Result<TrackletMsg, WireError> {
    let mut r = Reader { buf: b, pos: 0 };
    let schema_version = r.version()?;
    let camera_id = r.u32()?;
    let track_id = r.u32()?;
    let n = r.count(OBS_MIN_BYTES)?;
    if n == 0 {
        return Err(WireError::Invalid("tracklet without observations"));
    }
    let mut obs = Vec::with_capacity(n);
    for _ in 0..n {
        let frame_index = r.u32()?;
        let timestamp_ms = r.finite()?;
        let bbox = r.bbox()?;
        let confidence = r.confidence()?;
        let gps = if r.flag()? {
            let g = GeoPoint::new(r.finite()?, r.finite()?);
            if !g.is_valid() {
                return Err(WireError::Invalid("gps coordinate out of range"));
            }
            Some(g)
        } else {
            None
        };
        if let Some(prev) = obs.last() {
            let prev: &Observation = prev;
            if frame_index <= prev.frame_index || timestamp_ms < prev.timestamp_ms {
                return Err(WireError::Invalid("observations out of order"));
            }
        }
        obs.push(Observation {
            frame_index,
            timestamp_ms,
            bbox,
            confidence,
            gps,
        });
    }
    let feature = r.feature()?;
    let boundary = if r.flag()? {
        let start = r.feature()?;
        let end = r.feature()?;
        if start.dim() != feature.dim() || end.dim() != feature.dim() {
            return Err(WireError::Invalid("boundary feature dimension mismatch"));
        }
        Some(BoundaryFeatures { start, end })
    } else {
        None
    };
    let emitted_at_ms = r.finite()?;
    r.finish()?;
    Ok(TrackletMsg {
        schema_version,
        camera_id,
        track_id,
        obs,
        feature,
        boundary,
        emitted_at_ms,
    })
}

pub fn encode_frame(m: &FrameMsg) -> Vec<u8> {
    let mut w = Writer(Vec::with_capacity(40 + m.detections.len() * DET_BYTES));
    w.u32(m.schema_version);
    w.u32(m.camera_id);
    w.u32(m.frame_index);
    w.f64(m.timestamp_ms);
    w.len(m.detections.len());
    for (b, c, cls) in &m.detections {
        w.bbox(b);
        w.f64(*c);
        w.u32(*cls);
    }
    match &m.raster {
        Some(r) => {
            w.u8(1);
            w.u32(r.width);
            w.u32(r.height);
            w.len(r.rects.len());
            for p in &r.rects {
                w.u32(p.x0);
                w.u32(p.y0);
                w.u32(p.x1);
                w.u32(p.y1);
                w.f64(p.value);
            }
        }
        None => w.u8(0),
    }
    w.finish()
}

pub fn decode_frame(b: &[u8]) -> Result<FrameMsg, WireError> {
    let mut r = Reader { buf: b, pos: 0 };
    let schema_version = r.version()?;
    let camera_id = r.u32()?;
    let frame_index = r.u32()?;
    let timestamp_ms = r.finite()?;
    let n = r.count(DET_BYTES)?;
    let mut detections = Vec::with_capacity(n);
    for _ in 0..n {
        let bbox = r.bbox()?;
        let conf = r.confidence()?;
        let class = r.u32()?;
        detections.push((bbox, conf, class));
    }
    let raster = if r.flag()? {
        let width = r.u32()?;
        let height = r.u32()?;
        if width == 0 || height == 0 || (width as u64) * (height as u64) > 1 << 26 {
            return Err(WireError::Invalid("raster dimensions out of range"));
        }
        let n = r.count(RECT_BYTES)?;
        let mut rects = Vec::with_capacity(n);
        for _ in 0..n {
            let rect = PaintRect {
                x0: r.u32()?,
                y0: r.u32()?,
                x1: r.u32()?,
                y1: r.u32()?,
                value: r.finite()?,
            };
            if rect.x0 > rect.x1 || rect.y0 > rect.y1 {
                return Err(WireError::Invalid("raster rectangle inverted"));
            }
            rects.push(rect);
        }
        Some(RasterMsg {
            width,
            height,
            rects,
        })
    } else {
        None
    };
    r.finish()?;
    Ok(FrameMsg {
        schema_version,
        camera_id,
        frame_index,
        timestamp_ms,
        detections,
        raster,
    })
}
