//! Two-stage IoU tracker in the ByteTrack style.
//!
//! Stage one associates high-confidence detections with every live track;
//! stage two lets low-confidence detections rescue the confirmed tracks that
//! stage one left unmatched. Association is greedy on descending IoU with a
//! fixed tie-break, so identical inputs always produce identical track ids.

use serde::{Deserialize, Serialize};

use super::kalman::{KalmanParams, KalmanTrack, TrackStatus};
use crate::geometry::{iou, BBox};
use crate::types::{CameraId, Detection, Observation, TrackId, Tracklet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SctConfig {
    pub track_high_thresh: f64,
    pub track_low_thresh: f64,
    pub new_track_thresh: f64,
    /// Minimum IoU accepted in stage one.
    pub match_iou_high: f64,
    /// Minimum IoU accepted in stage two.
    pub match_iou_low: f64,
    /// Frames without a match before a track is closed.
    pub max_age: u32,
    /// Consecutive hits needed to confirm a tentative track.
    pub min_hits: u32,
}

impl Default for SctConfig {
    fn default() -> Self {
        Self {
            track_high_thresh: 0.5,
            track_low_thresh: 0.1,
            new_track_thresh: 0.6,
            match_iou_high: 0.3,
            match_iou_low: 0.5,
            max_age: 30,
            min_hits: 2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ByteTracker {
    camera_id: CameraId,
    cfg: SctConfig,
    kalman: KalmanParams,
    tracks: Vec<KalmanTrack>,
    next_id: TrackId,
}

impl ByteTracker {
    pub fn new(camera_id: CameraId, cfg: SctConfig, kalman: KalmanParams) -> Self {
        Self {
            camera_id,
            cfg,
            kalman,
            tracks: Vec::new(),
            next_id: 1,
        }
    }

    pub fn tracks(&self) -> &[KalmanTrack] {
        &self.tracks
    }

    pub fn config(&self) -> &SctConfig {
        &self.cfg
    }

    /// Advance to `frame_index` with this frame's (already filtered) detections.
    /// Returns the tracklets of confirmed tracks that aged out.
    pub fn step(&mut self, dets: &[Detection], frame_index: u32) -> Vec<Tracklet> {
        let predicted: Vec<BBox> = self
            .tracks
            .iter_mut()
            .map(|t| {
                while t.frame_index < frame_index {
                    t.predict(&self.kalman);
                }
                t.bbox()
            })
            .collect();

        let high: Vec<usize> = (0..dets.len())
            .filter(|&i| dets[i].confidence >= self.cfg.track_high_thresh)
            .collect();
        let low: Vec<usize> = (0..dets.len())
            .filter(|&i| {
                dets[i].confidence >= self.cfg.track_low_thresh
                    && dets[i].confidence < self.cfg.track_high_thresh
            })
            .collect();

        let all_tracks: Vec<usize> = (0..self.tracks.len()).collect();
        let stage1 = greedy_iou(
            &all_tracks,
            &high,
            &predicted,
            dets,
            self.cfg.match_iou_high,
        );

        let mut track_matched = vec![false; self.tracks.len()];
        let mut det_matched = vec![false; dets.len()];
        for &(t, d) in &stage1 {
            track_matched[t] = true;
            det_matched[d] = true;
        }
        let remaining: Vec<usize> = (0..self.tracks.len())
            .filter(|&t| !track_matched[t] && self.tracks[t].status != TrackStatus::Tentative)
            .collect();
        let stage2 = greedy_iou(&remaining, &low, &predicted, dets, self.cfg.match_iou_low);
        for &(t, d) in &stage2 {
            track_matched[t] = true;
            det_matched[d] = true;
        }

        for &(t, d) in stage1.iter().chain(&stage2) {
            self.apply_match(t, &dets[d]);
        }

        // unmatched tentative tracks are dropped, confirmed ones become lost
        let mut keep = Vec::with_capacity(self.tracks.len());
        for (t, track) in std::mem::take(&mut self.tracks).into_iter().enumerate() {
            if track_matched[t] {
                keep.push(track);
            } else if track.status != TrackStatus::Tentative {
                let mut track = track;
                track.status = TrackStatus::Lost;
                keep.push(track);
            }
        }
        self.tracks = keep;

        for &d in &high {
            if !det_matched[d] && dets[d].confidence >= self.cfg.new_track_thresh {
                let id = self.next_id;
                self.next_id += 1;
                self.tracks.push(KalmanTrack::initiate(
                    &self.kalman,
                    id,
                    Observation::from_detection(&dets[d]),
                ));
            }
        }

        self.expire(frame_index)
    }

    /// Close tracks whose last match is more than `max_age` frames before `frame_index`.
    ///
    /// Safe to call on frames that skip detection entirely.
    pub fn expire(&mut self, frame_index: u32) -> Vec<Tracklet> {
        let max_age = self.cfg.max_age;
        let (closed, open): (Vec<_>, Vec<_>) =
            std::mem::take(&mut self.tracks).into_iter().partition(|t| {
                let last = t.history.last().map_or(t.frame_index, |o| o.frame_index);
                frame_index.saturating_sub(last) > max_age
            });
        self.tracks = open;
        self.emit(closed)
    }

    /// Close every track (end of stream).
    pub fn flush(&mut self) -> Vec<Tracklet> {
        let all = std::mem::take(&mut self.tracks);
        self.emit(all)
    }

    fn emit(&self, tracks: Vec<KalmanTrack>) -> Vec<Tracklet> {
        tracks
            .into_iter()
            .filter(|t| t.status != TrackStatus::Tentative)
            .filter_map(|t| Tracklet::new(self.camera_id, t.track_id, t.history).ok())
            .collect()
    }

    fn apply_match(&mut self, t: usize, det: &Detection) {
        let track = &mut self.tracks[t];
        if track.update(&self.kalman, &det.bbox).is_err() {
            // fall back to re-initializing the filter state on the observation
            let history = std::mem::take(&mut track.history);
            let (status, hits, id) = (track.status, track.hits, track.track_id);
            *track = KalmanTrack::initiate(&self.kalman, id, Observation::from_detection(det));
            track.history = history;
            track.history.push(Observation::from_detection(det));
            track.status = status;
            track.hits = hits;
        } else {
            track.history.push(Observation::from_detection(det));
        }
        track.hits += 1;
        match track.status {
            TrackStatus::Tentative if track.hits >= self.cfg.min_hits => {
                track.status = TrackStatus::Confirmed
            }
            TrackStatus::Lost => track.status = TrackStatus::Confirmed,
            _ => {}
        }
    }
}

/// Greedy assignment on descending IoU; ties prefer higher detection
/// confidence, then lower detection index, then lower track position.
fn greedy_iou(
    tracks: &[usize],
    det_idx: &[usize],
    predicted: &[BBox],
    dets: &[Detection],
    min_iou: f64,
) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for &t in tracks {
        for &d in det_idx {
            let v = iou(&predicted[t], &dets[d].bbox);
            if v >= min_iou && v > 0.0 {
                pairs.push((v, t, d));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(dets[b.2].confidence.total_cmp(&dets[a.2].confidence))
            .then(a.2.cmp(&b.2))
            .then(a.1.cmp(&b.1))
    });
    let mut used_t = vec![false; predicted.len()];
    let mut used_d = vec![false; dets.len()];
    let mut out = Vec::new();
    for (_, t, d) in pairs {
        if !used_t[t] && !used_d[d] {
            used_t[t] = true;
            used_d[d] = true;
            out.push((t, d));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(frame: u32, cx: f64, cy: f64, conf: f64) -> Detection {
        Detection {
            camera_id: 0,
            frame_index: frame,
            timestamp_ms: frame as f64 * 1000.0 / 15.0,
            bbox: BBox::from_center(cx, cy, 60.0, 30.0),
            confidence: conf,
            class_id: 0,
        }
    }

    fn tracker() -> ByteTracker {
        ByteTracker::new(0, SctConfig::default(), KalmanParams::default())
    }

    #[test]
    fn perfect_continuation_keeps_single_track() {
        let mut tr = tracker();
        for f in 0..10 {
            let closed = tr.step(&[det(f, 100.0 + 5.0 * f as f64, 50.0, 0.9)], f);
            assert!(closed.is_empty());
        }
        assert_eq!(tr.tracks().len(), 1);
        assert_eq!(tr.tracks()[0].track_id, 1);
        assert_eq!(tr.tracks()[0].status, TrackStatus::Confirmed);
        assert_eq!(tr.tracks()[0].history.len(), 10);
    }

    #[test]
    fn ages_out_after_max_age_plus_one_empty_frames() {
        let mut tr = tracker();
        tr.step(&[det(0, 100.0, 50.0, 0.9)], 0);
        tr.step(&[det(1, 100.0, 50.0, 0.9)], 1);
        let max_age = tr.config().max_age;
        for k in 1..=max_age {
            assert!(
                tr.step(&[], 1 + k).is_empty(),
                "closed too early at empty step {k}"
            );
        }
        let closed = tr.step(&[], 2 + max_age);
        assert_eq!(closed.len(), 1);
        assert_eq!(closed[0].len(), 2);
        assert!(closed[0].start_ms() <= closed[0].end_ms());
    }

    #[test]
    fn tentative_tracks_are_not_emitted() {
        let mut tr = tracker();
        tr.step(&[det(0, 100.0, 50.0, 0.9)], 0);
        tr.step(&[], 1);
        assert!(tr.tracks().is_empty());
        assert!(tr.flush().is_empty());
    }

    #[test]
    fn low_confidence_does_not_spawn() {
        let mut tr = tracker();
        tr.step(&[det(0, 100.0, 50.0, 0.55)], 0);
        assert!(tr.tracks().is_empty());
    }

    #[test]
    fn low_confidence_rescues_confirmed_track() {
        let mut tr = tracker();
        tr.step(&[det(0, 100.0, 50.0, 0.9)], 0);
        tr.step(&[det(1, 100.0, 50.0, 0.9)], 1);
        tr.step(&[det(2, 100.0, 50.0, 0.3)], 2);
        assert_eq!(tr.tracks()[0].history.len(), 3);
        assert_eq!(tr.tracks()[0].frames_since_update, 0);
    }

    #[test]
    fn crossing_targets_keep_ids() {
        // two targets moving towards each other on separate rows; boxes never overlap
        let mut tr = tracker();
        for f in 0..20u32 {
            let a = det(f, 100.0 + 10.0 * f as f64, 50.0, 0.9);
            let b = det(f, 300.0 - 10.0 * f as f64, 90.0, 0.8);
            // feed in alternating order so the assignment cannot rely on input order
            let dets = if f % 2 == 0 { vec![a, b] } else { vec![b, a] };
            tr.step(&dets, f);
        }
        let mut ids: Vec<(TrackId, f64)> = tr
            .tracks()
            .iter()
            .map(|t| (t.track_id, t.history[0].bbox.center().1))
            .collect();
        ids.sort_by_key(|p| p.0);
        assert_eq!(ids.len(), 2);
        for t in tr.tracks() {
            let y0 = t.history[0].bbox.center().1;
            assert!(
                t.history.iter().all(|o| o.bbox.center().1 == y0),
                "identity switch"
            );
        }
    }

    #[test]
    fn greedy_two_by_two_prefers_higher_iou() {
        let predicted = vec![
            BBox::new(0.0, 0.0, 10.0, 10.0),
            BBox::new(4.0, 0.0, 10.0, 10.0),
        ];
        let mut d0 = det(0, 0.0, 0.0, 0.9);
        d0.bbox = BBox::new(1.0, 0.0, 10.0, 10.0);
        let mut d1 = det(0, 0.0, 0.0, 0.9);
        d1.bbox = BBox::new(5.0, 0.0, 10.0, 10.0);
        // IoUs: t0-d0 .818, t0-d1 .333, t1-d0 .538, t1-d1 .818
        let m = greedy_iou(&[0, 1], &[0, 1], &predicted, &[d0, d1], 0.3);
        assert_eq!(m, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn identical_streams_are_deterministic() {
        let stream: Vec<Vec<Detection>> = (0..40u32)
            .map(|f| {
                (0..3)
                    .filter(|k| (f + k) % 7 != 0)
                    .map(|k| {
                        det(
                            f,
                            100.0 + 8.0 * f as f64,
                            60.0 + 80.0 * k as f64,
                            0.6 + 0.1 * k as f64,
                        )
                    })
                    .collect()
            })
            .collect();
        let run = || {
            let mut tr = tracker();
            let mut out = Vec::new();
            for (f, dets) in stream.iter().enumerate() {
                out.extend(tr.step(dets, f as u32));
            }
            out.extend(tr.flush());
            out
        };
        assert_eq!(run(), run());
    }
}
