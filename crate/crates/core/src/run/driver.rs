//! Drives edge pipelines, feature workers, transport and the server.
//!
//! The virtual driver steps every camera frame by frame on a simulated
//! clock; all randomness is seeded so a run is reproducible to the byte.
//! The wall-clock driver runs each pipeline, each feature worker and the
//! server on their own threads joined by channels.

use std::collections::BTreeMap;
use std::sync::mpsc;
use std::time::{Duration, Instant};

use log::{debug, info};

use super::manifest::WorkerModel;
use super::RunError;
use crate::edge::{
    extract_and_attach, CameraModel, EdgeConfig, EdgePipeline, FeatureProvider, FeatureQueue,
    FrameInput, StageTimes,
};
use crate::eval::LatencyTrace;
use crate::server::{CameraLink, Server, ServerConfig, ServerStats, TrajectoryRow};
use crate::sim::fragment_tracklet;
use crate::types::{frame_timestamp_ms, CameraId, Tracklet};
use crate::wire::{
    decode_msg, encode_msg, ChannelConfig, ChannelStats, FrameMsg, SimChannel, TrackletMsg,
};

/// Offset added to the track id of the second half of an injected split.
pub const FRAGMENT_ID_OFFSET: u32 = 1 << 24;

pub type ProviderFactory<'a> = dyn Fn(CameraId) -> Box<dyn FeatureProvider + Send> + Sync + 'a;

/// One camera's calibration and decoded detector stream.
#[derive(Clone, Debug)]
pub struct EdgeInput {
    pub camera: CameraModel,
    pub frames: Vec<FrameMsg>,
}

#[derive(Clone, Debug)]
pub struct DriverConfig {
    pub fps: f64,
    pub edge: EdgeConfig,
    pub server: ServerConfig,
    pub channel: ChannelConfig,
    pub worker: WorkerModel,
    pub fragment_gap_ms: Option<f64>,
    pub pace: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub rows: Vec<TrajectoryRow>,
    pub trace: LatencyTrace,
    pub server: ServerStats,
    pub channel: ChannelStats,
    pub tracklets_emitted: u64,
    pub end_ms: f64,
}

fn image_widths(inputs: &[EdgeInput]) -> BTreeMap<CameraId, f64> {
    inputs
        .iter()
        .map(|i| (i.camera.camera_id, i.camera.image_width as f64))
        .collect()
}

/// Apply the optional injected split to a closed tracklet.
pub fn split_closed(t: Tracklet, gap_ms: Option<f64>) -> Vec<Tracklet> {
    match gap_ms {
        Some(gap) => match fragment_tracklet(&t, gap, t.track_id + FRAGMENT_ID_OFFSET) {
            Some((a, b)) => vec![a, b],
            None => vec![t],
        },
        None => vec![t],
    }
}

fn check_stream(input: &EdgeInput) -> Result<(), RunError> {
    let cam = input.camera.camera_id;
    for w in input.frames.windows(2) {
        if w[1].frame_index <= w[0].frame_index {
            return Err(RunError::Runtime(format!(
                "camera {cam}: frame {} follows frame {}",
                w[1].frame_index, w[0].frame_index
            )));
        }
    }
    if let Some(f) = input.frames.iter().find(|f| f.camera_id != cam) {
        return Err(RunError::Runtime(format!(
            "stream for camera {cam} holds a frame of camera {}",
            f.camera_id
        )));
    }
    Ok(())
}

fn edge_step(
    pipe: &mut EdgePipeline,
    msg: &FrameMsg,
) -> Result<(Vec<Tracklet>, StageTimes), RunError> {
    let dets = msg.detections();
    let grid = msg.raster.as_ref().map(|r| r.to_grid());
    let out = pipe
        .process_frame(FrameInput {
            frame_index: msg.frame_index,
            timestamp_ms: msg.timestamp_ms,
            detections: &dets,
            grid: grid.as_ref(),
        })
        .map_err(|e| RunError::Runtime(format!("camera {}: {e}", msg.camera_id)))?;
    Ok((out.closed, out.times))
}

struct VirtualCam {
    pipe: EdgePipeline,
    frames: std::vec::IntoIter<FrameMsg>,
    pending: Option<FrameMsg>,
    queue: FeatureQueue,
    provider: Box<dyn FeatureProvider + Send>,
    busy_until: f64,
    channel: SimChannel<Vec<u8>>,
    emitted: u64,
}

impl VirtualCam {
    /// Run one extraction task starting at `start`; the message leaves when it finishes.
    fn work_one(&mut self, start: f64, model: &WorkerModel) -> Result<(), RunError> {
        let task = self
            .queue
            .dequeue()
            .map_err(|e| RunError::Runtime(e.to_string()))?;
        let cost = model.per_task_ms + model.per_frame_ms * task.frames.len() as f64;
        let done = start + cost;
        let t = extract_and_attach(task, self.provider.as_mut())
            .map_err(|e| RunError::Runtime(e.to_string()))?;
        let msg =
            TrackletMsg::from_tracklet(&t, done).map_err(|e| RunError::Runtime(e.to_string()))?;
        self.channel.send(encode_msg(&msg), done);
        self.busy_until = done;
        self.emitted += 1;
        Ok(())
    }
}

fn ingest_bytes(server: &mut Server, bytes: &[u8]) -> Result<(), RunError> {
    let msg = decode_msg(bytes).map_err(|e| RunError::Runtime(format!("server decode: {e}")))?;
    let t = msg
        .to_tracklet()
        .map_err(|e| RunError::Runtime(format!("server decode: {e}")))?;
    if !server.ingest(t) {
        debug!("server rejected {}/{}", msg.camera_id, msg.track_id);
    }
    Ok(())
}

/// Deterministic replay on the simulated clock.
pub fn run_virtual(
    inputs: Vec<EdgeInput>,
    links: Vec<CameraLink>,
    providers: &ProviderFactory<'_>,
    cfg: &DriverConfig,
) -> Result<RunOutput, RunError> {
    for i in &inputs {
        check_stream(i)?;
    }
    let widths = image_widths(&inputs);
    let last_frame = inputs
        .iter()
        .filter_map(|i| i.frames.last())
        .map(|f| f.frame_index)
        .max();
    let mut trace = LatencyTrace::new(&StageTimes::NAMES, cfg.edge.scheduler.queue_cap);
    let mut cams: Vec<VirtualCam> = inputs
        .into_iter()
        .map(|i| {
            let id = i.camera.camera_id;
            let mut frames = i.frames.into_iter();
            VirtualCam {
                pipe: EdgePipeline::new(i.camera, cfg.edge.clone()),
                pending: frames.next(),
                frames,
                queue: FeatureQueue::new(cfg.edge.scheduler.clone()),
                provider: providers(id),
                busy_until: 0.0,
                channel: SimChannel::new(ChannelConfig {
                    seed: cfg.channel.seed.wrapping_add(id as u64),
                    ..cfg.channel.clone()
                }),
                emitted: 0,
            }
        })
        .collect();
    let mut server = Server::new(cfg.server.clone(), links, widths);
    let alpha_ms = cfg.server.association.alpha_s * 1000.0;
    let mut next_cycle = alpha_ms;
    let mut now = 0.0;

    for f in 0..=last_frame.unwrap_or(0) {
        now = frame_timestamp_ms(f, cfg.fps);
        for cam in cams.iter_mut() {
            if cam.pending.as_ref().is_some_and(|m| m.frame_index == f) {
                let msg = cam.pending.take().expect("checked above");
                cam.pending = cam.frames.next();
                let (closed, times) = edge_step(&mut cam.pipe, &msg)?;
                trace.push_frame(&times.as_array());
                for t in closed {
                    split_closed(t, cfg.fragment_gap_ms)
                        .into_iter()
                        .for_each(|t| cam.queue.enqueue(t));
                }
            }
            trace.sample_queue(now, cam.queue.len());
            while !cam.queue.is_empty() && cam.busy_until <= now {
                cam.work_one(now, &cfg.worker)?;
            }
        }
        for cam in cams.iter_mut() {
            for (_, bytes) in cam.channel.poll(now) {
                ingest_bytes(&mut server, &bytes)?;
            }
        }
        while now >= next_cycle {
            server.cycle(now);
            next_cycle += alpha_ms;
        }
    }

    // end of streams: close open tracks and let the workers finish
    let t_end = now;
    for cam in cams.iter_mut() {
        for t in cam.pipe.finish() {
            split_closed(t, cfg.fragment_gap_ms)
                .into_iter()
                .for_each(|t| cam.queue.enqueue(t));
        }
        trace.sample_queue(t_end, cam.queue.len());
        while !cam.queue.is_empty() {
            let start = cam.busy_until.max(t_end);
            cam.work_one(start, &cfg.worker)?;
        }
    }
    loop {
        let next = cams
            .iter()
            .filter_map(|c| c.channel.next_delivery_ms())
            .min_by(f64::total_cmp);
        let Some(at) = next else { break };
        while at >= next_cycle {
            server.cycle(next_cycle);
            next_cycle += alpha_ms;
        }
        for cam in cams.iter_mut() {
            for (_, bytes) in cam.channel.poll(at) {
                ingest_bytes(&mut server, &bytes)?;
            }
        }
        now = now.max(at);
    }
    server.finish(now);

    let mut channel = ChannelStats::default();
    for c in &cams {
        let s = c.channel.stats();
        channel.sent += s.sent;
        channel.dropped += s.dropped;
        channel.delivered += s.delivered;
    }
    info!(
        "virtual run: {} tracklets emitted, {} ingested, {} matches, {} merges",
        cams.iter().map(|c| c.emitted).sum::<u64>(),
        server.stats().ingested,
        server.stats().matches,
        server.stats().merges
    );
    Ok(RunOutput {
        rows: server.store().rows(),
        trace,
        server: server.stats(),
        channel,
        tracklets_emitted: cams.iter().map(|c| c.emitted).sum(),
        end_ms: now,
    })
}

/// Threaded replay: per camera an edge thread and a feature-worker thread,
/// plus the server on the calling thread. Stage times are real.
pub fn run_wallclock(
    inputs: Vec<EdgeInput>,
    links: Vec<CameraLink>,
    providers: &ProviderFactory<'_>,
    cfg: &DriverConfig,
) -> Result<RunOutput, RunError> {
    for i in &inputs {
        check_stream(i)?;
    }
    let widths = image_widths(&inputs);
    let start = Instant::now();
    let (to_server, from_edges) = mpsc::channel::<Vec<u8>>();
    let mut server = Server::new(cfg.server.clone(), links, widths);
    let alpha_ms = cfg.server.association.alpha_s * 1000.0;

    std::thread::scope(|scope| -> Result<RunOutput, RunError> {
        let mut edge_handles = Vec::new();
        let mut worker_handles = Vec::new();
        for input in inputs {
            let (to_worker, from_edge) = mpsc::channel::<Tracklet>();
            let to_server = to_server.clone();
            let cam_id = input.camera.camera_id;
            let mut provider = providers(cam_id);
            let edge_cfg = cfg.edge.clone();
            let gap = cfg.fragment_gap_ms;
            let pace = cfg.pace;

            edge_handles.push(scope.spawn(move || -> Result<LatencyTrace, RunError> {
                let mut trace = LatencyTrace::new(&StageTimes::NAMES, edge_cfg.scheduler.queue_cap);
                let mut pipe = EdgePipeline::new(input.camera, edge_cfg);
                for msg in &input.frames {
                    if pace > 0.0 {
                        let due = Duration::from_secs_f64(msg.timestamp_ms / 1000.0 / pace);
                        if let Some(wait) = due.checked_sub(start.elapsed()) {
                            std::thread::sleep(wait);
                        }
                    }
                    let (closed, times) = edge_step(&mut pipe, msg)?;
                    trace.push_frame(&times.as_array());
                    for t in closed.into_iter().flat_map(|t| split_closed(t, gap)) {
                        // a closed worker means it already failed; its error surfaces on join
                        let _ = to_worker.send(t);
                    }
                }
                for t in pipe.finish().into_iter().flat_map(|t| split_closed(t, gap)) {
                    let _ = to_worker.send(t);
                }
                Ok(trace)
            }));

            let sched = cfg.edge.scheduler.clone();
            worker_handles.push(scope.spawn(
                move || -> Result<(Vec<(f64, usize)>, bool, u64), RunError> {
                    let mut queue = FeatureQueue::new(sched);
                    let mut samples = Vec::new();
                    let mut overflow = false;
                    let mut emitted = 0;
                    let mut open = true;
                    loop {
                        if queue.is_empty() {
                            if !open {
                                break;
                            }
                            match from_edge.recv() {
                                Ok(t) => queue.enqueue(t),
                                Err(_) => open = false,
                            }
                        }
                        while let Ok(t) = from_edge.try_recv() {
                            queue.enqueue(t);
                        }
                        samples.push((start.elapsed().as_secs_f64() * 1000.0, queue.len()));
                        overflow |= queue.overflowed();
                        if queue.is_empty() {
                            continue;
                        }
                        let task = queue
                            .dequeue()
                            .map_err(|e| RunError::Runtime(e.to_string()))?;
                        let t = extract_and_attach(task, provider.as_mut())
                            .map_err(|e| RunError::Runtime(e.to_string()))?;
                        let emitted_at = t.end_ms();
                        let msg = TrackletMsg::from_tracklet(&t, emitted_at)
                            .map_err(|e| RunError::Runtime(e.to_string()))?;
                        if to_server.send(encode_msg(&msg)).is_err() {
                            break;
                        }
                        emitted += 1;
                    }
                    Ok((samples, overflow, emitted))
                },
            ));
        }
        drop(to_server);

        // the server runs its cycles on stream time carried by the messages
        let mut next_cycle = alpha_ms;
        let mut stream_now: f64 = 0.0;
        let mut received = 0u64;
        for bytes in from_edges.iter() {
            let msg =
                decode_msg(&bytes).map_err(|e| RunError::Runtime(format!("server decode: {e}")))?;
            stream_now = stream_now.max(msg.emitted_at_ms);
            while stream_now >= next_cycle {
                server.cycle(next_cycle);
                next_cycle += alpha_ms;
            }
            ingest_bytes(&mut server, &bytes)?;
            received += 1;
        }

        let mut trace = LatencyTrace::new(&StageTimes::NAMES, cfg.edge.scheduler.queue_cap);
        for h in edge_handles {
            let t = h
                .join()
                .map_err(|_| RunError::Runtime("edge thread panicked".into()))??;
            trace.merge(t);
        }
        let mut emitted = 0;
        for h in worker_handles {
            let (samples, overflow, n) = h
                .join()
                .map_err(|_| RunError::Runtime("feature worker panicked".into()))??;
            for (t, len) in samples {
                trace.sample_queue(t, len);
            }
            trace.overflow |= overflow;
            emitted += n;
        }
        server.finish(stream_now);
        Ok(RunOutput {
            rows: server.store().rows(),
            trace,
            server: server.stats(),
            channel: ChannelStats {
                sent: emitted,
                dropped: 0,
                delivered: received,
            },
            tracklets_emitted: emitted,
            end_ms: stream_now,
        })
    })
}

/// Edge processing and feature extraction of one camera without transport.
pub fn edge_tracklets(
    input: EdgeInput,
    provider: &mut dyn FeatureProvider,
    edge: &EdgeConfig,
    fragment_gap_ms: Option<f64>,
) -> Result<Vec<Tracklet>, RunError> {
    check_stream(&input)?;
    let mut pipe = EdgePipeline::new(input.camera, edge.clone());
    let mut queue = FeatureQueue::new(edge.scheduler.clone());
    let mut out = Vec::new();
    for msg in &input.frames {
        let (closed, _) = edge_step(&mut pipe, msg)?;
        closed
            .into_iter()
            .flat_map(|t| split_closed(t, fragment_gap_ms))
            .for_each(|t| queue.enqueue(t));
        if !queue.is_empty() {
            let task = queue
                .dequeue()
                .map_err(|e| RunError::Runtime(e.to_string()))?;
            out.push(
                extract_and_attach(task, provider).map_err(|e| RunError::Runtime(e.to_string()))?,
            );
        }
    }
    pipe.finish()
        .into_iter()
        .flat_map(|t| split_closed(t, fragment_gap_ms))
        .for_each(|t| queue.enqueue(t));
    while !queue.is_empty() {
        let task = queue
            .dequeue()
            .map_err(|e| RunError::Runtime(e.to_string()))?;
        out.push(extract_and_attach(task, provider).map_err(|e| RunError::Runtime(e.to_string()))?);
    }
    Ok(out)
}
