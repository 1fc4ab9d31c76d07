//! Artifact plumbing behind the command-line front end.
//!
//! Scenario directory layout written by [`cmd_simulate`]:
//!
//! ```text
//! <data_dir>/scenario.toml
//! <data_dir>/ground_truth.txt
//! <data_dir>/topology.toml
//! <data_dir>/calib/cam<k>.toml
//! <data_dir>/streams/cam<k>.bin
//! ```
//!
//! [`cmd_run`] writes `trajectories.txt`, `trace.json` and `summary.json`
//! into the output directory.

pub mod driver;
pub mod manifest;

use std::path::{Path, PathBuf};

use log::info;
use thiserror::Error;

pub use driver::{
    edge_tracklets, run_virtual, run_wallclock, DriverConfig, EdgeInput, ProviderFactory,
    RunOutput, FRAGMENT_ID_OFFSET,
};
pub use manifest::{ClockMode, ProviderKind, RunManifest, WorkerModel};

use crate::edge::{CalibrationFile, CameraModel, FeatureProvider};
use crate::eval::{
    add_score, idf1_score, kde_report, realtime_report, write_summary, IdScore, KdeReport,
    LatencyTrace, Summary,
};
use crate::server::{fit_link, write_table, LinkFile, Topology};
use crate::sim::{
    generate_world, read_ground_truth, render_detections, topology, write_ground_truth,
    ConstantFeatureProvider, GroundTruth, ScenarioConfig, SimFeatureProvider,
};
use crate::types::CameraId;
use crate::wire::{
    decode_frame, encode_frame, read_stream_file, ChannelConfig, FrameMsg, StreamWriter,
};

pub const SCENARIO_FILE: &str = "scenario.toml";
pub const GT_FILE: &str = "ground_truth.txt";
pub const TOPOLOGY_FILE: &str = "topology.toml";
pub const TRAJECTORY_FILE: &str = "trajectories.txt";
pub const TRACE_FILE: &str = "trace.json";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Error)]
pub enum RunError {
    /// Bad manifest, config value or missing input; exit code 2.
    #[error("config: {0}")]
    Config(String),
    /// Failure while executing; exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Runtime(_) => 1,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Runtime(format!("{}: {e}", path.display()))
}

pub fn stream_path(data_dir: &Path, cam: CameraId) -> PathBuf {
    data_dir.join("streams").join(format!("cam{cam}.bin"))
}

pub fn calib_path(data_dir: &Path, cam: CameraId) -> PathBuf {
    data_dir.join("calib").join(format!("cam{cam}.toml"))
}

fn require(path: &Path) -> Result<(), RunError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(RunError::Config(format!(
            "referenced file not found: {}",
            path.display()
        )))
    }
}

pub fn load_scenario_config(path: &Path) -> Result<ScenarioConfig, RunError> {
    require(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    ScenarioConfig::from_toml(&text)
        .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimulateReport {
    pub cameras: usize,
    pub frames_written: u64,
    pub gt_boxes: usize,
    pub transitions: usize,
}

/// Generate a scenario and write its streams, ground truth, calibration and topology.
pub fn cmd_simulate(m: &RunManifest, seed: u64) -> Result<SimulateReport, RunError> {
    let mut cfg = match &m.scenario {
        Some(p) => load_scenario_config(p)?,
        None => ScenarioConfig::default(),
    };
    cfg.seed = seed;
    cfg.validate()
        .map_err(|e| RunError::Config(e.to_string()))?;
    let (world, gt) = generate_world(&cfg).map_err(|e| RunError::Config(e.to_string()))?;
    let (streams, stats) = render_detections(&world);
    info!(
        "rendered {} true detections, {} missed, {} false positives, {} dropped frames",
        stats.true_detections, stats.missed, stats.false_positives, stats.dropped_frames
    );

    let dir = &m.data_dir;
    for sub in [dir.join("streams"), dir.join("calib")] {
        std::fs::create_dir_all(&sub).map_err(|e| io_err(&sub, e))?;
    }
    let p = dir.join(SCENARIO_FILE);
    std::fs::write(&p, cfg.to_toml()).map_err(|e| io_err(&p, e))?;
    let p = dir.join(GT_FILE);
    write_ground_truth(&p, &gt).map_err(|e| io_err(&p, e))?;
    let p = dir.join(TOPOLOGY_FILE);
    topology(&world).save(&p).map_err(|e| io_err(&p, e))?;
    let mut frames_written = 0;
    for (cam, frames) in world.cameras.iter().zip(&streams) {
        let p = calib_path(dir, cam.camera_id);
        CalibrationFile::save(cam, &p).map_err(|e| io_err(&p, e))?;
        let p = stream_path(dir, cam.camera_id);
        let mut w = StreamWriter::create(&p).map_err(|e| io_err(&p, e))?;
        for f in frames {
            w.write(&encode_frame(f)).map_err(|e| io_err(&p, e))?;
        }
        w.finish().map_err(|e| io_err(&p, e))?;
        frames_written += frames.len() as u64;
    }
    Ok(SimulateReport {
        cameras: world.cameras.len(),
        frames_written,
        gt_boxes: gt.boxes.len(),
        transitions: gt.transitions.len(),
    })
}

/// Everything a run needs from a scenario directory.
pub struct ScenarioData {
    pub cfg: ScenarioConfig,
    pub inputs: Vec<EdgeInput>,
    pub gt: Option<GroundTruth>,
}

pub fn read_stream(path: &Path) -> Result<Vec<FrameMsg>, RunError> {
    require(path)?;
    read_stream_file(path, decode_frame)
        .map_err(|e| RunError::Runtime(format!("{}: {e}", path.display())))
}

pub fn load_scenario_data(m: &RunManifest) -> Result<ScenarioData, RunError> {
    let cfg = load_scenario_config(&m.data_dir.join(SCENARIO_FILE))?;
    let calibs = m.calibration_paths(cfg.cameras.count);
    if calibs.len() != cfg.cameras.count {
        return Err(RunError::Config(format!(
            "{} calibration files for {} cameras",
            calibs.len(),
            cfg.cameras.count
        )));
    }
    let mut inputs = Vec::new();
    for p in &calibs {
        require(p)?;
        let camera: CameraModel =
            CalibrationFile::load(p).map_err(|e| RunError::Config(e.to_string()))?;
        let frames = read_stream(&stream_path(&m.data_dir, camera.camera_id))?;
        inputs.push(EdgeInput { camera, frames });
    }
    let gt_path = m.data_dir.join(GT_FILE);
    let gt = if gt_path.is_file() {
        Some(
            read_ground_truth(&gt_path)
                .map_err(|e| RunError::Runtime(format!("{}: {e}", gt_path.display())))?,
        )
    } else {
        None
    };
    Ok(ScenarioData { cfg, inputs, gt })
}

/// Per-camera feature providers for the chosen backend.
pub fn provider_factory(
    kind: ProviderKind,
    cfg: &ScenarioConfig,
    gt: Option<&GroundTruth>,
) -> Result<Box<ProviderFactory<'static>>, RunError> {
    match kind {
        ProviderKind::Constant => {
            let dim = cfg.features.dim;
            Ok(Box::new(move |_| {
                Box::new(ConstantFeatureProvider { dim }) as Box<dyn FeatureProvider + Send>
            }))
        }
        ProviderKind::Oracle => {
            let gt = gt.ok_or_else(|| {
                RunError::Config("oracle feature provider needs the ground-truth file".into())
            })?;
            let seed = cfg.seed;
            let fc = cfg.features.clone();
            // one lookup table per camera keeps providers independent across threads
            let gt = gt.clone();
            Ok(Box::new(move |cam| {
                let mine = GroundTruth {
                    boxes: gt
                        .boxes
                        .iter()
                        .filter(|b| b.camera == cam)
                        .cloned()
                        .collect(),
                    ..GroundTruth::default()
                };
                Box::new(SimFeatureProvider::new(seed, fc.clone(), &mine))
                    as Box<dyn FeatureProvider + Send>
            }))
        }
    }
}

/// Learn camera links from a training scenario and write the link file.
pub fn cmd_fit_clm(m: &RunManifest) -> Result<LinkFile, RunError> {
    let topo_path = m.topology_path();
    require(&topo_path)?;
    let topo = Topology::load(&topo_path)
        .map_err(|e| RunError::Config(format!("{}: {e}", topo_path.display())))?;
    let data = load_scenario_data(m)?;
    let providers = provider_factory(m.provider, &data.cfg, data.gt.as_ref())?;
    let links = fit_links(data.inputs, &topo, &*providers, m)?;
    links.save(&m.links).map_err(|e| io_err(&m.links, e))?;
    Ok(links)
}

pub fn fit_links(
    inputs: Vec<EdgeInput>,
    topo: &Topology,
    providers: &ProviderFactory<'_>,
    m: &RunManifest,
) -> Result<LinkFile, RunError> {
    let edge = m.edge_config();
    let mut per_cam = std::collections::BTreeMap::new();
    for input in inputs {
        let cam = input.camera.camera_id;
        let width = input.camera.image_width as f64;
        let mut p = providers(cam);
        let ts = edge_tracklets(input, p.as_mut(), &edge, None)?;
        info!("camera {cam}: {} training tracklets", ts.len());
        per_cam.insert(cam, (ts, width));
    }
    let mut outcomes = Vec::new();
    for pair in &topo.pair {
        let (Some((ti, wi)), Some((tj, wj))) = (per_cam.get(&pair.from), per_cam.get(&pair.to))
        else {
            return Err(RunError::Config(format!(
                "topology pair {}->{} names a camera without a stream",
                pair.from, pair.to
            )));
        };
        outcomes.push(fit_link(pair.from, pair.to, ti, tj, *wi, *wj, &m.link_fit));
    }
    Ok(LinkFile::from_outcomes(outcomes))
}

pub fn load_links(path: &Path) -> Result<LinkFile, RunError> {
    require(path)?;
    LinkFile::load(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub output: RunOutput,
    pub score: Option<IdScore>,
    pub summary: Summary,
}

/// Replay a scenario through edges, transport and server; write the outputs.
pub fn cmd_run(m: &RunManifest) -> Result<RunReport, RunError> {
    let links = load_links(&m.links)?;
    let data = load_scenario_data(m)?;
    let providers = provider_factory(m.provider, &data.cfg, data.gt.as_ref())?;
    let cfg = DriverConfig {
        fps: data.cfg.fps,
        edge: m.edge_config(),
        server: m.server_config(),
        channel: ChannelConfig {
            seed: m.seed.unwrap_or(m.channel.seed),
            ..m.channel.clone()
        },
        worker: m.worker,
        fragment_gap_ms: m.fragment_gap_ms,
        pace: m.pace,
    };
    let output = match m.mode {
        ClockMode::Virtual => run_virtual(data.inputs, links.link, &*providers, &cfg)?,
        ClockMode::Wallclock => run_wallclock(data.inputs, links.link, &*providers, &cfg)?,
    };

    let mut summary = Summary::new();
    let score = match &data.gt {
        Some(gt) if !gt.boxes.is_empty() => {
            let s = idf1_score(gt, &output.rows, m.eval_iou)
                .map_err(|e| RunError::Runtime(e.to_string()))?;
            add_score(&mut summary, &s);
            Some(s)
        }
        _ => None,
    };
    let st = output.server;
    for (k, v) in [
        ("tracklets_emitted", output.tracklets_emitted),
        ("tracklets_ingested", st.ingested),
        ("matches", st.matches),
        ("merges", st.merges),
        ("cycles", st.cycles),
        ("messages_dropped", output.channel.dropped),
    ] {
        summary.insert(k.into(), v as f64);
    }
    let ids: std::collections::BTreeSet<_> = output.rows.iter().map(|r| r.global_id).collect();
    summary.insert("global_ids".into(), ids.len() as f64);
    if let Ok(rt) = realtime_report(&output.trace, data.cfg.fps) {
        summary.insert("p95_frame_ms".into(), rt.total.p95_ms);
        summary.insert("max_queue".into(), rt.max_queue as f64);
        summary.insert("realtime".into(), if rt.realtime { 1.0 } else { 0.0 });
    }

    let out = &m.output_dir;
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let p = out.join(TRAJECTORY_FILE);
    write_table(&p, &output.rows).map_err(|e| io_err(&p, e))?;
    let p = out.join(TRACE_FILE);
    write_trace(&p, &output.trace)?;
    let p = out.join(SUMMARY_FILE);
    write_summary(&p, &summary).map_err(|e| io_err(&p, e))?;
    Ok(RunReport {
        output,
        score,
        summary,
    })
}

pub fn write_trace(path: &Path, trace: &LatencyTrace) -> Result<(), RunError> {
    let text = serde_json::to_string(trace).map_err(|e| io_err(path, e))?;
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_trace(path: &Path) -> Result<LatencyTrace, RunError> {
    require(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| RunError::Runtime(format!("{}: {e}", path.display())))
}

/// Score a trajectory table against a ground-truth file.
pub fn cmd_eval(gt_path: &Path, table_path: &Path, iou_thresh: f64) -> Result<IdScore, RunError> {
    require(gt_path)?;
    require(table_path)?;
    let gt = read_ground_truth(gt_path)
        .map_err(|e| RunError::Runtime(format!("{}: {e}", gt_path.display())))?;
    let rows = crate::server::read_table(table_path)
        .map_err(|e| RunError::Runtime(format!("{}: {e}", table_path.display())))?;
    idf1_score(&gt, &rows, iou_thresh).map_err(|e| RunError::Runtime(e.to_string()))
}

/// KDE quality of every fitted link against ground-truth transitions.
pub fn link_reports(
    links: &LinkFile,
    gt: &GroundTruth,
) -> Vec<(CameraId, CameraId, Option<KdeReport>)> {
    links
        .link
        .iter()
        .map(|l| {
            let taus = gt.transitions_between(l.cam_i, l.cam_j);
            (l.cam_i, l.cam_j, kde_report(&l.kde, &taus).ok())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::NoiseConfig;

    fn small_scenario(dir: &Path) -> PathBuf {
        let cfg = ScenarioConfig {
            duration_s: 60.0,
            num_vehicles: 2,
            noise: NoiseConfig::none(),
            cameras: crate::sim::CameraLayout {
                count: 2,
                segments_m: vec![120.0],
                ..Default::default()
            },
            ..ScenarioConfig::default()
        };
        let p = dir.join("scenario.in.toml");
        std::fs::write(&p, cfg.to_toml()).unwrap();
        p
    }

    fn manifest(dir: &Path) -> RunManifest {
        RunManifest {
            scenario: Some(small_scenario(dir)),
            data_dir: dir.join("data"),
            links: dir.join("links.toml"),
            output_dir: dir.join("out"),
            ..RunManifest::default()
        }
    }

    #[test]
    fn simulate_writes_layout_and_is_repeatable() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(dir.path());
        let r = cmd_simulate(&m, 3).unwrap();
        assert_eq!(r.cameras, 2);
        let read = |p: PathBuf| std::fs::read(p).unwrap();
        let first: Vec<Vec<u8>> = (0..2).map(|k| read(stream_path(&m.data_dir, k))).collect();
        let gt1 = read(m.data_dir.join(GT_FILE));
        cmd_simulate(&m, 3).unwrap();
        let second: Vec<Vec<u8>> = (0..2).map(|k| read(stream_path(&m.data_dir, k))).collect();
        assert_eq!(first, second);
        assert_eq!(gt1, read(m.data_dir.join(GT_FILE)));
        assert!(calib_path(&m.data_dir, 1).is_file());
        assert!(m.data_dir.join(TOPOLOGY_FILE).is_file());
    }

    #[test]
    fn run_without_links_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(dir.path());
        cmd_simulate(&m, 1).unwrap();
        let err = cmd_run(&m).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("links.toml"));
    }

    #[test]
    fn corrupt_stream_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(dir.path());
        cmd_simulate(&m, 1).unwrap();
        let p = stream_path(&m.data_dir, 0);
        let mut bytes = std::fs::read(&p).unwrap();
        // break the schema version of the second record
        let first_len = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        bytes[4 + first_len + 4] = 0x7f;
        std::fs::write(&p, bytes).unwrap();
        let err = load_scenario_data(&m).err().unwrap();
        assert_eq!(err.exit_code(), 1);
        assert!(
            err.to_string()
                .contains(&format!("offset {}", 4 + first_len)),
            "{err}"
        );
    }

    #[test]
    fn end_to_end_small_noiseless() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(dir.path());
        cmd_simulate(&m, 5).unwrap();
        let links = cmd_fit_clm(&m).unwrap();
        assert_eq!(links.link.len() + links.no_link.len(), 2);
        let r = cmd_run(&m).unwrap();
        for f in [TRAJECTORY_FILE, TRACE_FILE, SUMMARY_FILE] {
            assert!(m.output_dir.join(f).is_file(), "{f}");
        }
        let s = r.score.unwrap();
        let again = cmd_eval(
            &m.data_dir.join(GT_FILE),
            &m.output_dir.join(TRAJECTORY_FILE),
            0.5,
        )
        .unwrap();
        assert_eq!(s, again);
        let trace = read_trace(&m.output_dir.join(TRACE_FILE)).unwrap();
        assert_eq!(trace.frames.len(), r.output.trace.frames.len());
    }
}
