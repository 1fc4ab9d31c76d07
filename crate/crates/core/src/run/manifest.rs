//! Run manifest: artifact paths, stage toggles and every tunable.
//!
//! Relative paths are resolved against the directory holding the manifest.
//! Top-level `gate_enabled` / `remerge_enabled` override the copies inside
//! the `[edge]` and `[server]` sections.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::edge::EdgeConfig;
use crate::server::{AssociationConfig, LinkFitConfig, RemergeConfig, ServerConfig};
use crate::wire::ChannelConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    /// Deterministic simulated clock stepped at the scenario frame rate.
    #[default]
    Virtual,
    /// One thread per edge pipeline and one for the server; real latencies.
    Wallclock,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    /// Simulator oracle embeddings looked up through the ground truth.
    #[default]
    Oracle,
    /// Same vector for every frame; stands in for a stubbed extractor.
    Constant,
}

/// Service-time model of the feature worker on the simulated clock.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkerModel {
    pub per_frame_ms: f64,
    pub per_task_ms: f64,
}

impl Default for WorkerModel {
    fn default() -> Self {
        Self {
            per_frame_ms: 8.0,
            per_task_ms: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunManifest {
    /// Scenario config used by `simulate`; built-in defaults when absent.
    pub scenario: Option<PathBuf>,
    /// Where `simulate` writes and the other commands read scenario artifacts.
    pub data_dir: PathBuf,
    /// Defaults to `<data_dir>/topology.toml`.
    pub topology: Option<PathBuf>,
    /// Defaults to `<data_dir>/calib/cam<k>.toml` for every camera.
    pub calibration: Vec<PathBuf>,
    pub links: PathBuf,
    pub output_dir: PathBuf,
    /// Scenario seed for `simulate`; transport seed override for `run`.
    pub seed: Option<u64>,
    pub gate_enabled: bool,
    pub remerge_enabled: bool,
    pub mode: ClockMode,
    /// Replay pacing in wall-clock mode: 1.0 is real time, 0 disables pacing.
    pub pace: f64,
    pub provider: ProviderKind,
    /// Split every edge tracklet once with this gap before feature extraction.
    pub fragment_gap_ms: Option<f64>,
    pub eval_iou: f64,
    pub edge: EdgeConfig,
    pub association: AssociationConfig,
    pub remerge: RemergeConfig,
    pub link_fit: LinkFitConfig,
    pub channel: ChannelConfig,
    pub worker: WorkerModel,
}

impl Default for RunManifest {
    fn default() -> Self {
        Self {
            scenario: None,
            data_dir: PathBuf::from("data"),
            topology: None,
            calibration: Vec::new(),
            links: PathBuf::from("links.toml"),
            output_dir: PathBuf::from("out"),
            seed: None,
            gate_enabled: true,
            remerge_enabled: true,
            mode: ClockMode::Virtual,
            pace: 0.0,
            provider: ProviderKind::Oracle,
            fragment_gap_ms: None,
            eval_iou: 0.5,
            edge: EdgeConfig::default(),
            association: AssociationConfig::default(),
            remerge: RemergeConfig::default(),
            link_fit: LinkFitConfig::default(),
            channel: ChannelConfig::default(),
            worker: WorkerModel::default(),
        }
    }
}

fn check(cond: bool, field: &str, msg: &str) -> Result<(), RunError> {
    if cond {
        Ok(())
    } else {
        Err(RunError::Config(format!("{field}: {msg}")))
    }
}

impl RunManifest {
    /// Parse, resolve relative paths and validate.
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            RunError::Config(format!("cannot read manifest {}: {e}", path.display()))
        })?;
        let m: RunManifest = toml::from_str(&text)
            .map_err(|e| RunError::Config(format!("manifest {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let m = m.resolved(base);
        m.validate()?;
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn resolved(mut self, base: &Path) -> Self {
        let r = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        self.scenario = self.scenario.as_deref().map(r);
        self.data_dir = r(&self.data_dir);
        self.topology = self.topology.as_deref().map(r);
        self.calibration = self.calibration.iter().map(|p| r(p)).collect();
        self.links = r(&self.links);
        self.output_dir = r(&self.output_dir);
        self
    }

    /// Value checks plus existence of every explicitly referenced input file.
    pub fn validate(&self) -> Result<(), RunError> {
        let e = &self.edge;
        check(
            (0.0..=1.0).contains(&e.conf_thresh),
            "edge.conf_thresh",
            "must lie in [0, 1]",
        )?;
        check(
            e.nms_iou > 0.0 && e.nms_iou <= 1.0,
            "edge.nms_iou",
            "must lie in (0, 1]",
        )?;
        check(
            e.gate.learning_rate > 0.0 && e.gate.learning_rate <= 1.0,
            "edge.gate.learning_rate",
            "must lie in (0, 1]",
        )?;
        let s = &e.scheduler;
        check(
            s.k_min >= 1 && s.k_min <= s.k_max,
            "edge.scheduler",
            "need 1 <= k_min <= k_max",
        )?;
        check(
            s.queue_threshold >= 1,
            "edge.scheduler.queue_threshold",
            "must be at least 1",
        )?;
        self.association
            .validate()
            .map_err(|m| RunError::Config(format!("association: {m}")))?;
        self.remerge
            .validate()
            .map_err(|m| RunError::Config(format!("remerge: {m}")))?;
        self.link_fit
            .validate()
            .map_err(|m| RunError::Config(format!("link_fit: {m}")))?;
        self.channel
            .validate()
            .map_err(|m| RunError::Config(format!("channel: {m}")))?;
        check(
            self.eval_iou > 0.0 && self.eval_iou <= 1.0,
            "eval_iou",
            "must lie in (0, 1]",
        )?;
        check(
            self.pace >= 0.0 && self.pace.is_finite(),
            "pace",
            "must be >= 0",
        )?;
        check(
            self.worker.per_frame_ms >= 0.0 && self.worker.per_task_ms >= 0.0,
            "worker",
            "service times must be >= 0",
        )?;
        if let Some(g) = self.fragment_gap_ms {
            check(
                g > 0.0 && g.is_finite(),
                "fragment_gap_ms",
                "must be positive",
            )?;
        }
        let inputs = self
            .scenario
            .iter()
            .chain(self.topology.iter())
            .chain(self.calibration.iter());
        for p in inputs {
            if !p.is_file() {
                return Err(RunError::Config(format!(
                    "referenced file not found: {}",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    pub fn edge_config(&self) -> EdgeConfig {
        EdgeConfig {
            gate_enabled: self.gate_enabled,
            ..self.edge.clone()
        }
    }

    pub fn server_config(&self) -> ServerConfig {
        ServerConfig {
            association: self.association.clone(),
            remerge: self.remerge.clone(),
            remerge_enabled: self.remerge_enabled,
        }
    }

    pub fn topology_path(&self) -> PathBuf {
        self.topology
            .clone()
            .unwrap_or_else(|| self.data_dir.join(super::TOPOLOGY_FILE))
    }

    pub fn calibration_paths(&self, cameras: usize) -> Vec<PathBuf> {
        if self.calibration.is_empty() {
            (0..cameras)
                .map(|k| super::calib_path(&self.data_dir, k as u32))
                .collect()
        } else {
            self.calibration.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_defaults() {
        let m: RunManifest = toml::from_str("").unwrap();
        assert_eq!(m, RunManifest::default());
        assert_eq!(m.edge.conf_thresh, 0.35);
        assert_eq!(m.edge.nms_iou, 0.40);
        assert_eq!(m.edge.gate.pixel_threshold, 300);
        assert_eq!(m.edge.scheduler.k_init, 5);
        assert_eq!(m.edge.scheduler.queue_threshold, 10);
        assert_eq!(m.remerge.t_th_ms, 4000.0);
        assert_eq!(m.remerge.d_th, 0.25);
        assert_eq!(m.remerge.f_th, 0.2);
        assert_eq!(m.link_fit.bandwidth_s, 5.0);
        assert_eq!(m.association.alpha_s, 200.0);
        assert_eq!(m.association.beta_s, 300.0);
        assert_eq!(m.association.delta, 1.0);
        assert_eq!(m.association.epsilon, 5.0);
        assert_eq!(m.association.match_threshold, 0.4);
        assert!(m.gate_enabled && m.remerge_enabled);
        assert_eq!(m.eval_iou, 0.5);
    }

    #[test]
    fn serialized_manifest_round_trips() {
        let m = RunManifest {
            seed: Some(7),
            fragment_gap_ms: Some(1000.0),
            remerge_enabled: false,
            ..RunManifest::default()
        };
        let back: RunManifest = toml::from_str(&m.to_toml()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let m: RunManifest =
            toml::from_str("[association]\nalpha_s = 50.0\n[edge]\nconf_thresh = 0.5\n").unwrap();
        assert_eq!(m.association.alpha_s, 50.0);
        assert_eq!(m.association.beta_s, 300.0);
        assert_eq!(m.edge.conf_thresh, 0.5);
        assert_eq!(m.edge.nms_iou, 0.40);
    }

    #[test]
    fn toggles_flow_into_stage_configs() {
        let m = RunManifest {
            gate_enabled: false,
            remerge_enabled: false,
            ..RunManifest::default()
        };
        assert!(!m.edge_config().gate_enabled);
        assert!(!m.server_config().remerge_enabled);
    }

    #[test]
    fn missing_calibration_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.toml");
        std::fs::write(&p, "calibration = [\"calib/nope.toml\"]\n").unwrap();
        let err = RunManifest::load(&p).unwrap_err();
        assert!(matches!(err, RunError::Config(_)));
        assert!(err.to_string().contains("nope.toml"), "{err}");
    }

    #[test]
    fn relative_paths_resolve_against_manifest_dir() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.toml");
        std::fs::write(&p, "data_dir = \"d\"\noutput_dir = \"/abs/out\"\n").unwrap();
        let m = RunManifest::load(&p).unwrap();
        assert_eq!(m.data_dir, dir.path().join("d"));
        assert_eq!(m.output_dir, PathBuf::from("/abs/out"));
    }

    #[test]
    fn bad_values_and_unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.toml");
        std::fs::write(&p, "[association]\nalpha_s = -1.0\n").unwrap();
        assert!(matches!(RunManifest::load(&p), Err(RunError::Config(_))));
        std::fs::write(&p, "bogus = 1\n").unwrap();
        assert!(matches!(RunManifest::load(&p), Err(RunError::Config(_))));
    }
}
