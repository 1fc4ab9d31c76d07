//! `mcvt`: simulate scenarios, fit camera links, run the tracking pipeline
//! and score its output.
//!
//! Every flag overrides the matching manifest field; `--set section.key=value`
//! reaches any other tunable.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use mcvt::eval::{realtime_report, write_summary, Summary};
use mcvt::run::{self, ClockMode, ProviderKind, RunError, RunManifest};
use mcvt::server::LinkFile;
use mcvt::sim::read_ground_truth;

#[derive(Parser, Debug)]
#[command(
    name = "mcvt",
    version,
    about = "Multi-camera vehicle tracking pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a scenario: detection streams, calibration, topology, ground truth.
    Simulate {
        #[command(flatten)]
        opts: ManifestOpts,
        /// Scenario seed.
        #[arg(long)]
        seed: u64,
    },
    /// Fit camera links from the scenario streams and write the links file.
    FitClm {
        #[command(flatten)]
        opts: ManifestOpts,
    },
    /// Replay the scenario through edges, transport and server.
    Run {
        #[command(flatten)]
        opts: ManifestOpts,
        /// Transport seed; overrides `channel.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a trajectory table against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        /// Also write the scores as JSON.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Realtime report from a latency trace, or KDE reports for fitted links.
    Report {
        #[arg(long, requires = "fps")]
        trace: Option<PathBuf>,
        #[arg(long)]
        fps: Option<f64>,
        #[arg(long, requires = "gt")]
        links: Option<PathBuf>,
        #[arg(long)]
        gt: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Default)]
struct ManifestOpts {
    /// Run manifest (TOML); relative paths inside resolve against its directory.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    topology: Option<PathBuf>,
    /// One calibration file per camera, in camera order.
    #[arg(long, num_args = 1..)]
    calibration: Vec<PathBuf>,
    #[arg(long)]
    links: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    no_gate: bool,
    #[arg(long)]
    no_remerge: bool,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<ClockMode>,
    #[arg(long)]
    pace: Option<f64>,
    #[arg(long, value_parser = parse_provider)]
    provider: Option<ProviderKind>,
    #[arg(long)]
    fragment_gap_ms: Option<f64>,
    #[arg(long)]
    eval_iou: Option<f64>,
    /// Override any manifest key, e.g. `association.alpha_s=100`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn parse_mode(s: &str) -> Result<ClockMode, String> {
    match s {
        "virtual" => Ok(ClockMode::Virtual),
        "wallclock" => Ok(ClockMode::Wallclock),
        _ => Err(format!("unknown mode {s:?}, expected virtual or wallclock")),
    }
}

fn parse_provider(s: &str) -> Result<ProviderKind, String> {
    match s {
        "oracle" => Ok(ProviderKind::Oracle),
        "constant" => Ok(ProviderKind::Constant),
        _ => Err(format!(
            "unknown provider {s:?}, expected oracle or constant"
        )),
    }
}

/// Set a dotted key in a TOML table; the value is parsed as TOML, else taken as a string.
fn set_key(root: &mut toml::Table, assignment: &str) -> Result<(), RunError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| RunError::Config(format!("--set {assignment:?}: expected KEY=VALUE")))?;
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, sections) = parts.split_last().expect("split yields one part");
    let mut table = root;
    for s in sections {
        table = table
            .entry(s.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| RunError::Config(format!("--set {key}: {s} is not a section")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

impl ManifestOpts {
    fn manifest(&self) -> Result<RunManifest, RunError> {
        let mut m = match &self.manifest {
            Some(p) => RunManifest::load(p)?,
            None => RunManifest::default(),
        };
        let some = |p: &Option<PathBuf>| p.clone();
        if let Some(p) = some(&self.scenario) {
            m.scenario = Some(p);
        }
        if let Some(p) = some(&self.data_dir) {
            m.data_dir = p;
        }
        if let Some(p) = some(&self.topology) {
            m.topology = Some(p);
        }
        if !self.calibration.is_empty() {
            m.calibration = self.calibration.clone();
        }
        if let Some(p) = some(&self.links) {
            m.links = p;
        }
        if let Some(p) = some(&self.output_dir) {
            m.output_dir = p;
        }
        m.gate_enabled &= !self.no_gate;
        m.remerge_enabled &= !self.no_remerge;
        m.mode = self.mode.unwrap_or(m.mode);
        m.pace = self.pace.unwrap_or(m.pace);
        m.provider = self.provider.unwrap_or(m.provider);
        m.fragment_gap_ms = self.fragment_gap_ms.or(m.fragment_gap_ms);
        m.eval_iou = self.eval_iou.unwrap_or(m.eval_iou);
        if !self.set.is_empty() {
            let mut table =
                toml::Table::try_from(&m).map_err(|e| RunError::Config(e.to_string()))?;
            for a in &self.set {
                set_key(&mut table, a)?;
            }
            m = table
                .try_into()
                .map_err(|e| RunError::Config(format!("--set: {e}")))?;
        }
        m.validate()?;
        Ok(m)
    }
}

fn print_summary(s: &Summary) {
    for (k, v) in s {
        println!("{k} {v}");
    }
}

fn load_gt(path: &Path) -> Result<mcvt::sim::GroundTruth, RunError> {
    read_ground_truth(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
}

fn execute(cmd: Command) -> Result<(), RunError> {
    match cmd {
        Command::Simulate { opts, seed } => {
            let mut m = opts.manifest()?;
            m.seed = Some(seed);
            let r = run::cmd_simulate(&m, seed)?;
            println!(
                "wrote {} cameras, {} frames, {} ground-truth boxes, {} transitions to {}",
                r.cameras,
                r.frames_written,
                r.gt_boxes,
                r.transitions,
                m.data_dir.display()
            );
        }
        Command::FitClm { opts } => {
            let m = opts.manifest()?;
            let links = run::cmd_fit_clm(&m)?;
            println!(
                "{} links, {} pairs without link, written to {}",
                links.link.len(),
                links.no_link.len(),
                m.links.display()
            );
        }
        Command::Run { opts, seed } => {
            let mut m = opts.manifest()?;
            m.seed = seed.or(m.seed);
            let r = run::cmd_run(&m)?;
            info!("outputs in {}", m.output_dir.display());
            print_summary(&r.summary);
        }
        Command::Eval {
            gt,
            table,
            iou,
            summary,
        } => {
            if !(iou > 0.0 && iou <= 1.0) {
                return Err(RunError::Config(format!(
                    "--iou must lie in (0, 1], got {iou}"
                )));
            }
            let score = run::cmd_eval(&gt, &table, iou)?;
            let mut s = Summary::new();
            mcvt::eval::add_score(&mut s, &score);
            print_summary(&s);
            if let Some(p) = summary {
                write_summary(&p, &s)
                    .map_err(|e| RunError::Runtime(format!("{}: {e}", p.display())))?;
            }
        }
        Command::Report {
            trace,
            fps,
            links,
            gt,
        } => {
            if trace.is_none() && links.is_none() {
                return Err(RunError::Config(
                    "report needs --trace/--fps or --links/--gt".into(),
                ));
            }
            if let (Some(t), Some(fps)) = (trace, fps) {
                let tr = run::read_trace(&t)?;
                let rep = realtime_report(&tr, fps).map_err(|e| RunError::Config(e.to_string()))?;
                print!("{}", rep.to_lines());
            }
            if let (Some(l), Some(g)) = (links, gt) {
                let lf = LinkFile::load(&l)
                    .map_err(|e| RunError::Config(format!("{}: {e}", l.display())))?;
                let gt = load_gt(&g)?;
                for n in &lf.no_link {
                    println!("# link {}->{}: none ({})", n.cam_i, n.cam_j, n.reason);
                }
                for (i, j, rep) in run::link_reports(&lf, &gt) {
                    match rep {
                        Some(r) => print!("# link {i}->{j}\n{}", r.to_lines()),
                        None => println!("# link {i}->{j}: no ground-truth transitions"),
                    }
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
