//! Camera-link quality and real-time telemetry reports.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::server::Kde;

/// One row of the plot table: a 1-s bin and the mass each curve puts in it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeBin {
    pub start_s: f64,
    pub kde_mass: f64,
    pub gt_frac: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeReport {
    pub kde_mean_s: f64,
    pub gt_mean_s: f64,
    pub mean_abs_error_s: f64,
    pub tv_distance: f64,
    pub table: Vec<KdeBin>,
}

pub const KDE_BIN_S: f64 = 1.0;

/// Compare a fitted transition-time density with ground-truth samples.
///
/// Both curves are integrated over a shared grid of 1-s bins covering the
/// gt samples and the kernel support. KDE mass falling outside the grid
/// counts toward the distance.
pub fn kde_report(kde: &Kde, gt_taus: &[f64]) -> Result<KdeReport, EvalError> {
    if gt_taus.is_empty() {
        return Err(EvalError::EmptyTransitions);
    }
    if gt_taus.iter().any(|t| !t.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let (klo, khi) = kde.support();
    let glo = gt_taus.iter().copied().fold(f64::INFINITY, f64::min);
    let ghi = gt_taus.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = (klo.min(glo) / KDE_BIN_S).floor() * KDE_BIN_S;
    let hi = (khi.max(ghi) / KDE_BIN_S).floor() * KDE_BIN_S + KDE_BIN_S;
    let bins = ((hi - lo) / KDE_BIN_S).round() as usize;

    let mut counts = vec![0usize; bins];
    for &t in gt_taus {
        let b = (((t - lo) / KDE_BIN_S).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = gt_taus.len() as f64;
    let mut table = Vec::with_capacity(bins);
    let mut tv = 0.0;
    let mut kde_total = 0.0;
    for (b, &c) in counts.iter().enumerate() {
        let a = lo + b as f64 * KDE_BIN_S;
        let m = kde.mass(a, a + KDE_BIN_S);
        let g = c as f64 / n;
        tv += (m - g).abs();
        kde_total += m;
        table.push(KdeBin {
            start_s: a,
            kde_mass: m,
            gt_frac: g,
        });
    }
    tv += (1.0 - kde_total).max(0.0);
    let gt_mean = gt_taus.iter().sum::<f64>() / n;
    Ok(KdeReport {
        kde_mean_s: kde.mean(),
        gt_mean_s: gt_mean,
        mean_abs_error_s: (kde.mean() - gt_mean).abs(),
        tv_distance: 0.5 * tv,
        table,
    })
}

impl KdeReport {
    pub fn to_lines(&self) -> String {
        let mut out = format!(
            "# kde_mean_s {} gt_mean_s {} mean_abs_error_s {} tv {}\n# bin_start_s kde_mass gt_frac\n",
            self.kde_mean_s, self.gt_mean_s, self.mean_abs_error_s, self.tv_distance
        );
        for r in &self.table {
            out.push_str(&format!(
                "{} {:.6} {:.6}\n",
                r.start_s, r.kde_mass, r.gt_frac
            ));
        }
        out
    }
}

/// Per-frame stage times for one camera plus feature-queue telemetry.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyTrace {
    pub stages: Vec<String>,
    /// `frames[i][s]`: milliseconds spent in stage `s` on frame `i`.
    pub frames: Vec<Vec<f64>>,
    /// `(time_ms, queue length)` samples.
    pub queue: Vec<(f64, usize)>,
    pub queue_cap: usize,
    pub overflow: bool,
}

impl LatencyTrace {
    pub fn new(stages: &[&str], queue_cap: usize) -> Self {
        Self {
            stages: stages.iter().map(|s| s.to_string()).collect(),
            frames: Vec::new(),
            queue: Vec::new(),
            queue_cap,
            overflow: false,
        }
    }

    pub fn push_frame(&mut self, times: &[f64]) {
        debug_assert_eq!(times.len(), self.stages.len());
        self.frames.push(times.iter().map(|t| t.max(0.0)).collect());
    }

    pub fn sample_queue(&mut self, t_ms: f64, len: usize) {
        self.queue.push((t_ms, len));
        if len > self.queue_cap {
            self.overflow = true;
        }
    }

    /// Concatenate traces with the same stage layout.
    pub fn merge(&mut self, other: LatencyTrace) {
        if self.stages.is_empty() {
            self.stages = other.stages.clone();
            self.queue_cap = other.queue_cap;
        }
        self.frames.extend(other.frames);
        self.queue.extend(other.queue);
        self.overflow |= other.overflow;
    }

    pub fn to_lines(&self) -> String {
        let mut out = format!("# frame {} total\n", self.stages.join(" "));
        for (i, f) in self.frames.iter().enumerate() {
            let cols: Vec<String> = f.iter().map(|t| format!("{t:.4}")).collect();
            out.push_str(&format!(
                "{i} {} {:.4}\n",
                cols.join(" "),
                f.iter().sum::<f64>()
            ));
        }
        out.push_str(&format!(
            "# queue cap {} overflow {}\n",
            self.queue_cap, self.overflow
        ));
        for (t, n) in &self.queue {
            out.push_str(&format!("q {t} {n}\n"));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub name: String,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealtimeReport {
    pub frames: usize,
    pub stages: Vec<StageSummary>,
    pub total: StageSummary,
    pub budget_ms: f64,
    pub max_queue: usize,
    pub overflow: bool,
    pub realtime: bool,
}

/// Nearest-rank percentile of a non-empty slice.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}

fn summarize(name: &str, values: &[f64]) -> StageSummary {
    StageSummary {
        name: name.to_string(),
        p50_ms: percentile(values, 50.0),
        p95_ms: percentile(values, 95.0),
        max_ms: values.iter().copied().fold(0.0, f64::max),
    }
}

pub fn realtime_report(trace: &LatencyTrace, fps: f64) -> Result<RealtimeReport, EvalError> {
    if trace.frames.is_empty() {
        return Err(EvalError::EmptyTrace);
    }
    if !(fps > 0.0) {
        return Err(EvalError::Fps(fps));
    }
    let stages = trace
        .stages
        .iter()
        .enumerate()
        .map(|(s, name)| {
            let col: Vec<f64> = trace
                .frames
                .iter()
                .map(|f| f.get(s).copied().unwrap_or(0.0))
                .collect();
            summarize(name, &col)
        })
        .collect();
    let totals: Vec<f64> = trace.frames.iter().map(|f| f.iter().sum()).collect();
    let total = summarize("total", &totals);
    let budget_ms = 1000.0 / fps;
    let overflow = trace.overflow || trace.queue.iter().any(|&(_, n)| n > trace.queue_cap);
    Ok(RealtimeReport {
        frames: trace.frames.len(),
        realtime: total.p95_ms <= budget_ms && !overflow,
        stages,
        total,
        budget_ms,
        max_queue: trace.queue.iter().map(|&(_, n)| n).max().unwrap_or(0),
        overflow,
    })
}

impl RealtimeReport {
    pub fn to_lines(&self) -> String {
        let mut out = String::from("# stage p50_ms p95_ms max_ms\n");
        for s in self.stages.iter().chain(std::iter::once(&self.total)) {
            out.push_str(&format!(
                "{} {:.4} {:.4} {:.4}\n",
                s.name, s.p50_ms, s.p95_ms, s.max_ms
            ));
        }
        out.push_str(&format!(
            "# frames {} budget_ms {:.3} max_queue {} overflow {} realtime {}\n",
            self.frames, self.budget_ms, self.max_queue, self.overflow, self.realtime
        ));
        out
    }
}
