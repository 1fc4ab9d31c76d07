//! Ground-truth text file.
//!
//! One record per line, whitespace-separated, `#` starts a comment line:
//!
//! ```text
//! box <vehicle> <camera> <frame> <x> <y> <w> <h> <east_m> <north_m>
//! interval <vehicle> <camera> <t_in_ms> <t_out_ms>
//! transition <vehicle> <from_camera> <to_camera> <tau_s>
//! ```
//!
//! Reals use the shortest representation that parses back to the same value.

use std::fmt::Write as _;
use std::path::Path;

use super::world::{GroundTruth, GtBox, GtInterval, GtTransition};
use super::SimError;
use crate::geometry::BBox;

pub fn format_ground_truth(gt: &GroundTruth) -> String {
    let mut s = String::from("# mcvt ground truth\n");
    for b in &gt.boxes {
        writeln!(
            s,
            "box {} {} {} {} {} {} {} {} {}",
            b.vehicle, b.camera, b.frame, b.bbox.x, b.bbox.y, b.bbox.w, b.bbox.h, b.east, b.north
        )
        .unwrap();
    }
    for i in &gt.intervals {
        writeln!(
            s,
            "interval {} {} {} {}",
            i.vehicle, i.camera, i.t_in_ms, i.t_out_ms
        )
        .unwrap();
    }
    for t in &gt.transitions {
        writeln!(
            s,
            "transition {} {} {} {}",
            t.vehicle, t.from, t.to, t.tau_s
        )
        .unwrap();
    }
    s
}

pub fn parse_ground_truth(text: &str) -> Result<GroundTruth, SimError> {
    let mut gt = GroundTruth::default();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |m: String| SimError::GroundTruth {
            line: n + 1,
            reason: m,
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        let int = |i: usize| {
            f[i].parse::<u32>()
                .map_err(|_| err(format!("bad integer {:?}", f[i])))
        };
        let real = |i: usize| {
            f[i].parse::<f64>()
                .map_err(|_| err(format!("bad real {:?}", f[i])))
        };
        let arity = |k: usize| {
            if f.len() == k {
                Ok(())
            } else {
                Err(err(format!(
                    "{} record needs {} fields, found {}",
                    f[0],
                    k - 1,
                    f.len() - 1
                )))
            }
        };
        match f[0] {
            "box" => {
                arity(10)?;
                gt.boxes.push(GtBox {
                    vehicle: int(1)?,
                    camera: int(2)?,
                    frame: int(3)?,
                    bbox: BBox::new(real(4)?, real(5)?, real(6)?, real(7)?),
                    east: real(8)?,
                    north: real(9)?,
                });
            }
            "interval" => {
                arity(5)?;
                gt.intervals.push(GtInterval {
                    vehicle: int(1)?,
                    camera: int(2)?,
                    t_in_ms: real(3)?,
                    t_out_ms: real(4)?,
                });
            }
            "transition" => {
                arity(5)?;
                gt.transitions.push(GtTransition {
                    vehicle: int(1)?,
                    from: int(2)?,
                    to: int(3)?,
                    tau_s: real(4)?,
                });
            }
            other => return Err(err(format!("unknown record {other:?}"))),
        }
    }
    Ok(gt)
}

pub fn write_ground_truth(path: &Path, gt: &GroundTruth) -> std::io::Result<()> {
    std::fs::write(path, format_ground_truth(gt))
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth, SimError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    parse_ground_truth(&text)
}
