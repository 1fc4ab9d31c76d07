//! Line-delimited text form of `TrackletMsg`, for hand-written fixtures.
//!
//! One message per line, whitespace-separated, in the binary field order:
//!
//! ```text
//! <version> <camera_id> <track_id> <n_obs>
//!   { <frame> <ts_ms> <x> <y> <w> <h> <conf> (- | <lat> <lon>) } x n_obs
//!   <dim> <f_1> ... <f_dim>
//!   (- | <dim> <start_1> ... <start_dim> <dim> <end_1> ... <end_dim>)
//!   <emitted_at_ms>
//! ```
//!
//! Reals are written in scientific notation with 9 significant digits, so
//! the text form is not bit-exact. Lines that are empty or start with `#`
//! are skipped by `parse_lines`.

use std::fmt::Write;

use super::codec::{TrackletMsg, SCHEMA_VERSION};
use super::WireError;
use crate::feature::FeatureVector;
use crate::geometry::{BBox, GeoPoint};
use crate::types::{BoundaryFeatures, Observation};

fn real(out: &mut String, v: f64) {
    write!(out, " {v:.8e}").unwrap();
}

fn feature(out: &mut String, f: &FeatureVector) {
    write!(out, " {}", f.dim()).unwrap();
    for &v in f.as_slice() {
        real(out, v);
    }
}

pub fn format_msg(m: &TrackletMsg) -> String {
    let mut s = format!(
        "{} {} {} {}",
        m.schema_version,
        m.camera_id,
        m.track_id,
        m.obs.len()
    );
    for o in &m.obs {
        write!(s, " {}", o.frame_index).unwrap();
        for v in [
            o.timestamp_ms,
            o.bbox.x,
            o.bbox.y,
            o.bbox.w,
            o.bbox.h,
            o.confidence,
        ] {
            real(&mut s, v);
        }
        match o.gps {
            Some(g) => {
                real(&mut s, g.lat);
                real(&mut s, g.lon);
            }
            None => s.push_str(" -"),
        }
    }
    feature(&mut s, &m.feature);
    match &m.boundary {
        Some(b) => {
            feature(&mut s, &b.start);
            feature(&mut s, &b.end);
        }
        None => s.push_str(" -"),
    }
    real(&mut s, m.emitted_at_ms);
    s
}

struct Tokens<'a> {
    it: std::iter::Peekable<std::str::SplitWhitespace<'a>>,
}

type R<T> = Result<T, String>;

impl<'a> Tokens<'a> {
    fn next(&mut self) -> R<&'a str> {
        self.it
            .next()
            .ok_or_else(|| "unexpected end of line".to_string())
    }
    fn dash(&mut self) -> bool {
        if self.it.peek() == Some(&"-") {
            self.it.next();
            true
        } else {
            false
        }
    }
    fn u32(&mut self) -> R<u32> {
        let t = self.next()?;
        t.parse()
            .map_err(|_| format!("expected integer, got {t:?}"))
    }
    fn real(&mut self) -> R<f64> {
        let t = self.next()?;
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(format!("expected finite real, got {t:?}")),
        }
    }
    fn feature(&mut self) -> R<FeatureVector> {
        let dim = self.u32()?;
        if dim == 0 {
            return Err("empty feature vector".into());
        }
        Ok(FeatureVector::new(
            (0..dim).map(|_| self.real()).collect::<R<_>>()?,
        ))
    }
}

fn parse_inner(line: &str) -> R<TrackletMsg> {
    let mut t = Tokens {
        it: line.split_whitespace().peekable(),
    };
    let schema_version = t.u32()?;
    if schema_version != SCHEMA_VERSION {
        return Err(format!("unsupported version {schema_version}"));
    }
    let camera_id = t.u32()?;
    let track_id = t.u32()?;
    let n = t.u32()?;
    if n == 0 {
        return Err("tracklet without observations".into());
    }
    let mut obs = Vec::new();
    for _ in 0..n {
        let frame_index = t.u32()?;
        let timestamp_ms = t.real()?;
        let bbox = BBox::new(t.real()?, t.real()?, t.real()?, t.real()?);
        let confidence = t.real()?;
        let gps = if t.dash() {
            None
        } else {
            Some(GeoPoint::new(t.real()?, t.real()?))
        };
        obs.push(Observation {
            frame_index,
            timestamp_ms,
            bbox,
            confidence,
            gps,
        });
    }
    let feature = t.feature()?;
    let boundary = if t.dash() {
        None
    } else {
        Some(BoundaryFeatures {
            start: t.feature()?,
            end: t.feature()?,
        })
    };
    let emitted_at_ms = t.real()?;
    if let Some(extra) = t.it.next() {
        return Err(format!("trailing garbage starting at {extra:?}"));
    }
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

pub fn parse_msg(line: &str) -> Result<TrackletMsg, WireError> {
    parse_inner(line).map_err(|reason| WireError::Text { line: 1, reason })
}

/// Parse a fixture file, skipping blank and `#` lines.
pub fn parse_lines(text: &str) -> Result<Vec<TrackletMsg>, WireError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            parse_inner(l).map_err(|reason| WireError::Text {
                line: i + 1,
                reason,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_line_parses() {
        let text = "# cam 2, one tracklet\n1 2 7 2 10 0 1 2 30 20 0.9 - 11 66.7 2 2 30 20 0.8 52.5 13.4 2 0.6 0.8 - 1000\n";
        let msgs = parse_lines(text).unwrap();
        assert_eq!(msgs.len(), 1);
        let m = &msgs[0];
        assert_eq!((m.camera_id, m.track_id, m.obs.len()), (2, 7, 2));
        assert!(m.obs[0].gps.is_none());
        assert_eq!(m.obs[1].gps, Some(GeoPoint::new(52.5, 13.4)));
        assert_eq!(m.emitted_at_ms, 1000.0);
    }

    #[test]
    fn nine_significant_digits() {
        let m = parse_msg("1 0 0 1 0 0.1234567891234 0 0 1 1 1 - 1 1 - 0").unwrap();
        let s = format_msg(&m);
        assert!(s.contains(" 1.23456789e-1 "), "{s}");
        let back = parse_msg(&s).unwrap();
        assert!((back.obs[0].timestamp_ms - 0.123456789).abs() < 1e-15);
    }

    #[test]
    fn errors_name_the_line() {
        let err = parse_lines("\n1 0 0 1 0 0 0 0 1 1 1 - 1 1 - 0 extra\n").unwrap_err();
        match err {
            WireError::Text { line, reason } => {
                assert_eq!(line, 2);
                assert!(reason.contains("trailing"));
            }
            e => panic!("{e:?}"),
        }
        assert!(parse_msg("2 0 0").is_err());
        assert!(parse_msg("1 0 0 1").is_err());
    }
}
