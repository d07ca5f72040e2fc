//! Text formats.
//!
//! Detections: `frame,id,left,top,width,height,conf[,label]`, id -1 for raw
//! detections. Ten-column MOT detection rows (three trailing world
//! coordinates) are also accepted and their extra columns ignored.
//!
//! Tracks: `frame,track_id,left,top,width,height,1,provenance_flag`, sorted by
//! frame then track id. The flag is 0 (detector), 1 (predicted) or
//! 2 (interpolated); a 7-column row is a detector box.
//!
//! Histograms: `frame,det_index,b_1,...,b_B` with 1-based detection indices.
//!
//! Color models: one center per line, bins separated by spaces.

use std::fmt::Write as _;
use std::path::Path;

use crate::appearance::{ColorClassModel, ColorHistogram};
use crate::error::{Error, Result};
use crate::pipeline::HistogramMap;
use crate::types::{BBox, Detection, Frames, Provenance, TrackSet};

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| (n + 1, l.split(',').map(str::trim).collect()))
}

struct Row<'a> {
    source: &'a str,
    line: usize,
}

impl Row<'_> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::parse(self.source, self.line, reason)
    }

    fn int<T: std::str::FromStr>(&self, field: &str, what: &str) -> Result<T> {
        field
            .parse()
            .map_err(|_| self.err(format!("{what}: expected an integer, got {field:?}")))
    }

    fn real(&self, field: &str, what: &str) -> Result<f64> {
        let v: f64 = field
            .parse()
            .map_err(|_| self.err(format!("{what}: expected a number, got {field:?}")))?;
        if !v.is_finite() {
            return Err(self.err(format!("{what}: value is not finite")));
        }
        Ok(v)
    }

    fn frame(&self, field: &str) -> Result<u32> {
        let f: u32 = self.int(field, "frame")?;
        if f == 0 {
            return Err(self.err("frames are numbered from 1"));
        }
        Ok(f)
    }

    fn bbox(&self, f: &[&str]) -> Result<BBox> {
        let b = BBox::new(
            self.real(f[0], "left")?,
            self.real(f[1], "top")?,
            self.real(f[2], "width")?,
            self.real(f[3], "height")?,
        );
        if b.width <= 0.0 || b.height <= 0.0 {
            return Err(self.err("nonpositive box size"));
        }
        Ok(b)
    }
}

/// Parse a detection file into per-frame lists in file order.
pub fn parse_detections(text: &str, source: &str) -> Result<Frames> {
    let mut out = Frames::new();
    for (line, f) in rows(text) {
        let row = Row { source, line };
        if !matches!(f.len(), 7 | 8 | 10) {
            return Err(row.err(format!("expected 7, 8 or 10 columns, got {}", f.len())));
        }
        let frame = row.frame(f[0])?;
        let _id: i64 = row.int(f[1], "id")?;
        let bbox = row.bbox(&f[2..6])?;
        let conf = row.real(f[6], "confidence")?;
        let label = if f.len() == 8 {
            match row.int::<i64>(f[7], "label")? {
                -1 => None,
                l if l >= 1 && l <= u32::MAX as i64 => Some(l as u32),
                l => return Err(row.err(format!("label {l} must be -1 or at least 1"))),
            }
        } else {
            None
        };
        out.entry(frame).or_default().push(Detection {
            frame,
            bbox,
            conf,
            provenance: Provenance::Detector,
            label,
        });
    }
    Ok(out)
}

/// Detections in the 7-column format, or 8 columns when labeled.
pub fn write_detections(frames: &Frames) -> String {
    let mut s = String::new();
    for (f, ds) in frames {
        for d in ds {
            let b = &d.bbox;
            write!(s, "{f},-1,{},{},{},{},{}", b.left, b.top, b.width, b.height, d.conf).unwrap();
            if let Some(l) = d.label {
                write!(s, ",{l}").unwrap();
            }
            s.push('\n');
        }
    }
    s
}

/// Parse a track or ground-truth file.
pub fn parse_tracks(text: &str, source: &str) -> Result<TrackSet> {
    let mut out = TrackSet::new();
    let mut seen = std::collections::HashSet::new();
    for (line, f) in rows(text) {
        let row = Row { source, line };
        if !matches!(f.len(), 7 | 8) {
            return Err(row.err(format!("expected 7 or 8 columns, got {}", f.len())));
        }
        let frame = row.frame(f[0])?;
        let id: u64 = row.int(f[1], "track id")?;
        let bbox = row.bbox(&f[2..6])?;
        row.real(f[6], "confidence")?;
        let provenance = match f.get(7) {
            None => Provenance::Detector,
            Some(v) => {
                let flag: u8 = row.int(v, "provenance flag")?;
                Provenance::from_flag(flag).ok_or_else(|| row.err(format!("unknown provenance flag {flag}")))?
            }
        };
        if !seen.insert((id, frame)) {
            return Err(row.err(format!("track {id} has two boxes in frame {frame}")));
        }
        out.push(id, frame, bbox, provenance);
    }
    Ok(out)
}

pub fn write_tracks(tracks: &TrackSet) -> String {
    let mut s = String::new();
    for (f, boxes) in tracks.by_frame() {
        for (id, b) in boxes {
            let flag = tracks
                .get(id)
                .and_then(|pts| pts.iter().find(|p| p.frame == f))
                .map_or(0, |p| p.provenance.flag());
            writeln!(s, "{f},{id},{},{},{},{},1,{flag}", b.left, b.top, b.width, b.height).unwrap();
        }
    }
    s
}

pub fn parse_histograms(text: &str, source: &str) -> Result<HistogramMap> {
    let mut out = HistogramMap::new();
    let mut bins = None;
    for (line, f) in rows(text) {
        let row = Row { source, line };
        if f.len() < 3 {
            return Err(row.err("expected frame, detection index and at least one bin"));
        }
        let frame = row.frame(f[0])?;
        let idx: usize = row.int(f[1], "detection index")?;
        if idx == 0 {
            return Err(row.err("detection indices are numbered from 1"));
        }
        let values = f[2..]
            .iter()
            .map(|v| row.real(v, "bin"))
            .collect::<Result<Vec<f64>>>()?;
        if *bins.get_or_insert(values.len()) != values.len() {
            return Err(row.err("histograms differ in bin count"));
        }
        let h = ColorHistogram::new(values).map_err(|e| row.err(e.to_string()))?;
        if out.insert((frame, idx), h).is_some() {
            return Err(row.err(format!("second histogram for detection {idx} of frame {frame}")));
        }
    }
    Ok(out)
}

pub fn write_histograms(hists: &HistogramMap) -> String {
    let mut keys: Vec<_> = hists.keys().copied().collect();
    keys.sort_unstable();
    let mut s = String::new();
    for k in keys {
        write!(s, "{},{}", k.0, k.1).unwrap();
        for b in hists[&k].bins() {
            write!(s, ",{b}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn parse_color_model(text: &str, source: &str) -> Result<ColorClassModel> {
    let mut centers = Vec::new();
    for (n, l) in text.lines().enumerate() {
        if l.trim().is_empty() {
            continue;
        }
        let row = Row { source, line: n + 1 };
        let bins = l
            .split_whitespace()
            .map(|v| row.real(v, "bin"))
            .collect::<Result<Vec<f64>>>()?;
        centers.push(ColorHistogram::new(bins).map_err(|e| row.err(e.to_string()))?);
    }
    ColorClassModel::new(centers)
}

pub fn write_color_model(model: &ColorClassModel) -> String {
    let mut s = String::new();
    for c in model.centers() {
        let line: Vec<String> = c.bins().iter().map(f64::to_string).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}
