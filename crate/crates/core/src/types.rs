//! Boxes, detections and track sets shared by every stage.

use std::collections::BTreeMap;

/// Axis-aligned box in pixels, top-left corner plus size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl BBox {
    pub fn new(left: f64, top: f64, width: f64, height: f64) -> Self {
        BBox {
            left,
            top,
            width,
            height,
        }
    }

    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Self {
        BBox::new(cx - width / 2.0, cy - height / 2.0, width, height)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.left + self.width / 2.0, self.top + self.height / 2.0)
    }

    pub fn right(&self) -> f64 {
        self.left + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.top + self.height
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    /// Intersection over union; 0 when either box has no area.
    pub fn iou(&self, other: &BBox) -> f64 {
        let w = self.right().min(other.right()) - self.left.max(other.left);
        let h = self.bottom().min(other.bottom()) - self.top.max(other.top);
        if w <= 0.0 || h <= 0.0 {
            return 0.0;
        }
        let inter = w * h;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            (inter / union).clamp(0.0, 1.0)
        }
    }
}

/// Where a box came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Provenance {
    #[default]
    Detector,
    Predicted,
    Interpolated,
}

impl Provenance {
    /// Flag written in the track CSV.
    pub fn flag(self) -> u8 {
        match self {
            Provenance::Detector => 0,
            Provenance::Predicted => 1,
            Provenance::Interpolated => 2,
        }
    }

    pub fn from_flag(flag: u8) -> Option<Self> {
        match flag {
            0 => Some(Provenance::Detector),
            1 => Some(Provenance::Predicted),
            2 => Some(Provenance::Interpolated),
            _ => None,
        }
    }
}

/// One box in one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub frame: u32,
    pub bbox: BBox,
    pub conf: f64,
    pub provenance: Provenance,
    /// Color class in `1..=K`, when known.
    pub label: Option<u32>,
}

impl Detection {
    pub fn new(frame: u32, bbox: BBox, conf: f64) -> Self {
        Detection {
            frame,
            bbox,
            conf,
            provenance: Provenance::Detector,
            label: None,
        }
    }
}

/// Detections grouped by frame id, frames ascending.
pub type Frames = BTreeMap<u32, Vec<Detection>>;

#[derive(Clone, Debug, PartialEq)]
pub struct TrackPoint {
    pub frame: u32,
    pub bbox: BBox,
    pub provenance: Provenance,
}

/// Trajectories keyed by track id. Each trajectory is sorted by frame with
/// at most one point per frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrackSet {
    tracks: BTreeMap<u64, Vec<TrackPoint>>,
}

impl TrackSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a point, replacing any point the track already has in that frame.
    pub fn insert(&mut self, id: u64, point: TrackPoint) {
        let track = self.tracks.entry(id).or_default();
        match track.binary_search_by_key(&point.frame, |p| p.frame) {
            Ok(i) => track[i] = point,
            Err(i) => track.insert(i, point),
        }
    }

    pub fn push(&mut self, id: u64, frame: u32, bbox: BBox, provenance: Provenance) {
        self.insert(
            id,
            TrackPoint {
                frame,
                bbox,
                provenance,
            },
        );
    }

    pub fn get(&self, id: u64) -> Option<&[TrackPoint]> {
        self.tracks.get(&id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &[TrackPoint])> {
        self.tracks.iter().map(|(&id, pts)| (id, pts.as_slice()))
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.tracks.keys().copied()
    }

    pub fn remove(&mut self, id: u64) -> Option<Vec<TrackPoint>> {
        self.tracks.remove(&id)
    }

    pub fn retain(&mut self, mut keep: impl FnMut(u64, &[TrackPoint]) -> bool) {
        self.tracks.retain(|&id, pts| keep(id, pts));
    }

    /// Number of tracks.
    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    /// Total number of boxes over all tracks.
    pub fn num_boxes(&self) -> usize {
        self.tracks.values().map(Vec::len).sum()
    }

    /// First and last frame holding a box.
    pub fn frame_range(&self) -> Option<(u32, u32)> {
        let lo = self.tracks.values().filter_map(|t| t.first()).map(|p| p.frame).min()?;
        let hi = self.tracks.values().filter_map(|t| t.last()).map(|p| p.frame).max()?;
        Some((lo, hi))
    }

    /// Boxes per frame as `(track id, box)`, track ids ascending.
    pub fn by_frame(&self) -> BTreeMap<u32, Vec<(u64, BBox)>> {
        let mut out: BTreeMap<u32, Vec<(u64, BBox)>> = BTreeMap::new();
        for (&id, pts) in &self.tracks {
            for p in pts {
                out.entry(p.frame).or_default().push((id, p.bbox));
            }
        }
        out
    }

    /// Renumber tracks 1, 2, ... by first frame, then by left edge, then by old id.
    pub fn renumbered(&self) -> TrackSet {
        let mut order: Vec<(u32, f64, u64)> = self
            .tracks
            .iter()
            .filter_map(|(&id, pts)| pts.first().map(|p| (p.frame, p.bbox.left, id)))
            .collect();
        order.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut out = TrackSet::new();
        for (new_id, (_, _, old)) in order.into_iter().enumerate() {
            out.tracks.insert(new_id as u64 + 1, self.tracks[&old].clone());
        }
        out
    }
}
