//! Detection conditioning: confidence filtering and gap filling with
//! short-lived constant-velocity predictors.
//!
//! Every detector box not claimed by a predictor starts a new predictor. Each
//! frame, every predictor extrapolates its anchor and the predictions are
//! matched one-to-one to detector boxes by IoU. An unmatched prediction is
//! held as pending. Pending boxes are only written out when the predictor
//! matches again within its lifespan; otherwise they are dropped with it.

use crate::types::{BBox, Detection, Frames, Provenance};

/// Keep detections with `conf >= min_conf`, preserving order.
pub fn filter_confidence(dets: &[Detection], min_conf: f64) -> Vec<Detection> {
    dets.iter().filter(|d| d.conf >= min_conf).cloned().collect()
}

/// Predictions not overlapping any detection by `iou_min` or more.
pub fn redundancy_filter(predictions: &[Detection], detections: &[Detection], iou_min: f64) -> Vec<Detection> {
    predictions
        .iter()
        .filter(|p| !detections.iter().any(|d| p.bbox.iou(&d.bbox) >= iou_min))
        .cloned()
        .collect()
}

struct Predictor {
    anchor: Detection,
    vx: f64,
    vy: f64,
    pending: Vec<Detection>,
}

impl Predictor {
    fn spawn(anchor: Detection) -> Self {
        Predictor {
            anchor,
            vx: 0.0,
            vy: 0.0,
            pending: Vec::new(),
        }
    }

    fn predict(&self, frame: u32) -> Detection {
        let dt = (frame - self.anchor.frame) as f64;
        let (cx, cy) = self.anchor.bbox.center();
        let b = &self.anchor.bbox;
        Detection {
            frame,
            bbox: BBox::from_center(cx + self.vx * dt, cy + self.vy * dt, b.width, b.height),
            conf: self.anchor.conf,
            provenance: Provenance::Predicted,
            label: self.anchor.label,
        }
    }

    /// Commit pending boxes with sizes interpolated towards `hit`, then re-anchor on it.
    fn rematch(&mut self, hit: &Detection, out: &mut Vec<Detection>) {
        let span = (hit.frame - self.anchor.frame) as f64;
        let (a, b) = (self.anchor.bbox, hit.bbox);
        for mut p in self.pending.drain(..) {
            let s = (p.frame - self.anchor.frame) as f64 / span;
            let (cx, cy) = p.bbox.center();
            let w = a.width + s * (b.width - a.width);
            let h = a.height + s * (b.height - a.height);
            p.bbox = BBox::from_center(cx, cy, w, h);
            out.push(p);
        }
        let (ax, ay) = a.center();
        let (hx, hy) = b.center();
        self.vx = (hx - ax) / span;
        self.vy = (hy - ay) / span;
        self.anchor = hit.clone();
    }
}

/// Add predicted boxes across short detection gaps.
///
/// A predictor may make `lifespan` predictions without a match; the last of
/// them must match, so at most `lifespan - 1` boxes are added per gap.
/// Frames between the first and last frame of `frames` are visited even when
/// empty. Added boxes have provenance [`Provenance::Predicted`] and carry the
/// label and confidence of the predictor's anchor.
pub fn augment_detections(frames: &Frames, lifespan: usize, iou_min: f64) -> Frames {
    let mut out = frames.clone();
    let (Some(&first), Some(&last)) = (frames.keys().next(), frames.keys().next_back()) else {
        return out;
    };
    let mut active: Vec<Predictor> = Vec::new();
    let mut added: Vec<Detection> = Vec::new();
    let no_dets = Vec::new();
    for f in first..=last {
        let dets: Vec<&Detection> = frames
            .get(&f)
            .unwrap_or(&no_dets)
            .iter()
            .filter(|d| d.provenance == Provenance::Detector)
            .collect();
        let preds: Vec<Detection> = active.iter().map(|p| p.predict(f)).collect();

        let mut pairs = Vec::new();
        for (pi, p) in preds.iter().enumerate() {
            for (di, d) in dets.iter().enumerate() {
                let iou = p.bbox.iou(&d.bbox);
                if iou >= iou_min {
                    pairs.push((iou, pi, di));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut pred_hit = vec![None; preds.len()];
        let mut det_taken = vec![false; dets.len()];
        for (_, pi, di) in pairs {
            if pred_hit[pi].is_none() && !det_taken[di] {
                pred_hit[pi] = Some(di);
                det_taken[di] = true;
            }
        }

        let claimed: Vec<Detection> = dets
            .iter()
            .zip(&det_taken)
            .filter(|(_, &t)| t)
            .map(|(d, _)| (*d).clone())
            .collect();
        let mut next = Vec::with_capacity(active.len() + dets.len());
        for ((mut p, pred), hit) in active.into_iter().zip(preds).zip(pred_hit) {
            match hit {
                Some(di) => {
                    p.rematch(dets[di], &mut added);
                    next.push(p);
                }
                None => {
                    // a prediction covering a box another predictor claimed duplicates that predictor
                    if redundancy_filter(std::slice::from_ref(&pred), &claimed, iou_min).is_empty() {
                        continue;
                    }
                    p.pending.push(pred);
                    if p.pending.len() < lifespan {
                        next.push(p);
                    }
                }
            }
        }
        for (d, taken) in dets.iter().zip(&det_taken) {
            if !taken {
                next.push(Predictor::spawn((*d).clone()));
            }
        }
        active = next;
    }
    for d in added {
        out.entry(d.frame).or_default().push(d);
    }
    out
}
