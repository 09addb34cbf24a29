use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::TypeDims;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_s: f64,
    pub end_s: f64,
    pub class_id: u32,
}

impl Segment {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.start_s + self.end_s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewRole {
    Ego,
    Exo,
}

/// Window-level features of one view: `features` row `i` is centered at
/// `centers[i]` seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowFeatures {
    pub centers: Vec<f64>,
    pub features: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViewRecord {
    pub view_id: u32,
    pub role: ViewRole,
    pub vision: WindowFeatures,
    /// One row per segment.
    pub depth: Option<Tensor>,
}

/// Annotations and features of one recorded take.
#[derive(Clone, Debug, PartialEq)]
pub struct TakeRecord {
    pub take_id: String,
    pub scenario: String,
    pub segments: Vec<Segment>,
    pub views: Vec<ViewRecord>,
    /// Narration embedding per segment, ego view only.
    pub text: Option<Tensor>,
    /// Detected-object embedding per segment, ego view only.
    pub objects: Option<Tensor>,
}

impl TakeRecord {
    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn ego_view(&self) -> Option<&ViewRecord> {
        self.views.iter().find(|v| v.role == ViewRole::Ego)
    }

    /// Exocentric views ordered by view id.
    pub fn exo_views(&self) -> Vec<&ViewRecord> {
        let mut exo: Vec<_> = self.views.iter().filter(|v| v.role == ViewRole::Exo).collect();
        exo.sort_by_key(|v| v.view_id);
        exo
    }

    fn fail(&self, field: impl Into<String>, message: impl Into<String>) -> Error {
        Error::ingestion(&self.take_id, field, message)
    }

    /// Checks segment ordering, view roles and feature widths.
    pub fn validate(&self, dims: &TypeDims, num_classes: usize) -> Result<()> {
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.start_s.is_finite() && s.end_s.is_finite()) || s.start_s > s.end_s {
                return Err(self.fail(format!("segments[{i}]"), "invalid time range"));
            }
            if s.class_id as usize >= num_classes {
                return Err(self.fail(
                    format!("segments[{i}].class_id"),
                    format!("{} >= {num_classes} classes", s.class_id),
                ));
            }
            if i > 0 && self.segments[i - 1].end_s > s.start_s {
                return Err(self.fail(format!("segments[{i}]"), "overlaps or precedes previous segment"));
            }
        }
        let egos = self.views.iter().filter(|v| v.role == ViewRole::Ego).count();
        if egos != 1 {
            return Err(self.fail("views", format!("expected exactly one ego view, found {egos}")));
        }
        let mut ids: Vec<u32> = self.views.iter().map(|v| v.view_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(self.fail("views", "duplicate view id"));
        }
        let n = self.segments.len();
        for v in &self.views {
            let w = &v.vision;
            if w.features.rows() != w.centers.len() {
                return Err(self.fail(
                    format!("views[{}].vision", v.view_id),
                    "window count differs from center count",
                ));
            }
            if w.features.cols() != dims.vision {
                return Err(self.fail(
                    format!("views[{}].vision", v.view_id),
                    format!("dim {} != {}", w.features.cols(), dims.vision),
                ));
            }
            if let Some(d) = &v.depth {
                if d.shape() != (n, dims.depth) {
                    return Err(self.fail(
                        format!("views[{}].depth", v.view_id),
                        format!("shape {:?} != ({n}, {})", d.shape(), dims.depth),
                    ));
                }
            }
        }
        for (name, t) in [("text", &self.text), ("objects", &self.objects)] {
            if let Some(t) = t {
                if t.shape() != (n, dims.text) {
                    return Err(self.fail(name, format!("shape {:?} != ({n}, {})", t.shape(), dims.text)));
                }
            }
        }
        Ok(())
    }
}

/// Mean of window features whose center lies in `[start, end)`. When no
/// window falls inside, the window nearest the segment midpoint is used
/// (earliest on ties).
pub fn pool_segment_features(windows: &WindowFeatures, start: f64, end: f64) -> Result<Vec<f64>> {
    let f = &windows.features;
    if windows.centers.is_empty() {
        return Err(Error::ingestion("<windows>", "centers", "take has no feature windows"));
    }
    let mut sum = vec![0.0; f.cols()];
    let mut count = 0usize;
    for (i, &c) in windows.centers.iter().enumerate() {
        if c >= start && c < end {
            for (s, v) in sum.iter_mut().zip(f.row(i)) {
                *s += v;
            }
            count += 1;
        }
    }
    if count > 0 {
        let n = count as f64;
        return Ok(sum.into_iter().map(|s| s / n).collect());
    }
    let mid = 0.5 * (start + end);
    let nearest = windows
        .centers
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, &c)| {
            let d = (c - mid).abs();
            if d < best.1 {
                (i, d)
            } else {
                best
            }
        })
        .0;
    Ok(f.row(nearest).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn windows(centers: &[f64], rows: &[[f64; 2]]) -> WindowFeatures {
        WindowFeatures {
            centers: centers.to_vec(),
            features: Tensor::from_rows(rows),
        }
    }

    #[test]
    fn mean_of_covering_windows() {
        let w = windows(&[0.5, 1.5, 2.5], &[[1.0, 1.0], [3.0, 3.0], [5.0, 5.0]]);
        assert_eq!(pool_segment_features(&w, 0.0, 2.0).unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn single_covering_window() {
        let w = windows(&[0.5, 1.5, 2.5], &[[1.0, 1.0], [3.0, 3.0], [5.0, 5.0]]);
        assert_eq!(pool_segment_features(&w, 1.0, 2.0).unwrap(), vec![3.0, 3.0]);
    }

    #[test]
    fn nearest_window_fallback() {
        let w = windows(&[0.5, 9.9], &[[1.0, 1.0], [7.0, -7.0]]);
        assert_eq!(pool_segment_features(&w, 10.0, 10.2).unwrap(), vec![7.0, -7.0]);
    }

    #[test]
    fn empty_windows_fail() {
        let w = WindowFeatures {
            centers: vec![],
            features: Tensor::zeros(0, 2),
        };
        assert!(matches!(
            pool_segment_features(&w, 0.0, 1.0),
            Err(Error::Ingestion { .. })
        ));
    }

    #[test]
    fn end_boundary_is_exclusive() {
        let w = windows(&[1.0, 2.0], &[[1.0, 0.0], [3.0, 0.0]]);
        assert_eq!(pool_segment_features(&w, 1.0, 2.0).unwrap(), vec![1.0, 0.0]);
    }
}
