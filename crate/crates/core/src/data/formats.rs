use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::binio::{Reader, Writer};
use crate::builder::{Segment, TakeRecord, ViewRecord, ViewRole, WindowFeatures};
use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, TypeDims};
use crate::tensor::Tensor;

pub const FEATURE_MAGIC: &[u8; 4] = b"MGFT";
pub const FEATURE_VERSION: u32 = 1;
pub const ANNOTATION_FILE: &str = "annotation.json";

/// Writes through a temporary sibling and renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub view_id: u32,
    pub role: ViewRole,
}

/// The JSON annotation of one take.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationDoc {
    pub take_id: String,
    pub scenario: String,
    pub segments: Vec<Segment>,
    pub views: Vec<ViewEntry>,
}

impl AnnotationDoc {
    pub fn of(take: &TakeRecord) -> Self {
        AnnotationDoc {
            take_id: take.take_id.clone(),
            scenario: take.scenario.clone(),
            segments: take.segments.clone(),
            views: take
                .views
                .iter()
                .map(|v| ViewEntry {
                    view_id: v.view_id,
                    role: v.role,
                })
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::ingestion(path, "file", e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| Error::ingestion(path, "schema", e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureModality {
    Vision,
    Depth,
    Text,
    Objects,
}

impl FeatureModality {
    pub const ALL: [FeatureModality; 4] = [Self::Vision, Self::Depth, Self::Text, Self::Objects];

    fn tag(self) -> u32 {
        self as u32
    }

    fn from_tag(t: u32) -> Option<Self> {
        Self::ALL.get(t as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Vision => "vision",
            Self::Depth => "depth",
            Self::Text => "text",
            Self::Objects => "objects",
        }
    }

    fn dim(self, dims: &TypeDims) -> usize {
        match self {
            Self::Vision => dims.vision,
            Self::Depth => dims.depth,
            Self::Text | Self::Objects => dims.text,
        }
    }
}

/// One feature file: rows of one modality for one view of a take. Values
/// are stored as f32.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBlock {
    pub take_id: String,
    pub view_id: u32,
    pub modality: FeatureModality,
    /// Window centers in seconds, present for window-level features.
    pub centers: Option<Vec<f64>>,
    pub features: Tensor,
}

impl FeatureBlock {
    /// `MGFT` layout: magic, version, take id, view id, modality tag, dim,
    /// count, center flag, optional centers (f64), then count × dim f32
    /// values; CRC-32 trailer.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(FEATURE_MAGIC, FEATURE_VERSION);
        w.str(&self.take_id);
        w.u32(self.view_id);
        w.u32(self.modality.tag());
        w.u32(self.features.cols() as u32);
        w.u32(self.features.rows() as u32);
        w.u32(u32::from(self.centers.is_some()));
        if let Some(c) = &self.centers {
            w.f64s(c);
        }
        w.f32s(self.features.data());
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        check_feature_length(bytes)?;
        let mut r = Reader::open(bytes, FEATURE_MAGIC, FEATURE_VERSION)?;
        let take_id = r.str()?;
        let view_id = r.u32()?;
        let tag = r.u32()?;
        let modality =
            FeatureModality::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown modality tag {tag}")))?;
        let dim = r.u32()? as usize;
        let count = r.u32()? as usize;
        let centers = match r.u32()? {
            0 => None,
            1 => Some(r.f64s(count)?),
            f => return Err(Error::Format(format!("bad center flag {f}"))),
        };
        let features = Tensor::from_vec(count, dim, r.f32s(count * dim)?)?;
        r.finish()?;
        Ok(FeatureBlock {
            take_id,
            view_id,
            modality,
            centers,
            features,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::ingestion(path, "file", e.to_string()))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::ingestion(path, "bytes", m),
            other => other,
        })
    }

    pub fn file_name(&self) -> String {
        match self.modality {
            FeatureModality::Vision | FeatureModality::Depth => {
                format!("view{}.{}.mgft", self.view_id, self.modality.name())
            }
            _ => format!("{}.mgft", self.modality.name()),
        }
    }
}

/// Compares the file length with the length implied by its header.
fn check_feature_length(bytes: &[u8]) -> Result<()> {
    let u32_at = |pos: usize| -> Option<u32> {
        bytes.get(pos..pos + 4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    };
    let short = || Error::Format(format!("truncated feature header ({} bytes)", bytes.len()));
    let id_len = u32_at(8).ok_or_else(short)? as usize;
    let h = 12 + id_len;
    let (dim, count, flag) = match (u32_at(h + 8), u32_at(h + 12), u32_at(h + 16)) {
        (Some(d), Some(c), Some(f)) => (d as u64, c as u64, f as u64),
        _ => return Err(short()),
    };
    let expected = h as u64 + 20 + flag.min(1) * 8 * count + 4 * count * dim + 4;
    if bytes.len() as u64 != expected {
        return Err(Error::Format(format!(
            "byte length {} does not match header ({} expected)",
            bytes.len(),
            expected
        )));
    }
    Ok(())
}

/// Feature blocks of a take, in a stable order.
pub fn take_blocks(take: &TakeRecord) -> Vec<FeatureBlock> {
    let mut out = Vec::new();
    let mut views: Vec<&ViewRecord> = take.views.iter().collect();
    views.sort_by_key(|v| v.view_id);
    for v in &views {
        out.push(FeatureBlock {
            take_id: take.take_id.clone(),
            view_id: v.view_id,
            modality: FeatureModality::Vision,
            centers: Some(v.vision.centers.clone()),
            features: v.vision.features.clone(),
        });
        if let Some(d) = &v.depth {
            out.push(FeatureBlock {
                take_id: take.take_id.clone(),
                view_id: v.view_id,
                modality: FeatureModality::Depth,
                centers: None,
                features: d.clone(),
            });
        }
    }
    let ego = take.ego_view().map_or(0, |v| v.view_id);
    for (m, t) in [(FeatureModality::Text, &take.text), (FeatureModality::Objects, &take.objects)] {
        if let Some(t) = t {
            out.push(FeatureBlock {
                take_id: take.take_id.clone(),
                view_id: ego,
                modality: m,
                centers: None,
                features: t.clone(),
            });
        }
    }
    out
}

/// Writes `<dir>/<take id>/annotation.json` and one feature file per
/// block. Returns the annotation path and the feature paths.
pub fn save_take(dir: &Path, take: &TakeRecord) -> Result<(PathBuf, Vec<PathBuf>)> {
    let root = dir.join(&take.take_id);
    let ann = root.join(ANNOTATION_FILE);
    let json = serde_json::to_string_pretty(&AnnotationDoc::of(take))?;
    write_atomic(&ann, json.as_bytes())?;
    let mut paths = Vec::new();
    for b in take_blocks(take) {
        let p = root.join(b.file_name());
        write_atomic(&p, &b.to_bytes())?;
        paths.push(p);
    }
    Ok((ann, paths))
}

/// Assembles a take from its annotation and feature files and validates it
/// against `dims` and `num_classes`.
pub fn load_take(annotation: &Path, features: &[PathBuf], dims: &TypeDims, num_classes: usize) -> Result<TakeRecord> {
    let doc = AnnotationDoc::load(annotation)?;
    let mut views: Vec<ViewRecord> = Vec::new();
    let mut depth = Vec::new();
    let (mut text, mut objects) = (None, None);
    for path in features {
        let b = FeatureBlock::load(path)?;
        if b.take_id != doc.take_id {
            return Err(Error::ingestion(
                path,
                "take_id",
                format!("{} does not match annotation {}", b.take_id, doc.take_id),
            ));
        }
        let want = b.modality.dim(dims);
        if b.features.cols() != want {
            return Err(Error::ingestion(
                path,
                "dim",
                format!("{} {} != {want}", b.modality.name(), b.features.cols()),
            ));
        }
        let role = doc
            .views
            .iter()
            .find(|v| v.view_id == b.view_id)
            .map(|v| v.role)
            .ok_or_else(|| Error::ingestion(path, "view_id", format!("view {} not in annotation", b.view_id)))?;
        match b.modality {
            FeatureModality::Vision => {
                let centers = b
                    .centers
                    .ok_or_else(|| Error::ingestion(path, "centers", "vision features need window centers"))?;
                views.push(ViewRecord {
                    view_id: b.view_id,
                    role,
                    vision: WindowFeatures {
                        centers,
                        features: b.features,
                    },
                    depth: None,
                });
            }
            FeatureModality::Depth => depth.push((b.view_id, b.features, path.clone())),
            FeatureModality::Text => text = Some(b.features),
            FeatureModality::Objects => objects = Some(b.features),
        }
    }
    for v in &doc.views {
        if !views.iter().any(|r| r.view_id == v.view_id) {
            return Err(Error::ingestion(
                annotation,
                format!("views[{}]", v.view_id),
                "no vision feature file",
            ));
        }
    }
    for (view, d, path) in depth {
        let v = views
            .iter_mut()
            .find(|v| v.view_id == view)
            .ok_or_else(|| Error::ingestion(&path, "view_id", format!("depth for view {view} without vision features")))?;
        v.depth = Some(d);
    }
    views.sort_by_key(|v| v.view_id);
    let take = TakeRecord {
        take_id: doc.take_id,
        scenario: doc.scenario,
        segments: doc.segments,
        views,
        text,
        objects,
    };
    take.validate(dims, num_classes).map_err(|e| match e {
        Error::Ingestion { field, message, .. } => Error::Ingestion {
            path: annotation.to_path_buf(),
            field,
            message,
        },
        other => other,
    })?;
    Ok(take)
}

/// Loads `<dir>/annotation.json` with every `.mgft` file beside it.
pub fn load_take_dir(dir: &Path, dims: &TypeDims, num_classes: usize) -> Result<TakeRecord> {
    let mut features: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::ingestion(dir, "directory", e.to_string()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "mgft"))
        .collect();
    features.sort();
    load_take(&dir.join(ANNOTATION_FILE), &features, dims, num_classes)
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the graph container and a JSON sidecar next to it.
pub fn save_graph(path: &Path, g: &HeteroGraph) -> Result<()> {
    write_atomic(path, &g.to_bytes())?;
    write_atomic(&sidecar_path(path), serde_json::to_string_pretty(&g.sidecar())?.as_bytes())
}

pub fn load_graph(path: &Path) -> Result<HeteroGraph> {
    let bytes = fs::read(path).map_err(|e| Error::ingestion(path, "file", e.to_string()))?;
    HeteroGraph::from_bytes(&bytes)
}
