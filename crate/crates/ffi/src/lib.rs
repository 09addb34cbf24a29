//! C interface for loading graphs and checkpoints and running inference.
//!
//! Every fallible function returns a [`MaglevStatus`]. On failure the
//! message is available from [`maglev_last_error_message`] on the same
//! thread until the next call. Handles are opaque and must be released with
//! the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use maglev::builder::{extract_inference_graph, InferenceMode};
use maglev::data::load_graph;
use maglev::graph::HeteroGraph;
use maglev::layers::Model;
use maglev::tensor::softmax_rows;
use maglev::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaglevStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidPath = 2,
    Io = 3,
    InvalidData = 4,
    BufferTooSmall = 5,
    Runtime = 6,
    Panic = 7,
}

/// A loaded heterogeneous graph.
pub struct MaglevGraph {
    graph: HeteroGraph,
}

/// A loaded model checkpoint.
pub struct MaglevModel {
    model: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
    Ok(s) => s,
    Err(_) => panic!("version string"),
};

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    let c = CString::new(msg).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> MaglevStatus {
    match err {
        Error::Io(_) => MaglevStatus::Io,
        Error::Ingestion { field, .. } if field == "file" => MaglevStatus::Io,
        e if e.is_validation() => MaglevStatus::InvalidData,
        Error::Json(_) => MaglevStatus::InvalidData,
        _ => MaglevStatus::Runtime,
    }
}

fn fail(status: MaglevStatus, msg: impl Into<String>) -> MaglevStatus {
    set_error(msg);
    status
}

fn guarded(f: impl FnOnce() -> MaglevStatus) -> MaglevStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(MaglevStatus::Panic, "internal panic"),
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, MaglevStatus> {
    if path.is_null() {
        return Err(fail(MaglevStatus::NullPointer, "path is null"));
    }
    match CStr::from_ptr(path).to_str() {
        Ok(s) if !s.is_empty() => Ok(PathBuf::from(s)),
        Ok(_) => Err(fail(MaglevStatus::InvalidPath, "path is empty")),
        Err(_) => Err(fail(MaglevStatus::InvalidPath, "path is not valid UTF-8")),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn maglev_version() -> *const c_char {
    VERSION.as_ptr()
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn maglev_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads an `MGLV` graph file into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn maglev_graph_load(path: *const c_char, out: *mut *mut MaglevGraph) -> MaglevStatus {
    guarded(|| {
        if out.is_null() {
            return fail(MaglevStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_graph(&path) {
            Ok(graph) => {
                *out = Box::into_raw(Box::new(MaglevGraph { graph }));
                MaglevStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Number of nodes of one type (0 ego vision, 1 exo vision, 2 depth,
/// 3 text), or of all types when `node_type` is negative.
///
/// # Safety
/// `graph` must come from [`maglev_graph_load`] and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn maglev_graph_node_count(
    graph: *const MaglevGraph,
    node_type: i32,
    out: *mut usize,
) -> MaglevStatus {
    guarded(|| {
        if graph.is_null() || out.is_null() {
            return fail(MaglevStatus::NullPointer, "graph or out is null");
        }
        let g = &(*graph).graph;
        if node_type < 0 {
            *out = g.total_nodes();
            return MaglevStatus::Ok;
        }
        match maglev::graph::NodeType::from_index(node_type as usize) {
            Some(ty) => {
                *out = g.num_nodes(ty);
                MaglevStatus::Ok
            }
            None => fail(MaglevStatus::InvalidData, format!("unknown node type {node_type}")),
        }
    })
}

/// Total number of directed arcs.
///
/// # Safety
/// `graph` must come from [`maglev_graph_load`] and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn maglev_graph_arc_count(graph: *const MaglevGraph, out: *mut usize) -> MaglevStatus {
    guarded(|| {
        if graph.is_null() || out.is_null() {
            return fail(MaglevStatus::NullPointer, "graph or out is null");
        }
        *out = (*graph).graph.num_arcs();
        MaglevStatus::Ok
    })
}

/// Releases a graph. Null is ignored.
///
/// # Safety
/// `graph` must come from [`maglev_graph_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn maglev_graph_free(graph: *mut MaglevGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Loads an `MGWT` checkpoint into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn maglev_model_load(path: *const c_char, out: *mut *mut MaglevModel) -> MaglevStatus {
    guarded(|| {
        if out.is_null() {
            return fail(MaglevStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) => return fail(MaglevStatus::Io, format!("{}: {e}", path.display())),
        };
        match Model::from_bytes(&bytes) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(MaglevModel { model }));
                MaglevStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Number of output classes.
///
/// # Safety
/// `model` must come from [`maglev_model_load`] and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn maglev_model_num_classes(model: *const MaglevModel, out: *mut usize) -> MaglevStatus {
    guarded(|| {
        if model.is_null() || out.is_null() {
            return fail(MaglevStatus::NullPointer, "model or out is null");
        }
        *out = (*model).model.spec().num_classes;
        MaglevStatus::Ok
    })
}

/// Class probabilities for the ego vision nodes of `graph`, row-major with
/// one row per node in table order. Exocentric nodes are removed first.
///
/// `*rows` receives the node count. When `capacity` is smaller than
/// rows × classes nothing is written to `probs` and `BufferTooSmall` is
/// returned, so a call with a null buffer and zero capacity queries the
/// size.
///
/// # Safety
/// `model` and `graph` must be live handles, `rows` valid, and `probs`
/// valid for `capacity` writes when non-null.
#[no_mangle]
pub unsafe extern "C" fn maglev_model_predict(
    model: *const MaglevModel,
    graph: *const MaglevGraph,
    probs: *mut f64,
    capacity: usize,
    rows: *mut usize,
) -> MaglevStatus {
    guarded(|| {
        if model.is_null() || graph.is_null() || rows.is_null() {
            return fail(MaglevStatus::NullPointer, "model, graph or rows is null");
        }
        let model = &(*model).model;
        let g = extract_inference_graph(&(*graph).graph, InferenceMode::default());
        let n = g.num_nodes(maglev::graph::NodeType::VisionEgo);
        *rows = n;
        let need = n * model.spec().num_classes;
        if capacity < need || (need > 0 && probs.is_null()) {
            return fail(
                MaglevStatus::BufferTooSmall,
                format!("need {need} values, capacity {capacity}"),
            );
        }
        let p = match model.logits_for(&g) {
            Ok(l) => softmax_rows(&l),
            Err(e) => return fail(status_of(&e), e.to_string()),
        };
        if need > 0 {
            std::slice::from_raw_parts_mut(probs, need).copy_from_slice(&p.data()[..need]);
        }
        MaglevStatus::Ok
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`maglev_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn maglev_model_free(model: *mut MaglevModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
