//! C ABI for the hypergraph diffusion engine.
//!
//! Hypergraphs travel as opaque handles; every fallible call returns a
//! [`ConhdStatus`] and leaves a human-readable message retrievable via
//! [`conhd_last_error`]. Buffers are caller-allocated: query sizes with
//! [`conhd_hypergraph_counts`] first. The generated header lives in
//! `include/conhd.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use ndarray::Array2;

use conhd::diffusion::{run_diffusion, DiffusionConfig};
use conhd::hypergraph::{
    build_pair_index, load_hypergraph, random_hypergraph, write_hypergraph, DegreeLaw, Hypergraph,
};
use conhd::regularizers::RegularizerKind;

/// Status code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConhdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    IoError = 3,
    StructureError = 4,
    NumericError = 5,
}

/// Opaque hypergraph handle.
pub struct ConhdHypergraph {
    graph: Hypergraph,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConhdMethod {
    Gd = 0,
    Admm = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConhdRegularizer {
    Ce = 0,
    Tv2 = 1,
    Lec2 = 2,
}

/// Options for one classical diffusion run.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ConhdDiffusionOptions {
    pub method: ConhdMethod,
    pub edge_reg: ConhdRegularizer,
    pub node_reg: ConhdRegularizer,
    /// GD step size.
    pub alpha: f64,
    /// ADMM scale factor.
    pub rho: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub steps: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = sanitized);
}

fn fail(status: ConhdStatus, msg: &str) -> ConhdStatus {
    set_error(msg);
    status
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn conhd_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Crate version as a static string.
#[no_mangle]
pub extern "C" fn conhd_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be a valid
/// pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn conhd_hypergraph_load(
    path: *const c_char,
    out: *mut *mut ConhdHypergraph,
) -> ConhdStatus {
    if path.is_null() || out.is_null() {
        return fail(ConhdStatus::NullPointer, "null path or output handle");
    }
    let Ok(path) = CStr::from_ptr(path).to_str() else {
        return fail(ConhdStatus::InvalidArgument, "path is not valid UTF-8");
    };
    match load_hypergraph(Path::new(path)) {
        Ok((graph, _remap)) => {
            *out = Box::into_raw(Box::new(ConhdHypergraph { graph }));
            ConhdStatus::Ok
        }
        Err(e) => fail(status_for_hypergraph_error(&e), &e.to_string()),
    }
}

fn status_for_hypergraph_error(e: &conhd::hypergraph::HypergraphError) -> ConhdStatus {
    use conhd::hypergraph::HypergraphError as E;
    match e {
        E::Io(_) => ConhdStatus::IoError,
        E::InvalidParams(_) | E::EdgeSizeTooLarge { .. } => ConhdStatus::InvalidArgument,
        _ => ConhdStatus::StructureError,
    }
}

/// Generate a random hypergraph with edge sizes uniform in
/// `[size_min, size_max]`; reproducible for a fixed seed.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn conhd_hypergraph_random(
    nodes: usize,
    edges: usize,
    size_min: usize,
    size_max: usize,
    seed: u64,
    out: *mut *mut ConhdHypergraph,
) -> ConhdStatus {
    if out.is_null() {
        return fail(ConhdStatus::NullPointer, "null output handle");
    }
    match random_hypergraph(nodes, edges, DegreeLaw::Uniform { lo: size_min, hi: size_max }, seed)
    {
        Ok(graph) => {
            *out = Box::into_raw(Box::new(ConhdHypergraph { graph }));
            ConhdStatus::Ok
        }
        Err(e) => fail(status_for_hypergraph_error(&e), &e.to_string()),
    }
}

/// Release a handle; a null pointer is a no-op.
///
/// # Safety
/// `h` must be a handle returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn conhd_hypergraph_free(h: *mut ConhdHypergraph) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// # Safety
/// `h` must be a live handle; `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn conhd_hypergraph_write(
    h: *const ConhdHypergraph,
    path: *const c_char,
) -> ConhdStatus {
    if h.is_null() || path.is_null() {
        return fail(ConhdStatus::NullPointer, "null handle or path");
    }
    let Ok(path) = CStr::from_ptr(path).to_str() else {
        return fail(ConhdStatus::InvalidArgument, "path is not valid UTF-8");
    };
    match write_hypergraph(&(*h).graph, Path::new(path)) {
        Ok(()) => ConhdStatus::Ok,
        Err(e) => fail(status_for_hypergraph_error(&e), &e.to_string()),
    }
}

/// Node, edge and node-edge pair counts.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn conhd_hypergraph_counts(
    h: *const ConhdHypergraph,
    nodes: *mut usize,
    edges: *mut usize,
    pairs: *mut usize,
) -> ConhdStatus {
    if h.is_null() || nodes.is_null() || edges.is_null() || pairs.is_null() {
        return fail(ConhdStatus::NullPointer, "null pointer argument");
    }
    let graph = &(*h).graph;
    *nodes = graph.node_count();
    *edges = graph.edge_count();
    *pairs = graph.pair_count();
    ConhdStatus::Ok
}

/// Fill `pair_nodes[i]` / `pair_edges[i]` with the node and edge id of pair
/// `i` (the row order used by [`conhd_diffusion_run`]). Both buffers must
/// hold `len >= pair_count` entries.
///
/// # Safety
/// The buffers must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn conhd_pair_layout(
    h: *const ConhdHypergraph,
    pair_nodes: *mut usize,
    pair_edges: *mut usize,
    len: usize,
) -> ConhdStatus {
    if h.is_null() || pair_nodes.is_null() || pair_edges.is_null() {
        return fail(ConhdStatus::NullPointer, "null pointer argument");
    }
    let graph = &(*h).graph;
    let idx = build_pair_index(graph);
    if len < idx.pair_count() {
        return fail(
            ConhdStatus::InvalidArgument,
            &format!("buffer holds {len} entries, need {}", idx.pair_count()),
        );
    }
    for p in 0..idx.pair_count() {
        *pair_nodes.add(p) = idx.node_of(p);
        *pair_edges.add(p) = idx.edge_of(p);
    }
    ConhdStatus::Ok
}

/// Defaults: gradient descent with CE regularizers on both sides,
/// alpha = 0.01, rho = 1, lambda = gamma = 1, 100 steps.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn conhd_diffusion_options_default(
    out: *mut ConhdDiffusionOptions,
) -> ConhdStatus {
    if out.is_null() {
        return fail(ConhdStatus::NullPointer, "null options pointer");
    }
    *out = ConhdDiffusionOptions {
        method: ConhdMethod::Gd,
        edge_reg: ConhdRegularizer::Ce,
        node_reg: ConhdRegularizer::Ce,
        alpha: 0.01,
        rho: 1.0,
        lambda: 1.0,
        gamma: 1.0,
        steps: 100,
    };
    ConhdStatus::Ok
}

fn reg_kind(r: ConhdRegularizer) -> RegularizerKind {
    match r {
        ConhdRegularizer::Ce => RegularizerKind::Ce,
        ConhdRegularizer::Tv2 => RegularizerKind::Tv2,
        ConhdRegularizer::Lec2 => RegularizerKind::Lec2,
    }
}

/// Run classical co-representation diffusion.
///
/// `features` is the row-major `node_count x width` feature matrix; the
/// co-representations are initialized by broadcasting each node's features
/// to its pairs. The final `pair_count x width` matrix is written row-major
/// into `out_h` (see [`conhd_pair_layout`] for the row order).
///
/// # Safety
/// `features` must hold `node_count * width` doubles and `out_h` must hold
/// `pair_count * width` doubles.
#[no_mangle]
pub unsafe extern "C" fn conhd_diffusion_run(
    h: *const ConhdHypergraph,
    features: *const f64,
    width: usize,
    options: *const ConhdDiffusionOptions,
    out_h: *mut f64,
) -> ConhdStatus {
    if h.is_null() || features.is_null() || options.is_null() || out_h.is_null() {
        return fail(ConhdStatus::NullPointer, "null pointer argument");
    }
    if width == 0 {
        return fail(ConhdStatus::InvalidArgument, "feature width must be >= 1");
    }
    let graph = &(*h).graph;
    let opts = &*options;
    let idx = build_pair_index(graph);

    let n = graph.node_count();
    let feat = std::slice::from_raw_parts(features, n * width);
    if feat.iter().any(|v| !v.is_finite()) {
        return fail(ConhdStatus::NumericError, "features contain a non-finite value");
    }
    let mut anchors = Array2::zeros((idx.pair_count(), width));
    for p in 0..idx.pair_count() {
        let v = idx.node_of(p);
        for c in 0..width {
            anchors[[p, c]] = feat[v * width + c];
        }
    }

    let cfg = match opts.method {
        ConhdMethod::Gd => DiffusionConfig::gd(
            reg_kind(opts.edge_reg),
            reg_kind(opts.node_reg),
            opts.alpha,
            opts.lambda,
            opts.gamma,
            opts.steps as usize,
        ),
        ConhdMethod::Admm => DiffusionConfig::admm(
            reg_kind(opts.edge_reg),
            reg_kind(opts.node_reg),
            opts.rho,
            opts.lambda,
            opts.gamma,
            opts.steps as usize,
        ),
    };
    match run_diffusion(graph, &idx, &anchors.view(), &cfg) {
        Ok(traj) => {
            let out = std::slice::from_raw_parts_mut(out_h, idx.pair_count() * width);
            for p in 0..idx.pair_count() {
                for c in 0..width {
                    out[p * width + c] = traj.final_state.h[[p, c]];
                }
            }
            ConhdStatus::Ok
        }
        Err(e) => {
            use conhd::diffusion::DiffusionError as E;
            let status = match e {
                E::UnsupportedCombination { .. } | E::InvalidConfig(_) => {
                    ConhdStatus::InvalidArgument
                }
                E::Reg(_) => ConhdStatus::NumericError,
                _ => ConhdStatus::StructureError,
            };
            fail(status, &e.to_string())
        }
    }
}
