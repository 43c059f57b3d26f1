//! C ABI over the `eggs` library.
//!
//! Objects cross the boundary as opaque handles released with the matching
//! `*_free` function. Every fallible call returns an [`EggsStatus`]; on failure
//! [`eggs_last_error_message`] describes the error of the calling thread.
//! Relations are passed as codes: 0 user, 1 text, 2 link, 3 hashtag,
//! 4 mention, 5 track, 6 user_hashtag.
//!
//! # Safety
//!
//! Pointer arguments must be null or valid for the access the function
//! documents: strings NUL-terminated, arrays at least as long as the given
//! count, handles obtained from this library and not yet freed. Null is
//! reported as `EGGS_STATUS_NULL_POINTER` where the argument is required.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use eggs::data_model::{self, Group, Message, Predictions, Relation};
use eggs::evaluation;
use eggs::hlmrf::{self, GroundHingeModel, MapConfig, RuleWeights};
use eggs::mrf::{self, BpConfig, FactorGraph, VarKind};
use eggs::pipeline::{self, PipelineConfig};
use eggs::synthetic::{self, GeneratorConfig};
use eggs::EggsError;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EggsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Parse = 4,
    MissingArtifact = 5,
    Io = 6,
    Metric = 7,
    /// A Rust panic was caught at the boundary.
    Internal = 8,
}

/// Messages and follower edges.
pub struct EggsDataset {
    messages: Vec<Message>,
    follows: Vec<(String, String)>,
}

/// Binary message/hub factor graph.
pub struct EggsFactorGraph {
    graph: FactorGraph,
}

/// Ground hinge-loss model together with the message priors it was built from.
pub struct EggsHingeModel {
    model: GroundHingeModel,
    priors: Predictions,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &EggsError) -> EggsStatus {
    match e {
        EggsError::Config(_) => EggsStatus::Config,
        EggsError::InvalidInput(_) | EggsError::ColumnMismatch(_) => EggsStatus::InvalidArgument,
        EggsError::Parse { .. } | EggsError::Json(_) => EggsStatus::Parse,
        EggsError::MissingArtifact { .. } => EggsStatus::MissingArtifact,
        EggsError::Io { .. } => EggsStatus::Io,
        EggsError::Metric(_) => EggsStatus::Metric,
    }
}

struct Failure(EggsStatus, String);

impl From<EggsError> for Failure {
    fn from(e: EggsError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(EggsStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(EggsStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EggsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            EggsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal error: {msg}"));
            EggsStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, what).map(Some)
    }
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, need: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len < need {
        return Err(invalid(format!("{what} holds {len} values, {need} needed")));
    }
    if need == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

unsafe fn write_out<T>(p: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    *p = v;
    Ok(())
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

fn relation(code: u32) -> Result<Relation, Failure> {
    Relation::ALL
        .get(code as usize)
        .copied()
        .ok_or_else(|| invalid(format!("unknown relation code {code}")))
}

fn message_id(i: usize) -> String {
    format!("m{i:012}")
}

fn labels_from(labels: &[u8]) -> Result<Vec<bool>, Failure> {
    labels
        .iter()
        .map(|&l| match l {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(invalid(format!("label {l} is neither 0 nor 1"))),
        })
        .collect()
}

/// Copies the calling thread's last error message, NUL-terminated and
/// truncated to `len` bytes, into `buf`. Returns the full message length in
/// bytes (excluding the terminator); pass `buf = NULL` to query it.
#[no_mangle]
pub unsafe extern "C" fn eggs_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Static, NUL-terminated library version.
#[no_mangle]
pub extern "C" fn eggs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Generates a synthetic dataset from a TOML generator config (`NULL` for defaults).
#[no_mangle]
pub unsafe extern "C" fn eggs_dataset_generate(config_toml: *const c_char, out: *mut *mut EggsDataset) -> EggsStatus {
    guard(|| {
        let cfg: GeneratorConfig = match opt_str_arg(config_toml, "config_toml")? {
            Some(t) => toml::from_str(t).map_err(|e| Failure(EggsStatus::Config, e.to_string()))?,
            None => GeneratorConfig::default(),
        };
        let d = synthetic::generate(&cfg)?;
        let ds = Box::new(EggsDataset {
            messages: d.messages,
            follows: d.follows,
        });
        write_out(out, Box::into_raw(ds), "out")
    })
}

/// Loads line-delimited JSON messages and an optional follows file (`NULL` for none).
#[no_mangle]
pub unsafe extern "C" fn eggs_dataset_load(
    messages_path: *const c_char,
    follows_path: *const c_char,
    out: *mut *mut EggsDataset,
) -> EggsStatus {
    guard(|| {
        let mut messages = data_model::read_messages(Path::new(str_arg(messages_path, "messages_path")?))?;
        data_model::sort_chronologically(&mut messages);
        let follows = match opt_str_arg(follows_path, "follows_path")? {
            Some(p) => data_model::read_follows(Path::new(p))?,
            None => Vec::new(),
        };
        write_out(out, Box::into_raw(Box::new(EggsDataset { messages, follows })), "out")
    })
}

/// Writes messages and, if `follows_path` is not `NULL`, follower edges.
#[no_mangle]
pub unsafe extern "C" fn eggs_dataset_save(
    dataset: *const EggsDataset,
    messages_path: *const c_char,
    follows_path: *const c_char,
) -> EggsStatus {
    guard(|| {
        let ds = handle(dataset, "dataset")?;
        data_model::write_messages(Path::new(str_arg(messages_path, "messages_path")?), &ds.messages)?;
        if let Some(p) = opt_str_arg(follows_path, "follows_path")? {
            data_model::write_follows(Path::new(p), &ds.follows)?;
        }
        Ok(())
    })
}

/// Number of messages, and of those labeled spam.
#[no_mangle]
pub unsafe extern "C" fn eggs_dataset_counts(
    dataset: *const EggsDataset,
    n_messages: *mut usize,
    n_spam: *mut usize,
) -> EggsStatus {
    guard(|| {
        let ds = handle(dataset, "dataset")?;
        let spam = ds.messages.iter().filter(|m| m.label.is_some_and(|l| l.is_spam())).count();
        write_out(n_messages, ds.messages.len(), "n_messages")?;
        write_out(n_spam, spam, "n_spam")
    })
}

#[no_mangle]
pub unsafe extern "C" fn eggs_dataset_free(dataset: *mut EggsDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

#[no_mangle]
pub unsafe extern "C" fn eggs_factor_graph_new(out: *mut *mut EggsFactorGraph) -> EggsStatus {
    guard(|| write_out(out, Box::into_raw(Box::new(EggsFactorGraph { graph: FactorGraph::new() })), "out"))
}

/// Adds a message variable with spam prior `prior`; its index goes to `index`.
#[no_mangle]
pub unsafe extern "C" fn eggs_factor_graph_add_message(
    graph: *mut EggsFactorGraph,
    prior: f64,
    index: *mut usize,
) -> EggsStatus {
    guard(|| {
        let g = handle_mut(graph, "graph")?;
        if !(0.0..=1.0).contains(&prior) {
            return Err(invalid(format!("prior {prior} outside [0, 1]")));
        }
        let id = message_id(g.graph.n_variables());
        let v = g.graph.add_variable(VarKind::Message, id, [1.0 - prior, prior])?;
        write_out(index, v, "index")
    })
}

/// Adds a hub variable with a uniform unary potential.
#[no_mangle]
pub unsafe extern "C" fn eggs_factor_graph_add_hub(graph: *mut EggsFactorGraph, index: *mut usize) -> EggsStatus {
    guard(|| {
        let g = handle_mut(graph, "graph")?;
        let id = format!("hub{}", g.graph.n_variables());
        let v = g.graph.add_variable(VarKind::Hub, id, [0.5, 0.5])?;
        write_out(index, v, "index")
    })
}

/// Connects a message to a hub with agreement parameter `epsilon` in (0, 0.5).
#[no_mangle]
pub unsafe extern "C" fn eggs_factor_graph_connect(
    graph: *mut EggsFactorGraph,
    message: usize,
    hub: usize,
    epsilon: f64,
) -> EggsStatus {
    guard(|| {
        let g = handle_mut(graph, "graph")?;
        g.graph.add_factor(message, hub, epsilon, None)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn eggs_factor_graph_sizes(
    graph: *const EggsFactorGraph,
    n_variables: *mut usize,
    n_factors: *mut usize,
) -> EggsStatus {
    guard(|| {
        let g = handle(graph, "graph")?;
        write_out(n_variables, g.graph.n_variables(), "n_variables")?;
        write_out(n_factors, g.graph.n_factors(), "n_factors")
    })
}

/// Loopy BP spam marginals for every variable, in insertion order.
/// Zero `max_iters`, `damping` or `tol` keep the library defaults.
#[no_mangle]
pub unsafe extern "C" fn eggs_factor_graph_bp(
    graph: *const EggsFactorGraph,
    max_iters: usize,
    damping: f64,
    tol: f64,
    marginals: *mut f64,
    len: usize,
    converged: *mut bool,
) -> EggsStatus {
    guard(|| {
        let g = handle(graph, "graph")?;
        let mut cfg = BpConfig::default();
        if max_iters > 0 {
            cfg.max_iters = max_iters;
        }
        if damping > 0.0 {
            cfg.damping = damping;
        }
        if tol > 0.0 {
            cfg.tol = tol;
        }
        let m = mrf::loopy_bp(&g.graph, &cfg);
        out_slice(marginals, len, m.spam.len(), "marginals")?.copy_from_slice(&m.spam);
        if !converged.is_null() {
            *converged = m.converged;
        }
        Ok(())
    })
}

/// Exact spam marginals by enumeration; small graphs only.
#[no_mangle]
pub unsafe extern "C" fn eggs_factor_graph_exact(
    graph: *const EggsFactorGraph,
    marginals: *mut f64,
    len: usize,
) -> EggsStatus {
    guard(|| {
        let g = handle(graph, "graph")?;
        let m = mrf::exact_marginals(&g.graph)?;
        out_slice(marginals, len, m.spam.len(), "marginals")?.copy_from_slice(&m.spam);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn eggs_factor_graph_free(graph: *mut EggsFactorGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Grounds the hinge-loss rules over `n_messages` priors and `n_groups`
/// groups. Members of group `g` are `members[offsets[g] .. offsets[g + 1]]`
/// (so `offsets` has `n_groups + 1` entries) and its relation is
/// `relations[g]`. Prior rules take weights `w_negative` / `w_positive`,
/// relational rules `w_relational`; `exponent` is 1 or 2.
#[no_mangle]
pub unsafe extern "C" fn eggs_hinge_model_new(
    priors: *const f64,
    n_messages: usize,
    members: *const usize,
    offsets: *const usize,
    relations: *const u32,
    n_groups: usize,
    w_negative: f64,
    w_positive: f64,
    w_relational: f64,
    exponent: u8,
    out: *mut *mut EggsHingeModel,
) -> EggsStatus {
    guard(|| {
        let priors = slice_arg(priors, n_messages, "priors")?;
        let offsets = slice_arg(offsets, n_groups + 1, "offsets")?;
        let relations = slice_arg(relations, n_groups, "relations")?;
        let n_members = offsets.last().copied().unwrap_or(0);
        let members = slice_arg(members, n_members, "members")?;
        let priors: Predictions = priors.iter().enumerate().map(|(i, &p)| (message_id(i), p)).collect();
        let mut groups = Vec::with_capacity(n_groups);
        for g in 0..n_groups {
            let (a, b) = (offsets[g], offsets[g + 1]);
            if a > b || b > n_members {
                return Err(invalid(format!("offsets of group {g} are not increasing")));
            }
            let mut ids = Vec::with_capacity(b - a);
            for &m in &members[a..b] {
                if m >= n_messages {
                    return Err(invalid(format!("group {g} names message {m} of {n_messages}")));
                }
                ids.push(message_id(m));
            }
            ids.sort();
            ids.dedup();
            groups.push(Group {
                relation: relation(relations[g])?,
                key: format!("g{g}"),
                member_ids: ids,
            });
        }
        let weights = RuleWeights {
            negative_prior: w_negative,
            positive_prior: w_positive,
            default_relational: w_relational,
            ..RuleWeights::default()
        };
        let model = hlmrf::ground_rules(&priors, &groups, &weights, exponent)?;
        write_out(out, Box::into_raw(Box::new(EggsHingeModel { model, priors })), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn eggs_hinge_model_sizes(
    model: *const EggsHingeModel,
    n_variables: *mut usize,
    n_hinges: *mut usize,
) -> EggsStatus {
    guard(|| {
        let m = handle(model, "model")?;
        write_out(n_variables, m.model.n_variables(), "n_variables")?;
        write_out(n_hinges, m.model.hinges.len(), "n_hinges")
    })
}

/// MAP inference; writes one spam score per message (in prior order) and the
/// objective value. Zero `tol` / `max_iter` keep the library defaults.
#[no_mangle]
pub unsafe extern "C" fn eggs_hinge_model_map(
    model: *const EggsHingeModel,
    tol: f64,
    max_iter: usize,
    scores: *mut f64,
    len: usize,
    objective: *mut f64,
    converged: *mut bool,
) -> EggsStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let mut cfg = MapConfig::default();
        if tol > 0.0 {
            cfg.tol = tol;
        }
        if max_iter > 0 {
            cfg.max_iter = max_iter;
        }
        let result = hlmrf::map_inference(&m.model, &cfg);
        let s = hlmrf::psl_scores(&m.model, &result, &m.priors);
        let out = out_slice(scores, len, s.len(), "scores")?;
        for (o, v) in out.iter_mut().zip(s.values()) {
            *o = *v;
        }
        if !objective.is_null() {
            *objective = result.objective;
        }
        if !converged.is_null() {
            *converged = result.converged;
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn eggs_hinge_model_free(model: *mut EggsHingeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Average precision of `scores` against 0/1 `labels`.
#[no_mangle]
pub unsafe extern "C" fn eggs_aupr(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> EggsStatus {
    guard(|| {
        let s = slice_arg(scores, n, "scores")?;
        let l = labels_from(slice_arg(labels, n, "labels")?)?;
        write_out(out, evaluation::aupr(s, &l)?, "out")
    })
}

/// Area under the ROC curve, ties counted as one half.
#[no_mangle]
pub unsafe extern "C" fn eggs_auroc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> EggsStatus {
    guard(|| {
        let s = slice_arg(scores, n, "scores")?;
        let l = labels_from(slice_arg(labels, n, "labels")?)?;
        write_out(out, evaluation::auroc(s, &l)?, "out")
    })
}

/// Runs every pipeline stage with the TOML config at `config_path` (`NULL`
/// for defaults). A non-`NULL` `out_dir` overrides `paths.out`. Reports land
/// in `<out>/report.txt` and `<out>/report.json`.
#[no_mangle]
pub unsafe extern "C" fn eggs_run_all(config_path: *const c_char, out_dir: *const c_char) -> EggsStatus {
    guard(|| {
        let mut cfg = match opt_str_arg(config_path, "config_path")? {
            Some(p) => PipelineConfig::load(Path::new(p))?,
            None => PipelineConfig::default(),
        };
        if let Some(o) = opt_str_arg(out_dir, "out_dir")? {
            cfg.paths.out = o.into();
        }
        pipeline::cmd_run_all(&cfg)?;
        Ok(())
    })
}
