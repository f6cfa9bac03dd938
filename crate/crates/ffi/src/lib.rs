//! C ABI over `dmc-prune`.
//!
//! Channels live behind an opaque [`DmcChannel`] handle. Every fallible call
//! returns a [`DmcStatus`]; on failure a description is available from
//! [`dmc_last_error_message`] on the same thread. Information quantities
//! are in nats.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use dmc_prune::bound::{capacity_loss_bound, BoundMode, BoundOptions};
use dmc_prune::capacity::{blahut_arimoto, BaOptions};
use dmc_prune::hull::{prune_redundant, HullOptions, DEFAULT_MEMBERSHIP_TOL};
use dmc_prune::io::channel_from_json_str;
use dmc_prune::select::{exhaustive_select, select_inputs, SelectOptions, SelectionResult};
use dmc_prune::{validate_channel, Channel, Error, InputSubset};

/// Opaque channel handle.
pub struct DmcChannel(Channel);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidChannel = 2,
    InvalidArgument = 3,
    NotConverged = 4,
    BudgetExceeded = 5,
    Infeasible = 6,
    ParseError = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmcBoundMode {
    Surrogate = 0,
    ExactPseudo = 1,
}

/// Capacity-loss certificate. `available` is 0 when no bound could be
/// given; `bound_nats` is then NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DmcBound {
    pub available: u8,
    pub bound_nats: f64,
    pub capacity_pruned_nats: f64,
    pub eta: f64,
    pub critical_x: usize,
    /// `INFINITY` when no mixture of kept rows covers the critical row.
    pub delta: f64,
    /// 0 when undefined.
    pub kappa: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> DmcStatus {
    match e {
        Error::EmptyMatrix
        | Error::RaggedRow { .. }
        | Error::NegativeEntry { .. }
        | Error::NonFiniteEntry { .. }
        | Error::RowSumError { .. }
        | Error::InvalidDistribution(_)
        | Error::DimensionMismatch { .. }
        | Error::TooLarge { .. } => DmcStatus::InvalidChannel,
        Error::NotConverged { .. } => DmcStatus::NotConverged,
        Error::BudgetExceeded { .. } => DmcStatus::BudgetExceeded,
        Error::EtaInfeasible { .. } | Error::SupportInfeasible | Error::InvalidKappa(_) => DmcStatus::Infeasible,
        Error::Json(_) | Error::Csv(_) | Error::Parse(_) => DmcStatus::ParseError,
        _ => DmcStatus::InvalidArgument,
    }
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DmcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DmcStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("{what} is null"));
            DmcStatus::NullPointer
        }
        Ok(Err(Fail::Arg(m))) => {
            set_error(m);
            DmcStatus::InvalidArgument
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            DmcStatus::Panic
        }
    }
}

unsafe fn channel<'a>(ch: *const DmcChannel) -> Result<&'a Channel, Fail> {
    ch.as_ref().map(|c| &c.0).ok_or(Fail::Null("channel"))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn slice_in<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

fn boxed(c: Channel) -> *mut DmcChannel {
    Box::into_raw(Box::new(DmcChannel(c)))
}

/// Builds a channel from `num_inputs × num_outputs` row-major entries.
#[no_mangle]
pub unsafe extern "C" fn dmc_channel_from_rows(
    data: *const f64,
    num_inputs: usize,
    num_outputs: usize,
    out_channel: *mut *mut DmcChannel,
) -> DmcStatus {
    guard(|| {
        let out_channel = out(out_channel, "out_channel")?;
        *out_channel = ptr::null_mut();
        let len = num_inputs
            .checked_mul(num_outputs)
            .ok_or_else(|| Fail::Arg("dimensions overflow".into()))?;
        let data = slice_in(data, len, "data")?;
        let rows: Vec<Vec<f64>> = if num_outputs == 0 {
            vec![Vec::new(); num_inputs]
        } else {
            data.chunks(num_outputs).map(<[f64]>::to_vec).collect()
        };
        *out_channel = boxed(validate_channel(&rows)?);
        Ok(())
    })
}

/// Parses the JSON channel format (`{"num_inputs", "num_outputs", "rows"}`).
#[no_mangle]
pub unsafe extern "C" fn dmc_channel_from_json(json: *const c_char, out_channel: *mut *mut DmcChannel) -> DmcStatus {
    guard(|| {
        let out_channel = out(out_channel, "out_channel")?;
        *out_channel = ptr::null_mut();
        if json.is_null() {
            return Err(Fail::Null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Fail::Core(Error::Parse(e.to_string())))?;
        *out_channel = boxed(channel_from_json_str(text)?);
        Ok(())
    })
}

/// Releases a handle; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn dmc_channel_free(channel: *mut DmcChannel) {
    if !channel.is_null() {
        drop(Box::from_raw(channel));
    }
}

#[no_mangle]
pub unsafe extern "C" fn dmc_channel_dims(
    channel: *const DmcChannel,
    num_inputs: *mut usize,
    num_outputs: *mut usize,
) -> DmcStatus {
    guard(|| {
        let ch = self::channel(channel)?;
        *out(num_inputs, "num_inputs")? = ch.num_inputs();
        *out(num_outputs, "num_outputs")? = ch.num_outputs();
        Ok(())
    })
}

/// Capacity in nats. `input_dist` may be null; otherwise it receives
/// `num_inputs` values.
#[no_mangle]
pub unsafe extern "C" fn dmc_capacity(
    channel: *const DmcChannel,
    tol_nats: f64,
    max_iter: usize,
    capacity_nats: *mut f64,
    input_dist: *mut f64,
) -> DmcStatus {
    guard(|| {
        let ch = self::channel(channel)?;
        let cap = out(capacity_nats, "capacity_nats")?;
        let r = blahut_arimoto(ch, &BaOptions::new(tol_nats, max_iter))?;
        *cap = r.capacity_nats;
        if !input_dist.is_null() {
            slice_out(input_dist, ch.num_inputs(), "input_dist")?.copy_from_slice(r.input_dist.as_slice());
        }
        Ok(())
    })
}

unsafe fn write_selection(r: &SelectionResult, indices: *mut usize, k: usize, capacity_nats: *mut f64) -> Result<(), Fail> {
    slice_out(indices, k, "out_indices")?.copy_from_slice(r.subset.indices());
    *out(capacity_nats, "capacity_nats")? = r.capacity_nats;
    Ok(())
}

/// Clustering selection of `k` inputs. `out_indices` receives `k` sorted
/// indices.
#[no_mangle]
pub unsafe extern "C" fn dmc_select_inputs(
    channel: *const DmcChannel,
    k: usize,
    out_indices: *mut usize,
    capacity_nats: *mut f64,
) -> DmcStatus {
    guard(|| {
        let ch = self::channel(channel)?;
        let r = select_inputs(ch, k, &SelectOptions::default())?;
        write_selection(&r, out_indices, k, capacity_nats)
    })
}

/// Best `k`-subset over all candidates; fails with `BudgetExceeded` when
/// there are more than `budget` of them.
#[no_mangle]
pub unsafe extern "C" fn dmc_exhaustive_select(
    channel: *const DmcChannel,
    k: usize,
    budget: u64,
    out_indices: *mut usize,
    capacity_nats: *mut f64,
) -> DmcStatus {
    guard(|| {
        let ch = self::channel(channel)?;
        let opts = SelectOptions {
            budget: budget.into(),
            ..SelectOptions::default()
        };
        let r = exhaustive_select(ch, k, &opts)?;
        write_selection(&r, out_indices, k, capacity_nats)
    })
}

unsafe fn subset(kept: *const usize, len: usize) -> Result<InputSubset, Fail> {
    Ok(InputSubset::from_unsorted(slice_in(kept, len, "kept")?.to_vec())?)
}

/// Bound on the capacity lost by keeping only `kept`; `mode` is a
/// [`DmcBoundMode`] value.
#[no_mangle]
pub unsafe extern "C" fn dmc_capacity_loss_bound(
    channel: *const DmcChannel,
    kept: *const usize,
    num_kept: usize,
    mode: u32,
    out_bound: *mut DmcBound,
) -> DmcStatus {
    guard(|| {
        let ch = self::channel(channel)?;
        let dst = out(out_bound, "out_bound")?;
        let kept = subset(kept, num_kept)?;
        let mode = match mode {
            m if m == DmcBoundMode::Surrogate as u32 => BoundMode::Surrogate,
            m if m == DmcBoundMode::ExactPseudo as u32 => BoundMode::ExactPseudo,
            m => return Err(Fail::Arg(format!("unknown bound mode {m}"))),
        };
        let r = capacity_loss_bound(
            ch,
            &kept,
            &BoundOptions {
                mode,
                ..BoundOptions::default()
            },
        )?;
        *dst = DmcBound {
            available: r.bound_nats.is_some().into(),
            bound_nats: r.bound_nats.unwrap_or(f64::NAN),
            capacity_pruned_nats: r.capacity_pruned_nats,
            eta: r.eta,
            critical_x: r.critical_x,
            delta: r.delta.value(),
            kappa: r.kappa.unwrap_or(0.0),
        };
        Ok(())
    })
}

/// Drops rows lying in the hull of the remaining rows. `out_kept` must hold
/// `num_inputs` entries; `num_kept` receives how many were written.
#[no_mangle]
pub unsafe extern "C" fn dmc_prune_redundant(
    channel: *const DmcChannel,
    out_kept: *mut usize,
    num_kept: *mut usize,
) -> DmcStatus {
    guard(|| {
        let ch = self::channel(channel)?;
        let dst = slice_out(out_kept, ch.num_inputs(), "out_kept")?;
        let n = out(num_kept, "num_kept")?;
        let kept = prune_redundant(ch, DEFAULT_MEMBERSHIP_TOL, &HullOptions::default())?;
        dst[..kept.len()].copy_from_slice(kept.indices());
        *n = kept.len();
        Ok(())
    })
}

/// Message of the last failure on this thread; empty if none. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dmc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn dmc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
