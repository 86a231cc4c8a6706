//! C ABI over `hclm`: load a checkpoint, stream characters through the model,
//! score text and run the CTC beam decoder.
//!
//! Every fallible function returns an [`HclmStatus`]; on failure a message is
//! available from [`hclm_last_error`] on the same thread. Handles are opaque and
//! must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use hclm::corpus::tokenize;
use hclm::decode::{beam_search, transcript, BonusUnit, DecodeConfig, Label, PosteriorMatrix};
use hclm::hierarchy::NetworkState;
use hclm::training::Checkpoint;
use hclm::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HclmStatus {
    Ok = 0,
    NullPointer = 1,
    Argument = 2,
    Config = 3,
    Io = 4,
    Format = 5,
    OutOfVocabulary = 6,
    Dimension = 7,
    Numeric = 8,
    EmptyCorpus = 9,
    Panic = 10,
}

/// Insertion bonus per emitted character.
pub const HCLM_BONUS_CHAR: u32 = 0;
/// Insertion bonus per completed word.
pub const HCLM_BONUS_WORD: u32 = 1;

/// Beam-search settings. `bonus_unit` is `HCLM_BONUS_CHAR` or `HCLM_BONUS_WORD`;
/// `depth_prune == 0` means unlimited.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HclmDecodeOptions {
    pub beam_width: usize,
    pub lm_weight: f64,
    pub insertion_bonus: f64,
    pub bonus_unit: u32,
    pub width_prune: f64,
    pub depth_prune: usize,
}

/// A loaded checkpoint: network plus vocabulary.
pub struct HclmModel {
    ckpt: Checkpoint,
}

/// Recurrent state of one stream. Valid only with the model that created it.
pub struct HclmState {
    state: NetworkState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HclmStatus {
    match e {
        Error::EmptyCorpus => HclmStatus::EmptyCorpus,
        Error::OutOfVocabulary { .. } => HclmStatus::OutOfVocabulary,
        Error::Argument(_) => HclmStatus::Argument,
        Error::Dimension { .. } => HclmStatus::Dimension,
        Error::Numeric(_) | Error::Divergence { .. } => HclmStatus::Numeric,
        Error::Config(_) => HclmStatus::Config,
        Error::Format(_) => HclmStatus::Format,
        Error::Io { .. } => HclmStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Hclm(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Hclm(e)
    }
}

/// Runs `f`, recording any error or panic for [`hclm_last_error`].
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HclmStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HclmStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} is null"));
            HclmStatus::NullPointer
        }
        Ok(Err(Failure::Hclm(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            HclmStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn as_mut<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn as_str<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Hclm(Error::Format(format!("{what} is not valid UTF-8"))))
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn hclm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hclm_model_load(path: *const c_char, out: *mut *mut HclmModel) -> HclmStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        *out = ptr::null_mut();
        let path = as_str(path, "path")?;
        let ckpt = Checkpoint::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(HclmModel { ckpt }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`hclm_model_load`] and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn hclm_model_free(model: *mut HclmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of output symbols, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live model.
#[no_mangle]
pub unsafe extern "C" fn hclm_model_vocab_size(model: *const HclmModel) -> usize {
    model.as_ref().map_or(0, |m| m.ckpt.network.vocab_size())
}

/// Number of trainable parameters, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live model.
#[no_mangle]
pub unsafe extern "C" fn hclm_model_param_count(model: *const HclmModel) -> usize {
    model.as_ref().map_or(0, |m| m.ckpt.network.param_count())
}

/// Looks up the id of a symbol written as in a vocabulary file (`a`, `<w>`, `<s>`, `\x20`).
///
/// # Safety
/// `model` must be a live model, `symbol` a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hclm_model_symbol_id(model: *const HclmModel, symbol: *const c_char, out: *mut usize) -> HclmStatus {
    guard(|| {
        let m = as_ref(model, "model")?;
        let out = as_mut(out, "out")?;
        *out = m.ckpt.vocab.id_of_escaped(as_str(symbol, "symbol")?)?;
        Ok(())
    })
}

/// A fresh all-zero stream state. Feed the `<s>` id first to get the
/// distribution of the first character.
///
/// # Safety
/// `model` must be a live model and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hclm_state_new(model: *const HclmModel, out: *mut *mut HclmState) -> HclmStatus {
    guard(|| {
        let m = as_ref(model, "model")?;
        let out = as_mut(out, "out")?;
        *out = Box::into_raw(Box::new(HclmState {
            state: m.ckpt.network.initial_state(),
        }));
        Ok(())
    })
}

/// Copies a state; the copy evolves independently.
///
/// # Safety
/// `state` must be a live state and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hclm_state_clone(state: *const HclmState, out: *mut *mut HclmState) -> HclmStatus {
    guard(|| {
        let s = as_ref(state, "state")?;
        let out = as_mut(out, "out")?;
        *out = Box::into_raw(Box::new(HclmState { state: s.state.clone() }));
        Ok(())
    })
}

/// # Safety
/// `state` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn hclm_state_free(state: *mut HclmState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Consumes symbol `id`, advances `state` and writes the next-symbol
/// distribution into `probs`, which must hold exactly the vocabulary size.
/// On failure the state is left unchanged.
///
/// # Safety
/// `model` and `state` must be live; `probs` must point to `probs_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hclm_step(
    model: *const HclmModel,
    state: *mut HclmState,
    id: usize,
    probs: *mut f64,
    probs_len: usize,
) -> HclmStatus {
    guard(|| {
        let m = as_ref(model, "model")?;
        let s = as_mut(state, "state")?;
        if probs.is_null() {
            return Err(Failure::Null("probs"));
        }
        let net = &m.ckpt.network;
        if probs_len != net.vocab_size() {
            return Err(Error::Dimension {
                context: "probs buffer",
                expected: net.vocab_size(),
                actual: probs_len,
            }
            .into());
        }
        let (p, next) = net.step_stateful(&s.state, id)?;
        std::slice::from_raw_parts_mut(probs, probs_len).copy_from_slice(&p);
        s.state = next;
        Ok(())
    })
}

/// Bits per character of `text`, tokenized with the model's vocabulary and
/// scored as one sequence from the zero state.
///
/// # Safety
/// `model` must be live, `text` NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hclm_bpc(model: *const HclmModel, text: *const c_char, out: *mut f64) -> HclmStatus {
    guard(|| {
        let m = as_ref(model, "model")?;
        let out = as_mut(out, "out")?;
        let seq = tokenize(as_str(text, "text")?, &m.ckpt.vocab)?;
        if seq.ids.len() < 2 {
            return Err(Error::Argument("text needs at least two symbols".into()).into());
        }
        *out = hclm::eval::bpc(&m.ckpt.network, &seq.ids)?;
        Ok(())
    })
}

/// The decoder defaults.
#[no_mangle]
pub extern "C" fn hclm_decode_options_default() -> HclmDecodeOptions {
    let d = DecodeConfig::default();
    HclmDecodeOptions {
        beam_width: d.beam_width,
        lm_weight: d.lm_weight,
        insertion_bonus: d.insertion_bonus,
        bonus_unit: match d.bonus_unit {
            BonusUnit::Char => HCLM_BONUS_CHAR,
            BonusUnit::Word => HCLM_BONUS_WORD,
        },
        width_prune: d.width_prune,
        depth_prune: d.depth_prune.unwrap_or(0),
    }
}

/// CTC prefix beam search over a `frames × labels` row-major posterior matrix.
/// `label_ids[k]` is the vocabulary id of column `k`, or -1 for the blank.
/// `options` may be NULL for the defaults. The best transcript is returned in
/// `out` and must be released with [`hclm_string_free`].
///
/// # Safety
/// `model` must be live; `posteriors` must hold `frames * labels` doubles and
/// `label_ids` `labels` entries; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hclm_decode(
    model: *const HclmModel,
    posteriors: *const f64,
    frames: usize,
    labels: usize,
    label_ids: *const i64,
    options: *const HclmDecodeOptions,
    out: *mut *mut c_char,
) -> HclmStatus {
    guard(|| {
        let m = as_ref(model, "model")?;
        let out = as_mut(out, "out")?;
        *out = ptr::null_mut();
        if posteriors.is_null() {
            return Err(Failure::Null("posteriors"));
        }
        if label_ids.is_null() {
            return Err(Failure::Null("label_ids"));
        }
        let cells = frames
            .checked_mul(labels)
            .ok_or_else(|| Error::Argument("posterior matrix is too large".into()))?;
        let flat = std::slice::from_raw_parts(posteriors, cells);
        let ids = std::slice::from_raw_parts(label_ids, labels);
        let labels: Vec<Label> = ids
            .iter()
            .map(|&id| match id {
                -1 => Ok(Label::Blank),
                id if id >= 0 => Ok(Label::Token(id as usize)),
                id => Err(Error::Argument(format!("label id {id} is neither -1 nor a vocabulary id"))),
            })
            .collect::<Result<_, _>>()?;
        let rows = if labels.is_empty() {
            Vec::new()
        } else {
            flat.chunks(labels.len()).map(<[f64]>::to_vec).collect()
        };
        let post = PosteriorMatrix::new(labels, rows)?;
        let opts = options.as_ref().copied().unwrap_or_else(|| hclm_decode_options_default());
        let cfg = DecodeConfig {
            beam_width: opts.beam_width,
            lm_weight: opts.lm_weight,
            insertion_bonus: opts.insertion_bonus,
            bonus_unit: match opts.bonus_unit {
                HCLM_BONUS_CHAR => BonusUnit::Char,
                HCLM_BONUS_WORD => BonusUnit::Word,
                u => return Err(Error::Config(format!("unknown bonus unit {u}")).into()),
            },
            width_prune: opts.width_prune,
            depth_prune: (opts.depth_prune > 0).then_some(opts.depth_prune),
        };
        let beam = beam_search(&post, &m.ckpt.network, &cfg)?;
        let text = beam.first().map(|h| transcript(h, &m.ckpt.vocab)).unwrap_or_default();
        *out = CString::new(text)
            .map_err(|_| Error::Format("transcript contains a NUL byte".into()))?
            .into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hclm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
