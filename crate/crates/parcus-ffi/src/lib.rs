//! C ABI for the parcus classifier.
//!
//! Handles are opaque pointers owned by this library; every constructor
//! has a matching `_free`, every fallible call returns a [`ParcusStatus`]
//! and leaves a message retrievable with [`parcus_last_error`] on
//! failure. The header is generated by cbindgen into `include/parcus.h`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use libc::{c_char, size_t};

use parcus::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use parcus::config::RunConfig;
use parcus::data::{Corpus, Document, EmbeddingTable};
use parcus::error::Error;
use parcus::model::Model;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParcusStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Bad configuration, option value or index.
    InvalidArgument = 2,
    Io = 3,
    /// Malformed input file.
    Parse = 4,
    /// Non-finite computation or diverged training.
    Numeric = 5,
    /// A string argument was not valid UTF-8.
    Utf8 = 6,
    /// Internal panic; state is still consistent but the call did nothing.
    Internal = 7,
}

/// Opaque embedding table handle.
pub struct ParcusTable(EmbeddingTable);

/// Opaque corpus handle.
pub struct ParcusCorpus(Corpus);

/// Opaque trained-model handle (model plus its loss settings).
pub struct ParcusModel(Checkpoint);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> ParcusStatus {
    match err {
        Error::Io(_) => ParcusStatus::Io,
        Error::Parse { .. } => ParcusStatus::Parse,
        Error::Dimension(_) | Error::Config(_) => ParcusStatus::InvalidArgument,
        Error::Numeric(_) => ParcusStatus::Numeric,
    }
}

fn fail(err: Error) -> ParcusStatus {
    set_error(&err.to_string());
    status_of(&err)
}

/// Runs a closure, converting panics and errors into statuses.
fn guarded(f: impl FnOnce() -> Result<ParcusStatus, Error>) -> ParcusStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err(err)) => fail(err),
        Err(_) => {
            set_error("internal panic");
            ParcusStatus::Internal
        }
    }
}

unsafe fn c_path(ptr: *const c_char) -> Result<PathBuf, Error> {
    Ok(PathBuf::from(c_str(ptr)?))
}

unsafe fn c_str<'a>(ptr: *const c_char) -> Result<&'a str, Error> {
    if ptr.is_null() {
        return Err(Error::Config("null string argument".into()));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Error::Config("string argument is not valid UTF-8".into()))
}

/// Message of the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn parcus_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn parcus_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Loads an embedding table (`"V n"` header, then token + floats lines).
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn parcus_table_load(
    path: *const c_char,
    out: *mut *mut ParcusTable,
) -> ParcusStatus {
    if out.is_null() {
        set_error("null output pointer");
        return ParcusStatus::NullPointer;
    }
    guarded(|| {
        let table = parcus::data::load_embedding_table(c_path(path)?)?;
        *out = Box::into_raw(Box::new(ParcusTable(table)));
        Ok(ParcusStatus::Ok)
    })
}

/// Embedding dimension, or 0 for a null handle.
///
/// # Safety
/// `table` must be null or come from `parcus_table_load`.
#[no_mangle]
pub unsafe extern "C" fn parcus_table_dim(table: *const ParcusTable) -> size_t {
    if table.is_null() {
        return 0;
    }
    (*table).0.dim()
}

/// Vocabulary size, or 0 for a null handle.
///
/// # Safety
/// `table` must be null or come from `parcus_table_load`.
#[no_mangle]
pub unsafe extern "C" fn parcus_table_len(table: *const ParcusTable) -> size_t {
    if table.is_null() {
        return 0;
    }
    (*table).0.len()
}

/// # Safety
/// `table` must come from `parcus_table_load` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn parcus_table_free(table: *mut ParcusTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Loads a JSON-lines corpus against a table.
///
/// # Safety
/// All pointers must be valid; `table` must outlive the call.
#[no_mangle]
pub unsafe extern "C" fn parcus_corpus_load(
    path: *const c_char,
    table: *const ParcusTable,
    num_classes: size_t,
    out: *mut *mut ParcusCorpus,
) -> ParcusStatus {
    if table.is_null() || out.is_null() {
        set_error("null pointer argument");
        return ParcusStatus::NullPointer;
    }
    guarded(|| {
        let (corpus, _report) = parcus::data::load_corpus(c_path(path)?, &(*table).0, num_classes)?;
        *out = Box::into_raw(Box::new(ParcusCorpus(corpus)));
        Ok(ParcusStatus::Ok)
    })
}

/// Document count, or 0 for a null handle.
///
/// # Safety
/// `corpus` must be null or come from `parcus_corpus_load`.
#[no_mangle]
pub unsafe extern "C" fn parcus_corpus_len(corpus: *const ParcusCorpus) -> size_t {
    if corpus.is_null() {
        return 0;
    }
    (*corpus).0.len()
}

/// # Safety
/// `corpus` must come from `parcus_corpus_load` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn parcus_corpus_free(corpus: *mut ParcusCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Trains a model on the whole corpus. `config_text` uses the same
/// `key = value` lines as the CLI config file (may be null for defaults);
/// model kind, hyperparameters and the seed all come from it.
///
/// # Safety
/// All pointers must be valid for the duration of the call.
#[no_mangle]
pub unsafe extern "C" fn parcus_train(
    table: *const ParcusTable,
    corpus: *const ParcusCorpus,
    config_text: *const c_char,
    out: *mut *mut ParcusModel,
) -> ParcusStatus {
    if table.is_null() || corpus.is_null() || out.is_null() {
        set_error("null pointer argument");
        return ParcusStatus::NullPointer;
    }
    guarded(|| {
        let mut cfg = RunConfig::default();
        if !config_text.is_null() {
            for (idx, raw) in c_str(config_text)?.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                    line: idx + 1,
                    msg: format!("expected 'key = value', got '{raw}'"),
                })?;
                cfg.apply(key.trim(), value.trim())?;
            }
        }
        let corpus = &(*corpus).0;
        let spec = cfg.model_spec()?;
        let working = if spec.averages_inputs() {
            parcus::baselines::average_corpus(corpus)
        } else {
            corpus.clone()
        };
        let train_cfg = cfg.train_config();
        let loss_cfg = cfg.loss_config();
        let mut model = spec.build(
            &working.documents,
            working.num_classes,
            (*table).0.dim(),
            &train_cfg,
        )?;
        parcus::optim::train(&mut model, &working.documents, &train_cfg, &loss_cfg)?;
        *out = Box::into_raw(Box::new(ParcusModel(Checkpoint::new(model, loss_cfg))));
        Ok(ParcusStatus::Ok)
    })
}

/// # Safety
/// `path` must be a valid string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn parcus_model_load(
    path: *const c_char,
    out: *mut *mut ParcusModel,
) -> ParcusStatus {
    if out.is_null() {
        set_error("null output pointer");
        return ParcusStatus::NullPointer;
    }
    guarded(|| {
        let ckpt = load_checkpoint(c_path(path)?)?;
        *out = Box::into_raw(Box::new(ParcusModel(ckpt)));
        Ok(ParcusStatus::Ok)
    })
}

/// # Safety
/// `model` must come from this library; `path` must be a valid string.
#[no_mangle]
pub unsafe extern "C" fn parcus_model_save(
    model: *const ParcusModel,
    path: *const c_char,
) -> ParcusStatus {
    if model.is_null() {
        set_error("null model");
        return ParcusStatus::NullPointer;
    }
    guarded(|| {
        save_checkpoint(&(*model).0, c_path(path)?)?;
        Ok(ParcusStatus::Ok)
    })
}

/// Class count, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn parcus_model_num_classes(model: *const ParcusModel) -> size_t {
    if model.is_null() {
        return 0;
    }
    (*model).0.num_classes
}

/// # Safety
/// `model` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn parcus_model_free(model: *mut ParcusModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Predicted class of document `index`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn parcus_predict(
    model: *const ParcusModel,
    corpus: *const ParcusCorpus,
    index: size_t,
    class_out: *mut size_t,
) -> ParcusStatus {
    if model.is_null() || corpus.is_null() || class_out.is_null() {
        set_error("null pointer argument");
        return ParcusStatus::NullPointer;
    }
    guarded(|| {
        let corpus = &(*corpus).0;
        let doc = corpus
            .documents
            .get(index)
            .ok_or_else(|| Error::Config(format!("document index {index} out of range")))?;
        *class_out = (*model).0.model.predict(doc)?;
        Ok(ParcusStatus::Ok)
    })
}

/// Classifies a token list: unknown tokens are dropped (as during corpus
/// ingestion), class probabilities are written into `probs_out`, which
/// must hold `parcus_model_num_classes` doubles.
///
/// # Safety
/// `tokens` must point to `num_tokens` valid strings; `probs_out` must be
/// writable for the class count.
#[no_mangle]
pub unsafe extern "C" fn parcus_predict_tokens(
    model: *const ParcusModel,
    table: *const ParcusTable,
    tokens: *const *const c_char,
    num_tokens: size_t,
    probs_out: *mut f64,
    class_out: *mut size_t,
) -> ParcusStatus {
    if model.is_null() || table.is_null() || class_out.is_null() {
        set_error("null pointer argument");
        return ParcusStatus::NullPointer;
    }
    if num_tokens > 0 && tokens.is_null() {
        set_error("null token array");
        return ParcusStatus::NullPointer;
    }
    guarded(|| {
        let table = &(*table).0;
        let mut kept_tokens = Vec::new();
        let mut vectors = Vec::new();
        for i in 0..num_tokens {
            let token = c_str(*tokens.add(i))?;
            if let Some(v) = table.get(token) {
                kept_tokens.push(token.to_string());
                vectors.push(v.to_vec());
            }
        }
        let count = vectors.len();
        let doc = Document {
            tokens: kept_tokens,
            vectors,
            rationale: vec![0; count],
            label: 0,
        };
        let ckpt = &(*model).0;
        let fwd = ckpt.model.forward(&doc, parcus::model::Mode::Infer)?;
        if !probs_out.is_null() {
            for (i, &p) in fwd.probs.iter().enumerate() {
                *probs_out.add(i) = p;
            }
        }
        *class_out = parcus::model::argmax_tie_low(&fwd.probs);
        Ok(ParcusStatus::Ok)
    })
}

/// Accuracy and positive-class F1 of the model over a labelled corpus.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn parcus_evaluate(
    model: *const ParcusModel,
    corpus: *const ParcusCorpus,
    accuracy_out: *mut f64,
    f1_out: *mut f64,
) -> ParcusStatus {
    if model.is_null() || corpus.is_null() {
        set_error("null pointer argument");
        return ParcusStatus::NullPointer;
    }
    guarded(|| {
        let corpus = &(*corpus).0;
        let ckpt = &(*model).0;
        let mut predictions = Vec::with_capacity(corpus.len());
        let mut labels = Vec::with_capacity(corpus.len());
        for doc in &corpus.documents {
            predictions.push(ckpt.model.predict(doc)?);
            labels.push(doc.label);
        }
        let report = parcus::eval::metrics(
            &predictions,
            &labels,
            corpus.num_classes,
            corpus.positive_class.unwrap_or(ckpt.loss.positive_class),
        )?;
        if !accuracy_out.is_null() {
            *accuracy_out = report.accuracy;
        }
        if !f1_out.is_null() {
            *f1_out = report.f1;
        }
        Ok(ParcusStatus::Ok)
    })
}
