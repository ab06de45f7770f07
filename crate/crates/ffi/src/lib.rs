//! C ABI for age-core.
//!
//! Objects cross the boundary as opaque pointers that must be released
//! with the matching `*_free` function. Every call returns an
//! [`AgeStatus`]; on failure [`age_last_error`] returns a description that
//! stays valid until the next failing call on the same thread. Strings
//! returned through out-parameters are owned by the caller and released
//! with [`age_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use age_core::experiment::{diagnostics, parse_config};
use age_core::nn::{Network, NetworkSpec, SparseFeatureVector};
use age_core::policy::{Agent, BanditPolicy, ModelConfig, PolicyConfig};
use age_core::replay::{calibration_sample, read_log, warm_models, WarmConfig, CALIBRATION_EVENTS};
use age_core::rng::derive_seed;
use age_core::AgeError;

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgeStatus {
    Ok = 0,
    NullPointer = 1,
    InputDomain = 2,
    Numeric = 3,
    Contract = 4,
    Parse = 5,
    Config = 6,
    Io = 7,
    InvalidUtf8 = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Opaque CTR network.
pub struct AgeNetwork {
    inner: Network,
}

/// Opaque policy agent with its own models and counters.
pub struct AgeAgent {
    inner: Agent,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let clean = msg.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(clean).expect("nul removed"));
}

fn status_of(e: &AgeError) -> AgeStatus {
    match e {
        AgeError::InputDomain(_) => AgeStatus::InputDomain,
        AgeError::Numeric(_) => AgeStatus::Numeric,
        AgeError::Contract(_) => AgeStatus::Contract,
        AgeError::Parse { .. } => AgeStatus::Parse,
        AgeError::Config(_) => AgeStatus::Config,
        AgeError::Io(_) => AgeStatus::Io,
    }
}

struct Fail(AgeStatus, String);

impl From<AgeError> for Fail {
    fn from(e: AgeError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AgeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AgeStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AgeStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(AgeStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(AgeStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn json<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T, Fail> {
    serde_json::from_str(text).map_err(|e| Fail(AgeStatus::Parse, format!("{what}: {e}")))
}

fn out_string(s: String, out: *mut *mut c_char) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    let c = CString::new(s.replace('\0', " ")).expect("nul removed");
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Description of the last failure on this thread; empty if none. The
/// pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn age_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn age_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn age_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ── Networks ────────────────────────────────────────────────────────────

/// Creates a randomly initialised network from a JSON network spec.
///
/// # Safety
/// `spec_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn age_network_new(
    spec_json: *const c_char,
    seed: u64,
    out: *mut *mut AgeNetwork,
) -> AgeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec: NetworkSpec = json(str_arg(spec_json, "spec_json")?, "network spec")?;
        let inner = Network::new(&spec, seed)?;
        *out = Box::into_raw(Box::new(AgeNetwork { inner }));
        Ok(())
    })
}

/// Loads a network checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn age_network_load(
    path: *const c_char,
    out: *mut *mut AgeNetwork,
) -> AgeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = Network::load(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(AgeNetwork { inner }));
        Ok(())
    })
}

/// Writes a network checkpoint.
///
/// # Safety
/// `net` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn age_network_save(net: *const AgeNetwork, path: *const c_char) -> AgeStatus {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| null("net"))?;
        net.inner.save(Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// # Safety
/// `net` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn age_network_free(net: *mut AgeNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Width of the concatenated input embedding.
///
/// # Safety
/// `net` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn age_network_input_width(net: *const AgeNetwork, out: *mut usize) -> AgeStatus {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| null("net"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = net.inner.input_width();
        Ok(())
    })
}

unsafe fn features(user: *const u32, user_len: usize, arm: u32) -> Result<SparseFeatureVector, Fail> {
    Ok(SparseFeatureVector::new(slice_arg(user, user_len, "user")?.to_vec(), arm))
}

/// Click probability for a user/arm pair, without dropout.
///
/// # Safety
/// `user` must point to `user_len` indices; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn age_network_predict(
    net: *const AgeNetwork,
    user: *const u32,
    user_len: usize,
    arm: u32,
    out: *mut f64,
) -> AgeStatus {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| null("net"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = net.inner.forward(&features(user, user_len, arm)?, None)?;
        Ok(())
    })
}

/// Gradient of the prediction with respect to the input embedding,
/// written to `out[0..out_len]`; `out_len` must equal the input width.
///
/// # Safety
/// `user` must point to `user_len` indices; `out` to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn age_network_input_gradient(
    net: *const AgeNetwork,
    user: *const u32,
    user_len: usize,
    arm: u32,
    out: *mut f64,
    out_len: usize,
) -> AgeStatus {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| null("net"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let width = net.inner.input_width();
        if out_len < width {
            return Err(Fail(
                AgeStatus::BufferTooSmall,
                format!("gradient needs {width} doubles, buffer holds {out_len}"),
            ));
        }
        let g = net.inner.grad_wrt_embedding(&features(user, user_len, arm)?, None)?;
        std::slice::from_raw_parts_mut(out, width).copy_from_slice(&g);
        Ok(())
    })
}

// ── Agents ──────────────────────────────────────────────────────────────

/// Creates an agent with freshly initialised models.
///
/// # Safety
/// JSON arguments must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn age_agent_new(
    policy_json: *const c_char,
    model_json: *const c_char,
    seed: u64,
    out: *mut *mut AgeAgent,
) -> AgeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let policy: PolicyConfig = json(str_arg(policy_json, "policy_json")?, "policy")?;
        let model: ModelConfig = json(str_arg(model_json, "model_json")?, "model")?;
        let models = (0..policy.model_count() as u64)
            .map(|k| model.init_model(policy.age.dgu_hidden, derive_seed(seed, &[k])))
            .collect::<Result<Vec<_>, _>>()?;
        let inner = Agent::new(&policy, &model, &models, &[], seed)?;
        *out = Box::into_raw(Box::new(AgeAgent { inner }));
        Ok(())
    })
}

/// Creates an agent warm-started on the head of a JSON-lines log.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn age_agent_new_warm(
    policy_json: *const c_char,
    model_json: *const c_char,
    warm_json: *const c_char,
    log_path: *const c_char,
    seed: u64,
    out: *mut *mut AgeAgent,
) -> AgeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let policy: PolicyConfig = json(str_arg(policy_json, "policy_json")?, "policy")?;
        let model: ModelConfig = json(str_arg(model_json, "model_json")?, "model")?;
        let warm: WarmConfig = json(str_arg(warm_json, "warm_json")?, "warm")?;
        let events = read_log(Path::new(str_arg(log_path, "log_path")?))?;
        let models = warm_models(
            &events,
            &warm,
            &model,
            policy.age.dgu_hidden,
            seed,
            policy.model_count(),
        )?;
        let head = warm.events.min(events.len());
        let calib = calibration_sample(&events[..head], CALIBRATION_EVENTS);
        let inner = Agent::new(&policy, &model, &models, &calib, seed)?;
        *out = Box::into_raw(Box::new(AgeAgent { inner }));
        Ok(())
    })
}

/// # Safety
/// `agent` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn age_agent_free(agent: *mut AgeAgent) {
    if !agent.is_null() {
        drop(Box::from_raw(agent));
    }
}

/// Picks an arm from `pool`. `seed` keys the random draws of this call.
///
/// # Safety
/// Array arguments must point to the given number of elements; output
/// pointers must be writable (`out_predicted` may be null).
#[no_mangle]
pub unsafe extern "C" fn age_agent_select(
    agent: *mut AgeAgent,
    user: *const u32,
    user_len: usize,
    pool: *const u32,
    pool_len: usize,
    seed: u64,
    out_arm: *mut u32,
    out_predicted: *mut f64,
) -> AgeStatus {
    guard(|| {
        let agent = agent.as_mut().ok_or_else(|| null("agent"))?;
        if out_arm.is_null() {
            return Err(null("out_arm"));
        }
        let user = slice_arg(user, user_len, "user")?;
        let pool = slice_arg(pool, pool_len, "pool")?;
        let choice = agent.inner.select(user, pool, seed)?;
        *out_arm = choice.arm;
        if !out_predicted.is_null() {
            *out_predicted = choice.predicted_ctr;
        }
        Ok(())
    })
}

/// Feeds back a displayed arm and its click (0 or 1).
///
/// # Safety
/// `user` must point to `user_len` indices.
#[no_mangle]
pub unsafe extern "C" fn age_agent_update(
    agent: *mut AgeAgent,
    user: *const u32,
    user_len: usize,
    arm: u32,
    click: u8,
    seed: u64,
) -> AgeStatus {
    guard(|| {
        let agent = agent.as_mut().ok_or_else(|| null("agent"))?;
        let user = slice_arg(user, user_len, "user")?;
        agent.inner.update(user, arm, click, seed)?;
        Ok(())
    })
}

/// Hex SHA-256 of the agent's mutable state; free with `age_string_free`.
///
/// # Safety
/// `agent` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn age_agent_state_digest(
    agent: *const AgeAgent,
    out: *mut *mut c_char,
) -> AgeStatus {
    guard(|| {
        let agent = agent.as_ref().ok_or_else(|| null("agent"))?;
        out_string(agent.inner.state_digest(), out)
    })
}

/// Copies the agent's primary network into a new handle.
///
/// # Safety
/// `agent` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn age_agent_network(
    agent: *const AgeAgent,
    out: *mut *mut AgeNetwork,
) -> AgeStatus {
    guard(|| {
        let agent = agent.as_ref().ok_or_else(|| null("agent"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = agent.inner.network().clone();
        *out = Box::into_raw(Box::new(AgeNetwork { inner }));
        Ok(())
    })
}

// ── Configs ─────────────────────────────────────────────────────────────

/// Validates an experiment config. On success `out` receives a JSON array
/// of `{path, message}` diagnostics (empty when valid).
///
/// # Safety
/// `config_json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn age_validate_config(
    config_json: *const c_char,
    out: *mut *mut c_char,
) -> AgeStatus {
    guard(|| {
        let text = str_arg(config_json, "config_json")?;
        let diags = match parse_config(text) {
            Ok(cfg) => diagnostics(&cfg),
            Err(d) => vec![d],
        };
        out_string(serde_json::to_string(&diags).expect("diagnostics serialise"), out)
    })
}
