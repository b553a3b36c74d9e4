//! C ABI over the floorplanning engine: opaque handles, status codes, and
//! a thread-local last-error message. All functions are safe to call from
//! any thread as long as each handle is used from one thread at a time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
#[cfg(test)]
use std::ptr;

use sgf_core::env::{Anchor, CanvasConfig, CanvasState, Env};
use sgf_core::netlist::{content_hash, parse_canonical, serialize_canonical, Netlist};
use sgf_core::SgfError;

/// Status code returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgfStatus {
    Ok = 0,
    NullArgument = 1,
    ParseError = 2,
    InvalidData = 3,
    IllegalAction = 4,
    RuntimeError = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &SgfError) -> SgfStatus {
    match err {
        SgfError::Parse { .. } => SgfStatus::ParseError,
        SgfError::Invalid(_) => SgfStatus::InvalidData,
        SgfError::IllegalAction(_) => SgfStatus::IllegalAction,
        SgfError::Runtime(_) | SgfError::Io { .. } => SgfStatus::RuntimeError,
    }
}

fn fail(err: SgfError) -> SgfStatus {
    let status = status_of(&err);
    set_error(&err.to_string());
    status
}

fn null_arg(name: &str) -> SgfStatus {
    set_error(&format!("null argument: {name}"));
    SgfStatus::NullArgument
}

/// Opaque netlist handle.
pub struct SgfNetlist(Netlist);

/// Opaque environment handle (netlist bound to a canvas).
pub struct SgfEnv(Env);

/// Opaque immutable placement-state handle.
pub struct SgfState(CanvasState);

/// Message describing the most recent error on this thread. The pointer is
/// valid until the next failing call on the same thread. Never null.
#[no_mangle]
pub extern "C" fn sgf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Parse a canonical netlist JSON string into a new handle.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sgf_netlist_parse(
    json: *const c_char,
    out: *mut *mut SgfNetlist,
) -> SgfStatus {
    if json.is_null() {
        return null_arg("json");
    }
    if out.is_null() {
        return null_arg("out");
    }
    let text = match CStr::from_ptr(json).to_str() {
        Ok(t) => t,
        Err(_) => {
            set_error("netlist JSON is not valid UTF-8");
            return SgfStatus::ParseError;
        }
    };
    match parse_canonical(text) {
        Ok(netlist) => {
            *out = Box::into_raw(Box::new(SgfNetlist(netlist)));
            SgfStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Release a netlist handle. Null is a no-op.
///
/// # Safety
/// `netlist` must be null or a pointer from `sgf_netlist_parse`, released
/// at most once.
#[no_mangle]
pub unsafe extern "C" fn sgf_netlist_free(netlist: *mut SgfNetlist) {
    if !netlist.is_null() {
        drop(Box::from_raw(netlist));
    }
}

/// Number of modules in the netlist.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sgf_netlist_module_count(
    netlist: *const SgfNetlist,
    out: *mut usize,
) -> SgfStatus {
    if netlist.is_null() {
        return null_arg("netlist");
    }
    if out.is_null() {
        return null_arg("out");
    }
    *out = (*netlist).0.modules.len();
    SgfStatus::Ok
}

/// Canonical JSON serialization of the netlist; free with `sgf_string_free`.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sgf_netlist_to_json(
    netlist: *const SgfNetlist,
    out: *mut *mut c_char,
) -> SgfStatus {
    if netlist.is_null() {
        return null_arg("netlist");
    }
    if out.is_null() {
        return null_arg("out");
    }
    let json = serialize_canonical(&(*netlist).0);
    match CString::new(json) {
        Ok(s) => {
            *out = s.into_raw();
            SgfStatus::Ok
        }
        Err(_) => {
            set_error("serialized netlist contains an interior NUL");
            SgfStatus::RuntimeError
        }
    }
}

/// Hex content hash of the netlist; free with `sgf_string_free`.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sgf_netlist_hash(
    netlist: *const SgfNetlist,
    out: *mut *mut c_char,
) -> SgfStatus {
    if netlist.is_null() {
        return null_arg("netlist");
    }
    if out.is_null() {
        return null_arg("out");
    }
    *out = CString::new(content_hash(&(*netlist).0)).expect("hex hash").into_raw();
    SgfStatus::Ok
}

/// Release a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must be null or a string returned by this library, released at most
/// once.
#[no_mangle]
pub unsafe extern "C" fn sgf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Build an environment from a netlist and canvas dimensions. The netlist
/// handle remains owned by the caller.
///
/// # Safety
/// `netlist` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sgf_env_new(
    netlist: *const SgfNetlist,
    width: usize,
    height: usize,
    layers: usize,
    out: *mut *mut SgfEnv,
) -> SgfStatus {
    if netlist.is_null() {
        return null_arg("netlist");
    }
    if out.is_null() {
        return null_arg("out");
    }
    let cfg = match CanvasConfig::new(width, height, layers) {
        Ok(cfg) => cfg,
        Err(e) => return fail(e),
    };
    match Env::new((*netlist).0.clone(), cfg) {
        Ok(env) => {
            *out = Box::into_raw(Box::new(SgfEnv(env)));
            SgfStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Release an environment handle. Null is a no-op.
///
/// # Safety
/// `env` must be null or a pointer from `sgf_env_new`, released at most
/// once.
#[no_mangle]
pub unsafe extern "C" fn sgf_env_free(env: *mut SgfEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Fresh empty placement state.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sgf_env_reset(env: *const SgfEnv, out: *mut *mut SgfState) -> SgfStatus {
    if env.is_null() {
        return null_arg("env");
    }
    if out.is_null() {
        return null_arg("out");
    }
    *out = Box::into_raw(Box::new(SgfState((*env).0.reset())));
    SgfStatus::Ok
}

/// Release a state handle. Null is a no-op.
///
/// # Safety
/// `state` must be null or a state pointer from this library, released at
/// most once.
#[no_mangle]
pub unsafe extern "C" fn sgf_state_free(state: *mut SgfState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Place the next module at anchor (x, y, z). On success writes the next
/// state, the three-component reward (wirelength score, congestion penalty,
/// heat penalty), and the episode-done flag. The input state is unchanged.
///
/// # Safety
/// All pointers must be valid; `reward` must point to at least 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn sgf_env_step(
    env: *const SgfEnv,
    state: *const SgfState,
    x: usize,
    y: usize,
    z: usize,
    out_state: *mut *mut SgfState,
    reward: *mut f64,
    done: *mut bool,
) -> SgfStatus {
    if env.is_null() {
        return null_arg("env");
    }
    if state.is_null() {
        return null_arg("state");
    }
    if out_state.is_null() || reward.is_null() || done.is_null() {
        return null_arg("out");
    }
    match (*env).0.step(&(*state).0, Anchor::new(x, y, z)) {
        Ok((next, r, d)) => {
            let r = r.as_array();
            for (i, v) in r.iter().enumerate() {
                *reward.add(i) = *v;
            }
            *done = d;
            *out_state = Box::into_raw(Box::new(SgfState(next)));
            SgfStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Number of legal anchors for the next module; 0 when the episode is done
/// or the placement is dead-ended.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sgf_env_legal_count(
    env: *const SgfEnv,
    state: *const SgfState,
    out: *mut usize,
) -> SgfStatus {
    if env.is_null() {
        return null_arg("env");
    }
    if state.is_null() {
        return null_arg("state");
    }
    if out.is_null() {
        return null_arg("out");
    }
    *out = (*env).0.legal_actions(&(*state).0).len();
    SgfStatus::Ok
}

/// Total weighted wirelength of the (partial) placement.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sgf_state_wirelength(
    state: *const SgfState,
    out: *mut f64,
) -> SgfStatus {
    if state.is_null() {
        return null_arg("state");
    }
    if out.is_null() {
        return null_arg("out");
    }
    *out = (*state).0.wirelength();
    SgfStatus::Ok
}

/// Number of modules placed so far.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sgf_state_placed_count(
    state: *const SgfState,
    out: *mut usize,
) -> SgfStatus {
    if state.is_null() {
        return null_arg("state");
    }
    if out.is_null() {
        return null_arg("out");
    }
    *out = (*state).0.t();
    SgfStatus::Ok
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY3: &str = r#"{"name":"toy3","modules":[{"name":"A","w":2,"h":2},{"name":"B","w":2,"h":1},{"name":"C","w":1,"h":1}],"nets":[["A","B"],["B","C"],["A","B"]]}"#;

    fn parse(json: &str) -> *mut SgfNetlist {
        let c = CString::new(json).unwrap();
        let mut out = ptr::null_mut();
        let status = unsafe { sgf_netlist_parse(c.as_ptr(), &mut out) };
        assert_eq!(status, SgfStatus::Ok);
        out
    }

    fn last_error() -> String {
        unsafe { CStr::from_ptr(sgf_last_error_message()) }.to_str().unwrap().to_string()
    }

    #[test]
    fn parse_and_inspect_netlist() {
        let n = parse(TOY3);
        let mut count = 0usize;
        assert_eq!(unsafe { sgf_netlist_module_count(n, &mut count) }, SgfStatus::Ok);
        assert_eq!(count, 3);

        let mut json = ptr::null_mut();
        assert_eq!(unsafe { sgf_netlist_to_json(n, &mut json) }, SgfStatus::Ok);
        let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_string();
        assert!(text.contains("\"toy3\""));
        unsafe { sgf_string_free(json) };

        let mut hash = ptr::null_mut();
        assert_eq!(unsafe { sgf_netlist_hash(n, &mut hash) }, SgfStatus::Ok);
        let hex = unsafe { CStr::from_ptr(hash) }.to_str().unwrap().to_string();
        assert_eq!(hex.len(), 64);
        unsafe { sgf_string_free(hash) };

        unsafe { sgf_netlist_free(n) };
    }

    #[test]
    fn parse_error_sets_message() {
        let c = CString::new("{ not json").unwrap();
        let mut out = ptr::null_mut();
        let status = unsafe { sgf_netlist_parse(c.as_ptr(), &mut out) };
        assert_eq!(status, SgfStatus::InvalidData);
        assert!(!last_error().is_empty());
    }

    #[test]
    fn null_arguments_are_rejected() {
        let mut out = ptr::null_mut();
        assert_eq!(
            unsafe { sgf_netlist_parse(ptr::null(), &mut out) },
            SgfStatus::NullArgument
        );
        assert!(last_error().contains("null argument"));
        let mut count = 0usize;
        assert_eq!(
            unsafe { sgf_netlist_module_count(ptr::null(), &mut count) },
            SgfStatus::NullArgument
        );
        unsafe {
            sgf_netlist_free(ptr::null_mut());
            sgf_env_free(ptr::null_mut());
            sgf_state_free(ptr::null_mut());
            sgf_string_free(ptr::null_mut());
        }
    }

    #[test]
    fn full_episode_through_the_abi() {
        let n = parse(TOY3);
        let mut env = ptr::null_mut();
        assert_eq!(unsafe { sgf_env_new(n, 6, 6, 2, &mut env) }, SgfStatus::Ok);
        unsafe { sgf_netlist_free(n) };

        let mut state = ptr::null_mut();
        assert_eq!(unsafe { sgf_env_reset(env, &mut state) }, SgfStatus::Ok);

        let mut legal = 0usize;
        assert_eq!(unsafe { sgf_env_legal_count(env, state, &mut legal) }, SgfStatus::Ok);
        assert_eq!(legal, 50);

        // Placement A(0,0,0), B(3,0,0), C(0,3,1): wirelength 23.5.
        let mut reward = [0.0f64; 3];
        let mut done = false;
        for &(x, y, z, expect_done) in
            &[(0usize, 0usize, 0usize, false), (3, 0, 0, false), (0, 3, 1, true)]
        {
            let mut next = ptr::null_mut();
            let status = unsafe {
                sgf_env_step(env, state, x, y, z, &mut next, reward.as_mut_ptr(), &mut done)
            };
            assert_eq!(status, SgfStatus::Ok);
            assert_eq!(done, expect_done);
            unsafe { sgf_state_free(state) };
            state = next;
        }
        let mut wl = 0.0f64;
        assert_eq!(unsafe { sgf_state_wirelength(state, &mut wl) }, SgfStatus::Ok);
        assert_eq!(wl, 23.5);
        let mut placed = 0usize;
        assert_eq!(unsafe { sgf_state_placed_count(state, &mut placed) }, SgfStatus::Ok);
        assert_eq!(placed, 3);

        // Illegal action: overlapping placement is refused and the input
        // state stays usable.
        let mut state0 = ptr::null_mut();
        assert_eq!(unsafe { sgf_env_reset(env, &mut state0) }, SgfStatus::Ok);
        let mut next = ptr::null_mut();
        let status = unsafe {
            sgf_env_step(env, state0, 5, 5, 0, &mut next, reward.as_mut_ptr(), &mut done)
        };
        assert_eq!(status, SgfStatus::IllegalAction);
        assert!(!last_error().is_empty());
        assert_eq!(unsafe { sgf_env_legal_count(env, state0, &mut legal) }, SgfStatus::Ok);
        assert_eq!(legal, 50);

        unsafe {
            sgf_state_free(state0);
            sgf_state_free(state);
            sgf_env_free(env);
        }
    }

    #[test]
    fn oversized_netlist_rejected_at_env_creation() {
        let n = parse(
            r#"{"name":"big","modules":[{"name":"A","w":9,"h":9},{"name":"B","w":1,"h":1}],"nets":[["A","B"]]}"#,
        );
        let mut env = ptr::null_mut();
        let status = unsafe { sgf_env_new(n, 6, 6, 2, &mut env) };
        assert_eq!(status, SgfStatus::InvalidData);
        unsafe { sgf_netlist_free(n) };
    }
}
