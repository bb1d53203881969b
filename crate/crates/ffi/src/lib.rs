//! C ABI over the core solvers. Matrices cross the boundary as row-major
//! `f64` arrays, problems with state live behind opaque handles, and every
//! entry point returns an [`OcrlStatus`] instead of unwinding.

use std::ffi::c_void;
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::DMatrix;

use ocrl::lq::{lqr_discrete_infinite, LinearSystemDiscrete, QuadraticCost};
use ocrl::policy_gradient::newton_raphson_1d;
use ocrl::tabular_rl::{value_iteration, TabularMdp};
use ocrl::testbeds::make_gridworld;
use ocrl::Error;

/// Call outcome. Mirrors the CLI's exit-code numbering, with dedicated codes
/// for boundary misuse.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OcrlStatus {
    Ok = 0,
    /// Invalid problem description or arguments.
    InvalidConfig = 1,
    /// Divergence, non-convergence, or any other numeric failure.
    Numeric = 2,
    Io = 3,
    NullPointer = 4,
    /// A panic was caught at the boundary.
    Panic = 5,
}

fn status_of(err: &Error) -> OcrlStatus {
    match err.exit_code() {
        1 => OcrlStatus::InvalidConfig,
        3 => OcrlStatus::Io,
        _ => OcrlStatus::Numeric,
    }
}

fn guarded(body: impl FnOnce() -> OcrlStatus) -> OcrlStatus {
    catch_unwind(AssertUnwindSafe(body)).unwrap_or(OcrlStatus::Panic)
}

/// Stationary discrete-time Riccati solve for an `n`-state, `m`-input plant.
///
/// `a` is n*n, `b` is n*m, `q` is n*n, `r` is m*m, all row-major. On success
/// the stationary value matrix is written to `s_out` (n*n, row-major) and
/// the gain of the optimal policy u = -Kx to `k_out` (m*n, row-major).
///
/// # Safety
/// All pointers must be non-null and sized as documented.
#[no_mangle]
pub unsafe extern "C" fn ocrl_lqr_discrete_infinite(
    n: usize,
    m: usize,
    a: *const f64,
    b: *const f64,
    q: *const f64,
    r: *const f64,
    s_out: *mut f64,
    k_out: *mut f64,
) -> OcrlStatus {
    if a.is_null() || b.is_null() || q.is_null() || r.is_null() || s_out.is_null() || k_out.is_null()
    {
        return OcrlStatus::NullPointer;
    }
    if n == 0 || m == 0 {
        return OcrlStatus::InvalidConfig;
    }
    let a = DMatrix::from_row_slice(n, n, std::slice::from_raw_parts(a, n * n));
    let b = DMatrix::from_row_slice(n, m, std::slice::from_raw_parts(b, n * m));
    let q = DMatrix::from_row_slice(n, n, std::slice::from_raw_parts(q, n * n));
    let r = DMatrix::from_row_slice(m, m, std::slice::from_raw_parts(r, m * m));
    let s_out = std::slice::from_raw_parts_mut(s_out, n * n);
    let k_out = std::slice::from_raw_parts_mut(k_out, m * n);
    guarded(move || {
        let sys = LinearSystemDiscrete::new(a, b);
        let cost = QuadraticCost::new(q, r, DMatrix::zeros(n, n));
        match lqr_discrete_infinite(&sys, &cost, 1e-12, 100_000) {
            Ok(sol) => {
                for i in 0..n {
                    for j in 0..n {
                        s_out[i * n + j] = sol.s[0][(i, j)];
                    }
                }
                for i in 0..m {
                    for j in 0..n {
                        k_out[i * n + j] = sol.k[0][(i, j)];
                    }
                }
                OcrlStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Opaque finite MDP handle.
pub struct OcrlMdp {
    inner: TabularMdp,
}

/// Builds a `width` x `height` gridworld whose last cell is the absorbing
/// goal and hands back an owned handle through `out`.
///
/// # Safety
/// `out` must be non-null; the handle must be released with
/// [`ocrl_mdp_free`].
#[no_mangle]
pub unsafe extern "C" fn ocrl_gridworld_new(
    width: usize,
    height: usize,
    step_reward: f64,
    goal_reward: f64,
    discount: f64,
    out: *mut *mut OcrlMdp,
) -> OcrlStatus {
    if out.is_null() {
        return OcrlStatus::NullPointer;
    }
    if width * height < 2 || !(0.0..=1.0).contains(&discount) {
        return OcrlStatus::InvalidConfig;
    }
    guarded(move || {
        let goal = width * height - 1;
        let mdp = make_gridworld(width, height, &[goal], step_reward, goal_reward, discount);
        *out = Box::into_raw(Box::new(OcrlMdp { inner: mdp }));
        OcrlStatus::Ok
    })
}

/// Number of states of the MDP behind `handle`, written to `out`.
///
/// # Safety
/// `handle` must come from a constructor in this library and be live.
#[no_mangle]
pub unsafe extern "C" fn ocrl_mdp_num_states(
    handle: *const OcrlMdp,
    out: *mut usize,
) -> OcrlStatus {
    if handle.is_null() || out.is_null() {
        return OcrlStatus::NullPointer;
    }
    *out = (*handle).inner.num_states();
    OcrlStatus::Ok
}

/// Runs value iteration to tolerance `theta` and writes the optimal value
/// of every state to `values_out` and the greedy action index to
/// `actions_out` (both of length `num_states`).
///
/// # Safety
/// `handle` must be live; the output arrays must hold `num_states` entries.
#[no_mangle]
pub unsafe extern "C" fn ocrl_mdp_value_iteration(
    handle: *const OcrlMdp,
    theta: f64,
    values_out: *mut f64,
    actions_out: *mut u32,
) -> OcrlStatus {
    if handle.is_null() || values_out.is_null() || actions_out.is_null() {
        return OcrlStatus::NullPointer;
    }
    let mdp = &(*handle).inner;
    let n = mdp.num_states();
    let values = std::slice::from_raw_parts_mut(values_out, n);
    let actions = std::slice::from_raw_parts_mut(actions_out, n);
    guarded(move || match value_iteration(mdp, theta) {
        Ok((policy, v, converged)) => {
            if !converged {
                return OcrlStatus::Numeric;
            }
            for x in 0..n {
                values[x] = v[x];
                actions[x] = policy[x] as u32;
            }
            OcrlStatus::Ok
        }
        Err(e) => status_of(&e),
    })
}

/// Releases a handle. Passing null is a no-op.
///
/// # Safety
/// `handle` must not be used after this call.
#[no_mangle]
pub unsafe extern "C" fn ocrl_mdp_free(handle: *mut OcrlMdp) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// First/second derivative callback: `f(x, user_data)`.
pub type OcrlScalarFn = extern "C" fn(f64, *mut c_void) -> f64;

/// Newton iteration x <- x - fp(x)/fpp(x) from `x0` until |fp(x)| < tol.
/// The final point goes to `x_out`, the step count to `iters_out`.
///
/// # Safety
/// The callbacks must be safe to call with `user_data`; the output pointers
/// must be non-null.
#[no_mangle]
pub unsafe extern "C" fn ocrl_newton_raphson_1d(
    fp: OcrlScalarFn,
    fpp: OcrlScalarFn,
    user_data: *mut c_void,
    x0: f64,
    max_iters: usize,
    tol: f64,
    x_out: *mut f64,
    iters_out: *mut usize,
) -> OcrlStatus {
    if x_out.is_null() || iters_out.is_null() {
        return OcrlStatus::NullPointer;
    }
    let data = user_data as usize;
    guarded(move || {
        let g = |x: f64| fp(x, data as *mut c_void);
        let h = |x: f64| fpp(x, data as *mut c_void);
        match newton_raphson_1d(&g, &h, x0, max_iters, tol) {
            Ok((x, iters)) => {
                *x_out = x;
                *iters_out = iters;
                OcrlStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}
