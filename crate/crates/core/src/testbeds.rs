//! Canonical problem instances wired for every solver in the suite.

use crate::grid::TimeGrid;
use crate::ilqc::{NonlinearDiscreteSystem, StageCostModel};
use crate::lq::{LinearSystemDiscrete, QuadraticCost};
use crate::path_integral::LmdpProblem;
use crate::sde::ControlAffineSystem;
use nalgebra::{DMatrix, DVector};

pub const GRAVITY: f64 = 9.81;

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

/// Scalar LTI plant with quadratic weights; `r` must be positive.
pub fn make_scalar_lq(a: f64, b: f64, q: f64, r: f64, q_t: f64) -> (LinearSystemDiscrete, QuadraticCost) {
    assert!(r > 0.0, "input weight must be positive");
    (
        LinearSystemDiscrete::new(scalar(a), scalar(b)),
        QuadraticCost::new(scalar(q), scalar(r), scalar(q_t)),
    )
}

/// Exact zero-order-hold discretization of the double integrator xddot = u.
pub fn make_double_integrator(dt: f64) -> LinearSystemDiscrete {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]);
    let b = DMatrix::from_row_slice(2, 1, &[0.5 * dt * dt, dt]);
    LinearSystemDiscrete::new(a, b)
}

/// Euler-discretized damped pendulum,
/// thetaddot = -(g0/l) sin(theta) - damping*thetadot + u/(m l^2),
/// state (theta, thetadot). theta = 0 hangs down; theta = pi is upright.
pub fn make_pendulum(m: f64, l: f64, damping: f64, dt: f64) -> NonlinearDiscreteSystem {
    let inv_inertia = 1.0 / (m * l * l);
    let grav = GRAVITY / l;
    NonlinearDiscreteSystem::new(
        2,
        1,
        Box::new(move |_, x: &DVector<f64>, u: &DVector<f64>| {
            let acc = -grav * x[0].sin() - damping * x[1] + u[0] * inv_inertia;
            DVector::from_vec(vec![x[0] + dt * x[1], x[1] + dt * acc])
        }),
    )
}

/// Swing-up objective for the pendulum testbed: penalize distance from the
/// upright pose (pi, 0) plus input effort.
pub fn pendulum_swingup_cost() -> StageCostModel {
    let target = std::f64::consts::PI;
    StageCostModel::new(
        Box::new(move |_, x: &DVector<f64>, u: &DVector<f64>| {
            0.05 * ((x[0] - target).powi(2) + 0.1 * x[1].powi(2)) + 0.005 * u[0].powi(2)
        }),
        Box::new(move |x: &DVector<f64>| 10.0 * (x[0] - target).powi(2) + 1.0 * x[1].powi(2)),
    )
}

/// Scalar control-affine diffusion dx = (a x + u) dt + dw, dw ~ N(0, sigma2 dt),
/// with cost 1/2 q x^2 + 1/2 r u^2 and terminal 1/2 q_t x^2. In one dimension
/// the weight/noise compatibility R*Sigma = lambda*I holds automatically with
/// lambda = r * sigma2.
pub fn make_lmdp_scalar(
    a: f64,
    sigma2: f64,
    r: f64,
    q: f64,
    q_t: f64,
    horizon: f64,
    dt: f64,
) -> LmdpProblem {
    let sys = ControlAffineSystem::new(
        1,
        1,
        Box::new(move |_, x: &DVector<f64>| x * a),
        Box::new(|_, _: &DVector<f64>| DMatrix::identity(1, 1)),
        scalar(sigma2),
    )
    .expect("scalar diffusion is valid");
    LmdpProblem::new(
        sys,
        scalar(r),
        Box::new(move |_, x: &DVector<f64>| 0.5 * q * x[0] * x[0]),
        Box::new(move |x: &DVector<f64>| 0.5 * q_t * x[0] * x[0]),
        TimeGrid::from_horizon(horizon, dt).expect("positive horizon"),
    )
    .expect("scalar problem satisfies the compatibility condition")
}

/// 1-D reaching task for policy improvement: single integrator
/// dx = u dt + dw starting at 0, heavy terminal penalty on missing the
/// target x = 1 at t = 1 plus a small running distance cost.
pub fn make_reaching_task() -> LmdpProblem {
    let target = 1.0;
    let sys = ControlAffineSystem::new(
        1,
        1,
        Box::new(|_, _: &DVector<f64>| DVector::zeros(1)),
        Box::new(|_, _: &DVector<f64>| DMatrix::identity(1, 1)),
        scalar(0.1),
    )
    .expect("single integrator is valid");
    LmdpProblem::new(
        sys,
        scalar(1.0),
        Box::new(move |_, x: &DVector<f64>| 0.5 * (x[0] - target).powi(2)),
        Box::new(move |x: &DVector<f64>| 20.0 * (x[0] - target).powi(2)),
        TimeGrid::new(0.0, 0.02, 50).expect("valid grid"),
    )
    .expect("reaching task satisfies the compatibility condition")
}

/// Backward RK4 integration of the scalar continuous-time quadratic value
/// recursion -dS/dt = q + 2 a S - S^2 / r with S(T) = q_t, returned at the
/// nodes of a uniform grid over [0, horizon] (index 0 is t = 0).
pub fn scalar_lq_riccati_schedule(
    a: f64,
    r: f64,
    q: f64,
    q_t: f64,
    horizon: f64,
    dt: f64,
) -> Vec<f64> {
    let steps = (horizon / dt).round().max(1.0) as usize;
    // refine each output interval for the integrator
    let sub = 20;
    let h = dt / sub as f64;
    let rhs = |s: f64| q + 2.0 * a * s - s * s / r;
    let mut s = q_t;
    let mut out = vec![0.0; steps + 1];
    out[steps] = s;
    for i in (0..steps).rev() {
        for _ in 0..sub {
            let k1 = rhs(s);
            let k2 = rhs(s + 0.5 * h * k1);
            let k3 = rhs(s + 0.5 * h * k2);
            let k4 = rhs(s + h * k3);
            s += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        out[i] = s;
    }
    out
}

/// S(0) of the scalar quadratic value recursion, on a fine internal grid.
pub fn scalar_lq_riccati_s0(a: f64, r: f64, q: f64, q_t: f64, horizon: f64) -> f64 {
    scalar_lq_riccati_schedule(a, r, q, q_t, horizon, 1e-3)[0]
}

/// Optimal feedback gains k(t_i) = S(t_i)/r on the given grid; the input
/// law is u = -k(t) x.
pub fn scalar_lq_gain_schedule(a: f64, r: f64, q: f64, q_t: f64, horizon: f64, dt: f64) -> Vec<f64> {
    scalar_lq_riccati_schedule(a, r, q, q_t, horizon, dt)
        .into_iter()
        .map(|s| s / r)
        .collect()
}

/// Exact cost-to-go of the scalar stochastic problem from (0, x0):
/// 1/2 S(0) x0^2 plus the noise-induced offset 1/2 sigma2 * integral of S.
pub fn scalar_lq_value(
    a: f64,
    sigma2: f64,
    r: f64,
    q: f64,
    q_t: f64,
    horizon: f64,
    x0: f64,
) -> f64 {
    let dt = 1e-3;
    let s = scalar_lq_riccati_schedule(a, r, q, q_t, horizon, dt);
    // trapezoidal offset integral
    let mut offset = 0.0;
    for w in s.windows(2) {
        offset += 0.5 * sigma2 * 0.5 * (w[0] + w[1]) * dt;
    }
    0.5 * s[0] * x0 * x0 + offset
}

/// Deterministic gridworld MDP with 4 actions (N, S, E, W). Moving into a
/// wall leaves the state unchanged; terminal cells are absorbing with zero
/// self-reward. Entering a terminal cell pays `goal_reward`, every other
/// move pays `step_reward`.
pub fn make_gridworld(
    width: usize,
    height: usize,
    terminals: &[usize],
    step_reward: f64,
    goal_reward: f64,
    discount: f64,
) -> crate::tabular_rl::TabularMdp {
    let n = width * height;
    let actions = 4usize;
    let mut p = vec![DMatrix::zeros(n, n); actions];
    let mut r = vec![DMatrix::zeros(n, n); actions];
    let mut terminal = vec![false; n];
    for &t in terminals {
        terminal[t] = true;
    }
    for s in 0..n {
        let (x, y) = (s % width, s / width);
        for (u, p_mat) in p.iter_mut().enumerate() {
            if terminal[s] {
                p_mat[(s, s)] = 1.0;
                continue;
            }
            // 0 = N (y-1), 1 = S (y+1), 2 = E (x+1), 3 = W (x-1)
            let (nx, ny) = match u {
                0 => (x as isize, y as isize - 1),
                1 => (x as isize, y as isize + 1),
                2 => (x as isize + 1, y as isize),
                _ => (x as isize - 1, y as isize),
            };
            let next = if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                s
            } else {
                ny as usize * width + nx as usize
            };
            p_mat[(s, next)] = 1.0;
            r[u][(s, next)] = if terminal[next] { goal_reward } else { step_reward };
        }
    }
    crate::tabular_rl::TabularMdp::new(p, r, discount, terminal).expect("gridworld construction is valid")
}
