//! Linear-quadratic solvers: LQR and LQG, discrete and continuous time,
//! finite and infinite horizon.
//!
//! Conventions. The discrete plant is x_{n+1} = A x_n + B u_n (+ C w_n with
//! unit white noise w for the stochastic variants); the continuous one is
//! xdot = A x + B u (+ C w). The stage cost is
//! ```text
//! L = 1/2 x'Qx + u'Px + 1/2 u'Ru,    terminal 1/2 x'Q_N x
//! ```
//! with Q PSD, R PD, and cross term P (m×n). Discrete stochastic costs carry
//! a discount alpha in (0,1]; continuous ones a decay beta >= 0. The value
//! function ansatz is 1/2 x'Sx + upsilon, and gains are stored so that the
//! optimal policy is u = -K x.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::{is_symmetric, min_symmetric_eigenvalue, symmetrize};
use nalgebra::DMatrix;

/// A matrix that is either constant over the horizon or varies per step.
#[derive(Debug, Clone)]
pub enum Seq {
    Constant(DMatrix<f64>),
    Varying(Vec<DMatrix<f64>>),
}

impl Seq {
    pub fn at(&self, n: usize) -> &DMatrix<f64> {
        match self {
            Seq::Constant(m) => m,
            Seq::Varying(v) => &v[n],
        }
    }

    fn first(&self) -> &DMatrix<f64> {
        self.at(0)
    }

    fn is_constant(&self) -> bool {
        matches!(self, Seq::Constant(_))
    }
}

impl From<DMatrix<f64>> for Seq {
    fn from(m: DMatrix<f64>) -> Self {
        Seq::Constant(m)
    }
}

/// Discrete-time (possibly time-varying) linear plant. `c` maps unit white
/// noise into the state; leaving it out gives the deterministic LQR case.
#[derive(Debug, Clone)]
pub struct LinearSystemDiscrete {
    pub a: Seq,
    pub b: Seq,
    pub c: Option<Seq>,
}

impl LinearSystemDiscrete {
    pub fn new(a: impl Into<Seq>, b: impl Into<Seq>) -> Self {
        LinearSystemDiscrete { a: a.into(), b: b.into(), c: None }
    }

    pub fn with_noise(mut self, c: impl Into<Seq>) -> Self {
        self.c = Some(c.into());
        self
    }

    pub fn state_dim(&self) -> usize {
        self.a.first().nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.first().ncols()
    }

    fn validate(&self, horizon: usize) -> Result<()> {
        let n = self.state_dim();
        let m = self.input_dim();
        for i in 0..horizon {
            let a = self.a.at(i);
            let b = self.b.at(i);
            if a.nrows() != n || a.ncols() != n {
                return Err(Error::Dimension(format!("A_{i} is {}x{}, expected {n}x{n}", a.nrows(), a.ncols())));
            }
            if b.nrows() != n || b.ncols() != m {
                return Err(Error::Dimension(format!("B_{i} is {}x{}, expected {n}x{m}", b.nrows(), b.ncols())));
            }
            if let Some(c) = &self.c {
                if c.at(i).nrows() != n {
                    return Err(Error::Dimension(format!("C_{i} has {} rows, expected {n}", c.at(i).nrows())));
                }
            }
        }
        Ok(())
    }
}

/// Continuous-time linear plant given by matrix-valued functions of time.
pub struct LinearSystemContinuous {
    pub a: Box<dyn Fn(f64) -> DMatrix<f64> + Sync>,
    pub b: Box<dyn Fn(f64) -> DMatrix<f64> + Sync>,
    pub c: Option<Box<dyn Fn(f64) -> DMatrix<f64> + Sync>>,
}

impl LinearSystemContinuous {
    pub fn constant(a: DMatrix<f64>, b: DMatrix<f64>) -> Self {
        LinearSystemContinuous {
            a: Box::new(move |_| a.clone()),
            b: Box::new(move |_| b.clone()),
            c: None,
        }
    }

    pub fn with_noise(mut self, c: DMatrix<f64>) -> Self {
        self.c = Some(Box::new(move |_| c.clone()));
        self
    }
}

/// Quadratic cost weights. `alpha` discounts discrete stochastic problems,
/// `beta` is the continuous-time decay rate.
#[derive(Debug, Clone)]
pub struct QuadraticCost {
    pub q: Seq,
    pub r: Seq,
    pub p: Seq,
    pub q_terminal: DMatrix<f64>,
    pub alpha: f64,
    pub beta: f64,
}

impl QuadraticCost {
    pub fn new(q: impl Into<Seq>, r: impl Into<Seq>, q_terminal: DMatrix<f64>) -> Self {
        let q = q.into();
        let r = r.into();
        let (m, n) = (r.first().nrows(), q.first().nrows());
        QuadraticCost { q, r, p: Seq::Constant(DMatrix::zeros(m, n)), q_terminal, alpha: 1.0, beta: 0.0 }
    }

    pub fn with_cross_term(mut self, p: impl Into<Seq>) -> Self {
        self.p = p.into();
        self
    }

    pub fn with_discount(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_decay(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    /// Symmetry/definiteness checks on the weight matrices.
    pub fn validate(&self, horizon: usize) -> Result<()> {
        let check_psd = |m: &DMatrix<f64>, name: &str| -> Result<()> {
            if !is_symmetric(m, 1e-10) {
                return Err(Error::InvalidSpec(format!("{name} must be symmetric")));
            }
            if min_symmetric_eigenvalue(m) < -1e-8 {
                return Err(Error::InvalidSpec(format!("{name} must be positive semidefinite")));
            }
            Ok(())
        };
        let steps = if self.q.is_constant() && self.r.is_constant() { 1 } else { horizon };
        for i in 0..steps {
            check_psd(self.q.at(i), "state weight Q")?;
            let r = self.r.at(i);
            if !is_symmetric(r, 1e-10) {
                return Err(Error::InvalidSpec("input weight R must be symmetric".into()));
            }
            if min_symmetric_eigenvalue(r) <= 0.0 {
                return Err(Error::InvalidSpec("input weight R must be positive definite".into()));
            }
        }
        check_psd(&self.q_terminal, "terminal weight")?;
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!("discount must be in (0,1], got {}", self.alpha)));
        }
        if self.beta < 0.0 {
            return Err(Error::InvalidArgument(format!("decay must be nonnegative, got {}", self.beta)));
        }
        Ok(())
    }
}

/// Output of any of the eight solvers. Finite-horizon solvers fill one entry
/// per step (S has horizon+1, gains have horizon); infinite-horizon solvers
/// return single-element vectors.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    /// Value matrices, S_0..S_N (or the stationary S).
    pub s: Vec<DMatrix<f64>>,
    /// Gains K_n with optimal policy u = -K_n x.
    pub k: Vec<DMatrix<f64>>,
    /// Stochastic value offsets; all zero for LQR.
    pub upsilon: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn gain_and_next_s(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
    s_next: &DMatrix<f64>,
    alpha: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let bts = b.transpose() * s_next;
    let h = r + (&bts * b).scale(alpha);
    let g = p + (&bts * a).scale(alpha);
    let h_inv = h
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidSpec("R + B'SB is not positive definite".into()))?;
    let k = h_inv.solve(&g);
    let mut s = q + (a.transpose() * s_next * a).scale(alpha) - g.transpose() * &k;
    symmetrize(&mut s);
    Ok((k, s))
}

/// Finite-horizon discrete LQR: backward recursion from S_N = Q_N.
pub fn lqr_discrete_finite(
    sys: &LinearSystemDiscrete,
    cost: &QuadraticCost,
    horizon: usize,
) -> Result<RiccatiSolution> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    sys.validate(horizon)?;
    cost.validate(horizon)?;
    let mut s = vec![DMatrix::zeros(0, 0); horizon + 1];
    let mut k = vec![DMatrix::zeros(0, 0); horizon];
    s[horizon] = cost.q_terminal.clone();
    for n in (0..horizon).rev() {
        let (kn, sn) = gain_and_next_s(
            sys.a.at(n),
            sys.b.at(n),
            cost.q.at(n),
            cost.r.at(n),
            cost.p.at(n),
            &s[n + 1],
            1.0,
        )?;
        k[n] = kn;
        s[n] = sn;
    }
    Ok(RiccatiSolution { s, k, upsilon: vec![0.0; horizon + 1], iterations: horizon, residual: 0.0 })
}

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 100_000;

fn discrete_fixed_point(
    sys: &LinearSystemDiscrete,
    cost: &QuadraticCost,
    alpha: f64,
    tol: f64,
    max_iters: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>, usize, f64)> {
    sys.validate(1)?;
    cost.validate(1)?;
    let (a, b) = (sys.a.first(), sys.b.first());
    let (q, r, p) = (cost.q.first(), cost.r.first(), cost.p.first());
    let mut s = DMatrix::zeros(a.nrows(), a.ncols());
    let mut residual = f64::INFINITY;
    for it in 1..=max_iters {
        let (k, s_new) = gain_and_next_s(a, b, q, r, p, &s, alpha)?;
        residual = crate::linalg::max_abs(&(&s_new - &s));
        if !residual.is_finite() {
            return Err(Error::NoConvergence { iters: it, residual });
        }
        s = s_new;
        if residual < tol {
            return Ok((s, k, it, residual));
        }
    }
    Err(Error::NoConvergence { iters: max_iters, residual })
}

/// Infinite-horizon discrete LQR: the recursion is iterated to its fixed
/// point (the discrete algebraic Riccati solution).
pub fn lqr_discrete_infinite(
    sys: &LinearSystemDiscrete,
    cost: &QuadraticCost,
    tol: f64,
    max_iters: usize,
) -> Result<RiccatiSolution> {
    let (s, k, iterations, residual) = discrete_fixed_point(sys, cost, 1.0, tol, max_iters)?;
    Ok(RiccatiSolution { s: vec![s], k: vec![k], upsilon: vec![0.0], iterations, residual })
}

/// Finite-horizon discrete LQG: alpha-weighted recursion plus the value
/// offset upsilon_n = alpha/2 Tr(S_{n+1} C C') + alpha upsilon_{n+1}.
pub fn lqg_discrete_finite(
    sys: &LinearSystemDiscrete,
    cost: &QuadraticCost,
    horizon: usize,
) -> Result<RiccatiSolution> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    sys.validate(horizon)?;
    cost.validate(horizon)?;
    let alpha = cost.alpha;
    let mut s = vec![DMatrix::zeros(0, 0); horizon + 1];
    let mut k = vec![DMatrix::zeros(0, 0); horizon];
    let mut upsilon = vec![0.0; horizon + 1];
    s[horizon] = cost.q_terminal.clone();
    for n in (0..horizon).rev() {
        let (kn, sn) = gain_and_next_s(
            sys.a.at(n),
            sys.b.at(n),
            cost.q.at(n),
            cost.r.at(n),
            cost.p.at(n),
            &s[n + 1],
            alpha,
        )?;
        k[n] = kn;
        s[n] = sn;
        let noise = match &sys.c {
            Some(c) => {
                let cn = c.at(n);
                (&s[n + 1] * cn * cn.transpose()).trace()
            }
            None => 0.0,
        };
        upsilon[n] = 0.5 * alpha * noise + alpha * upsilon[n + 1];
    }
    Ok(RiccatiSolution { s, k, upsilon, iterations: horizon, residual: 0.0 })
}

/// Infinite-horizon discrete LQG. Needs alpha strictly below 1, otherwise the
/// noise offset grows without bound; upsilon = alpha/(2(1-alpha)) Tr(S CC').
pub fn lqg_discrete_infinite(
    sys: &LinearSystemDiscrete,
    cost: &QuadraticCost,
    tol: f64,
    max_iters: usize,
) -> Result<RiccatiSolution> {
    let alpha = cost.alpha;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "discount must satisfy 0 < alpha < 1 for an infinite horizon (upsilon is unbounded at alpha = 1); got {alpha}"
        )));
    }
    let (s, k, iterations, residual) = discrete_fixed_point(sys, cost, alpha, tol, max_iters)?;
    let noise = match &sys.c {
        Some(c) => {
            let cn = c.first();
            (&s * cn * cn.transpose()).trace()
        }
        None => 0.0,
    };
    let upsilon = alpha / (2.0 * (1.0 - alpha)) * noise;
    Ok(RiccatiSolution { s: vec![s], k: vec![k], upsilon: vec![upsilon], iterations, residual })
}

/// Right-hand side of the backward value ODEs:
/// Sdot = beta S - SA - A'S + (P + B'S)' R^{-1} (P + B'S) - Q
/// upsdot = beta ups - 1/2 Tr(S C C')
fn riccati_rhs(
    s: &DMatrix<f64>,
    ups: f64,
    t: f64,
    sys: &LinearSystemContinuous,
    q: &DMatrix<f64>,
    r_chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
    p: &DMatrix<f64>,
    beta: f64,
) -> (DMatrix<f64>, f64) {
    let a = (sys.a)(t);
    let b = (sys.b)(t);
    let m = p + b.transpose() * s;
    let quad = m.transpose() * r_chol.solve(&m);
    let mut ds = s.scale(beta) - s * &a - a.transpose() * s + quad - q;
    symmetrize(&mut ds);
    let dups = match &sys.c {
        Some(c) => {
            let cm = c(t);
            beta * ups - 0.5 * (s * &cm * cm.transpose()).trace()
        }
        None => beta * ups,
    };
    (ds, dups)
}

fn integrate_backward(
    sys: &LinearSystemContinuous,
    cost: &QuadraticCost,
    grid: &TimeGrid,
    beta: f64,
) -> Result<(Vec<DMatrix<f64>>, Vec<f64>)> {
    cost.validate(1)?;
    let q = cost.q.first().clone();
    let p = cost.p.first().clone();
    let r_chol = cost
        .r
        .first()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidSpec("input weight R must be positive definite".into()))?;
    let n = grid.steps;
    let mut s_traj = vec![DMatrix::zeros(0, 0); n + 1];
    let mut ups_traj = vec![0.0; n + 1];
    s_traj[n] = cost.q_terminal.clone();
    let h = grid.dt;
    for i in (0..n).rev() {
        // RK4 step backward in time from t_{i+1} to t_i
        let t1 = grid.time(i + 1);
        let s1 = &s_traj[i + 1];
        let u1 = ups_traj[i + 1];
        let rhs = |s: &DMatrix<f64>, u: f64, t: f64| riccati_rhs(s, u, t, sys, &q, &r_chol, &p, beta);
        let (k1, l1) = rhs(s1, u1, t1);
        let (k2, l2) = rhs(&(s1 - k1.scale(0.5 * h)), u1 - 0.5 * h * l1, t1 - 0.5 * h);
        let (k3, l3) = rhs(&(s1 - k2.scale(0.5 * h)), u1 - 0.5 * h * l2, t1 - 0.5 * h);
        let (k4, l4) = rhs(&(s1 - k3.scale(h)), u1 - h * l3, t1 - h);
        let mut s_new = s1 - (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(h / 6.0);
        symmetrize(&mut s_new);
        let ups_new = u1 - h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
        if !s_new.iter().all(|v| v.is_finite()) || crate::linalg::max_abs(&s_new) > 1e12 {
            return Err(Error::FiniteEscape { t: grid.time(i) });
        }
        s_traj[i] = s_new;
        ups_traj[i] = ups_new;
    }
    Ok((s_traj, ups_traj))
}

fn gains_from_s(
    sys: &LinearSystemContinuous,
    cost: &QuadraticCost,
    grid: &TimeGrid,
    s_traj: &[DMatrix<f64>],
) -> Vec<DMatrix<f64>> {
    let p = cost.p.first().clone();
    let r_chol = cost.r.first().clone().cholesky().expect("validated");
    s_traj
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let b = (sys.b)(grid.time(i));
            r_chol.solve(&(&p + b.transpose() * s))
        })
        .collect()
}

/// Finite-horizon continuous LQR: RK4 backward integration from S(T) = Q_T.
/// S and K are sampled at every grid node.
pub fn lqr_continuous_finite(
    sys: &LinearSystemContinuous,
    cost: &QuadraticCost,
    grid: &TimeGrid,
) -> Result<RiccatiSolution> {
    let (s_traj, _) = integrate_backward(sys, cost, grid, 0.0)?;
    let k = gains_from_s(sys, cost, grid, &s_traj);
    Ok(RiccatiSolution {
        upsilon: vec![0.0; s_traj.len()],
        k,
        s: s_traj,
        iterations: grid.steps,
        residual: 0.0,
    })
}

/// Residual of the continuous algebraic Riccati equation (beta-shifted).
fn care_residual(
    s: &DMatrix<f64>,
    sys: &LinearSystemContinuous,
    cost: &QuadraticCost,
    beta: f64,
) -> f64 {
    let a = (sys.a)(0.0);
    let b = (sys.b)(0.0);
    let p = cost.p.first();
    let r_chol = cost.r.first().clone().cholesky().expect("validated");
    let m = p + b.transpose() * s;
    let res = s * &a + a.transpose() * s - m.transpose() * r_chol.solve(&m) + cost.q.first()
        - s.scale(beta);
    crate::linalg::max_abs(&res)
}

fn continuous_stationary(
    sys: &LinearSystemContinuous,
    cost: &QuadraticCost,
    beta: f64,
    tol: f64,
) -> Result<(DMatrix<f64>, usize, f64)> {
    cost.validate(1)?;
    let q = cost.q.first().clone();
    let p = cost.p.first().clone();
    let r_chol = cost
        .r
        .first()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidSpec("input weight R must be positive definite".into()))?;
    let n = q.nrows();
    let mut s = DMatrix::<f64>::zeros(n, n);
    let h = 0.01;
    let max_iters = 10_000_000;
    let mut residual = f64::INFINITY;
    for it in 1..=max_iters {
        let rhs = |s: &DMatrix<f64>| riccati_rhs(s, 0.0, 0.0, sys, &q, &r_chol, &p, beta).0;
        let k1 = rhs(&s);
        let k2 = rhs(&(&s - k1.scale(0.5 * h)));
        let k3 = rhs(&(&s - k2.scale(0.5 * h)));
        let k4 = rhs(&(&s - k3.scale(h)));
        s -= (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(h / 6.0);
        symmetrize(&mut s);
        if !s.iter().all(|v| v.is_finite()) || crate::linalg::max_abs(&s) > 1e12 {
            return Err(Error::NoConvergence { iters: it, residual: f64::INFINITY });
        }
        if it % 10 == 0 || it == 1 {
            residual = care_residual(&s, sys, cost, beta);
            if residual < tol {
                return Ok((s, it, residual));
            }
        }
    }
    Err(Error::NoConvergence { iters: max_iters, residual })
}

/// Infinite-horizon continuous LQR: backward integration to stationarity;
/// the returned S satisfies the algebraic equation to within `tol`.
pub fn lqr_continuous_infinite(
    sys: &LinearSystemContinuous,
    cost: &QuadraticCost,
    tol: f64,
) -> Result<RiccatiSolution> {
    let (s, iterations, residual) = continuous_stationary(sys, cost, 0.0, tol)?;
    let b = (sys.b)(0.0);
    let r_chol = cost.r.first().clone().cholesky().expect("validated");
    let k = r_chol.solve(&(cost.p.first() + b.transpose() * &s));
    Ok(RiccatiSolution { s: vec![s], k: vec![k], upsilon: vec![0.0], iterations, residual })
}

/// Finite-horizon continuous LQG: S(t) follows the same Riccati ODE as LQR
/// (with optional decay beta); upsilon integrates 1/2 Tr(S CC') backward
/// from upsilon(T) = 0.
pub fn lqg_continuous_finite(
    sys: &LinearSystemContinuous,
    cost: &QuadraticCost,
    grid: &TimeGrid,
) -> Result<RiccatiSolution> {
    let (s_traj, ups) = integrate_backward(sys, cost, grid, cost.beta)?;
    let k = gains_from_s(sys, cost, grid, &s_traj);
    Ok(RiccatiSolution { k, upsilon: ups, s: s_traj, iterations: grid.steps, residual: 0.0 })
}

/// Infinite-horizon continuous LQG: needs decay beta > 0; the stationary S
/// solves the beta-shifted algebraic equation and
/// upsilon = Tr(S CC')/(2 beta).
pub fn lqg_continuous_infinite(
    sys: &LinearSystemContinuous,
    cost: &QuadraticCost,
    tol: f64,
) -> Result<RiccatiSolution> {
    let beta = cost.beta;
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "decay must be strictly positive for an infinite horizon (upsilon is unbounded at beta = 0); got {beta}"
        )));
    }
    let (s, iterations, residual) = continuous_stationary(sys, cost, beta, tol)?;
    let b = (sys.b)(0.0);
    let r_chol = cost.r.first().clone().cholesky().expect("validated");
    let k = r_chol.solve(&(cost.p.first() + b.transpose() * &s));
    let upsilon = match &sys.c {
        Some(c) => {
            let cm = c(0.0);
            (&s * &cm * cm.transpose()).trace() / (2.0 * beta)
        }
        None => 0.0,
    };
    Ok(RiccatiSolution { s: vec![s], k: vec![k], upsilon: vec![upsilon], iterations, residual })
}

/// Exact closed-loop quadratic cost of the policy u = -K x for a
/// deterministic discrete plant: returns M with J(x0) = 1/2 x0' M x0.
/// Used as an independent oracle for gain optimality.
pub fn discrete_policy_cost_matrix(
    sys: &LinearSystemDiscrete,
    cost: &QuadraticCost,
    gains: &[DMatrix<f64>],
) -> DMatrix<f64> {
    let horizon = gains.len();
    let mut m = cost.q_terminal.clone();
    for n in (0..horizon).rev() {
        let a = sys.a.at(n);
        let b = sys.b.at(n);
        let k = &gains[n];
        let a_cl = a - b * k;
        let p = cost.p.at(n);
        let cross = k.transpose() * p;
        let mut next = cost.q.at(n) + k.transpose() * cost.r.at(n) * k - &cross - cross.transpose()
            + a_cl.transpose() * m * a_cl;
        symmetrize(&mut next);
        m = next;
    }
    m
}
