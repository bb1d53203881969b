//! Iterative linear-quadratic control for nonlinear discrete-time
//! deterministic systems: rollout, local LQ approximation, backward pass with
//! regularization, and the main iteration with backtracking line search.

use crate::error::{Error, Result};
use crate::linalg::{max_abs_vec, symmetrize};
use nalgebra::{DMatrix, DVector};

/// Nonlinear step map x_{n+1} = f_n(x, u). Analytic Jacobians are optional;
/// absent ones are replaced by central finite differences with relative step
/// `fd_step * (1 + |value|)`.
pub struct NonlinearDiscreteSystem {
    pub state_dim: usize,
    pub input_dim: usize,
    pub step: Box<dyn Fn(usize, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Sync>,
    pub jac_x: Option<Box<dyn Fn(usize, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Sync>>,
    pub jac_u: Option<Box<dyn Fn(usize, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Sync>>,
    pub fd_step: f64,
}

pub const FD_STEP_DEFAULT: f64 = 1e-5;

impl NonlinearDiscreteSystem {
    pub fn new(
        state_dim: usize,
        input_dim: usize,
        step: Box<dyn Fn(usize, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Sync>,
    ) -> Self {
        NonlinearDiscreteSystem { state_dim, input_dim, step, jac_x: None, jac_u: None, fd_step: FD_STEP_DEFAULT }
    }

    /// Wrap a constant linear plant x' = Ax + Bu with exact Jacobians.
    pub fn linear(a: DMatrix<f64>, b: DMatrix<f64>) -> Self {
        let (n, m) = (a.nrows(), b.ncols());
        let (a2, b2) = (a.clone(), b.clone());
        NonlinearDiscreteSystem {
            state_dim: n,
            input_dim: m,
            step: Box::new(move |_, x, u| &a * x + &b * u),
            jac_x: Some(Box::new(move |_, _, _| a2.clone())),
            jac_u: Some(Box::new(move |_, _, _| b2.clone())),
            fd_step: FD_STEP_DEFAULT,
        }
    }

    pub fn jacobian_x(&self, n: usize, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        if let Some(j) = &self.jac_x {
            return j(n, x, u);
        }
        fd_jacobian(self.state_dim, x, self.fd_step, |xp| (self.step)(n, xp, u))
    }

    pub fn jacobian_u(&self, n: usize, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        if let Some(j) = &self.jac_u {
            return j(n, x, u);
        }
        fd_jacobian(self.state_dim, u, self.fd_step, |up| (self.step)(n, x, up))
    }
}

fn fd_jacobian(
    out_dim: usize,
    at: &DVector<f64>,
    rel_h: f64,
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
) -> DMatrix<f64> {
    let p = at.len();
    let mut jac = DMatrix::zeros(out_dim, p);
    for j in 0..p {
        let h = rel_h * (1.0 + at[j].abs());
        let mut hi = at.clone();
        let mut lo = at.clone();
        hi[j] += h;
        lo[j] -= h;
        let col = (f(&hi) - f(&lo)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

/// Second-order expansion of one stage cost around a nominal point:
/// L ≈ q0 + qx'dx + ru'du + 1/2 dx'Qxx dx + du'Pux dx + 1/2 du'Ruu du.
#[derive(Debug, Clone)]
pub struct StageQuadratic {
    pub q0: f64,
    pub qx: DVector<f64>,
    pub qxx: DMatrix<f64>,
    pub ru: DVector<f64>,
    pub ruu: DMatrix<f64>,
    pub pux: DMatrix<f64>,
}

/// Terminal expansion Phi ≈ q0 + qx'dx + 1/2 dx'Qxx dx.
#[derive(Debug, Clone)]
pub struct TerminalQuadratic {
    pub q0: f64,
    pub qx: DVector<f64>,
    pub qxx: DMatrix<f64>,
}

/// Stage and terminal cost evaluators with optional analytic expansions;
/// missing expansions are built by central finite differences.
pub struct StageCostModel {
    pub stage: Box<dyn Fn(usize, &DVector<f64>, &DVector<f64>) -> f64 + Sync>,
    pub terminal: Box<dyn Fn(&DVector<f64>) -> f64 + Sync>,
    pub stage_quadratic:
        Option<Box<dyn Fn(usize, &DVector<f64>, &DVector<f64>) -> StageQuadratic + Sync>>,
    pub terminal_quadratic: Option<Box<dyn Fn(&DVector<f64>) -> TerminalQuadratic + Sync>>,
    pub fd_step: f64,
}

impl StageCostModel {
    pub fn new(
        stage: Box<dyn Fn(usize, &DVector<f64>, &DVector<f64>) -> f64 + Sync>,
        terminal: Box<dyn Fn(&DVector<f64>) -> f64 + Sync>,
    ) -> Self {
        StageCostModel { stage, terminal, stage_quadratic: None, terminal_quadratic: None, fd_step: FD_STEP_DEFAULT }
    }

    /// Pure quadratic cost 1/2 x'Qx + 1/2 u'Ru (+ terminal), with exact expansions.
    pub fn quadratic(q: DMatrix<f64>, r: DMatrix<f64>, q_terminal: DMatrix<f64>) -> Self {
        let (q2, r2, qt2) = (q.clone(), r.clone(), q_terminal.clone());
        StageCostModel {
            stage: Box::new(move |_, x, u| 0.5 * (x.dot(&(&q * x)) + u.dot(&(&r * u)))),
            terminal: Box::new(move |x| 0.5 * x.dot(&(&q_terminal * x))),
            stage_quadratic: Some(Box::new(move |_, x, u| StageQuadratic {
                q0: 0.5 * (x.dot(&(&q2 * x)) + u.dot(&(&r2 * u))),
                qx: &q2 * x,
                qxx: q2.clone(),
                ru: &r2 * u,
                ruu: r2.clone(),
                pux: DMatrix::zeros(r2.nrows(), q2.nrows()),
            })),
            terminal_quadratic: Some(Box::new(move |x| TerminalQuadratic {
                q0: 0.5 * x.dot(&(&qt2 * x)),
                qx: &qt2 * x,
                qxx: qt2.clone(),
            })),
            fd_step: FD_STEP_DEFAULT,
        }
    }

    pub fn expand_stage(&self, n: usize, x: &DVector<f64>, u: &DVector<f64>) -> StageQuadratic {
        if let Some(f) = &self.stage_quadratic {
            return f(n, x, u);
        }
        let l = |x: &DVector<f64>, u: &DVector<f64>| (self.stage)(n, x, u);
        let q0 = l(x, u);
        let qx = fd_gradient(x, self.fd_step, |xp| l(xp, u));
        let ru = fd_gradient(u, self.fd_step, |up| l(x, up));
        let qxx = fd_hessian(x, self.fd_step, |xp| l(xp, u));
        let ruu = fd_hessian(u, self.fd_step, |up| l(x, up));
        let pux = fd_cross_hessian(x, u, self.fd_step, &l);
        StageQuadratic { q0, qx, qxx, ru, ruu, pux }
    }

    pub fn expand_terminal(&self, x: &DVector<f64>) -> TerminalQuadratic {
        if let Some(f) = &self.terminal_quadratic {
            return f(x);
        }
        let q0 = (self.terminal)(x);
        let qx = fd_gradient(x, self.fd_step, |xp| (self.terminal)(xp));
        let qxx = fd_hessian(x, self.fd_step, |xp| (self.terminal)(xp));
        TerminalQuadratic { q0, qx, qxx }
    }
}

fn fd_gradient(at: &DVector<f64>, rel_h: f64, f: impl Fn(&DVector<f64>) -> f64) -> DVector<f64> {
    DVector::from_fn(at.len(), |j, _| {
        let h = rel_h * (1.0 + at[j].abs());
        let mut hi = at.clone();
        let mut lo = at.clone();
        hi[j] += h;
        lo[j] -= h;
        (f(&hi) - f(&lo)) / (2.0 * h)
    })
}

fn fd_hessian(at: &DVector<f64>, rel_h: f64, f: impl Fn(&DVector<f64>) -> f64) -> DMatrix<f64> {
    let p = at.len();
    let f0 = f(at);
    let mut hess = DMatrix::zeros(p, p);
    let hs: Vec<f64> = (0..p).map(|j| rel_h.sqrt() * (1.0 + at[j].abs())).collect();
    for i in 0..p {
        for j in i..p {
            let v = if i == j {
                let mut hi = at.clone();
                let mut lo = at.clone();
                hi[i] += hs[i];
                lo[i] -= hs[i];
                (f(&hi) - 2.0 * f0 + f(&lo)) / (hs[i] * hs[i])
            } else {
                let mut pp = at.clone();
                let mut pm = at.clone();
                let mut mp = at.clone();
                let mut mm = at.clone();
                pp[i] += hs[i];
                pp[j] += hs[j];
                pm[i] += hs[i];
                pm[j] -= hs[j];
                mp[i] -= hs[i];
                mp[j] += hs[j];
                mm[i] -= hs[i];
                mm[j] -= hs[j];
                (f(&pp) - f(&pm) - f(&mp) + f(&mm)) / (4.0 * hs[i] * hs[j])
            };
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

fn fd_cross_hessian(
    x: &DVector<f64>,
    u: &DVector<f64>,
    rel_h: f64,
    f: &impl Fn(&DVector<f64>, &DVector<f64>) -> f64,
) -> DMatrix<f64> {
    // d2L/du dx, rows over u, columns over x
    let (n, m) = (x.len(), u.len());
    let mut out = DMatrix::zeros(m, n);
    let hr = rel_h.sqrt();
    for a in 0..m {
        for b in 0..n {
            let hu = hr * (1.0 + u[a].abs());
            let hx = hr * (1.0 + x[b].abs());
            let mut up = u.clone();
            let mut um = u.clone();
            up[a] += hu;
            um[a] -= hu;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[b] += hx;
            xm[b] -= hx;
            out[(a, b)] = (f(&xp, &up) - f(&xm, &up) - f(&xp, &um) + f(&xm, &um)) / (4.0 * hu * hx);
        }
    }
    out
}

/// Time-varying affine policy u(n, x) = u_nom_n + uff_n + K_n (x - x_nom_n).
#[derive(Debug, Clone)]
pub struct AffinePolicy {
    pub x_nom: Vec<DVector<f64>>,
    pub u_nom: Vec<DVector<f64>>,
    pub uff: Vec<DVector<f64>>,
    pub k: Vec<DMatrix<f64>>,
}

impl AffinePolicy {
    /// Open-loop zero policy over `horizon` steps.
    pub fn zero(state_dim: usize, input_dim: usize, horizon: usize) -> Self {
        AffinePolicy {
            x_nom: vec![DVector::zeros(state_dim); horizon + 1],
            u_nom: vec![DVector::zeros(input_dim); horizon],
            uff: vec![DVector::zeros(input_dim); horizon],
            k: vec![DMatrix::zeros(input_dim, state_dim); horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.u_nom.len()
    }

    pub fn input(&self, n: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.u_nom[n] + &self.uff[n] + &self.k[n] * (x - &self.x_nom[n])
    }
}

/// Apply the policy to the nonlinear plant and accumulate the cost.
pub fn rollout(
    sys: &NonlinearDiscreteSystem,
    cost: &StageCostModel,
    policy: &AffinePolicy,
    x0: &DVector<f64>,
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>, f64)> {
    let horizon = policy.horizon();
    let mut xs = Vec::with_capacity(horizon + 1);
    let mut us = Vec::with_capacity(horizon);
    let mut j = 0.0;
    let mut x = x0.clone();
    xs.push(x.clone());
    for n in 0..horizon {
        let u = policy.input(n, &x);
        j += (cost.stage)(n, &x, &u);
        x = (sys.step)(n, &x, &u);
        if x.iter().any(|v| !v.is_finite()) || !j.is_finite() {
            return Err(Error::Divergence { step: n, what: "rollout state or cost became non-finite".into() });
        }
        us.push(u);
        xs.push(x.clone());
    }
    j += (cost.terminal)(&x);
    Ok((xs, us, j))
}

/// Per-step LQ data around a nominal trajectory.
pub struct LqApproximation {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub stage: Vec<StageQuadratic>,
    pub terminal: TerminalQuadratic,
}

pub fn linearize_quadratize(
    sys: &NonlinearDiscreteSystem,
    cost: &StageCostModel,
    xs: &[DVector<f64>],
    us: &[DVector<f64>],
) -> LqApproximation {
    let horizon = us.len();
    let mut a = Vec::with_capacity(horizon);
    let mut b = Vec::with_capacity(horizon);
    let mut stage = Vec::with_capacity(horizon);
    for n in 0..horizon {
        a.push(sys.jacobian_x(n, &xs[n], &us[n]));
        b.push(sys.jacobian_u(n, &xs[n], &us[n]));
        stage.push(cost.expand_stage(n, &xs[n], &us[n]));
    }
    let terminal = cost.expand_terminal(&xs[horizon]);
    LqApproximation { a, b, stage, terminal }
}

/// Backward value recursion outputs.
pub struct BackwardPassResult {
    pub s_mat: Vec<DMatrix<f64>>,
    pub s_vec: Vec<DVector<f64>>,
    pub s_const: Vec<f64>,
    pub g: Vec<DVector<f64>>,
    pub g_mat: Vec<DMatrix<f64>>,
    pub h: Vec<DMatrix<f64>>,
    pub uff: Vec<DVector<f64>>,
    pub k: Vec<DMatrix<f64>>,
    /// Final regularization actually applied to H (0 when never needed).
    pub lambda_used: f64,
}

pub const LAMBDA_H_START: f64 = 1e-6;
pub const LAMBDA_H_CAP: f64 = 1e6;

/// Backward pass over the LQ approximation. `H = Ruu + B'S'B` is factorized
/// per step; on failure a diagonal regularization escalates tenfold from
/// `LAMBDA_H_START` up to `LAMBDA_H_CAP` before giving up.
pub fn backward_pass(lq: &LqApproximation) -> Result<BackwardPassResult> {
    let horizon = lq.stage.len();
    let n = lq.terminal.qxx.nrows();
    let m = lq.stage[0].ruu.nrows();
    let mut s_mat = vec![DMatrix::zeros(n, n); horizon + 1];
    let mut s_vec = vec![DVector::zeros(n); horizon + 1];
    let mut s_const = vec![0.0; horizon + 1];
    let mut g = vec![DVector::zeros(m); horizon];
    let mut g_mat = vec![DMatrix::zeros(m, n); horizon];
    let mut h = vec![DMatrix::zeros(m, m); horizon];
    let mut uff = vec![DVector::zeros(m); horizon];
    let mut k = vec![DMatrix::zeros(m, n); horizon];
    s_mat[horizon] = lq.terminal.qxx.clone();
    s_vec[horizon] = lq.terminal.qx.clone();
    s_const[horizon] = lq.terminal.q0;
    let mut lambda = 0.0;
    for step in (0..horizon).rev() {
        let sq = &lq.stage[step];
        let a = &lq.a[step];
        let b = &lq.b[step];
        let bts = b.transpose() * &s_mat[step + 1];
        let gn = &sq.ru + b.transpose() * &s_vec[step + 1];
        let gn_mat = &sq.pux + &bts * a;
        let mut hn = &sq.ruu + &bts * b;
        symmetrize(&mut hn);
        // regularize until H is PD
        let chol = loop {
            let trial = &hn + DMatrix::identity(m, m).scale(lambda);
            match trial.cholesky() {
                Some(c) => break c,
                None => {
                    lambda = if lambda == 0.0 { LAMBDA_H_START } else { lambda * 10.0 };
                    if lambda > LAMBDA_H_CAP {
                        return Err(Error::RegularizationFailure { step, lambda });
                    }
                }
            }
        };
        if lambda > 0.0 {
            hn += DMatrix::identity(m, m).scale(lambda);
        }
        let du = -chol.solve(&gn);
        let kn = -chol.solve(&gn_mat);
        let mut s = &sq.qxx
            + a.transpose() * &s_mat[step + 1] * a
            + kn.transpose() * &hn * &kn
            + kn.transpose() * &gn_mat
            + gn_mat.transpose() * &kn;
        symmetrize(&mut s);
        let sv = &sq.qx
            + a.transpose() * &s_vec[step + 1]
            + kn.transpose() * &hn * &du
            + kn.transpose() * &gn
            + gn_mat.transpose() * &du;
        let sc = sq.q0 + s_const[step + 1] + 0.5 * du.dot(&(&hn * &du)) + du.dot(&gn);
        s_mat[step] = s;
        s_vec[step] = sv;
        s_const[step] = sc;
        g[step] = gn;
        g_mat[step] = gn_mat;
        h[step] = hn;
        uff[step] = du;
        k[step] = kn;
    }
    Ok(BackwardPassResult { s_mat, s_vec, s_const, g, g_mat, h, uff, k, lambda_used: lambda })
}

#[derive(Debug, Clone)]
pub struct IlqcParams {
    pub max_iters: usize,
    pub tol: f64,
    /// Backtracking factors tried in order; first cost decrease wins.
    pub alphas: Vec<f64>,
}

impl Default for IlqcParams {
    fn default() -> Self {
        IlqcParams {
            max_iters: 100,
            tol: 1e-9,
            alphas: (0..11).map(|i| 0.5_f64.powi(i)).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IlqcSolution {
    pub policy: AffinePolicy,
    /// Cost of the nominal policy before each accepted update, ending with
    /// the final cost (non-increasing across accepted iterations).
    pub cost_history: Vec<f64>,
    pub alpha_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when no step size in the backtracking set decreased the cost.
    pub stalled: bool,
    /// Largest H regularization used in any backward pass.
    pub max_lambda: f64,
}

/// Main iteration: roll out, approximate, backward pass, line-searched
/// policy update, until the cost improvement falls below `tol`.
pub fn ilqc_solve(
    sys: &NonlinearDiscreteSystem,
    cost: &StageCostModel,
    initial_policy: &AffinePolicy,
    x0: &DVector<f64>,
    params: &IlqcParams,
) -> Result<IlqcSolution> {
    let mut policy = initial_policy.clone();
    let (mut xs, mut us, mut j) = rollout(sys, cost, &policy, x0)?;
    let mut history = vec![j];
    let mut alphas_used = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut stalled = false;
    let mut max_lambda: f64 = 0.0;
    for _ in 0..params.max_iters {
        let lq = linearize_quadratize(sys, cost, &xs, &us);
        let bp = backward_pass(&lq)?;
        max_lambda = max_lambda.max(bp.lambda_used);
        // try step sizes on the feedforward part, feedback at full strength
        let mut accepted = None;
        for &alpha in &params.alphas {
            let candidate = AffinePolicy {
                x_nom: xs.clone(),
                u_nom: us.clone(),
                uff: bp.uff.iter().map(|d| d.scale(alpha)).collect(),
                k: bp.k.clone(),
            };
            match rollout(sys, cost, &candidate, x0) {
                Ok((cx, cu, cj)) if cj < j => {
                    accepted = Some((candidate, cx, cu, cj, alpha));
                    break;
                }
                _ => continue,
            }
        }
        match accepted {
            Some((cand, cx, cu, cj, alpha)) => {
                let du_max = cu
                    .iter()
                    .zip(us.iter())
                    .map(|(a, b)| max_abs_vec(&(a - b)))
                    .fold(0.0_f64, f64::max);
                let improvement = j - cj;
                policy = cand;
                xs = cx;
                us = cu;
                j = cj;
                history.push(j);
                alphas_used.push(alpha);
                iterations += 1;
                if improvement < params.tol && du_max < params.tol.sqrt() {
                    converged = true;
                    break;
                }
            }
            None => {
                // no step size helps: either converged or stuck
                let ff_norm = bp.uff.iter().map(max_abs_vec).fold(0.0_f64, f64::max);
                if ff_norm < params.tol.sqrt() {
                    converged = true;
                } else {
                    stalled = true;
                }
                break;
            }
        }
    }
    Ok(IlqcSolution {
        policy,
        cost_history: history,
        alpha_history: alphas_used,
        iterations,
        converged,
        stalled,
        max_lambda,
    })
}
