//! Black-box policy optimization: single-rollout return evaluation,
//! coordinate and random-perturbation finite-difference gradient estimates
//! (ridge-regularized least squares with a jointly estimated baseline), a
//! gradient-descent loop, and a 1-D Newton–Raphson extremum finder.

use crate::error::{Error, Result};
use crate::ilqc::StageCostModel;
use crate::rng::stream_rng;
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Discrete-time plant with optional additive Gaussian state noise,
/// x_{n+1} = step(n, x, u) + diag(noise_std) * z, z ~ N(0, I).
pub struct DiscreteStochasticSystem {
    pub state_dim: usize,
    pub input_dim: usize,
    pub step: Box<dyn Fn(usize, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Sync>,
    pub noise_std: DVector<f64>,
}

impl DiscreteStochasticSystem {
    pub fn deterministic(
        state_dim: usize,
        input_dim: usize,
        step: Box<dyn Fn(usize, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Sync>,
    ) -> Self {
        DiscreteStochasticSystem { state_dim, input_dim, step, noise_std: DVector::zeros(state_dim) }
    }
}

/// Policy with a flat parameter vector; the evaluator may be arbitrarily
/// nonlinear in both state and parameters.
pub struct ParamPolicy {
    pub dim: usize,
    pub eval: Box<dyn Fn(usize, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Sync>,
}

impl ParamPolicy {
    pub fn new(
        dim: usize,
        eval: Box<dyn Fn(usize, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Sync>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSpec("policy needs at least one parameter".into()));
        }
        Ok(ParamPolicy { dim, eval })
    }

    /// Linear state feedback u = -K x with K read row-major from theta.
    pub fn linear_feedback(state_dim: usize, input_dim: usize) -> Self {
        ParamPolicy {
            dim: state_dim * input_dim,
            eval: Box::new(move |_, x, theta| {
                DVector::from_fn(input_dim, |i, _| {
                    -(0..state_dim).map(|j| theta[i * state_dim + j] * x[j]).sum::<f64>()
                })
            }),
        }
    }
}

/// Single-rollout return Phi(x_N) + sum L(n, x_n, u_n) under the policy.
/// Deterministic systems give the exact cost J(theta); stochastic ones give
/// one sample of it.
pub fn evaluate_return(
    sys: &DiscreteStochasticSystem,
    cost: &StageCostModel,
    policy: &ParamPolicy,
    theta: &DVector<f64>,
    x0: &DVector<f64>,
    horizon: usize,
    seed: u64,
) -> Result<f64> {
    if theta.len() != policy.dim {
        return Err(Error::Dimension(format!(
            "policy has {} parameters, got {}",
            policy.dim,
            theta.len()
        )));
    }
    let mut rng = stream_rng(seed, 0);
    let mut x = x0.clone();
    let mut ret = 0.0;
    for n in 0..horizon {
        let u = (policy.eval)(n, &x, theta);
        ret += (cost.stage)(n, &x, &u);
        x = (sys.step)(n, &x, &u);
        for i in 0..sys.state_dim {
            if sys.noise_std[i] > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                x[i] += sys.noise_std[i] * z;
            }
        }
        if x.iter().any(|v| !v.is_finite()) || !ret.is_finite() {
            return Err(Error::Divergence { step: n, what: "state became non-finite".into() });
        }
    }
    ret += (cost.terminal)(&x);
    if !ret.is_finite() {
        return Err(Error::Divergence { step: horizon, what: "return became non-finite".into() });
    }
    Ok(ret)
}

/// Gradient estimate plus the jointly estimated objective value and a
/// condition number of the design (coordinate estimates report 1).
#[derive(Debug, Clone)]
pub struct GradientEstimate {
    pub grad: DVector<f64>,
    pub value: f64,
    pub condition: f64,
}

/// Finite-difference flavour for [`fd_coordinate_gradient`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdMode {
    /// (J(theta + D e_i) - J(theta)) / D; p + 1 evaluations.
    Single,
    /// (J(theta + D/2 e_i) - J(theta - D/2 e_i)) / D; 2p evaluations.
    Double,
}

/// Per-coordinate finite differences. Single-sided reports J(theta) as the
/// value; double-sided reports the mean of its probes (a second-order
/// accurate stand-in, since the center point is never evaluated).
pub fn fd_coordinate_gradient(
    j_eval: &mut dyn FnMut(&DVector<f64>) -> Result<f64>,
    theta: &DVector<f64>,
    delta: f64,
    mode: FdMode,
) -> Result<GradientEstimate> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("probe step must be positive, got {delta}")));
    }
    let p = theta.len();
    let mut grad = DVector::zeros(p);
    let probe = |j_eval: &mut dyn FnMut(&DVector<f64>) -> Result<f64>,
                 th: &DVector<f64>,
                 coord: usize|
     -> Result<f64> {
        let v = j_eval(th)?;
        if !v.is_finite() {
            return Err(Error::Divergence {
                step: coord,
                what: format!("non-finite objective while probing coordinate {coord}"),
            });
        }
        Ok(v)
    };
    let value = match mode {
        FdMode::Single => {
            let j0 = probe(j_eval, theta, 0)?;
            for i in 0..p {
                let mut hi = theta.clone();
                hi[i] += delta;
                grad[i] = (probe(j_eval, &hi, i)? - j0) / delta;
            }
            j0
        }
        FdMode::Double => {
            let mut sum = 0.0;
            for i in 0..p {
                let mut hi = theta.clone();
                let mut lo = theta.clone();
                hi[i] += 0.5 * delta;
                lo[i] -= 0.5 * delta;
                let (jh, jl) = (probe(j_eval, &hi, i)?, probe(j_eval, &lo, i)?);
                grad[i] = (jh - jl) / delta;
                sum += jh + jl;
            }
            sum / (2 * p) as f64
        }
    };
    Ok(GradientEstimate { grad, value, condition: 1.0 })
}

/// Random perturbations around a nominal parameter vector and the returns
/// collected at them.
#[derive(Debug, Clone)]
pub struct PerturbationBatch {
    pub perturbations: Vec<DVector<f64>>,
    pub returns: Vec<f64>,
}

impl PerturbationBatch {
    pub fn new(perturbations: Vec<DVector<f64>>, returns: Vec<f64>) -> Result<Self> {
        if perturbations.is_empty() || perturbations.len() != returns.len() {
            return Err(Error::InvalidSpec(
                "need matching nonempty perturbation and return lists".into(),
            ));
        }
        let p = perturbations[0].len();
        if perturbations.iter().any(|d| d.len() != p) {
            return Err(Error::Dimension("perturbations differ in length".into()));
        }
        if perturbations.iter().any(|d| d.iter().any(|v| !v.is_finite()))
            || returns.iter().any(|r| !r.is_finite())
        {
            return Err(Error::InvalidSpec("batch entries must be finite".into()));
        }
        Ok(PerturbationBatch { perturbations, returns })
    }

    /// N x (p+1) design matrix: each row is [dtheta' 1].
    pub fn design(&self) -> DMatrix<f64> {
        let n = self.perturbations.len();
        let p = self.perturbations[0].len();
        DMatrix::from_fn(n, p + 1, |r, c| if c < p { self.perturbations[r][c] } else { 1.0 })
    }
}

/// Least-squares gradient from random perturbations: solves
/// (D'D + reg*I)^-1 D'R for [grad; J], where D carries an appended ones
/// column so the objective value is estimated jointly and no nominal
/// evaluation is needed. With reg = 0 the design must have full column
/// rank (no p-subset of perturbations parallel).
pub fn fd_random_gradient(batch: &PerturbationBatch, ridge: f64) -> Result<GradientEstimate> {
    if ridge < 0.0 {
        return Err(Error::InvalidArgument("ridge factor must be nonnegative".into()));
    }
    let d = batch.design();
    let p = d.ncols() - 1;
    let rhs = d.transpose() * DVector::from_vec(batch.returns.clone());
    let mut gram = d.transpose() * &d;
    let svd = gram.clone().svd(false, false);
    let (s_max, s_min) = (
        svd.singular_values.max(),
        svd.singular_values.min(),
    );
    let condition = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    for i in 0..=p {
        gram[(i, i)] += ridge;
    }
    let solved = gram.lu().solve(&rhs).filter(|v| v.iter().all(|x| x.is_finite()));
    let sol = match solved {
        Some(v) => v,
        None => return Err(Error::SingularDesign),
    };
    if ridge == 0.0 && condition > 1e12 {
        return Err(Error::SingularDesign);
    }
    Ok(GradientEstimate { grad: sol.rows(0, p).into(), value: sol[p], condition })
}

/// Gradient-descent configuration. `explore_std` of `None` selects the
/// default 0.1 * (1 + |theta0|_inf).
#[derive(Debug, Clone)]
pub struct GdParams {
    pub perturbations: usize,
    pub explore_std: Option<f64>,
    pub ridge: f64,
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay per iteration (1 = constant).
    pub lr_decay: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for GdParams {
    fn default() -> Self {
        GdParams {
            perturbations: 8,
            explore_std: None,
            ridge: 1e-6,
            learning_rate: 0.1,
            lr_decay: 1.0,
            iterations: 100,
            seed: 0,
        }
    }
}

/// Descent trace: parameter and objective histories plus a divergence flag
/// set when an iteration produced a non-finite return and the loop stopped
/// early.
pub struct GdResult {
    pub theta: DVector<f64>,
    pub theta_history: Vec<DVector<f64>>,
    pub j_history: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub diverged: bool,
}

/// Finite-difference gradient descent: each iteration draws N perturbations
/// from N(0, c^2 I), evaluates the objective at theta + dtheta (in
/// parallel, one seed stream per probe), fits [grad; J] by regularized
/// least squares, and steps theta <- theta - w*grad.
pub fn gradient_descent_fd(
    j_eval: &(dyn Fn(&DVector<f64>, u64) -> Result<f64> + Sync),
    theta0: DVector<f64>,
    params: &GdParams,
) -> Result<GdResult> {
    if params.perturbations == 0 || params.iterations == 0 {
        return Err(Error::InvalidArgument("need at least one perturbation and iteration".into()));
    }
    let c = params.explore_std.unwrap_or_else(|| 0.1 * (1.0 + theta0.amax()));
    if !(c > 0.0) {
        return Err(Error::InvalidArgument("exploration scale must be positive".into()));
    }
    let p = theta0.len();
    let mut theta = theta0;
    let mut rate = params.learning_rate;
    let mut theta_history = vec![theta.clone()];
    let mut j_history = Vec::with_capacity(params.iterations);
    let mut grad_norms = Vec::with_capacity(params.iterations);
    for iter in 0..params.iterations {
        let probes: Vec<Result<(DVector<f64>, f64)>> = (0..params.perturbations)
            .into_par_iter()
            .map(|k| {
                let stream = (iter * params.perturbations + k) as u64;
                let mut rng = stream_rng(params.seed, stream);
                let mut d = DVector::zeros(p);
                for i in 0..p {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    d[i] = c * z;
                }
                let r = j_eval(&(&theta + &d), stream)?;
                Ok((d, r))
            })
            .collect();
        let mut perturbations = Vec::with_capacity(params.perturbations);
        let mut returns = Vec::with_capacity(params.perturbations);
        let mut bad = false;
        for probe in probes {
            match probe {
                Ok((d, r)) if r.is_finite() => {
                    perturbations.push(d);
                    returns.push(r);
                }
                Ok(_) => bad = true,
                Err(Error::Divergence { .. }) => bad = true,
                Err(e) => return Err(e),
            }
        }
        if bad {
            return Ok(GdResult { theta: theta.clone(), theta_history, j_history, grad_norms, diverged: true });
        }
        let est = fd_random_gradient(&PerturbationBatch::new(perturbations, returns)?, params.ridge)?;
        j_history.push(est.value);
        grad_norms.push(est.grad.norm());
        theta -= rate * &est.grad;
        rate *= params.lr_decay;
        theta_history.push(theta.clone());
    }
    Ok(GdResult { theta, theta_history, j_history, grad_norms, diverged: false })
}

/// Newton–Raphson iteration x <- x - f'(x)/f''(x) for an extremum of f.
/// Returns the final point and the number of steps taken; stops as soon as
/// |f'(x)| < tol (so a starting point at the root takes zero steps).
pub fn newton_raphson_1d(
    fp: &dyn Fn(f64) -> f64,
    fpp: &dyn Fn(f64) -> f64,
    x0: f64,
    max_iters: usize,
    tol: f64,
) -> Result<(f64, usize)> {
    let mut x = x0;
    for it in 0..max_iters {
        let g = fp(x);
        if g.abs() < tol {
            return Ok((x, it));
        }
        let h = fpp(x);
        if h == 0.0 || !h.is_finite() {
            return Err(Error::ZeroCurvature { x });
        }
        x -= g / h;
        if !x.is_finite() {
            return Err(Error::Divergence { step: it, what: "iterate became non-finite".into() });
        }
    }
    let residual = fp(x).abs();
    if residual < tol {
        Ok((x, max_iters))
    } else {
        Err(Error::NoConvergence { iters: max_iters, residual })
    }
}
