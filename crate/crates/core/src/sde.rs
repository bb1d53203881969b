//! Brownian-motion sampling, control-affine SDE forward integration, and a
//! 1-D density-evolution grid solver (with an optional annihilation sink).
//!
//! The SDE form used throughout is
//! ```text
//! dx = f(t,x) dt + g(t,x) (u dt + dw),   dw ~ N(0, Sigma dt)
//! ```
//! discretized as x_{i+1} = x_i + f dt + g (u dt + sqrt(dt) e), e ~ N(0, Sigma).

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::{is_symmetric, psd_factor};
use crate::rng::{correlated_normal, stream_rng};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

/// Pivot tolerance for accepting rank-deficient noise covariances.
pub const PSD_PIVOT_TOL: f64 = 1e-12;

/// Drifting Brownian motion: mean mu*t, covariance Sigma*min(t,s).
#[derive(Debug, Clone)]
pub struct BrownianSpec {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

impl BrownianSpec {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        if sigma.nrows() != mu.len() || sigma.ncols() != mu.len() {
            return Err(Error::Dimension(format!(
                "drift has dim {} but covariance is {}x{}",
                mu.len(),
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if !is_symmetric(&sigma, 1e-10) {
            return Err(Error::InvalidSpec("noise covariance must be symmetric".into()));
        }
        // PSD check happens via the factorization used for sampling.
        psd_factor(&sigma, PSD_PIVOT_TOL)?;
        Ok(BrownianSpec { mu, sigma })
    }

    pub fn scalar(mu: f64, sigma2: f64) -> Result<Self> {
        BrownianSpec::new(DVector::from_element(1, mu), DMatrix::from_element(1, 1, sigma2))
    }
}

/// Control-affine plant dx = f dt + g (u dt + dw), with input and noise
/// entering through the same map g.
pub struct ControlAffineSystem {
    pub state_dim: usize,
    pub input_dim: usize,
    pub drift: Box<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Sync>,
    pub input_map: Box<dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Sync>,
    pub sigma: DMatrix<f64>,
}

impl ControlAffineSystem {
    pub fn new(
        state_dim: usize,
        input_dim: usize,
        drift: Box<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Sync>,
        input_map: Box<dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Sync>,
        sigma: DMatrix<f64>,
    ) -> Result<Self> {
        if sigma.nrows() != input_dim || sigma.ncols() != input_dim {
            return Err(Error::Dimension(format!(
                "noise covariance must be {input_dim}x{input_dim}, got {}x{}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if !is_symmetric(&sigma, 1e-10) {
            return Err(Error::InvalidSpec("noise covariance must be symmetric".into()));
        }
        psd_factor(&sigma, PSD_PIVOT_TOL)?;
        Ok(ControlAffineSystem { state_dim, input_dim, drift, input_map, sigma })
    }

    pub(crate) fn sigma_factor(&self) -> DMatrix<f64> {
        psd_factor(&self.sigma, PSD_PIVOT_TOL).expect("validated at construction")
    }
}

/// One simulated trajectory. `noises` holds the Sigma-distributed draws e_i
/// actually injected at each step (the increment is sqrt(dt) * e_i).
#[derive(Debug, Clone)]
pub struct Rollout {
    pub grid: TimeGrid,
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub noises: Vec<DVector<f64>>,
    pub stage_costs: Vec<f64>,
    pub ret: f64,
}

/// Sample drifting Brownian paths; each path starts at the origin.
/// Paths are independent streams of `seed`, so results match between serial
/// and parallel execution.
pub fn sample_brownian(
    spec: &BrownianSpec,
    grid: &TimeGrid,
    paths: usize,
    seed: u64,
) -> Result<Vec<Vec<DVector<f64>>>> {
    if paths == 0 {
        return Err(Error::InvalidArgument("need at least one path".into()));
    }
    let l = psd_factor(&spec.sigma, PSD_PIVOT_TOL)?;
    let sqrt_dt = grid.dt.sqrt();
    let drift_dt = &spec.mu * grid.dt;
    let out: Vec<Vec<DVector<f64>>> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = stream_rng(seed, p as u64);
            let mut w = DVector::zeros(spec.mu.len());
            let mut path = Vec::with_capacity(grid.steps + 1);
            path.push(w.clone());
            for _ in 0..grid.steps {
                let dw = correlated_normal(&mut rng, &l) * sqrt_dt;
                w += &drift_dt + dw;
                path.push(w.clone());
            }
            path
        })
        .collect();
    Ok(out)
}

/// Forward-integrate one controlled trajectory with a caller-supplied RNG.
/// Used by the batch estimators so each rollout owns an RNG stream.
pub fn euler_maruyama_with_rng<R: Rng + ?Sized>(
    sys: &ControlAffineSystem,
    x0: &DVector<f64>,
    control: &dyn Fn(f64, &DVector<f64>) -> DVector<f64>,
    grid: &TimeGrid,
    rng: &mut R,
) -> Result<Rollout> {
    if x0.len() != sys.state_dim {
        return Err(Error::Dimension(format!(
            "initial state has dim {}, system expects {}",
            x0.len(),
            sys.state_dim
        )));
    }
    let l = sys.sigma_factor();
    let sqrt_dt = grid.dt.sqrt();
    let mut x = x0.clone();
    let mut states = Vec::with_capacity(grid.steps + 1);
    let mut inputs = Vec::with_capacity(grid.steps);
    let mut noises = Vec::with_capacity(grid.steps);
    states.push(x.clone());
    for i in 0..grid.steps {
        let t = grid.time(i);
        let u = control(t, &x);
        let eps = correlated_normal(rng, &l);
        let f = (sys.drift)(t, &x);
        let g = (sys.input_map)(t, &x);
        x = &x + f * grid.dt + &g * (&u * grid.dt + &eps * sqrt_dt);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: i, what: "state became non-finite".into() });
        }
        states.push(x.clone());
        inputs.push(u);
        noises.push(eps);
    }
    Ok(Rollout {
        grid: *grid,
        states,
        inputs,
        noises,
        stage_costs: vec![0.0; grid.steps],
        ret: 0.0,
    })
}

/// Seeded single-trajectory forward integration.
pub fn euler_maruyama(
    sys: &ControlAffineSystem,
    x0: &DVector<f64>,
    control: &dyn Fn(f64, &DVector<f64>) -> DVector<f64>,
    grid: &TimeGrid,
    seed: u64,
) -> Result<Rollout> {
    let mut rng = stream_rng(seed, 0);
    euler_maruyama_with_rng(sys, x0, control, grid, &mut rng)
}

/// Probability density on a uniform 1-D cell grid.
#[derive(Debug, Clone)]
pub struct DensityGrid1d {
    pub x_min: f64,
    pub x_max: f64,
    pub values: Vec<f64>,
}

impl DensityGrid1d {
    pub fn new(x_min: f64, x_max: f64, values: Vec<f64>) -> Result<Self> {
        if !(x_max > x_min) || values.is_empty() {
            return Err(Error::InvalidSpec("density grid needs x_max > x_min and cells >= 1".into()));
        }
        if values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidSpec("density values must be finite and nonnegative".into()));
        }
        Ok(DensityGrid1d { x_min, x_max, values })
    }

    /// Unit point mass concentrated in the cell containing x0.
    pub fn delta(x_min: f64, x_max: f64, cells: usize, x0: f64) -> Result<Self> {
        let mut values = vec![0.0; cells];
        let dx = (x_max - x_min) / cells as f64;
        let idx = (((x0 - x_min) / dx).floor() as isize).clamp(0, cells as isize - 1) as usize;
        values[idx] = 1.0 / dx;
        DensityGrid1d::new(x_min, x_max, values)
    }

    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.cells() as f64
    }

    /// Cell-center coordinate.
    pub fn x_at(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx()
    }
}

/// Default safety factor for the explicit-step stability bound.
pub const FP_SAFETY_DEFAULT: f64 = 0.4;

/// Explicit finite-volume evolution of
/// d/dt p = -d/dx (f p) + 1/2 d2/dx2 (g^2 sigma p) - sink * p
/// with absorbing boundaries (boundary cells clamped to zero). Advection is
/// upwinded, diffusion uses central differences. Before every step the
/// explicit stability bound dt <= safety * dx^2 / max(g^2 sigma) is checked.
///
/// Returns a snapshot per grid node (steps + 1 entries including p0).
pub fn fokker_planck_1d(
    f: &dyn Fn(f64, f64) -> f64,
    g: &dyn Fn(f64, f64) -> f64,
    sigma: f64,
    sink: Option<&dyn Fn(f64, f64) -> f64>,
    p0: &DensityGrid1d,
    grid: &TimeGrid,
    safety: f64,
) -> Result<Vec<DensityGrid1d>> {
    if sigma < 0.0 {
        return Err(Error::InvalidSpec("noise variance must be nonnegative".into()));
    }
    let n = p0.cells();
    let dx = p0.dx();
    let mut p = p0.values.clone();
    let mut out = Vec::with_capacity(grid.steps + 1);
    out.push(p0.clone());

    let mut diff = vec![0.0; n]; // D_i = 1/2 g^2 sigma at cell centers
    let mut adv = vec![0.0; n];
    for step in 0..grid.steps {
        let t = grid.time(step);
        let mut d_max: f64 = 0.0;
        for i in 0..n {
            let x = p0.x_at(i);
            let gi = g(t, x);
            diff[i] = 0.5 * gi * gi * sigma;
            adv[i] = f(t, x);
            d_max = d_max.max(gi * gi * sigma);
        }
        if d_max > 0.0 {
            let max_dt = safety * dx * dx / d_max;
            if grid.dt > max_dt {
                return Err(Error::Stability { dt: grid.dt, max_dt });
            }
        }
        // CFL for the advective part as well.
        let v_max = adv.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
        if v_max > 0.0 {
            let max_dt = safety * dx / v_max;
            if grid.dt > max_dt {
                return Err(Error::Stability { dt: grid.dt, max_dt });
            }
        }

        let mut next = vec![0.0; n];
        for i in 0..n {
            // Interface advective fluxes, upwind on the interface velocity;
            // out-of-domain neighbours carry zero density (absorbing).
            let p_im = if i > 0 { p[i - 1] } else { 0.0 };
            let p_ip = if i + 1 < n { p[i + 1] } else { 0.0 };
            let v_left = if i > 0 { 0.5 * (adv[i - 1] + adv[i]) } else { adv[i] };
            let v_right = if i + 1 < n { 0.5 * (adv[i] + adv[i + 1]) } else { adv[i] };
            let flux_left = if v_left >= 0.0 { v_left * p_im } else { v_left * p[i] };
            let flux_right = if v_right >= 0.0 { v_right * p[i] } else { v_right * p_ip };
            // Diffusive fluxes of D p across the interfaces.
            let d_im = if i > 0 { diff[i - 1] * p[i - 1] } else { 0.0 };
            let d_ip = if i + 1 < n { diff[i + 1] * p[i + 1] } else { 0.0 };
            let di = diff[i] * p[i];
            let dflux_left = (di - d_im) / dx;
            let dflux_right = (d_ip - di) / dx;

            let mut dp = (-(flux_right - flux_left) + (dflux_right - dflux_left)) / dx;
            if let Some(s) = sink {
                dp -= s(t, p0.x_at(i)) * p[i];
            }
            next[i] = (p[i] + grid.dt * dp).max(0.0);
        }
        next[0] = 0.0;
        next[n - 1] = 0.0;
        p = next;
        out.push(DensityGrid1d { x_min: p0.x_min, x_max: p0.x_max, values: p.clone() });
    }
    Ok(out)
}
