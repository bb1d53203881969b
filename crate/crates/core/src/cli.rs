//! Experiment runner: a flat `key = value` config binds one solver to one
//! testbed, the run is seeded, and results come out as a CSV or JSON table
//! plus a one-line summary. Same config + same seed gives byte-identical
//! artifacts.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::csvio::{fmt_f64, table};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::ilqc::{ilqc_solve, AffinePolicy, IlqcParams, StageCostModel};
use crate::lq::{
    lqg_continuous_finite, lqg_continuous_infinite, lqg_discrete_finite, lqg_discrete_infinite,
    lqr_continuous_finite, lqr_continuous_infinite, lqr_discrete_finite, lqr_discrete_infinite,
    LinearSystemContinuous, QuadraticCost,
};
use crate::path_integral::{
    estimate_desirability, pi2_general, pi2_time_dependent, pi_optimal_control, Pi2Params, RbfBasis,
};
use crate::policy_gradient::{
    evaluate_return, gradient_descent_fd, DiscreteStochasticSystem, GdParams, ParamPolicy,
};
use crate::sde::{sample_brownian, BrownianSpec};
use crate::tabular_rl::{policy_iteration, q_learning, value_iteration};
use crate::testbeds::{
    make_gridworld, make_lmdp_scalar, make_pendulum, make_reaching_task, make_scalar_lq,
    pendulum_swingup_cost,
};

/// Prefix for environment-variable overrides: `OCRL_SEED=7` beats the config
/// file, `OCRL_Q=2` overrides the `q` parameter, and so on.
pub const ENV_PREFIX: &str = "OCRL_";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }

    fn parse(value: &str, line: usize) -> Result<Self> {
        match value {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config {
                line,
                what: format!("format must be `csv` or `json`, got `{other}`"),
            }),
        }
    }
}

/// One experiment: which solver on which testbed, with what knobs.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub solver: String,
    pub testbed: String,
    pub seed: u64,
    pub out: Option<String>,
    pub format: OutputFormat,
    /// Numeric solver/testbed parameters; anything absent uses the
    /// documented default.
    pub params: BTreeMap<String, f64>,
}

/// Every parameter key any solver accepts. Parsing rejects keys outside this
/// set so typos die at the config line, not as silently ignored knobs.
const PARAM_KEYS: &[&str] = &[
    "a",
    "anneal",
    "b",
    "basis",
    "damping",
    "decay",
    "discount",
    "dt",
    "epsilon",
    "explore_std",
    "goal_reward",
    "height",
    "horizon",
    "iterations",
    "learning_rate",
    "max_iters",
    "mu",
    "noise",
    "omega",
    "paths",
    "perturbations",
    "q",
    "q_t",
    "r",
    "ridge",
    "rollouts",
    "samples",
    "sigma2",
    "step_reward",
    "steps",
    "theta",
    "tol",
    "width",
    "x0",
];

pub const TESTBEDS: &[&str] =
    &["brownian", "gridworld", "lmdp_scalar", "pendulum", "reaching", "scalar_lq"];

struct SolverSpec {
    name: &'static str,
    testbeds: &'static [&'static str],
    params: &'static [&'static str],
    run: fn(&ExperimentConfig) -> Result<RunTable>,
}

struct RunTable {
    columns: &'static [&'static str],
    rows: Vec<Vec<f64>>,
    final_metric: f64,
}

const SCALAR_LQ_PARAMS: &[&str] =
    &["a", "b", "q", "r", "q_t", "noise", "horizon", "dt", "discount", "decay", "tol", "max_iters"];
const LMDP_PARAMS: &[&str] = &["a", "sigma2", "r", "q", "q_t", "horizon", "dt", "samples", "x0"];
const PI2_PARAMS: &[&str] = &["rollouts", "iterations", "explore_std", "anneal", "basis", "x0"];
const GRID_PARAMS: &[&str] =
    &["width", "height", "step_reward", "goal_reward", "discount", "theta"];

/// Sorted registry; `list_capabilities` and dispatch both read from here.
const SOLVERS: &[SolverSpec] = &[
    SolverSpec {
        name: "gradient_descent_fd",
        testbeds: &["scalar_lq"],
        params: &[
            "a",
            "b",
            "q",
            "r",
            "q_t",
            "noise",
            "horizon",
            "x0",
            "iterations",
            "perturbations",
            "learning_rate",
            "explore_std",
            "ridge",
        ],
        run: run_gradient_descent,
    },
    SolverSpec {
        name: "ilqc",
        testbeds: &["scalar_lq", "pendulum"],
        params: &["a", "b", "q", "r", "q_t", "horizon", "x0", "dt", "damping", "max_iters", "tol"],
        run: run_ilqc,
    },
    SolverSpec {
        name: "lqg_continuous_finite",
        testbeds: &["scalar_lq"],
        params: SCALAR_LQ_PARAMS,
        run: run_lq,
    },
    SolverSpec {
        name: "lqg_continuous_infinite",
        testbeds: &["scalar_lq"],
        params: SCALAR_LQ_PARAMS,
        run: run_lq,
    },
    SolverSpec {
        name: "lqg_discrete_finite",
        testbeds: &["scalar_lq"],
        params: SCALAR_LQ_PARAMS,
        run: run_lq,
    },
    SolverSpec {
        name: "lqg_discrete_infinite",
        testbeds: &["scalar_lq"],
        params: SCALAR_LQ_PARAMS,
        run: run_lq,
    },
    SolverSpec {
        name: "lqr_continuous_finite",
        testbeds: &["scalar_lq"],
        params: SCALAR_LQ_PARAMS,
        run: run_lq,
    },
    SolverSpec {
        name: "lqr_continuous_infinite",
        testbeds: &["scalar_lq"],
        params: SCALAR_LQ_PARAMS,
        run: run_lq,
    },
    SolverSpec {
        name: "lqr_discrete_finite",
        testbeds: &["scalar_lq"],
        params: SCALAR_LQ_PARAMS,
        run: run_lq,
    },
    SolverSpec {
        name: "lqr_discrete_infinite",
        testbeds: &["scalar_lq"],
        params: SCALAR_LQ_PARAMS,
        run: run_lq,
    },
    SolverSpec {
        name: "pi2_general",
        testbeds: &["reaching"],
        params: PI2_PARAMS,
        run: run_pi2,
    },
    SolverSpec {
        name: "pi2_time_dependent",
        testbeds: &["reaching"],
        params: PI2_PARAMS,
        run: run_pi2,
    },
    SolverSpec {
        name: "pi_desirability",
        testbeds: &["lmdp_scalar"],
        params: LMDP_PARAMS,
        run: run_pi_estimate,
    },
    SolverSpec {
        name: "pi_optimal_control",
        testbeds: &["lmdp_scalar"],
        params: LMDP_PARAMS,
        run: run_pi_estimate,
    },
    SolverSpec {
        name: "policy_iteration",
        testbeds: &["gridworld"],
        params: GRID_PARAMS,
        run: run_tabular_dp,
    },
    SolverSpec {
        name: "q_learning",
        testbeds: &["gridworld"],
        params: &[
            "width",
            "height",
            "step_reward",
            "goal_reward",
            "discount",
            "omega",
            "epsilon",
            "steps",
        ],
        run: run_q_learning,
    },
    SolverSpec {
        name: "sample_brownian",
        testbeds: &["brownian"],
        params: &["mu", "sigma2", "horizon", "dt", "paths"],
        run: run_brownian,
    },
    SolverSpec {
        name: "value_iteration",
        testbeds: &["gridworld"],
        params: GRID_PARAMS,
        run: run_tabular_dp,
    },
];

fn find_solver(name: &str) -> Result<&'static SolverSpec> {
    SOLVERS
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::InvalidSpec(format!("unknown solver `{name}`")))
}

/// Line-oriented `key = value` parser. `#` starts a comment, blank lines are
/// skipped, every error carries the offending line number.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut solver = None;
    let mut testbed = None;
    let mut seed = 0u64;
    let mut out = None;
    let mut format = OutputFormat::Csv;
    let mut params = BTreeMap::new();
    let mut seen: Vec<String> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            what: format!("expected `key = value`, got `{content}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        if value.is_empty() {
            return Err(Error::Config { line, what: format!("empty value for `{key}`") });
        }
        if seen.iter().any(|k| k == key) {
            return Err(Error::Config { line, what: format!("duplicate key `{key}`") });
        }
        seen.push(key.to_string());
        match key {
            "solver" => solver = Some(value.to_string()),
            "testbed" => testbed = Some(value.to_string()),
            "seed" => {
                seed = value.parse::<u64>().map_err(|_| Error::Config {
                    line,
                    what: format!("invalid unsigned integer for `seed`: `{value}`"),
                })?
            }
            "out" => out = Some(value.to_string()),
            "format" => format = OutputFormat::parse(value, line)?,
            _ => {
                if !PARAM_KEYS.contains(&key) {
                    return Err(Error::Config { line, what: format!("unknown key `{key}`") });
                }
                let v = value.parse::<f64>().map_err(|_| Error::Config {
                    line,
                    what: format!("invalid number for `{key}`: `{value}`"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Config {
                        line,
                        what: format!("`{key}` must be finite, got `{value}`"),
                    });
                }
                params.insert(key.to_string(), v);
            }
        }
    }

    let solver = solver
        .ok_or_else(|| Error::Config { line: 0, what: "missing required key `solver`".into() })?;
    let testbed = testbed
        .ok_or_else(|| Error::Config { line: 0, what: "missing required key `testbed`".into() })?;
    Ok(ExperimentConfig { solver, testbed, seed, out, format, params })
}

/// Canonical text form: fixed header keys first, then parameters in sorted
/// order. `emit_config(parse_config(x)?)` is a fixed point.
pub fn emit_config(cfg: &ExperimentConfig) -> String {
    let mut s = String::new();
    s.push_str(&format!("solver = {}\n", cfg.solver));
    s.push_str(&format!("testbed = {}\n", cfg.testbed));
    s.push_str(&format!("seed = {}\n", cfg.seed));
    s.push_str(&format!("format = {}\n", cfg.format.as_str()));
    if let Some(out) = &cfg.out {
        s.push_str(&format!("out = {out}\n"));
    }
    for (k, v) in &cfg.params {
        s.push_str(&format!("{k} = {v}\n"));
    }
    s
}

/// Applies one override (from a CLI flag or an `OCRL_*` environment
/// variable) on top of a parsed config.
pub fn apply_override(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<()> {
    let bad = |what: String| Error::Config { line: 0, what };
    match key {
        "solver" => cfg.solver = value.to_string(),
        "testbed" => cfg.testbed = value.to_string(),
        "seed" => {
            cfg.seed = value
                .parse::<u64>()
                .map_err(|_| bad(format!("invalid unsigned integer for `seed`: `{value}`")))?
        }
        "out" => cfg.out = Some(value.to_string()),
        "format" => cfg.format = OutputFormat::parse(value, 0)?,
        _ => {
            if !PARAM_KEYS.contains(&key) {
                return Err(bad(format!("unknown key `{key}`")));
            }
            let v = value
                .parse::<f64>()
                .map_err(|_| bad(format!("invalid number for `{key}`: `{value}`")))?;
            if !v.is_finite() {
                return Err(bad(format!("`{key}` must be finite, got `{value}`")));
            }
            cfg.params.insert(key.to_string(), v);
        }
    }
    Ok(())
}

/// Folds `OCRL_*` environment variables into the config. Variable names map
/// to lowercased keys, so `OCRL_SEED` overrides `seed` and `OCRL_Q`
/// overrides `q`.
pub fn apply_env_overrides(
    cfg: &mut ExperimentConfig,
    vars: impl Iterator<Item = (String, String)>,
) -> Result<()> {
    let mut pending: Vec<(String, String)> = vars
        .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|rest| (rest.to_lowercase(), v)))
        .collect();
    pending.sort();
    for (key, value) in pending {
        apply_override(cfg, &key, &value)?;
    }
    Ok(())
}

/// Checks the solver/testbed pair exists and every supplied parameter is
/// meaningful for it.
pub fn validate_config(cfg: &ExperimentConfig) -> Result<()> {
    let spec = find_solver(&cfg.solver)?;
    if !TESTBEDS.contains(&cfg.testbed.as_str()) {
        return Err(Error::InvalidSpec(format!("unknown testbed `{}`", cfg.testbed)));
    }
    if !spec.testbeds.contains(&cfg.testbed.as_str()) {
        return Err(Error::InvalidSpec(format!(
            "solver `{}` does not run on testbed `{}` (expected one of: {})",
            cfg.solver,
            cfg.testbed,
            spec.testbeds.join(", ")
        )));
    }
    for key in cfg.params.keys() {
        if !spec.params.contains(&key.as_str()) {
            return Err(Error::InvalidSpec(format!(
                "parameter `{key}` is not used by solver `{}`",
                cfg.solver
            )));
        }
    }
    Ok(())
}

/// Sorted table of every solver and testbed key.
pub fn list_capabilities() -> String {
    let mut s = String::from("kind,key,testbeds\n");
    for spec in SOLVERS {
        s.push_str(&format!("solver,{},{}\n", spec.name, spec.testbeds.join(";")));
    }
    for t in TESTBEDS {
        s.push_str(&format!("testbed,{t},\n"));
    }
    s
}

pub struct RunArtifacts {
    /// `solver,testbed,seed,final_metric`.
    pub summary: String,
    /// The rendered result table (CSV or JSON per the config).
    pub artifact: String,
}

/// Validates, dispatches, renders, and (if `out` is set) writes the table.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    validate_config(cfg)?;
    let spec = find_solver(&cfg.solver)?;
    let result = (spec.run)(cfg)?;
    let artifact = match cfg.format {
        OutputFormat::Csv => table(result.columns, &result.rows),
        OutputFormat::Json => render_json(cfg, result.columns, &result.rows),
    };
    if let Some(path) = &cfg.out {
        std::fs::write(path, &artifact)?;
    }
    let summary = format!(
        "{},{},{},{}",
        cfg.solver,
        cfg.testbed,
        cfg.seed,
        fmt_f64(result.final_metric)
    );
    Ok(RunArtifacts { summary, artifact })
}

fn render_json(cfg: &ExperimentConfig, columns: &[&str], rows: &[Vec<f64>]) -> String {
    let cols = columns.iter().map(|c| format!("\"{c}\"")).collect::<Vec<_>>().join(",");
    let body = rows
        .iter()
        .map(|r| {
            let cells = r.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(",");
            format!("    [{cells}]")
        })
        .collect::<Vec<_>>()
        .join(",\n");
    format!(
        "{{\n  \"solver\": \"{}\",\n  \"testbed\": \"{}\",\n  \"seed\": {},\n  \"columns\": [{}],\n  \"rows\": [\n{}\n  ]\n}}\n",
        cfg.solver, cfg.testbed, cfg.seed, cols, body
    )
}

// --- parameter access -------------------------------------------------------

fn param(cfg: &ExperimentConfig, key: &str, default: f64) -> f64 {
    cfg.params.get(key).copied().unwrap_or(default)
}

fn param_usize(cfg: &ExperimentConfig, key: &str, default: usize) -> Result<usize> {
    let v = param(cfg, key, default as f64);
    if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
        return Err(Error::InvalidArgument(format!(
            "`{key}` must be a nonnegative integer, got {v}"
        )));
    }
    Ok(v as usize)
}

// --- solver runners ---------------------------------------------------------

fn scalar_lq_setup(cfg: &ExperimentConfig) -> (f64, f64, f64, f64, f64) {
    (
        param(cfg, "a", 1.0),
        param(cfg, "b", 1.0),
        param(cfg, "q", 1.0),
        param(cfg, "r", 1.0),
        param(cfg, "q_t", 0.0),
    )
}

fn riccati_rows(sol: &crate::lq::RiccatiSolution, times: Option<&[f64]>) -> Vec<Vec<f64>> {
    (0..sol.k.len())
        .map(|n| {
            let t = times.map_or(n as f64, |ts| ts[n]);
            vec![t, sol.s[n][(0, 0)], sol.k[n][(0, 0)], sol.upsilon[n]]
        })
        .collect()
}

fn run_lq(cfg: &ExperimentConfig) -> Result<RunTable> {
    let (a, b, q, r, q_t) = scalar_lq_setup(cfg);
    let lqg = cfg.solver.starts_with("lqg");
    let noise = param(cfg, "noise", if lqg { 1.0 } else { 0.0 });
    let tol = param(cfg, "tol", 1e-12);
    let max_iters = param_usize(cfg, "max_iters", 100_000)?;
    let columns: &'static [&'static str] = &["t", "s", "k", "upsilon"];

    let sol = if cfg.solver.contains("discrete") {
        let (mut sys, mut cost) = make_scalar_lq(a, b, q, r, q_t);
        if lqg {
            sys = sys.with_noise(DMatrix::from_element(1, 1, noise));
        }
        let infinite = cfg.solver.ends_with("infinite");
        let alpha = param(cfg, "discount", if lqg && infinite { 0.9 } else { 1.0 });
        cost = cost.with_discount(alpha);
        match (lqg, infinite) {
            (false, false) => {
                lqr_discrete_finite(&sys, &cost, param_usize(cfg, "horizon", 50)?)?
            }
            (false, true) => lqr_discrete_infinite(&sys, &cost, tol, max_iters)?,
            (true, false) => lqg_discrete_finite(&sys, &cost, param_usize(cfg, "horizon", 50)?)?,
            (true, true) => lqg_discrete_infinite(&sys, &cost, tol, max_iters)?,
        }
    } else {
        let mut sys = LinearSystemContinuous::constant(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
        );
        if lqg {
            sys = sys.with_noise(DMatrix::from_element(1, 1, noise));
        }
        let infinite = cfg.solver.ends_with("infinite");
        let mut cost = QuadraticCost::new(
            DMatrix::from_element(1, 1, q),
            DMatrix::from_element(1, 1, r),
            DMatrix::from_element(1, 1, q_t),
        );
        if lqg && infinite {
            cost = cost.with_decay(param(cfg, "decay", 0.5));
        }
        if infinite {
            if lqg {
                lqg_continuous_infinite(&sys, &cost, tol.max(1e-10))?
            } else {
                lqr_continuous_infinite(&sys, &cost, tol.max(1e-10))?
            }
        } else {
            let grid =
                TimeGrid::from_horizon(param(cfg, "horizon", 1.0), param(cfg, "dt", 1e-3))?;
            let sol = if lqg {
                lqg_continuous_finite(&sys, &cost, &grid)?
            } else {
                lqr_continuous_finite(&sys, &cost, &grid)?
            };
            let rows = riccati_rows(&sol, Some(&grid.times()));
            return Ok(RunTable { columns, rows, final_metric: sol.s[0][(0, 0)] });
        }
    };
    let rows = riccati_rows(&sol, None);
    Ok(RunTable { columns, rows, final_metric: sol.s[0][(0, 0)] })
}

fn run_ilqc(cfg: &ExperimentConfig) -> Result<RunTable> {
    let params = IlqcParams {
        max_iters: param_usize(cfg, "max_iters", 100)?,
        tol: param(cfg, "tol", 1e-9),
        ..Default::default()
    };
    let sol = if cfg.testbed == "pendulum" {
        let sys = make_pendulum(1.0, 1.0, param(cfg, "damping", 0.1), param(cfg, "dt", 0.05));
        let horizon = param_usize(cfg, "horizon", 100)?;
        let x0 = DVector::from_vec(vec![param(cfg, "x0", 0.0), 0.0]);
        ilqc_solve(&sys, &pendulum_swingup_cost(), &AffinePolicy::zero(2, 1, horizon), &x0, &params)?
    } else {
        let (a, b, q, r, q_t) = scalar_lq_setup(cfg);
        let sys = crate::ilqc::NonlinearDiscreteSystem::linear(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
        );
        let cost = StageCostModel::quadratic(
            DMatrix::from_element(1, 1, q),
            DMatrix::from_element(1, 1, r),
            DMatrix::from_element(1, 1, q_t),
        );
        let horizon = param_usize(cfg, "horizon", 50)?;
        let x0 = DVector::from_element(1, param(cfg, "x0", 1.0));
        ilqc_solve(&sys, &cost, &AffinePolicy::zero(1, 1, horizon), &x0, &params)?
    };
    let rows = sol
        .cost_history
        .iter()
        .enumerate()
        .map(|(i, &c)| vec![i as f64, c])
        .collect::<Vec<_>>();
    let final_metric = *sol.cost_history.last().expect("history is never empty");
    Ok(RunTable { columns: &["iter", "cost"], rows, final_metric })
}

fn run_pi_estimate(cfg: &ExperimentConfig) -> Result<RunTable> {
    let problem = make_lmdp_scalar(
        param(cfg, "a", 0.0),
        param(cfg, "sigma2", 1.0),
        param(cfg, "r", 1.0),
        param(cfg, "q", 1.0),
        param(cfg, "q_t", 1.0),
        param(cfg, "horizon", 1.0),
        param(cfg, "dt", 0.01),
    );
    let samples = param_usize(cfg, "samples", 1000)?;
    let y = DVector::from_element(1, param(cfg, "x0", 0.0));
    let (estimate, se) = if cfg.solver == "pi_desirability" {
        estimate_desirability(&problem, 0.0, &y, samples, cfg.seed)?
    } else {
        let (u, se) = pi_optimal_control(&problem, 0.0, &y, samples, cfg.seed)?;
        (u[0], se[0])
    };
    Ok(RunTable {
        columns: &["estimate", "standard_error"],
        rows: vec![vec![estimate, se]],
        final_metric: estimate,
    })
}

fn run_pi2(cfg: &ExperimentConfig) -> Result<RunTable> {
    let problem = make_reaching_task();
    let basis = RbfBasis::uniform(0.0, problem.grid.tf(), param_usize(cfg, "basis", 10)?)?;
    let params = Pi2Params {
        rollouts: param_usize(cfg, "rollouts", 10)?,
        iterations: param_usize(cfg, "iterations", 50)?,
        exploration_std: param(cfg, "explore_std", 0.3),
        anneal: param(cfg, "anneal", 0.99),
        seed: cfg.seed,
        ..Default::default()
    };
    let x0 = DVector::from_element(1, param(cfg, "x0", 0.0));
    let result = if cfg.solver == "pi2_general" {
        let theta0 = vec![DMatrix::zeros(basis.len(), 1 + problem.sys.state_dim)];
        pi2_general(&problem, &basis, theta0, None, &x0, &params)?
    } else {
        pi2_time_dependent(&problem, &basis, vec![DVector::zeros(basis.len())], &x0, &params)?
    };
    let rows = result
        .cost_history
        .iter()
        .zip(&result.exploration_history)
        .enumerate()
        .map(|(i, (&c, &e))| vec![i as f64, c, e])
        .collect::<Vec<_>>();
    let final_metric = *result.cost_history.last().expect("at least one iteration");
    Ok(RunTable { columns: &["iter", "cost", "exploration"], rows, final_metric })
}

fn gridworld_from(cfg: &ExperimentConfig) -> Result<(crate::tabular_rl::TabularMdp, usize)> {
    let width = param_usize(cfg, "width", 4)?;
    let height = param_usize(cfg, "height", 4)?;
    if width * height < 2 {
        return Err(Error::InvalidArgument("gridworld needs at least two cells".into()));
    }
    let goal = width * height - 1;
    let mdp = make_gridworld(
        width,
        height,
        &[goal],
        param(cfg, "step_reward", -1.0),
        param(cfg, "goal_reward", 10.0),
        param(cfg, "discount", 0.9),
    );
    Ok((mdp, goal))
}

fn run_tabular_dp(cfg: &ExperimentConfig) -> Result<RunTable> {
    let (mdp, _) = gridworld_from(cfg)?;
    let theta = param(cfg, "theta", 1e-10);
    let (policy, v) = if cfg.solver == "policy_iteration" {
        policy_iteration(&mdp, theta)?
    } else {
        let (policy, v, converged) = value_iteration(&mdp, theta)?;
        if !converged {
            return Err(Error::NoConvergence { iters: 0, residual: theta });
        }
        (policy, v)
    };
    let rows = (0..mdp.num_states())
        .map(|x| vec![x as f64, v[x], policy[x] as f64])
        .collect::<Vec<_>>();
    Ok(RunTable { columns: &["state", "value", "action"], rows, final_metric: v[0] })
}

fn run_q_learning(cfg: &ExperimentConfig) -> Result<RunTable> {
    let (mdp, _) = gridworld_from(cfg)?;
    let q = q_learning(
        &mdp,
        param(cfg, "omega", 0.1),
        param(cfg, "epsilon", 0.1),
        param_usize(cfg, "steps", 100_000)?,
        None,
        cfg.seed,
    )?;
    let mut rows = Vec::with_capacity(q.nrows() * q.ncols());
    for x in 0..q.nrows() {
        for u in 0..q.ncols() {
            rows.push(vec![x as f64, u as f64, q[(x, u)]]);
        }
    }
    let final_metric = (0..q.ncols()).map(|u| q[(0, u)]).fold(f64::NEG_INFINITY, f64::max);
    Ok(RunTable { columns: &["state", "action", "q"], rows, final_metric })
}

fn run_gradient_descent(cfg: &ExperimentConfig) -> Result<RunTable> {
    let (a, b, q, r, q_t) = scalar_lq_setup(cfg);
    let noise = param(cfg, "noise", 0.0);
    let horizon = param_usize(cfg, "horizon", 40)?;
    let x0 = DVector::from_element(1, param(cfg, "x0", 1.0));
    let step =
        move |_: usize, x: &DVector<f64>, u: &DVector<f64>| DVector::from_element(1, a * x[0] + b * u[0]);
    let sys = DiscreteStochasticSystem {
        state_dim: 1,
        input_dim: 1,
        step: Box::new(step),
        noise_std: DVector::from_element(1, noise),
    };
    let cost = StageCostModel::quadratic(
        DMatrix::from_element(1, 1, q),
        DMatrix::from_element(1, 1, r),
        DMatrix::from_element(1, 1, q_t),
    );
    let policy = ParamPolicy::linear_feedback(1, 1);
    let j_eval = move |theta: &DVector<f64>, seed: u64| {
        evaluate_return(&sys, &cost, &policy, theta, &x0, horizon, seed)
    };
    let gd = GdParams {
        perturbations: param_usize(cfg, "perturbations", 8)?,
        explore_std: Some(param(cfg, "explore_std", 0.05)),
        ridge: param(cfg, "ridge", 1e-8),
        learning_rate: param(cfg, "learning_rate", 0.05),
        iterations: param_usize(cfg, "iterations", 100)?,
        seed: cfg.seed,
        ..Default::default()
    };
    let result = gradient_descent_fd(&j_eval, DVector::zeros(1), &gd)?;
    let rows = result
        .j_history
        .iter()
        .zip(&result.grad_norms)
        .enumerate()
        .map(|(i, (&j, &g))| vec![i as f64, j, g, result.theta_history[i][0]])
        .collect::<Vec<_>>();
    let final_metric = *result.j_history.last().expect("at least one iteration");
    Ok(RunTable { columns: &["iter", "j", "grad_norm", "theta"], rows, final_metric })
}

fn run_brownian(cfg: &ExperimentConfig) -> Result<RunTable> {
    let spec = BrownianSpec::scalar(param(cfg, "mu", 5.0), param(cfg, "sigma2", 4.0))?;
    let grid = TimeGrid::from_horizon(param(cfg, "horizon", 2.0), param(cfg, "dt", 0.05))?;
    let paths = param_usize(cfg, "paths", 10_000)?;
    let samples = sample_brownian(&spec, &grid, paths, cfg.seed)?;
    let rows = (0..=grid.steps)
        .map(|n| {
            let mean = samples.iter().map(|p| p[n][0]).sum::<f64>() / paths as f64;
            let var = if paths > 1 {
                samples.iter().map(|p| (p[n][0] - mean).powi(2)).sum::<f64>()
                    / (paths - 1) as f64
            } else {
                0.0
            };
            vec![grid.time(n), mean, var]
        })
        .collect::<Vec<_>>();
    let final_metric = rows.last().expect("grid has at least one node")[1];
    Ok(RunTable { columns: &["t", "mean", "variance"], rows, final_metric })
}
