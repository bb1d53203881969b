//! Finite-MDP machinery: exact and iterative policy evaluation, policy and
//! value iteration, Monte Carlo control (exploring starts and epsilon-soft),
//! Q-learning, and backward shortest path on weighted DAGs.

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Finite MDP: per-action transition matrices P[u] (|X| x |X|, row-stochastic)
/// and expected rewards R[u][(x, x')] for landing in x' from x under u.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    pub p: Vec<DMatrix<f64>>,
    pub r: Vec<DMatrix<f64>>,
    pub discount: f64,
    pub terminal: Vec<bool>,
}

impl TabularMdp {
    pub fn new(
        p: Vec<DMatrix<f64>>,
        r: Vec<DMatrix<f64>>,
        discount: f64,
        terminal: Vec<bool>,
    ) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidSpec("need at least one action".into()));
        }
        let n = p[0].nrows();
        if !(0.0..=1.0).contains(&discount) {
            return Err(Error::InvalidArgument(format!("discount must be in [0,1], got {discount}")));
        }
        if r.len() != p.len() || terminal.len() != n {
            return Err(Error::Dimension("transition/reward/terminal sizes disagree".into()));
        }
        for (u, m) in p.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n || r[u].nrows() != n || r[u].ncols() != n {
                return Err(Error::Dimension(format!("matrices for action {u} are not {n}x{n}")));
            }
            for x in 0..n {
                let row_sum: f64 = m.row(x).sum();
                if (row_sum - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidSpec(format!(
                        "transition row for state {x}, action {u} sums to {row_sum}"
                    )));
                }
                if m.row(x).iter().any(|&v| v < 0.0) {
                    return Err(Error::InvalidSpec("negative transition probability".into()));
                }
            }
        }
        Ok(TabularMdp { p, r, discount, terminal })
    }

    pub fn num_states(&self) -> usize {
        self.p[0].nrows()
    }

    pub fn num_actions(&self) -> usize {
        self.p.len()
    }

    /// Expected one-step reward of (x, u): sum over x' of P R.
    pub fn expected_reward(&self, x: usize, u: usize) -> f64 {
        (0..self.num_states()).map(|y| self.p[u][(x, y)] * self.r[u][(x, y)]).sum()
    }

    /// One-step lookahead value of (x, u) against a state-value table.
    pub fn lookahead(&self, x: usize, u: usize, v: &DVector<f64>) -> f64 {
        (0..self.num_states())
            .map(|y| self.p[u][(x, y)] * (self.r[u][(x, y)] + self.discount * v[y]))
            .sum()
    }

    /// Parse the line-oriented text format:
    /// header `states,actions,discount`, then `P u x x' prob` and
    /// `R u x x' value` lines. `#` starts a comment. Terminal states are
    /// optional `T x` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines
            .next()
            .ok_or_else(|| Error::Config { line: 1, what: "empty MDP file".into() })?;
        let parts: Vec<&str> = header.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::Config { line: hline, what: "header must be `states,actions,discount`".into() });
        }
        let bad = |line: usize, what: &str| Error::Config { line, what: what.into() };
        let n: usize = parts[0].parse().map_err(|_| bad(hline, "bad state count"))?;
        let na: usize = parts[1].parse().map_err(|_| bad(hline, "bad action count"))?;
        let discount: f64 = parts[2].parse().map_err(|_| bad(hline, "bad discount"))?;
        let mut p = vec![DMatrix::zeros(n, n); na];
        let mut r = vec![DMatrix::zeros(n, n); na];
        let mut terminal = vec![false; n];
        for (ln, line) in lines {
            let tok: Vec<&str> = line.split_whitespace().collect();
            match tok.first() {
                Some(&"P") | Some(&"R") if tok.len() == 5 => {
                    let u: usize = tok[1].parse().map_err(|_| bad(ln, "bad action index"))?;
                    let x: usize = tok[2].parse().map_err(|_| bad(ln, "bad state index"))?;
                    let y: usize = tok[3].parse().map_err(|_| bad(ln, "bad next-state index"))?;
                    let v: f64 = tok[4].parse().map_err(|_| bad(ln, "bad value"))?;
                    if u >= na || x >= n || y >= n {
                        return Err(bad(ln, "index out of range"));
                    }
                    if tok[0] == "P" {
                        p[u][(x, y)] = v;
                    } else {
                        r[u][(x, y)] = v;
                    }
                }
                Some(&"T") if tok.len() == 2 => {
                    let x: usize = tok[1].parse().map_err(|_| bad(ln, "bad state index"))?;
                    if x >= n {
                        return Err(bad(ln, "index out of range"));
                    }
                    terminal[x] = true;
                }
                _ => return Err(bad(ln, "expected `P u x x' prob`, `R u x x' value`, or `T x`")),
            }
        }
        TabularMdp::new(p, r, discount, terminal)
            .map_err(|e| Error::Config { line: 0, what: e.to_string() })
    }
}

/// Row-stochastic policy pi(x, u).
#[derive(Debug, Clone)]
pub struct StochasticPolicy(pub DMatrix<f64>);

impl StochasticPolicy {
    pub fn uniform(states: usize, actions: usize) -> Self {
        StochasticPolicy(DMatrix::from_element(states, actions, 1.0 / actions as f64))
    }

    pub fn deterministic(actions: usize, choice: &[usize]) -> Self {
        let mut m = DMatrix::zeros(choice.len(), actions);
        for (x, &u) in choice.iter().enumerate() {
            m[(x, u)] = 1.0;
        }
        StochasticPolicy(m)
    }

    /// Epsilon-greedy around greedy actions: every action gets eps/|U|,
    /// the greedy one additionally 1 - eps.
    pub fn epsilon_greedy(greedy: &[usize], actions: usize, eps: f64) -> Self {
        let mut m = DMatrix::from_element(greedy.len(), actions, eps / actions as f64);
        for (x, &u) in greedy.iter().enumerate() {
            m[(x, u)] += 1.0 - eps;
        }
        StochasticPolicy(m)
    }

    pub fn validate(&self) -> Result<()> {
        for x in 0..self.0.nrows() {
            let s: f64 = self.0.row(x).sum();
            if (s - 1.0).abs() > 1e-12 || self.0.row(x).iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidSpec(format!("policy row {x} is not a distribution")));
            }
        }
        Ok(())
    }
}

pub const SWEEP_CAP: usize = 1_000_000;

/// Iterative policy evaluation: sweep the Bellman expectation update until
/// the largest change falls below `theta`. Returns whether it converged
/// within the sweep cap (it may not for discount 1 without terminals).
pub fn policy_evaluation_iterative(
    mdp: &TabularMdp,
    pi: &StochasticPolicy,
    theta: f64,
) -> Result<(DVector<f64>, usize, bool)> {
    pi.validate()?;
    let n = mdp.num_states();
    let mut v = DVector::zeros(n);
    for sweep in 1..=SWEEP_CAP {
        let mut delta: f64 = 0.0;
        let mut next = DVector::zeros(n);
        for x in 0..n {
            let mut val = 0.0;
            for u in 0..mdp.num_actions() {
                let w = pi.0[(x, u)];
                if w > 0.0 {
                    val += w * mdp.lookahead(x, u, &v);
                }
            }
            delta = delta.max((val - v[x]).abs());
            next[x] = val;
        }
        v = next;
        if delta < theta {
            return Ok((v, sweep, true));
        }
    }
    Ok((v, SWEEP_CAP, false))
}

/// Exact policy evaluation by solving the linear system (I - A) V = B with
/// A = discount * pi-averaged transitions and B the expected rewards.
pub fn policy_evaluation_exact(mdp: &TabularMdp, pi: &StochasticPolicy) -> Result<DVector<f64>> {
    pi.validate()?;
    let n = mdp.num_states();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    for x in 0..n {
        for u in 0..mdp.num_actions() {
            let w = pi.0[(x, u)];
            if w == 0.0 {
                continue;
            }
            for y in 0..n {
                a[(x, y)] += mdp.discount * w * mdp.p[u][(x, y)];
                b[x] += w * mdp.p[u][(x, y)] * mdp.r[u][(x, y)];
            }
        }
    }
    let system = DMatrix::identity(n, n) - a;
    system.lu().solve(&b).ok_or(Error::SingularSystem)
}

/// Action values from a state-value table:
/// Q(x,u) = sum_x' P [R + discount * V(x')].
pub fn q_from_policy(mdp: &TabularMdp, v: &DVector<f64>) -> DMatrix<f64> {
    let (n, na) = (mdp.num_states(), mdp.num_actions());
    DMatrix::from_fn(n, na, |x, u| mdp.lookahead(x, u, v))
}

/// Greedy improvement; ties break toward the lowest action index.
pub fn policy_improvement(mdp: &TabularMdp, v: &DVector<f64>) -> Vec<usize> {
    (0..mdp.num_states())
        .map(|x| {
            let mut best = 0;
            let mut best_val = f64::NEG_INFINITY;
            for u in 0..mdp.num_actions() {
                let val = mdp.lookahead(x, u, v);
                if val > best_val {
                    best_val = val;
                    best = u;
                }
            }
            best
        })
        .collect()
}

/// Alternate exact evaluation and greedy improvement until stable.
pub fn policy_iteration(mdp: &TabularMdp, _theta: f64) -> Result<(Vec<usize>, DVector<f64>)> {
    let na = mdp.num_actions();
    let mut policy = vec![0usize; mdp.num_states()];
    loop {
        let v = policy_evaluation_exact(mdp, &StochasticPolicy::deterministic(na, &policy))?;
        let improved = policy_improvement(mdp, &v);
        if improved == policy {
            return Ok((policy, v));
        }
        policy = improved;
    }
}

/// Sweep V <- max_u sum P [R + discount V] until the largest change is below
/// `theta`, then extract the greedy policy.
pub fn value_iteration(mdp: &TabularMdp, theta: f64) -> Result<(Vec<usize>, DVector<f64>, bool)> {
    let n = mdp.num_states();
    let mut v = DVector::zeros(n);
    let mut converged = false;
    for _ in 1..=SWEEP_CAP {
        let mut delta: f64 = 0.0;
        let mut next = DVector::zeros(n);
        for x in 0..n {
            let best = (0..mdp.num_actions())
                .map(|u| mdp.lookahead(x, u, &v))
                .fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((best - v[x]).abs());
            next[x] = best;
        }
        v = next;
        if delta < theta {
            converged = true;
            break;
        }
    }
    let policy = policy_improvement(mdp, &v);
    Ok((policy, v, converged))
}

/// Samples transitions from an MDP. Rewards are the expected values from the
/// tensor by default; `reward_noise_std` adds zero-mean Gaussian noise.
pub struct EpisodeSimulator<'a> {
    pub mdp: &'a TabularMdp,
    pub reward_noise_std: f64,
}

impl<'a> EpisodeSimulator<'a> {
    pub fn new(mdp: &'a TabularMdp) -> Self {
        EpisodeSimulator { mdp, reward_noise_std: 0.0 }
    }

    pub fn step(&self, x: usize, u: usize, rng: &mut ChaCha8Rng) -> (usize, f64) {
        let draw: f64 = rng.random();
        let mut acc = 0.0;
        let n = self.mdp.num_states();
        let mut next = n - 1;
        for y in 0..n {
            acc += self.mdp.p[u][(x, y)];
            if draw < acc {
                next = y;
                break;
            }
        }
        let mut reward = self.mdp.r[u][(x, next)];
        if self.reward_noise_std > 0.0 {
            let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
            reward += self.reward_noise_std * z;
        }
        (next, reward)
    }
}

pub const EPISODE_CAP: usize = 10_000;

fn greedy_from_q(q: &DMatrix<f64>) -> Vec<usize> {
    (0..q.nrows())
        .map(|x| {
            let mut best = 0;
            let mut best_val = f64::NEG_INFINITY;
            for u in 0..q.ncols() {
                if q[(x, u)] > best_val {
                    best_val = q[(x, u)];
                    best = u;
                }
            }
            best
        })
        .collect()
}

fn sample_action(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let draw: f64 = rng.random();
    let mut acc = 0.0;
    for (u, &p) in probs.iter().enumerate() {
        acc += p;
        if draw < acc {
            return u;
        }
    }
    probs.len() - 1
}

/// Monte Carlo control with exploring starts: uniformly random first (x, u),
/// greedy afterwards, first-visit returns, constant-step update
/// Q <- Q + omega (G - Q), greedy improvement after every episode.
///
/// Episodes that hit `EPISODE_CAP` are truncated and their partial returns
/// used (with zero initialization and negative step costs the greedy policy
/// quickly learns to avoid the loop). If *every* episode caps, the task is
/// effectively non-episodic and the run errors out.
pub fn mc_exploring_starts(
    mdp: &TabularMdp,
    episodes: usize,
    omega: f64,
    seed: u64,
) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let sim = EpisodeSimulator::new(mdp);
    let (n, na) = (mdp.num_states(), mdp.num_actions());
    let starts: Vec<usize> = (0..n).filter(|&x| !mdp.terminal[x]).collect();
    if starts.is_empty() {
        return Err(Error::InvalidSpec("all states are terminal".into()));
    }
    let mut q = DMatrix::zeros(n, na);
    let mut policy = vec![0usize; n];
    let mut rng = stream_rng(seed, 0);
    let mut capped = 0usize;
    for _ in 0..episodes {
        let mut x = starts[rng.random_range(0..starts.len())];
        let mut u = rng.random_range(0..na);
        let mut transitions: Vec<(usize, usize, f64)> = Vec::new();
        loop {
            let (next, reward) = sim.step(x, u, &mut rng);
            transitions.push((x, u, reward));
            x = next;
            if mdp.terminal[x] {
                break;
            }
            if transitions.len() >= EPISODE_CAP {
                capped += 1;
                break;
            }
            u = policy[x];
        }
        // backward returns, first-visit filtering
        let mut g = 0.0;
        let mut returns: Vec<(usize, usize, f64)> = Vec::with_capacity(transitions.len());
        for &(sx, su, rew) in transitions.iter().rev() {
            g = rew + mdp.discount * g;
            returns.push((sx, su, g));
        }
        returns.reverse();
        let mut seen = vec![false; n * na];
        for (sx, su, ret) in returns {
            let key = sx * na + su;
            if !seen[key] {
                seen[key] = true;
                q[(sx, su)] += omega * (ret - q[(sx, su)]);
            }
        }
        policy = greedy_from_q(&q);
    }
    if episodes > 0 && capped == episodes {
        return Err(Error::EpisodeCap { cap: EPISODE_CAP });
    }
    Ok((q, policy))
}

/// On-policy first-visit Monte Carlo with an epsilon-soft behavior policy.
/// Episodes start from `start`; epsilon may decay multiplicatively per
/// episode. Returns Q and the final epsilon-greedy policy. Capped episodes
/// truncate as in [`mc_exploring_starts`]; all-capped runs error.
pub fn mc_epsilon_soft(
    mdp: &TabularMdp,
    eps0: f64,
    omega: f64,
    episodes: usize,
    eps_decay: f64,
    start: usize,
    seed: u64,
) -> Result<(DMatrix<f64>, StochasticPolicy)> {
    if !(eps0 > 0.0 && eps0 <= 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be in (0,1], got {eps0}")));
    }
    let sim = EpisodeSimulator::new(mdp);
    let (n, na) = (mdp.num_states(), mdp.num_actions());
    let mut q = DMatrix::zeros(n, na);
    let mut greedy = vec![0usize; n];
    let mut eps = eps0;
    let mut rng = stream_rng(seed, 0);
    let mut capped = 0usize;
    for _ in 0..episodes {
        let behavior = StochasticPolicy::epsilon_greedy(&greedy, na, eps);
        let mut x = start;
        let mut transitions: Vec<(usize, usize, f64)> = Vec::new();
        while !mdp.terminal[x] {
            let probs: Vec<f64> = (0..na).map(|u| behavior.0[(x, u)]).collect();
            let u = sample_action(&probs, &mut rng);
            let (next, reward) = sim.step(x, u, &mut rng);
            transitions.push((x, u, reward));
            x = next;
            if transitions.len() >= EPISODE_CAP {
                capped += 1;
                break;
            }
        }
        let mut g = 0.0;
        let mut returns: Vec<(usize, usize, f64)> = Vec::with_capacity(transitions.len());
        for &(sx, su, rew) in transitions.iter().rev() {
            g = rew + mdp.discount * g;
            returns.push((sx, su, g));
        }
        returns.reverse();
        let mut seen = vec![false; n * na];
        for (sx, su, ret) in returns {
            let key = sx * na + su;
            if !seen[key] {
                seen[key] = true;
                q[(sx, su)] += omega * (ret - q[(sx, su)]);
            }
        }
        greedy = greedy_from_q(&q);
        eps = (eps * eps_decay).max(f64::MIN_POSITIVE);
    }
    if episodes > 0 && capped == episodes {
        return Err(Error::EpisodeCap { cap: EPISODE_CAP });
    }
    Ok((q, StochasticPolicy::epsilon_greedy(&greedy, na, eps)))
}

/// Off-policy temporal-difference control. The behavior policy is
/// epsilon-greedy on the current Q; the update bootstraps on max_u' Q(x',u').
/// Runs until `total_steps` transitions have been consumed, restarting at
/// terminals (or after `EPISODE_CAP` steps) from `start`, or from a
/// uniformly random non-terminal state when `start` is `None`.
pub fn q_learning(
    mdp: &TabularMdp,
    omega: f64,
    eps: f64,
    total_steps: usize,
    start: Option<usize>,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be in (0,1], got {eps}")));
    }
    let sim = EpisodeSimulator::new(mdp);
    let (n, na) = (mdp.num_states(), mdp.num_actions());
    let starts: Vec<usize> = (0..n).filter(|&x| !mdp.terminal[x]).collect();
    if starts.is_empty() {
        return Err(Error::InvalidSpec("all states are terminal".into()));
    }
    let mut q = DMatrix::zeros(n, na);
    let mut rng = stream_rng(seed, 0);
    let restart = |rng: &mut ChaCha8Rng| match start {
        Some(x) => x,
        None => starts[rng.random_range(0..starts.len())],
    };
    let mut x = restart(&mut rng);
    let mut episode_len = 0usize;
    for _ in 0..total_steps {
        if mdp.terminal[x] || episode_len >= EPISODE_CAP {
            x = restart(&mut rng);
            episode_len = 0;
        }
        // epsilon-greedy on current Q
        let u = if rng.random::<f64>() < eps {
            rng.random_range(0..na)
        } else {
            let row = q.row(x);
            let mut best = 0;
            let mut best_val = f64::NEG_INFINITY;
            for (i, &v) in row.iter().enumerate() {
                if v > best_val {
                    best_val = v;
                    best = i;
                }
            }
            best
        };
        let (next, reward) = sim.step(x, u, &mut rng);
        let bootstrap = if mdp.terminal[next] {
            0.0
        } else {
            (0..na).map(|up| q[(next, up)]).fold(f64::NEG_INFINITY, f64::max)
        };
        q[(x, u)] += omega * (reward + mdp.discount * bootstrap - q[(x, u)]);
        x = next;
        episode_len += 1;
    }
    Ok(q)
}

/// Directed weighted graph for the backward cost-to-go demo.
#[derive(Debug, Clone)]
pub struct Dag {
    pub nodes: usize,
    /// (from, to, weight)
    pub edges: Vec<(usize, usize, f64)>,
    pub start: usize,
    pub goal: usize,
}

/// Backward dynamic programming on a DAG: cost-to-go(goal) = 0 and
/// cost-to-go(v) = min over edges (w + cost-to-go(child)); the optimal path
/// follows the greedy descent from the start. Unreachable nodes keep
/// infinite cost; an unreachable start is an error, as is any cycle.
pub fn backward_shortest_path(dag: &Dag) -> Result<(Vec<f64>, Vec<usize>)> {
    let n = dag.nodes;
    // Kahn topological order
    let mut indeg = vec![0usize; n];
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(a, b, w) in &dag.edges {
        if a >= n || b >= n {
            return Err(Error::InvalidSpec(format!("edge ({a},{b}) out of range")));
        }
        adj[a].push((b, w));
        indeg[b] += 1;
    }
    let mut queue: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut topo = Vec::with_capacity(n);
    while let Some(v) = queue.pop() {
        topo.push(v);
        for &(c, _) in &adj[v] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                queue.push(c);
            }
        }
    }
    if topo.len() != n {
        return Err(Error::Cyclic);
    }
    let mut ctg = vec![f64::INFINITY; n];
    ctg[dag.goal] = 0.0;
    for &v in topo.iter().rev() {
        for &(c, w) in &adj[v] {
            if ctg[c].is_finite() {
                ctg[v] = ctg[v].min(w + ctg[c]);
            }
        }
    }
    if !ctg[dag.start].is_finite() {
        return Err(Error::NoPath);
    }
    let mut path = vec![dag.start];
    let mut v = dag.start;
    while v != dag.goal {
        let mut best: Option<(usize, f64)> = None;
        for &(c, w) in &adj[v] {
            if ctg[c].is_finite() {
                let total = w + ctg[c];
                let better = match best {
                    None => true,
                    Some((bc, bt)) => total < bt - 1e-12 || ((total - bt).abs() <= 1e-12 && c < bc),
                };
                if better {
                    best = Some((c, total));
                }
            }
        }
        v = best.expect("start was reachable").0;
        path.push(v);
    }
    Ok((ctg, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testbeds::make_gridworld;
    use approx::assert_relative_eq;

    fn single_state_mdp(reward: f64, discount: f64) -> TabularMdp {
        TabularMdp::new(
            vec![DMatrix::from_element(1, 1, 1.0)],
            vec![DMatrix::from_element(1, 1, reward)],
            discount,
            vec![false],
        )
        .unwrap()
    }

    fn random_mdp(states: usize, actions: usize, discount: f64, rng: &mut ChaCha8Rng) -> TabularMdp {
        let mut p = Vec::new();
        let mut r = Vec::new();
        for _ in 0..actions {
            let mut pm = DMatrix::zeros(states, states);
            let mut rm = DMatrix::zeros(states, states);
            for x in 0..states {
                let mut row: Vec<f64> = (0..states).map(|_| rng.random_range(0.01..1.0)).collect();
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= s);
                // renormalize exactly
                let s2: f64 = row.iter().sum();
                row[states - 1] += 1.0 - s2;
                for y in 0..states {
                    pm[(x, y)] = row[y];
                    rm[(x, y)] = rng.random_range(-1.0..1.0);
                }
            }
            p.push(pm);
            r.push(rm);
        }
        TabularMdp::new(p, r, discount, vec![false; states]).unwrap()
    }

    #[test]
    fn iterative_evaluation_geometric_series() {
        let mdp = single_state_mdp(1.0, 0.5);
        let pi = StochasticPolicy::uniform(1, 1);
        let (v, _, converged) = policy_evaluation_iterative(&mdp, &pi, 1e-12).unwrap();
        assert!(converged);
        assert!((v[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn zero_discount_is_expected_immediate_reward() {
        let mut rng = stream_rng(1, 0);
        let mdp = random_mdp(4, 2, 0.0, &mut rng);
        let pi = StochasticPolicy::uniform(4, 2);
        let (v, _, _) = policy_evaluation_iterative(&mdp, &pi, 1e-13).unwrap();
        for x in 0..4 {
            let expect = 0.5 * (mdp.expected_reward(x, 0) + mdp.expected_reward(x, 1));
            assert_relative_eq!(v[x], expect, epsilon = 1e-10);
        }
        let ve = policy_evaluation_exact(&mdp, &pi).unwrap();
        for x in 0..4 {
            assert_relative_eq!(ve[x], v[x], epsilon = 1e-10);
        }
    }

    #[test]
    fn iterative_matches_exact_on_chain() {
        let p = vec![DMatrix::from_row_slice(2, 2, &[0.2, 0.8, 0.6, 0.4])];
        let r = vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 2.0])];
        let mdp = TabularMdp::new(p, r, 0.9, vec![false, false]).unwrap();
        let pi = StochasticPolicy::uniform(2, 1);
        let theta = 1e-10;
        let (vi, _, _) = policy_evaluation_iterative(&mdp, &pi, theta).unwrap();
        let ve = policy_evaluation_exact(&mdp, &pi).unwrap();
        for x in 0..2 {
            assert!((vi[x] - ve[x]).abs() < theta / (1.0 - 0.9) + 1e-10);
        }
    }

    #[test]
    fn exact_identity_transition_decoupled() {
        let p = vec![DMatrix::identity(3, 3)];
        let r = vec![DMatrix::identity(3, 3).scale(2.0)];
        let mdp = TabularMdp::new(p, r, 0.9, vec![false; 3]).unwrap();
        let v = policy_evaluation_exact(&mdp, &StochasticPolicy::uniform(3, 1)).unwrap();
        for x in 0..3 {
            assert_relative_eq!(v[x], 2.0 / 0.1, epsilon = 1e-9);
        }
    }

    #[test]
    fn exact_evaluation_residual_on_random_mdps() {
        let mut rng = stream_rng(2, 0);
        for _ in 0..20 {
            let mdp = random_mdp(6, 3, 0.85, &mut rng);
            let pi = StochasticPolicy::uniform(6, 3);
            let v = policy_evaluation_exact(&mdp, &pi).unwrap();
            // residual of V = A V + B
            for x in 0..6 {
                let mut rhs = 0.0;
                for u in 0..3 {
                    rhs += pi.0[(x, u)] * mdp.lookahead(x, u, &v);
                }
                assert!((v[x] - rhs).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn q_table_identities() {
        let mut rng = stream_rng(3, 0);
        let mdp = random_mdp(5, 2, 0.9, &mut rng);
        let pi = StochasticPolicy::uniform(5, 2);
        let v = policy_evaluation_exact(&mdp, &pi).unwrap();
        let q = q_from_policy(&mdp, &v);
        // V(x) = sum_u pi Q(x,u)
        for x in 0..5 {
            let recon: f64 = (0..2).map(|u| pi.0[(x, u)] * q[(x, u)]).sum();
            assert!((v[x] - recon).abs() < 1e-10);
        }
        // alpha = 0: Q is the expected immediate reward
        let mdp0 = random_mdp(5, 2, 0.0, &mut rng);
        let v0 = policy_evaluation_exact(&mdp0, &pi).unwrap();
        let q0 = q_from_policy(&mdp0, &v0);
        for x in 0..5 {
            for u in 0..2 {
                assert_relative_eq!(q0[(x, u)], mdp0.expected_reward(x, u), epsilon = 1e-12);
            }
        }
        // deterministic greedy policy: Q(x, pi(x)) = V(x)
        let greedy = policy_improvement(&mdp, &v);
        let pig = StochasticPolicy::deterministic(2, &greedy);
        let vg = policy_evaluation_exact(&mdp, &pig).unwrap();
        let qg = q_from_policy(&mdp, &vg);
        for x in 0..5 {
            assert!((qg[(x, greedy[x])] - vg[x]).abs() < 1e-10);
        }
    }

    #[test]
    fn improvement_tie_breaks_low_index() {
        // two identical actions: the first must win
        let p = vec![DMatrix::identity(1, 1), DMatrix::identity(1, 1)];
        let r = vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0)];
        let mdp = TabularMdp::new(p, r, 0.5, vec![false]).unwrap();
        let pi = policy_improvement(&mdp, &DVector::zeros(1));
        assert_eq!(pi[0], 0);
    }

    #[test]
    fn improvement_theorem_on_random_mdps() {
        let mut rng = stream_rng(4, 0);
        for _ in 0..100 {
            let mdp = random_mdp(4, 2, 0.9, &mut rng);
            let pi = StochasticPolicy::uniform(4, 2);
            let v = policy_evaluation_exact(&mdp, &pi).unwrap();
            let improved = policy_improvement(&mdp, &v);
            let v2 = policy_evaluation_exact(&mdp, &StochasticPolicy::deterministic(2, &improved)).unwrap();
            for x in 0..4 {
                assert!(v2[x] >= v[x] - 1e-10, "improvement failed at {x}: {} < {}", v2[x], v[x]);
            }
        }
    }

    fn brute_force_best(mdp: &TabularMdp) -> (Vec<usize>, DVector<f64>) {
        let (n, na) = (mdp.num_states(), mdp.num_actions());
        let mut best_policy = vec![0; n];
        let mut best_v: Option<DVector<f64>> = None;
        let total = na.pow(n as u32);
        for code in 0..total {
            let mut c = code;
            let policy: Vec<usize> = (0..n)
                .map(|_| {
                    let u = c % na;
                    c /= na;
                    u
                })
                .collect();
            let v = policy_evaluation_exact(mdp, &StochasticPolicy::deterministic(na, &policy)).unwrap();
            let better = match &best_v {
                None => true,
                Some(bv) => (0..n).all(|x| v[x] >= bv[x] - 1e-12) && (0..n).any(|x| v[x] > bv[x] + 1e-12),
            };
            if better {
                best_v = Some(v);
                best_policy = policy;
            }
        }
        (best_policy, best_v.unwrap())
    }

    #[test]
    fn policy_iteration_matches_brute_force() {
        let mut rng = stream_rng(5, 0);
        for _ in 0..25 {
            let mdp = random_mdp(5, 2, 0.9, &mut rng);
            let (pi_star, v_star) = policy_iteration(&mdp, 1e-10).unwrap();
            let (_, v_bf) = brute_force_best(&mdp);
            for x in 0..5 {
                assert!((v_star[x] - v_bf[x]).abs() < 1e-8, "values differ at {x}");
            }
            // returned policy must be greedy for its own values
            assert_eq!(pi_star, policy_improvement(&mdp, &v_star));
        }
    }

    #[test]
    fn single_action_policy_iteration() {
        let mut rng = stream_rng(6, 0);
        let mdp = random_mdp(4, 1, 0.8, &mut rng);
        let (pi, v) = policy_iteration(&mdp, 1e-10).unwrap();
        assert_eq!(pi, vec![0; 4]);
        let ve = policy_evaluation_exact(&mdp, &StochasticPolicy::uniform(4, 1)).unwrap();
        for x in 0..4 {
            assert_relative_eq!(v[x], ve[x], epsilon = 1e-10);
        }
    }

    #[test]
    fn value_iteration_agrees_with_policy_iteration() {
        let mut rng = stream_rng(7, 0);
        let theta = 1e-9;
        for _ in 0..25 {
            let mdp = random_mdp(5, 2, 0.9, &mut rng);
            let (pi_v, v_v, conv) = value_iteration(&mdp, theta).unwrap();
            assert!(conv);
            let (pi_p, v_p) = policy_iteration(&mdp, theta).unwrap();
            let bound = 2.0 * theta / (1.0 - 0.9);
            for x in 0..5 {
                assert!((v_v[x] - v_p[x]).abs() < bound);
            }
            assert_eq!(pi_v, pi_p);
        }
    }

    #[test]
    fn value_iteration_zero_discount_one_sweep() {
        let mut rng = stream_rng(8, 0);
        let mdp = random_mdp(4, 3, 0.0, &mut rng);
        let (_, v, _) = value_iteration(&mdp, 1e-12).unwrap();
        for x in 0..4 {
            let best = (0..3).map(|u| mdp.expected_reward(x, u)).fold(f64::NEG_INFINITY, f64::max);
            assert_relative_eq!(v[x], best, epsilon = 1e-12);
        }
    }

    #[test]
    fn value_iteration_monotone_with_nonneg_rewards() {
        // rewards >= 0 and V_0 = 0: sweeps are non-decreasing
        let mdp = make_gridworld(3, 3, &[8], 0.0, 1.0, 0.9);
        let mut v = DVector::zeros(9);
        for _ in 0..30 {
            let mut next = DVector::zeros(9);
            for x in 0..9 {
                next[x] = (0..4).map(|u| mdp.lookahead(x, u, &v)).fold(f64::NEG_INFINITY, f64::max);
            }
            for x in 0..9 {
                assert!(next[x] >= v[x] - 1e-12);
            }
            v = next;
        }
    }

    #[test]
    fn bellman_residual_of_value_iteration() {
        let mut rng = stream_rng(9, 0);
        let theta = 1e-10;
        let mdp = random_mdp(6, 2, 0.9, &mut rng);
        let (_, v, _) = value_iteration(&mdp, theta).unwrap();
        for x in 0..6 {
            let best = (0..2).map(|u| mdp.lookahead(x, u, &v)).fold(f64::NEG_INFINITY, f64::max);
            assert!((v[x] - best).abs() < theta * (1.0 + 0.9) / (1.0 - 0.9));
        }
    }

    #[test]
    fn reward_scaling_preserves_greedy_argmax() {
        let mut rng = stream_rng(10, 0);
        let mdp = random_mdp(5, 2, 0.9, &mut rng);
        let (pi1, v1, _) = value_iteration(&mdp, 1e-11).unwrap();
        let scaled = TabularMdp::new(
            mdp.p.clone(),
            mdp.r.iter().map(|m| m.scale(3.0)).collect(),
            mdp.discount,
            mdp.terminal.clone(),
        )
        .unwrap();
        let (pi2, v2, _) = value_iteration(&scaled, 1e-11).unwrap();
        assert_eq!(pi1, pi2);
        for x in 0..5 {
            assert!((v2[x] - 3.0 * v1[x]).abs() < 1e-7);
        }
    }

    #[test]
    fn mc_es_one_step_episodic() {
        // every action terminates immediately; Q must converge to the
        // expected rewards from the tensors
        let p = vec![
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 1.0]),
        ];
        let r = vec![
            DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 0.0, 0.0]),
        ];
        let mdp = TabularMdp::new(p, r, 0.9, vec![false, true]).unwrap();
        let (q, policy) = mc_exploring_starts(&mdp, 10_000, 0.05, 11).unwrap();
        assert!((q[(0, 0)] - 2.0).abs() < 0.02, "Q00 {}", q[(0, 0)]);
        assert!((q[(0, 1)] + 1.0).abs() < 0.02, "Q01 {}", q[(0, 1)]);
        assert_eq!(policy[0], 0);
    }

    #[test]
    fn mc_es_zero_step_size_freezes_q() {
        let mdp = make_gridworld(2, 2, &[3], -1.0, 5.0, 0.9);
        let (q, _) = mc_exploring_starts(&mdp, 100, 0.0, 1).unwrap();
        assert_eq!(q, DMatrix::zeros(4, 4));
    }

    /// The gridworld has tied optimal actions (several shortest paths), so
    /// learned policies are compared by optimal-set membership against the
    /// exact action values, not by argmax identity.
    fn optimal_action_agreement(mdp: &TabularMdp, policy: &[usize]) -> (usize, usize) {
        let (_, v_star, _) = value_iteration(mdp, 1e-12).unwrap();
        let q_star = q_from_policy(mdp, &v_star);
        let mut agree = 0;
        let mut total = 0;
        for x in 0..mdp.num_states() {
            if mdp.terminal[x] {
                continue;
            }
            total += 1;
            let best = (0..mdp.num_actions()).map(|u| q_star[(x, u)]).fold(f64::NEG_INFINITY, f64::max);
            if q_star[(x, policy[x])] > best - 1e-9 {
                agree += 1;
            }
        }
        (agree, total)
    }

    #[test]
    fn mc_es_gridworld_matches_value_iteration() {
        let mdp = make_gridworld(4, 4, &[15], -1.0, 10.0, 0.9);
        let (_, pi_mc) = mc_exploring_starts(&mdp, 200_000, 0.05, 13).unwrap();
        let (agree, total) = optimal_action_agreement(&mdp, &pi_mc);
        assert!(agree * 100 >= total * 95, "agreement {agree}/{total}");
    }

    #[test]
    fn mc_es_errors_on_non_episodic_task() {
        let mdp = single_state_mdp(1.0, 0.9);
        match mc_exploring_starts(&mdp, 2, 0.1, 1) {
            Err(Error::EpisodeCap { cap }) => assert_eq!(cap, EPISODE_CAP),
            other => panic!("expected episode-cap error, got {other:?}"),
        }
    }

    #[test]
    fn epsilon_one_is_uniform() {
        let pi = StochasticPolicy::epsilon_greedy(&[1, 0], 2, 1.0);
        for x in 0..2 {
            for u in 0..2 {
                assert_relative_eq!(pi.0[(x, u)], 0.5, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn epsilon_greedy_probabilities() {
        // |U| = 2, eps = 0.1: greedy 0.95, non-greedy 0.05
        let pi = StochasticPolicy::epsilon_greedy(&[0], 2, 0.1);
        assert_relative_eq!(pi.0[(0, 0)], 0.95, epsilon = 1e-15);
        assert_relative_eq!(pi.0[(0, 1)], 0.05, epsilon = 1e-15);
    }

    #[test]
    fn mc_epsilon_soft_gridworld() {
        let mdp = make_gridworld(4, 4, &[15], -1.0, 10.0, 0.9);
        let (q, _) = mc_epsilon_soft(&mdp, 0.4, 0.05, 200_000, 0.99999, 0, 17).unwrap();
        let pi_mc = greedy_from_q(&q);
        let (agree, total) = optimal_action_agreement(&mdp, &pi_mc);
        assert!(agree * 100 >= total * 90, "agreement {agree}/{total}");
    }

    #[test]
    fn mc_epsilon_soft_rejects_bad_eps() {
        let mdp = make_gridworld(2, 2, &[3], -1.0, 5.0, 0.9);
        assert!(mc_epsilon_soft(&mdp, 0.0, 0.1, 10, 1.0, 0, 1).is_err());
        assert!(mc_epsilon_soft(&mdp, 1.5, 0.1, 10, 1.0, 0, 1).is_err());
    }

    #[test]
    fn q_learning_hand_update_and_fixed_point() {
        // 1 state, 1 action, r = 1, discount 0.5, omega = 1:
        // first update from Q=0 gives exactly 1; the fixed point is 2
        let mdp = single_state_mdp(1.0, 0.5);
        let q1 = q_learning(&mdp, 1.0, 1.0, 1, Some(0), 1).unwrap();
        assert_relative_eq!(q1[(0, 0)], 1.0, epsilon = 1e-15);
        let q = q_learning(&mdp, 1.0, 1.0, 200, Some(0), 1).unwrap();
        assert!((q[(0, 0)] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn q_learning_gridworld_close_to_dp() {
        let mdp = make_gridworld(4, 4, &[15], -1.0, 10.0, 0.9);
        let (_, v_star, _) = value_iteration(&mdp, 1e-12).unwrap();
        let q_star = q_from_policy(&mdp, &v_star);
        let q = q_learning(&mdp, 0.1, 0.1, 500_000, None, 19).unwrap();
        let mut max_err: f64 = 0.0;
        for x in 0..16 {
            if mdp.terminal[x] {
                continue;
            }
            for u in 0..4 {
                max_err = max_err.max((q[(x, u)] - q_star[(x, u)]).abs());
            }
        }
        assert!(max_err < 0.05, "max |Q - Q*| = {max_err}");
        let pi = greedy_from_q(&q);
        let (agree, total) = optimal_action_agreement(&mdp, &pi);
        assert_eq!(agree, total, "greedy policy suboptimal on {} states", total - agree);
    }

    #[test]
    fn epsilon_greedy_improvement_theorem() {
        let mut rng = stream_rng(20, 0);
        for _ in 0..50 {
            let mdp = random_mdp(4, 2, 0.9, &mut rng);
            let pi = StochasticPolicy::uniform(4, 2);
            let v = policy_evaluation_exact(&mdp, &pi).unwrap();
            let q = q_from_policy(&mdp, &v);
            let greedy = greedy_from_q(&q);
            let eps_pi = StochasticPolicy::epsilon_greedy(&greedy, 2, 0.3);
            let v2 = policy_evaluation_exact(&mdp, &eps_pi).unwrap();
            for x in 0..4 {
                assert!(v2[x] >= v[x] - 1e-10);
            }
        }
    }

    #[test]
    fn robbins_monro_mc_evaluation_converges() {
        // fixed uniform policy on a 2-state MDP, step size 1/N per (x,u)
        let p = vec![
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.0, 1.0]),
        ];
        let r = vec![
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[0.5, -0.5, 0.0, 0.0]),
        ];
        let mdp = TabularMdp::new(p, r, 0.9, vec![false, true]).unwrap();
        let pi = StochasticPolicy::uniform(2, 2);
        let v = policy_evaluation_exact(&mdp, &pi).unwrap();
        let q_exact = q_from_policy(&mdp, &v);
        // first-visit MC with omega_N = 1/N
        let sim = EpisodeSimulator::new(&mdp);
        let mut q: DMatrix<f64> = DMatrix::zeros(2, 2);
        let mut counts = vec![0usize; 4];
        let mut rng = stream_rng(21, 0);
        let mut visits = 0usize;
        while visits < 100_000 {
            let mut x = 0usize;
            let mut transitions = Vec::new();
            while !mdp.terminal[x] {
                let u = sample_action(&[0.5, 0.5], &mut rng);
                let (next, rew) = sim.step(x, u, &mut rng);
                transitions.push((x, u, rew));
                x = next;
            }
            let mut g = 0.0;
            let mut rets = Vec::new();
            for &(sx, su, rew) in transitions.iter().rev() {
                g = rew + mdp.discount * g;
                rets.push((sx, su, g));
            }
            rets.reverse();
            let mut seen = [false; 4];
            for (sx, su, ret) in rets {
                let key = sx * 2 + su;
                if !seen[key] {
                    seen[key] = true;
                    counts[key] += 1;
                    visits += 1;
                    let w = 1.0 / counts[key] as f64;
                    q[(sx, su)] += w * (ret - q[(sx, su)]);
                }
            }
        }
        for x in 0..1usize {
            for u in 0..2usize {
                assert!(
                    (q[(x, u)] - q_exact[(x, u)]).abs() < 0.01,
                    "Q({x},{u}) = {} vs {}",
                    q[(x, u)],
                    q_exact[(x, u)]
                );
            }
        }
    }

    #[test]
    fn dag_single_edge() {
        let dag = Dag { nodes: 2, edges: vec![(0, 1, 5.0)], start: 0, goal: 1 };
        let (ctg, path) = backward_shortest_path(&dag).unwrap();
        assert_eq!(ctg[0], 5.0);
        assert_eq!(ctg[1], 0.0);
        assert_eq!(path, vec![0, 1]);
    }

    #[test]
    fn dag_diamond_picks_cheaper_branch() {
        // 0 -> 1 (1) -> 3 (3);  0 -> 2 (2) -> 3 (1): best is via 2, cost 3
        let dag = Dag {
            nodes: 4,
            edges: vec![(0, 1, 1.0), (1, 3, 3.0), (0, 2, 2.0), (2, 3, 1.0)],
            start: 0,
            goal: 3,
        };
        let (ctg, path) = backward_shortest_path(&dag).unwrap();
        assert_eq!(ctg[0], 3.0);
        assert_eq!(path, vec![0, 2, 3]);
    }

    #[test]
    fn dag_errors() {
        let cyclic = Dag { nodes: 2, edges: vec![(0, 1, 1.0), (1, 0, 1.0)], start: 0, goal: 1 };
        assert!(matches!(backward_shortest_path(&cyclic), Err(Error::Cyclic)));
        let unreachable = Dag { nodes: 3, edges: vec![(1, 2, 1.0)], start: 0, goal: 2 };
        assert!(matches!(backward_shortest_path(&unreachable), Err(Error::NoPath)));
    }

    #[test]
    fn dag_matches_forward_enumeration() {
        // random layered DAGs vs brute-force path enumeration
        let mut rng = stream_rng(22, 0);
        for _ in 0..100 {
            let layers = 5;
            let per = 4;
            let nodes = layers * per + 2;
            let start = nodes - 2;
            let goal = nodes - 1;
            let mut edges = Vec::new();
            for j in 0..per {
                edges.push((start, j, rng.random_range(0.1..5.0)));
                edges.push(((layers - 1) * per + j, goal, rng.random_range(0.1..5.0)));
            }
            for l in 0..layers - 1 {
                for j in 0..per {
                    for k in 0..per {
                        if rng.random::<f64>() < 0.6 {
                            edges.push((l * per + j, (l + 1) * per + k, rng.random_range(0.1..5.0)));
                        }
                    }
                }
            }
            let dag = Dag { nodes, edges: edges.clone(), start, goal };
            match backward_shortest_path(&dag) {
                Ok((ctg, path)) => {
                    // forward enumeration by DFS
                    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nodes];
                    for &(a, b, w) in &edges {
                        adj[a].push((b, w));
                    }
                    fn best(v: usize, goal: usize, adj: &[Vec<(usize, f64)>]) -> f64 {
                        if v == goal {
                            return 0.0;
                        }
                        adj[v]
                            .iter()
                            .map(|&(c, w)| w + best(c, goal, adj))
                            .fold(f64::INFINITY, f64::min)
                    }
                    let bf = best(start, goal, &adj);
                    assert!((ctg[start] - bf).abs() < 1e-10);
                    // path cost equals cost-to-go
                    let mut cost = 0.0;
                    for w in path.windows(2) {
                        cost += adj[w[0]].iter().find(|&&(c, _)| c == w[1]).unwrap().1;
                    }
                    assert!((cost - ctg[start]).abs() < 1e-10);
                }
                Err(Error::NoPath) => {} // sparse instance; fine
                Err(e) => panic!("unexpected error {e}"),
            }
        }
    }

    #[test]
    fn parse_round_trips_small_mdp() {
        let text = "2,2,0.9\nP 0 0 1 1.0\nP 0 1 1 1.0\nP 1 0 0 0.5\nP 1 0 1 0.5\nP 1 1 1 1.0\nR 0 0 1 2.0\nT 1\n";
        let mdp = TabularMdp::parse(text).unwrap();
        assert_eq!(mdp.num_states(), 2);
        assert_eq!(mdp.num_actions(), 2);
        assert_eq!(mdp.discount, 0.9);
        assert!(mdp.terminal[1]);
        assert_eq!(mdp.r[0][(0, 1)], 2.0);
        // bad rows reported with line numbers
        let bad = "2,2,0.9\nP 0 0 1 oops\n";
        match TabularMdp::parse(bad) {
            Err(Error::Config { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn simulator_transition_frequencies() {
        // chi-square-ish check: empirical frequencies close to P
        let p = vec![DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 1.0, 0.0])];
        let r = vec![DMatrix::zeros(2, 2)];
        let mdp = TabularMdp::new(p, r, 0.9, vec![false, false]).unwrap();
        let sim = EpisodeSimulator::new(&mdp);
        let mut rng = stream_rng(23, 0);
        let n = 50_000;
        let mut hits = 0;
        for _ in 0..n {
            let (next, _) = sim.step(0, 0, &mut rng);
            if next == 0 {
                hits += 1;
            }
        }
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.3).abs() < 0.01, "freq {freq}");
    }
}
