//! Maximizes the achievable rate over per-state joint pmfs.
//!
//! Search runs in three stages: a full-factorial grid over the simplex
//! parameterization, coordinate-wise refinement of the grid winner with
//! shrinking steps, and refinement from seeded random restarts. Policies
//! whose chain fails the steady-state condition score zero.

use std::cmp::Ordering;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelConfig, PolicyPmf, StatePmf};
use crate::error::{Error, Result};
use crate::markov::{rate_report_unchecked, RateReport};
use crate::rng;

pub const DEFAULT_GRID_BUDGET: f64 = 1e7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerOptions {
    pub grid_resolution: usize,
    pub refine_iters: usize,
    pub refine_shrink: f64,
    pub seed: u64,
    pub restarts: usize,
    /// Upper bound on `grid_resolution ^ dimension`.
    pub grid_budget: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            grid_resolution: 11,
            refine_iters: 200,
            refine_shrink: 0.5,
            seed: 0,
            restarts: 8,
            grid_budget: DEFAULT_GRID_BUDGET,
        }
    }
}

impl OptimizerOptions {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if self.grid_resolution < 2 {
            return Err(Error::InvalidConfig("grid_resolution must be at least 2".into()));
        }
        if self.refine_iters == 0 {
            return Err(Error::InvalidConfig("refine_iters must be positive".into()));
        }
        if !(self.refine_shrink > 0.0 && self.refine_shrink < 1.0) {
            return Err(Error::InvalidConfig("refine_shrink must lie in (0, 1)".into()));
        }
        if !(self.grid_budget >= 1.0) {
            return Err(Error::InvalidConfig("grid_budget must be at least 1".into()));
        }
        Ok(())
    }
}

/// Free parameters of one state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateParams {
    /// Below the energy cost: only `P(x1 = 1)`; `x2` is pinned to 0.
    Forced,
    /// `P(00), P(01), P(10)`; `P(11)` is the remainder.
    Full,
}

impl StateParams {
    pub fn len(self) -> usize {
        match self {
            StateParams::Forced => 1,
            StateParams::Full => 3,
        }
    }

    pub fn is_empty(self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    pub states: Vec<StateParams>,
}

impl ParameterSpace {
    pub fn dimension(&self) -> usize {
        self.states.iter().map(|s| s.len()).sum()
    }

    /// `None` when a simplex remainder is negative.
    pub fn policy(&self, params: &[f64]) -> Option<PolicyPmf> {
        debug_assert_eq!(params.len(), self.dimension());
        let mut out = Vec::with_capacity(self.states.len());
        let mut i = 0;
        for kind in &self.states {
            let probs = match kind {
                StateParams::Forced => {
                    let p1 = params[i];
                    [1.0 - p1, 0.0, p1, 0.0]
                }
                StateParams::Full => {
                    let (a, b, c) = (params[i], params[i + 1], params[i + 2]);
                    let rest = 1.0 - a - b - c;
                    if rest < -1e-12 {
                        return None;
                    }
                    [a, b, c, rest.max(0.0)]
                }
            };
            if probs.iter().any(|&q| q < 0.0) {
                return None;
            }
            out.push(StatePmf::from_raw(probs));
            i += kind.len();
        }
        Some(PolicyPmf::from_states(out))
    }

    /// Inverse of [`ParameterSpace::policy`].
    pub fn params_of(&self, pmf: &PolicyPmf) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dimension());
        for (u, kind) in self.states.iter().enumerate() {
            let p = pmf.state(u).probs();
            match kind {
                StateParams::Forced => out.push(p[2]),
                StateParams::Full => out.extend_from_slice(&p[..3]),
            }
        }
        out
    }
}

/// One free parameter below the energy cost, three at or above it.
pub fn parameterize(cfg: &ChannelConfig) -> ParameterSpace {
    ParameterSpace {
        states: (0..cfg.num_states())
            .map(|u| {
                if cfg.can_transmit_one(u) {
                    StateParams::Full
                } else {
                    StateParams::Forced
                }
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub params: Vec<f64>,
    pub policy: PolicyPmf,
    pub report: RateReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub best_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best_policy: PolicyPmf,
    pub best_report: RateReport,
    pub evaluations: u64,
    pub stage_trace: Vec<StageRecord>,
    /// False when no candidate satisfied the steady-state condition.
    pub feasible: bool,
}

/// Per-state grid choices in lexicographic order of their parameters.
fn state_choices(kind: StateParams, resolution: usize) -> Vec<Vec<f64>> {
    let r = resolution - 1;
    let level = |i: usize| i as f64 / r as f64;
    match kind {
        StateParams::Forced => (0..=r).map(|i| vec![level(i)]).collect(),
        StateParams::Full => {
            let mut out = Vec::new();
            for a in 0..=r {
                for b in 0..=r - a {
                    for c in 0..=r - a - b {
                        out.push(vec![level(a), level(b), level(c)]);
                    }
                }
            }
            out
        }
    }
}

fn check_budget(space: &ParameterSpace, resolution: usize, budget: f64) -> Result<()> {
    let points = (resolution as f64).powi(space.dimension() as i32);
    if points > budget {
        return Err(Error::BudgetExceeded { points, budget });
    }
    Ok(())
}

struct Grid {
    choices: Vec<Vec<Vec<f64>>>,
    total: u64,
}

impl Grid {
    fn new(space: &ParameterSpace, resolution: usize) -> Self {
        let choices: Vec<_> = space
            .states
            .iter()
            .map(|&k| state_choices(k, resolution))
            .collect();
        let total = choices.iter().map(|c| c.len() as u64).product();
        Grid { choices, total }
    }

    /// Mixed-radix decode with the first state most significant.
    fn params(&self, mut idx: u64) -> Vec<f64> {
        let mut picks = vec![0usize; self.choices.len()];
        for (u, c) in self.choices.iter().enumerate().rev() {
            let n = c.len() as u64;
            picks[u] = (idx % n) as usize;
            idx /= n;
        }
        picks
            .iter()
            .enumerate()
            .flat_map(|(u, &k)| self.choices[u][k].iter().copied())
            .collect()
    }
}

/// Full-factorial evaluation in deterministic (lexicographic) order.
/// Combinations with a negative simplex remainder are skipped.
pub fn evaluate_grid(cfg: &ChannelConfig, resolution: usize) -> Result<Vec<GridPoint>> {
    evaluate_grid_with_budget(cfg, resolution, DEFAULT_GRID_BUDGET)
}

pub fn evaluate_grid_with_budget(cfg: &ChannelConfig, resolution: usize, budget: f64) -> Result<Vec<GridPoint>> {
    if resolution < 2 {
        return Err(Error::InvalidConfig("grid resolution must be at least 2".into()));
    }
    let space = parameterize(cfg);
    check_budget(&space, resolution, budget)?;
    let grid = Grid::new(&space, resolution);
    Ok((0..grid.total)
        .into_par_iter()
        .map(|i| {
            let params = grid.params(i);
            let policy = space.policy(&params).expect("grid points lie in the simplex");
            let report = rate_report_unchecked(&policy, cfg);
            GridPoint { params, policy, report }
        })
        .collect())
}

#[derive(Debug, Clone)]
struct Candidate {
    params: Vec<f64>,
    rate: f64,
}

/// Higher rate wins; equal rates go to the lexicographically smaller vector.
fn better(a: &Candidate, b: &Candidate) -> Ordering {
    match a.rate.total_cmp(&b.rate) {
        Ordering::Equal => b
            .params
            .iter()
            .zip(&a.params)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal),
        o => o,
    }
}

fn pick(a: Candidate, b: Candidate) -> Candidate {
    if better(&b, &a) == Ordering::Greater {
        b
    } else {
        a
    }
}

struct Objective<'a> {
    space: &'a ParameterSpace,
    cfg: &'a ChannelConfig,
}

impl Objective<'_> {
    /// Achievable rate; policies without a unique steady state score -1 so
    /// that any valid policy beats them, even at rate 0.
    fn rate(&self, params: &[f64]) -> f64 {
        match self.space.policy(params) {
            Some(p) => {
                let r = rate_report_unchecked(&p, self.cfg);
                if r.steady_state_valid { r.achievable } else { -1.0 }
            }
            None => -1.0,
        }
    }
}

/// One elementary move: `(offset, kind, from, to)`.
type Move = (usize, StateParams, usize, usize);

fn moves(space: &ParameterSpace) -> Vec<Move> {
    let mut out = Vec::new();
    let mut offset = 0;
    for &kind in &space.states {
        let atoms = kind.len() + 1;
        for from in 0..atoms {
            for to in (0..atoms).filter(|&t| t != from) {
                out.push((offset, kind, from, to));
            }
        }
        offset += kind.len();
    }
    out
}

/// Step ratios tried for the second half of a compound move.
const PAIR_RATIOS: [f64; 3] = [1.0, 0.5, 0.25];

/// Coordinate search in atom space: every move shifts `step` of mass from
/// one atom of a state to another. When no single move helps, pairs of
/// moves are tried before the step shrinks; the objective is a minimum of
/// two smooth functions and its ridge is only reachable that way.
fn refine(obj: &Objective<'_>, start: Candidate, opts: &OptimizerOptions, evals: &mut u64) -> Candidate {
    let all = moves(obj.space);
    let mut cur = start;
    let mut step = 1.0 / (opts.grid_resolution - 1) as f64 / 2.0;
    let mut sweeps = 0;
    while sweeps < opts.refine_iters && step > 1e-10 {
        sweeps += 1;
        let mut improved = false;
        for &(offset, kind, from, to) in &all {
            let Some(trial) = shift(&cur.params, kind, offset, from, to, step) else {
                continue;
            };
            *evals += 1;
            let rate = obj.rate(&trial);
            if rate > cur.rate {
                cur = Candidate { params: trial, rate };
                improved = true;
            }
        }
        if !improved {
            'pairs: for (i, &(o1, k1, f1, t1)) in all.iter().enumerate() {
                let Some(first) = shift(&cur.params, k1, o1, f1, t1, step) else {
                    continue;
                };
                for &(o2, k2, f2, t2) in &all[i + 1..] {
                    if o1 == o2 && (f2, t2) == (t1, f1) {
                        continue;
                    }
                    for r in PAIR_RATIOS {
                        let Some(trial) = shift(&first, k2, o2, f2, t2, step * r) else {
                            continue;
                        };
                        *evals += 1;
                        let rate = obj.rate(&trial);
                        if rate > cur.rate {
                            cur = Candidate { params: trial, rate };
                            improved = true;
                            break 'pairs;
                        }
                    }
                }
            }
        }
        if !improved {
            step *= opts.refine_shrink;
        }
    }
    cur
}

/// Moves `step` of probability from atom `from` to atom `to` within one
/// state. Atom indices follow the parameter layout, with the last atom the
/// implicit remainder. `None` if the source atom has no mass left.
fn shift(params: &[f64], kind: StateParams, offset: usize, from: usize, to: usize, step: f64) -> Option<Vec<f64>> {
    let len = kind.len();
    let mut atoms = [0.0; 4];
    atoms[..len].copy_from_slice(&params[offset..offset + len]);
    atoms[len] = 1.0 - atoms[..len].iter().sum::<f64>();
    let amount = step.min(atoms[from]);
    if amount <= 0.0 {
        return None;
    }
    atoms[from] -= amount;
    atoms[to] += amount;
    let mut out = params.to_vec();
    out[offset..offset + len].copy_from_slice(&atoms[..len]);
    Some(out)
}

fn random_params(space: &ParameterSpace, rng: &mut impl Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(space.dimension());
    for kind in &space.states {
        match kind {
            StateParams::Forced => out.push(rng.gen::<f64>()),
            StateParams::Full => {
                // Uniform on the 3-simplex via normalized exponentials.
                let e: [f64; 4] = std::array::from_fn(|_| -(1.0 - rng.gen::<f64>()).ln());
                let s: f64 = e.iter().sum();
                out.extend(e[..3].iter().map(|x| x / s));
            }
        }
    }
    out
}

pub fn optimize(cfg: &ChannelConfig, opts: &OptimizerOptions) -> Result<OptimizationResult> {
    cfg.validate()?;
    opts.validate()?;
    let space = parameterize(cfg);
    check_budget(&space, opts.grid_resolution, opts.grid_budget)?;
    let obj = Objective { space: &space, cfg };
    let mut evaluations = 0u64;
    let mut trace = Vec::new();

    let grid = Grid::new(&space, opts.grid_resolution);
    let grid_best = (0..grid.total)
        .into_par_iter()
        .map(|i| {
            let params = grid.params(i);
            let rate = obj.rate(&params);
            Candidate { params, rate }
        })
        .reduce_with(pick)
        .expect("grid is never empty");
    evaluations += grid.total;
    trace.push(StageRecord {
        stage: "grid".into(),
        best_rate: grid_best.rate,
    });

    let mut best = refine(&obj, grid_best, opts, &mut evaluations);
    trace.push(StageRecord {
        stage: "refine".into(),
        best_rate: best.rate,
    });

    let restarts: Vec<(Candidate, u64)> = (0..opts.restarts)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::stream(opts.seed, &[rng::tag::RESTART, k as u64]);
            let mut evals = 0u64;
            let mut start = None;
            for _ in 0..64 {
                let params = random_params(&space, &mut r);
                evals += 1;
                let rate = obj.rate(&params);
                if rate > 0.0 {
                    start = Some(Candidate { params, rate });
                    break;
                }
            }
            match start {
                Some(s) => (refine(&obj, s, opts, &mut evals), evals),
                None => (Candidate { params: vec![], rate: -1.0 }, evals),
            }
        })
        .collect();
    for (k, (cand, evals)) in restarts.into_iter().enumerate() {
        evaluations += evals;
        if cand.rate >= 0.0 {
            best = pick(best, cand);
        }
        trace.push(StageRecord {
            stage: format!("restart-{k}"),
            best_rate: best.rate,
        });
    }

    let best_policy = space.policy(&best.params).expect("best candidate lies in the simplex");
    let best_report = crate::markov::rate_report(&best_policy, cfg);
    Ok(OptimizationResult {
        feasible: best_report.steady_state_valid,
        best_policy,
        best_report,
        evaluations,
        stage_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions() {
        assert_eq!(parameterize(&ChannelConfig::noiseless(1, 1).unwrap()).dimension(), 4);
        assert_eq!(parameterize(&ChannelConfig::noiseless(2, 2).unwrap()).dimension(), 5);
        for m in 1..=4 {
            let cfg = ChannelConfig::noiseless(m, m).unwrap();
            assert_eq!(parameterize(&cfg).dimension(), m + 3);
        }
    }

    #[test]
    fn params_round_trip() {
        let cfg = ChannelConfig::noiseless(2, 1).unwrap();
        let space = parameterize(&cfg);
        let params = vec![0.3, 0.1, 0.2, 0.3, 0.25, 0.25, 0.25];
        let policy = space.policy(&params).unwrap();
        assert!(crate::channel::validate_policy(&policy, &cfg).is_empty());
        assert_eq!(space.params_of(&policy), params);
        assert!(space.policy(&[0.3, 0.5, 0.5, 0.1, 0.25, 0.25, 0.25]).is_none());
    }

    #[test]
    fn small_grid_count() {
        let cfg = ChannelConfig::noiseless(1, 1).unwrap();
        let pts = evaluate_grid(&cfg, 2).unwrap();
        // 2 choices below the cost, 4 simplex vertices above it.
        assert_eq!(pts.len(), 2 * 4);
        assert!(pts.iter().all(|p| (0.0..=1.0).contains(&p.report.achievable)));
    }

    #[test]
    fn budget_error() {
        let cfg = ChannelConfig::noiseless(3, 1).unwrap();
        assert!(matches!(evaluate_grid(&cfg, 21), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn useless_second_hop() {
        let cfg = ChannelConfig::new(1, 1, 0.5).unwrap();
        let opts = OptimizerOptions { restarts: 2, ..Default::default() };
        let r = optimize(&cfg, &opts).unwrap();
        assert_eq!(r.best_report.achievable, 0.0);
    }

    #[test]
    fn trace_monotone_and_deterministic() {
        let cfg = ChannelConfig::noiseless(1, 1).unwrap();
        let opts = OptimizerOptions { seed: 3, ..Default::default() };
        let a = optimize(&cfg, &opts).unwrap();
        let b = optimize(&cfg, &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.stage_trace.windows(2).all(|w| w[0].best_rate <= w[1].best_rate));
        assert!(a.feasible);
        let recomputed = crate::markov::rate_report(&a.best_policy, &cfg);
        assert!((recomputed.achievable - a.best_report.achievable).abs() <= 1e-12);
    }
}
