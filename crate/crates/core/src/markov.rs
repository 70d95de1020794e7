//! The battery-level Markov chain induced by a policy, its steady state,
//! and the achievable-rate functionals built on top of it.
//!
//! For a policy `p(x1, x2 | u)` with stationary law `pi`:
//!
//! - relay bound: `sum_u pi_u H(X1|u | X2|u)`
//! - receiver bound: `sum_u pi_u H(X2|u)` on a noiseless second hop, or
//!   `sum_u pi_u I(X2|u; Y3|u)` through a BSC(p)
//!
//! and the achievable rate is the smaller of the two. A policy whose chain
//! lacks a unique steady state (decomposable, or no self-loop in its closed
//! class) is reported with all rates at zero.

use serde::{Deserialize, Serialize};

use crate::channel::{validate_policy, ChannelConfig, PolicyPmf, Symbol};
use crate::error::{Error, Result};
use crate::info::{binary_entropy, bsc_mutual_information};

pub const ROW_TOLERANCE: f64 = 1e-12;
pub const STEADY_STATE_TOLERANCE: f64 = 1e-10;

/// Dense row-stochastic matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl TransitionMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidConfig("transition matrix must be square and non-empty".into()));
        }
        Self::from_flat(dim, rows.into_iter().flatten().collect())
    }

    /// Row-major entries, validated like [`Self::from_rows`].
    pub fn from_flat(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 || entries.len() != dim * dim {
            return Err(Error::InvalidConfig("transition matrix must be square and non-empty".into()));
        }
        let m = TransitionMatrix { dim, entries };
        m.check_rows()?;
        Ok(m)
    }

    fn check_rows(&self) -> Result<()> {
        for u in 0..self.dim {
            let row = self.row(u);
            if row.iter().any(|&q| !q.is_finite() || q < 0.0) {
                return Err(Error::InvalidConfig(format!("row {u} has negative or non-finite entries")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::InvalidConfig(format!("row {u} sums to {s}")));
            }
        }
        Ok(())
    }

    fn zeros(dim: usize) -> Self {
        TransitionMatrix {
            dim,
            entries: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for u in 0..dim {
            m.entries[u * dim + u] = 1.0;
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn entry(&self, from: usize, to: usize) -> f64 {
        self.entries[from * self.dim + to]
    }

    #[inline]
    pub fn row(&self, from: usize) -> &[f64] {
        &self.entries[from * self.dim..(from + 1) * self.dim]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|u| self.row(u).to_vec()).collect()
    }

    /// Successors along positive-probability edges.
    pub fn successors(&self, from: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(from)
            .iter()
            .enumerate()
            .filter(|(_, &q)| q > 0.0)
            .map(|(v, _)| v)
    }

    /// `pi * P`.
    pub fn left_multiply(&self, pi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (u, &w) in pi.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (v, &q) in self.row(u).iter().enumerate() {
                out[v] += w * q;
            }
        }
        out
    }
}

/// `entry(u, v)` sums the policy mass of every `(x1, x2)` moving `u` to `v`.
pub fn build_transition_matrix(pmf: &PolicyPmf, cfg: &ChannelConfig) -> Result<TransitionMatrix> {
    let violations = validate_policy(pmf, cfg);
    if !violations.is_empty() {
        return Err(Error::InvalidPolicy(violations.iter().map(|v| v.to_string()).collect()));
    }
    Ok(transition_matrix_unchecked(pmf, cfg))
}

pub(crate) fn transition_matrix_unchecked(pmf: &PolicyPmf, cfg: &ChannelConfig) -> TransitionMatrix {
    let dim = cfg.num_states();
    let mut m = TransitionMatrix::zeros(dim);
    for u in 0..dim {
        let s = pmf.state(u);
        for x1 in Symbol::ALL {
            for x2 in Symbol::ALL {
                let q = s.prob(x1, x2);
                if q > 0.0 {
                    let v = cfg.step(u, x1, x2);
                    m.entries[u * dim + v] += q;
                }
            }
        }
    }
    m
}

/// Strongly connected components of the positive-edge digraph (Tarjan,
/// iterative). Returns the component id of each vertex.
fn strongly_connected_components(p: &TransitionMatrix) -> (Vec<usize>, usize) {
    let n = p.dim();
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNSEEN; n];
    let mut stack = Vec::new();
    let mut next_index = 0;
    let mut n_comp = 0;

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        // (vertex, next successor column to inspect)
        let mut work: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(top) = work.len().checked_sub(1) {
            let (v, mut col) = work[top];
            let row = p.row(v);
            let mut descended = false;
            while col < n {
                let w = col;
                col += 1;
                if row[w] <= 0.0 {
                    continue;
                }
                if index[w] == UNSEEN {
                    work[top].1 = col;
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    work.push((w, 0));
                    descended = true;
                    break;
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            }
            if descended {
                continue;
            }
            work.pop();
            if let Some(&(parent, _)) = work.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp[w] = n_comp;
                    if w == v {
                        break;
                    }
                }
                n_comp += 1;
            }
        }
    }
    (comp, n_comp)
}

/// The unique closed communicating class, if exactly one exists and every
/// state can reach it.
pub fn closed_class(p: &TransitionMatrix) -> Option<Vec<usize>> {
    if p.dim() <= 64 {
        closed_class_small(p)
    } else {
        closed_class_scc(p)
    }
}

fn closed_class_scc(p: &TransitionMatrix) -> Option<Vec<usize>> {
    let n = p.dim();
    let (comp, n_comp) = strongly_connected_components(p);
    let mut closed = vec![true; n_comp];
    for u in 0..n {
        for v in p.successors(u) {
            if comp[v] != comp[u] {
                closed[comp[u]] = false;
            }
        }
    }
    let mut closed_ids = (0..n_comp).filter(|&c| closed[c]);
    let only = closed_ids.next()?;
    if closed_ids.next().is_some() {
        return None;
    }
    let members: Vec<usize> = (0..n).filter(|&u| comp[u] == only).collect();

    // Backward search from the class must cover every state.
    let mut reaches = vec![false; n];
    let mut frontier = members.clone();
    for &u in &members {
        reaches[u] = true;
    }
    while let Some(v) = frontier.pop() {
        for u in 0..n {
            if !reaches[u] && p.entry(u, v) > 0.0 {
                reaches[u] = true;
                frontier.push(u);
            }
        }
    }
    reaches.iter().all(|&r| r).then_some(members)
}

/// Bitmask transitive closure; a state is recurrent iff everything it
/// reaches reaches it back.
fn closed_class_small(p: &TransitionMatrix) -> Option<Vec<usize>> {
    let n = p.dim();
    let mut reach = [0u64; 64];
    for (u, r) in reach.iter_mut().enumerate().take(n) {
        *r = 1 << u;
        for v in p.successors(u) {
            *r |= 1 << v;
        }
    }
    for k in 0..n {
        for u in 0..n {
            if reach[u] >> k & 1 == 1 {
                reach[u] |= reach[k];
            }
        }
    }
    let recurrent = |u: usize| (0..n).all(|v| reach[u] >> v & 1 == 0 || reach[v] >> u & 1 == 1);
    let first = (0..n).find(|&u| recurrent(u))?;
    let class = reach[first];
    if (first + 1..n).any(|u| recurrent(u) && reach[u] != class) {
        return None;
    }
    Some((0..n).filter(|&u| class >> u & 1 == 1).collect())
}

/// Sufficient condition for a unique steady state: the chain is
/// indecomposable and some state of its closed class returns to itself in
/// one step.
pub fn check_lemma1(p: &TransitionMatrix) -> bool {
    closed_class(p).is_some_and(|class| class.iter().any(|&u| p.entry(u, u) > 0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pi: Vec<f64>,
}

impl SteadyState {
    #[cfg(test)]
    pub(crate) fn from_probs(pi: Vec<f64>) -> Self {
        SteadyState { pi }
    }

    #[inline]
    pub fn probs(&self) -> &[f64] {
        &self.pi
    }

    #[inline]
    pub fn prob(&self, u: usize) -> f64 {
        self.pi[u]
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    /// `max_v |(pi P)_v - pi_v|`.
    pub fn residual(&self, p: &TransitionMatrix) -> f64 {
        p.left_multiply(&self.pi)
            .iter()
            .zip(&self.pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Inverse-CDF draw from `pi`.
    pub fn sample(&self, uniform: f64) -> usize {
        let mut acc = 0.0;
        let mut last = 0;
        for (u, &q) in self.pi.iter().enumerate() {
            if q <= 0.0 {
                continue;
            }
            acc += q;
            last = u;
            if uniform < acc {
                return u;
            }
        }
        last
    }
}

/// Solves `pi (P - I) = 0`, `sum pi = 1` directly, with one balance
/// equation replaced by the normalization.
pub fn steady_state(p: &TransitionMatrix) -> Result<SteadyState> {
    if !check_lemma1(p) {
        return Err(Error::NoSteadyState);
    }
    let n = p.dim();
    // Row v of the system: sum_u pi_u (P[u][v] - delta_uv) = 0; the last
    // row becomes sum_u pi_u = 1.
    let mut a = vec![0.0; n * n + n];
    let (a, b) = a.split_at_mut(n * n);
    for v in 0..n - 1 {
        for u in 0..n {
            a[v * n + u] = p.entry(u, v) - if u == v { 1.0 } else { 0.0 };
        }
    }
    a[(n - 1) * n..].fill(1.0);
    b[n - 1] = 1.0;
    if !solve_dense(a, b, n) {
        return Err(Error::NoSteadyState);
    }
    let mut pi = b.to_vec();
    for q in pi.iter_mut() {
        if *q < 0.0 {
            *q = 0.0;
        }
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|q| *q /= total);
    let residual = (0..n)
        .map(|v| ((0..n).map(|u| pi[u] * p.entry(u, v)).sum::<f64>() - pi[v]).abs())
        .fold(0.0, f64::max);
    if residual > STEADY_STATE_TOLERANCE {
        return Err(Error::NoSteadyState);
    }
    Ok(SteadyState { pi })
}

/// Gaussian elimination with partial pivoting; `a` is row-major `n x n`.
/// The solution overwrites `b`.
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    for col in 0..n {
        let mut pivot = col;
        for i in col + 1..n {
            if a[i * n + col].abs() > a[pivot * n + col].abs() {
                pivot = i;
            }
        }
        if a[pivot * n + col].abs() < 1e-300 {
            return false;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
            }
            b.swap(pivot, col);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row * n + k] * b[k];
        }
        b[row] = s / a[row * n + row];
    }
    true
}

/// `sum_u pi_u H(X1|u | X2|u)`.
pub fn relay_bound(pmf: &PolicyPmf, pi: &SteadyState) -> f64 {
    pi.probs()
        .iter()
        .enumerate()
        .map(|(u, &w)| w * pmf.state(u).conditional_entropy_x1_given_x2())
        .sum()
}

/// `sum_u pi_u H(X2|u)`.
pub fn receiver_bound_noiseless(pmf: &PolicyPmf, pi: &SteadyState) -> f64 {
    pi.probs()
        .iter()
        .enumerate()
        .map(|(u, &w)| w * binary_entropy(pmf.state(u).x2_one()))
        .sum()
}

/// `sum_u pi_u I(X2|u; Y3|u)` through a BSC with crossover `p`.
pub fn receiver_bound_noisy(pmf: &PolicyPmf, pi: &SteadyState, p: f64) -> f64 {
    pi.probs()
        .iter()
        .enumerate()
        .map(|(u, &w)| w * bsc_mutual_information(pmf.state(u).x2_one(), p))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub relay_bound: f64,
    pub receiver_bound: f64,
    pub achievable: f64,
    pub steady_state_valid: bool,
}

impl RateReport {
    pub fn infeasible() -> Self {
        RateReport {
            relay_bound: 0.0,
            receiver_bound: 0.0,
            achievable: 0.0,
            steady_state_valid: false,
        }
    }
}

/// Full evaluation of one policy. Infeasibility is encoded in the report.
pub fn rate_report(pmf: &PolicyPmf, cfg: &ChannelConfig) -> RateReport {
    if !validate_policy(pmf, cfg).is_empty() {
        return RateReport::infeasible();
    }
    rate_report_unchecked(pmf, cfg)
}

pub(crate) fn rate_report_unchecked(pmf: &PolicyPmf, cfg: &ChannelConfig) -> RateReport {
    let p = transition_matrix_unchecked(pmf, cfg);
    let Ok(pi) = steady_state(&p) else {
        return RateReport::infeasible();
    };
    report_from_steady_state(pmf, &pi, cfg.crossover())
}

pub fn report_from_steady_state(pmf: &PolicyPmf, pi: &SteadyState, crossover: f64) -> RateReport {
    let relay = relay_bound(pmf, pi).clamp(0.0, 1.0);
    let receiver = if crossover > 0.0 {
        receiver_bound_noisy(pmf, pi, crossover)
    } else {
        receiver_bound_noiseless(pmf, pi)
    }
    .clamp(0.0, 1.0);
    RateReport {
        relay_bound: relay,
        receiver_bound: receiver,
        achievable: relay.min(receiver),
        steady_state_valid: true,
    }
}

/// Chain over consecutive state pairs `(U_i, U_{i+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairChain {
    pub pairs: Vec<(usize, usize)>,
    pub matrix: TransitionMatrix,
}

impl PairChain {
    pub fn index_of(&self, pair: (usize, usize)) -> Option<usize> {
        self.pairs.iter().position(|&p| p == pair)
    }

    /// Stationary law marginalized onto the first coordinate.
    pub fn first_marginal(&self, pair_pi: &SteadyState, num_states: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_states];
        for (i, &(u, _)) in self.pairs.iter().enumerate() {
            out[u] += pair_pi.prob(i);
        }
        out
    }
}

/// Lifts the battery chain to reachable pairs; `(u, v) -> (v, w)` with
/// probability `P(v, w)`.
pub fn pair_chain(pmf: &PolicyPmf, cfg: &ChannelConfig) -> Result<PairChain> {
    let base = build_transition_matrix(pmf, cfg)?;
    let n = base.dim();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| base.successors(u).map(move |v| (u, v)).collect::<Vec<_>>())
        .collect();
    let mut pos = vec![usize::MAX; n * n];
    for (i, &(u, v)) in pairs.iter().enumerate() {
        pos[u * n + v] = i;
    }
    let k = pairs.len();
    let mut m = TransitionMatrix::zeros(k);
    for (i, &(_, v)) in pairs.iter().enumerate() {
        for w in base.successors(v) {
            m.entries[i * k + pos[v * n + w]] = base.entry(v, w);
        }
    }
    Ok(PairChain { pairs, matrix: m })
}

/// True when every reachable pair `(u, v)` is produced by a single relay
/// symbol, i.e. `X2` is a deterministic function of the pair state.
pub fn x2_determined_by_pair(pmf: &PolicyPmf, cfg: &ChannelConfig) -> bool {
    (0..cfg.num_states()).all(|u| {
        let s = pmf.state(u);
        let mut seen: Vec<(usize, Symbol)> = Vec::new();
        for x1 in Symbol::ALL {
            for x2 in Symbol::ALL {
                if s.prob(x1, x2) > 0.0 {
                    let v = cfg.step(u, x1, x2);
                    if seen.iter().any(|&(w, y)| w == v && y != x2) {
                        return false;
                    }
                    seen.push((v, x2));
                }
            }
        }
        true
    })
}
