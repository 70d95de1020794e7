//! Monte Carlo harness and brute-force oracles.

use num_bigint::RandBigInt;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{next_state, ChannelConfig, PolicyPmf, StatePmf, Symbol};
use crate::info::bsc_mutual_information;
use crate::codec::{make_plan, run_chain, BlockPlan, Message, PlanOptions, RunOptions, SimResult};
use crate::error::{Error, Result};
use crate::markov::{build_transition_matrix, check_lemma1, steady_state, TransitionMatrix};
use crate::rng::{self, tag, unit};

/// Default context length of [`empirical_entropy_rate`].
pub const DEFAULT_ENTROPY_ORDER: usize = 2;

/// Default cap on the number of policies the grid oracle evaluates.
pub const DEFAULT_ORACLE_BUDGET: f64 = 1e8;

/// Flips `x[i]` with probability `p`, using a stream addressed by position.
pub fn apply_bsc(x: &[Symbol], p: f64, seed: u64) -> Vec<Symbol> {
    apply_bsc_at(x, p, seed, 0)
}

/// [`apply_bsc`] for a slice starting at absolute position `offset`:
/// `apply_bsc(x, p, s)[a..b] == apply_bsc_at(&x[a..b], p, s, a)`.
pub fn apply_bsc_at(x: &[Symbol], p: f64, seed: u64, offset: u64) -> Vec<Symbol> {
    if p <= 0.0 {
        return x.to_vec();
    }
    x.iter()
        .enumerate()
        .map(|(i, &s)| {
            let draw = unit(rng::derive(seed, &[tag::BSC, offset + i as u64]));
            if draw < p {
                s.flip()
            } else {
                s
            }
        })
        .collect()
}

/// One simulated run of the battery chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainPath {
    pub states: Vec<usize>,
    pub x1: Vec<Symbol>,
    pub x2: Vec<Symbol>,
}

/// Runs the chain for `steps` slots from a steady-state start, drawing
/// `(x1, x2)` from the policy in every slot.
pub fn simulate_chain(policy: &PolicyPmf, cfg: &ChannelConfig, steps: usize, seed: u64) -> Result<ChainPath> {
    let p = build_transition_matrix(policy, cfg)?;
    let pi = steady_state(&p)?;
    let mut rng = rng::stream(seed, &[tag::CHAIN]);
    let cdfs: Vec<[f64; 4]> = policy
        .states()
        .iter()
        .map(|s| {
            let mut acc = 0.0;
            let mut c = [0.0; 4];
            for (k, q) in s.probs().iter().enumerate() {
                acc += q;
                c[k] = acc;
            }
            c
        })
        .collect();
    let mut u = pi.sample(unit(rng.next_u64()));
    let mut path = ChainPath {
        states: Vec::with_capacity(steps),
        x1: Vec::with_capacity(steps),
        x2: Vec::with_capacity(steps),
    };
    for _ in 0..steps {
        let r = unit(rng.next_u64());
        let c = &cdfs[u];
        let mut k = c.iter().position(|&t| r < t).unwrap_or(3);
        while policy.state(u).probs()[k] == 0.0 {
            k -= 1;
        }
        let (x1, x2) = (Symbol::from_bit(k >= 2), Symbol::from_bit(k % 2 == 1));
        path.states.push(u);
        path.x1.push(x1);
        path.x2.push(x2);
        u = cfg.step(u, x1, x2);
    }
    Ok(path)
}

/// Visit fractions of a `steps`-slot run.
pub fn empirical_state_frequencies(policy: &PolicyPmf, cfg: &ChannelConfig, steps: usize, seed: u64) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::SequenceTooShort { needed: 1, got: 0 });
    }
    let p = build_transition_matrix(policy, cfg)?;
    if !check_lemma1(&p) {
        return Err(Error::NoSteadyState);
    }
    let path = simulate_chain(policy, cfg, steps, seed)?;
    let mut counts = vec![0usize; cfg.num_states()];
    for &u in &path.states {
        counts[u] += 1;
    }
    Ok(counts.iter().map(|&c| c as f64 / steps as f64).collect())
}

/// Plug-in estimate of `H(X_t | X_{t-order}..X_{t-1})` in bits from
/// `(order + 1)`-gram counts.
pub fn empirical_entropy_rate(x: &[Symbol], order: usize) -> Result<f64> {
    if order > 24 {
        return Err(Error::InvalidConfig(format!("entropy order {order} too large")));
    }
    let needed = 100usize << order;
    if x.len() < needed {
        return Err(Error::SequenceTooShort {
            needed,
            got: x.len(),
        });
    }
    let contexts = 1usize << order;
    let mask = contexts - 1;
    let mut joint = vec![0u64; contexts * 2];
    let mut ctx = 0usize;
    for &s in &x[..order] {
        ctx = ((ctx << 1) | s.bit()) & mask;
    }
    for &s in &x[order..] {
        joint[ctx * 2 + s.bit()] += 1;
        ctx = ((ctx << 1) | s.bit()) & mask;
    }
    let total = (x.len() - order) as f64;
    let mut h = 0.0;
    for c in 0..contexts {
        let (a, b) = (joint[2 * c] as f64, joint[2 * c + 1] as f64);
        let n = a + b;
        for k in [a, b] {
            if k > 0.0 {
                h += k / total * (n / k).log2();
            }
        }
    }
    Ok(h)
}

/// Policies of one state on the resolution-`r` lattice, in lexicographic
/// order of `(P(0,0), P(0,1), P(1,0))`; forced states only move `P(0,0)`.
fn lattice(transmit: bool, resolution: usize) -> Vec<StatePmf> {
    let r = resolution - 1;
    let q = |i: usize| i as f64 / r as f64;
    let mut out = Vec::new();
    if transmit {
        for a in 0..=r {
            for b in 0..=r - a {
                for c in 0..=r - a - b {
                    out.push(StatePmf::from_raw([q(a), q(b), q(c), q(r - a - b - c)]));
                }
            }
        }
    } else {
        for a in 0..=r {
            out.push(StatePmf::from_raw([q(a), 0.0, q(r - a), 0.0]));
        }
    }
    out
}

/// Exhaustive search of the policy lattice with `resolution` levels per
/// coordinate, evaluated with the chain primitives only. Returns the best
/// achievable rate and the first policy attaining it.
pub fn brute_force_grid_oracle(cfg: &ChannelConfig, resolution: usize) -> Result<(f64, PolicyPmf)> {
    brute_force_grid_oracle_with_budget(cfg, resolution, DEFAULT_ORACLE_BUDGET)
}

pub fn brute_force_grid_oracle_with_budget(cfg: &ChannelConfig, resolution: usize, budget: f64) -> Result<(f64, PolicyPmf)> {
    cfg.validate()?;
    if resolution < 2 {
        return Err(Error::InvalidConfig("oracle resolution must be at least 2".into()));
    }
    let per_state: Vec<Vec<StatePmf>> = (0..cfg.num_states())
        .map(|u| lattice(cfg.can_transmit_one(u), resolution))
        .collect();
    let points: f64 = per_state.iter().map(|v| v.len() as f64).product();
    if points > budget {
        return Err(Error::BudgetExceeded { points, budget });
    }
    let total = points as u64;
    let dim = cfg.num_states();
    let radices: Vec<u64> = per_state.iter().map(|v| v.len() as u64).collect();
    // Per state and lattice point: transition row and the two rate terms.
    let terms: Vec<Vec<(Vec<f64>, f64, f64)>> = per_state
        .iter()
        .enumerate()
        .map(|(u, pts)| {
            pts.iter()
                .map(|s| {
                    let mut row = vec![0.0; dim];
                    for x1 in Symbol::ALL {
                        for x2 in Symbol::ALL {
                            let q = s.prob(x1, x2);
                            if q > 0.0 {
                                row[next_state(u, x1, x2, cfg).expect("lattice respects the energy constraint")] += q;
                            }
                        }
                    }
                    let p = cfg.crossover();
                    let recv = if p > 0.0 {
                        bsc_mutual_information(s.x2_one(), p)
                    } else {
                        s.entropy_x2()
                    };
                    (row, s.conditional_entropy_x1_given_x2(), recv)
                })
                .collect()
        })
        .collect();
    let picks_of = |mut idx: u64| -> Vec<usize> {
        let mut picks = vec![0usize; dim];
        for u in (0..dim).rev() {
            picks[u] = (idx % radices[u]) as usize;
            idx /= radices[u];
        }
        picks
    };
    let evaluate = |i: u64| -> f64 {
        let picks = picks_of(i);
        let mut flat = Vec::with_capacity(dim * dim);
        for (u, &k) in picks.iter().enumerate() {
            flat.extend_from_slice(&terms[u][k].0);
        }
        let Ok(pi) = TransitionMatrix::from_flat(dim, flat).and_then(|m| steady_state(&m)) else {
            return 0.0;
        };
        let (mut relay, mut recv) = (0.0, 0.0);
        for (u, &k) in picks.iter().enumerate() {
            relay += pi.prob(u) * terms[u][k].1;
            recv += pi.prob(u) * terms[u][k].2;
        }
        relay.clamp(0.0, 1.0).min(recv.clamp(0.0, 1.0))
    };
    let best = (0..total)
        .into_par_iter()
        .map(|i| (evaluate(i), i))
        .reduce(
            || (f64::NEG_INFINITY, u64::MAX),
            |a, b| match a.0.total_cmp(&b.0) {
                std::cmp::Ordering::Greater => a,
                std::cmp::Ordering::Less => b,
                std::cmp::Ordering::Equal => {
                    if a.1 <= b.1 {
                        a
                    } else {
                        b
                    }
                }
            },
        );
    let picks = picks_of(best.1);
    let policy = PolicyPmf::from_states(picks.iter().enumerate().map(|(u, &k)| per_state[u][k]).collect());
    Ok((best.0, policy))
}

/// Binomial proportion with a Wilson 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub count: u64,
    pub total: u64,
    pub rate: f64,
    pub lower: f64,
    pub upper: f64,
    pub half_width: f64,
}

const Z95: f64 = 1.959_963_984_540_054;

impl Proportion {
    pub fn new(count: u64, total: u64) -> Self {
        if total == 0 {
            return Proportion {
                count,
                total,
                rate: 0.0,
                lower: 0.0,
                upper: 1.0,
                half_width: 0.5,
            };
        }
        let n = total as f64;
        let p = count as f64 / n;
        let z2 = Z95 * Z95;
        let denom = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / denom;
        let spread = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
        let lower = if count == 0 { 0.0 } else { (center - spread).max(0.0) };
        let upper = if count == total { 1.0 } else { (center + spread).min(1.0) };
        Proportion {
            count,
            total,
            rate: p,
            lower,
            upper,
            half_width: (upper - lower) / 2.0,
        }
    }

    /// True when this interval lies entirely below `other`'s.
    pub fn below(&self, other: &Proportion) -> bool {
        self.upper < other.lower
    }
}

/// A batch of independent chains sharing one plan.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpec {
    pub cfg: ChannelConfig,
    pub policy: PolicyPmf,
    pub n: usize,
    pub blocks: usize,
    pub epsilon: f64,
    pub rate_fraction: f64,
    pub plan_options: PlanOptions,
    pub run: RunOptions,
    pub trials: usize,
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalStats {
    pub trials: u64,
    pub blocks: u64,
    pub state_frequencies: Vec<f64>,
    /// Order-2 estimate from an `X2` stream of the same policy.
    pub entropy_rate_estimate: f64,
    pub relay_error: Proportion,
    pub receiver_error: Proportion,
    pub end_to_end_error: Proportion,
    pub receiver_ambiguity: Proportion,
    pub incomplete_codeword: Proportion,
    pub collision: Proportion,
    pub energy_violations: u64,
}

impl EmpiricalStats {
    pub fn from_result(res: &SimResult, trials: u64, entropy_rate_estimate: f64) -> Self {
        let b = res.blocks_run;
        EmpiricalStats {
            trials,
            blocks: b,
            state_frequencies: res.state_frequencies(),
            entropy_rate_estimate,
            relay_error: Proportion::new(res.relay_block_errors, b),
            receiver_error: Proportion::new(res.receiver_block_errors, b),
            end_to_end_error: Proportion::new(res.end_to_end_errors, b),
            receiver_ambiguity: Proportion::new(res.receiver_ambiguous, b),
            incomplete_codeword: Proportion::new(res.incomplete_codeword_events, b),
            collision: Proportion::new(res.collision_events, b),
            energy_violations: res.energy_violations,
        }
    }
}

/// Uniform messages for one chain.
pub fn draw_messages(plan: &BlockPlan, seed: u64) -> Vec<Message> {
    let mut r = rng::stream(seed, &[tag::MESSAGES]);
    (1..plan.blocks)
        .map(|_| r.gen_biguint_below(&plan.relay_count) + 1u32)
        .collect()
}

pub fn trial_seed(base_seed: u64, trial: u64) -> u64 {
    rng::derive(base_seed, &[tag::TRIAL, trial])
}

pub fn plan_for(spec: &TrialSpec) -> Result<BlockPlan> {
    if spec.trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    let p = build_transition_matrix(&spec.policy, &spec.cfg)?;
    let pi = steady_state(&p)?;
    make_plan(
        &spec.policy,
        &pi,
        &spec.cfg,
        spec.n,
        spec.blocks,
        spec.epsilon,
        spec.rate_fraction,
        &spec.plan_options,
    )
}

/// Runs `spec.trials` chains in parallel and merges them in trial order.
pub fn run_trials(spec: &TrialSpec) -> Result<(BlockPlan, SimResult, EmpiricalStats)> {
    let plan = plan_for(spec)?;
    let results: Vec<Result<SimResult>> = (0..spec.trials as u64)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(spec.base_seed, t);
            let messages = draw_messages(&plan, seed);
            run_chain(&plan, &spec.policy, &spec.cfg, seed, &messages, &spec.run)
        })
        .collect();
    let mut total = SimResult {
        per_state_visit_counts: vec![0; spec.cfg.num_states()],
        ..Default::default()
    };
    for r in results {
        total.merge(&r?);
    }
    let steps = (spec.n * spec.blocks * spec.trials).clamp(10_000, 1_000_000);
    let stream = simulate_chain(&spec.policy, &spec.cfg, steps, rng::derive(spec.base_seed, &[tag::CHAIN]))?;
    let h = empirical_entropy_rate(&stream.x2, DEFAULT_ENTROPY_ORDER)?;
    let stats = EmpiricalStats::from_result(&total, spec.trials as u64, h);
    Ok((plan, total, stats))
}

/// A uniform point of the feasible policy simplex, for randomized checks.
pub fn random_policy(cfg: &ChannelConfig, rng: &mut impl Rng) -> PolicyPmf {
    let mut exp = || -> f64 { -(1.0 - rng.gen::<f64>()).ln() };
    PolicyPmf::from_states(
        (0..cfg.num_states())
            .map(|u| {
                let w = if cfg.can_transmit_one(u) {
                    [exp(), exp(), exp(), exp()]
                } else {
                    [exp(), 0.0, exp(), 0.0]
                };
                let s: f64 = w.iter().sum();
                StatePmf::from_raw(w.map(|v| v / s))
            })
            .collect(),
    )
}
