use num_bigint::BigUint;
use num_traits::One;
use serde::{Deserialize, Serialize};

use super::message::{log2_big, pow2_floor};
use crate::channel::{ChannelConfig, PolicyPmf};
use crate::error::{Error, Result};
use crate::markov::{receiver_bound_noiseless, receiver_bound_noisy, SteadyState};

/// Default cap on every per-state codebook size and on the relay-layer
/// message count when the receiver decodes by enumeration.
pub const DEFAULT_ENUMERATION_CAP: u64 = 4096;

// Absorbs round-off when n R lands on an integer.
const BIT_SLACK: f64 = 1e-9;

/// How the battery reaches each block's initial state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// The simulator sets the battery directly.
    #[default]
    GenieReset,
    /// Explicit adjustment slots before each block, excluded from rate
    /// accounting and skipped by both decoders.
    Preamble,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOptions {
    /// Multiplies the receiver bound for the relay layer; defaults to the
    /// per-state `rate_fraction`.
    pub relay_rate_fraction: Option<f64>,
    /// `None` leaves message counts unclamped.
    pub enumeration_cap: Option<u64>,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            relay_rate_fraction: None,
            enumeration_cap: Some(DEFAULT_ENUMERATION_CAP),
        }
    }
}

/// Block lengths, per-state codebook sizes and the relay-layer size.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPlan {
    pub n: usize,
    pub blocks: usize,
    pub epsilon: f64,
    pub pi: SteadyState,
    /// Information symbols per state, `floor(n (pi_u - epsilon))`.
    pub info_lengths: Vec<usize>,
    /// Padding symbols appended to every per-state codeword.
    pub delta: usize,
    pub state_rates: Vec<f64>,
    pub state_counts: Vec<BigUint>,
    pub relay_rate: f64,
    pub relay_count: BigUint,
    /// A count was lowered by the enumeration cap or by `prod K_u`.
    pub clamped: bool,
    /// Every state with `K_u > 1` satisfies `log2(K_u)/n_u < H(X1|X2, u) - epsilon`.
    pub within_packing_bound: bool,
}

impl BlockPlan {
    pub fn num_states(&self) -> usize {
        self.info_lengths.len()
    }

    /// `n_u + delta`.
    pub fn word_length(&self, u: usize) -> usize {
        self.info_lengths[u] + self.delta
    }

    pub fn state_bits(&self) -> Vec<f64> {
        self.state_counts.iter().map(log2_big).collect()
    }

    pub fn relay_bits(&self) -> f64 {
        log2_big(&self.relay_count)
    }

    /// `log2(prod K_u) / n`, the transmitter rate actually carried.
    pub fn transmitter_rate(&self) -> f64 {
        self.state_bits().iter().sum::<f64>() / self.n as f64
    }
}

/// Sizes the code for `policy` with stationary law `pi`.
///
/// `R_u = rate_fraction * H(X1|u | X2|u)`, `K_u = floor(2^{n_u R_u})`, and
/// the relay layer carries `rate_fraction` (or the override) times the
/// receiver bound, never more than `prod K_u` messages.
#[allow(clippy::too_many_arguments)]
pub fn make_plan(
    policy: &PolicyPmf,
    pi: &SteadyState,
    cfg: &ChannelConfig,
    n: usize,
    blocks: usize,
    epsilon: f64,
    rate_fraction: f64,
    opts: &PlanOptions,
) -> Result<BlockPlan> {
    if n < 1 {
        return Err(Error::InvalidPlan("block length must be at least 1".into()));
    }
    if blocks < 2 {
        return Err(Error::InvalidPlan("at least two blocks are required".into()));
    }
    let relay_fraction = opts.relay_rate_fraction.unwrap_or(rate_fraction);
    for (name, f) in [("rate_fraction", rate_fraction), ("relay_rate_fraction", relay_fraction)] {
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::InvalidPlan(format!("{name} must be positive, got {f}")));
        }
    }
    if pi.len() != cfg.num_states() || policy.num_states() != cfg.num_states() {
        return Err(Error::InvalidPlan("policy, steady state and channel disagree on the state count".into()));
    }
    let min_positive = pi
        .probs()
        .iter()
        .copied()
        .filter(|&q| q > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !(epsilon > 0.0 && epsilon < min_positive) {
        return Err(Error::InvalidPlan(format!(
            "epsilon {epsilon} must lie in (0, {min_positive}), the smallest positive steady-state probability"
        )));
    }

    let info_lengths: Vec<usize> = pi
        .probs()
        .iter()
        .map(|&q| ((n as f64) * (q - epsilon)).floor().max(0.0) as usize)
        .collect();
    let min_visited = pi
        .probs()
        .iter()
        .zip(&info_lengths)
        .filter(|(&q, _)| q > 0.0)
        .map(|(_, &l)| l)
        .min()
        .unwrap_or(0);
    let delta = n - min_visited;

    let cond_entropy: Vec<f64> = (0..cfg.num_states())
        .map(|u| policy.state(u).conditional_entropy_x1_given_x2())
        .collect();
    let state_rates: Vec<f64> = cond_entropy.iter().map(|h| rate_fraction * h).collect();
    let mut clamped = false;
    let cap = opts.enumeration_cap.map(BigUint::from);
    let state_counts: Vec<BigUint> = state_rates
        .iter()
        .zip(&info_lengths)
        .map(|(&r, &len)| {
            let k = pow2_floor(r * len as f64 + BIT_SLACK);
            match &cap {
                Some(c) if &k > c => {
                    clamped = true;
                    c.clone()
                }
                _ => k,
            }
        })
        .collect();

    let receiver_bound = if cfg.crossover() > 0.0 {
        receiver_bound_noisy(policy, pi, cfg.crossover())
    } else {
        receiver_bound_noiseless(policy, pi)
    };
    let relay_rate = relay_fraction * receiver_bound;
    let mut relay_count = pow2_floor(relay_rate * n as f64 + BIT_SLACK);
    if let Some(c) = &cap {
        if &relay_count > c {
            relay_count = c.clone();
            clamped = true;
        }
    }
    let product: BigUint = state_counts.iter().product();
    if relay_count > product {
        relay_count = product;
        clamped = true;
    }
    if relay_count < BigUint::one() {
        relay_count = BigUint::one();
    }

    let within_packing_bound = state_counts
        .iter()
        .zip(&info_lengths)
        .zip(&cond_entropy)
        .all(|((k, &len), &h)| k <= &BigUint::one() || log2_big(k) / (len as f64) < h - epsilon);

    Ok(BlockPlan {
        n,
        blocks,
        epsilon,
        pi: pi.clone(),
        info_lengths,
        delta,
        state_rates,
        state_counts,
        relay_rate,
        relay_count,
        clamped,
        within_packing_bound,
    })
}
