use super::codebook::{CodebookSet, TxStream};
use super::message::{Message, MessageVector};
use super::plan::BlockPlan;
use crate::channel::{ChannelConfig, Symbol};
use crate::error::{Error, Result};

/// One block of `n` slots. `states[i]` is the battery level before slot `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockTrace {
    pub x1: Vec<Symbol>,
    pub x2: Vec<Symbol>,
    pub states: Vec<usize>,
    pub end_state: usize,
}

impl BlockTrace {
    /// Relay slots that emitted `1` below the energy cost.
    pub fn energy_violations(&self, cfg: &ChannelConfig) -> usize {
        energy_violations(&self.states, &self.x2, cfg)
    }
}

pub fn energy_violations(states: &[usize], x2: &[Symbol], cfg: &ChannelConfig) -> usize {
    states
        .iter()
        .zip(x2)
        .filter(|(&u, &s)| s == Symbol::One && !cfg.can_transmit_one(u))
        .count()
}

/// Drives `n` slots from `start`. `next(u)` yields the symbols for state
/// `u`; `visit(slot, u, x1, x2)` returns `false` to stop early. Returns the
/// end state, or `None` if stopped.
pub(crate) fn walk(
    books: &CodebookSet,
    cfg: &ChannelConfig,
    n: usize,
    start: usize,
    mut next: impl FnMut(usize) -> Option<(Symbol, Symbol)>,
    mut visit: impl FnMut(usize, usize, Symbol, Symbol) -> bool,
) -> Result<Option<usize>> {
    let mut u = start;
    for slot in 0..n {
        let Some((x1, x2)) = next(u) else {
            return Err(Error::PaddingExhausted {
                state: u,
                length: books.word_length(u),
            });
        };
        if !visit(slot, u, x1, x2) {
            return Ok(None);
        }
        u = if x2 == Symbol::One && !cfg.can_transmit_one(u) {
            // Not reachable with a valid policy; keep the battery unchanged so
            // the violation is reported rather than panicking.
            u
        } else {
            cfg.step(u, x1, x2)
        };
    }
    Ok(Some(u))
}

pub(crate) fn tx_streams(books: &CodebookSet, vector: &MessageVector, prev: &Message) -> Vec<TxStream> {
    (0..books.num_states())
        .map(|u| books.tx_stream(u, &vector.components[u], prev))
        .collect()
}

pub(crate) fn message_vector(books: &CodebookSet, m: &Message) -> Result<MessageVector> {
    if m > books.relay_count() {
        return Err(Error::MessageOutOfRange(format!("{m} exceeds {}", books.relay_count())));
    }
    MessageVector::from_scalar(m, books.state_counts())
}

/// Encodes one block. The transmitter sends its state-`u` codeword for
/// `m_b`, clouded on `m_prev_tx`; the relay sends its state-`u` relay-layer
/// word for `m_prev_relay`. Each per-state codeword is consumed in order,
/// padding included.
pub fn run_block(
    m_b: &Message,
    m_prev_tx: &Message,
    m_prev_relay: &Message,
    books: &CodebookSet,
    plan: &BlockPlan,
    cfg: &ChannelConfig,
    start_state: usize,
) -> Result<BlockTrace> {
    if start_state >= cfg.num_states() {
        return Err(Error::StateOutOfRange {
            state: start_state,
            capacity: cfg.battery_capacity(),
        });
    }
    for m in [m_prev_tx, m_prev_relay] {
        if m > books.relay_count() || m == &Message::default() {
            return Err(Error::MessageOutOfRange(format!("{m} not in [1..{}]", books.relay_count())));
        }
    }
    let vector = message_vector(books, m_b)?;
    let mut tx = tx_streams(books, &vector, m_prev_tx);
    let mut relay: Vec<_> = (0..books.num_states())
        .map(|u| books.relay_stream(u, m_prev_relay))
        .collect();
    let n = plan.n;
    let mut trace = BlockTrace {
        x1: Vec::with_capacity(n),
        x2: Vec::with_capacity(n),
        states: Vec::with_capacity(n),
        end_state: start_state,
    };
    let end = walk(
        books,
        cfg,
        n,
        start_state,
        |u| {
            let (x1, _) = tx[u].next()?;
            let x2 = relay[u].next()?;
            Some((x1, x2))
        },
        |_, u, x1, x2| {
            trace.states.push(u);
            trace.x1.push(x1);
            trace.x2.push(x2);
            true
        },
    )?;
    trace.end_state = end.expect("visitor never stops");
    Ok(trace)
}

/// Adjustment slots `(x1, x2)` taking the battery from `from` to `to`:
/// lower in steps of `m` with `x2 = 1` while possible, raise with `x1 = 1`.
pub fn preamble_actions(from: usize, to: usize, cfg: &ChannelConfig) -> Vec<(Symbol, Symbol)> {
    let mut u = from;
    let mut out = Vec::new();
    while u != to {
        let action = if u > to && cfg.can_transmit_one(u) {
            (Symbol::Zero, Symbol::One)
        } else {
            (Symbol::One, Symbol::Zero)
        };
        u = cfg.step(u, action.0, action.1);
        out.push(action);
    }
    out
}

/// Worst-case adjustment length; every preamble is padded to it with idle
/// slots so its duration leaks nothing about the target state.
pub fn preamble_length(cfg: &ChannelConfig) -> usize {
    let states = cfg.num_states();
    (0..states)
        .flat_map(|a| (0..states).map(move |b| (a, b)))
        .map(|(a, b)| preamble_actions(a, b, cfg).len())
        .max()
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::PolicyPmf;
    use crate::codec::codebook::generate_codebooks;
    use crate::codec::plan::{make_plan, PlanOptions};
    use crate::markov::{build_transition_matrix, steady_state};
    use num_bigint::BigUint;

    fn setup(pmf: Vec<[f64; 4]>, u: usize, m: usize, n: usize, opts: PlanOptions) -> (ChannelConfig, PolicyPmf, BlockPlan) {
        let cfg = ChannelConfig::noiseless(u, m).unwrap();
        let pmf = PolicyPmf::new(pmf, &cfg).unwrap();
        let pi = steady_state(&build_transition_matrix(&pmf, &cfg).unwrap()).unwrap();
        let plan = make_plan(&pmf, &pi, &cfg, n, 3, 0.02, 0.5, &opts).unwrap();
        (cfg, pmf, plan)
    }

    fn one() -> BigUint {
        BigUint::from(1u32)
    }

    #[test]
    fn states_follow_transitions() {
        let rows = vec![[0.9, 0.0, 0.1, 0.0], [0.9, 0.1, 0.0, 0.0]];
        let (cfg, pmf, plan) = setup(rows, 1, 1, 50, PlanOptions::default());
        let books = generate_codebooks(&plan, &pmf, 3);
        let trace = run_block(&one(), &one(), &one(), &books, &plan, &cfg, 0).unwrap();
        assert_eq!(trace.states.len(), 50);
        for i in 1..50 {
            let expect = cfg.step(trace.states[i - 1], trace.x1[i - 1], trace.x2[i - 1]);
            assert_eq!(trace.states[i], expect);
        }
        assert_eq!(trace.energy_violations(&cfg), 0);
    }

    #[test]
    fn visit_frequencies_track_pi() {
        let rows = vec![[0.5, 0.0, 0.5, 0.0], [0.25; 4]];
        let opts = PlanOptions { enumeration_cap: None, ..Default::default() };
        let (cfg, pmf, plan) = setup(rows, 1, 1, 100_000, opts);
        let books = generate_codebooks(&plan, &pmf, 17);
        let m = BigUint::from(12345u32);
        let prev = BigUint::from(7u32);
        let trace = run_block(&m, &prev, &prev, &books, &plan, &cfg, 0).unwrap();
        let ones = trace.states.iter().filter(|&&u| u == 1).count() as f64 / 1e5;
        assert!((ones - 2.0 / 3.0).abs() < 2e-2);
    }

    #[test]
    fn rejects_out_of_range() {
        let rows = vec![[0.5, 0.0, 0.5, 0.0], [0.25; 4]];
        let (cfg, pmf, plan) = setup(rows, 1, 1, 60, PlanOptions::default());
        let books = generate_codebooks(&plan, &pmf, 1);
        let too_big = books.relay_count() + 1u32;
        assert!(run_block(&too_big, &one(), &one(), &books, &plan, &cfg, 0).is_err());
        assert!(run_block(&one(), &BigUint::from(0u32), &one(), &books, &plan, &cfg, 0).is_err());
        assert!(run_block(&one(), &one(), &one(), &books, &plan, &cfg, 2).is_err());
    }

    #[test]
    fn preamble_reaches_every_target() {
        for (cap, cost) in [(1, 1), (2, 1), (2, 2), (3, 2), (4, 3)] {
            let cfg = ChannelConfig::noiseless(cap, cost).unwrap();
            let len = preamble_length(&cfg);
            for from in 0..=cap {
                for to in 0..=cap {
                    let acts = preamble_actions(from, to, &cfg);
                    assert!(acts.len() <= len);
                    let mut u = from;
                    for (x1, x2) in acts {
                        u = next_state_checked(u, x1, x2, &cfg);
                    }
                    assert_eq!(u, to);
                }
            }
        }
    }

    fn next_state_checked(u: usize, x1: Symbol, x2: Symbol, cfg: &ChannelConfig) -> usize {
        crate::channel::next_state(u, x1, x2, cfg).expect("preamble respects the energy constraint")
    }
}
