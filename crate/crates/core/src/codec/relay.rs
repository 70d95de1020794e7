use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};

use super::codebook::CodebookSet;
use super::message::{log2_big, Message, MessageVector};
use super::plan::BlockPlan;
use super::EXHAUSTIVE_LIMIT;
use crate::channel::Symbol;
use crate::error::{Error, Result};

/// Why the relay could not recover a block's message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RelayFailure {
    /// State `u` was visited fewer than `n_u` times (event ε^(1)).
    Incomplete { state: usize },
    /// No codeword of state `u` matches.
    NoMatch { state: usize },
    /// Two or more codewords of state `u` match (event ε^(2)).
    Collision { state: usize },
    /// The assembled vector maps past the relay-layer message count.
    OutOfRange,
}

pub type RelayOutcome = std::result::Result<Message, RelayFailure>;

/// First `n_u` symbols received while in state `u`, or `None` if the state
/// was visited fewer than `n_u` times.
pub(crate) fn received_prefix(y2: &[Symbol], states: &[usize], u: usize, len: usize) -> Option<Vec<Symbol>> {
    let out: Vec<Symbol> = y2
        .iter()
        .zip(states)
        .filter(|(_, &s)| s == u)
        .map(|(&y, _)| y)
        .take(len)
        .collect();
    (out.len() == len).then_some(out)
}

pub(crate) fn check_lengths(y: &[Symbol], states: &[usize], n: usize, num_states: usize) -> Result<()> {
    if y.len() < n || states.len() < n {
        return Err(Error::SequenceTooShort {
            needed: n,
            got: y.len().min(states.len()),
        });
    }
    if let Some(&state) = states[..n].iter().find(|&&s| s >= num_states) {
        return Err(Error::StateOutOfRange {
            state,
            capacity: num_states - 1,
        });
    }
    Ok(())
}

pub(crate) fn first_incomplete(states: &[usize], plan: &BlockPlan) -> Option<usize> {
    let mut visits = vec![0usize; plan.num_states()];
    for &s in states {
        visits[s] += 1;
    }
    (0..plan.num_states()).find(|&u| visits[u] < plan.info_lengths[u])
}

pub(crate) fn assemble(components: Vec<Message>, books: &CodebookSet) -> RelayOutcome {
    let m = MessageVector { components }
        .to_scalar(books.state_counts())
        .map_err(|_| RelayFailure::OutOfRange)?;
    if &m > books.relay_count() {
        return Err(RelayFailure::OutOfRange);
    }
    Ok(m)
}

/// Decodes block `b` at the relay by exact matching, state by state, over
/// every codeword clouded on the relay's own previous decision.
pub fn relay_decode(
    y2: &[Symbol],
    states: &[usize],
    m_prev_relay: &Message,
    books: &CodebookSet,
    plan: &BlockPlan,
) -> Result<RelayOutcome> {
    check_lengths(y2, states, plan.n, plan.num_states())?;
    let (y2, states) = (&y2[..plan.n], &states[..plan.n]);
    for k in books.state_counts() {
        if k > &BigUint::from(EXHAUSTIVE_LIMIT) {
            return Err(Error::EnumerationLimit {
                bits: log2_big(k),
                limit: EXHAUSTIVE_LIMIT,
            });
        }
    }
    if let Some(u) = first_incomplete(states, plan) {
        return Ok(Err(RelayFailure::Incomplete { state: u }));
    }
    let mut components = Vec::with_capacity(plan.num_states());
    for u in 0..plan.num_states() {
        let len = plan.info_lengths[u];
        let count = books.state_count(u).to_u64().expect("checked against the limit");
        if count == 1 {
            components.push(BigUint::one());
            continue;
        }
        let received = received_prefix(y2, states, u, len).expect("visit counts checked");
        let relay = books.relay_word(u, m_prev_relay);
        let relay = &relay[..len];
        let mut found: Option<u64> = None;
        for k in 1..=count {
            let mu = BigUint::from(k);
            if books.tx_over(u, &mu, m_prev_relay, relay).eq(received.iter().copied()) {
                if found.is_some() {
                    return Ok(Err(RelayFailure::Collision { state: u }));
                }
                found = Some(k);
            }
        }
        match found {
            Some(k) => components.push(BigUint::from(k)),
            None => return Ok(Err(RelayFailure::NoMatch { state: u })),
        }
    }
    Ok(assemble(components, books))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelConfig, PolicyPmf};
    use crate::codec::block::run_block;
    use crate::codec::codebook::generate_codebooks;
    use crate::codec::plan::{make_plan, PlanOptions};
    use crate::markov::{build_transition_matrix, steady_state};

    fn setup(n: usize, rate: f64, seed: u64) -> (ChannelConfig, BlockPlan, CodebookSet) {
        let cfg = ChannelConfig::noiseless(1, 1).unwrap();
        let pmf = PolicyPmf::new(vec![[0.5, 0.0, 0.5, 0.0], [0.25; 4]], &cfg).unwrap();
        let pi = steady_state(&build_transition_matrix(&pmf, &cfg).unwrap()).unwrap();
        let plan = make_plan(&pmf, &pi, &cfg, n, 3, 0.02, rate, &PlanOptions::default()).unwrap();
        let books = generate_codebooks(&plan, &pmf, seed);
        (cfg, plan, books)
    }

    #[test]
    fn decodes_own_block() {
        let (cfg, plan, books) = setup(60, 0.4, 2);
        let total = books.relay_count().to_u64().unwrap();
        let mut decoded = 0;
        for m in (1..=total).step_by(37) {
            let m = BigUint::from(m);
            let prev = BigUint::from(3u32);
            let start = books.initial_state(&prev);
            let t = run_block(&m, &prev, &prev, &books, &plan, &cfg, start).unwrap();
            match relay_decode(&t.x1, &t.states, &prev, &books, &plan).unwrap() {
                Ok(got) => {
                    assert_eq!(got, m);
                    decoded += 1;
                }
                Err(RelayFailure::Incomplete { .. } | RelayFailure::Collision { .. }) => {}
                Err(e) => panic!("unexpected failure {e:?}"),
            }
        }
        assert!(decoded > 0);
    }

    #[test]
    fn single_codeword_always_decodes_one() {
        let (cfg, plan, books) = setup(40, 1e-6, 5);
        assert!(books.state_counts().iter().all(|k| k == &BigUint::one()));
        let one = BigUint::one();
        for start in 0..2 {
            let t = run_block(&one, &one, &one, &books, &plan, &cfg, start).unwrap();
            let got = relay_decode(&t.x1, &t.states, &one, &books, &plan).unwrap();
            assert!(matches!(got, Ok(ref m) if m == &one) || matches!(got, Err(RelayFailure::Incomplete { .. })));
        }
    }

    #[test]
    fn short_sequences_rejected() {
        let (_, plan, books) = setup(40, 0.5, 1);
        let y = vec![Symbol::Zero; 10];
        let s = vec![0; 10];
        assert!(relay_decode(&y, &s, &BigUint::one(), &books, &plan).is_err());
    }

    #[test]
    fn too_few_visits_is_incomplete() {
        let (_, plan, books) = setup(40, 0.5, 1);
        let y = vec![Symbol::One; 40];
        let s = vec![1; 40];
        assert_eq!(
            relay_decode(&y, &s, &BigUint::one(), &books, &plan).unwrap(),
            Err(RelayFailure::Incomplete { state: 0 })
        );
    }
}
