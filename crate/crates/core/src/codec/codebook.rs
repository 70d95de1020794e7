//! Per-state superposition codebooks.
//!
//! For every state `u` and previous message `m'`, a relay-layer word
//! `x2|u(m')` is drawn i.i.d. from `p(x2 | u)`; on top of it, for every
//! `m_u in [1..K_u]`, a transmitter word `x1|u(m_u, m')` is drawn
//! symbol-by-symbol from `p(x1 | x2, u)`. Each previous message also gets an
//! initial battery level drawn from the steady state.
//!
//! Words are never stored. Each one is a deterministic ChaCha stream keyed by
//! `(seed, layer, u, indices)`, so the set is reproducible from
//! `(seed, plan, policy)`, can be shared read-only, and supports message
//! spaces far larger than memory.

use num_bigint::BigUint;
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::message::Message;
use super::plan::BlockPlan;
use crate::channel::{PolicyPmf, StatePmf, Symbol};
use crate::markov::SteadyState;
use crate::rng::{self, tag, unit};

#[derive(Debug, Clone)]
pub struct CodebookSet {
    seed: u64,
    policy: PolicyPmf,
    pi: SteadyState,
    word_lengths: Vec<usize>,
    state_counts: Vec<BigUint>,
    relay_count: BigUint,
}

pub fn generate_codebooks(plan: &BlockPlan, policy: &PolicyPmf, seed: u64) -> CodebookSet {
    CodebookSet {
        seed: rng::derive(seed, &[tag::CODEBOOK]),
        policy: policy.clone(),
        pi: plan.pi.clone(),
        word_lengths: (0..plan.num_states()).map(|u| plan.word_length(u)).collect(),
        state_counts: plan.state_counts.clone(),
        relay_count: plan.relay_count.clone(),
    }
}

impl CodebookSet {
    pub fn num_states(&self) -> usize {
        self.word_lengths.len()
    }

    pub fn word_length(&self, u: usize) -> usize {
        self.word_lengths[u]
    }

    pub fn state_count(&self, u: usize) -> &BigUint {
        &self.state_counts[u]
    }

    pub fn state_counts(&self) -> &[BigUint] {
        &self.state_counts
    }

    pub fn relay_count(&self) -> &BigUint {
        &self.relay_count
    }

    pub fn policy(&self) -> &PolicyPmf {
        &self.policy
    }

    pub fn steady_state(&self) -> &SteadyState {
        &self.pi
    }

    fn relay_key(&self, u: usize, prev: &Message) -> u64 {
        rng::derive_bytes(self.seed, &[tag::RELAY_WORD, u as u64], &prev.to_bytes_le())
    }

    fn tx_key(&self, u: usize, mu: &Message, prev: &Message) -> u64 {
        let inner = rng::derive_bytes(self.seed, &[tag::TX_WORD, u as u64], &mu.to_bytes_le());
        rng::derive_bytes(inner, &[], &prev.to_bytes_le())
    }

    /// Battery level at the start of a block whose relay sends `prev`.
    pub fn initial_state(&self, prev: &Message) -> usize {
        let key = rng::derive_bytes(self.seed, &[tag::INITIAL_STATE], &prev.to_bytes_le());
        self.pi.sample(unit(ChaCha8Rng::seed_from_u64(key).next_u64()))
    }

    pub fn relay_stream(&self, u: usize, prev: &Message) -> RelayStream {
        RelayStream {
            rng: ChaCha8Rng::seed_from_u64(self.relay_key(u, prev)),
            p_one: self.policy.state(u).x2_one(),
            remaining: self.word_lengths[u],
        }
    }

    /// Transmitter word `x1|u(mu, prev)`, drawn against the relay word of
    /// `prev`. Yields `(x1, x2)` where `x2` is the conditioning symbol.
    pub fn tx_stream(&self, u: usize, mu: &Message, prev: &Message) -> TxStream {
        TxStream {
            relay: self.relay_stream(u, prev),
            rng: ChaCha8Rng::seed_from_u64(self.tx_key(u, mu, prev)),
            pmf: *self.policy.state(u),
        }
    }

    /// The transmitter word for `(mu, prev)` over an already generated
    /// prefix of the relay word of `prev`; same symbols as [`Self::tx_stream`].
    pub fn tx_over<'a>(
        &self,
        u: usize,
        mu: &Message,
        prev: &Message,
        relay: &'a [Symbol],
    ) -> impl Iterator<Item = Symbol> + 'a {
        let mut rng = ChaCha8Rng::seed_from_u64(self.tx_key(u, mu, prev));
        let pmf = self.policy.state(u);
        let p = [
            pmf.x1_one_given(Symbol::Zero).unwrap_or(0.0),
            pmf.x1_one_given(Symbol::One).unwrap_or(0.0),
        ];
        relay
            .iter()
            .map(move |&x2| Symbol::from_bit(unit(rng.next_u64()) < p[x2.bit()]))
    }

    pub fn relay_word(&self, u: usize, prev: &Message) -> Vec<Symbol> {
        self.relay_stream(u, prev).collect()
    }

    pub fn tx_word(&self, u: usize, mu: &Message, prev: &Message) -> Vec<Symbol> {
        self.tx_stream(u, mu, prev).map(|(x1, _)| x1).collect()
    }
}

#[derive(Debug, Clone)]
pub struct RelayStream {
    rng: ChaCha8Rng,
    p_one: f64,
    remaining: usize,
}

impl Iterator for RelayStream {
    type Item = Symbol;

    #[inline]
    fn next(&mut self) -> Option<Symbol> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        Some(Symbol::from_bit(unit(self.rng.next_u64()) < self.p_one))
    }
}

#[derive(Debug, Clone)]
pub struct TxStream {
    relay: RelayStream,
    rng: ChaCha8Rng,
    pmf: StatePmf,
}

impl Iterator for TxStream {
    type Item = (Symbol, Symbol);

    #[inline]
    fn next(&mut self) -> Option<(Symbol, Symbol)> {
        let x2 = self.relay.next()?;
        let p = self.pmf.x1_one_given(x2).unwrap_or(0.0);
        Some((Symbol::from_bit(unit(self.rng.next_u64()) < p), x2))
    }
}
