//! State-blind backward decoding at the receiver.
//!
//! Knowing block `b`'s message, the receiver replays the encoder for every
//! candidate previous message `m'` (start state, transmitter word clouded on
//! `m'`, relay word for `m'`) and compares the resulting relay sequence with
//! what it heard. No function here takes a state sequence.

use num_bigint::BigUint;
use num_traits::ToPrimitive;

use super::block::{message_vector, tx_streams, walk};
use super::codebook::CodebookSet;
use super::message::{log2_big, Message};
use super::plan::BlockPlan;
use super::EXHAUSTIVE_LIMIT;
use crate::channel::{ChannelConfig, Symbol};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReceiverOutcome {
    Decoded(Message),
    NoMatch,
    Ambiguous,
}

/// `X2^n(m_b, m')` as the relay would have produced it.
pub fn receiver_reconstruct(
    m_b_known: &Message,
    m_prev_candidate: &Message,
    books: &CodebookSet,
    plan: &BlockPlan,
    cfg: &ChannelConfig,
) -> Result<Vec<Symbol>> {
    let mut out = Vec::with_capacity(plan.n);
    replay(m_b_known, m_prev_candidate, books, plan, cfg, |_, x2| {
        out.push(x2);
        true
    })?;
    Ok(out)
}

fn replay(
    m_b: &Message,
    cand: &Message,
    books: &CodebookSet,
    plan: &BlockPlan,
    cfg: &ChannelConfig,
    mut visit: impl FnMut(usize, Symbol) -> bool,
) -> Result<bool> {
    let vector = message_vector(books, m_b)?;
    let mut tx = tx_streams(books, &vector, cand);
    let start = books.initial_state(cand);
    let done = walk(books, cfg, plan.n, start, |u| tx[u].next(), |slot, _, _, x2| visit(slot, x2))?;
    Ok(done.is_some())
}

/// Hamming distance between `y3` and the candidate's sequence, or `None`
/// once it exceeds `limit`.
pub(crate) fn candidate_distance(
    y3: &[Symbol],
    m_b: &Message,
    cand: &Message,
    books: &CodebookSet,
    plan: &BlockPlan,
    cfg: &ChannelConfig,
    limit: usize,
) -> Result<Option<usize>> {
    let mut d = 0usize;
    let complete = replay(m_b, cand, books, plan, cfg, |slot, x2| {
        d += usize::from(x2 != y3[slot]);
        d <= limit
    })?;
    Ok(complete.then_some(d))
}

/// `3 sqrt(p(1-p)/n)`.
pub fn default_typicality_epsilon(p: f64, n: usize) -> f64 {
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

/// Accepted distances `[lo, hi]` for `|d/n - p| <= eps`.
pub(crate) fn typicality_band(n: usize, p: f64, eps: f64) -> (usize, usize) {
    let n = n as f64;
    let lo = (n * (p - eps) - 1e-9).ceil().max(0.0) as usize;
    let hi = (n * (p + eps) + 1e-9).floor().max(0.0) as usize;
    (lo, hi.min(n as usize))
}

fn candidate_count(books: &CodebookSet) -> Result<u64> {
    let total = books.relay_count();
    if total > &BigUint::from(EXHAUSTIVE_LIMIT) {
        return Err(Error::EnumerationLimit {
            bits: log2_big(total),
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    Ok(total.to_u64().expect("below the limit"))
}

fn check_input(y3: &[Symbol], plan: &BlockPlan) -> Result<()> {
    if y3.len() < plan.n {
        return Err(Error::SequenceTooShort {
            needed: plan.n,
            got: y3.len(),
        });
    }
    Ok(())
}

/// Unique candidate whose reconstruction equals `y3`.
pub fn receiver_decode_noiseless(
    y3: &[Symbol],
    m_b_known: &Message,
    books: &CodebookSet,
    plan: &BlockPlan,
    cfg: &ChannelConfig,
) -> Result<ReceiverOutcome> {
    check_input(y3, plan)?;
    let total = candidate_count(books)?;
    let mut found = None;
    for k in 1..=total {
        let cand = BigUint::from(k);
        if candidate_distance(y3, m_b_known, &cand, books, plan, cfg, 0)?.is_some() {
            if found.is_some() {
                return Ok(ReceiverOutcome::Ambiguous);
            }
            found = Some(cand);
        }
    }
    Ok(found.map_or(ReceiverOutcome::NoMatch, ReceiverOutcome::Decoded))
}

/// Typicality decoding through the BSC: candidates with `|d/n - p| <= eps`
/// are accepted and the smallest distance wins; a tie there is ambiguous.
pub fn receiver_decode_noisy(
    y3: &[Symbol],
    m_b_known: &Message,
    books: &CodebookSet,
    plan: &BlockPlan,
    cfg: &ChannelConfig,
    typicality_epsilon: Option<f64>,
) -> Result<ReceiverOutcome> {
    check_input(y3, plan)?;
    let p = cfg.crossover();
    let eps = typicality_epsilon.unwrap_or_else(|| default_typicality_epsilon(p, plan.n));
    let (lo, hi) = typicality_band(plan.n, p, eps);
    let total = candidate_count(books)?;
    let mut best: Option<(usize, BigUint)> = None;
    let mut tied = false;
    for k in 1..=total {
        let cand = BigUint::from(k);
        let limit = best.as_ref().map_or(hi, |(d, _)| (*d).min(hi));
        let Some(d) = candidate_distance(y3, m_b_known, &cand, books, plan, cfg, limit)? else {
            continue;
        };
        if d < lo {
            continue;
        }
        match &best {
            Some((bd, _)) if d == *bd => tied = true,
            Some((bd, _)) if d > *bd => {}
            _ => {
                best = Some((d, cand));
                tied = false;
            }
        }
    }
    Ok(match best {
        None => ReceiverOutcome::NoMatch,
        Some(_) if tied => ReceiverOutcome::Ambiguous,
        Some((_, m)) => ReceiverOutcome::Decoded(m),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::PolicyPmf;
    use crate::codec::block::run_block;
    use crate::codec::codebook::generate_codebooks;
    use crate::codec::plan::{make_plan, PlanOptions};
    use crate::markov::{build_transition_matrix, steady_state};

    fn setup(n: usize, p: f64, rate: f64, seed: u64) -> (ChannelConfig, BlockPlan, CodebookSet) {
        let cfg = ChannelConfig::new(1, 1, p).unwrap();
        let pmf = PolicyPmf::new(vec![[0.5, 0.0, 0.5, 0.0], [0.25; 4]], &cfg).unwrap();
        let pi = steady_state(&build_transition_matrix(&pmf, &cfg).unwrap()).unwrap();
        let plan = make_plan(&pmf, &pi, &cfg, n, 3, 0.02, rate, &PlanOptions::default()).unwrap();
        let books = generate_codebooks(&plan, &pmf, seed);
        (cfg, plan, books)
    }

    #[test]
    fn reconstruction_matches_transmission() {
        let (cfg, plan, books) = setup(80, 0.0, 0.5, 3);
        for (m, prev) in [(5u32, 9u32), (1, 1), (200, 17)] {
            let m = BigUint::from(m);
            let prev = BigUint::from(prev);
            let t = run_block(&m, &prev, &prev, &books, &plan, &cfg, books.initial_state(&prev)).unwrap();
            assert_eq!(receiver_reconstruct(&m, &prev, &books, &plan, &cfg).unwrap(), t.x2);
        }
    }

    #[test]
    fn noiseless_decoder_finds_true_candidate() {
        let (cfg, plan, books) = setup(80, 0.0, 0.3, 4);
        let m = BigUint::from(7u32);
        let prev = BigUint::from(11u32);
        let y3 = receiver_reconstruct(&m, &prev, &books, &plan, &cfg).unwrap();
        let got = receiver_decode_noiseless(&y3, &m, &books, &plan, &cfg).unwrap();
        assert!(got == ReceiverOutcome::Decoded(prev) || got == ReceiverOutcome::Ambiguous);
    }

    #[test]
    fn zero_crossover_band_is_exact_match() {
        assert_eq!(typicality_band(2000, 0.0, default_typicality_epsilon(0.0, 2000)), (0, 0));
        let (lo, hi) = typicality_band(2000, 0.05, default_typicality_epsilon(0.05, 2000));
        assert!(lo < 100 && hi > 100);
        let (cfg, plan, books) = setup(60, 0.0, 0.3, 8);
        let m = BigUint::from(2u32);
        let prev = BigUint::from(3u32);
        let y3 = receiver_reconstruct(&m, &prev, &books, &plan, &cfg).unwrap();
        assert_eq!(
            receiver_decode_noisy(&y3, &m, &books, &plan, &cfg, None).unwrap(),
            receiver_decode_noiseless(&y3, &m, &books, &plan, &cfg).unwrap()
        );
    }

    #[test]
    fn single_candidate_always_returns_one() {
        let (cfg, plan, books) = setup(40, 0.0, 1e-6, 1);
        assert_eq!(books.relay_count(), &BigUint::from(1u32));
        let y3 = receiver_reconstruct(&BigUint::from(1u32), &BigUint::from(1u32), &books, &plan, &cfg).unwrap();
        assert_eq!(
            receiver_decode_noiseless(&y3, &BigUint::from(1u32), &books, &plan, &cfg).unwrap(),
            ReceiverOutcome::Decoded(BigUint::from(1u32))
        );
    }
}
