//! Decoding over astronomically large codebooks.
//!
//! Every codeword a decoder compares against, other than the ones actually
//! transmitted, is an independent draw from the codebook law. For the
//! receiver, the replayed relay sequence of such a candidate is a sample path
//! of the stationary chain's `X2` output; for the relay, a wrong state-`u`
//! codeword is i.i.d. from `p(x1 | x2, u)` over the known relay word. So the
//! number of competitors at each distance is multinomial with probabilities
//! computable exactly (a forward recursion for the receiver, a product for
//! the relay), and only the transmitted candidates need to be generated.

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::Rng;

use super::codebook::CodebookSet;
use super::message::{ln_big, Message};
use super::plan::BlockPlan;
use super::receiver::{candidate_distance, typicality_band, ReceiverOutcome};
use super::relay::{assemble, check_lengths, first_incomplete, received_prefix, RelayFailure, RelayOutcome};
use crate::channel::{ChannelConfig, PolicyPmf, Symbol};
use crate::error::Result;
use crate::markov::SteadyState;

/// `ln P(d(X2^n, y) = k)` for `k in 0..=d_max`, where `X2^n` is the relay
/// output of the stationary chain started from `pi`.
pub fn distance_log_pmf(y: &[Symbol], policy: &PolicyPmf, cfg: &ChannelConfig, pi: &SteadyState, d_max: usize) -> Vec<f64> {
    let states = cfg.num_states();
    let width = d_max + 1;
    let moves: Vec<Vec<(usize, Symbol, f64)>> = (0..states)
        .map(|u| {
            let pmf = policy.state(u);
            let mut out = Vec::new();
            for x1 in Symbol::ALL {
                for x2 in Symbol::ALL {
                    let q = pmf.prob(x1, x2);
                    if q > 0.0 && (x2 == Symbol::Zero || cfg.can_transmit_one(u)) {
                        out.push((cfg.step(u, x1, x2), x2, q));
                    }
                }
            }
            out
        })
        .collect();
    let mut alpha = vec![0.0; states * width];
    for u in 0..states {
        alpha[u * width] = pi.prob(u);
    }
    let mut next = vec![0.0; states * width];
    let mut log_scale = 0.0;
    for &obs in y {
        next.iter_mut().for_each(|v| *v = 0.0);
        for u in 0..states {
            let row = &alpha[u * width..(u + 1) * width];
            for &(v, x2, q) in &moves[u] {
                let shift = usize::from(x2 != obs);
                let dst = &mut next[v * width..(v + 1) * width];
                for d in 0..width - shift {
                    dst[d + shift] += q * row[d];
                }
            }
        }
        let total: f64 = next.iter().sum();
        if total <= 0.0 {
            return vec![f64::NEG_INFINITY; width];
        }
        next.iter_mut().for_each(|v| *v /= total);
        log_scale += total.ln();
        std::mem::swap(&mut alpha, &mut next);
    }
    (0..width)
        .map(|d| {
            let mass: f64 = (0..states).map(|u| alpha[u * width + d]).sum();
            if mass > 0.0 {
                mass.ln() + log_scale
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}

/// `ln(-ln(1 - s))` given `ln s`, stable for tiny `s`.
fn ln_neg_ln1m(ln_s: f64) -> f64 {
    if ln_s < -20.0 {
        // -ln(1-s) = s (1 + s/2 + ...)
        ln_s + (0.5 * ln_s.exp()).ln_1p()
    } else if ln_s >= 0.0 {
        f64::INFINITY
    } else {
        (-(-ln_s.exp()).ln_1p()).ln()
    }
}

/// `ln (1 - s)^N` with `ln_n = ln N`.
fn ln_none(ln_n: f64, ln_s: f64) -> f64 {
    if ln_s == f64::NEG_INFINITY || ln_n == f64::NEG_INFINITY {
        return 0.0;
    }
    -(ln_n + ln_neg_ln1m(ln_s)).exp()
}

fn ln_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

fn ln_count(n: &BigUint) -> f64 {
    if n.is_zero() {
        f64::NEG_INFINITY
    } else {
        ln_big(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hits {
    Zero,
    One,
    Many,
}

/// Draws how many of `n` independent competitors hit an event of
/// probability `exp(ln_q)`: none, exactly one, or several.
pub fn sample_hits(n: &BigUint, ln_q: f64, uniform: f64) -> Hits {
    if n.is_zero() || ln_q == f64::NEG_INFINITY {
        return Hits::Zero;
    }
    let ln_n = ln_count(n);
    let p0 = ln_none(ln_n, ln_q).exp();
    if uniform < p0 {
        return Hits::Zero;
    }
    let ln_rest = ln_count(&(n - 1u32));
    let p1 = (ln_n + ln_q + ln_none(ln_rest, ln_q)).exp();
    if uniform < p0 + p1 {
        Hits::One
    } else {
        Hits::Many
    }
}

/// Smallest competitor distance within `[lo, limit]` and whether it is
/// shared, for `n` competitors with distance law `ln_pmf`.
fn sample_minimum(n: &BigUint, ln_pmf: &[f64], lo: usize, limit: usize, rng: &mut impl Rng) -> Option<(usize, Hits)> {
    if n.is_zero() || lo > limit {
        return None;
    }
    let ln_n = ln_count(n);
    let ln_rest = ln_count(&(n - 1u32));
    let u: f64 = rng.gen();
    let mut ln_below = f64::NEG_INFINITY;
    let mut none_below = 0.0f64;
    for k in lo..=limit {
        let ln_upto = ln_add(ln_below, ln_pmf[k]);
        let none_upto = ln_none(ln_n, ln_upto);
        // P(min <= k) = 1 - (1 - S_k)^N
        if u < -none_upto.exp_m1() {
            let ln_min_here = none_below + (-(none_upto - none_below).exp_m1()).ln();
            let ln_single = ln_n + ln_pmf[k] + ln_none(ln_rest, ln_upto);
            let single = (ln_single - ln_min_here).exp();
            let hits = if rng.gen::<f64>() < single { Hits::One } else { Hits::Many };
            return Some((k, hits));
        }
        ln_below = ln_upto;
        none_below = none_upto;
    }
    None
}

fn random_other(total: &BigUint, exclude: &[Message], rng: &mut impl Rng) -> Message {
    loop {
        let m = rng.gen_biguint_below(total) + 1u32;
        if !exclude.contains(&m) {
            return m;
        }
    }
}

/// Relay decoding where the transmitted state-`u` codeword is generated
/// explicitly and every other codeword enters through its match
/// probability. `truth` is the transmitter's message vector components and
/// previous message, known to the simulation only.
pub fn relay_decode_ensemble(
    y2: &[Symbol],
    states: &[usize],
    m_prev_relay: &Message,
    truth: (&[Message], &Message),
    books: &CodebookSet,
    plan: &BlockPlan,
    rng: &mut impl Rng,
) -> Result<RelayOutcome> {
    check_lengths(y2, states, plan.n, plan.num_states())?;
    let (y2, states) = (&y2[..plan.n], &states[..plan.n]);
    if let Some(u) = first_incomplete(states, plan) {
        return Ok(Err(RelayFailure::Incomplete { state: u }));
    }
    let (true_components, m_prev_tx) = truth;
    let mut components = Vec::with_capacity(plan.num_states());
    for u in 0..plan.num_states() {
        let count = books.state_count(u);
        if count.is_one() {
            components.push(BigUint::one());
            continue;
        }
        let len = plan.info_lengths[u];
        let received = received_prefix(y2, states, u, len).expect("visit counts checked");
        let relay = books.relay_word(u, m_prev_relay);
        let relay = &relay[..len];
        let explicit = (m_prev_tx == m_prev_relay).then(|| &true_components[u]);
        let explicit_hit =
            explicit.filter(|mu| books.tx_over(u, mu, m_prev_relay, relay).eq(received.iter().copied()));
        let others = if explicit.is_some() { count - 1u32 } else { count.clone() };
        let pmf = books.policy().state(u);
        let ln_q: f64 = received
            .iter()
            .zip(relay)
            .map(|(&y, &x2)| {
                let p1 = pmf.x1_one_given(x2).unwrap_or(0.0);
                if y == Symbol::One {
                    p1.ln()
                } else {
                    (1.0 - p1).ln()
                }
            })
            .sum();
        let hits = sample_hits(&others, ln_q, rng.gen());
        let chosen = match (explicit_hit, hits) {
            (Some(mu), Hits::Zero) => mu.clone(),
            (Some(_), _) | (None, Hits::Many) => return Ok(Err(RelayFailure::Collision { state: u })),
            (None, Hits::Zero) => return Ok(Err(RelayFailure::NoMatch { state: u })),
            (None, Hits::One) => {
                let exclude: Vec<Message> = explicit.into_iter().cloned().collect();
                random_other(count, &exclude, rng)
            }
        };
        components.push(chosen);
    }
    Ok(assemble(components, books))
}

/// Receiver decoding (noiseless when `p = 0`, band decoding otherwise) with
/// the `explicit` candidates replayed and all remaining ones drawn from the
/// chain's distance law.
#[allow(clippy::too_many_arguments)]
pub fn receiver_decode_ensemble(
    y3: &[Symbol],
    m_b_known: &Message,
    explicit: &[Message],
    books: &CodebookSet,
    plan: &BlockPlan,
    cfg: &ChannelConfig,
    typicality_epsilon: Option<f64>,
    rng: &mut impl Rng,
) -> Result<ReceiverOutcome> {
    let p = cfg.crossover();
    let eps = if p > 0.0 {
        typicality_epsilon.unwrap_or_else(|| super::receiver::default_typicality_epsilon(p, plan.n))
    } else {
        0.0
    };
    let (lo, hi) = typicality_band(plan.n, p, eps);
    let total = books.relay_count();
    let mut listed: Vec<Message> = Vec::new();
    for m in explicit {
        if m <= total && !m.is_zero() && !listed.contains(m) {
            listed.push(m.clone());
        }
    }
    let mut best: Option<(usize, Message)> = None;
    let mut tied = false;
    for cand in &listed {
        let Some(d) = candidate_distance(y3, m_b_known, cand, books, plan, cfg, hi)? else {
            continue;
        };
        if d < lo {
            continue;
        }
        match &best {
            Some((bd, _)) if d == *bd => tied = true,
            Some((bd, _)) if d > *bd => {}
            _ => {
                best = Some((d, cand.clone()));
                tied = false;
            }
        }
    }
    let others = total - BigUint::from(listed.len());
    let limit = best.as_ref().map_or(hi, |(d, _)| *d);
    let ln_pmf = distance_log_pmf(&y3[..plan.n], books.policy(), cfg, books.steady_state(), limit);
    let competitor = sample_minimum(&others, &ln_pmf, lo, limit, rng);
    Ok(match (best, competitor) {
        (Some((d, _)), Some((k, _))) if k == d => ReceiverOutcome::Ambiguous,
        (_, Some((_, Hits::One))) => ReceiverOutcome::Decoded(random_other(total, &listed, rng)),
        (_, Some(_)) => ReceiverOutcome::Ambiguous,
        (None, None) => ReceiverOutcome::NoMatch,
        (Some(_), None) if tied => ReceiverOutcome::Ambiguous,
        (Some((_, m)), None) => ReceiverOutcome::Decoded(m),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hits_match_small_binomial() {
        // N = 3, q = 0.2: P0 = 0.512, P1 = 0.384.
        let n = BigUint::from(3u32);
        let lq = 0.2f64.ln();
        assert_eq!(sample_hits(&n, lq, 0.5), Hits::Zero);
        assert_eq!(sample_hits(&n, lq, 0.6), Hits::One);
        assert_eq!(sample_hits(&n, lq, 0.9), Hits::Many);
        assert_eq!(sample_hits(&BigUint::zero(), lq, 0.99), Hits::Zero);
    }

    #[test]
    fn hits_handle_huge_counts() {
        // N q = 2^-10 with N = 2^600.
        let n = BigUint::one() << 600u32;
        let lq = -(610.0 * std::f64::consts::LN_2);
        assert_eq!(sample_hits(&n, lq, 0.9995), Hits::One);
        assert_eq!(sample_hits(&n, lq, 0.99), Hits::Zero);
        // N q = 2^10: essentially always several.
        let lq = -(590.0 * std::f64::consts::LN_2);
        assert_eq!(sample_hits(&n, lq, 1e-9), Hits::Many);
    }

    #[test]
    fn minimum_sampler_frequencies() {
        // Two competitors, distances 0/1/other with probabilities 0.1/0.2/0.7.
        let n = BigUint::from(2u32);
        let pmf = [0.1f64.ln(), 0.2f64.ln()];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let trials = 200_000;
        let mut counts = [0usize; 5];
        for _ in 0..trials {
            let slot = match sample_minimum(&n, &pmf, 0, 1, &mut rng) {
                Some((0, Hits::One)) => 0,
                Some((0, _)) => 1,
                Some((1, Hits::One)) => 2,
                Some((1, _)) => 3,
                _ => 4,
            };
            counts[slot] += 1;
        }
        // Exact: min 0 single 2*.1*.9=.18, double .01; min 1 single 2*.2*.7=.28,
        // double .04; none .49.
        let expect = [0.18, 0.01, 0.28, 0.04, 0.49];
        for (c, e) in counts.iter().zip(expect) {
            let f = *c as f64 / trials as f64;
            assert!((f - e).abs() < 4.0 * (e * (1.0 - e) / trials as f64).sqrt() + 1e-9, "{f} vs {e}");
        }
    }

    #[test]
    fn distance_pmf_matches_enumeration() {
        let cfg = ChannelConfig::noiseless(1, 1).unwrap();
        let pmf = PolicyPmf::new(vec![[0.5, 0.0, 0.5, 0.0], [0.25; 4]], &cfg).unwrap();
        let pi = SteadyState::from_probs(vec![1.0 / 3.0, 2.0 / 3.0]);
        let y: Vec<Symbol> = [1, 0, 1, 1, 0, 0].iter().map(|&b| Symbol::from_bit(b == 1)).collect();
        let got = distance_log_pmf(&y, &pmf, &cfg, &pi, y.len());
        // Brute force over all (x1, x2) paths.
        let mut exact = vec![0.0; y.len() + 1];
        let paths = 1usize << (2 * y.len());
        for start in 0..2 {
            for code in 0..paths {
                let mut u = start;
                let mut prob = pi.prob(start);
                let mut d = 0;
                for (i, &obs) in y.iter().enumerate() {
                    let x1 = Symbol::from_bit(code >> (2 * i) & 1 == 1);
                    let x2 = Symbol::from_bit(code >> (2 * i + 1) & 1 == 1);
                    prob *= pmf.state(u).prob(x1, x2);
                    if prob == 0.0 {
                        break;
                    }
                    d += usize::from(x2 != obs);
                    u = cfg.step(u, x1, x2);
                }
                exact[d] += prob;
            }
        }
        for (g, e) in got.iter().zip(&exact) {
            assert!((g.exp() - e).abs() < 1e-12, "{} vs {e}", g.exp());
        }
        let truncated = distance_log_pmf(&y, &pmf, &cfg, &pi, 2);
        for d in 0..=2 {
            assert!((truncated[d] - got[d]).abs() < 1e-12);
        }
    }
}
