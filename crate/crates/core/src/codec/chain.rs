use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use super::block::{energy_violations, message_vector, preamble_actions, preamble_length, run_block};
use super::codebook::generate_codebooks;
use super::ensemble::{receiver_decode_ensemble, relay_decode_ensemble};
use super::message::{log2_big, Message};
use super::plan::{BlockPlan, BoundaryMode};
use super::receiver::{receiver_decode_noiseless, receiver_decode_noisy, ReceiverOutcome};
use super::relay::{relay_decode, RelayFailure};
use super::trace::{Phase, TraceRow};
use super::{DecoderEngine, RunOptions, EXHAUSTIVE_LIMIT};
use crate::channel::{validate_policy, ChannelConfig, PolicyPmf, Symbol};
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::simulator::apply_bsc_at;

/// Event counts of one or more chains of `B` blocks.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimResult {
    /// Message blocks, `B - 1` per chain.
    pub blocks_run: u64,
    pub relay_block_errors: u64,
    /// Blocks the relay got right but the receiver did not.
    pub receiver_block_errors: u64,
    pub end_to_end_errors: u64,
    pub incomplete_codeword_events: u64,
    pub collision_events: u64,
    pub relay_no_match: u64,
    pub receiver_ambiguous: u64,
    pub receiver_no_match: u64,
    pub padding_exhausted: u64,
    pub energy_violations: u64,
    /// Code slots spent in each state (preamble slots excluded).
    pub per_state_visit_counts: Vec<u64>,
}

impl SimResult {
    pub fn merge(&mut self, other: &SimResult) {
        self.blocks_run += other.blocks_run;
        self.relay_block_errors += other.relay_block_errors;
        self.receiver_block_errors += other.receiver_block_errors;
        self.end_to_end_errors += other.end_to_end_errors;
        self.incomplete_codeword_events += other.incomplete_codeword_events;
        self.collision_events += other.collision_events;
        self.relay_no_match += other.relay_no_match;
        self.receiver_ambiguous += other.receiver_ambiguous;
        self.receiver_no_match += other.receiver_no_match;
        self.padding_exhausted += other.padding_exhausted;
        self.energy_violations += other.energy_violations;
        if self.per_state_visit_counts.len() < other.per_state_visit_counts.len() {
            self.per_state_visit_counts.resize(other.per_state_visit_counts.len(), 0);
        }
        for (a, b) in self.per_state_visit_counts.iter_mut().zip(&other.per_state_visit_counts) {
            *a += b;
        }
    }

    pub fn state_frequencies(&self) -> Vec<f64> {
        let total: u64 = self.per_state_visit_counts.iter().sum();
        self.per_state_visit_counts
            .iter()
            .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
            .collect()
    }
}

/// Runs blocks `1..=B` for `messages = [m_1, ..., m_{B-1}]` (`m_0 = m_B = 1`),
/// relay decoding forward and receiver decoding backward.
pub fn run_chain(
    plan: &BlockPlan,
    policy: &PolicyPmf,
    cfg: &ChannelConfig,
    seed: u64,
    messages: &[Message],
    opts: &RunOptions,
) -> Result<SimResult> {
    chain(plan, policy, cfg, seed, messages, opts, None)
}

/// [`run_chain`] that also records every slot.
pub fn run_chain_traced(
    plan: &BlockPlan,
    policy: &PolicyPmf,
    cfg: &ChannelConfig,
    seed: u64,
    messages: &[Message],
    opts: &RunOptions,
) -> Result<(SimResult, Vec<TraceRow>)> {
    let mut rows = Vec::new();
    let res = chain(plan, policy, cfg, seed, messages, opts, Some(&mut rows))?;
    Ok((res, rows))
}

fn check_inputs(plan: &BlockPlan, policy: &PolicyPmf, cfg: &ChannelConfig, messages: &[Message], opts: &RunOptions) -> Result<()> {
    cfg.validate()?;
    let violations = validate_policy(policy, cfg);
    if !violations.is_empty() {
        return Err(Error::InvalidPolicy(violations.iter().map(|v| v.to_string()).collect()));
    }
    if plan.num_states() != cfg.num_states() {
        return Err(Error::InvalidPlan("plan and channel disagree on the state count".into()));
    }
    if messages.len() + 1 != plan.blocks {
        return Err(Error::InvalidPlan(format!(
            "{} blocks need {} messages, got {}",
            plan.blocks,
            plan.blocks - 1,
            messages.len()
        )));
    }
    if let Some(m) = messages.iter().find(|m| m.is_zero() || *m > &plan.relay_count) {
        return Err(Error::MessageOutOfRange(format!("{m} not in [1..{}]", plan.relay_count)));
    }
    if opts.engine == DecoderEngine::Exhaustive {
        let limit = BigUint::from(EXHAUSTIVE_LIMIT);
        if let Some(k) = plan.state_counts.iter().chain([&plan.relay_count]).find(|k| *k > &limit) {
            return Err(Error::EnumerationLimit {
                bits: log2_big(k),
                limit: EXHAUSTIVE_LIMIT,
            });
        }
    }
    Ok(())
}

struct Sent {
    y3: Option<Vec<Symbol>>,
    relay_prev: Message,
    tx_prev: Message,
}

#[allow(clippy::too_many_arguments)]
fn push_rows(rows: &mut Vec<TraceRow>, block: usize, first_slot: usize, phase: Phase, states: &[usize], x1: &[Symbol], x2: &[Symbol], y3: &[Symbol]) {
    for i in 0..states.len() {
        rows.push(TraceRow {
            block,
            slot: first_slot + i,
            phase,
            state: states[i],
            x1: x1[i].bit() as u8,
            x2: x2[i].bit() as u8,
            y3: y3[i].bit() as u8,
        });
    }
}

fn chain(
    plan: &BlockPlan,
    policy: &PolicyPmf,
    cfg: &ChannelConfig,
    seed: u64,
    messages: &[Message],
    opts: &RunOptions,
    mut rows: Option<&mut Vec<TraceRow>>,
) -> Result<SimResult> {
    check_inputs(plan, policy, cfg, messages, opts)?;
    let books = generate_codebooks(plan, policy, seed);
    let noise_seed = rng::derive(seed, &[tag::BSC]);
    let mut draws = rng::stream(seed, &[tag::ENSEMBLE]);
    let p = cfg.crossover();
    let blocks = plan.blocks;
    let pre_len = match opts.boundary {
        BoundaryMode::GenieReset => 0,
        BoundaryMode::Preamble => preamble_length(cfg),
    };
    let one = BigUint::one();
    let true_msg = |b: usize| -> Message {
        if b == 0 || b == blocks {
            one.clone()
        } else {
            messages[b - 1].clone()
        }
    };

    let mut res = SimResult {
        blocks_run: (blocks - 1) as u64,
        per_state_visit_counts: vec![0; cfg.num_states()],
        ..Default::default()
    };
    // relay_dec[b] is the relay's decision on m_b; m_0 is known.
    let mut relay_dec: Vec<Message> = vec![one.clone(); blocks + 1];
    let mut sent: Vec<Sent> = Vec::with_capacity(blocks);
    let mut battery = 0usize;
    let mut slot = 0usize;

    for b in 1..=blocks {
        let m_b = true_msg(b);
        let tx_prev = true_msg(b - 1);
        let relay_prev = relay_dec[b - 1].clone();
        let target = books.initial_state(&relay_prev);

        if opts.boundary == BoundaryMode::Preamble {
            let mut acts = preamble_actions(battery, target, cfg);
            acts.resize(pre_len, (Symbol::Zero, Symbol::Zero));
            let mut states = Vec::with_capacity(pre_len);
            let mut u = battery;
            for &(x1, x2) in &acts {
                states.push(u);
                u = cfg.step(u, x1, x2);
            }
            debug_assert_eq!(u, target);
            let x1: Vec<Symbol> = acts.iter().map(|a| a.0).collect();
            let x2: Vec<Symbol> = acts.iter().map(|a| a.1).collect();
            res.energy_violations += energy_violations(&states, &x2, cfg) as u64;
            if let Some(rows) = rows.as_deref_mut() {
                let y3 = apply_bsc_at(&x2, p, noise_seed, slot as u64);
                push_rows(rows, b, slot, Phase::Preamble, &states, &x1, &x2, &y3);
            }
            slot += pre_len;
        }

        let trace = match run_block(&m_b, &tx_prev, &relay_prev, &books, plan, cfg, target) {
            Ok(t) => t,
            Err(Error::PaddingExhausted { .. }) => {
                res.padding_exhausted += 1;
                res.incomplete_codeword_events += 1;
                sent.push(Sent { y3: None, relay_prev, tx_prev });
                slot += plan.n;
                battery = target;
                continue;
            }
            Err(e) => return Err(e),
        };
        res.energy_violations += trace.energy_violations(cfg) as u64;
        for &u in &trace.states {
            res.per_state_visit_counts[u] += 1;
        }
        let y3 = apply_bsc_at(&trace.x2, p, noise_seed, slot as u64);
        if let Some(rows) = rows.as_deref_mut() {
            push_rows(rows, b, slot, Phase::Code, &trace.states, &trace.x1, &trace.x2, &y3);
        }
        slot += plan.n;
        battery = trace.end_state;

        if b < blocks {
            // Noiseless first hop: the relay hears x1 exactly.
            let outcome = match opts.engine {
                DecoderEngine::Exhaustive => relay_decode(&trace.x1, &trace.states, &relay_prev, &books, plan)?,
                DecoderEngine::Ensemble => {
                    let vector = message_vector(&books, &m_b)?;
                    relay_decode_ensemble(
                        &trace.x1,
                        &trace.states,
                        &relay_prev,
                        (&vector.components, &tx_prev),
                        &books,
                        plan,
                        &mut draws,
                    )?
                }
            };
            relay_dec[b] = match outcome {
                Ok(m) => m,
                Err(f) => {
                    match f {
                        RelayFailure::Incomplete { .. } => res.incomplete_codeword_events += 1,
                        RelayFailure::Collision { .. } => res.collision_events += 1,
                        RelayFailure::NoMatch { .. } | RelayFailure::OutOfRange => res.relay_no_match += 1,
                    }
                    one.clone()
                }
            };
        }
        sent.push(Sent { y3: Some(y3), relay_prev, tx_prev });
    }

    // Backward decoding: block b reveals m_{b-1} given m_b.
    let mut estimate: Vec<Message> = vec![one.clone(); blocks + 1];
    let mut known = one.clone();
    for b in (2..=blocks).rev() {
        let s = &sent[b - 1];
        let outcome = match &s.y3 {
            None => ReceiverOutcome::NoMatch,
            Some(y3) => match opts.engine {
                DecoderEngine::Exhaustive if p > 0.0 => {
                    receiver_decode_noisy(y3, &known, &books, plan, cfg, opts.typicality_epsilon)?
                }
                DecoderEngine::Exhaustive => receiver_decode_noiseless(y3, &known, &books, plan, cfg)?,
                DecoderEngine::Ensemble => receiver_decode_ensemble(
                    y3,
                    &known,
                    &[s.relay_prev.clone(), s.tx_prev.clone()],
                    &books,
                    plan,
                    cfg,
                    opts.typicality_epsilon,
                    &mut draws,
                )?,
            },
        };
        let decided = match outcome {
            ReceiverOutcome::Decoded(m) => m,
            ReceiverOutcome::Ambiguous => {
                res.receiver_ambiguous += 1;
                one.clone()
            }
            ReceiverOutcome::NoMatch => {
                res.receiver_no_match += 1;
                one.clone()
            }
        };
        estimate[b - 1] = decided.clone();
        known = decided;
    }

    for b in 1..blocks {
        let m_b = true_msg(b);
        let relay_wrong = relay_dec[b] != m_b;
        let receiver_wrong = estimate[b] != m_b;
        res.relay_block_errors += u64::from(relay_wrong);
        res.end_to_end_errors += u64::from(receiver_wrong);
        res.receiver_block_errors += u64::from(receiver_wrong && !relay_wrong);
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::plan::{make_plan, PlanOptions};
    use crate::markov::{build_transition_matrix, steady_state};

    fn setup(n: usize, blocks: usize, rate: f64, cap: Option<u64>) -> (ChannelConfig, PolicyPmf, BlockPlan) {
        let cfg = ChannelConfig::noiseless(1, 1).unwrap();
        let pmf = PolicyPmf::new(vec![[0.5, 0.0, 0.5, 0.0], [0.25; 4]], &cfg).unwrap();
        let pi = steady_state(&build_transition_matrix(&pmf, &cfg).unwrap()).unwrap();
        let opts = PlanOptions { enumeration_cap: cap, ..Default::default() };
        let plan = make_plan(&pmf, &pi, &cfg, n, blocks, 0.02, rate, &opts).unwrap();
        (cfg, pmf, plan)
    }

    #[test]
    fn single_message_chain_never_errs() {
        let (cfg, pmf, plan) = setup(40, 2, 1e-6, Some(4096));
        assert!(plan.relay_count.is_one());
        for seed in 0..5 {
            let r = run_chain(&plan, &pmf, &cfg, seed, &[BigUint::one()], &RunOptions::default()).unwrap();
            assert_eq!(r.blocks_run, 1);
            assert_eq!(r.end_to_end_errors, 0);
            assert_eq!(r.receiver_block_errors, 0);
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let (cfg, pmf, plan) = setup(60, 4, 0.3, Some(4096));
        let msgs: Vec<Message> = [3u32, 17, 5].iter().map(|&m| BigUint::from(m)).collect();
        let opts = RunOptions::default();
        let a = run_chain(&plan, &pmf, &cfg, 9, &msgs, &opts).unwrap();
        let b = run_chain(&plan, &pmf, &cfg, 9, &msgs, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.blocks_run, 3);
        assert_eq!(a.per_state_visit_counts.iter().sum::<u64>(), 4 * 60);
    }

    #[test]
    fn wrong_message_count_rejected() {
        let (cfg, pmf, plan) = setup(60, 4, 0.3, Some(4096));
        assert!(run_chain(&plan, &pmf, &cfg, 1, &[BigUint::one()], &RunOptions::default()).is_err());
        let too_big = vec![plan.relay_count.clone() + 1u32; 3];
        assert!(run_chain(&plan, &pmf, &cfg, 1, &too_big, &RunOptions::default()).is_err());
    }

    #[test]
    fn exhaustive_refuses_huge_spaces() {
        let (cfg, pmf, plan) = setup(200, 3, 0.5, None);
        let msgs = vec![BigUint::one(); 2];
        assert!(matches!(
            run_chain(&plan, &pmf, &cfg, 1, &msgs, &RunOptions::default()),
            Err(Error::EnumerationLimit { .. })
        ));
        let ens = RunOptions { engine: DecoderEngine::Ensemble, ..Default::default() };
        assert!(run_chain(&plan, &pmf, &cfg, 1, &msgs, &ens).is_ok());
    }

    #[test]
    fn preamble_mode_traces_are_feasible() {
        let (cfg, pmf, plan) = setup(60, 4, 0.3, Some(4096));
        let msgs: Vec<Message> = [3u32, 17, 5].iter().map(|&m| BigUint::from(m)).collect();
        let opts = RunOptions { boundary: BoundaryMode::Preamble, ..Default::default() };
        let (res, rows) = run_chain_traced(&plan, &pmf, &cfg, 2, &msgs, &opts).unwrap();
        assert_eq!(res.energy_violations, 0);
        let pre = preamble_length(&cfg);
        assert_eq!(rows.len(), 4 * (60 + pre));
        for w in rows.windows(2) {
            assert_eq!(w[1].slot, w[0].slot + 1);
            let expect = cfg.step(w[0].state, Symbol::from_bit(w[0].x1 == 1), Symbol::from_bit(w[0].x2 == 1));
            assert_eq!(w[1].state, expect, "battery continuity at slot {}", w[1].slot);
        }
        // Code-phase decisions match genie mode.
        let genie = run_chain(&plan, &pmf, &cfg, 2, &msgs, &RunOptions::default()).unwrap();
        assert_eq!(genie.end_to_end_errors, res.end_to_end_errors);
        assert_eq!(genie.per_state_visit_counts, res.per_state_visit_counts);
    }
}
