//! Block Markov superposition coding over the battery-state channel.
//!
//! A message is split into one component per battery state. Within a block,
//! the transmitter and relay read the next unused symbol of the codeword
//! belonging to the current state, so each per-state codeword sees an
//! i.i.d. channel. The relay forwards the previous block's message on the
//! inner layer; the receiver, blind to the state sequence, decodes
//! backwards by replaying the encoder for every candidate.

pub mod block;
pub mod chain;
pub mod codebook;
pub mod ensemble;
pub mod message;
pub mod plan;
pub mod receiver;
pub mod relay;
pub mod trace;

use serde::{Deserialize, Serialize};

pub use block::{preamble_actions, preamble_length, run_block, BlockTrace};
pub use chain::{run_chain, run_chain_traced, SimResult};
pub use codebook::{generate_codebooks, CodebookSet};
pub use message::{Message, MessageVector};
pub use plan::{make_plan, BlockPlan, BoundaryMode, PlanOptions, DEFAULT_ENUMERATION_CAP};
pub use receiver::{
    default_typicality_epsilon, receiver_decode_noiseless, receiver_decode_noisy, receiver_reconstruct,
    ReceiverOutcome,
};
pub use relay::{relay_decode, RelayFailure, RelayOutcome};

/// Exhaustive decoders refuse message spaces larger than this.
pub const EXHAUSTIVE_LIMIT: u64 = 1 << 24;

/// How decoders treat candidates they did not explicitly generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderEngine {
    /// Generate and compare every candidate codeword.
    #[default]
    Exhaustive,
    /// Generate the transmitted candidates; account for all others through
    /// their exact joint match probability (they are independent draws of
    /// the stationary chain), sampling how many of them compete.
    Ensemble,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    pub engine: DecoderEngine,
    pub boundary: BoundaryMode,
    /// Noisy-decoder band half-width; defaults to `3 sqrt(p(1-p)/n)`.
    pub typicality_epsilon: Option<f64>,
}
