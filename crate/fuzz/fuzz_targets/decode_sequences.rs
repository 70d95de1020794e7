#![no_main]

use std::sync::OnceLock;

use ehrelay::channel::{ChannelConfig, PolicyPmf, Symbol};
use ehrelay::codec::{
    generate_codebooks, make_plan, receiver_decode_noiseless, receiver_decode_noisy, relay_decode, BlockPlan,
    CodebookSet, PlanOptions,
};
use ehrelay::markov::{build_transition_matrix, steady_state};
use libfuzzer_sys::fuzz_target;

const N: usize = 48;

fn setup() -> &'static (ChannelConfig, BlockPlan, CodebookSet) {
    static S: OnceLock<(ChannelConfig, BlockPlan, CodebookSet)> = OnceLock::new();
    S.get_or_init(|| {
        let cfg = ChannelConfig::new(1, 1, 0.1).unwrap();
        let pmf = PolicyPmf::new(vec![[0.5, 0.0, 0.5, 0.0], [0.25; 4]], &cfg).unwrap();
        let pi = steady_state(&build_transition_matrix(&pmf, &cfg).unwrap()).unwrap();
        let plan = make_plan(&pmf, &pi, &cfg, N, 3, 0.05, 0.4, &PlanOptions::default()).unwrap();
        let books = generate_codebooks(&plan, &pmf, 5);
        (cfg, plan, books)
    })
}

// Byte i gives y2[i] (bit 0), the state (bit 1, bit 2 out of range) and y3[i] (bit 3).
fuzz_target!(|data: &[u8]| {
    let (cfg, plan, books) = setup();
    let y2: Vec<Symbol> = data.iter().map(|b| Symbol::from_bit(b & 1 == 1)).collect();
    let states: Vec<usize> = data.iter().map(|b| usize::from((b >> 1) & 3)).collect();
    let y3: Vec<Symbol> = data.iter().map(|b| Symbol::from_bit(b & 8 == 8)).collect();
    let m = ehrelay::codec::Message::from(1u32 + u32::from(data.first().copied().unwrap_or(0)) % 4);
    let _ = relay_decode(&y2, &states, &m, books, plan);
    let _ = receiver_decode_noiseless(&y3, &m, books, plan, cfg);
    let _ = receiver_decode_noisy(&y3, &m, books, plan, cfg, None);
});
