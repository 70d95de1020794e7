#![no_main]

use ehrelay::channel::{validate_policy, ChannelConfig, PolicyPmf};
use ehrelay::markov::rate_report;
use libfuzzer_sys::fuzz_target;

// First byte picks the channel; the rest is a JSON policy.
fuzz_target!(|data: &[u8]| {
    let Some((&head, rest)) = data.split_first() else {
        return;
    };
    let u = 1 + (head & 3) as usize;
    let m = 1 + ((head >> 2) & 3) as usize % u;
    let p = f64::from(head >> 4) / 30.0;
    let cfg = ChannelConfig::new(u, m, p).expect("valid channel");
    let Ok(rows) = serde_json::from_slice::<Vec<[f64; 4]>>(rest) else {
        return;
    };
    let raw = PolicyPmf::from_raw(rows.clone());
    let valid = validate_policy(&raw, &cfg).is_empty();
    match PolicyPmf::new(rows, &cfg) {
        Ok(pmf) => {
            assert!(valid);
            let r = rate_report(&pmf, &cfg);
            assert!((0.0..=1.0).contains(&r.achievable));
        }
        Err(_) => assert!(!valid),
    }
});
