//! Small block lengths, where the exhaustive decoders can enumerate every
//! candidate, checked against the ensemble engine.

use ehrelay::channel::{ChannelConfig, PolicyPmf};
use ehrelay::codec::{DecoderEngine, PlanOptions, RunOptions};
use ehrelay::simulator::{run_trials, Proportion, TrialSpec};

fn receiver_error(relay_rate_fraction: f64, engine: DecoderEngine) -> Proportion {
    let cfg = ChannelConfig::noiseless(1, 1).unwrap();
    let policy = PolicyPmf::new(vec![[0.0, 0.0, 1.0, 0.0], [0.475, 0.05, 0.475, 0.0]], &cfg).unwrap();
    let spec = TrialSpec {
        cfg,
        policy,
        n: 40,
        blocks: 3,
        epsilon: 0.04,
        rate_fraction: 0.4,
        plan_options: PlanOptions {
            relay_rate_fraction: Some(relay_rate_fraction),
            enumeration_cap: None,
        },
        run: RunOptions {
            engine,
            ..Default::default()
        },
        trials: 150,
        base_seed: 4,
    };
    let (_, res, stats) = run_trials(&spec).unwrap();
    assert_eq!(res.energy_violations, 0);
    stats.receiver_error
}

fn overlap(a: &Proportion, b: &Proportion) -> bool {
    !a.below(b) && !b.below(a)
}

#[test]
fn engines_agree_and_show_the_threshold() {
    let low_x = receiver_error(0.3, DecoderEngine::Exhaustive);
    let low_e = receiver_error(0.3, DecoderEngine::Ensemble);
    let high_x = receiver_error(1.2, DecoderEngine::Exhaustive);
    let high_e = receiver_error(1.2, DecoderEngine::Ensemble);
    assert!(overlap(&low_x, &low_e), "{low_x:?} vs {low_e:?}");
    assert!(overlap(&high_x, &high_e), "{high_x:?} vs {high_e:?}");
    assert!(low_x.below(&high_x), "{low_x:?} vs {high_x:?}");
    assert!(low_e.below(&high_e), "{low_e:?} vs {high_e:?}");
}
