//! Channel alphabet, energy constraints and battery dynamics.
//!
//! A state is the number of stored energy units, `0..=U`. Receiving a `1`
//! adds one unit (saturating at `U`); transmitting a `1` costs `m` units and
//! is only allowed when at least `m` units are stored, even if a `1` is being
//! received in the same slot.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sum-to-one tolerance for per-state pmfs.
pub const PMF_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Symbol {
    Zero = 0,
    One = 1,
}

impl Symbol {
    pub const ALL: [Symbol; 2] = [Symbol::Zero, Symbol::One];

    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Symbol::One
        } else {
            Symbol::Zero
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Symbol::Zero),
            1 => Some(Symbol::One),
            _ => None,
        }
    }

    #[inline]
    pub fn bit(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn flip(self) -> Self {
        match self {
            Symbol::Zero => Symbol::One,
            Symbol::One => Symbol::Zero,
        }
    }
}

/// Battery capacity `U`, energy cost `m` of a transmitted `1`, and the
/// crossover probability `p` of the relay-to-receiver hop (`0` = noiseless).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    battery_capacity: usize,
    energy_cost: usize,
    #[serde(default)]
    crossover: f64,
}

impl ChannelConfig {
    pub fn new(battery_capacity: usize, energy_cost: usize, crossover: f64) -> Result<Self> {
        let cfg = ChannelConfig {
            battery_capacity,
            energy_cost,
            crossover,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn noiseless(battery_capacity: usize, energy_cost: usize) -> Result<Self> {
        Self::new(battery_capacity, energy_cost, 0.0)
    }

    /// Re-checks invariants; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.battery_capacity < 1 {
            return Err(Error::InvalidConfig("battery_capacity must be at least 1".into()));
        }
        if self.energy_cost < 1 {
            return Err(Error::InvalidConfig("energy_cost must be at least 1".into()));
        }
        if self.energy_cost > self.battery_capacity {
            return Err(Error::InvalidConfig(format!(
                "energy_cost {} exceeds battery_capacity {}; the relay could never transmit",
                self.energy_cost, self.battery_capacity
            )));
        }
        if !(0.0..=0.5).contains(&self.crossover) {
            return Err(Error::InvalidConfig(format!(
                "crossover {} outside [0, 0.5]",
                self.crossover
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn battery_capacity(&self) -> usize {
        self.battery_capacity
    }

    #[inline]
    pub fn energy_cost(&self) -> usize {
        self.energy_cost
    }

    #[inline]
    pub fn crossover(&self) -> f64 {
        self.crossover
    }

    pub fn with_crossover(mut self, p: f64) -> Result<Self> {
        self.crossover = p;
        self.validate()?;
        Ok(self)
    }

    /// Number of battery levels, `U + 1`.
    #[inline]
    pub fn num_states(&self) -> usize {
        self.battery_capacity + 1
    }

    #[inline]
    pub fn can_transmit_one(&self, state: usize) -> bool {
        state >= self.energy_cost
    }

    fn check_state(&self, state: usize) -> Result<()> {
        if state > self.battery_capacity {
            return Err(Error::StateOutOfRange {
                state,
                capacity: self.battery_capacity,
            });
        }
        Ok(())
    }

    /// Unchecked transition; callers guarantee `x2 = 1 => state >= m`.
    #[inline]
    pub(crate) fn step(&self, state: usize, x1: Symbol, x2: Symbol) -> usize {
        debug_assert!(x2 == Symbol::Zero || state >= self.energy_cost);
        let charged = state + x1.bit();
        let spent = charged - self.energy_cost * x2.bit();
        spent.min(self.battery_capacity)
    }
}

/// Relay symbols allowed in `state`: `{0}` below `m`, `{0, 1}` otherwise.
pub fn feasible_relay_outputs(state: usize, cfg: &ChannelConfig) -> Result<Vec<Symbol>> {
    cfg.check_state(state)?;
    if cfg.can_transmit_one(state) {
        Ok(vec![Symbol::Zero, Symbol::One])
    } else {
        Ok(vec![Symbol::Zero])
    }
}

/// Battery level after one slot: `min(u + x1 - m*x2, U)`.
pub fn next_state(state: usize, x1: Symbol, x2: Symbol, cfg: &ChannelConfig) -> Result<usize> {
    cfg.check_state(state)?;
    if x2 == Symbol::One && !cfg.can_transmit_one(state) {
        return Err(Error::InfeasibleTransmit {
            state,
            cost: cfg.energy_cost,
        });
    }
    Ok(cfg.step(state, x1, x2))
}

/// Joint pmf of `(x1, x2)` in one state, indexed `2*x1 + x2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StatePmf {
    probs: [f64; 4],
}

impl StatePmf {
    /// Validated constructor: entries non-negative, sum within
    /// [`PMF_TOLERANCE`] of one, then renormalized.
    pub fn new(probs: [f64; 4]) -> Result<Self> {
        let problems = pmf_problems(&probs);
        if !problems.is_empty() {
            return Err(Error::InvalidPolicy(problems));
        }
        let total: f64 = probs.iter().sum();
        Ok(StatePmf {
            probs: probs.map(|q| q / total),
        })
    }

    /// No checks; [`validate_policy`] reports any problems later.
    pub fn from_raw(probs: [f64; 4]) -> Self {
        StatePmf { probs }
    }

    pub fn from_fn(mut f: impl FnMut(Symbol, Symbol) -> f64) -> Result<Self> {
        let mut probs = [0.0; 4];
        for x1 in Symbol::ALL {
            for x2 in Symbol::ALL {
                probs[Self::index(x1, x2)] = f(x1, x2);
            }
        }
        Self::new(probs)
    }

    /// All mass on one pair.
    pub fn point(x1: Symbol, x2: Symbol) -> Self {
        let mut probs = [0.0; 4];
        probs[Self::index(x1, x2)] = 1.0;
        StatePmf { probs }
    }

    #[inline]
    pub fn index(x1: Symbol, x2: Symbol) -> usize {
        2 * x1.bit() + x2.bit()
    }

    #[inline]
    pub fn prob(&self, x1: Symbol, x2: Symbol) -> f64 {
        self.probs[Self::index(x1, x2)]
    }

    #[inline]
    pub fn probs(&self) -> &[f64; 4] {
        &self.probs
    }

    /// `P(x2 = 1)`.
    #[inline]
    pub fn x2_one(&self) -> f64 {
        self.probs[1] + self.probs[3]
    }

    /// `P(x1 = 1)`.
    #[inline]
    pub fn x1_one(&self) -> f64 {
        self.probs[2] + self.probs[3]
    }

    /// `P(x1 = 1 | x2)`, or `None` if `x2` has zero probability.
    pub fn x1_one_given(&self, x2: Symbol) -> Option<f64> {
        let p_x2 = self.prob(Symbol::Zero, x2) + self.prob(Symbol::One, x2);
        (p_x2 > 0.0).then(|| self.prob(Symbol::One, x2) / p_x2)
    }

    /// `H(X1 | X2)` in bits.
    pub fn conditional_entropy_x1_given_x2(&self) -> f64 {
        Symbol::ALL
            .iter()
            .map(|&x2| {
                let p_x2 = self.prob(Symbol::Zero, x2) + self.prob(Symbol::One, x2);
                if p_x2 > 0.0 {
                    p_x2 * crate::info::binary_entropy(self.prob(Symbol::One, x2) / p_x2)
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// `H(X2)` in bits.
    pub fn entropy_x2(&self) -> f64 {
        crate::info::binary_entropy(self.x2_one())
    }
}

fn pmf_problems(probs: &[f64; 4]) -> Vec<String> {
    let mut out = Vec::new();
    if probs.iter().any(|q| !q.is_finite() || *q < 0.0) {
        out.push(format!("entries must be finite and non-negative, got {probs:?}"));
        return out;
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > PMF_TOLERANCE {
        out.push(format!("entries sum to {total}, not 1"));
    }
    out
}

/// One [`StatePmf`] per battery level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolicyPmf {
    per_state: Vec<StatePmf>,
}

impl PolicyPmf {
    /// Validates against `cfg` (see [`validate_policy`]) and renormalizes.
    pub fn new(per_state: Vec<[f64; 4]>, cfg: &ChannelConfig) -> Result<Self> {
        let raw = PolicyPmf::from_raw(per_state);
        let violations = validate_policy(&raw, cfg);
        if !violations.is_empty() {
            return Err(Error::InvalidPolicy(violations.iter().map(|v| v.to_string()).collect()));
        }
        Ok(raw.renormalized())
    }

    pub fn from_raw(per_state: Vec<[f64; 4]>) -> Self {
        PolicyPmf {
            per_state: per_state.into_iter().map(StatePmf::from_raw).collect(),
        }
    }

    pub fn from_states(per_state: Vec<StatePmf>) -> Self {
        PolicyPmf { per_state }
    }

    fn renormalized(self) -> Self {
        PolicyPmf {
            per_state: self
                .per_state
                .into_iter()
                .map(|s| {
                    let total: f64 = s.probs.iter().sum();
                    StatePmf::from_raw(s.probs.map(|q| q / total))
                })
                .collect(),
        }
    }

    /// Every state uses the same pmf, with `x2` forced to 0 below `m`
    /// (the `x1` marginal is preserved there).
    pub fn uniform_like(cfg: &ChannelConfig, pmf: StatePmf) -> Self {
        let per_state = (0..cfg.num_states())
            .map(|u| {
                if cfg.can_transmit_one(u) {
                    pmf
                } else {
                    let p1 = pmf.x1_one();
                    StatePmf::from_raw([1.0 - p1, 0.0, p1, 0.0])
                }
            })
            .collect();
        PolicyPmf { per_state }
    }

    #[inline]
    pub fn state(&self, u: usize) -> &StatePmf {
        &self.per_state[u]
    }

    #[inline]
    pub fn num_states(&self) -> usize {
        self.per_state.len()
    }

    pub fn states(&self) -> &[StatePmf] {
        &self.per_state
    }

    pub fn to_rows(&self) -> Vec<[f64; 4]> {
        self.per_state.iter().map(|s| s.probs).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyViolation {
    WrongStateCount { expected: usize, got: usize },
    BadDistribution { state: usize, detail: String },
    ForbiddenSupport { state: usize, mass: f64 },
}

impl std::fmt::Display for PolicyViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PolicyViolation::WrongStateCount { expected, got } => {
                write!(f, "policy has {got} states, expected {expected}")
            }
            PolicyViolation::BadDistribution { state, detail } => {
                write!(f, "state {state}: {detail}")
            }
            PolicyViolation::ForbiddenSupport { state, mass } => {
                write!(f, "state {state}: relay transmits 1 with probability {mass} below the energy cost")
            }
        }
    }
}

/// Empty when every state carries a valid pmf and no state below `m` puts
/// mass on `x2 = 1`.
pub fn validate_policy(pmf: &PolicyPmf, cfg: &ChannelConfig) -> Vec<PolicyViolation> {
    let mut out = Vec::new();
    if pmf.num_states() != cfg.num_states() {
        out.push(PolicyViolation::WrongStateCount {
            expected: cfg.num_states(),
            got: pmf.num_states(),
        });
        return out;
    }
    for (u, s) in pmf.per_state.iter().enumerate() {
        for detail in pmf_problems(&s.probs) {
            out.push(PolicyViolation::BadDistribution { state: u, detail });
        }
        if !cfg.can_transmit_one(u) {
            let mass = s.probs[1] + s.probs[3];
            if mass != 0.0 {
                out.push(PolicyViolation::ForbiddenSupport { state: u, mass });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use Symbol::{One, Zero};

    fn cfg(u: usize, m: usize) -> ChannelConfig {
        ChannelConfig::noiseless(u, m).unwrap()
    }

    #[test]
    fn config_rejects_bad_values() {
        assert!(ChannelConfig::new(2, 3, 0.0).is_err());
        assert!(ChannelConfig::new(0, 1, 0.0).is_err());
        assert!(ChannelConfig::new(2, 0, 0.0).is_err());
        assert!(ChannelConfig::new(2, 1, 0.6).is_err());
        assert!(ChannelConfig::new(2, 1, -0.1).is_err());
        assert!(ChannelConfig::new(2, 2, 0.5).is_ok());
    }

    #[test]
    fn feasible_outputs() {
        assert_eq!(feasible_relay_outputs(1, &cfg(4, 2)).unwrap(), vec![Zero]);
        assert_eq!(feasible_relay_outputs(2, &cfg(4, 2)).unwrap(), vec![Zero, One]);
        assert_eq!(feasible_relay_outputs(0, &cfg(1, 1)).unwrap(), vec![Zero]);
        assert!(feasible_relay_outputs(5, &cfg(4, 2)).is_err());
    }

    #[test]
    fn transitions() {
        let c = cfg(4, 2);
        assert_eq!(next_state(2, One, Zero, &c).unwrap(), 3);
        assert_eq!(next_state(4, One, Zero, &c).unwrap(), 4);
        assert_eq!(next_state(2, Zero, One, &c).unwrap(), 0);
        assert_eq!(next_state(2, One, One, &c).unwrap(), 1);
        assert_eq!(next_state(3, Zero, Zero, &c).unwrap(), 3);
    }

    #[test]
    fn transmit_below_cost_is_rejected_even_while_charging() {
        let c = cfg(4, 2);
        assert_eq!(
            next_state(1, One, One, &c),
            Err(Error::InfeasibleTransmit { state: 1, cost: 2 })
        );
        assert!(next_state(0, Zero, One, &c).is_err());
    }

    #[test]
    fn validate_forbidden_support() {
        let c = cfg(1, 1);
        let p = PolicyPmf::from_raw(vec![[0.9, 0.1, 0.0, 0.0], [0.25; 4]]);
        let v = validate_policy(&p, &c);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], PolicyViolation::ForbiddenSupport { state: 0, .. }));
    }

    #[test]
    fn validate_all_idle_is_a_distribution() {
        let c = cfg(3, 2);
        let p = PolicyPmf::from_states(vec![StatePmf::point(Zero, Zero); 4]);
        assert!(validate_policy(&p, &c).is_empty());
    }

    #[test]
    fn validate_bad_sum() {
        let c = cfg(1, 1);
        let p = PolicyPmf::from_raw(vec![[0.5, 0.0, 0.5, 0.0], [0.25, 0.25, 0.25, 0.24]]);
        let v = validate_policy(&p, &c);
        assert!(matches!(v[..], [PolicyViolation::BadDistribution { state: 1, .. }]));
        assert!(PolicyPmf::new(p.to_rows(), &c).is_err());
    }

    #[test]
    fn validate_state_count() {
        let p = PolicyPmf::from_raw(vec![[1.0, 0.0, 0.0, 0.0]]);
        assert!(!validate_policy(&p, &cfg(1, 1)).is_empty());
    }

    #[test]
    fn renormalizes_within_tolerance() {
        let c = cfg(1, 1);
        let p = PolicyPmf::new(vec![[0.5, 0.0, 0.5 + 4e-13, 0.0], [0.25; 4]], &c).unwrap();
        let s: f64 = p.state(0).probs().iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn conditional_entropy() {
        let s = StatePmf::new([0.25; 4]).unwrap();
        assert!((s.conditional_entropy_x1_given_x2() - 1.0).abs() < 1e-15);
        let copy = StatePmf::new([0.5, 0.0, 0.0, 0.5]).unwrap();
        assert_eq!(copy.conditional_entropy_x1_given_x2(), 0.0);
        assert!((copy.entropy_x2() - 1.0).abs() < 1e-15);
    }
}
