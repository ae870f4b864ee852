//! Exact expectation of recurrence pumping over a finite ensemble.
//!
//! The stochastic protocol repeatedly purifies the two lowest-parameter states:
//! success (probability `q`) leaves one purified state, failure loses both.
//! Rather than sampling it, we push the full probability distribution over
//! ensemble configurations forward one attempt at a time. Configurations are
//! multisets of parameters; identical multisets reached through different
//! histories are merged, which keeps the frontier polynomial in size.

use std::collections::BTreeMap;

use super::{purify_pair, WernerParam};

/// Configurations less likely than this are dropped; the recorded expectations
/// are renormalized over the retained mass.
const PRUNE_PROBABILITY: f64 = 1e-16;

/// Sorted `(parameter bits, count)` pairs. Parameters are positive, so the bit
/// pattern orders like the value.
type Config = Vec<(u64, u32)>;

/// Largest state count `m` with `m <= y * ensemble`, never below one state.
pub(crate) fn threshold_for(y: f64, ensemble: u32) -> u32 {
    ((y * f64::from(ensemble) + 1e-9).floor() as u32).max(1)
}

fn count(config: &Config) -> u32 {
    config.iter().map(|&(_, c)| c).sum()
}

fn mean(config: &Config) -> f64 {
    let (mass, n) = config.iter().fold((0.0, 0u32), |(m, n), &(bits, c)| {
        (m + f64::from_bits(bits) * f64::from(c), n + c)
    });
    mass / f64::from(n)
}

fn take_lowest(config: &mut Config) -> f64 {
    let (bits, c) = config[0];
    if c == 1 {
        config.remove(0);
    } else {
        config[0].1 = c - 1;
    }
    f64::from_bits(bits)
}

fn insert(config: &mut Config, value: f64) {
    let bits = value.to_bits();
    match config.binary_search_by_key(&bits, |&(b, _)| b) {
        Ok(pos) => config[pos].1 += 1,
        Err(pos) => config.insert(pos, (bits, 1)),
    }
}

/// Expected mean parameter of the surviving states at the first moment the
/// ensemble holds at most `m` states, for each `m` in `thresholds`.
///
/// Runs that lose every state are excluded from the expectation.
pub(crate) fn expected_profile(p0: f64, ensemble: u32, thresholds: &[u32]) -> Vec<f64> {
    let floor = thresholds.iter().copied().min().unwrap_or(ensemble);
    // (sum of P * mean, sum of P) per threshold value.
    let mut acc: BTreeMap<u32, (f64, f64)> = thresholds
        .iter()
        .filter(|&&m| m < ensemble)
        .map(|&m| (m, (0.0, 0.0)))
        .collect();

    let mut frontier: BTreeMap<Config, f64> = BTreeMap::new();
    frontier.insert(vec![(p0.to_bits(), ensemble)], 1.0);

    while !frontier.is_empty() {
        let mut next: BTreeMap<Config, f64> = BTreeMap::new();
        for (config, prob) in frontier {
            let before = count(&config);
            if before < 2 || before <= floor {
                continue;
            }
            let mut rest = config;
            let a = take_lowest(&mut rest);
            let b = take_lowest(&mut rest);
            let (purified, success) = purify_pair(WernerParam(a), WernerParam(b));
            let mut kept = rest.clone();
            insert(&mut kept, purified.value());
            for (outcome, p) in [(kept, prob * success), (rest, prob * (1.0 - success))] {
                if p < PRUNE_PROBABILITY {
                    continue;
                }
                let after = count(&outcome);
                if after > 0 {
                    let avg = mean(&outcome);
                    for (_, slot) in acc.range_mut(after..before) {
                        slot.0 += p * avg;
                        slot.1 += p;
                    }
                }
                if after > floor && after >= 2 {
                    *next.entry(outcome).or_insert(0.0) += p;
                }
            }
        }
        frontier = next;
    }

    thresholds
        .iter()
        .map(|m| match acc.get(m) {
            Some(&(weighted, mass)) if mass > 0.0 => weighted / mass,
            Some(_) => f64::NAN,
            None => p0,
        })
        .collect()
}
