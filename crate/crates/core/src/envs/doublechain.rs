//! Two parallel four-state chains joined at a shared exit (state 4).
//!
//! States 0..=3 form the top chain and 5..=8 the bottom one. Action 0
//! advances along the current chain but slips back to state 0 with
//! probability 0.2; action 1 switches to the same position on the other
//! chain. Advancing from 3 or 8 reaches state 4.

use serde::{Deserialize, Serialize};

use super::Variant;
use crate::env::TabularEnv;
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

pub const N_STATES: usize = 9;
pub const EXIT: usize = 4;
pub const SLIP: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DoubleChainSpec {
    pub variant: Variant,
    /// `cost[s] = [advance, switch]`; the exit row is ignored in the finite
    /// variant.
    pub cost: Vec<[f64; 2]>,
    pub gamma: f64,
}

impl Default for DoubleChainSpec {
    fn default() -> Self {
        let top = [0.5, 0.4];
        let bottom = [0.3, 0.4];
        Self {
            variant: Variant::Finite,
            cost: vec![top, top, top, top, [0.0, 0.0], bottom, bottom, bottom, bottom],
            gamma: 0.8,
        }
    }
}

fn next_on_chain(s: usize) -> usize {
    match s {
        3 | 8 => EXIT,
        _ => s + 1,
    }
}

fn other_chain(s: usize) -> usize {
    if s < EXIT {
        s + 5
    } else {
        s - 5
    }
}

pub fn build_doublechain(spec: &DoubleChainSpec) -> Result<TabularMdp> {
    if spec.cost.len() != N_STATES {
        return Err(Error::InvalidConfig(format!("need {N_STATES} cost rows, got {}", spec.cost.len())));
    }
    let mut tr = Vec::new();
    let mut cost = Vec::new();
    for s in 0..N_STATES {
        if s == EXIT {
            match spec.variant {
                Variant::Finite => {
                    tr.push((s, 0, s, 1.0));
                    tr.push((s, 1, s, 1.0));
                }
                Variant::Infinite => {
                    // the exit restarts the top chain
                    for a in 0..2 {
                        tr.push((s, a, 0, 1.0));
                        cost.push((s, a, 0, spec.cost[s][a]));
                    }
                }
            }
            continue;
        }
        let adv = next_on_chain(s);
        tr.push((s, 0, adv, 1.0 - SLIP));
        tr.push((s, 0, 0, SLIP));
        cost.push((s, 0, adv, spec.cost[s][0]));
        cost.push((s, 0, 0, spec.cost[s][0]));
        let sw = other_chain(s);
        tr.push((s, 1, sw, 1.0));
        cost.push((s, 1, sw, spec.cost[s][1]));
    }
    let terminal: &[usize] = match spec.variant {
        Variant::Finite => &[EXIT],
        Variant::Infinite => &[],
    };
    TabularMdp::from_triples(N_STATES, 2, &tr, &cost, spec.gamma, terminal)
}

/// Simulator starting uniformly over the non-terminal states.
pub fn doublechain_env(spec: &DoubleChainSpec) -> Result<TabularEnv> {
    Ok(TabularEnv::new(build_doublechain(spec)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Environment;
    use crate::mdp::validate_mdp;

    #[test]
    fn slip_frequencies() {
        let mdp = build_doublechain(&DoubleChainSpec::default()).unwrap();
        assert!(validate_mdp(&mdp.with_gamma(1.0)).is_empty());
        let mut env = TabularEnv::new(mdp);
        env.reset(3);
        let n = 100_000;
        let mut hits = [0usize; N_STATES];
        for _ in 0..n {
            env.set_state(2).unwrap();
            hits[env.step(0).unwrap().next_state] += 1;
        }
        assert!((hits[3] as f64 / n as f64 - 0.8).abs() < 0.01);
        assert!((hits[0] as f64 / n as f64 - 0.2).abs() < 0.01);
        assert_eq!(hits[3] + hits[0], n);
    }

    #[test]
    fn topology() {
        let mdp = build_doublechain(&DoubleChainSpec::default()).unwrap();
        assert_eq!(mdp.p(8, 0, EXIT), 0.8);
        assert_eq!(mdp.p(1, 1, 6), 1.0);
        assert_eq!(mdp.p(6, 1, 1), 1.0);
        let inf = build_doublechain(&DoubleChainSpec {
            variant: Variant::Infinite,
            gamma: 0.9,
            ..DoubleChainSpec::default()
        })
        .unwrap();
        assert!(!inf.has_terminal());
        assert!(validate_mdp(&inf).is_empty());
    }
}
