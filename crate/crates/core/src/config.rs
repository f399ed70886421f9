//! TOML model files: an MDP as a list of `(s, a, s', p, c)` rows.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

/// One transition row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionRow {
    pub s: usize,
    pub a: usize,
    pub next: usize,
    pub p: f64,
    #[serde(default)]
    pub cost: f64,
}

/// On-disk form of a [`TabularMdp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpFile {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    #[serde(default)]
    pub terminal: Vec<usize>,
    /// Terminal states need no rows; they are made absorbing and cost-free.
    #[serde(default, rename = "transition")]
    pub transitions: Vec<TransitionRow>,
}

impl MdpFile {
    pub fn to_mdp(&self) -> Result<TabularMdp> {
        let mut tr: Vec<(usize, usize, usize, f64)> = self.transitions.iter().map(|r| (r.s, r.a, r.next, r.p)).collect();
        let costs: Vec<(usize, usize, usize, f64)> = self.transitions.iter().map(|r| (r.s, r.a, r.next, r.cost)).collect();
        for &t in &self.terminal {
            if self.transitions.iter().any(|r| r.s == t) {
                return Err(Error::Parse(format!("terminal state {t} must not have transition rows")));
            }
            for a in 0..self.n_actions {
                tr.push((t, a, t, 1.0));
            }
        }
        TabularMdp::from_triples(self.n_states, self.n_actions, &tr, &costs, self.gamma, &self.terminal)
    }

    /// Every non-zero transition of `mdp`, in `(s, a, s')` order. Terminal
    /// rows are left implicit.
    pub fn from_mdp(mdp: &TabularMdp) -> Self {
        let mut transitions = Vec::new();
        for s in (0..mdp.n_states()).filter(|&s| !mdp.is_terminal(s)) {
            for a in 0..mdp.n_actions() {
                for &next in mdp.successors(s, a) {
                    transitions.push(TransitionRow {
                        s,
                        a,
                        next,
                        p: mdp.p(s, a, next),
                        cost: mdp.c(s, a, next),
                    });
                }
            }
        }
        Self {
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            gamma: mdp.gamma(),
            terminal: (0..mdp.n_states()).filter(|&s| mdp.is_terminal(s)).collect(),
            transitions,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Reads a model file.
pub fn load_mdp(path: &Path) -> Result<TabularMdp> {
    MdpFile::from_toml(&std::fs::read_to_string(path)?)?.to_mdp()
}

/// Reads any TOML document into `T`.
pub fn load_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(toml::from_str(&std::fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_STATE: &str = r#"
n_states = 2
n_actions = 1
gamma = 1.0
terminal = [1]

[[transition]]
s = 0
a = 0
next = 1
p = 0.5
cost = 1.0

[[transition]]
s = 0
a = 0
next = 0
p = 0.5
cost = 1.0
"#;

    #[test]
    fn parse_and_round_trip() {
        let mdp = MdpFile::from_toml(TWO_STATE).unwrap().to_mdp().unwrap();
        assert_eq!(mdp.p(0, 0, 1), 0.5);
        assert_eq!(mdp.p(1, 0, 1), 1.0);
        let back = MdpFile::from_toml(&MdpFile::from_mdp(&mdp).to_toml().unwrap()).unwrap().to_mdp().unwrap();
        assert_eq!(back, mdp);
    }

    #[test]
    fn rejects_rows_on_terminal() {
        let text = TWO_STATE.replace("s = 0\na = 0\nnext = 0", "s = 1\na = 0\nnext = 0");
        assert!(MdpFile::from_toml(&text).unwrap().to_mdp().is_err());
    }
}
