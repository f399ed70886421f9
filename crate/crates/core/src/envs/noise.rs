//! Additive Gaussian cost noise on top of another environment.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::env::{Environment, Step};
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

/// Adds zero-mean Gaussian noise with a per-action standard deviation to every
/// observed cost. The noise has its own RNG stream, so the state sequence is
/// the same as the wrapped environment's for the same seed and actions.
/// `export_mdp` returns the clean model.
#[derive(Debug, Clone)]
pub struct NoisyEnv<E> {
    inner: E,
    sigma: Vec<f64>,
    rng: ChaCha8Rng,
}

impl<E: Environment> NoisyEnv<E> {
    pub fn new(inner: E, sigma: Vec<f64>) -> Result<Self> {
        if sigma.len() != inner.n_actions() {
            return Err(Error::Dimension(format!(
                "{} noise levels for {} actions",
                sigma.len(),
                inner.n_actions()
            )));
        }
        if sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidConfig("noise levels must be finite and non-negative".into()));
        }
        Ok(Self {
            inner,
            sigma,
            rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn inner_mut(&mut self) -> &mut E {
        &mut self.inner
    }
}

impl<E: Environment> Environment for NoisyEnv<E> {
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    fn n_actions(&self) -> usize {
        self.inner.n_actions()
    }

    fn reset(&mut self, seed: u64) -> usize {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.rng.set_stream(3);
        self.inner.reset(seed)
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        let mut step = self.inner.step(action)?;
        let sd = self.sigma[action];
        if sd > 0.0 {
            let n = Normal::new(0.0, sd).expect("validated noise level");
            step.cost += n.sample(&mut self.rng);
        }
        Ok(step)
    }

    fn export_mdp(&self) -> TabularMdp {
        self.inner.export_mdp()
    }

    fn is_terminal(&self, state: usize) -> bool {
        self.inner.is_terminal(state)
    }

    fn set_parameters(&mut self, zeta: &[f64], eta: &[f64]) -> Result<()> {
        self.inner.set_parameters(zeta, eta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::TabularEnv;
    use crate::envs::gridworld::{build_gridworld, default_noise_sigmas, GridworldSpec};

    fn sample(sigma: Vec<f64>, action: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
        let g = build_gridworld(&GridworldSpec::default()).unwrap();
        let s = g.state((3, 3)).unwrap();
        let mut clean = g.env();
        let mut noisy = NoisyEnv::new(g.env(), sigma).unwrap();
        clean.reset(11);
        noisy.reset(11);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for _ in 0..n {
            clean.set_state(s).unwrap();
            noisy.inner_mut().set_state(s).unwrap();
            let x = clean.step(action).unwrap();
            let y = noisy.step(action).unwrap();
            assert_eq!(x.next_state, y.next_state);
            a.push(x.cost);
            b.push(y.cost);
        }
        (a, b)
    }

    #[test]
    fn zero_sigma_is_identity() {
        let (a, b) = sample(vec![0.0; 9], 2, 1000);
        assert_eq!(a, b);
    }

    #[test]
    fn noise_moments() {
        let n = 100_000;
        for (action, want) in [(1usize, 1.0f64), (6, 0.5)] {
            let (clean, noisy) = sample(default_noise_sigmas(), action, n);
            let d: Vec<f64> = noisy.iter().zip(&clean).map(|(y, x)| y - x).collect();
            let mean = d.iter().sum::<f64>() / n as f64;
            let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
            assert!(mean.abs() < 0.02, "mean {mean}");
            assert!((sd - want).abs() < 0.02, "sd {sd}");
        }
    }

    #[test]
    fn wrong_sigma_length() {
        let g = build_gridworld(&GridworldSpec::default()).unwrap();
        assert!(NoisyEnv::new(g.env(), vec![1.0; 3]).is_err());
        let _: &TabularEnv = NoisyEnv::new(g.env(), vec![1.0; 9]).unwrap().inner();
    }
}
