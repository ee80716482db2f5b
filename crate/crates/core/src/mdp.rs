//! Finite MDPs with generative-model access.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::RngStream;

const STOCHASTIC_TOL: f64 = 1e-12;

/// Clipped zero-mean Gaussian reward noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub std: f64,
    pub clip: f64,
}

impl NoiseSpec {
    pub fn new(std: f64, clip: f64) -> Result<Self> {
        if !(std >= 0.0 && clip >= 0.0 && std.is_finite() && clip.is_finite()) {
            return Err(Error::InvalidNoise { std, clip });
        }
        Ok(Self { std, clip })
    }

    pub fn noiseless() -> Self {
        Self {
            std: 0.0,
            clip: 0.0,
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.std == 0.0
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            std: 0.5,
            clip: 0.5,
        }
    }
}

/// Symmetric clipping of a raw noise draw to `[-clip, clip]`.
pub fn clip_noise(raw: f64, clip: f64) -> f64 {
    raw.clamp(-clip, clip)
}

/// One generative-model draw for every `(s, a)`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTables {
    pub n_states: usize,
    pub n_actions: usize,
    pub next_states: Vec<usize>,
    pub rewards: Vec<f64>,
}

/// Immutable finite MDP `(S, A, P, r, gamma)` with a reward-noise model.
///
/// Transition rows are stored sparsely as `(next_state, probability)` pairs in
/// state-major, action-minor order.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transitions: Vec<Vec<(usize, f64)>>,
    reward_mean: Vec<f64>,
    gamma: f64,
    noise: NoiseSpec,
    r_max: f64,
}

impl TabularMdp {
    /// Builds and validates an MDP. `transitions[s * n_actions + a]` lists the
    /// support of `P(.|s,a)`; `reward_mean` is laid out the same way.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<Vec<(usize, f64)>>,
        reward_mean: Vec<f64>,
        gamma: f64,
        noise: NoiseSpec,
        r_max: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidConfig(
                "MDP needs at least one state and one action".into(),
            ));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidGamma(gamma));
        }
        let noise = NoiseSpec::new(noise.std, noise.clip)?;
        let d = n_states * n_actions;
        if transitions.len() != d || reward_mean.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: transitions.len().min(reward_mean.len()),
            });
        }
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::ParamOutOfRange(format!(
                "r_max must be positive, got {r_max}"
            )));
        }

        let mut cleaned = Vec::with_capacity(d);
        for (idx, row) in transitions.into_iter().enumerate() {
            let (state, action) = (idx / n_actions, idx % n_actions);
            let kernel_err = |reason: String| Error::InvalidKernel {
                state,
                action,
                reason,
            };
            let mut total = 0.0;
            let mut kept = Vec::with_capacity(row.len());
            for (next, p) in row {
                if next >= n_states {
                    return Err(kernel_err(format!("successor {next} out of range")));
                }
                if !(p >= 0.0 && p.is_finite()) {
                    return Err(kernel_err(format!("probability {p} is not a valid mass")));
                }
                total += p;
                if p > 0.0 {
                    kept.push((next, p));
                }
            }
            if (total - 1.0).abs() > STOCHASTIC_TOL {
                return Err(kernel_err(format!("row sums to {total}")));
            }
            cleaned.push(kept);
        }
        for (idx, &r) in reward_mean.iter().enumerate() {
            if !r.is_finite() || r.abs() > r_max {
                return Err(Error::RewardOutOfRange {
                    state: idx / n_actions,
                    action: idx % n_actions,
                    value: r,
                    r_max,
                });
            }
        }

        Ok(Self {
            n_states,
            n_actions,
            transitions: cleaned,
            reward_mean,
            gamma,
            noise,
            r_max,
        })
    }

    /// Builds an MDP from a dense kernel laid out as `p[(s * n_actions + a) * n_states + s']`.
    pub fn from_dense(
        n_states: usize,
        n_actions: usize,
        kernel: &[f64],
        reward_mean: Vec<f64>,
        gamma: f64,
        noise: NoiseSpec,
        r_max: f64,
    ) -> Result<Self> {
        let d = n_states * n_actions;
        if kernel.len() != d * n_states {
            return Err(Error::DimensionMismatch {
                expected: d * n_states,
                found: kernel.len(),
            });
        }
        let rows = kernel
            .chunks_exact(n_states)
            .map(|row| row.iter().copied().enumerate().collect())
            .collect();
        Self::new(n_states, n_actions, rows, reward_mean, gamma, noise, r_max)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// `|S| * |A|`, the dimension of a flattened Q-table.
    pub fn dim(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn noise(&self) -> NoiseSpec {
        self.noise
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn reward_mean(&self, s: usize, a: usize) -> f64 {
        self.reward_mean[s * self.n_actions + a]
    }

    pub fn reward_means(&self) -> &[f64] {
        &self.reward_mean
    }

    /// Support of `P(.|s,a)` as `(next_state, probability)` pairs.
    pub fn transition(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.transitions[s * self.n_actions + a]
    }

    /// Bound on any observed reward sample: `r_max` plus the noise clip.
    pub fn sample_reward_bound(&self) -> f64 {
        self.r_max + self.noise.clip
    }

    fn check_index(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.n_states || a >= self.n_actions {
            return Err(Error::IndexOutOfRange {
                state: s,
                action: a,
                n_states: self.n_states,
                n_actions: self.n_actions,
            });
        }
        Ok(())
    }

    /// Draws `s' ~ P(.|s,a)` by inverse CDF. Consumes exactly one `u64`.
    pub fn sample_next_state(&self, s: usize, a: usize, rng: &mut RngStream) -> Result<usize> {
        self.check_index(s, a)?;
        Ok(self.draw_next(s * self.n_actions + a, rng))
    }

    /// Draws `r(s,a) + clip(N(0, std^2), -clip, clip)`. Noiseless MDPs consume no draws.
    pub fn sample_reward(&self, s: usize, a: usize, rng: &mut RngStream) -> Result<f64> {
        self.check_index(s, a)?;
        Ok(self.draw_reward(s * self.n_actions + a, rng))
    }

    fn draw_next(&self, idx: usize, rng: &mut RngStream) -> usize {
        let row = &self.transitions[idx];
        let u = rng.uniform();
        let mut acc = 0.0;
        for &(next, p) in row {
            acc += p;
            if u < acc {
                return next;
            }
        }
        // u landed in the rounding gap above the accumulated mass.
        row.last().map(|&(next, _)| next).unwrap_or(0)
    }

    fn draw_reward(&self, idx: usize, rng: &mut RngStream) -> f64 {
        let mean = self.reward_mean[idx];
        if self.noise.is_noiseless() {
            return mean;
        }
        let g: f64 = StandardNormal.sample(rng);
        mean + clip_noise(self.noise.std * g, self.noise.clip)
    }

    /// One synchronous generative-model draw: a next state and a noisy reward
    /// for every `(s, a)`, in row-major order.
    pub fn synchronous_sample(&self, rng: &mut RngStream) -> SampleTables {
        let d = self.dim();
        let mut next_states = Vec::with_capacity(d);
        let mut rewards = Vec::with_capacity(d);
        for idx in 0..d {
            next_states.push(self.draw_next(idx, rng));
            rewards.push(self.draw_reward(idx, rng));
        }
        SampleTables {
            n_states: self.n_states,
            n_actions: self.n_actions,
            next_states,
            rewards,
        }
    }
}
