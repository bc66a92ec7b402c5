//! Stochastic channel environment with the zero-reward collision rule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::assignment::{system_reward, Matching};
use crate::error::{Error, Result};
use crate::matrix::MeanMatrix;

/// Reward distribution for one (user, channel) pair, parameterized around
/// the pair's mean `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RewardDist {
    /// Always `mu`.
    PointMass,
    /// Uniform on `[mu - w, mu + w]` with `w = min(half_width, mu, 1 - mu)`.
    Uniform { half_width: f64 },
    /// Normal noise of scale `sigma` truncated symmetrically to
    /// `[mu - w, mu + w]`, `w = min(mu, 1 - mu)`.
    TruncatedNormal { sigma: f64 },
    /// `1` with probability `mu`, else `0`.
    Bernoulli,
}

impl RewardDist {
    fn validate(&self) -> Result<()> {
        match *self {
            RewardDist::Uniform { half_width }
                if !(half_width.is_finite() && half_width >= 0.0) =>
            {
                Err(Error::InvalidDistribution(format!(
                    "uniform half_width must be finite and non-negative, got {half_width}"
                )))
            }
            RewardDist::TruncatedNormal { sigma } if !(sigma.is_finite() && sigma > 0.0) => Err(
                Error::InvalidDistribution(format!("sigma must be positive, got {sigma}")),
            ),
            _ => Ok(()),
        }
    }

    /// Whether a non-collided pull can return exactly zero.
    pub fn has_zero_atom(&self, mu: f64) -> bool {
        match self {
            RewardDist::Bernoulli => mu < 1.0,
            _ => mu == 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, mu: f64, rng: &mut R) -> f64 {
        match *self {
            RewardDist::PointMass => mu,
            RewardDist::Uniform { half_width } => {
                let w = half_width.min(mu).min(1.0 - mu);
                if w <= 0.0 {
                    return mu;
                }
                loop {
                    let x = rng.random_range(mu - w..=mu + w);
                    if x > 0.0 {
                        return x;
                    }
                }
            }
            RewardDist::TruncatedNormal { sigma } => {
                let w = mu.min(1.0 - mu);
                if w <= 0.0 {
                    return mu;
                }
                let normal = Normal::new(mu, sigma).expect("validated sigma");
                loop {
                    let x = normal.sample(rng);
                    if (x - mu).abs() <= w && x > 0.0 {
                        return x;
                    }
                }
            }
            RewardDist::Bernoulli => {
                if rng.random_bool(mu) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// True means plus a reward distribution for every (user, channel) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    matrix: MeanMatrix,
    dists: Vec<RewardDist>,
}

impl ChannelModel {
    /// Same distribution family for every entry.
    pub fn uniform_family(
        matrix: MeanMatrix,
        dist: RewardDist,
        allow_zero_atom: bool,
    ) -> Result<Self> {
        let dists = vec![dist; matrix.k() * matrix.m()];
        Self::new(matrix, dists, allow_zero_atom)
    }

    /// One distribution per entry, row-major.
    ///
    /// Rejects distributions that can return zero without a collision unless
    /// `allow_zero_atom` is set: the protocol reads a zero reward as a
    /// collision, so such atoms corrupt its signaling.
    pub fn new(matrix: MeanMatrix, dists: Vec<RewardDist>, allow_zero_atom: bool) -> Result<Self> {
        if dists.len() != matrix.k() * matrix.m() {
            return Err(Error::InvalidDistribution(format!(
                "expected {} distributions, got {}",
                matrix.k() * matrix.m(),
                dists.len()
            )));
        }
        for (i, d) in dists.iter().enumerate() {
            d.validate()?;
            let mu = matrix.values()[i];
            if !allow_zero_atom && d.has_zero_atom(mu) {
                return Err(Error::InvalidDistribution(format!(
                    "user {} channel {} ({d:?}, mean {mu}) can yield a zero reward without a \
                     collision; set allow_zero_atom to permit it",
                    i / matrix.m() + 1,
                    i % matrix.m() + 1
                )));
            }
        }
        Ok(Self { matrix, dists })
    }

    pub fn matrix(&self) -> &MeanMatrix {
        &self.matrix
    }

    pub fn dist(&self, user: usize, channel: usize) -> RewardDist {
        self.dists[user * self.matrix.m() + channel]
    }

    pub fn has_zero_atom(&self) -> bool {
        self.dists
            .iter()
            .zip(self.matrix.values())
            .any(|(d, &mu)| d.has_zero_atom(mu))
    }

    /// `sum_j mu_j(assignment[j])` for a user-indexed matching.
    pub fn expected_system_reward(&self, matching: &Matching) -> Result<f64> {
        if matching.len() != self.matrix.k() {
            return Err(Error::InvalidMatching(format!(
                "expected {} users, got {}",
                self.matrix.k(),
                matching.len()
            )));
        }
        if let Some(&c) = matching.assignment().iter().find(|&&c| c > self.matrix.m()) {
            return Err(Error::ActionOutOfRange {
                action: c,
                m: self.matrix.m(),
            });
        }
        Ok(system_reward(&self.matrix, matching))
    }
}

/// Result of one synchronous step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutcome {
    pub rewards: Vec<f64>,
    pub collided: Vec<bool>,
    /// Number of users on each channel (index `c - 1`).
    pub occupancy: Vec<u32>,
}

impl StepOutcome {
    pub fn collisions(&self) -> usize {
        self.collided.iter().filter(|c| **c).count()
    }
}

/// A seeded channel environment. Single-owner; stepped sequentially.
#[derive(Debug, Clone)]
pub struct Environment {
    model: ChannelModel,
    rng: ChaCha8Rng,
}

impl Environment {
    pub fn new(model: ChannelModel, seed: u64) -> Self {
        Self {
            model,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn model(&self) -> &ChannelModel {
        &self.model
    }

    pub fn step(&mut self, actions: &[usize]) -> Result<StepOutcome> {
        let mut out = StepOutcome::default();
        self.step_into(actions, &mut out)?;
        Ok(out)
    }

    /// Like [`Environment::step`] but reuses the buffers in `out`.
    ///
    /// Rewards of non-colliding users are drawn in ascending user order.
    pub fn step_into(&mut self, actions: &[usize], out: &mut StepOutcome) -> Result<()> {
        let k = self.model.matrix.k();
        let m = self.model.matrix.m();
        if actions.len() != k {
            return Err(Error::InvalidConfig(format!(
                "expected {k} actions, got {}",
                actions.len()
            )));
        }
        if let Some(&a) = actions.iter().find(|&&a| a == 0 || a > m) {
            return Err(Error::ActionOutOfRange { action: a, m });
        }
        out.occupancy.clear();
        out.occupancy.resize(m, 0);
        for &a in actions {
            out.occupancy[a - 1] += 1;
        }
        out.rewards.clear();
        out.collided.clear();
        for (user, &a) in actions.iter().enumerate() {
            let collided = out.occupancy[a - 1] > 1;
            out.collided.push(collided);
            let reward = if collided {
                0.0
            } else {
                let mu = self.model.matrix.get(user, a - 1);
                self.model.dist(user, a - 1).sample(mu, &mut self.rng)
            };
            out.rewards.push(reward);
        }
        Ok(())
    }
}
