//! Multi-armed bandit policies that pick the next destroy operator.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use thiserror::Error;

use crate::acceptance::OutcomeKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BanditError {
    #[error("a bandit needs at least one arm")]
    NoArms,
    #[error("arm {0} out of range")]
    UnknownArm(usize),
    #[error("Thompson sampling needs rewards in {{0, 1}}, got {0}")]
    NonBinaryReward(f64),
    #[error("reward vector must be non-increasing best >= better >= accept >= reject: {0:?}")]
    UnorderedRewards([f64; 4]),
    #[error("invalid policy parameter: {0}")]
    BadParameter(String),
    #[error("unknown policy preset {0:?}")]
    UnknownPreset(String),
}

/// Rewards for (best, better, accepted, rejected).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardScheme([f64; 4]);

impl RewardScheme {
    pub const LINEAR: RewardScheme = RewardScheme([3.0, 2.0, 1.0, 0.0]);
    pub const EXPONENTIAL: RewardScheme = RewardScheme([8.0, 4.0, 2.0, 1.0]);
    /// Binary: accepting pays the same as rejecting.
    pub const ACCEPT_SAME: RewardScheme = RewardScheme([1.0, 1.0, 0.0, 0.0]);
    /// Binary: accepting pays like an improvement.
    pub const ACCEPT_BETTER: RewardScheme = RewardScheme([1.0, 1.0, 1.0, 0.0]);

    pub fn new(values: [f64; 4]) -> Result<Self, BanditError> {
        let ordered = values.windows(2).all(|w| w[0] >= w[1]) && values.iter().all(|v| v.is_finite());
        if ordered {
            Ok(RewardScheme(values))
        } else {
            Err(BanditError::UnorderedRewards(values))
        }
    }

    pub fn values(&self) -> [f64; 4] {
        self.0
    }

    pub fn reward(&self, outcome: OutcomeKind) -> f64 {
        self.0[outcome.index()]
    }

    pub fn is_binary(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0 || v == 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    EpsilonGreedy { epsilon: f64 },
    Softmax { tau: f64 },
    Thompson,
}

impl Policy {
    pub const DEFAULT_EPSILON: f64 = 0.1;
    pub const DEFAULT_TAU: f64 = 1.0;

    pub fn validate(&self) -> Result<(), BanditError> {
        match *self {
            Policy::EpsilonGreedy { epsilon } if !(0.0..=1.0).contains(&epsilon) => {
                Err(BanditError::BadParameter(format!("epsilon {epsilon} not in [0, 1]")))
            }
            Policy::Softmax { tau } if !(tau > 0.0 && tau.is_finite()) => {
                Err(BanditError::BadParameter(format!("tau {tau} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

/// The six named policy/reward combinations.
pub const PRESET_NAMES: [&str; 6] = [
    "e-Greedy_linear",
    "e-Greedy_exp",
    "Softmax_linear",
    "Softmax_exp",
    "TS_accept_better",
    "TS_accept_same",
];

pub fn preset(name: &str) -> Result<(Policy, RewardScheme), BanditError> {
    let eg = Policy::EpsilonGreedy {
        epsilon: Policy::DEFAULT_EPSILON,
    };
    let sm = Policy::Softmax {
        tau: Policy::DEFAULT_TAU,
    };
    Ok(match name {
        "e-Greedy_linear" => (eg, RewardScheme::LINEAR),
        "e-Greedy_exp" => (eg, RewardScheme::EXPONENTIAL),
        "Softmax_linear" => (sm, RewardScheme::LINEAR),
        "Softmax_exp" => (sm, RewardScheme::EXPONENTIAL),
        "TS_accept_better" => (Policy::Thompson, RewardScheme::ACCEPT_BETTER),
        "TS_accept_same" => (Policy::Thompson, RewardScheme::ACCEPT_SAME),
        _ => return Err(BanditError::UnknownPreset(name.to_string())),
    })
}

/// Per-arm statistics and the selection rule. Arms are indices `0..k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bandit {
    policy: Policy,
    counts: Vec<u64>,
    means: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl Bandit {
    pub fn new(policy: Policy, arms: usize) -> Result<Self, BanditError> {
        if arms == 0 {
            return Err(BanditError::NoArms);
        }
        policy.validate()?;
        Ok(Bandit {
            policy,
            counts: vec![0; arms],
            means: vec![0.0; arms],
            alpha: vec![1.0; arms],
            beta: vec![1.0; arms],
        })
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn arms(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    /// Beta posterior parameters `(alpha, beta)` of an arm.
    pub fn posterior(&self, arm: usize) -> (f64, f64) {
        (self.alpha[arm], self.beta[arm])
    }

    /// Overrides an arm's posterior.
    pub fn set_posterior(&mut self, arm: usize, alpha: f64, beta: f64) {
        self.alpha[arm] = alpha;
        self.beta[arm] = beta;
    }

    /// Index of the highest mean, lowest index on ties.
    pub fn greedy_arm(&self) -> usize {
        argmax(&self.means)
    }

    /// Every arm is pulled once, in order, before the policy's rule applies.
    pub fn select(&self, rng: &mut impl Rng) -> usize {
        if let Some(unpulled) = self.counts.iter().position(|&c| c == 0) {
            return unpulled;
        }
        let k = self.arms();
        match self.policy {
            Policy::EpsilonGreedy { epsilon } => {
                if rng.random::<f64>() < epsilon {
                    rng.random_range(0..k)
                } else {
                    self.greedy_arm()
                }
            }
            Policy::Softmax { tau } => {
                let weights = softmax(&self.means, tau);
                let mut u = rng.random::<f64>();
                for (a, w) in weights.iter().enumerate() {
                    if u < *w {
                        return a;
                    }
                    u -= w;
                }
                k - 1
            }
            Policy::Thompson => {
                let theta: Vec<f64> = (0..k)
                    .map(|a| {
                        Beta::new(self.alpha[a], self.beta[a])
                            .expect("positive beta parameters")
                            .sample(rng)
                    })
                    .collect();
                argmax(&theta)
            }
        }
    }

    pub fn update(&mut self, arm: usize, reward: f64) -> Result<(), BanditError> {
        if arm >= self.arms() {
            return Err(BanditError::UnknownArm(arm));
        }
        if self.policy == Policy::Thompson {
            if reward != 0.0 && reward != 1.0 {
                return Err(BanditError::NonBinaryReward(reward));
            }
            self.alpha[arm] += reward;
            self.beta[arm] += 1.0 - reward;
        }
        self.counts[arm] += 1;
        self.means[arm] += (reward - self.means[arm]) / self.counts[arm] as f64;
        Ok(())
    }
}

/// Selection probabilities `exp(mu/tau) / sum exp(mu/tau)`.
pub fn softmax(means: &[f64], tau: f64) -> Vec<f64> {
    let top = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = means.iter().map(|m| ((m - top) / tau).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn warmed(policy: Policy, rewards: &[f64]) -> Bandit {
        let mut b = Bandit::new(policy, rewards.len()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for &r in rewards {
            let a = b.select(&mut rng);
            b.update(a, r).unwrap();
        }
        b
    }

    #[test]
    fn reward_lookup() {
        assert_eq!(RewardScheme::LINEAR.reward(OutcomeKind::Best), 3.0);
        assert_eq!(RewardScheme::EXPONENTIAL.reward(OutcomeKind::Accepted), 2.0);
        assert_eq!(RewardScheme::ACCEPT_SAME.reward(OutcomeKind::Accepted), 0.0);
        assert_eq!(RewardScheme::ACCEPT_BETTER.reward(OutcomeKind::Accepted), 1.0);
        assert!(RewardScheme::ACCEPT_SAME.is_binary());
        assert!(!RewardScheme::LINEAR.is_binary());
        assert!(RewardScheme::new([0.0, 1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn presets() {
        for name in PRESET_NAMES {
            let (policy, scheme) = preset(name).unwrap();
            assert_eq!(policy == Policy::Thompson, scheme.is_binary(), "{name}");
        }
        assert!(preset("UCB").is_err());
    }

    #[test]
    fn updates() {
        let mut b = Bandit::new(Policy::EpsilonGreedy { epsilon: 0.1 }, 2).unwrap();
        b.update(0, 3.0).unwrap();
        assert_eq!((b.counts()[0], b.means()[0]), (1, 3.0));
        b.update(1, 2.0).unwrap();
        b.update(1, 4.0).unwrap();
        assert_eq!(b.means()[1], 3.0);
        let mut t = Bandit::new(Policy::Thompson, 1).unwrap();
        t.update(0, 1.0).unwrap();
        assert_eq!(t.posterior(0), (2.0, 1.0));
        assert_eq!(t.update(0, 3.0), Err(BanditError::NonBinaryReward(3.0)));
        assert_eq!(t.update(4, 1.0), Err(BanditError::UnknownArm(4)));
        assert_eq!(Bandit::new(Policy::Thompson, 0), Err(BanditError::NoArms));
    }

    #[test]
    fn round_robin_warm_up() {
        for policy in [Policy::EpsilonGreedy { epsilon: 1.0 }, Policy::Softmax { tau: 1.0 }, Policy::Thompson] {
            let mut b = Bandit::new(policy, 4).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let order: Vec<usize> = (0..4)
                .map(|_| {
                    let a = b.select(&mut rng);
                    b.update(a, 0.0).unwrap();
                    a
                })
                .collect();
            assert_eq!(order, [0, 1, 2, 3]);
        }
    }

    #[test]
    fn pure_greedy_and_cold_softmax() {
        let b = warmed(Policy::EpsilonGreedy { epsilon: 0.0 }, &[0.9, 0.1]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!((0..1000).all(|_| b.select(&mut rng) == 0));
        let s = warmed(Policy::Softmax { tau: 1e-3 }, &[0.1, 0.9, 0.5]);
        let hits = (0..10_000).filter(|_| s.select(&mut rng) == 1).count();
        assert!(hits as f64 / 1e4 > 0.99);
    }

    #[test]
    fn thompson_prefers_confident_arm() {
        let mut b = Bandit::new(Policy::Thompson, 2).unwrap();
        b.update(0, 1.0).unwrap();
        b.update(1, 0.0).unwrap();
        b.set_posterior(0, 100.0, 1.0);
        b.set_posterior(1, 1.0, 100.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let hits = (0..10_000).filter(|_| b.select(&mut rng) == 0).count();
        assert!(hits as f64 / 1e4 > 0.95);
    }

    #[test]
    fn scaling_rewards_keeps_greedy_sequence() {
        let rewards = [1.0, 0.0, 2.0, 1.0, 3.0, 0.0, 1.0, 2.0];
        let run = |scale: f64| {
            let mut b = Bandit::new(Policy::EpsilonGreedy { epsilon: 0.2 }, 3).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut seq = Vec::new();
            for step in 0..200 {
                let a = b.select(&mut rng);
                seq.push(a);
                b.update(a, scale * rewards[(step + a) % rewards.len()]).unwrap();
            }
            seq
        };
        assert_eq!(run(1.0), run(7.5));
    }
}
