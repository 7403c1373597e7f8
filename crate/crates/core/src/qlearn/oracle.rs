//! Exact Bellman-optimal Q-values for small explicit MDPs, used to check the
//! learner against a brute-force reference.

use rand::Rng;
use thiserror::Error;

use super::{decay_epsilon, greedy_action, q_update, Hyperparameters, QTable};
use crate::envsim::{Action, ObservedState, ACTION_COUNT};
use crate::rng::seeded_rng;

/// Sup-norm change at which value iteration stops.
pub const ORACLE_TOLERANCE: f64 = 1e-10;
const MAX_SWEEPS: usize = 10_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("MDP has no states or no actions")]
    Empty,
    #[error("discount {0} must lie in [0, 1)")]
    Discount(f64),
    #[error("state {state} action {action}: {reason}")]
    Malformed {
        state: usize,
        action: usize,
        reason: String,
    },
    #[error("value iteration did not reach the tolerance")]
    NoFixedPoint,
}

/// One possible result of taking an action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub next: usize,
    pub probability: f64,
    pub reward: f64,
}

/// `outcomes[s][a]` lists the outcomes of action `a` in state `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    pub states: usize,
    pub actions: usize,
    pub outcomes: Vec<Vec<Vec<Outcome>>>,
}

impl FiniteMdp {
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.states == 0 || self.actions == 0 {
            return Err(OracleError::Empty);
        }
        let malformed = |state, action, reason: &str| OracleError::Malformed {
            state,
            action,
            reason: reason.to_string(),
        };
        if self.outcomes.len() != self.states {
            return Err(malformed(self.outcomes.len(), 0, "outcome table has wrong state count"));
        }
        for (s, row) in self.outcomes.iter().enumerate() {
            if row.len() != self.actions {
                return Err(malformed(s, row.len(), "outcome table has wrong action count"));
            }
            for (a, outs) in row.iter().enumerate() {
                if outs.is_empty() {
                    return Err(malformed(s, a, "no outcomes"));
                }
                let mut total = 0.0;
                for o in outs {
                    if o.next >= self.states {
                        return Err(malformed(s, a, "next state out of range"));
                    }
                    if !o.reward.is_finite() || !o.probability.is_finite() || o.probability < 0.0 {
                        return Err(malformed(s, a, "non-finite reward or invalid probability"));
                    }
                    total += o.probability;
                }
                if (total - 1.0).abs() > 1e-9 {
                    return Err(malformed(s, a, "probabilities do not sum to 1"));
                }
            }
        }
        Ok(())
    }

    /// Deterministic outcome of `(state, action)`; the first outcome when stochastic.
    pub fn step(&self, state: usize, action: usize) -> Outcome {
        self.outcomes[state][action][0]
    }
}

/// Optimal `Q[s][a]` by Bellman-optimality iteration to [`ORACLE_TOLERANCE`].
pub fn value_iteration_oracle(mdp: &FiniteMdp, gamma: f64) -> Result<Vec<Vec<f64>>, OracleError> {
    mdp.validate()?;
    if !(0.0..1.0).contains(&gamma) {
        return Err(OracleError::Discount(gamma));
    }
    let mut q = vec![vec![0.0; mdp.actions]; mdp.states];
    for _ in 0..MAX_SWEEPS {
        let v: Vec<f64> = q
            .iter()
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let mut delta: f64 = 0.0;
        for (s, row) in q.iter_mut().enumerate() {
            for (a, value) in row.iter_mut().enumerate() {
                let backed: f64 = mdp.outcomes[s][a]
                    .iter()
                    .map(|o| o.probability * (o.reward + gamma * v[o.next]))
                    .sum();
                delta = delta.max((backed - *value).abs());
                *value = backed;
            }
        }
        if delta <= ORACLE_TOLERANCE {
            return Ok(q);
        }
    }
    Err(OracleError::NoFixedPoint)
}

/// A small harvest MDP embedded in the agent's state space so the production
/// table and update rule can be run on it.
#[derive(Debug, Clone)]
pub struct ToyHarvest {
    pub mdp: FiniteMdp,
    /// Agent state for each MDP state.
    pub observed: Vec<ObservedState>,
    /// Agent action for each MDP action.
    pub actions: Vec<Action>,
}

/// Two light levels (dark, bright) alternating every step, three storage
/// levels (empty, half, full) and two actions: idle (reward 0, keeps any
/// harvest) or sense hard (reward 3, costs one storage level). Sensing hard
/// with an empty store in the dark earns the depletion penalty.
pub fn toy_harvest() -> ToyHarvest {
    const STORAGE: [u8; 3] = [0, 5, 10];
    let index = |bright: usize, storage: usize| bright * 3 + storage;
    let mut outcomes = vec![Vec::new(); 6];
    let mut observed = Vec::with_capacity(6);
    for bright in 0..2 {
        for storage in 0..3 {
            let next_light = 1 - bright;
            let idle_storage = (storage + bright).min(2);
            let idle = Outcome {
                next: index(next_light, idle_storage),
                probability: 1.0,
                reward: 0.0,
            };
            let after = storage as isize + bright as isize - 1;
            let sense = if after < 0 {
                Outcome {
                    next: index(next_light, 0),
                    probability: 1.0,
                    reward: -300.0,
                }
            } else {
                Outcome {
                    next: index(next_light, (after as usize).min(2)),
                    probability: 1.0,
                    reward: 3.0,
                }
            };
            outcomes[index(bright, storage)] = vec![vec![idle], vec![sense]];
            observed.push(
                ObservedState::new(if bright == 1 { 10 } else { 0 }, STORAGE[storage], false)
                    .expect("levels are in range"),
            );
        }
    }
    ToyHarvest {
        mdp: FiniteMdp {
            states: 6,
            actions: 2,
            outcomes,
        },
        observed,
        actions: vec![Action::ALL[0], Action::ALL[3]],
    }
}

/// Runs ε-greedy Q-learning on the toy MDP for `steps` decisions using the
/// production [`QTable`] and [`q_update`]. Episodes of `episode_len` steps
/// start from a uniformly drawn state so that rarely reached states keep
/// being visited. Returns the learned `Q[s][a]` in MDP indexing.
pub fn q_learn_toy(
    toy: &ToyHarvest,
    hp: &Hyperparameters,
    steps: usize,
    episode_len: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut table = QTable::new();
    // Agent actions with no MDP counterpart can never win the max.
    for s in &toy.observed {
        for a in Action::ALL {
            if !toy.actions.contains(&a) {
                table.set(s, a, f64::NEG_INFINITY);
            }
        }
    }
    let mut rng = seeded_rng(seed);
    let mut epsilon = hp.epsilon_max;
    let mut state = 0;
    for step in 0..steps {
        if step % episode_len.max(1) == 0 {
            state = rng.random_range(0..toy.mdp.states);
        }
        let s = &toy.observed[state];
        let a = if rng.random::<f64>() >= epsilon {
            let chosen = greedy_action(&table, s, &mut rng);
            toy.actions.iter().position(|&x| x == chosen).expect("masked actions never win")
        } else {
            rng.random_range(0..toy.actions.len())
        };
        let out = toy.mdp.step(state, a);
        q_update(&mut table, s, toy.actions[a], out.reward, &toy.observed[out.next], hp);
        epsilon = decay_epsilon(epsilon, hp);
        state = out.next;
    }
    debug_assert!(toy.actions.len() <= ACTION_COUNT);
    toy.observed
        .iter()
        .map(|s| toy.actions.iter().map(|&a| table.get(s, a)).collect())
        .collect()
}

/// Largest absolute difference between two Q mappings of equal shape.
pub fn sup_norm_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(next: usize, reward: f64) -> Vec<Outcome> {
        vec![Outcome {
            next,
            probability: 1.0,
            reward,
        }]
    }

    #[test]
    fn single_state_geometric_series() {
        let mdp = FiniteMdp {
            states: 1,
            actions: 1,
            outcomes: vec![vec![det(0, 1.0)]],
        };
        let q = value_iteration_oracle(&mdp, 0.99).unwrap();
        assert!((q[0][0] - 100.0).abs() < 1e-7);
    }

    #[test]
    fn two_state_chain_closed_form() {
        // State 0 moves to the absorbing state 1 for reward 0; state 1 earns 1 forever.
        let mdp = FiniteMdp {
            states: 2,
            actions: 1,
            outcomes: vec![vec![det(1, 0.0)], vec![det(1, 1.0)]],
        };
        let gamma: f64 = 0.9;
        let q = value_iteration_oracle(&mdp, gamma).unwrap();
        let v1 = 1.0 / (1.0 - gamma);
        assert!((q[1][0] - v1).abs() < 1e-8);
        assert!((q[0][0] - gamma * v1).abs() < 1e-8);
    }

    #[test]
    fn stochastic_outcomes_are_averaged() {
        let mdp = FiniteMdp {
            states: 1,
            actions: 1,
            outcomes: vec![vec![vec![
                Outcome { next: 0, probability: 0.25, reward: 4.0 },
                Outcome { next: 0, probability: 0.75, reward: 0.0 },
            ]]],
        };
        let q = value_iteration_oracle(&mdp, 0.5).unwrap();
        assert!((q[0][0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_models() {
        let empty = FiniteMdp { states: 0, actions: 0, outcomes: vec![] };
        assert_eq!(value_iteration_oracle(&empty, 0.9), Err(OracleError::Empty));
        let nan = FiniteMdp {
            states: 1,
            actions: 1,
            outcomes: vec![vec![det(0, f64::NAN)]],
        };
        assert!(matches!(value_iteration_oracle(&nan, 0.9), Err(OracleError::Malformed { .. })));
        let dangling = FiniteMdp {
            states: 1,
            actions: 1,
            outcomes: vec![vec![det(3, 1.0)]],
        };
        assert!(dangling.validate().is_err());
        let one = FiniteMdp {
            states: 1,
            actions: 1,
            outcomes: vec![vec![det(0, 1.0)]],
        };
        assert_eq!(value_iteration_oracle(&one, 1.0), Err(OracleError::Discount(1.0)));
    }

    #[test]
    fn toy_oracle_prefers_idling_when_empty_in_the_dark() {
        let toy = toy_harvest();
        let q = value_iteration_oracle(&toy.mdp, 0.99).unwrap();
        // Dark, empty store.
        assert!(q[0][0] > q[0][1]);
        // Values are bounded by the reward box.
        assert!(q.iter().flatten().all(|v| v.abs() <= 30_003.0));
    }

    #[test]
    fn toy_learning_matches_oracle() {
        let toy = toy_harvest();
        let hp = Hyperparameters::default();
        let oracle = value_iteration_oracle(&toy.mdp, hp.gamma).unwrap();
        let learned = q_learn_toy(&toy, &hp, 1_000_000, 96, 1);
        let gap = sup_norm_distance(&learned, &oracle);
        assert!(gap < 1e-2, "gap {gap}");
    }
}
