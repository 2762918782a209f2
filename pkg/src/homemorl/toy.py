"""Two-state, two-action, two-objective MOMDP with an enumerable CCS.

The agent visits state 0 then state 1 and the episode ends. Rewards
depend only on (state, action), so the four deterministic policies can be
enumerated exactly.
"""

from __future__ import annotations

import itertools

import numpy as np

from homemorl.env import BatchEnv
from homemorl.mo import Solution, ccs_prune

DEFAULT_REWARDS = np.array([
    [[1.0, 0.0], [0.0, 1.0]],   # state 0: action 0, action 1
    [[0.5, 0.0], [0.0, 0.6]],   # state 1
])


class ToyMOMDP(BatchEnv):
    """State rows hold the state index; features are one-hot."""

    n_actions = 2
    reward_dim = 2
    n_features = 2
    horizon = 2

    def __init__(self, rewards: np.ndarray = DEFAULT_REWARDS, gamma: float = 1.0):
        self.rewards = np.asarray(rewards, dtype=float)
        self.gamma = gamma

    def reset_batch(self, tasks, start_hours=None) -> np.ndarray:
        return np.zeros((len(np.asarray(tasks)), 1))

    def step_batch(self, S, A, tasks):
        s = S[:, 0].astype(int)
        A = np.asarray(A, dtype=int)
        R = self.rewards[s, A]
        done = s == 1
        S2 = np.where(done, 1, s + 1).astype(float)[:, None]
        return S2, R, done

    def features(self, S) -> np.ndarray:
        S = np.atleast_2d(S)
        return np.eye(2)[S[:, 0].astype(int)]

    def model_step(self, F: np.ndarray, A: np.ndarray):
        """Exact dynamics in feature space, for plugging the true model into Dyna."""
        S = np.argmax(F, axis=1).astype(float)[:, None]
        S2, R, done = self.step_batch(S, A, np.zeros(len(F)))
        return self.features(S2), R, done

    def policy_values(self) -> list[Solution]:
        """Undiscounted-by-default value of every deterministic policy ``(a0, a1)``."""
        out = []
        for a0, a1 in itertools.product(range(2), repeat=2):
            v = self.rewards[0, a0] + self.gamma * self.rewards[1, a1]
            out.append(Solution(v, (a0, a1)))
        return out

    def ccs(self) -> list[Solution]:
        return ccs_prune(self.policy_values())
