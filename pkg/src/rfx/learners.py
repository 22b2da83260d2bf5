"""Regret-minimizing learners used as the inner engine of exploration.

A learner only sees an :class:`~rfx.mdp.Environment` (episode sampling) and
the reward it is asked to maximize; it returns the policy it played in each
episode.  The built-in learner is optimistic value iteration on the empirical
model with Bernstein (variance-aware) or Hoeffding bonuses.

To keep long runs cheap the optimistic policy is recomputed only when some
visit count N_h(s, a) doubles (or leaves zero).  Between recomputations the
same deterministic policy is played, so the per-episode sequence is stored
run-length encoded as :class:`PolicyRuns`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .dp import policy_value, value_iteration
from .mdp import EpisodeDataset, Environment, RewardTable, StochasticPolicy, TabularMdp

LearnerKind = Literal["bernstein", "hoeffding", "oracle"]
_KINDS = ("bernstein", "hoeffding", "oracle")


@dataclass(frozen=True)
class RegretLearnerConfig:
    kind: LearnerKind = "bernstein"
    bonus_scale: float = 1.0
    failure_prob: float = 0.1
    min_batch: int = 32
    max_batch: int = 1 << 14

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown learner kind {self.kind!r}; expected one of {_KINDS}")
        if not self.bonus_scale > 0:
            raise ValueError("bonus_scale must be positive")
        if not 0 < self.failure_prob < 1:
            raise ValueError("failure_prob must lie in (0, 1)")


@dataclass
class PolicyRuns:
    """Run-length encoded episode policies: ``policies[i]`` was played ``counts[i]`` times."""

    policies: list[StochasticPolicy] = field(default_factory=list)
    counts: list[int] = field(default_factory=list)

    def append(self, policy: StochasticPolicy, count: int) -> None:
        if count <= 0:
            return
        if self.policies and np.array_equal(self.policies[-1].probs, policy.probs):
            self.counts[-1] += count
        else:
            self.policies.append(policy)
            self.counts.append(int(count))

    def __len__(self) -> int:
        return int(sum(self.counts))

    def expand(self) -> list[StochasticPolicy]:
        """The per-episode list, in the order episodes were played."""
        return [p for p, c in zip(self.policies, self.counts) for _ in range(c)]

    def average_value(self, mdp: TabularMdp, reward: RewardTable) -> float:
        vals = np.array([policy_value(mdp, reward, p) for p in self.policies])
        return float(np.dot(vals, self.counts) / len(self))


def _value_caps(r: np.ndarray) -> np.ndarray:
    """cap[h] = largest reward still collectable from step h on (cap[H] = 0)."""
    H = r.shape[0]
    cap = np.zeros(H + 1)
    for h in range(H - 1, -1, -1):
        cap[h] = r[h].max() + cap[h + 1]
    return cap


def optimistic_actions(counts3: np.ndarray, reward: RewardTable, kind: str,
                       bonus_scale: float, iota: float) -> np.ndarray:
    """Greedy actions (H, S) of optimistic value iteration on the count model.

    Q is clipped to the largest collectable reward, which is a valid upper
    bound and much tighter than H for sparse rewards.  Unvisited pairs get the
    cap itself.
    """
    H, S, A, _ = counts3.shape
    r = reward.values
    cap = _value_caps(r)
    counts2 = counts3.sum(axis=-1)
    actions = np.zeros((H, S), dtype=int)
    V = np.zeros(S)
    for h in range(H - 1, -1, -1):
        N = counts2[h]
        Nsafe = np.maximum(N, 1)
        P_hat = counts3[h] / Nsafe[..., None]
        EV = P_hat @ V
        if kind == "bernstein":
            var = np.maximum(P_hat @ (V * V) - EV * EV, 0.0)
            bonus = np.sqrt(2.0 * var * iota / Nsafe) + cap[h + 1] * iota / Nsafe
        else:
            bonus = cap[h + 1] * np.sqrt(iota / Nsafe)
        Q = np.minimum(r[h] + EV + bonus_scale * bonus, cap[h])
        Q = np.where(N > 0, Q, cap[h])
        actions[h] = np.argmax(Q, axis=1)
        V = Q.max(axis=1)
    return actions


def _doubling_stop(room: np.ndarray, S: int, A: int):
    """Stop rule: keep episodes through the first one that exhausts some cell's room."""
    room = room.ravel()

    def stop(batch: EpisodeDataset) -> int:
        B, H = batch.actions.shape
        ids = (np.arange(H)[None, :] * S + batch.states[:, :H]) * A + batch.actions
        flat = ids.ravel()
        order = np.argsort(flat, kind="stable")
        cells, first, cnt = np.unique(flat[order], return_index=True, return_counts=True)
        need = room[cells]
        hit = cnt >= need
        if not hit.any():
            return B
        pos = order[first[hit] + need[hit] - 1]
        return int(pos.min() // H) + 1

    return stop


def _tally(counts3: np.ndarray, data: EpisodeDataset) -> None:
    H = data.horizon
    for h in range(H):
        np.add.at(counts3[h], (data.states[:, h], data.actions[:, h], data.states[:, h + 1]), 1)


def run_regret_learner(env: Environment, reward: RewardTable, n0: int,
                       cfg: RegretLearnerConfig, rng: np.random.Generator) -> PolicyRuns:
    """Play ``n0`` episodes maximizing ``reward`` and return the policies played."""
    if n0 < 1:
        raise ValueError("n0 must be at least 1")
    S, A, H = env.S, env.A, env.H
    if (reward.H, reward.S, reward.A) != (H, S, A):
        raise ValueError("reward does not match the environment")
    runs = PolicyRuns()

    if cfg.kind == "oracle":
        # test stub: reads the kernel, plays the exact optimum every episode
        _, policy = value_iteration(env.unwrap(), reward)
        env.rollout(policy, n0, rng)
        runs.append(policy, n0)
        return runs

    iota = float(np.log(S * A * H * n0 / cfg.failure_prob))
    counts3 = np.zeros((H, S, A, S), dtype=np.int64)
    done, batch = 0, cfg.min_batch
    while done < n0:
        ref = counts3.sum(axis=-1)
        policy = StochasticPolicy.deterministic(
            optimistic_actions(counts3, reward, cfg.kind, cfg.bonus_scale, iota), A)
        room = np.where(ref > 0, ref, 1)
        data = env.rollout_until(policy, min(batch, n0 - done), _doubling_stop(room, S, A), rng)
        _tally(counts3, data)
        runs.append(policy, len(data))
        done += len(data)
        batch = int(np.clip(2 * len(data), cfg.min_batch, cfg.max_batch))
    return runs
