"""Reward-free exploration: learn a policy cover, then collect data from it.

For every goal (s, h), taken in row-major order (h outer, s inner), a regret
learner maximizes the indicator reward 1[s_h = s] for ``n0`` episodes.  Each
returned policy is made uniform over actions at the goal itself, and the
union of all of them forms the cover.  ``n`` episodes are then played, each
with a policy drawn uniformly from the cover.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dp import indicator_reward, occupancy_batch, significance
from .learners import PolicyRuns, RegretLearnerConfig, run_regret_learner
from .mdp import EpisodeDataset, Environment, StochasticPolicy, TabularMdp, stream

DATA_CHUNK = 8192


@dataclass
class PolicyCover:
    """Distinct policies with multiplicities; ``len(cover)`` counts multiplicity.

    ``goals[i]`` is the 0-based (s, h) whose learner produced ``policies[i]``.
    """

    policies: list[StochasticPolicy] = field(default_factory=list)
    weights: list[int] = field(default_factory=list)
    goals: list[tuple[int, int]] = field(default_factory=list)
    per_goal_counts: dict[tuple[int, int], int] = field(default_factory=dict)

    def __len__(self) -> int:
        return int(sum(self.weights))

    def add(self, goal: tuple[int, int], runs: PolicyRuns) -> None:
        for p, c in zip(runs.policies, runs.counts):
            self.policies.append(p)
            self.weights.append(int(c))
            self.goals.append(goal)
        self.per_goal_counts[goal] = self.per_goal_counts.get(goal, 0) + len(runs)

    def expand(self) -> list[StochasticPolicy]:
        return [p for p, w in zip(self.policies, self.weights) for _ in range(w)]


@dataclass(frozen=True, eq=False)
class MixtureDistribution:
    """Exact occupancy ``mu[h, s, a]`` of the uniform mixture over a cover."""

    mu: np.ndarray


def uniformize(policy: StochasticPolicy, s: int, h: int) -> StochasticPolicy:
    probs = policy.probs.copy()
    probs[h, s, :] = 1.0 / policy.A
    return StochasticPolicy(probs)


def _seed_of(rng) -> int:
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(2**63))
    return int(rng)


def learn_cover(env: Environment, n0: int, cfg: RegretLearnerConfig, seed: int) -> PolicyCover:
    S, A, H = env.S, env.A, env.H
    cover = PolicyCover()
    for h in range(H):
        for s in range(S):
            goal_idx = h * S + s
            runs = run_regret_learner(env, indicator_reward(S, A, H, s, h), n0, cfg,
                                      stream(seed, 0, goal_idx))
            uniform_runs = PolicyRuns([uniformize(p, s, h) for p in runs.policies], list(runs.counts))
            cover.add((s, h), uniform_runs)
    return cover


def collect_from_cover(env: Environment, cover: PolicyCover, n: int, seed: int) -> EpisodeDataset:
    """``n`` episodes, each played by a policy drawn uniformly from the cover.

    Work is split into fixed chunks with their own streams, so the dataset is
    a function of ``seed`` alone.
    """
    if len(cover) == 0:
        raise ValueError("cannot sample from an empty cover")
    weights = np.asarray(cover.weights, dtype=float)
    weights /= weights.sum()
    parts = []
    for c, start in enumerate(range(0, n, DATA_CHUNK)):
        m = min(DATA_CHUNK, n - start)
        rng = stream(seed, 1, c)
        pick = rng.choice(len(cover.policies), size=m, p=weights)
        states = np.empty((m, env.H + 1), dtype=np.int64)
        actions = np.empty((m, env.H), dtype=np.int64)
        for i in np.unique(pick):
            where = np.flatnonzero(pick == i)
            part = env.rollout(cover.policies[i], where.size, rng)
            states[where], actions[where] = part.states, part.actions
        parts.append(EpisodeDataset(states, actions, env.H))
    return EpisodeDataset.concat(parts)


def rf_explore(env: Environment, n0: int, n: int, cfg: RegretLearnerConfig,
               rng) -> tuple[PolicyCover, EpisodeDataset]:
    """Reward-free exploration; ``rng`` is a seed or a Generator.

    Uses exactly ``S * H * n0 + n`` episodes of ``env``.
    """
    if n0 < 1 or n < 1:
        raise ValueError("n0 and n must be at least 1")
    seed = _seed_of(rng)
    cover = learn_cover(env, n0, cfg, seed)
    return cover, collect_from_cover(env, cover, n, seed)


def mixture_occupancy(mdp: TabularMdp, cover: PolicyCover, chunk: int = 2048) -> MixtureDistribution:
    if len(cover) == 0:
        raise ValueError("cover is empty")
    w = np.asarray(cover.weights, dtype=float)
    mu = np.zeros((mdp.H, mdp.S, mdp.A))
    for start in range(0, len(cover.policies), chunk):
        block = np.stack([p.probs for p in cover.policies[start:start + chunk]])
        occ = occupancy_batch(mdp, block)
        mu += np.tensordot(w[start:start + chunk], occ, axes=1)
    return MixtureDistribution(mu / w.sum())


def coverage_ratio(mdp: TabularMdp, mu: MixtureDistribution, delta: float,
                   report=None) -> tuple[float, tuple[int, int, int] | None]:
    """max over delta-significant (s, h) and all a of max_pi P_h^pi(s, a) / mu_h(s, a).

    Playing ``a`` at (s, h) does not change the probability of reaching (s, h),
    so the numerator is the maximum reach probability of (s, h).  Returns
    ``(ratio, (s, a, h))``; the ratio is ``inf`` when a significant pair has no
    mixture mass, and ``(0.0, None)`` when nothing is significant.
    """
    if report is None:
        report = significance(mdp, delta)
    best, witness = 0.0, None
    for h, s in zip(*np.nonzero(report.significant)):
        for a in range(mdp.A):
            m = mu.mu[h, s, a]
            ratio = np.inf if m <= 0.0 else report.lam[h, s] / m
            if ratio > best or witness is None:
                best, witness = float(ratio), (int(s), int(a), int(h))
    return best, witness
