"""Zero-RMax: reward-free exploration with a known set and 0/1 rewards.

A pair (s, h) is known once every action has been tried there at least ``m``
times.  Each episode plans on an MDP where known pairs use the empirical
kernel with reward 0 and unknown pairs self-loop with reward 1, so the greedy
policy heads for the nearest unknown pair.  Planning for a real reward picks one
snapshot (uniformly at random, or the last one) and runs value iteration on
that snapshot's model with unknown pairs still absorbing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .dp import value_iteration
from .mdp import (EpisodeDataset, Environment, RewardTable, StochasticPolicy, TabularMdp,
                  stream)
from .planner import EmpiricalModel, count_transitions


@dataclass(frozen=True, eq=False)
class KnownSet:
    known: np.ndarray   # (H, S) bool
    m: int

    @classmethod
    def from_counts(cls, counts2: np.ndarray, m: int) -> "KnownSet":
        return cls(counts2.min(axis=-1) >= m, m)


@dataclass(frozen=True, eq=False)
class RmaxSnapshot:
    """State of Zero-RMax at the start of 1-based episode ``episode``."""

    episode: int
    counts3: np.ndarray
    m: int
    initial_dist: np.ndarray

    @cached_property
    def model(self) -> EmpiricalModel:
        return EmpiricalModel.from_counts(self.counts3)

    @cached_property
    def known_set(self) -> KnownSet:
        return KnownSet.from_counts(self.model.counts2, self.m)


def known_set_mdp(model: EmpiricalModel, known: KnownSet, initial_dist: np.ndarray) -> TabularMdp:
    """Empirical kernel on known pairs, self-loop point mass on unknown pairs."""
    P = model.p_hat.copy()
    h, s = np.nonzero(~known.known)
    P[h, s] = 0.0
    P[h, s, :, s] = 1.0
    return TabularMdp(P, initial_dist)


def exploration_reward(known: KnownSet, A: int) -> RewardTable:
    """1 on every action at unknown (s, h), 0 on known ones."""
    return RewardTable(np.repeat((~known.known).astype(float)[..., None], A, axis=-1))


def exploration_policy(model: EmpiricalModel, known: KnownSet,
                       initial_dist: np.ndarray) -> StochasticPolicy:
    """Greedy policy of the exploration MDP.

    At an unknown pair every action has the same Q value (self-loop, action
    independent reward), so the tie is broken toward the least-tried action;
    elsewhere ties go to the lowest index.
    """
    mdp = known_set_mdp(model, known, initial_dist)
    _, greedy = value_iteration(mdp, exploration_reward(known, mdp.A))
    actions = greedy.greedy_actions()
    h, s = np.nonzero(~known.known)
    actions[h, s] = np.argmin(model.counts2[h, s], axis=-1)
    return StochasticPolicy.deterministic(actions, mdp.A)


def zero_rmax_explore(env: Environment, n_episodes: int, m: int, rng,
                      initial_dist: np.ndarray | None = None) -> list[RmaxSnapshot]:
    """Run ``n_episodes`` of Zero-RMax and return one snapshot per episode.

    The planning MDPs need a start distribution; it only weights start states
    and does not change the greedy policy, so the uniform distribution is used
    unless one is given.
    """
    return zero_rmax_run(env, n_episodes, m, rng, initial_dist)[0]


def zero_rmax_run(env: Environment, n_episodes: int, m: int, rng,
                  initial_dist: np.ndarray | None = None
                  ) -> tuple[list[RmaxSnapshot], EpisodeDataset]:
    """Like :func:`zero_rmax_explore` but also returns the episodes played."""
    if m < 1 or n_episodes < 1:
        raise ValueError("m and n_episodes must be at least 1")
    S, A, H = env.S, env.A, env.H
    p1 = np.full(S, 1.0 / S) if initial_dist is None else np.asarray(initial_dist, float)
    seed = int(rng.integers(2**63)) if isinstance(rng, np.random.Generator) else int(rng)
    counts3 = np.zeros((H, S, A, S), dtype=np.int64)
    snapshots, trajs = [], []
    for i in range(1, n_episodes + 1):
        snap = RmaxSnapshot(i, counts3.copy(), m, p1)
        snapshots.append(snap)
        policy = exploration_policy(snap.model, snap.known_set, p1)
        traj = env.episode(policy, stream(seed, i))
        trajs.append(traj)
        for h in range(H):
            counts3[h, traj.states[h], traj.actions[h], traj.states[h + 1]] += 1
    return snapshots, EpisodeDataset.from_trajectories(trajs, H)


def snapshots_from_episodes(dataset: EpisodeDataset, S: int, A: int, m: int,
                            initial_dist: np.ndarray | None = None) -> list[RmaxSnapshot]:
    """Rebuild the snapshot list from the episodes Zero-RMax played."""
    H = dataset.horizon
    p1 = np.full(S, 1.0 / S) if initial_dist is None else np.asarray(initial_dist, float)
    counts3 = np.zeros((H, S, A, S), dtype=np.int64)
    out = []
    for i in range(len(dataset)):
        out.append(RmaxSnapshot(i + 1, counts3.copy(), m, p1))
        counts3 += count_transitions(
            EpisodeDataset(dataset.states[i:i + 1], dataset.actions[i:i + 1], H), S, A, H)
    return out


def zero_rmax_plan(snapshots: list[RmaxSnapshot], reward: RewardTable, rng=None,
                   snapshot: str = "random") -> StochasticPolicy:
    """Value iteration on one snapshot's known-set MDP with the given reward.

    ``snapshot="random"`` draws the index uniformly (needs ``rng``);
    ``snapshot="last"`` uses the final snapshot for reproducible comparisons.
    """
    if not snapshots:
        raise ValueError("no snapshots to plan from")
    if snapshot == "last":
        snap = snapshots[-1]
    elif snapshot == "random":
        if rng is None:
            raise ValueError("random snapshot selection needs an rng")
        snap = snapshots[int(np.random.default_rng(rng).integers(len(snapshots)))]
    else:
        raise ValueError(f"unknown snapshot mode {snapshot!r}")
    mdp = known_set_mdp(snap.model, snap.known_set, snap.initial_dist)
    return value_iteration(mdp, reward)[1]


def theoretical_m(S: int, A: int, H: int, eps: float, p: float) -> int:
    """Known-set threshold of the analysis, ceil(S H^8 / eps^2 * log(SAH / (p eps)))."""
    return math.ceil(S * H**8 / eps**2 * math.log(S * A * H / (p * eps)))
