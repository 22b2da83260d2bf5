"""Planning from a reward-free dataset.

The empirical kernel is built from visit counts; pairs never visited get a
self-loop point mass.  Any solver with the signature
``solver(mdp, reward, epsilon) -> StochasticPolicy`` can then be run on it;
exact value iteration and natural policy gradient are built in.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dp import policy_evaluation, value_iteration
from .mdp import (DimensionMismatchError, EpisodeDataset, RewardTable, StochasticPolicy,
                  TabularMdp)

Solver = Callable[[TabularMdp, RewardTable, float], StochasticPolicy]


@dataclass(frozen=True, eq=False)
class EmpiricalModel:
    counts3: np.ndarray   # (H, S, A, S) N_h(s, a, s')
    counts2: np.ndarray   # (H, S, A)    N_h(s, a)
    p_hat: np.ndarray     # (H, S, A, S)

    @classmethod
    def from_counts(cls, counts3: np.ndarray) -> "EmpiricalModel":
        counts3 = np.asarray(counts3, dtype=np.int64)
        counts2 = counts3.sum(axis=-1)
        H, S, A, _ = counts3.shape
        p_hat = counts3 / np.maximum(counts2, 1)[..., None]
        unseen = counts2 == 0
        h, s, a = np.nonzero(unseen)
        p_hat[h, s, a, :] = 0.0
        p_hat[h, s, a, s] = 1.0
        return cls(counts3, counts2, p_hat)

    def to_mdp(self, initial_dist: np.ndarray) -> TabularMdp:
        return TabularMdp(self.p_hat, initial_dist)


def count_transitions(dataset: EpisodeDataset, S: int, A: int, H: int) -> np.ndarray:
    if dataset.horizon != H:
        raise DimensionMismatchError(f"dataset horizon {dataset.horizon} != H = {H}")
    st, ac = dataset.states, dataset.actions
    if st.size and (st.min() < 0 or st.max() >= S):
        raise ValueError(f"dataset contains a state outside 0..{S - 1}")
    if ac.size and (ac.min() < 0 or ac.max() >= A):
        raise ValueError(f"dataset contains an action outside 0..{A - 1}")
    counts3 = np.zeros((H, S, A, S), dtype=np.int64)
    for h in range(H):
        flat = (st[:, h] * A + ac[:, h]) * S + st[:, h + 1]
        counts3[h] = np.bincount(flat, minlength=S * A * S).reshape(S, A, S)
    return counts3


def estimate_model(dataset: EpisodeDataset, S: int, A: int, H: int) -> EmpiricalModel:
    return EmpiricalModel.from_counts(count_transitions(dataset, S, A, H))


def empirical_initial_dist(dataset: EpisodeDataset, S: int) -> np.ndarray:
    counts = np.bincount(dataset.states[:, 0], minlength=S).astype(float)
    return counts / counts.sum() if counts.sum() else np.full(S, 1.0 / S)


@dataclass(frozen=True)
class NpgConfig:
    eta: float
    iterations: int
    record_trace: bool = False

    def __post_init__(self):
        # eta = 0 is allowed and leaves the uniform start unchanged
        if not self.eta >= 0:
            raise ValueError("eta must be nonnegative")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")

    @classmethod
    def for_accuracy(cls, H: int, A: int, epsilon: float, record_trace: bool = False) -> "NpgConfig":
        """T = ceil(4 H^3 log A / eps^2) and eta = sqrt(log A / (H T))."""
        T = max(1, math.ceil(4 * H**3 * math.log(A) / epsilon**2))
        return cls(math.sqrt(math.log(A) / (H * T)), T, record_trace)


def npg(mdp: TabularMdp, reward: RewardTable,
        cfg: NpgConfig) -> tuple[StochasticPolicy, np.ndarray | None]:
    """Natural policy gradient with exact evaluation, starting from uniform.

    Returns ``pi^(T)`` and, with ``record_trace``, the initial-state values
    of ``pi^(0) .. pi^(T)`` (length T + 1).
    """
    S, A, H = mdp.dims
    probs = np.full((H, S, A), 1.0 / A)
    trace = [] if cfg.record_trace else None
    for _ in range(cfg.iterations):
        tables = policy_evaluation(mdp, reward, StochasticPolicy(probs))
        if trace is not None:
            trace.append(tables.initial_value(mdp.initial_dist))
        Q = tables.Q
        logits = np.log(probs, where=probs > 0, out=np.full_like(probs, -np.inf)) + cfg.eta * Q
        logits -= logits.max(axis=-1, keepdims=True)
        w = np.exp(logits)
        probs = w / w.sum(axis=-1, keepdims=True)
    policy = StochasticPolicy(probs)
    if trace is not None:
        trace.append(policy_evaluation(mdp, reward, policy).initial_value(mdp.initial_dist))
        return policy, np.array(trace)
    return policy, None


def vi_solver(mdp: TabularMdp, reward: RewardTable, epsilon: float = 0.0) -> StochasticPolicy:
    return value_iteration(mdp, reward)[1]


def npg_solver(eta: float | None = None, iterations: int | None = None) -> Solver:
    """NPG as a solver; unset parameters follow the accuracy-driven schedule."""

    def solve(mdp: TabularMdp, reward: RewardTable, epsilon: float) -> StochasticPolicy:
        sched = NpgConfig.for_accuracy(mdp.H, mdp.A, epsilon)
        T = iterations if iterations is not None else sched.iterations
        e = eta if eta is not None else math.sqrt(math.log(mdp.A) / (mdp.H * T))
        return npg(mdp, reward, NpgConfig(e, T))[0]

    return solve


def get_solver(name: str, eta: float | None = None, iterations: int | None = None) -> Solver:
    if name == "vi":
        return vi_solver
    if name == "npg":
        return npg_solver(eta, iterations)
    raise ValueError(f"unknown solver {name!r}")


def plan(dataset: EpisodeDataset, reward: RewardTable, solver: Solver | str = "vi",
         epsilon: float = 0.1, initial_dist: np.ndarray | None = None) -> StochasticPolicy:
    """Fit the count model to ``dataset`` and solve it for ``reward``.

    The initial distribution only shifts which start states matter to the
    solver; by default the empirical start-state frequencies are used.
    """
    S, A, H = reward.S, reward.A, reward.H
    model = estimate_model(dataset, S, A, H)
    p1 = empirical_initial_dist(dataset, S) if initial_dist is None else initial_dist
    if isinstance(solver, str):
        solver = get_solver(solver)
    return solver(model.to_mdp(p1), reward, epsilon)
