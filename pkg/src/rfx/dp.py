"""Exact dynamic programming on a known MDP.

Everything here is a pure function of its inputs.  Argmax ties always go to
the lowest action index.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .mdp import (RewardTable, StochasticPolicy, TabularMdp, DimensionMismatchError,
                  check_dims)

TOL = 1e-9
BRUTE_FORCE_CAP = 10**6


class EnumerationCapError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ValueTables:
    """``V`` has shape (H + 1, S) with ``V[H] = 0``; ``Q`` has shape (H, S, A)."""

    V: np.ndarray
    Q: np.ndarray

    def initial_value(self, initial_dist: np.ndarray) -> float:
        return float(initial_dist @ self.V[0])


@dataclass(frozen=True, eq=False)
class OccupancyMeasure:
    """``probs[h, s, a]`` = P_h^pi(s, a); ``marginals[h, s]`` = P_h^pi(s)."""

    probs: np.ndarray
    marginals: np.ndarray


@dataclass(frozen=True, eq=False)
class SignificanceReport:
    lam: np.ndarray          # (H, S) maximum visitation probabilities
    significant: np.ndarray  # (H, S) bool, lam >= delta
    delta: float


def policy_evaluation(mdp: TabularMdp, reward: RewardTable,
                      policy: StochasticPolicy) -> ValueTables:
    check_dims(mdp, reward, policy)
    S, A, H = mdp.dims
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, A))
    for h in range(H - 1, -1, -1):
        Q[h] = reward.values[h] + mdp.transitions[h] @ V[h + 1]
        V[h] = np.einsum("sa,sa->s", policy.probs[h], Q[h])
    return ValueTables(V, Q)


def value_iteration(mdp: TabularMdp, reward: RewardTable) -> tuple[ValueTables, StochasticPolicy]:
    """Optimal values and the greedy point-mass policy (lowest-index ties)."""
    check_dims(mdp, reward)
    S, A, H = mdp.dims
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, A))
    greedy = np.zeros((H, S), dtype=int)
    for h in range(H - 1, -1, -1):
        Q[h] = reward.values[h] + mdp.transitions[h] @ V[h + 1]
        greedy[h] = np.argmax(Q[h], axis=1)
        V[h] = Q[h].max(axis=1)
    return ValueTables(V, Q), StochasticPolicy.deterministic(greedy, A)


def optimal_value(mdp: TabularMdp, reward: RewardTable) -> float:
    tables, _ = value_iteration(mdp, reward)
    return tables.initial_value(mdp.initial_dist)


def policy_value(mdp: TabularMdp, reward: RewardTable, policy: StochasticPolicy) -> float:
    return policy_evaluation(mdp, reward, policy).initial_value(mdp.initial_dist)


def suboptimality(mdp: TabularMdp, reward: RewardTable, policy: StochasticPolicy) -> float:
    """E_{s_1}[V*_1 - V^pi_1], computed exactly."""
    return optimal_value(mdp, reward) - policy_value(mdp, reward, policy)


def occupancy(mdp: TabularMdp, policy: StochasticPolicy) -> OccupancyMeasure:
    check_dims(mdp, policy)
    probs = occupancy_batch(mdp, policy.probs[None])[0]
    return OccupancyMeasure(probs, probs.sum(axis=-1))


def occupancy_batch(mdp: TabularMdp, probs: np.ndarray) -> np.ndarray:
    """Occupancies of K policies at once: ``probs`` (K, H, S, A) -> (K, H, S, A)."""
    K = probs.shape[0]
    S, A, H = mdp.dims
    if probs.shape[1:] != (H, S, A):
        raise DimensionMismatchError(f"policy batch has shape {probs.shape[1:]}, expected {(H, S, A)}")
    out = np.empty((K, H, S, A))
    d = np.broadcast_to(mdp.initial_dist, (K, S))
    for h in range(H):
        out[:, h] = d[:, :, None] * probs[:, h]
        if h + 1 < H:
            d = np.einsum("ksa,sat->kt", out[:, h], mdp.transitions[h])
    return out


def indicator_reward(S: int, A: int, H: int, s: int, h: int) -> RewardTable:
    """Reward 1 on every action at state ``s`` and step ``h``, 0 elsewhere."""
    r = np.zeros((H, S, A))
    r[h, s, :] = 1.0
    return RewardTable(r)


def max_reach(mdp: TabularMdp, target_s: int, target_h: int) -> tuple[float, StochasticPolicy]:
    """max_pi P^pi[s_h = target_s] and a maximizing policy (0-based ``target_h``)."""
    S, A, H = mdp.dims
    if not (0 <= target_s < S and 0 <= target_h < H):
        raise ValueError(f"target (s={target_s}, h={target_h}) out of range for S={S}, H={H}")
    tables, policy = value_iteration(mdp, indicator_reward(S, A, H, target_s, target_h))
    return tables.initial_value(mdp.initial_dist), policy


def significance(mdp: TabularMdp, delta: float) -> SignificanceReport:
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    S, A, H = mdp.dims
    lam = np.zeros((H, S))
    for h in range(H):
        for s in range(S):
            lam[h, s], _ = max_reach(mdp, s, h)
    lam = np.clip(lam, 0.0, 1.0)
    return SignificanceReport(lam, lam >= delta, float(delta))


def _evaluate_deterministic_batch(mdp: TabularMdp, reward: RewardTable,
                                  actions: np.ndarray) -> np.ndarray:
    """Initial values of K deterministic policies, ``actions`` of shape (K, H, S)."""
    S, A, H = mdp.dims
    K = actions.shape[0]
    V = np.zeros((K, S))
    rows = np.arange(S)
    for h in range(H - 1, -1, -1):
        a = actions[:, h]                                  # (K, S)
        P = mdp.transitions[h][rows, a]                    # (K, S, S')
        V = reward.values[h][rows, a] + np.einsum("kst,kt->ks", P, V)
    return V @ mdp.initial_dist


def brute_force_optimal(mdp: TabularMdp, reward: RewardTable,
                        cap: int = BRUTE_FORCE_CAP) -> tuple[float, StochasticPolicy]:
    """Best of all A^(S*H) deterministic non-stationary policies.

    Policies are enumerated in lexicographic order of their flattened
    ``actions[h, s]`` table and the first maximizer is returned.  Test oracle
    only: independent of :func:`value_iteration`.
    """
    check_dims(mdp, reward)
    S, A, H = mdp.dims
    count = A ** (S * H)
    if count > cap:
        raise EnumerationCapError(f"{count} policies exceeds enumeration cap {cap}")
    best_val, best_idx = -np.inf, 0
    chunk = 1 << 15
    it = itertools.product(range(A), repeat=S * H)
    start = 0
    while start < count:
        block = np.array(list(itertools.islice(it, chunk)), dtype=int).reshape(-1, H, S)
        vals = _evaluate_deterministic_batch(mdp, reward, block)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val, best_idx = float(vals[i]), start + i
        start += block.shape[0]
    digits = np.array(np.unravel_index(best_idx, (A,) * (S * H))).reshape(H, S)
    return best_val, StochasticPolicy.deterministic(digits, A)


def value_difference(mdp1: TabularMdp, mdp2: TabularMdp, reward: RewardTable,
                     policy: StochasticPolicy) -> float:
    """E_{mdp2, pi}[ sum_h ((P1_h - P2_h) V1_{h+1})(s_h, a_h) ].

    By the simulation lemma this equals V1^pi - V2^pi, both evaluated at
    ``mdp2.initial_dist``.
    """
    check_dims(mdp1, reward, policy)
    check_dims(mdp2, reward, policy)
    V1 = policy_evaluation(mdp1, reward, policy).V
    d2 = occupancy(mdp2, policy).probs
    total = 0.0
    for h in range(mdp1.H):
        gap = (mdp1.transitions[h] - mdp2.transitions[h]) @ V1[h + 1]
        total += float(np.sum(d2[h] * gap))
    return total
