"""Instance families: the significance toy, random MDPs and lower-bound constructions.

Hard single-state instance: state 0 moves to one of the 2n absorbing states
1..2n with probabilities q(., a) that are eps/(2n)-close to uniform.

Embedded tree: a binary tree with layers l = 0..L (L = log2 n, 2^l states in
layer l) above a shared layer of 2n absorbing leaves.  Action 0 moves left
(x -> x) and every other action moves right (x -> x + 2^l); from layer L the
kernel q_x picks a leaf.  Layer l is occupied at (0-based) step l, so
(x, L) is visited at step L and the leaves from step L + 1 on.  State
indices: node (x, l) is ``2^l - 1 + x`` and leaf j is ``2n - 1 + j``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .mdp import RewardTable, TabularMdp, make_rng

Q_TOL = 1e-12


def toy_significance_mdp() -> TabularMdp:
    """Five states, two actions, H = 2, start in s0.

    Action 0 takes s0 to s1; action 1 takes s0 to s2 with probability 1e-6 and
    to s3 otherwise.  s1..s4 are absorbing, so s4 is never reached.
    """
    S, A, H = 5, 2, 2
    P = np.zeros((H, S, A, S))
    P[:, 0, 0, 1] = 1.0
    P[:, 0, 1, 2] = 1e-6
    P[:, 0, 1, 3] = 1.0 - 1e-6
    for s in range(1, S):
        P[:, s, :, s] = 1.0
    p1 = np.zeros(S)
    p1[0] = 1.0
    return TabularMdp(P, p1)


def random_mdp(S: int, A: int, H: int, concentration: float = 1.0, rng=None) -> TabularMdp:
    """Kernel rows and the initial distribution from a symmetric Dirichlet."""
    if min(S, A, H) < 1 or not concentration > 0:
        raise ValueError("S, A, H must be positive and concentration > 0")
    rng = make_rng(rng)
    P = rng.dirichlet(np.full(S, concentration), size=(H, S, A))
    p1 = rng.dirichlet(np.full(S, concentration))
    return TabularMdp(P, p1)


def deterministic_chain(S: int = 3, A: int = 2, H: int = 3) -> TabularMdp:
    """Start in state 0; action 0 moves one state right (the last state stays), others stay."""
    if min(S, A, H) < 1:
        raise ValueError("S, A, H must be positive")
    P = np.zeros((H, S, A, S))
    for s in range(S):
        P[:, s, 0, min(s + 1, S - 1)] = 1.0
        P[:, s, 1:, s] = 1.0
    p1 = np.zeros(S)
    p1[0] = 1.0
    return TabularMdp(P, p1)


def random_reward(S: int, A: int, H: int, rng=None) -> RewardTable:
    return RewardTable(make_rng(rng).random((H, S, A)))


def balanced_vector(n: int, rng) -> np.ndarray:
    """Uniform draw from the {-1, +1}^(2n) vectors with zero sum."""
    v = np.concatenate([np.ones(n, dtype=np.int64), -np.ones(n, dtype=np.int64)])
    rng.shuffle(v)
    return v


# ------------------------------------------------------------- single state

def check_near_uniform(q: np.ndarray, n: int, eps: float, tol: float = Q_TOL) -> bool:
    """|q(s, a) - 1/(2n)| <= eps/(2n) for every cell, columns summing to 1."""
    q = np.asarray(q, dtype=float)
    return bool(q.shape[0] == 2 * n
                and np.all(np.abs(q - 1.0 / (2 * n)) <= eps / (2 * n) + tol)
                and np.all(np.abs(q.sum(axis=0) - 1.0) <= 1e-9))


def near_uniform_kernel(vectors: np.ndarray, n: int, eps: float) -> np.ndarray:
    """q(., a) = 1/(2n) + eps/(2n) v_a from balanced vectors ``vectors[a]``; shape (2n, A)."""
    v = np.asarray(vectors, dtype=float)
    return (1.0 + eps * v.T) / (2 * n)


def single_state_hard_instance(n: int, A: int, eps: float, q: np.ndarray | None = None,
                               packing: "PackingVectors | None" = None,
                               choice=None, rng=None) -> TabularMdp:
    """States 0..2n, H = 2; state 0 starts and moves to s in 1..2n with q(s-1, a).

    ``q`` (shape (2n, A)) is used as given.  Otherwise each action a uses
    packing vector ``v[a, choice[a]]`` (choice drawn uniformly when omitted),
    or a fresh balanced vector when no packing is given.
    """
    if not 0 <= eps <= 1:
        raise ValueError("eps must lie in [0, 1]")
    if q is None:
        rng = make_rng(rng)
        if packing is not None:
            if packing.vectors.shape[:1] != (A,) or packing.n != n:
                raise ValueError("packing does not match (n, A)")
            if choice is None:
                choice = rng.integers(packing.M, size=A)
            vecs = np.stack([packing.vectors[a, int(choice[a])] for a in range(A)])
        else:
            vecs = np.stack([balanced_vector(n, rng) for _ in range(A)])
        q = near_uniform_kernel(vecs, n, eps)
    q = np.asarray(q, dtype=float)
    if q.shape != (2 * n, A):
        raise ValueError(f"q must have shape {(2 * n, A)}, got {q.shape}")
    if not check_near_uniform(q, n, eps):
        raise ValueError("q violates the near-uniformity condition")
    S, H = 2 * n + 1, 2
    P = np.zeros((H, S, A, S))
    P[:, 0, :, 1:] = q.T
    for s in range(1, S):
        P[:, s, :, s] = 1.0
    p1 = np.zeros(S)
    p1[0] = 1.0
    return TabularMdp(P, p1)


def single_state_reward(nu: np.ndarray, A: int) -> RewardTable:
    """r_nu: 0 at state 0, nu[s - 1] at state s, action independent, both steps."""
    nu = np.asarray(nu, dtype=float)
    r = np.zeros((2, nu.size + 1, A))
    r[:, 1:, :] = nu[None, :, None]
    return RewardTable(r)


# ------------------------------------------------------------- embedded tree

def tree_depth(n: int) -> int:
    if n < 1 or n & (n - 1):
        raise ValueError(f"n must be a power of two, got {n}")
    return n.bit_length() - 1


def tree_state_index(x: int, layer: int, n: int) -> int:
    L = tree_depth(n)
    if layer <= L:
        if not 0 <= x < 2**layer:
            raise ValueError(f"x = {x} out of range in layer {layer}")
        return 2**layer - 1 + x
    if layer == L + 1:
        if not 0 <= x < 2 * n:
            raise ValueError(f"leaf {x} out of range")
        return 2 * n - 1 + x
    raise ValueError(f"layer {layer} out of range")


def tree_num_states(n: int) -> int:
    return 4 * n - 1


def embedded_tree_instance(n: int, A: int, H: int, eps0: float,
                           per_leaf_q: np.ndarray | None = None, rng=None,
                           num_states: int | None = None) -> TabularMdp:
    """Binary tree over ``n`` single-state hard instances sharing 2n leaves.

    ``per_leaf_q[x]`` (shape (n, 2n, A)) is the leaf kernel below (x, L);
    random near-uniform kernels are drawn when omitted.  ``num_states`` pads
    the state space with isolated, never-visited self-loop states.  The
    kernel is the same at every step.
    """
    L = tree_depth(n)
    if H < 2 * (L + 1):
        raise ValueError(f"H must be at least 2(log2 n + 1) = {2 * (L + 1)}")
    if not 0 <= eps0 <= 1.0 / (8 * H):
        raise ValueError("eps0 must lie in [0, 1/(8H)]")
    if L > 0 and A < 2:
        raise ValueError("A >= 2 is needed to move right in the tree")
    if per_leaf_q is None:
        rng = make_rng(rng)
        per_leaf_q = np.stack([
            near_uniform_kernel(np.stack([balanced_vector(n, rng) for _ in range(A)]), n, eps0)
            for _ in range(n)])
    per_leaf_q = np.asarray(per_leaf_q, dtype=float)
    if per_leaf_q.shape != (n, 2 * n, A):
        raise ValueError(f"per_leaf_q must have shape {(n, 2 * n, A)}")
    for x in range(n):
        if not check_near_uniform(per_leaf_q[x], n, eps0):
            raise ValueError(f"leaf kernel of x = {x} violates near-uniformity")
    base = tree_num_states(n)
    S = base if num_states is None else num_states
    if S < base:
        raise ValueError(f"need at least {base} states")
    P1 = np.zeros((S, A, S))
    for layer in range(L):
        for x in range(2**layer):
            s = tree_state_index(x, layer, n)
            P1[s, 0, tree_state_index(x, layer + 1, n)] = 1.0
            P1[s, 1:, tree_state_index(x + 2**layer, layer + 1, n)] = 1.0
    leaves = slice(2 * n - 1, 4 * n - 1)
    for x in range(n):
        P1[tree_state_index(x, L, n), :, leaves] = per_leaf_q[x].T
    for s in range(2 * n - 1, S):
        P1[s, :, s] = 1.0
    p1 = np.zeros(S)
    p1[0] = 1.0
    return TabularMdp(np.broadcast_to(P1, (H, S, A, S)), p1)


def embedded_reward(x: int, nu: np.ndarray, n: int, A: int, H: int,
                    num_states: int | None = None) -> RewardTable:
    """r_{x,nu}: 1 at (x, L), nu[j] at leaf j, 0 elsewhere; action independent."""
    L = tree_depth(n)
    nu = np.asarray(nu, dtype=float)
    if not 0 <= x < n:
        raise ValueError(f"x must lie in 0..{n - 1}")
    if nu.shape != (2 * n,) or nu.min() < 0 or nu.max() > 1:
        raise ValueError("nu must be a vector in [0, 1]^(2n)")
    S = tree_num_states(n) if num_states is None else num_states
    r = np.zeros((H, S, A))
    r[:, tree_state_index(x, L, n), :] = 1.0
    r[:, 2 * n - 1:4 * n - 1, :] = nu[None, :, None]
    return RewardTable(r)


# ------------------------------------------------------------------ packing

@dataclass(frozen=True, eq=False)
class PackingVectors:
    """Balanced sign vectors ``vectors[a, j]`` of length 2n."""

    vectors: np.ndarray   # (A, M, 2n) int
    gamma: float

    @property
    def n(self) -> int:
        return self.vectors.shape[2] // 2

    @property
    def A(self) -> int:
        return self.vectors.shape[0]

    @property
    def M(self) -> int:
        return self.vectors.shape[1]

    def max_abs_correlation(self) -> int:
        flat = self.vectors.reshape(-1, self.vectors.shape[2]).astype(np.int64)
        gram = flat @ flat.T
        np.fill_diagonal(gram, 0)
        return int(np.abs(gram).max()) if len(flat) > 1 else 0

    def is_uncorrelated(self) -> bool:
        return self.max_abs_correlation() < 2 * self.n * self.gamma


@dataclass(frozen=True, eq=False)
class HardRewardSpec:
    """Reward vector nu over the 2n absorbing states, optionally tied to tree node x."""

    nu: np.ndarray
    x: int | None = None


class PackingRetriesExhausted(RuntimeError):
    pass


def packing_condition(n: int, A: int, M: int, gamma: float) -> bool:
    """2 log M <= n gamma^2 - log(4n) - 2 log A, which guarantees existence."""
    return 2 * math.log(M) <= n * gamma**2 - math.log(4 * n) - 2 * math.log(A)


def sample_uncorrelated_packing(n: int, A: int, M: int, gamma: float, rng=None,
                                max_retries: int = 1000,
                                require_condition: bool = True) -> PackingVectors:
    """Draw A*M balanced vectors until all pairwise |<v, v'>| < 2 n gamma.

    With ``require_condition`` the existence condition must hold; switch it
    off to search for packings the sufficient condition does not cover.
    """
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    if require_condition and not packing_condition(n, A, M, gamma):
        raise ValueError(f"existence condition fails for n={n}, A={A}, M={M}, gamma={gamma}")
    rng = make_rng(rng)
    for _ in range(max_retries):
        vecs = np.stack([balanced_vector(n, rng) for _ in range(A * M)]).reshape(A, M, 2 * n)
        pack = PackingVectors(vecs, gamma)
        if pack.is_uncorrelated():
            return pack
    raise PackingRetriesExhausted(f"no {gamma}-uncorrelated packing in {max_retries} draws")


def packing_reward_vector(v1: np.ndarray, v2: np.ndarray) -> HardRewardSpec:
    """nu = v1/3 + v2/6 + 1/2, which always lies in [0, 1]^(2n)."""
    v1, v2 = np.asarray(v1), np.asarray(v2)
    if not (np.all(np.abs(v1) == 1) and np.all(np.abs(v2) == 1)):
        raise ValueError("packing vectors must have +-1 entries")
    nu = v1 / 3.0 + v2 / 6.0 + 0.5
    assert nu.min() >= 0.0 and nu.max() <= 1.0
    return HardRewardSpec(nu)


def separation_margins(pack: PackingVectors, eps: float) -> tuple[float, float]:
    """Worst cases of the two separation inequalities over all index tuples.

    Returns ``(lo, hi)`` where ``lo`` is the minimum over a1 != a2 and all
    j1, j2, a2', j2' of <q_{a1,j1} - q_{a2,j2}, nu_{a1,a2',j1,j2'}> (should
    exceed eps/12) and ``hi`` is the maximum over j1' != j1 of
    min_{a2',j2'} <q_{a1,j1} - q_{a2,j2}, nu_{a1,a2',j1',j2'}> (should be
    below -eps/12).
    """
    A, M, n = pack.A, pack.M, pack.n
    q = (1.0 + eps * pack.vectors.astype(float)) / (2 * n)          # (A, M, 2n)
    flat_v = pack.vectors.reshape(A * M, 2 * n).astype(float)
    lo, hi = np.inf, -np.inf
    for a1 in range(A):
        for j1 in range(M):
            for a2 in range(A):
                if a2 == a1:
                    continue
                for j2 in range(M):
                    diff = q[a1, j1] - q[a2, j2]
                    for j1p in range(M):
                        nus = pack.vectors[a1, j1p][None, :] / 3.0 + flat_v / 6.0 + 0.5
                        worst = float((nus @ diff).min())
                        if j1p == j1:
                            lo = min(lo, worst)
                        else:
                            hi = max(hi, worst)
    return lo, hi
