"""Tabular episodic MDP data model and reward-free episode sampling.

Step indices are 0-based in code (``h = 0..H-1``) and 1-based in user-facing
documentation, CLI output and logs, so step ``h`` here is step ``h + 1`` in the
usual mathematical notation.  Array layouts:

    transitions   (H, S, A, S)   P_h(s' | s, a)
    initial_dist  (S,)           P_1(s)
    reward        (H, S, A)      r_h(s, a) in [0, 1]
    policy        (H, S, A)      pi_h(a | s)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

SIMPLEX_TOL = 1e-9


class DimensionMismatchError(ValueError):
    """Raised when arrays passed together disagree on S, A or H."""


class InvalidMdpError(ValueError):
    """Raised when an MDP fails validation where validity is required."""

    def __init__(self, violations: Sequence["Violation"]):
        self.violations = list(violations)
        shown = "; ".join(str(v) for v in self.violations[:5])
        more = f" (+{len(self.violations) - 5} more)" if len(self.violations) > 5 else ""
        super().__init__(f"invalid MDP: {shown}{more}")


def _frozen(x, dtype=float) -> np.ndarray:
    arr = np.array(x, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Episodic MDP with a time-dependent kernel and an initial distribution.

    Only shapes are checked at construction; run :func:`validate_mdp` for the
    simplex invariants (nothing is ever renormalized).
    """

    transitions: np.ndarray
    initial_dist: np.ndarray

    def __post_init__(self):
        P = _frozen(self.transitions)
        p1 = _frozen(self.initial_dist)
        if P.ndim != 4 or P.shape[1] != P.shape[3]:
            raise DimensionMismatchError(f"transitions must have shape (H, S, A, S), got {P.shape}")
        if p1.shape != (P.shape[1],):
            raise DimensionMismatchError(
                f"initial_dist has shape {p1.shape}, expected ({P.shape[1]},)")
        if min(P.shape) < 1:
            raise DimensionMismatchError("S, A and H must all be positive")
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "initial_dist", p1)

    @property
    def H(self) -> int:
        return self.transitions.shape[0]

    @property
    def S(self) -> int:
        return self.transitions.shape[1]

    @property
    def A(self) -> int:
        return self.transitions.shape[2]

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.S, self.A, self.H


@dataclass(frozen=True, eq=False)
class RewardTable:
    """Deterministic reward ``values[h, s, a]`` in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        r = _frozen(self.values)
        if r.ndim != 3:
            raise DimensionMismatchError(f"reward must have shape (H, S, A), got {r.shape}")
        if r.size and (np.any(~np.isfinite(r)) or r.min() < 0.0 or r.max() > 1.0):
            raise ValueError("reward entries must lie in [0, 1]")
        object.__setattr__(self, "values", r)

    @property
    def H(self) -> int:
        return self.values.shape[0]

    @property
    def S(self) -> int:
        return self.values.shape[1]

    @property
    def A(self) -> int:
        return self.values.shape[2]

    @classmethod
    def zeros(cls, S: int, A: int, H: int) -> "RewardTable":
        return cls(np.zeros((H, S, A)))


@dataclass(frozen=True, eq=False)
class StochasticPolicy:
    """Non-stationary Markov policy ``probs[h, s, a] = pi_h(a | s)``."""

    probs: np.ndarray

    def __post_init__(self):
        pi = _frozen(self.probs)
        if pi.ndim != 3:
            raise DimensionMismatchError(f"policy must have shape (H, S, A), got {pi.shape}")
        if np.any(pi < 0) or np.any(np.abs(pi.sum(axis=-1) - 1.0) > SIMPLEX_TOL):
            raise ValueError("every policy row must be a distribution over actions")
        object.__setattr__(self, "probs", pi)

    @property
    def H(self) -> int:
        return self.probs.shape[0]

    @property
    def S(self) -> int:
        return self.probs.shape[1]

    @property
    def A(self) -> int:
        return self.probs.shape[2]

    @classmethod
    def uniform(cls, S: int, A: int, H: int) -> "StochasticPolicy":
        return cls(np.full((H, S, A), 1.0 / A))

    @classmethod
    def deterministic(cls, actions: np.ndarray, A: int) -> "StochasticPolicy":
        """Point-mass policy from an integer array ``actions[h, s]``."""
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros(actions.shape + (A,))
        np.put_along_axis(probs, actions[..., None], 1.0, axis=-1)
        return cls(probs)

    def greedy_actions(self) -> np.ndarray:
        return np.argmax(self.probs, axis=-1)

    def is_deterministic(self) -> bool:
        return bool(np.all((self.probs == 0.0) | (self.probs == 1.0)))


@dataclass(frozen=True)
class Trajectory:
    """One reward-free episode: ``H + 1`` states and ``H`` actions."""

    states: tuple[int, ...]
    actions: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(int(s) for s in self.states))
        object.__setattr__(self, "actions", tuple(int(a) for a in self.actions))
        if len(self.states) != len(self.actions) + 1:
            raise ValueError("a trajectory needs exactly one more state than actions")

    @property
    def H(self) -> int:
        return len(self.actions)


@dataclass(frozen=True, eq=False)
class EpisodeDataset:
    """Exploration output stored as integer arrays.

    ``states`` has shape ``(K, H + 1)`` and ``actions`` shape ``(K, H)``.
    """

    states: np.ndarray
    actions: np.ndarray
    horizon: int = field(default=-1)

    def __post_init__(self):
        states = _frozen(self.states, dtype=np.int64)
        actions = _frozen(self.actions, dtype=np.int64)
        H = self.horizon if self.horizon >= 0 else (actions.shape[1] if actions.ndim == 2 else -1)
        if states.ndim != 2 or actions.ndim != 2 or states.shape[0] != actions.shape[0]:
            raise DimensionMismatchError("states must be (K, H+1) and actions (K, H)")
        if actions.shape[1] != H or states.shape[1] != H + 1:
            raise DimensionMismatchError(f"all trajectories must have horizon {H}")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "horizon", H)

    @classmethod
    def from_trajectories(cls, trajectories: Sequence[Trajectory], horizon: int | None = None):
        trajectories = list(trajectories)
        if horizon is None:
            if not trajectories:
                raise ValueError("horizon is required for an empty dataset")
            horizon = trajectories[0].H
        states = np.array([t.states for t in trajectories], dtype=np.int64).reshape(-1, horizon + 1)
        actions = np.array([t.actions for t in trajectories], dtype=np.int64).reshape(-1, horizon)
        return cls(states, actions, horizon)

    @classmethod
    def concat(cls, parts: Sequence["EpisodeDataset"]) -> "EpisodeDataset":
        H = parts[0].horizon
        return cls(np.concatenate([p.states for p in parts]),
                   np.concatenate([p.actions for p in parts]), H)

    def __len__(self) -> int:
        return self.states.shape[0]

    def __getitem__(self, k: int) -> Trajectory:
        return Trajectory(self.states[k], self.actions[k])

    def __iter__(self) -> Iterator[Trajectory]:
        for k in range(len(self)):
            yield self[k]

    @property
    def trajectories(self) -> list[Trajectory]:
        return list(self)


@dataclass(frozen=True)
class Violation:
    kind: str
    index: tuple[int, ...]
    detail: str

    def __str__(self):
        return f"{self.kind} at {self.index}: {self.detail}"


def validate_mdp(mdp: TabularMdp, tol: float = SIMPLEX_TOL) -> list[Violation]:
    """Return every simplex violation of ``mdp``; an empty list means valid.

    Kernel indices are reported as ``(h, s, a)`` or ``(h, s, a, s')`` with 0-based h.
    """
    out: list[Violation] = []
    P, p1 = mdp.transitions, mdp.initial_dist
    for idx in zip(*np.nonzero(~np.isfinite(P))):
        out.append(Violation("non-finite entry", tuple(int(i) for i in idx), f"{P[idx]}"))
    for idx in zip(*np.nonzero(P < 0)):
        out.append(Violation("negative entry", tuple(int(i) for i in idx), f"{P[idx]:.17g}"))
    sums = P.sum(axis=-1)
    for idx in zip(*np.nonzero(~(np.abs(sums - 1.0) <= tol))):
        out.append(Violation("row sum", tuple(int(i) for i in idx), f"sums to {sums[idx]:.17g}"))
    for (s,) in zip(*np.nonzero(~(p1 >= 0))):
        out.append(Violation("negative initial mass", (int(s),), f"{p1[s]:.17g}"))
    if not abs(p1.sum() - 1.0) <= tol:
        out.append(Violation("initial sum", (), f"sums to {p1.sum():.17g}"))
    return out


def check_mdp(mdp: TabularMdp) -> TabularMdp:
    violations = validate_mdp(mdp)
    if violations:
        raise InvalidMdpError(violations)
    return mdp


def check_dims(mdp: TabularMdp, *tables) -> None:
    """Raise :class:`DimensionMismatchError` unless every table matches ``mdp``."""
    for t in tables:
        if t is None:
            continue
        if (t.H, t.S, t.A) != (mdp.H, mdp.S, mdp.A):
            raise DimensionMismatchError(
                f"{type(t).__name__} has (H, S, A) = {(t.H, t.S, t.A)}, "
                f"MDP has {(mdp.H, mdp.S, mdp.A)}")


# ---------------------------------------------------------------- randomness

def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator derived from ``(seed, *key)``.

    Used for per-episode, per-chunk and per-goal streams so results do not
    depend on the order in which work is scheduled.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def _categorical(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    # cdf rows may end slightly below 1; clamp onto the last category
    idx = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(idx, cdf.shape[1] - 1)


# ------------------------------------------------------------------ sampling

def sample_episode(mdp: TabularMdp, policy: StochasticPolicy,
                   rng: np.random.Generator) -> Trajectory:
    """Play one episode of ``policy`` on ``mdp``; no reward is observed."""
    check_dims(mdp, policy)
    S, A, H = mdp.dims
    s = int(rng.choice(S, p=mdp.initial_dist))
    states, actions = [s], []
    for h in range(H):
        a = int(rng.choice(A, p=policy.probs[h, s]))
        s = int(rng.choice(S, p=mdp.transitions[h, s, a]))
        actions.append(a)
        states.append(s)
    return Trajectory(tuple(states), tuple(actions))


def sample_episodes(mdp: TabularMdp, policy: StochasticPolicy, n: int,
                    rng: np.random.Generator) -> EpisodeDataset:
    """Vectorized version of :func:`sample_episode` for ``n`` i.i.d. episodes."""
    check_dims(mdp, policy)
    S, A, H = mdp.dims
    states = np.empty((n, H + 1), dtype=np.int64)
    actions = np.empty((n, H), dtype=np.int64)
    cdf_p1 = np.cumsum(mdp.initial_dist)[None, :].repeat(max(n, 1), 0)[:n]
    states[:, 0] = _categorical(cdf_p1, rng.random(n))
    pi_cdf = np.cumsum(policy.probs, axis=-1)
    P_cdf = np.cumsum(mdp.transitions, axis=-1)
    for h in range(H):
        s = states[:, h]
        a = _categorical(pi_cdf[h, s], rng.random(n))
        actions[:, h] = a
        states[:, h + 1] = _categorical(P_cdf[h, s, a], rng.random(n))
    return EpisodeDataset(states, actions, H)


class Environment:
    """Sampling-only view of an MDP (the reward-free interaction protocol).

    Learners receive an ``Environment`` and can only roll out policies; the
    kernel stays private.  ``episodes_used`` counts every episode played.
    """

    def __init__(self, mdp: TabularMdp):
        self.__mdp = check_mdp(mdp)
        self.episodes_used = 0

    @property
    def S(self) -> int:
        return self.__mdp.S

    @property
    def A(self) -> int:
        return self.__mdp.A

    @property
    def H(self) -> int:
        return self.__mdp.H

    def rollout(self, policy: StochasticPolicy, n: int, rng: np.random.Generator) -> EpisodeDataset:
        self.episodes_used += n
        return sample_episodes(self.__mdp, policy, n, rng)

    def rollout_until(self, policy: StochasticPolicy, n_max: int, stop,
                      rng: np.random.Generator) -> EpisodeDataset:
        """Play up to ``n_max`` episodes, stopping after episode ``stop(batch)``.

        ``stop`` maps the batch to the number of leading episodes to keep and
        must be causal: whether episode k is kept may depend only on episodes
        0..k-1 and on episode k itself.  This equals playing episodes one at a
        time and halting once the rule fires; later episodes are never
        counted or returned.
        """
        batch = sample_episodes(self.__mdp, policy, n_max, rng)
        k = int(stop(batch))
        if not 1 <= k <= n_max:
            raise ValueError("stop rule must keep between 1 and n_max episodes")
        self.episodes_used += k
        return EpisodeDataset(batch.states[:k], batch.actions[:k], batch.horizon)

    def episode(self, policy: StochasticPolicy, rng: np.random.Generator) -> Trajectory:
        self.episodes_used += 1
        return sample_episode(self.__mdp, policy, rng)

    def unwrap(self) -> TabularMdp:
        """Expose the kernel.  Only oracle stubs and evaluation code may call this."""
        return self.__mdp
