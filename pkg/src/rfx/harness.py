"""Experiment driver: explore, plan, and score plans exactly against the true MDP."""
from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import instances
from .dp import optimal_value, policy_value, significance
from .explorer import coverage_ratio, mixture_occupancy, rf_explore
from .io import load_mdp
from .learners import RegretLearnerConfig
from .mdp import Environment, RewardTable, StochasticPolicy, TabularMdp, stream
from .planner import NpgConfig, estimate_model, get_solver
from .rmax import theoretical_m, zero_rmax_explore, zero_rmax_plan

RESULT_HEADER = ["trial", "reward_id", "gap", "coverage_ratio", "episodes", "seconds"]
COMPARISON_HEADER = ["method", "budget", "trial", "episodes", "mean_gap", "max_gap", "seconds"]
DEFAULT_N0 = 2000
DEFAULT_N = 20000
DEFAULT_RMAX_M = 10
CANDIDATE_POOL = 50
GAP_TOL = 1e-9


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a run.

    ``instance`` is either ``{"path": file}`` or ``{"family": name, **params}``
    with family one of toy, random, chain, single-hard, tree-hard.  Random
    families draw a fresh instance per trial.  ``n0``/``n`` left as ``None``
    fall back to the desk-scale defaults.  ``exact_model`` plans on the true
    kernel instead of the estimate, which isolates the solver.
    """

    instance: dict = field(default_factory=lambda: {"family": "toy"})
    epsilon: float = 0.1
    p: float = 0.1
    n0: int | None = None
    n: int | None = None
    solver: str = "vi"
    eta: float | None = None
    iterations: int | None = None
    learner: str = "bernstein"
    bonus_scale: float = 1.0
    num_rewards: int = 20
    reward_kind: str = "uniform"
    reward_seed: int = 0
    adversarial_rounds: int = 0
    candidate_pool: int = CANDIDATE_POOL
    trials: int = 1
    seed: int = 0
    delta: float | None = None
    exact_model: bool = False
    output_dir: str | None = None

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ValueError("epsilon must lie in (0, 1]")
        if not 0 < self.p < 1:
            raise ValueError("p must lie in (0, 1)")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.num_rewards < 0 or self.adversarial_rounds < 0:
            raise ValueError("reward counts must be nonnegative")
        if self.reward_kind not in ("uniform", "zero"):
            raise ValueError(f"unknown reward kind {self.reward_kind!r}")
        if self.candidate_pool < 1:
            raise ValueError("candidate_pool must be at least 1")
        RegretLearnerConfig(kind=self.learner, bonus_scale=self.bonus_scale)

    @property
    def learner_config(self) -> RegretLearnerConfig:
        return RegretLearnerConfig(kind=self.learner, bonus_scale=self.bonus_scale,
                                   failure_prob=self.p)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)


@dataclass
class TrialResult:
    trial: int
    episodes: int
    gaps: list[tuple[str, float]]
    coverage_ratio: float
    seconds: float

    def rows(self) -> list[list]:
        return [[self.trial, rid, g, self.coverage_ratio, self.episodes, self.seconds]
                for rid, g in self.gaps]


def build_instance(spec: dict, rng=None) -> TabularMdp:
    if "path" in spec:
        return load_mdp(spec["path"])
    params = {k: v for k, v in spec.items() if k != "family"}
    family = spec.get("family")
    if family == "toy":
        return instances.toy_significance_mdp()
    if family == "random":
        return instances.random_mdp(params["S"], params["A"], params["H"],
                                    params.get("concentration", 1.0), rng)
    if family == "chain":
        return instances.deterministic_chain(params.get("S", 3), params.get("A", 2),
                                             params.get("H", 3))
    if family == "single-hard":
        return instances.single_state_hard_instance(params["n"], params["A"], params["eps"], rng=rng)
    if family == "tree-hard":
        return instances.embedded_tree_instance(params["n"], params["A"], params["H"],
                                                params["eps0"], rng=rng,
                                                num_states=params.get("num_states"))
    raise ValueError(f"unknown instance family {family!r}")


def theoretical_budgets(S: int, A: int, H: int, eps: float, p: float) -> dict:
    """Budgets from the analysis with every unspecified constant set to 1.

    ``n0_coverage`` is the per-goal episode count for the coverage guarantee
    alone, ``n0_end_to_end`` the per-goal count for the full pipeline and
    ``n_dataset`` the number of data-collection episodes.  Reported only;
    nothing enforces them.
    """
    if min(S, A, H) < 1 or not eps > 0 or not 0 < p <= 1:
        raise ValueError("S, A, H, eps and p must be positive")
    delta = eps / (2 * S * H**2)
    iota = math.log(S * A * H / (p * eps))
    iota0 = math.log(S * A * H / (p * delta))
    npg_cfg = NpgConfig.for_accuracy(H, A, eps)
    return {
        "delta": delta,
        "iota": iota,
        "n0_coverage": S**2 * A * H**4 * iota0**3 / delta,
        "n0_end_to_end": S**3 * A * H**6 * iota**3 / eps,
        "n_dataset": H**5 * S**2 * A * iota / eps**2,
        "T_npg": npg_cfg.iterations,
        "eta_npg": npg_cfg.eta,
        "m_rmax": theoretical_m(S, A, H, eps, p),
    }


def reward_suite(cfg: ExperimentConfig, S: int, A: int, H: int, trial: int) -> list[RewardTable]:
    if cfg.reward_kind == "zero":
        return [RewardTable.zeros(S, A, H) for _ in range(cfg.num_rewards)]
    return [instances.random_reward(S, A, H, stream(cfg.reward_seed, trial, k))
            for k in range(cfg.num_rewards)]


def exact_gap(mdp: TabularMdp, reward: RewardTable, policy: StochasticPolicy) -> float:
    gap = optimal_value(mdp, reward) - policy_value(mdp, reward, policy)
    if gap < -GAP_TOL:
        raise ArithmeticError(f"negative gap {gap}")
    return float(gap)


def adversarial_reward(mdp: TabularMdp, policy: StochasticPolicy, rng,
                       pool: int = CANDIDATE_POOL) -> RewardTable:
    """The candidate, from ``pool`` uniform draws, on which ``policy`` is worst."""
    S, A, H = mdp.dims
    best, best_gap = None, -np.inf
    for _ in range(pool):
        r = instances.random_reward(S, A, H, rng)
        g = exact_gap(mdp, r, policy)
        if g > best_gap:
            best, best_gap = r, g
    return best


def _num_trial_workers(trials: int) -> int:
    cap = os.environ.get("RFX_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, min(n, trials))


def _trial_instance(cfg: ExperimentConfig, trial: int) -> TabularMdp:
    return build_instance(cfg.instance, stream(cfg.seed, 2, trial))


def run_trial(cfg: ExperimentConfig, trial: int) -> TrialResult:
    t0 = time.perf_counter()
    mdp = _trial_instance(cfg, trial)
    S, A, H = mdp.dims
    env = Environment(mdp)
    n0 = cfg.n0 if cfg.n0 is not None else DEFAULT_N0
    n = cfg.n if cfg.n is not None else DEFAULT_N
    cover, data = rf_explore(env, n0, n, cfg.learner_config, stream(cfg.seed, 3, trial))
    episodes = env.episodes_used

    model_mdp = mdp if cfg.exact_model else estimate_model(data, S, A, H).to_mdp(mdp.initial_dist)
    solver = get_solver(cfg.solver, cfg.eta, cfg.iterations)

    gaps: list[tuple[str, float]] = []
    policy = None
    for k, r in enumerate(reward_suite(cfg, S, A, H, trial)):
        policy = solver(model_mdp, r, cfg.epsilon)
        gaps.append((f"rand-{k}", exact_gap(mdp, r, policy)))
    adv_rng = stream(cfg.reward_seed, trial, 1 << 20)
    if policy is None and cfg.adversarial_rounds:
        policy = StochasticPolicy.uniform(S, A, H)
    for k in range(cfg.adversarial_rounds):
        r = adversarial_reward(mdp, policy, adv_rng, cfg.candidate_pool)
        policy = solver(model_mdp, r, cfg.epsilon)
        gaps.append((f"adv-{k}", exact_gap(mdp, r, policy)))

    delta = cfg.delta if cfg.delta is not None else cfg.epsilon / (2 * S * H**2)
    ratio, _ = coverage_ratio(mdp, mixture_occupancy(mdp, cover), delta, significance(mdp, delta))
    return TrialResult(trial, episodes, gaps, ratio, time.perf_counter() - t0)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def _dims_for_budgets(cfg: ExperimentConfig) -> tuple[int, int, int]:
    return _trial_instance(cfg, 0).dims


def run_e2e(cfg: ExperimentConfig) -> list[TrialResult]:
    """Run all trials (concurrently) and persist ``results.csv`` plus ``config.json``."""
    with ThreadPoolExecutor(_num_trial_workers(cfg.trials)) as pool:
        results = list(pool.map(lambda t: run_trial(cfg, t), range(cfg.trials)))
    results.sort(key=lambda r: r.trial)
    if cfg.output_dir is not None:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "results.csv", RESULT_HEADER, [row for r in results for row in r.rows()])
        S, A, H = _dims_for_budgets(cfg)
        meta = {
            "config": cfg.to_dict(),
            "n0_used": cfg.n0 if cfg.n0 is not None else DEFAULT_N0,
            "n_used": cfg.n if cfg.n is not None else DEFAULT_N,
            "theoretical_budgets": theoretical_budgets(S, A, H, cfg.epsilon, cfg.p),
        }
        with open(out / "config.json", "w") as f:
            json.dump(meta, f, indent=2)
    return results


def split_budget(budget: int, S: int, H: int) -> tuple[int, int]:
    """(n0, n) with S*H*n0 + n = budget, giving half the budget to the cover."""
    n0 = max(1, budget // (2 * S * H))
    n = budget - S * H * n0
    if n < 1:
        raise ValueError(f"budget {budget} is below the minimum {S * H + 1}")
    return n0, n


def run_baseline_comparison(cfg: ExperimentConfig, budgets: list[int], m: int = DEFAULT_RMAX_M,
                            snapshot: str = "last") -> list[dict]:
    """Reward-free exploration versus Zero-RMax at matched episode budgets.

    One row per (method, budget, trial) with the mean and max exact gap over
    the reward suite.  Written to ``comparison.csv`` when an output directory
    is configured.
    """
    solver = get_solver(cfg.solver, cfg.eta, cfg.iterations)

    def one(trial: int) -> list[dict]:
        mdp = _trial_instance(cfg, trial)
        S, A, H = mdp.dims
        rewards = reward_suite(cfg, S, A, H, trial)
        rows = []
        for b in budgets:
            t0 = time.perf_counter()
            env = Environment(mdp)
            n0, n = split_budget(b, S, H)
            _, data = rf_explore(env, n0, n, cfg.learner_config, stream(cfg.seed, 3, trial, b))
            est = estimate_model(data, S, A, H).to_mdp(mdp.initial_dist)
            g = [exact_gap(mdp, r, solver(est, r, cfg.epsilon)) for r in rewards]
            rows.append(_comparison_row("reward-free", b, trial, env.episodes_used, g, t0))

            t0 = time.perf_counter()
            env = Environment(mdp)
            snaps = zero_rmax_explore(env, b, m, stream(cfg.seed, 4, trial, b), mdp.initial_dist)
            plan_rng = stream(cfg.seed, 5, trial, b)
            g = [exact_gap(mdp, r, zero_rmax_plan(snaps, r, plan_rng, snapshot)) for r in rewards]
            rows.append(_comparison_row(f"zero-rmax-{snapshot}", b, trial, env.episodes_used, g, t0))
        return rows

    with ThreadPoolExecutor(_num_trial_workers(cfg.trials)) as pool:
        per_trial = list(pool.map(one, range(cfg.trials)))
    rows = [r for block in per_trial for r in block]
    if cfg.output_dir is not None:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "comparison.csv", COMPARISON_HEADER,
                   [[r[k] for k in COMPARISON_HEADER] for r in rows])
        with open(out / "comparison.json", "w") as f:
            json.dump({"config": cfg.to_dict(), "budgets": list(budgets), "m": m,
                       "snapshot": snapshot}, f, indent=2)
    return rows


def _comparison_row(method, budget, trial, episodes, gaps, t0) -> dict:
    return {"method": method, "budget": budget, "trial": trial, "episodes": episodes,
            "mean_gap": float(np.mean(gaps)) if gaps else 0.0,
            "max_gap": float(np.max(gaps)) if gaps else 0.0,
            "seconds": time.perf_counter() - t0}
