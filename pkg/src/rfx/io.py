"""JSON / JSON-Lines persistence for MDPs, rewards, policies and datasets.

Formats::

    MDP      {"S": int, "A": int, "H": int, "p1": [S], "P": [H][S][A][S]}
    reward   {"r": [H][S][A]}
    policy   {"pi": [H][S][A]}
    dataset  one JSON object per line: {"states": [H+1 ints], "actions": [H ints]}

The first axis of every tensor is the step; element 0 is step 1.  Floats are
written with ``repr`` precision, so a load after a dump is exact.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .mdp import (EpisodeDataset, RewardTable, StochasticPolicy, TabularMdp,
                  DimensionMismatchError, check_mdp)


def _dump(obj, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(obj, f)


def _load(path):
    with open(path) as f:
        return json.load(f)


def mdp_to_dict(mdp: TabularMdp) -> dict:
    return {"S": mdp.S, "A": mdp.A, "H": mdp.H,
            "p1": mdp.initial_dist.tolist(), "P": mdp.transitions.tolist()}


def mdp_from_dict(d: dict, validate: bool = True) -> TabularMdp:
    mdp = TabularMdp(np.array(d["P"], dtype=float), np.array(d["p1"], dtype=float))
    if (mdp.S, mdp.A, mdp.H) != (d["S"], d["A"], d["H"]):
        raise DimensionMismatchError(
            f"header says S,A,H = {d['S']},{d['A']},{d['H']} but tensors give {mdp.S},{mdp.A},{mdp.H}")
    return check_mdp(mdp) if validate else mdp


def save_mdp(mdp: TabularMdp, path) -> None:
    _dump(mdp_to_dict(mdp), path)


def load_mdp(path, validate: bool = True) -> TabularMdp:
    return mdp_from_dict(_load(path), validate)


def save_reward(reward: RewardTable, path) -> None:
    _dump({"r": reward.values.tolist()}, path)


def load_reward(path) -> RewardTable:
    return RewardTable(np.array(_load(path)["r"], dtype=float))


def save_policy(policy: StochasticPolicy, path, **extra) -> None:
    _dump({"pi": policy.probs.tolist(), **extra}, path)


def load_policy(path) -> StochasticPolicy:
    return StochasticPolicy(np.array(_load(path)["pi"], dtype=float))


def save_dataset(dataset: EpisodeDataset, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for s, a in zip(dataset.states.tolist(), dataset.actions.tolist()):
            f.write(json.dumps({"states": s, "actions": a}) + "\n")


def load_dataset(path, horizon: int | None = None) -> EpisodeDataset:
    states, actions = [], []
    with open(path) as f:
        for line in f:
            if line.strip():
                rec = json.loads(line)
                states.append(rec["states"])
                actions.append(rec["actions"])
    if horizon is None:
        if not actions:
            raise ValueError(f"{path}: empty dataset and no horizon given")
        horizon = len(actions[0])
    if any(len(a) != horizon or len(s) != horizon + 1 for s, a in zip(states, actions)):
        raise DimensionMismatchError(f"{path}: trajectories disagree on the horizon")
    return EpisodeDataset(np.array(states, dtype=np.int64).reshape(-1, horizon + 1),
                          np.array(actions, dtype=np.int64).reshape(-1, horizon), horizon)
