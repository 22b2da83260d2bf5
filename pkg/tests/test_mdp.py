import numpy as np
import pytest
from scipy import stats

from rfx.dp import occupancy
from rfx.instances import deterministic_chain, random_mdp, toy_significance_mdp
from rfx.io import load_dataset, load_mdp, load_policy, load_reward, save_dataset, save_mdp, \
    save_policy, save_reward
from rfx.mdp import (DimensionMismatchError, EpisodeDataset, Environment, InvalidMdpError,
                     RewardTable, StochasticPolicy, TabularMdp, Trajectory, check_dims,
                     sample_episode, sample_episodes, stream, validate_mdp)

from conftest import random_policy


def test_single_state_self_loop_is_valid():
    mdp = TabularMdp(np.ones((3, 1, 1, 1)), np.ones(1))
    assert validate_mdp(mdp) == []


def test_short_row_names_its_index():
    P = np.zeros((2, 2, 2, 2))
    P[..., 0] = 1.0
    P[1, 0, 1] = [0.5, 0.4]
    v = validate_mdp(TabularMdp(P, np.array([1.0, 0.0])))
    assert [(x.kind, x.index) for x in v] == [("row sum", (1, 0, 1))]


def test_negative_entry_names_its_index():
    P = np.zeros((1, 2, 1, 2))
    P[0, 0, 0] = [1.1, -0.1]
    P[0, 1, 0] = [0.0, 1.0]
    v = validate_mdp(TabularMdp(P, np.array([0.5, 0.5])))
    assert ("negative entry", (0, 0, 0, 1)) in [(x.kind, x.index) for x in v]


def test_initial_dist_violations():
    P = np.ones((1, 2, 1, 2)) / 2
    kinds = {x.kind for x in validate_mdp(TabularMdp(P, np.array([0.7, 0.2])))}
    assert kinds == {"initial sum"}
    kinds = {x.kind for x in validate_mdp(TabularMdp(P, np.array([1.5, -0.5])))}
    assert "negative initial mass" in kinds


def test_no_silent_renormalization():
    P = np.full((1, 2, 1, 2), 0.5)
    P[0, 0, 0] = [0.5, 0.5 + 1e-7]
    mdp = TabularMdp(P, np.array([1.0, 0.0]))
    assert mdp.transitions[0, 0, 0, 1] == 0.5 + 1e-7
    with pytest.raises(InvalidMdpError):
        Environment(mdp)


def test_shape_checks():
    with pytest.raises(DimensionMismatchError):
        TabularMdp(np.ones((1, 2, 1, 3)), np.ones(2))
    with pytest.raises(DimensionMismatchError):
        TabularMdp(np.ones((1, 1, 1, 1)), np.ones(2))
    mdp = toy_significance_mdp()
    with pytest.raises(DimensionMismatchError):
        check_dims(mdp, RewardTable.zeros(5, 2, 3))


def test_reward_and_policy_validation():
    with pytest.raises(ValueError):
        RewardTable(np.full((1, 1, 1), 1.5))
    with pytest.raises(ValueError):
        StochasticPolicy(np.full((1, 1, 2), 0.6))
    pol = StochasticPolicy.deterministic(np.array([[1, 0]]), 2)
    assert pol.is_deterministic() and pol.greedy_actions().tolist() == [[1, 0]]


def test_tensors_are_read_only():
    mdp = toy_significance_mdp()
    with pytest.raises(ValueError):
        mdp.transitions[0, 0, 0, 0] = 0.5


def test_deterministic_chain_trajectory_is_unique():
    mdp = deterministic_chain(3, 2, 3)
    pol = StochasticPolicy.deterministic(np.zeros((3, 3), dtype=int), 2)
    for seed in range(5):
        t = sample_episode(mdp, pol, np.random.default_rng(seed))
        assert t.states == (0, 1, 2, 2) and t.actions == (0, 0, 0)


def test_toy_action_zero_stays_in_s1():
    mdp = toy_significance_mdp()
    pol = StochasticPolicy.deterministic(np.zeros((2, 5), dtype=int), 2)
    data = sample_episodes(mdp, pol, 1000, np.random.default_rng(0))
    assert np.all(data.states[:, 1:] == 1)


def test_sampling_is_bit_reproducible(rng):
    mdp = random_mdp(4, 3, 3, 1.0, rng)
    pol = random_policy(4, 3, 3, rng)
    a = sample_episodes(mdp, pol, 500, stream(7, 1))
    b = sample_episodes(mdp, pol, 500, stream(7, 1))
    assert np.array_equal(a.states, b.states) and np.array_equal(a.actions, b.actions)
    assert sample_episode(mdp, pol, stream(3)) == sample_episode(mdp, pol, stream(3))


def test_indices_in_range(rng):
    mdp = random_mdp(5, 3, 4, 0.3, rng)
    data = sample_episodes(mdp, random_policy(5, 3, 4, rng), 2000, rng)
    assert data.states.min() >= 0 and data.states.max() < 5
    assert data.actions.min() >= 0 and data.actions.max() < 3


def test_next_state_frequencies_within_three_se():
    rng = np.random.default_rng(1)
    S, A, H = 3, 2, 2
    mdp = random_mdp(S, A, H, 1.0, rng)
    pol = StochasticPolicy.uniform(S, A, H)
    n = 10**6
    data = sample_episodes(mdp, pol, n, rng)
    for h in range(H):
        for s in range(S):
            for a in range(A):
                mask = (data.states[:, h] == s) & (data.actions[:, h] == a)
                m = mask.sum()
                if m < 1000:
                    continue
                freq = np.bincount(data.states[mask, h + 1], minlength=S) / m
                p = mdp.transitions[h, s, a]
                se = np.sqrt(p * (1 - p) / m)
                assert np.all(np.abs(freq - p) <= 3 * se + 1e-12)


def test_initial_state_chi_square(rng):
    mdp = random_mdp(6, 2, 1, 1.0, rng)
    mdp = TabularMdp(mdp.transitions, np.array([0.3, 0.25, 0.2, 0.1, 0.1, 0.05]))
    data = sample_episodes(mdp, StochasticPolicy.uniform(6, 2, 1), 50000, rng)
    obs = np.bincount(data.states[:, 0], minlength=6)
    assert stats.chisquare(obs, 50000 * mdp.initial_dist).pvalue > 1e-3


def test_single_and_batched_samplers_agree_in_distribution():
    rng = np.random.default_rng(5)
    mdp = random_mdp(3, 2, 2, 1.0, rng)
    pol = random_policy(3, 2, 2, rng)
    n = 20000
    single = np.array([sample_episode(mdp, pol, rng).states[2] for _ in range(n)])
    batch = sample_episodes(mdp, pol, n, rng).states[:, 2]
    table = np.stack([np.bincount(single, minlength=3), np.bincount(batch, minlength=3)])
    table = table[:, table.sum(axis=0) > 0]
    assert stats.chi2_contingency(table).pvalue > 1e-3


def test_visit_frequencies_match_occupancy():
    rng = np.random.default_rng(9)
    mdp = random_mdp(3, 2, 3, 1.0, rng)
    pol = random_policy(3, 2, 3, rng)
    n = 10**6
    data = sample_episodes(mdp, pol, n, stream(9, 2))
    occ = occupancy(mdp, pol).probs
    for h in range(3):
        freq = np.zeros((3, 2))
        np.add.at(freq, (data.states[:, h], data.actions[:, h]), 1.0)
        freq /= n
        se = np.sqrt(occ[h] * (1 - occ[h]) / n)
        assert np.all(np.abs(freq - occ[h]) <= 3 * se + 1e-12)


def test_environment_counts_episodes(rng):
    env = Environment(random_mdp(3, 2, 2, 1.0, rng))
    pol = StochasticPolicy.uniform(3, 2, 2)
    env.rollout(pol, 10, rng)
    env.episode(pol, rng)
    got = env.rollout_until(pol, 50, lambda batch: 7, rng)
    assert len(got) == 7 and env.episodes_used == 18
    with pytest.raises(ValueError):
        env.rollout_until(pol, 5, lambda batch: 0, rng)


def test_dataset_helpers():
    trajs = [Trajectory((0, 1, 1), (0, 1)), Trajectory((1, 0, 0), (1, 1))]
    ds = EpisodeDataset.from_trajectories(trajs)
    assert len(ds) == 2 and ds[1] == trajs[1] and ds.trajectories == trajs
    both = EpisodeDataset.concat([ds, ds])
    assert len(both) == 4 and both.horizon == 2


def test_io_round_trip(tmp_path, rng):
    mdp = random_mdp(3, 2, 2, 1.0, rng)
    save_mdp(mdp, tmp_path / "m.json")
    back = load_mdp(tmp_path / "m.json")
    assert np.array_equal(back.transitions, mdp.transitions)
    assert np.array_equal(back.initial_dist, mdp.initial_dist)

    r = RewardTable(rng.random((2, 3, 2)))
    save_reward(r, tmp_path / "r.json")
    assert np.array_equal(load_reward(tmp_path / "r.json").values, r.values)

    pol = random_policy(3, 2, 2, rng)
    save_policy(pol, tmp_path / "p.json", solver="vi")
    assert np.array_equal(load_policy(tmp_path / "p.json").probs, pol.probs)

    ds = sample_episodes(mdp, pol, 20, rng)
    save_dataset(ds, tmp_path / "d.jsonl")
    back_ds = load_dataset(tmp_path / "d.jsonl")
    assert np.array_equal(back_ds.states, ds.states) and np.array_equal(back_ds.actions, ds.actions)


def test_io_rejects_bad_header(tmp_path):
    import json
    mdp = toy_significance_mdp()
    from rfx.io import mdp_to_dict
    d = mdp_to_dict(mdp)
    d["S"] = 4
    (tmp_path / "m.json").write_text(json.dumps(d))
    with pytest.raises(DimensionMismatchError):
        load_mdp(tmp_path / "m.json")
