import numpy as np
import pytest
from scipy import stats

from rfx.dp import indicator_reward, max_reach, occupancy, significance, value_iteration
from rfx.explorer import (MixtureDistribution, PolicyCover, collect_from_cover, coverage_ratio,
                          learn_cover, mixture_occupancy, rf_explore, uniformize)
from rfx.instances import random_mdp, toy_significance_mdp
from rfx.learners import (PolicyRuns, RegretLearnerConfig, _doubling_stop, optimistic_actions,
                          run_regret_learner)
from rfx.mdp import Environment, RewardTable, StochasticPolicy, TabularMdp, sample_episodes, stream

from conftest import random_policy

BERNSTEIN = RegretLearnerConfig()


class SamplingOnly:
    """Environment stand-in that refuses kernel access."""

    def __init__(self, mdp):
        self._env = Environment(mdp)
        self.S, self.A, self.H = mdp.S, mdp.A, mdp.H

    def rollout(self, *a):
        return self._env.rollout(*a)

    def rollout_until(self, *a):
        return self._env.rollout_until(*a)

    def unwrap(self):
        raise AssertionError("learner read the kernel")


def test_config_validation():
    with pytest.raises(ValueError):
        RegretLearnerConfig(kind="sarsa")
    with pytest.raises(ValueError):
        RegretLearnerConfig(bonus_scale=0.0)


def test_policy_runs_merge_equal_policies():
    runs = PolicyRuns()
    p = StochasticPolicy.uniform(2, 2, 1)
    runs.append(p, 3)
    runs.append(StochasticPolicy(p.probs.copy()), 2)
    runs.append(StochasticPolicy.deterministic(np.zeros((1, 2), dtype=int), 2), 1)
    assert runs.counts == [5, 1] and len(runs) == 6 and len(runs.expand()) == 6


def test_single_action_learner_is_optimal(rng):
    mdp = random_mdp(3, 1, 3, 1.0, rng)
    r = RewardTable(rng.random((3, 3, 1)))
    runs = run_regret_learner(Environment(mdp), r, 100, BERNSTEIN, rng)
    assert len(runs) == 100
    assert runs.average_value(mdp, r) == pytest.approx(value_iteration(mdp, r)[0].initial_value(mdp.initial_dist))


def test_oracle_stub_plays_greedy_policy(rng):
    mdp = random_mdp(3, 2, 2, 1.0, rng)
    r = RewardTable(rng.random((2, 3, 2)))
    env = Environment(mdp)
    runs = run_regret_learner(env, r, 50, RegretLearnerConfig(kind="oracle"), rng)
    greedy = value_iteration(mdp, r)[1]
    assert all(np.array_equal(p.probs, greedy.probs) for p in runs.expand())
    assert env.episodes_used == 50


@pytest.mark.parametrize("kind", ["bernstein", "hoeffding"])
def test_learner_reaches_toy_goal(kind):
    mdp = toy_significance_mdp()
    r = indicator_reward(5, 2, 2, 1, 1)
    runs = run_regret_learner(SamplingOnly(mdp), r, 2000, RegretLearnerConfig(kind=kind), stream(0))
    assert len(runs) == 2000
    assert runs.average_value(mdp, r) >= 0.9


def test_learner_value_improves_with_more_episodes():
    mdp = random_mdp(4, 3, 3, 0.5, 11)
    r = indicator_reward(4, 3, 3, 2, 2)
    best = max_reach(mdp, 2, 2)[0]
    short = run_regret_learner(Environment(mdp), r, 200, BERNSTEIN, stream(1)).average_value(mdp, r)
    long = run_regret_learner(Environment(mdp), r, 20000, BERNSTEIN, stream(1)).average_value(mdp, r)
    assert long > short and best - long < 0.1


def test_unvisited_pairs_get_the_cap():
    r = indicator_reward(2, 2, 2, 1, 1)
    counts = np.zeros((2, 2, 2, 2), dtype=np.int64)
    counts[0, 0, 0, 0] = 100          # action 0 at the start is known to stay put
    counts[1, 0, :, 0] = 100          # and state 0 at the last step is known to pay nothing
    acts = optimistic_actions(counts, r, "bernstein", 1.0, 3.0)
    assert acts[0, 0] == 1


def test_doubling_stop_matches_sequential_rule():
    rng = np.random.default_rng(4)
    S, A, H = 3, 2, 3
    mdp = random_mdp(S, A, H, 1.0, rng)
    batch = sample_episodes(mdp, random_policy(S, A, H, rng), 400, rng)
    room = rng.integers(1, 30, size=(H, S, A))
    got = _doubling_stop(room, S, A)(batch)
    seen = np.zeros_like(room)
    want = len(batch)
    for k in range(len(batch)):
        for h in range(H):
            seen[h, batch.states[k, h], batch.actions[k, h]] += 1
        if np.any(seen >= room):
            want = k + 1
            break
    assert got == want


def test_uniformize_only_touches_goal(rng):
    pol = random_policy(3, 2, 2, rng)
    u = uniformize(pol, 1, 0)
    assert np.allclose(u.probs[0, 1], 0.5)
    mask = np.ones((2, 3), dtype=bool)
    mask[0, 1] = False
    assert np.array_equal(u.probs[mask], pol.probs[mask])


def test_single_pair_cover_is_uniform():
    mdp = TabularMdp(np.ones((1, 1, 3, 1)), np.ones(1))
    cover, data = rf_explore(Environment(mdp), 25, 10, BERNSTEIN, 0)
    assert len(cover) == 25 and len(data) == 10
    assert all(np.allclose(p.probs, 1 / 3) for p in cover.policies)


def test_episode_accounting(rng):
    mdp = random_mdp(4, 2, 3, 1.0, rng)
    env = Environment(mdp)
    cover, data = rf_explore(env, 37, 501, BERNSTEIN, 3)
    assert len(cover) == 4 * 3 * 37 and len(data) == 501
    assert env.episodes_used == 4 * 3 * 37 + 501
    assert set(cover.per_goal_counts.values()) == {37}
    # goals in row-major order, h outer
    order = list(dict.fromkeys(cover.goals))
    assert order == [(s, h) for h in range(3) for s in range(4)]


def test_cover_policies_uniform_at_goal(rng):
    mdp = random_mdp(3, 3, 2, 1.0, rng)
    cover = learn_cover(Environment(mdp), 40, BERNSTEIN, 5)
    for (s, h), p in zip(cover.goals, cover.policies):
        assert np.allclose(p.probs[h, s], 1 / 3)


def test_explore_is_reproducible(rng):
    mdp = random_mdp(3, 2, 3, 1.0, rng)
    a = rf_explore(Environment(mdp), 50, 9000, BERNSTEIN, 17)[1]
    b = rf_explore(Environment(mdp), 50, 9000, BERNSTEIN, 17)[1]
    assert np.array_equal(a.states, b.states) and np.array_equal(a.actions, b.actions)


def test_toy_significant_pairs_all_covered():
    mdp = toy_significance_mdp()
    cover = learn_cover(Environment(mdp), 5000, BERNSTEIN, 0)
    mu = mixture_occupancy(mdp, cover).mu
    rep = significance(mdp, 1e-5)
    for h, s in zip(*np.nonzero(rep.significant)):
        assert np.all(mu[h, s] > 0)


def test_toy_coverage_bound():
    mdp = toy_significance_mdp()
    cover = learn_cover(Environment(mdp), 5000, BERNSTEIN, 1)
    ratio, witness = coverage_ratio(mdp, mixture_occupancy(mdp, cover), 1e-5)
    assert ratio <= 2 * 5 * 2 * 2
    assert significance(mdp, 1e-5).significant[witness[2], witness[0]]


def test_singleton_mixture_is_occupancy(rng):
    mdp = random_mdp(3, 2, 3, 1.0, rng)
    pol = StochasticPolicy.deterministic(rng.integers(2, size=(3, 3)), 2)
    cover = PolicyCover([pol], [4], [(0, 0)])
    mu = mixture_occupancy(mdp, cover).mu
    assert np.allclose(mu, occupancy(mdp, pol).probs)


def test_mixture_matches_weighted_average(rng):
    mdp = random_mdp(3, 2, 3, 1.0, rng)
    pols = [random_policy(3, 2, 3, rng) for _ in range(5)]
    w = [1, 3, 2, 7, 1]
    cover = PolicyCover(pols, w, [(0, 0)] * 5)
    mu = mixture_occupancy(mdp, cover, chunk=2).mu
    want = sum(wi * occupancy(mdp, p).probs for wi, p in zip(w, pols)) / sum(w)
    assert np.allclose(mu, want, atol=1e-12)
    assert np.allclose(mu.sum(axis=(1, 2)), 1.0)


def test_mixture_sample_matches_mu():
    mdp = random_mdp(3, 2, 2, 1.0, 21)
    cover = learn_cover(Environment(mdp), 30, BERNSTEIN, 2)
    mu = mixture_occupancy(mdp, cover).mu
    n = 10**6
    data = collect_from_cover(Environment(mdp), cover, n, 8)
    for h in range(2):
        freq = np.zeros((3, 2))
        np.add.at(freq, (data.states[:, h], data.actions[:, h]), 1.0)
        freq /= n
        se = np.sqrt(mu[h] * (1 - mu[h]) / n)
        assert np.all(np.abs(freq - mu[h]) <= 3 * se + 1e-12)


def test_dataset_halves_exchangeable():
    mdp = random_mdp(3, 2, 2, 1.0, 4)
    cover, data = rf_explore(Environment(mdp), 30, 40000, BERNSTEIN, 6)
    half = len(data) // 2
    for h in range(2):
        cells = data.states[:, h] * 2 + data.actions[:, h]
        table = np.stack([np.bincount(cells[:half], minlength=6), np.bincount(cells[half:], minlength=6)])
        table = table[:, table.sum(axis=0) > 0]
        assert stats.chi2_contingency(table).pvalue > 1e-3


def test_single_state_ratio_equals_action_count():
    mdp = TabularMdp(np.ones((1, 1, 4, 1)), np.ones(1))
    mu = MixtureDistribution(np.full((1, 1, 4), 0.25))
    ratio, _ = coverage_ratio(mdp, mu, 0.5)
    assert ratio == pytest.approx(4.0) and ratio <= 2 * 1 * 4 * 1


def test_zero_mass_gives_infinite_ratio():
    mdp = toy_significance_mdp()
    mu = np.zeros((2, 5, 2))
    mu[0, 0, 0] = 1.0
    mu[1, 1, 0] = 1.0
    ratio, witness = coverage_ratio(mdp, MixtureDistribution(mu), 1e-5)
    assert ratio == np.inf and witness == (0, 1, 0)


def test_nothing_significant():
    P = np.zeros((1, 2, 1, 2))
    P[0, :, 0, 0] = 1.0
    mdp = TabularMdp(P, np.array([0.5, 0.5]))
    assert coverage_ratio(mdp, MixtureDistribution(np.full((1, 2, 1), 0.5)), 0.9) == (0.0, None)


@pytest.mark.parametrize("mdp", [toy_significance_mdp(), random_mdp(3, 3, 3, 0.3, 1)],
                         ids=["toy", "random"])
def test_coverage_median_non_increasing_in_n0(mdp):
    S, A, H = mdp.dims
    delta = 0.2 / (2 * S * H**2)
    medians = []
    for n0 in (100, 1000, 10000):
        ratios = [coverage_ratio(mdp, mixture_occupancy(mdp, learn_cover(Environment(mdp), n0, BERNSTEIN, seed)),
                                 delta)[0] for seed in range(20)]
        medians.append(np.median(ratios))
    assert medians[0] >= medians[1] >= medians[2]
