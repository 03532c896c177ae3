import json

import numpy as np
import pytest

import metaplan.meta_loop as meta_loop
from helpers import brute_force_optimum, exact_values, make_mdp
from metaplan.errors import InvalidInputError, TaskError
from metaplan.horizon import gamma_bias, theorem1_bound, BoundParams
from metaplan.mdp import DEFAULT_TOL, TransitionModel
from metaplan.meta_loop import (
    VARIANTS,
    RunRecord,
    planning_loss,
    planning_losses,
    run_variant,
    run_variants,
    task_averaged_regret,
)
from metaplan.tasks import MetaDistribution, RngStream, random_chain_mdp, random_rewards

GRID = (0.0, 0.3, 0.6, 0.9, 0.99)


def small_setup(seed=0, sigma=0.01, a0=None, n_states=6):
    rng = RngStream(0, seed)
    mean = random_chain_mdp(n_states, 2, 2, rng.child(0))
    dist = MetaDistribution(mean, a0) if a0 else MetaDistribution.from_sigma(mean, sigma)
    return dist, random_rewards(n_states, 2, rng.child(1)), rng


def corrupt(model, seed, scale=0.5):
    noise = np.random.default_rng(seed).random(model.probs.shape)
    p = (1 - scale) * model.probs + scale * noise / noise.sum(axis=2, keepdims=True)
    return TransitionModel(p)


# --- planning loss -------------------------------------------------------


def test_exact_model_has_zero_loss():
    mdp = make_mdp(0, n_states=6)
    assert planning_loss(mdp, mdp.transitions, 0.99) <= 2 * DEFAULT_TOL / (1 - 0.99)


@pytest.mark.parametrize("gamma", [0.0, 0.3, 0.7, 0.95])
def test_exact_model_loss_bounded_by_bias(gamma):
    for seed in range(10):
        mdp = make_mdp(seed, n_states=6)
        assert planning_loss(mdp, mdp.transitions, gamma) <= gamma_bias(gamma, 0.99) + 1e-9


@pytest.mark.parametrize("seed", range(6))
def test_loss_matches_policy_enumeration(seed):
    mdp = make_mdp(seed, n_states=5)
    est = corrupt(mdp.transitions, seed + 100)
    probs, rewards = mdp.transitions.probs, mdp.rewards.rewards
    v_star, _ = brute_force_optimum(probs, rewards, 0.99)
    for gamma in GRID:
        _, planned = brute_force_optimum(est.probs, rewards, gamma)
        expected = np.abs(v_star - exact_values(probs, rewards, planned, 0.99)).max()
        assert planning_loss(mdp, est, gamma) == pytest.approx(expected, abs=1e-8)


def test_planning_losses_validation():
    mdp = make_mdp(0, gamma_eval=0.9)
    with pytest.raises(InvalidInputError):
        planning_losses(mdp, mdp.transitions, [0.95])
    with pytest.raises(InvalidInputError):
        planning_losses(mdp, TransitionModel.uniform(3, 2), [0.5])


# --- regret --------------------------------------------------------------


def record_with(losses, gammas=(0.0, 0.5)):
    losses = np.asarray(losses, dtype=float)
    n = losses.shape[0]
    return RunRecord("no_meta", "fixed:0.5", 0, np.array(gammas), losses, np.full(n, gammas[-1]), losses[:, -1], np.zeros(n), np.zeros(n))


def test_regret_single_task():
    assert task_averaged_regret(record_with([[0.4, 0.2]]), 0.5) == pytest.approx(0.2)


def test_regret_zero_grid():
    assert task_averaged_regret(record_with(np.zeros((4, 2))), 0.0) == 0.0


def test_regret_three_tasks():
    rec = record_with([[0.1, 0.3], [0.2, 0.6], [0.3, 0.9]])
    assert task_averaged_regret(rec, 0.5) == pytest.approx((0.3 + 0.6 + 0.9) / 3)
    with pytest.raises(InvalidInputError):
        task_averaged_regret(rec, 0.25)


# --- runs ----------------------------------------------------------------


def test_first_task_identical_for_meta_variants():
    dist, rewards, rng = small_setup(1)
    recs = run_variants(["pomrl_known_sigma", "ada_pomrl", "no_meta"], dist, rewards, 1, 5, ["fixed:0.99", "dong"], GRID, rng)
    base = recs[("no_meta", "fixed:0.99")]
    for (variant, schedule), rec in recs.items():
        np.testing.assert_array_equal(rec.per_task_loss, base.per_task_loss)
        np.testing.assert_array_equal(rec.alpha_trace, [0.0])
        np.testing.assert_array_equal(rec.chosen_loss, recs[("no_meta", schedule)].chosen_loss)


def test_zero_spread_aggregating_matches_pomrl():
    dist, rewards, rng = small_setup(2, a0=1e12)
    recs = run_variants(["aggregating", "pomrl_known_sigma"], dist, rewards, 6, 5, ["fixed:0.99"], GRID, rng)
    agg, pomrl = recs[("aggregating", "fixed:0.99")], recs[("pomrl_known_sigma", "fixed:0.99")]
    np.testing.assert_allclose(agg.per_task_loss[1:], pomrl.per_task_loss[1:], atol=1e-6)
    assert np.all(pomrl.alpha_trace[1:] > 1 - 1e-9)


def test_alpha_trace_nondecreasing_for_known_sigma():
    dist, rewards, rng = small_setup(3, sigma=0.05)
    rec = run_variant("pomrl_known_sigma", dist, rewards, 12, 5, "fixed:0.99", GRID, rng)
    assert rec.alpha_trace[0] == 0.0
    assert np.all(np.diff(rec.alpha_trace) >= 0)


def test_record_invariants_and_json_round_trip():
    dist, rewards, rng = small_setup(4)
    recs = run_variants(VARIANTS, dist, rewards, 4, 5, ["fixed:0.6", "dong", "dynamic_best", "best_fixed"], GRID, rng, seed=4)
    for rec in recs.values():
        assert rec.per_task_loss.shape == (4, len(GRID))
        assert rec.per_task_loss.min() >= -2 * DEFAULT_TOL
        assert rec.seed == 4
        assert np.all(rec.chosen_gamma <= 0.99)
        for t, g in enumerate(rec.chosen_gamma):
            idx = rec.grid_index(g)
            if idx is not None:
                assert rec.chosen_loss[t] == rec.per_task_loss[t, idx]
        back = RunRecord.from_dict(json.loads(rec.to_json()))
        np.testing.assert_array_equal(back.per_task_loss, rec.per_task_loss)
        assert back.to_json() == rec.to_json()
    dyn = recs[("ada_pomrl", "dynamic_best")]
    np.testing.assert_array_equal(dyn.chosen_gamma, dyn.optimal_gamma())


def test_off_grid_choice_adds_a_row():
    dist, rewards, rng = small_setup(5)
    rec = run_variant("ada_pomrl", dist, rewards, 3, 5, "dong", GRID, rng)
    rows = rec.long_rows()
    assert sum(r["chosen"] for r in rows) == 3
    assert len(rows) == 3 * len(GRID) + sum(rec.grid_index(g) is None for g in rec.chosen_gamma)


def test_runs_are_deterministic():
    dist, rewards, rng = small_setup(6)
    a = run_variant("ada_pomrl", dist, rewards, 5, 5, "dong", GRID, rng)
    b = run_variant("ada_pomrl", dist, rewards, 5, 5, "dong", GRID, RngStream(0, 6))
    assert a.to_json() == b.to_json()


def test_variants_share_task_stream():
    dist, rewards, rng = small_setup(7)
    together = run_variants(["ada_pomrl", "no_meta"], dist, rewards, 3, 5, ["fixed:0.99"], GRID, rng)
    alone = run_variant("no_meta", dist, rewards, 3, 5, "fixed:0.99", GRID, rng)
    np.testing.assert_array_equal(together[("no_meta", "fixed:0.99")].per_task_loss, alone.per_task_loss)


def test_run_validation():
    dist, rewards, rng = small_setup(8)
    with pytest.raises(InvalidInputError):
        run_variant("no_meta", dist, rewards, 0, 5, "fixed:0.99", GRID, rng)
    with pytest.raises(InvalidInputError):
        run_variant("no_meta", dist, rewards, 2, 5, "fixed:0.99", (0.5, 0.995), rng)
    with pytest.raises(InvalidInputError):
        run_variant("bogus", dist, rewards, 2, 5, "fixed:0.99", GRID, rng)
    with pytest.raises(InvalidInputError):
        run_variants(["no_meta"], dist, rewards, 2, 5, ["fixed:0.5", "fixed:0.5"], GRID, rng)


def test_failures_carry_task_index(monkeypatch):
    dist, rewards, rng = small_setup(9)
    calls = {"n": 0}
    original = meta_loop.plan_batch

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] > 1:
            raise FloatingPointError("boom")
        return original(*args, **kwargs)

    monkeypatch.setattr(meta_loop, "plan_batch", flaky)
    with pytest.raises(TaskError) as info:
        run_variant("no_meta", dist, rewards, 5, 5, "fixed:0.99", GRID, rng)
    assert info.value.task == 2
    assert "boom" in str(info.value)


# --- 100-seed properties -------------------------------------------------


def test_loss_ordering_at_last_task(default_result):
    last = {v: default_result.loss_at(v, 0.99)[:, -1].mean() for v in ("oracle_prior", "pomrl_known_sigma", "no_meta")}
    assert last["oracle_prior"] <= last["pomrl_known_sigma"] <= last["no_meta"]


def test_oracle_dominates_in_expectation(default_result):
    oracle = default_result.loss_at("oracle_prior", 0.99)
    for v in ("pomrl_known_sigma", "ada_pomrl", "no_meta", "aggregating"):
        other = default_result.loss_at(v, 0.99)
        se = other.std(axis=0, ddof=1) / np.sqrt(other.shape[0])
        assert np.all(oracle.mean(axis=0) <= other.mean(axis=0) + se), v


def test_hindsight_ordering_on_experiment(default_result):
    for variant in VARIANTS:
        dyn = default_result.get(variant, "dynamic_best").chosen_loss.mean()
        fixed = default_result.get(variant, "best_fixed").chosen_loss.mean()
        columns = default_result.get(variant, "fixed:0.99").loss.mean(axis=(0, 1))
        assert dyn <= fixed + 1e-12 and fixed <= columns.min() + 1e-12


def test_single_task_bound_violation_rate(default_result, record_property):
    # high-probability bound with stripped log factors: report, do not gate
    p = BoundParams(m=5, t_tasks=1, s_count=10, a_count=2, delta=0.05)
    bounds = np.array([theorem1_bound(g, p) for g in default_result.gammas])
    loss = default_result.get("no_meta").loss
    rate = float((loss > bounds).mean())
    record_property("theorem1_violation_rate", rate)
    print(f"single-task bound violated in {rate:.2%} of (run, task, gamma) triples")
    assert 0.0 <= rate <= 1.0
