import numpy as np
import pytest

from metaplan.mdp import MdpInstance, RewardTable, TransitionModel


@pytest.fixture
def chain2():
    """s0 -> s1 -> s1, reward 1 only in s1."""
    probs = np.array([[[0.0, 1.0]], [[0.0, 1.0]]])
    rewards = np.array([[0.0], [1.0]])
    return MdpInstance(TransitionModel(probs), RewardTable(rewards), 0.99)


ALL_SCHEDULES = ("fixed:0.99", "dong", "bound_guided:0.3", "best_fixed", "dynamic_best")


def _sweep(**changes):
    from metaplan.harness.config import ExperimentConfig
    from metaplan.harness.sweep import AggregateResult, execute_runs

    config = ExperimentConfig(output_dir="unused").updated(**changes)
    _, records = execute_runs(config)
    return AggregateResult.from_records(records, config=config)


@pytest.fixture(scope="session")
def default_result():
    """100 seeds of the default setting (S=10, A=2, k=5, m=5, T=15, sigma 0.01), every variant and schedule."""
    return _sweep(schedules=ALL_SCHEDULES)


@pytest.fixture(scope="session")
def regime_results(default_result):
    """ada-POMRL under the three similarity regimes, 100 seeds each."""
    from metaplan.tasks import SIGMA_REGIMES

    out = {"strong": default_result}
    for name in ("medium", "loose"):
        out[name] = _sweep(sigma_target=SIGMA_REGIMES[name], variants=("ada_pomrl",))
    return out
