import numpy as np
import pytest
from hypothesis import given, strategies as st

from uavshare.errors import ValidationError
from uavshare.learner import (DOWN, LEFT, RIGHT, STAY, UP, LearningParams, QTable, choose_action,
                              legal_actions, q_update, reward, step_transition)

P = LearningParams()


def test_legal_actions():
    assert legal_actions(4, 3, 3) == (UP, DOWN, LEFT, RIGHT, STAY)
    assert legal_actions(0, 3, 3) == (DOWN, RIGHT, STAY)
    assert legal_actions(0, 1, 1) == (STAY,)


def test_transitions():
    assert step_transition(4, UP, 3, 3) == 1
    assert step_transition(4, STAY, 3, 3) == 4
    assert step_transition(step_transition(4, UP, 3, 3), DOWN, 3, 3) == 4
    with pytest.raises(ValueError):
        step_transition(0, UP, 3, 3)


def test_greedy_unique_max():
    q = QTable(3, 3)
    q.values[4, LEFT] = 0.3
    rng = np.random.default_rng(0)
    assert {choose_action(q, 4, LearningParams(epsilon=0.0), rng) for _ in range(50)} == {LEFT}


def _chi2(counts):
    e = counts.sum() / len(counts)
    return ((counts - e) ** 2 / e).sum()


def test_uniform_when_exploring_and_on_ties():
    rng = np.random.default_rng(1)
    q = QTable(3, 3)
    q.values[4, LEFT] = 5.0
    explore = np.bincount([choose_action(q, 4, LearningParams(epsilon=1.0), rng) for _ in range(10_000)], minlength=5)
    assert _chi2(explore) < 18.47  # chi2(4 dof) at p = 0.001
    ties = np.bincount([choose_action(QTable(3, 3), 0, LearningParams(epsilon=0.0), rng) for _ in range(9_000)],
                       minlength=5)
    assert ties[UP] == ties[LEFT] == 0
    assert _chi2(ties[[DOWN, RIGHT, STAY]]) < 13.82


def test_draw_count_contract():
    q = QTable(3, 3)
    q.values[4, UP] = 1.0
    a, b = np.random.default_rng(5), np.random.default_rng(5)
    choose_action(q, 4, LearningParams(epsilon=0.0), a)  # unique max: no draw
    assert a.random() == b.random()
    a, b = np.random.default_rng(5), np.random.default_rng(5)
    coin = b.random()
    choose_action(q, 4, LearningParams(epsilon=0.1), a)
    if coin >= 0.1:  # exploited: exactly one draw
        assert a.random() == b.random()


def test_reward_cases():
    assert reward(True, 2.5, 2.0, P) == 1.0
    assert reward(False, 2.0, 2.0, P) == 0.5
    assert reward(True, 2.0, 2.0, P) == -1.0
    assert reward(True, 1.5, 2.0, P) == -1.0
    assert reward(True, 2.0 * (1 + 1e-12), 2.0, P) == -1.0  # within tolerance counts as equal


def test_q_update_examples():
    q = QTable(3, 3)
    q_update(q, 4, UP, 1.0, 1, LearningParams(alpha=1.0, gamma=0.0))
    assert q.values[4, UP] == 1.0
    before = q.values.copy()
    q_update(q, 4, DOWN, 1.0, 7, LearningParams(alpha=0.0))
    assert np.array_equal(q.values, before)
    q = QTable(3, 3)
    q.values[4, UP] = 1.0
    q.values[1, DOWN] = 3.0
    q_update(q, 4, UP, 2.0, 1, P)
    assert q.values[4, UP] == pytest.approx(1.19, abs=1e-15)
    with pytest.raises(ValueError):
        q_update(q, 0, UP, 1.0, 0, P)


def test_q_update_locality():
    rng = np.random.default_rng(3)
    q = QTable(4, 4, rng.normal(size=(16, 5)))
    before = q.values.copy()
    q_update(q, 5, RIGHT, 0.5, 6, P)
    changed = np.argwhere(q.values != before)
    assert changed.tolist() == [[5, RIGHT]]


def test_params_validation():
    LearningParams().validate()
    with pytest.raises(ValidationError):
        LearningParams(beta3=0.2).validate()
    with pytest.raises(ValidationError):
        LearningParams(gamma=1.0).validate()
    assert LearningParams().q_bound == pytest.approx(1 / 0.7)


@given(st.lists(st.tuples(st.integers(0, 8), st.integers(0, 4), st.sampled_from([1.0, 0.5, -1.0])), max_size=300))
def test_bounded_from_zero(updates):
    q = QTable(3, 3)
    for s, a, r in updates:
        if q.legal[s, a]:
            q_update(q, s, a, r, int(q.trans[s, a]), P)
    assert np.abs(q.values).max() <= P.q_bound


def test_save_load(tmp_path):
    q = QTable(3, 4, np.random.default_rng(0).normal(size=(12, 5)))
    q.save(tmp_path / "q.txt", uav=2, role="relay")
    back, meta = QTable.load(tmp_path / "q.txt")
    assert np.array_equal(back.values, q.values) and (back.width, back.height) == (3, 4)
    assert meta["uav"] == "2" and meta["role"] == "relay"


def test_greedy_path():
    q = QTable(3, 3)
    q.values[4, RIGHT] = 1.0
    q.values[5, STAY] = 1.0
    assert q.greedy_path(4) == [4, 5]
    assert q.absorbing_state(4) == 5
    q.values[5, STAY] = 0.0
    q.values[5, LEFT] = 1.0
    assert q.absorbing_state(4) is None
