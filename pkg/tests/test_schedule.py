import numpy as np
import pytest

from hdrdiff.schedule import alpha_bar, linear_beta_schedule, make_plan


def test_linear_endpoints_default_range():
    s = linear_beta_schedule(1000, 0.0001, 0.02)
    assert s.betas[0] == pytest.approx(0.0001)
    assert s.betas[-1] == pytest.approx(0.02)
    assert s.num_steps == 1000
    diffs = np.diff(s.betas)
    assert np.allclose(diffs, diffs[0])


def test_single_step_schedule():
    s = linear_beta_schedule(1, 0.3, 0.3)
    assert s.betas.tolist() == [0.3]
    assert s.alpha_bars.tolist() == [1.0, 0.7]


def test_four_step_hand_values():
    s = linear_beta_schedule(4, 0.1, 0.4)
    assert np.allclose(s.betas, [0.1, 0.2, 0.3, 0.4])
    # brute-force product oracle
    assert alpha_bar(s, 4) == pytest.approx(0.9 * 0.8 * 0.7 * 0.6, abs=1e-15)
    assert alpha_bar(s, 4) == pytest.approx(0.3024, abs=1e-12)


def test_alpha_bar_boundaries():
    s = linear_beta_schedule(10, 0.1, 0.2)
    assert alpha_bar(s, 0) == 1.0
    assert alpha_bar(s, 1) == pytest.approx(1.0 - s.betas[0])
    with pytest.raises(IndexError):
        alpha_bar(s, 11)
    with pytest.raises(IndexError):
        alpha_bar(s, -1)


def test_alpha_bar_recurrence():
    s = linear_beta_schedule(500, 1e-4, 0.02)
    for t in range(1, 501):
        expected = s.alpha_bars[t - 1] * (1.0 - s.betas[t - 1])
        assert abs(s.alpha_bars[t] - expected) <= 1e-12 * abs(expected)


def test_alpha_bars_strictly_decreasing():
    s = linear_beta_schedule(300)
    assert np.all(np.diff(s.alpha_bars) < 0)


@pytest.mark.parametrize("T,start,end", [(0, 0.1, 0.2), (5, 0.0, 0.2), (5, 0.2, 0.1),
                                         (5, 0.1, 1.0), (1, 0.1, 0.2)])
def test_invalid_schedules_rejected(T, start, end):
    with pytest.raises(ValueError):
        linear_beta_schedule(T, start, end)


def test_plan_identity():
    s = linear_beta_schedule(1000)
    plan = make_plan(s, 1000)
    assert plan.steps == tuple(range(1000, 0, -1))


def test_plan_25_of_1000():
    s = linear_beta_schedule(1000)
    plan = make_plan(s, 25)
    assert len(plan.steps) == 25
    assert plan.steps[0] == 1000
    assert all(1 <= t <= 1000 for t in plan.steps)
    assert len(set(plan.steps)) == 25


def test_plan_even_spacing_T10():
    s = linear_beta_schedule(10, 0.01, 0.02)
    assert make_plan(s, 5).steps == (10, 8, 6, 4, 2)


def test_plan_transitions_end_at_zero():
    s = linear_beta_schedule(10, 0.01, 0.02)
    transitions = list(make_plan(s, 3).transitions())
    assert transitions[-1][1] == 0
    for t, t_prev in transitions:
        assert t > t_prev


def test_plan_counts_rejected():
    s = linear_beta_schedule(10, 0.01, 0.02)
    for bad in (0, 11, -3):
        with pytest.raises(ValueError):
            make_plan(s, bad)


def test_plan_strictly_decreasing_many_counts():
    s = linear_beta_schedule(997, 1e-4, 0.02)
    for n in (1, 2, 3, 7, 25, 100, 996, 997):
        steps = make_plan(s, n).steps
        assert len(steps) == n
        assert steps[0] == 997
        assert all(a > b for a, b in zip(steps, steps[1:]))
        assert steps[-1] >= 1
