import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from contime.metrics import (
    MetricError,
    MetricReport,
    cost_matrix,
    dtw,
    dtw_cost_batch,
    evaluate,
    penalty_matrix,
    soft_dtw,
    tdi,
)


def all_paths(P, Q):
    """Every monotone, contiguous path from (0, 0) to (P-1, Q-1)."""
    def extend(path):
        i, j = path[-1]
        if (i, j) == (P - 1, Q - 1):
            yield path
            return
        for di, dj in ((1, 1), (1, 0), (0, 1)):
            if i + di < P and j + dj < Q:
                yield from extend(path + [(i + di, j + dj)])

    yield from extend([(0, 0)])


def brute_force_dtw(a, b):
    delta = cost_matrix(a, b)
    best = np.inf
    for path in all_paths(len(a), len(b)):
        # accumulate in path order, as the recursion does
        total = 0.0
        for i, j in path:
            total = total + delta[i, j]
        best = min(best, total)
    return best


def test_two_by_two_example():
    cost, path = dtw([0.0, 0.0], [1.0, 1.0])
    assert cost == 2.0
    assert path.steps == [(0, 0), (1, 1)]


def test_identical_sequences():
    a = np.random.default_rng(0).normal(size=7)
    cost, path = dtw(a, a)
    assert cost == 0.0
    np.testing.assert_array_equal(path.matrix, np.eye(7))
    assert tdi(a, a) == 0.0


def test_dp_matches_enumeration_exactly():
    rng = np.random.default_rng(1)
    for _ in range(200):
        P = int(rng.integers(1, 7))
        a, b = rng.normal(size=P), rng.normal(size=P)
        assert dtw(a, b)[0] == brute_force_dtw(a, b)


def test_path_is_valid_and_optimal():
    rng = np.random.default_rng(2)
    for _ in range(50):
        a, b = rng.normal(size=6), rng.normal(size=6)
        cost, path = dtw(a, b)
        steps = path.steps
        assert steps[0] == (0, 0) and steps[-1] == (5, 5)
        for (i, j), (k, l) in zip(steps, steps[1:]):
            assert (k - i, l - j) in ((1, 0), (0, 1), (1, 1))
        assert np.sum(path.matrix * cost_matrix(a, b)) == pytest.approx(cost, rel=1e-12, abs=1e-15)
        assert path.matrix.sum() == len(steps)


def test_ties_prefer_diagonal():
    _, path = dtw([0.0, 0.0, 0.0], [0.0, 0.0, 0.0])
    assert path.steps == [(0, 0), (1, 1), (2, 2)]


def test_penalty_matrix():
    np.testing.assert_array_equal(penalty_matrix(2), [[0.0, 0.25], [0.25, 0.0]])
    for P in (1, 5, 12):
        om = penalty_matrix(P)
        np.testing.assert_array_equal(om, om.T)
        np.testing.assert_array_equal(np.diag(om), 0.0)
        assert om.max() == pytest.approx((P - 1) ** 2 / P**2)


def test_shifted_ramp_has_positive_delay():
    a = np.arange(8.0)
    b = np.concatenate([[0.0], a[:-1]])
    assert tdi(a, b) > tdi(a, a) == 0.0


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(-1e3, 1e3)))
def test_tdi_of_self_is_zero(a):
    assert tdi(a, a) == 0.0


@pytest.mark.parametrize("gamma", [1e-3, 0.1, 1.0])
def test_soft_is_below_hard(gamma):
    rng = np.random.default_rng(3)
    for _ in range(30):
        a, b = rng.normal(size=10), rng.normal(size=10)
        assert soft_dtw(a, b, gamma)[0] <= dtw(a, b)[0]


def test_soft_approaches_hard():
    rng = np.random.default_rng(4)
    for _ in range(30):
        a, b = rng.normal(size=10), rng.normal(size=10)
        assert abs(soft_dtw(a, b, 1e-3)[0] - dtw(a, b)[0]) < 1e-2


def test_soft_path_entries():
    rng = np.random.default_rng(5)
    a, b = rng.normal(size=6), rng.normal(size=6)
    for gamma in (1e-3, 0.1, 1.0, 10.0):
        _, E = soft_dtw(a, b, gamma)
        assert np.all(E >= 0.0) and np.all(E <= 1.0 + 1e-12)
    _, E = soft_dtw(a, b, 1e-4)
    assert E[0, 0] == pytest.approx(1.0, abs=1e-9) and E[-1, -1] == pytest.approx(1.0, abs=1e-9)


def test_soft_path_is_gradient_of_value():
    rng = np.random.default_rng(6)
    a, b = rng.normal(size=5), rng.normal(size=5)
    _, E = soft_dtw(a, b, 0.5)
    # d value / d a_h = sum_j E[h, j] * 2 (a_h - b_j)
    analytic = np.sum(E * 2 * (a[:, None] - b[None, :]), axis=1)
    fd = np.zeros(5)
    for h in range(5):
        ap, am = a.copy(), a.copy()
        ap[h] += 1e-6
        am[h] -= 1e-6
        fd[h] = (soft_dtw(ap, b, 0.5)[0] - soft_dtw(am, b, 0.5)[0]) / 2e-6
    np.testing.assert_allclose(analytic, fd, rtol=1e-6, atol=1e-9)


def test_soft_errors():
    with pytest.raises(MetricError):
        soft_dtw([1.0, 2.0], [1.0, 2.0], 0.0)
    with pytest.raises(MetricError):
        dtw([], [])
    with pytest.raises(MetricError):
        dtw([1.0, 2.0], [1.0])


def test_batched_costs_match_single():
    rng = np.random.default_rng(7)
    a, b = rng.normal(size=(4, 3, 6)), rng.normal(size=(4, 3, 6))
    batch = dtw_cost_batch(a, b)
    for i in range(4):
        for f in range(3):
            assert batch[i, f] == dtw(a[i, f], b[i, f])[0]


def test_perfect_forecast_scores_zero():
    y = np.random.default_rng(8).normal(size=(5, 6, 2))
    rep = evaluate(y, y.copy())
    assert rep.mean("mse") == rep.mean("dtw") == rep.mean("tdi") == 0.0


def test_identical_runs_have_zero_spread():
    rng = np.random.default_rng(9)
    pred, truth = rng.normal(size=(5, 6, 2)), rng.normal(size=(5, 6, 2))
    rep = evaluate([pred, pred], [truth, truth], seeds=[0, 1])
    for m in ("mse", "dtw", "tdi"):
        assert rep.per_metric[m]["std"] == 0.0


def test_channels_averaged_and_mse_joint():
    rng = np.random.default_rng(10)
    pred, truth = rng.normal(size=(3, 5, 2)), rng.normal(size=(3, 5, 2))
    rep = evaluate(pred, truth)
    dtws = [dtw(pred[n, :, f], truth[n, :, f])[0] for n in range(3) for f in range(2)]
    tdis = [tdi(pred[n, :, f], truth[n, :, f]) for n in range(3) for f in range(2)]
    assert rep.mean("dtw") == pytest.approx(np.mean(dtws), rel=1e-12)
    assert rep.mean("tdi") == pytest.approx(np.mean(tdis), rel=1e-12)
    assert rep.mean("mse") == pytest.approx(np.mean((pred - truth) ** 2), rel=1e-12)


def test_report_json_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    rep = evaluate(rng.normal(size=(4, 3, 1)), rng.normal(size=(4, 3, 1)), dataset="demo", seeds=[5], keep_samples=True)
    rep.save(tmp_path / "r.json")
    back = MetricReport.load(tmp_path / "r.json")
    assert back == rep
    assert set(back.to_json()) == {"dataset", "P", "seeds", "per_metric", "per_sample"}
    assert back.P == 3 and len(back.per_sample["tdi"]) == 4


def test_evaluate_shape_mismatch():
    with pytest.raises(MetricError):
        evaluate(np.zeros((2, 3, 1)), np.zeros((2, 4, 1)))
