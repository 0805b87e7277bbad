import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pneunet_topopt import MMA, NumericalError


def test_unconstrained_quadratic():
    mma = MMA(1, 0, xmin=0.0, xmax=1.0, move=0.1)
    x = np.array([0.2])
    for _ in range(30):
        x = mma.update(x, float((x[0] - 0.5) ** 2), 2 * (x - 0.5))
    assert abs(x[0] - 0.5) <= 1e-4


def test_linear_program_reaches_facet():
    # min x1 + x2  s.t.  1 - x1 - x2 <= 0, from (1, 1)
    mma = MMA(2, 1, xmin=0.0, xmax=1.0, move=0.1)
    x = np.array([1.0, 1.0])
    for _ in range(60):
        x = mma.update(x, x.sum(), np.ones(2), np.array([1 - x.sum()]), -np.ones((1, 2)))
    assert x.sum() == pytest.approx(1.0, abs=1e-6)
    kkt = mma.kkt_residual(x, np.ones(2), np.array([1 - x.sum()]), -np.ones((1, 2)))
    assert kkt <= 1e-6


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_move_limit_and_box(seed):
    rng = np.random.default_rng(seed)
    n = 8
    mma = MMA(n, 2, xmin=0.0, xmax=1.0, move=0.1)
    x = rng.random(n)
    for _ in range(4):
        g0 = rng.standard_normal(n)
        xn = mma.update(x, 0.0, g0, rng.standard_normal(2), rng.standard_normal((2, n)))
        assert np.max(np.abs(xn - x)) <= 0.1 + 1e-12
        assert np.all(xn >= 0.0) and np.all(xn <= 1.0)
        st_ = mma.state
        assert np.all(st_.low < x) and np.all(x < st_.upp)
        assert st_.subproblem_residual <= 1e-8
        x = xn


def test_bound_formulation_picks_the_max():
    # min max(f1, f2) with f1 = (x-0.2)^2, f2 = (x-0.8)^2 -> x = 0.5
    mma = MMA(1, 2, xmin=0.0, xmax=1.0, move=0.1, a0=1.0, a=np.ones(2), c=np.full(2, 1000.0), d=np.ones(2))
    x = np.array([0.05])
    for _ in range(60):
        f = np.array([(x[0] - 0.2) ** 2, (x[0] - 0.8) ** 2])
        df = np.array([[2 * (x[0] - 0.2)], [2 * (x[0] - 0.8)]])
        x = mma.update(x, 0.0, np.zeros(1), f, df)
    assert x[0] == pytest.approx(0.5, abs=1e-4)


def test_non_finite_rejected():
    mma = MMA(2, 0)
    with pytest.raises(NumericalError):
        mma.update(np.array([0.5, 0.5]), 0.0, np.array([np.nan, 0.0]))
