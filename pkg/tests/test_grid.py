import numpy as np
import pytest
from hypothesis import given, strategies as st

from wnlab.grid import SampleGrid, TestFunction


def test_covering_reaches_stop():
    g = SampleGrid.covering(0.0, 1.0, 0.3)
    assert g.start == 0.0 and g.stop >= 1.0 and g.count == 5


@pytest.mark.parametrize("args", [(0, 0, 3), (0, -1, 3), (0, 0.1, 0), (np.nan, 0.1, 3)])
def test_invalid_grid(args):
    with pytest.raises(ValueError):
        SampleGrid(*args)


def test_index_of():
    g = SampleGrid(0.0, 0.25, 9)
    assert g.index_of(1.5) == 6
    with pytest.raises(ValueError):
        g.index_of(0.3)


@given(st.integers(2, 400), st.floats(0.001, 1.0))
def test_trapezoid_weights_sum(count, step):
    g = SampleGrid(0.0, step, count)
    assert g.trapezoid_weights().sum() == pytest.approx(step * (count - 1))


def test_subinterval_weights():
    g = SampleGrid(0.0, 0.1, 11)
    w = g.trapezoid_weights(0.2, 0.5)
    assert np.count_nonzero(w) == 4 and w.sum() == pytest.approx(0.3)


def test_function_norm_and_scaling():
    g = SampleGrid.covering(0, 1, 0.001)
    f = TestFunction(g, np.full(g.count, 2.0))
    assert f.norm2() == pytest.approx(4.0)
    assert (3 * f).norm2() == pytest.approx(36.0)


def test_function_validation():
    g = SampleGrid(0.0, 0.1, 3)
    with pytest.raises(ValueError):
        TestFunction(g, np.ones(2))
    with pytest.raises(ValueError):
        TestFunction(g, np.array([1.0, np.inf, 0.0]))
