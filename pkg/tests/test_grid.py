import numpy as np
import pytest
from hypothesis import given
import hypothesis.strategies as st
import hypothesis.extra.numpy as nph

from aggregation1d import (
    ConfigurationError,
    GridSpec,
    discretize_initial,
    initial_state,
    inverse_primitive,
    make_grid,
    preset,
    primitive,
)
from aggregation1d.grid import window_for


def test_grid_shape():
    g = GridSpec(0.1, -1.0, 1.0)
    assert g.J == 20
    assert g.nodes[0] == -1.0 and g.nodes[-1] == pytest.approx(1.0)
    assert g.centers[0] == pytest.approx(-0.95)
    assert g.cell_center(19) == pytest.approx(0.95)


@pytest.mark.parametrize("args", [(0.0, 0.0, 1.0), (-0.1, 0.0, 1.0), (0.3, 0.0, 1.0), (0.5, 0.0, 1.0)])
def test_grid_rejects_bad_spacing(args):
    with pytest.raises(ConfigurationError):
        GridSpec(*args)


def test_window_contains_padded_support(ex1):
    lo, hi = window_for(ex1, 0.25)
    assert lo <= 0.1 - 0.2 - 0.5 and hi >= 0.9 + 0.2 + 0.5
    g = make_grid(ex1, 0.01, 0.25)
    assert g.x_min <= lo + 1e-12 and g.x_max >= hi - 1e-12


def test_nested_grids_share_nodes(ex1):
    coarse = make_grid(ex1, 0.02, 0.25, align=0.02)
    fine = make_grid(ex1, 0.005, 0.25, align=0.02)
    offset = (coarse.x_min - fine.x_min) / fine.dx
    assert offset == pytest.approx(round(offset), abs=1e-9)


@pytest.mark.parametrize("dx", [0.05, 0.02, 0.01, 0.004])
def test_initial_mass_ex1(ex1, dx):
    g = make_grid(ex1, dx, 0.1)
    U = discretize_initial(ex1, g)
    assert g.dx * U.sum() == pytest.approx(2.0, rel=1e-13)
    assert U.max() == pytest.approx(8.0)


def test_initial_mass_ex4():
    spec = preset("ex4")
    g = make_grid(spec, 0.01, 0.1)
    assert g.dx * discretize_initial(spec, g).sum() == pytest.approx(5.5, rel=1e-13)


def test_cell_average_of_partial_overlap(ex1):
    # [0.1, 0.2] on cells of width 0.3 starting at a multiple of 0.3
    g = GridSpec(0.3, -0.9, 1.5)
    U = discretize_initial(ex1, g)
    j = int(np.searchsorted(g.nodes, 0.15)) - 1
    assert U[j] == pytest.approx(5.0 * 0.1 / 0.3)


def test_support_outside_window_rejected(ex1):
    with pytest.raises(ConfigurationError):
        discretize_initial(ex1, GridSpec(0.1, 0.5, 2.0))


def test_initial_state_boundaries(ex1):
    st0 = initial_state(ex1, make_grid(ex1, 0.01, 0.25))
    assert st0.V[0] == 0.0
    assert st0.V[-1] == pytest.approx(ex1.c0, rel=1e-10)
    assert st0.t == 0.0 and st0.n == 0


@given(nph.arrays(np.float64, st.integers(4, 60), elements=st.floats(0.0, 50.0)), st.sampled_from([0.001, 0.01, 0.1]))
def test_primitive_roundtrip(U, dx):
    g = GridSpec(dx, 0.0, dx * len(U))
    V = primitive(U, g)
    assert V[0] == 0.0 and len(V) == len(U) + 1
    assert np.all(np.diff(V) >= 0)
    back = inverse_primitive(V, g)
    assert np.allclose(back, U, rtol=0, atol=1e-12 * (1 + V[-1]) / dx)


@given(nph.arrays(np.float64, st.integers(5, 60), elements=st.floats(0.0, 10.0)))
def test_inverse_then_primitive_is_exact_on_grid_values(W):
    g = GridSpec(0.5, 0.0, 0.5 * (len(W) - 1)) if len(W) - 1 >= 4 else None
    V = np.concatenate([[0.0], np.cumsum(W[1:])])
    U = inverse_primitive(V, g)
    assert np.allclose(primitive(U, g), V, atol=1e-12 * (1 + V[-1]))
