import math

import numpy as np
import pytest
from hypothesis import given
import hypothesis.strategies as st

from aggregation1d import (
    PRESETS,
    ConfigurationError,
    CriticalPoint,
    DiffusionModel,
    FluxModel,
    InitialDatum,
    load_problem,
    phi_minus,
    phi_plus,
    preset,
)
from aggregation1d.model import cosine, polynomial, power, problem_from_dict

from oracles import phi_minus_quad, phi_plus_quad


@pytest.mark.parametrize("name", PRESETS)
def test_splitting_matches_quadrature(name):
    spec = preset(name)
    for v in np.linspace(0.0, spec.c0, 23):
        assert phi_plus(spec.flux, v) == pytest.approx(phi_plus_quad(spec.flux, v), abs=1e-10)
        assert phi_minus(spec.flux, v) == pytest.approx(phi_minus_quad(spec.flux, v), abs=1e-10)


@pytest.mark.parametrize("name", PRESETS)
def test_splitting_identity_on_random_samples(name):
    spec = preset(name)
    v = np.random.default_rng(7).uniform(0.0, spec.c0, 1000)
    lhs = phi_plus(spec.flux, v) + phi_minus(spec.flux, v)
    rhs = spec.flux.phi(v) - spec.flux.phi(0.0)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * (1 + np.max(np.abs(rhs)))


@pytest.mark.parametrize("name", PRESETS)
def test_splitting_monotone(name):
    spec = preset(name)
    v = np.linspace(0.0, spec.c0, 5001)
    assert np.all(np.diff(phi_plus(spec.flux, v)) >= -1e-14)
    assert np.all(np.diff(phi_minus(spec.flux, v)) <= 1e-14)


def test_ex1_values(ex1):
    assert ex1.flux.phi(0.0) == -1.0
    assert ex1.flux.max_speed() == pytest.approx(2.0)
    assert phi_plus(ex1.flux, 1.0) == pytest.approx(1.0)
    assert phi_minus(ex1.flux, 2.0) == pytest.approx(-1.0)
    assert phi_minus(ex1.flux, 0.5) == 0.0
    assert ex1.flux.single_maximum and ex1.flux.v_star == pytest.approx(1.0)
    assert ex1.c0 == pytest.approx(2.0, rel=1e-15)


def test_preset_speeds_and_diffusion():
    assert preset("ex2").flux.max_speed() == pytest.approx(8.0)
    assert preset("ex4").flux.max_speed() == pytest.approx(math.pi / 2, rel=1e-7)
    assert preset("ex5").flux.max_speed() == pytest.approx(9.0)
    assert preset("ex6").flux.max_speed() == pytest.approx(math.pi, rel=1e-7)
    assert preset("ex1").diffusion.a_max == pytest.approx(0.1)
    assert preset("ex3").diffusion.a_max == pytest.approx(0.05)
    assert preset("ex3").diffusion.flat_intervals == [(5.0, 10.0)]
    assert preset("ex4").c0 == pytest.approx(5.5)
    assert phi_minus(preset("ex4").flux, 2.0) == pytest.approx(-1.0)


def test_ex2_flux_is_continuous_at_the_break():
    f = preset("ex2").flux
    assert f.phi(1.0 - 1e-12) == pytest.approx(f.phi(1.0), abs=1e-10)
    assert f.phi_prime(1.0 - 1e-9) == pytest.approx(f.phi_prime(1.0 + 1e-9), abs=1e-7)


def test_unknown_preset():
    with pytest.raises(KeyError):
        preset("ex9")


def test_missing_critical_point_rejected():
    # Phi = -(v-1)^2 peaks at 1, which is not declared
    with pytest.raises(ConfigurationError):
        FluxModel((power(-1.0, 1.0, 2.0),), (), 2.0)


def test_wrong_critical_tag_rejected():
    with pytest.raises(ConfigurationError):
        FluxModel((power(-1.0, 1.0, 2.0),), (CriticalPoint(1.0, "min"),), 2.0)


def test_critical_point_outside_range_rejected():
    with pytest.raises(ConfigurationError):
        FluxModel((power(-1.0, 1.0, 2.0),), (CriticalPoint(1.0, "max"), CriticalPoint(3.0, "min")), 2.0)


def test_diffusion_validation():
    with pytest.raises(ConfigurationError):
        DiffusionModel(((0.0, 0.1), (1.0, 1.0)))
    with pytest.raises(ConfigurationError):
        DiffusionModel(((0.0, 0.0), (1.0, 1.0), (2.0, 0.5)))
    d = DiffusionModel(((0.0, 0.0), (10.0, 0.0), (11.0, 0.1)))
    assert d.A(10.5) == pytest.approx(0.05)
    assert d.A(20.0) == pytest.approx(1.0)
    assert d.a(5.0) == 0.0 and d.a(12.0) == pytest.approx(0.1)
    assert d.is_flat_on(0.0, 10.0) and not d.is_flat_on(5.0, 12.0)


def test_initial_datum_validation():
    with pytest.raises(ConfigurationError):
        InitialDatum(((0.0, 1.0, 1.0), (0.5, 1.5, 1.0)))
    with pytest.raises(ConfigurationError):
        InitialDatum(((0.0, 1.0, -1.0),))
    d = InitialDatum(((0.1, 0.2, 5.0), (0.6, 0.7, 8.0), (0.8, 0.9, 7.0)))
    assert d.total_mass == pytest.approx(2.0)
    assert d.support == (0.1, 0.9)
    assert d(0.15) == 5.0 and d(0.5) == 0.0


def test_mass_mismatch_rejected(ex1):
    from aggregation1d import ProblemSpec

    flux = FluxModel((power(-1.0, 1.5, 2.0),), (CriticalPoint(1.5, "max"),), 3.0)
    with pytest.raises(ConfigurationError):
        ProblemSpec(flux, ex1.diffusion, ex1.initial)


CONFIG = """
name = "bump"

[flux]
type = "quadratic"
k = 1.0

[diffusion]
breakpoints = [[0.0, 0.0], [10.0, 0.0], [11.0, 0.1]]

[initial]
pieces = [[0.1, 0.2, 5.0], [0.6, 0.7, 8.0], [0.8, 0.9, 7.0]]
"""


def test_quadratic_config_matches_ex1(tmp_path, ex1):
    path = tmp_path / "bump.toml"
    path.write_text(CONFIG)
    spec = load_problem(path)
    assert spec.name == "bump"
    v = np.linspace(0, spec.c0, 101)
    # -v (v - C0) differs from -(v-1)^2 by the constant 1 when C0 = 2
    assert np.allclose(spec.flux.phi(v) - 1.0, ex1.flux.phi(v), atol=1e-12)
    assert np.allclose(phi_plus(spec.flux, v), phi_plus(ex1.flux, v), atol=1e-12)


def test_cosine_config_critical_points():
    cfg = {
        "flux": {"type": "cosine", "amplitude": -0.5, "frequency": 2 * math.pi, "offset": -0.5},
        "diffusion": {"breakpoints": [[0.0, 0.0], [10.0, 0.0], [11.0, 0.1]]},
        "initial": {"pieces": [[0.1, 0.2, 5.0], [0.6, 0.7, 8.0], [0.8, 0.9, 7.0]]},
    }
    spec = problem_from_dict(cfg)
    assert [c.kind for c in spec.flux.critical_points] == ["min", "max", "min", "max", "min"]
    ref = preset("ex6")
    v = np.linspace(0, 2, 57)
    assert np.allclose(phi_minus(spec.flux, v), phi_minus(ref.flux, v), atol=1e-12)


def test_piecewise_config_requires_critical_points():
    cfg = {
        "flux": {"type": "piecewise", "pieces": [{"kind": "power", "coef": -1, "shift": 1, "exponent": 2}]},
        "diffusion": {"breakpoints": [[0.0, 0.0], [1.0, 0.0]]},
        "initial": {"pieces": [[0.0, 1.0, 2.0]]},
    }
    with pytest.raises(ConfigurationError):
        problem_from_dict(cfg)
    cfg["flux"]["critical_points"] = [[1.0, "max"]]
    assert problem_from_dict(cfg).flux.v_star == pytest.approx(1.0)


def test_bad_config_file(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[flux\n")
    with pytest.raises(ConfigurationError):
        load_problem(path)
    with pytest.raises(ConfigurationError):
        load_problem(tmp_path / "missing.toml")


@given(
    st.floats(0.2, 3.0),
    st.floats(0.1, 0.9),
)
def test_quadratic_split_closed_form(c0, frac):
    # Phi = -k v (v - C0): Phi_+ rises to its peak at C0/2, Phi_- falls after it
    flux = FluxModel((polynomial((0.0, c0, -1.0)),), (CriticalPoint(c0 / 2, "max"),), c0)
    v = frac * c0
    peak = c0 * c0 / 4
    exp_plus = min(v * (c0 - v), peak) if v <= c0 / 2 else peak
    exp_minus = 0.0 if v <= c0 / 2 else v * (c0 - v) - peak
    assert phi_plus(flux, v) == pytest.approx(exp_plus, abs=1e-12)
    assert phi_minus(flux, v) == pytest.approx(exp_minus, abs=1e-12)


@given(st.floats(-1.0, 4.0))
def test_split_clamps_outside_range(v):
    flux = preset("ex1").flux
    w = min(max(v, 0.0), flux.c0)
    assert phi_plus(flux, v) == phi_plus(flux, w)
    assert phi_minus(flux, v) == phi_minus(flux, w)


def test_cosine_piece_values():
    f = FluxModel((cosine(-0.5, math.pi, -0.5),), (CriticalPoint(0.0, "min"), CriticalPoint(1.0, "max")), 1.5)
    assert f.phi(1.0) == pytest.approx(0.0)
    assert f.phi_prime(0.5) == pytest.approx(math.pi / 2)
