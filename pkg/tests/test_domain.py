import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from supershear.domain import (PhysicalParams, admissible_amplitude, build_grid, chi, constant_flow,
                               decay_weight, make_flow, quartic_flow, sine_flow, sound_speed,
                               tabulated_flow, validate_supersonic)
from supershear.errors import ConfigError, GridTooCoarse, SubsonicPoint


@pytest.mark.parametrize("a, gamma, rho_star, expected", [
    (1.0, 2.0, 1.0, math.sqrt(2.0)),
    (1.0, 1.4, 1.0, math.sqrt(1.4)),
    (0.5, 3.0, 2.0, math.sqrt(6.0)),
])
def test_sound_speed(a, gamma, rho_star, expected):
    assert sound_speed(PhysicalParams(a=a, gamma=gamma, rho_star=rho_star)) == pytest.approx(expected, rel=1e-14)


def test_sound_speed_values_to_five_digits():
    assert round(sound_speed(PhysicalParams(gamma=2.0)), 5) == 1.41421
    assert round(sound_speed(PhysicalParams(gamma=1.4)), 5) == 1.18322


def test_supersonic_margin_constant():
    rep = validate_supersonic(constant_flow(2.0), PhysicalParams(gamma=2.0, a=0.5))
    assert rep.passed and rep.min_margin == pytest.approx(3.0, abs=1e-12)


def test_supersonic_margin_sine():
    rep = validate_supersonic(sine_flow(2.0, 0.1), PhysicalParams(gamma=2.0, a=0.5))
    assert rep.min_margin == pytest.approx(1.9 ** 2 - 1.0, abs=1e-9)
    assert rep.x2_at_min == pytest.approx(1.5, abs=1e-3)


def test_subsonic_profile_rejected_with_margin():
    # c^2 = a gamma = 1.44
    with pytest.raises(SubsonicPoint) as info:
        validate_supersonic(constant_flow(1.0), PhysicalParams(gamma=1.44, a=1.0))
    assert info.value.margin == pytest.approx(-0.44, abs=1e-12)
    rec = info.value.to_record()
    assert rec["error"] == "subsonic" and rec["check"] == "validate_supersonic" and rec["margin"] == pytest.approx(-0.44)


@pytest.mark.parametrize("kw", [dict(gamma=1.0), dict(eps=0.0), dict(eps=1.5), dict(p=2.0),
                                dict(p=2.7), dict(sigma=0.0), dict(lambda_bulk=0.0)])
def test_params_rejected(kw):
    with pytest.raises(ConfigError):
        PhysicalParams(**kw)


def test_grid_resolves_thin_layer():
    g = build_grid(PhysicalParams(eps=0.01, L=0.1), 64, 128)
    assert float(np.min(np.diff(g.x2))) <= 0.025
    assert g.x2[0] == 0.0 and g.x2[-1] == 2.0 and g.L == pytest.approx(0.1)
    assert np.allclose(g.x2, 2.0 - g.x2[::-1], atol=1e-14)


def test_grid_too_few_cells():
    with pytest.raises(GridTooCoarse):
        build_grid(PhysicalParams(), 4, 128)


def test_uniform_grid_cannot_resolve_layer():
    with pytest.raises(GridTooCoarse):
        build_grid(PhysicalParams(eps=1e-4), 64, 16, grading="uniform")


def test_grid_weights_integrate_area():
    g = build_grid(PhysicalParams(), 16, 32)
    assert float(np.sum(g.weights())) == pytest.approx(2.0 * g.L, rel=1e-14)


def test_cutoffs():
    t = np.linspace(0.0, 1.5, 301)
    c = chi(t)
    assert np.all(c[t <= 0.75] == 1.0) and np.all(c[t >= 1.0] == 0.0)
    assert np.all(np.diff(c) <= 1e-15)
    Y = np.linspace(0.0, 6.0, 601)
    w = decay_weight(Y)
    assert np.all(w[Y <= 3.0] == 0.0) and np.all(w[Y >= 4.0] == 1.0)


def test_make_flow_kinds():
    assert make_flow("couette", V0=2.0, V1=3.0).mu(1.0) == pytest.approx(2.5)
    assert make_flow("constant", V=2.0).mu(0.3, 1) == 0.0
    x = np.linspace(0.0, 2.0, 9)
    tab = make_flow("tabulated", x2=list(x), mu=list(2.0 + 0.1 * x))
    assert tab.mu(0.5) == pytest.approx(2.05, abs=1e-12)
    with pytest.raises(ConfigError):
        make_flow("unknown")


def test_tabulated_flow_needs_samples():
    with pytest.raises((ConfigError, ValueError)):
        tabulated_flow([0.0, 1.0, 2.0], [2.0, 2.1, 2.2])


def test_admissible_amplitude():
    p = PhysicalParams(eps=0.1, p=2.5, sigma=0.05)
    assert admissible_amplitude(p, 2.0) == pytest.approx(2.0 * 0.1 ** (2.5 - 0.8 + 0.05), rel=1e-14)


@settings(max_examples=40, deadline=None)
@given(V0=st.floats(0.5, 3.0), V1=st.floats(0.5, 3.0), kappa=st.floats(-0.5, 0.5),
       eps=st.sampled_from([0.2, 0.1, 0.05]))
def test_accepted_profiles_are_supersonic_at_nodes(V0, V1, kappa, eps):
    params = PhysicalParams(eps=eps)
    flow = quartic_flow(V0, V1, kappa, 0.0)
    try:
        validate_supersonic(flow, params)
    except SubsonicPoint:
        return
    g = build_grid(params, 16, 64)
    assert np.all(flow.mu(g.x2) ** 2 - params.c ** 2 > 0)
