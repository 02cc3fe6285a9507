import dataclasses
import math
import warnings

import numpy as np
import pytest
import scipy.constants as sc_const
from hypothesis import given, strategies as st
from scipy.integrate import dblquad, quad

from softlev.dissipation import (ConductorBody, ModelValidityWarning, combine, conductor_mesh,
                                 eddy_cycle_loss, gas_squeezed_q, gas_vacuum_q, q_eddy_conductor,
                                 q_eddy_from_moment, q_eddy_mixed_state, skin_depth,
                                 squeeze_gap_factor)
from softlev.scenario import load_scenario

from conftest import CONFIG_DIR

RHO = 5172.0
A_1MM = 0.5e-3
T4 = 4.0
P = 1e-5


def hand_vacuum_q(rho, a, f, P, T, M=28.966e-3):
    m_g = M / sc_const.Avogadro
    v = math.sqrt(3 * sc_const.k * T / m_g)
    return math.pi * rho / 6 * v * a * 2 * math.pi * f / P


def hand_squeezed_q(rho, a, r, f, P, T, M=28.966e-3):
    v = math.sqrt(sc_const.R * T / M)
    return 16 * rho / 3 * v * a * a * (r - a) / (r * r + 2 / 3 * a * a - math.pi / 2 * a * r) \
        * 2 * math.pi * f / P


def test_vacuum_gas_hand_value():
    q = gas_vacuum_q(RHO, A_1MM, 2 * math.pi * 226, P, T4)
    assert q == pytest.approx(hand_vacuum_q(RHO, A_1MM, 226, P, T4), rel=1e-6)
    assert f"{q:.1e}" == "1.1e+10"


def test_squeezed_gas_hand_value():
    q = gas_squeezed_q(RHO, A_1MM, 1.4 * A_1MM, 2 * math.pi * 1.7 * 226, P, T4)
    assert q == pytest.approx(hand_squeezed_q(RHO, A_1MM, 1.4 * A_1MM, 1.7 * 226, P, T4), rel=1e-6)
    assert f"{q:.1e}" == "1.1e+11"


@given(st.floats(1e-7, 1e-2), st.floats(1e-6, 1e-1))
def test_gas_scalings(a, p):
    w = 2 * math.pi * 300
    assert gas_vacuum_q(RHO, a, w, p / 10, T4) == pytest.approx(10 * gas_vacuum_q(RHO, a, w, p, T4))
    assert gas_vacuum_q(RHO, 2 * a, w, p, T4) == pytest.approx(2 * gas_vacuum_q(RHO, a, w, p, T4))


def test_squeezed_vanishes_as_gap_closes():
    w = 2 * math.pi * 300
    qs = [gas_squeezed_q(RHO, 1e-3, (1 + e) * 1e-3, w, P, T4) for e in (1e-1, 1e-2, 1e-3, 1e-4)]
    assert np.all(np.diff(qs) < 0) and qs[-1] < 1e-2 * qs[0]


def test_gas_input_validation():
    with pytest.raises(ValueError):
        gas_vacuum_q(RHO, 1e-3, 1.0, 0.0, T4)
    with pytest.raises(ValueError):
        squeeze_gap_factor(1e-3, 1e-3)


@given(st.floats(1e-6, 1e-2), st.floats(1.001, 10.0))
def test_gap_factor_matches_numeric_average(a, ratio):
    r = ratio * a
    num, _ = quad(lambda z: (r - math.sqrt(a * a - z * z)) ** 2, -a, a, epsabs=0, epsrel=1e-13)
    assert squeeze_gap_factor(a, r) == pytest.approx(num / (2 * a), rel=1e-10)


def test_combine_examples():
    assert combine([("a", 7.0)]).Q_total == pytest.approx(7.0)
    assert combine([("a", 5.0), ("b", 5.0)]).Q_total == pytest.approx(2.5)
    assert combine([("a", 1e8), ("b", 1e12)]).Q_total == pytest.approx(1e8, rel=1e-4)
    with pytest.raises(ValueError):
        combine([])
    with pytest.raises(ValueError):
        combine([("a", 0.0)])


@given(st.lists(st.floats(1.0, 1e15), min_size=1, max_size=6))
def test_combined_q_below_every_entry(qs):
    budget = combine([(str(i), q) for i, q in enumerate(qs)])
    assert budget.Q_total <= min(qs) * (1 + 1e-12)
    assert 1 / budget.Q_total == pytest.approx(sum(1 / q for q in qs), rel=1e-12)
    assert budget.rows()[-1][0] == "total"


def test_mixed_state_scaling():
    assert q_eddy_mixed_state(400.0, 1.0) == 400.0
    assert q_eddy_mixed_state(400.0, 0.5e-3) == pytest.approx(2 * q_eddy_mixed_state(400.0, 1e-3))
    for bad in (0.0, 1.5):
        with pytest.raises(ValueError):
            q_eddy_mixed_state(400.0, bad)


def test_conductor_validation():
    with pytest.raises(ValueError):
        ConductorBody(sigma=-1.0, radius=1e-2, thickness=1e-3)
    with pytest.raises(ValueError):
        ConductorBody(sigma=1.0, radius=1e-2, thickness=1e-3, bore=3e-2)
    with pytest.raises(ValueError):
        ConductorBody(sigma=1.0, radius=1e-2, thickness=1e-3, placement="beside")


EDDY = dict(m_dip=1e-4, mass=2.7e-6, omega=2 * math.pi * 226.0, disk_height=2e-3)


def test_insulator_has_no_eddy_loss():
    body = ConductorBody(sigma=0.0, radius=2e-2, thickness=2e-3, d_pl=1e-4)
    assert q_eddy_from_moment(amplitude=1e-6, body=body, **EDDY) == math.inf


def test_eddy_amplitude_independent():
    body = ConductorBody(sigma=5.8e7, radius=2e-2, thickness=2e-4, d_pl=1e-4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ModelValidityWarning)
        q1 = q_eddy_from_moment(amplitude=1e-7, body=body, **EDDY)
        q2 = q_eddy_from_moment(amplitude=2e-7, body=body, **EDDY)
    assert q2 == pytest.approx(q1, rel=1e-3)


def test_eddy_q_grows_with_distance():
    qs = []
    for d in (1e-4, 1e-3, 1e-2):
        body = ConductorBody(sigma=5.8e7, radius=2e-2, thickness=2e-4, d_pl=d)
        qs.append(q_eddy_from_moment(amplitude=1e-7, body=body, **EDDY))
    assert np.all(np.diff(qs) > 0)


def test_skin_depth_warning():
    body = ConductorBody(sigma=5.998e8, radius=2e-2, thickness=2e-3, d_pl=1e-4)
    assert skin_depth(EDDY["omega"], body.sigma) < body.thickness
    with pytest.warns(ModelValidityWarning, match="quasi-static first-order model out of validity"):
        q_eddy_from_moment(amplitude=1e-7, body=body, **EDDY)


def test_eddy_loss_matches_thin_sheet_integral():
    """Cycle loss in a wide thin plate against a direct quadrature.

    For a z-dipole moving along z the induced field is azimuthal,
    E = v mu0 m / (4 pi) * 3 rho D / (rho^2 + D^2)^(5/2) at depth D, and the
    cycle average of v^2 over a period is pi A^2 omega.
    """
    m, w, amp = 1e-4, 2 * math.pi * 100.0, 1e-8
    h = 2e-3
    body = ConductorBody(sigma=1e6, radius=0.1, thickness=5e-4, d_pl=1e-3)
    D0 = h / 2 + body.d_pl

    def density(rho, D):
        e = sc_const.mu_0 * m / (4 * math.pi) * 3 * rho * D / (rho * rho + D * D) ** 2.5
        return e * e * 2 * math.pi * rho

    integral, _ = dblquad(density, D0, D0 + body.thickness, 0.0, body.radius, epsrel=1e-10)
    expected = body.sigma * integral * math.pi * amp * amp * w
    mesh = conductor_mesh(body, h, 128, 16, 16)
    got = eddy_cycle_loss(m, w, amp, mesh, body.sigma)
    assert got == pytest.approx(expected, rel=0.01)


def test_copper_plate_far_from_trap_is_negligible():
    """2a = 1 mm at 100 mT with the copper plate 10 mm below the disk: Q > 1e8."""
    sc = load_scenario(CONFIG_DIR / "budget_1mm.yaml")
    body = dataclasses.replace(sc.conductors[0], d_pl=10e-3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ModelValidityWarning)
        q = q_eddy_conductor(sc, body)
    assert q > 1e8
