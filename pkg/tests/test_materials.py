import math

import pytest
from hypothesis import given, strategies as st

from softlev.materials import (CONSTANTS, NB, YBCO, YIG, Regime, SuperconductorMaterial,
                               classify_regime, critical_field, critical_temperature_for_field,
                               ferromagnet_from_dict, magnetization, vortex_lattice)


def test_constants_positive_and_flux_quantum():
    for name in ("mu0", "kB", "R", "NA", "Phi0", "g"):
        assert getattr(CONSTANTS, name) > 0
    assert f"{CONSTANTS.Phi0:.4g}" == "2.068e-15"


def test_magnetization_examples():
    assert magnetization(YIG, 0.0) == 0.0
    # hand value: 0.1 * 31 / (mu0 * 32)
    assert magnetization(YIG, 0.1) == pytest.approx(0.1 * 31 / (4e-7 * math.pi * 32), rel=1e-12)
    assert magnetization(YIG, 0.1) == pytest.approx(7.71e4, rel=1e-3)
    assert magnetization(YIG, 1.0) == 1.96e5


def test_magnetization_rejects_negative_field():
    with pytest.raises(ValueError):
        magnetization(YIG, -1e-3)


def test_magnetization_continuous_at_crossover():
    Bc = YIG.B_cross
    assert Bc == pytest.approx(0.254, abs=1e-3)
    below = Bc * (YIG.mu_r - 1) / (CONSTANTS.mu0 * YIG.mu_r)
    assert below == pytest.approx(YIG.M_sat, rel=1e-12)
    assert magnetization(YIG, Bc) == YIG.M_sat


@given(st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_magnetization_monotone(b1, b2):
    lo, hi = sorted((b1, b2))
    assert magnetization(YIG, lo) <= magnetization(YIG, hi) <= YIG.M_sat


def test_critical_field_endpoints():
    assert critical_field(NB, "Hc1", 0.0) == NB.Hc1_0
    assert critical_field(NB, "Hc1", NB.Tc) == 0.0
    with pytest.raises(ValueError):
        critical_field(NB, "Hc1", NB.Tc + 0.1)


def test_nb_temperature_for_100mT():
    # inverse parabolic law, hand value 9.25 * sqrt(1 - 0.1/0.18)
    T = critical_temperature_for_field(NB, "Hc1", 0.1)
    assert T == pytest.approx(9.25 * math.sqrt(1 - 0.1 / 0.18), rel=1e-12)
    assert T == pytest.approx(6.2, abs=0.05)
    assert critical_field(NB, "Hc1", T) == pytest.approx(0.1, rel=1e-12)


@given(st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_critical_field_strictly_decreasing(t1, t2):
    if t1 == t2:
        return
    lo, hi = sorted((t1, t2))
    assert critical_field(NB, "Hvs", lo * NB.Tc) > critical_field(NB, "Hvs", hi * NB.Tc)


def test_classify_examples():
    r = classify_regime(NB, 0.0, 0.0)
    assert r.regime is Regime.MEISSNER and r.usable
    r = classify_regime(YBCO, 1.0, 4.0)
    assert r.regime is Regime.VORTEX_SOLID and r.usable
    B = 0.5 * (critical_field(NB, "Hc1", 4.0) + critical_field(NB, "Hvs", 4.0))
    r = classify_regime(NB, B, 4.0)
    assert r.regime is Regime.VORTEX_SOLID and not r.usable
    assert classify_regime(NB, 0.0, NB.Tc).regime is Regime.NORMAL
    assert classify_regime(NB, 0.1, 4.0).regime is Regime.MEISSNER


@given(st.floats(0.0, 9.0))
def test_classify_flips_across_hc1(T):
    hc1 = critical_field(NB, "Hc1", T)
    if hc1 < 1e-6:
        return
    assert classify_regime(NB, hc1 - 1e-9, T).regime is Regime.MEISSNER
    assert classify_regime(NB, hc1 + 1e-9, T).regime is Regime.VORTEX_SOLID


def test_vortex_lattice_examples():
    sc = SuperconductorMaterial("test", Tc=90, Hc1_0=0.1, Hvs_0=100, lambda_L0=1e-7, xi=1e-9,
                                sigma_n=1)
    vl = vortex_lattice(sc, 1.0)
    assert f"{vl.spacing * 1e9:.3g}" == "48.9"
    assert f"{vl.normal_fraction:.3g}" == "0.00152"
    assert vortex_lattice(sc, 0.1).spacing == pytest.approx(155e-9, rel=5e-3)
    with pytest.raises(ValueError):
        vortex_lattice(sc, 0.0)


@given(st.floats(1e-3, 10.0))
def test_vortex_fraction_linear_in_field(B):
    a = vortex_lattice(YBCO, B).normal_fraction
    b = vortex_lattice(YBCO, 2 * B).normal_fraction
    assert b == pytest.approx(2 * a, rel=1e-12)


def test_vortex_fraction_vanishes_with_core_size():
    import dataclasses
    tiny = dataclasses.replace(YBCO, xi=1e-15)
    assert vortex_lattice(tiny, 1.0).normal_fraction < 1e-12


def test_vortex_model_breakdown_flag():
    import dataclasses
    fat = dataclasses.replace(YBCO, xi=1e-6)
    assert not vortex_lattice(fat, 10.0).valid


def test_records_from_dict():
    fm = ferromagnet_from_dict({"name": "YIG", "mu_r": 20.0})
    assert fm.mu_r == 20.0 and fm.rho == YIG.rho
    with pytest.raises(ValueError):
        ferromagnet_from_dict({"name": "custom", "rho": 1.0, "mu_r": 0.5, "M_sat": 1.0})
