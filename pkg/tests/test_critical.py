from __future__ import annotations

import cmath
import math

import numpy as np
import pytest

import critical
from contour import AnnulusSector, Disk, Square
from critical import (
    BoxOptions,
    Component,
    CriticalDatum,
    DecompositionReport,
    MassEstimate,
    critical_mass_estimate,
    critical_multiplicity,
    curve_evaluator,
    degree_decomposition,
    disconnectivity_certificate,
    generic_point,
    line_tangencies,
    mass_formula_check,
    region_contains_log,
    region_window,
    slice_count,
    truncation_radius,
    _isolate,
)
from henon import HenonMap, PushedBottcher, fundamental_level
from poly1d import count_ramification
from saddle import seed_saddle, unstable_series


@pytest.fixture
def degenerate_curve(degenerate_limit):
    return unstable_series(degenerate_limit, seed_saddle(degenerate_limit))


def test_region_window():
    lo, hi = region_window(Disk(30, 1))
    assert (lo, hi) == pytest.approx((math.log(29), math.log(31)))
    assert region_window(AnnulusSector(1.0, 2.0)) == (1.0, 2.0)
    with pytest.raises(ValueError):
        region_window(Disk(0, 1))


def test_region_contains_log():
    assert region_contains_log(Disk(30, 1), cmath.log(30.5))
    assert not region_contains_log(Disk(30, 1), cmath.log(28))
    assert region_contains_log(AnnulusSector(1.0, 2.0), complex(1.5, 0.2))
    assert not region_contains_log(AnnulusSector(1.0, 2.0), complex(2.5, 0.2))
    assert not region_contains_log(Disk(30, 1), complex(float("nan"), 0))


@pytest.mark.parametrize("region", [Disk(30, 1), Square(12 + 5j, 2.0), AnnulusSector(1.0, 2.0)])
def test_generic_point_is_inside(region):
    zeta = generic_point(region)
    assert region_contains_log(region, cmath.log(zeta))
    assert generic_point(region) == zeta


def test_critical_multiplicity_from_winding():
    def evaluate(t):
        t = np.asarray(t, dtype=complex)
        one = np.ones(t.shape)
        return PushedBottcher(one, 0 * t, (t - 1) ** 2 * (t + 3), one.astype(bool))

    assert critical_multiplicity(evaluate, 1.0, 0.1) == 2
    assert critical_multiplicity(evaluate, -3.0, 0.1) == 1
    assert critical_multiplicity(evaluate, 5.0, 0.1) == 0


def test_datum_json():
    c = CriticalDatum(0.5 + 1j, (2 + 0j, 1j), 1.25, 1, 3 - 4j)
    assert c.to_json() == {
        "t": [0.5, 1.0],
        "location": [[2.0, 0.0], [0.0, 1.0]],
        "green_value": 1.25,
        "multiplicity": 1,
        "fiber_value": [3.0, -4.0],
    }


def test_mass_formula_check_counts_unclipped_components():
    Q = Square(30, 1.0)
    report = DecompositionReport(
        Q.shrink(0.02),
        Q,
        5.0,
        (Component(2, 0.5), Component(1, 0.25), Component(3, 0.25, clipped=True)),
        0.25,
        0.75,
        4,
    )
    direct = MassEstimate(Q, 5.0, 0.3, 0.3, 3, 10, 6, 20)
    assert mass_formula_check(report, direct) == pytest.approx(0.05)
    with pytest.raises(ValueError, match="regions"):
        mass_formula_check(report, MassEstimate(Square(31, 1.0), 5.0, 0.3, 0.3, 3, 10, 6, 20))
    with pytest.raises(ValueError, match="truncation"):
        mass_formula_check(report, MassEstimate(Q, 6.0, 0.3, 0.3, 3, 10, 6, 20))


def test_mass_estimate_spread():
    m = MassEstimate(Disk(30, 1), 2.0, 0.5, 0.45, 1, 2, 9, 20)
    assert m.spread == pytest.approx(0.05)
    assert m.to_json()["slices_scaled"] == 20


def test_truncation_radius_on_degenerate_limit(degenerate_limit, degenerate_curve):
    level = 2.2 * fundamental_level(degenerate_limit)
    tr = truncation_radius(degenerate_limit, degenerate_curve, level)
    assert tr.admissible
    assert tr.rho >= tr.base_radius > 0
    ring = degenerate_curve.convergence_radius_estimate
    assert tr.base_radius >= ring / (2 * abs(degenerate_curve.multiplier)) * (1 - 1e-12)
    g = curve_evaluator(degenerate_curve)(tr.rho * np.exp(2j * np.pi * np.arange(256) / 256)).green
    assert float(g.min()) >= level
    assert set(tr.to_json()) == {"rho", "admissible", "min_green", "base_radius", "k"}


def test_degenerate_unstable_manifold_is_disconnected(degenerate_limit, degenerate_curve):
    tr = truncation_radius(degenerate_limit, degenerate_curve, fundamental_level(degenerate_limit))
    cert = disconnectivity_certificate(degenerate_limit, degenerate_curve, tr.rho * abs(degenerate_curve.multiplier))
    assert cert is not None
    assert cert.boundary_min_green > 0
    assert cert.interior_zero == 0


def test_slice_count_rejects_small_values(degenerate_limit, degenerate_curve):
    with pytest.raises(ValueError, match="escape radius"):
        slice_count(degenerate_limit, degenerate_curve, 0.5 * degenerate_limit.escape_radius, 10.0)


@pytest.mark.slow
def test_line_tangencies_match_ramification(degenerate_limit, p_escape):
    Q = Disk(30, 1)
    found = line_tangencies(degenerate_limit, 4, 0j, Q, 0.05)
    assert sum(t.multiplicity for t in found) == count_ramification(p_escape, Q.shrink(0.05), 4) == 4
    for t in found:
        assert t.projection == pytest.approx(30, abs=1e-6)
        assert t.location[1] == 0


def test_line_tangencies_reject_bad_input(degenerate_limit):
    with pytest.raises(ValueError, match="escape radius"):
        line_tangencies(degenerate_limit, 2, 2 * degenerate_limit.escape_radius, Disk(30, 1))
    with pytest.raises(ValueError, match="K"):
        line_tangencies(degenerate_limit, 2, 0j, Disk(3, 1))


def _cubic_field(t):
    t = np.asarray(t, dtype=complex)
    one = np.ones(t.shape)
    return PushedBottcher(5 * one, 0 * t, (t + 1.1) * t * (t - 0.3), one.astype(bool))


def test_isolation_finds_zeros_on_the_real_axis():
    zeros = _isolate(_cubic_field, 2.0, 1.0, 10.0, "critical", BoxOptions(), disk=False)
    assert [z.multiplicity for z in zeros] == [1, 1, 1]
    assert [z.t for z in zeros] == pytest.approx([-1.1, 0.0, 0.3], abs=1e-9)


def test_certificate_tries_other_centres(monkeypatch, degenerate_limit, degenerate_curve):
    # K⁺ is the real axis plus an isolated point at 0.5i
    def evaluate(t):
        t = np.asarray(t, dtype=complex)
        g = np.minimum(np.abs(t.imag), np.abs(t - 0.5j))
        return PushedBottcher(g, 0 * t, 0 * t, np.ones(t.shape, dtype=bool))

    monkeypatch.setattr(critical, "curve_evaluator", lambda curve, *args: evaluate)
    cert = disconnectivity_certificate(degenerate_limit, degenerate_curve, 1.0, centers=[0.3, 0.5j])
    assert cert is not None
    assert cert.interior_zero == 0.5j
    assert cert.disk.center == 0.5j
    assert 0 < cert.disk.radius < 0.5
    assert cert.boundary_min_green > 0
    assert disconnectivity_certificate(degenerate_limit, degenerate_curve, 1.0, centers=[0.3]) is None


@pytest.fixture(scope="module")
def horseshoe_curve():
    f = HenonMap.single(0.2, (-6, 0, 1))
    return unstable_series(f, seed_saddle(f))


@pytest.mark.slow
def test_fundamental_annulus_mass_is_at_most_one(horseshoe, horseshoe_curve):
    region = AnnulusSector.fundamental(1.1 * fundamental_level(horseshoe), 2)
    rho = truncation_radius(horseshoe, horseshoe_curve, 1.03 * region.g_hi).rho
    mass = critical_mass_estimate(horseshoe, horseshoe_curve, region, rho)
    assert mass.slices > 0
    assert mass.tangencies > 0
    assert mass.value <= 1.05
    assert mass.value_scaled <= 1.05


@pytest.mark.slow
@pytest.mark.parametrize("quarter", range(4))
def test_mass_formula_on_quadrant_squares(horseshoe, horseshoe_curve, quarter):
    A = 1.1 * fundamental_level(horseshoe)
    lo, hi = math.exp(A), math.exp(2 * A)
    side = 0.3 * (hi - lo)
    Q = Square(0.5 * (lo + hi) * 1j**quarter, side)
    lo_mod, hi_mod = Q.modulus_range()
    assert lo < lo_mod and hi_mod < hi
    rho = truncation_radius(horseshoe, horseshoe_curve, 1.03 * math.log(hi_mod)).rho
    report = degree_decomposition(horseshoe, horseshoe_curve, Q, rho)
    direct = critical_mass_estimate(horseshoe, horseshoe_curve, report.square, rho)
    assert mass_formula_check(report, direct) <= 0.05 * direct.value + 1e-12
