from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from numpy.polynomial import polynomial as npoly

from henon import (
    DegeneratingFamily,
    HenonFactor,
    HenonFamily,
    HenonMap,
    apply,
    bottcher_constant,
    bottcher_plus,
    bottcher_pushforward,
    differential,
    fiber_projection,
    fundamental_level,
    green,
    induced_polynomial,
    rotate_degenerate_first,
)
from poly1d import GreenOptions, Poly1D, green_1d

SINGLE_B = {"a": [[0, 0], [1, 0]], "p": [[-6, 0], [0, 0], [1, 0]]}


def _green_deep(f: HenonMap, x, n: int = 30, backward: bool = False) -> float:
    with mpmath.workdps(60):
        z, w = mpmath.mpc(x[0]), mpmath.mpc(x[1])
        for _ in range(n):
            z, w = f.step_back(z, w) if backward else f.step(z, w)
        return float(mpmath.log(max(abs(z), abs(w))) / mpmath.mpf(f.degree) ** n)


def test_factor_jacobian_and_inverse(horseshoe):
    x = (0.3 - 0.4j, 1.1 + 0.2j)
    assert horseshoe.jacobian == pytest.approx(-0.04)
    assert np.linalg.det(differential(horseshoe, x)) == pytest.approx(-0.04)
    back = apply(horseshoe, apply(horseshoe, x), "backward")
    assert back == pytest.approx(x)


def test_backward_iteration_of_degenerate_map_is_refused(degenerate_limit):
    assert degenerate_limit.is_degenerate
    with pytest.raises(ValueError):
        apply(degenerate_limit, (1.0, 0.0), "backward")


def test_composite_matches_iteration():
    f = HenonMap((HenonFactor(0.3, Poly1D((-1, 0, 1))), HenonFactor(0.5 + 0.1j, Poly1D((0.2, 0, 1)))))
    comp = f.composite
    assert comp.d == f.degree == 4
    rng = np.random.default_rng(3)
    for z, w in rng.normal(size=(5, 2)) + 1j * rng.normal(size=(5, 2)):
        F1 = z**4 + sum(c * z**i * w**j for i, j, c in comp.lower)
        F2 = sum(c * z**i * w**j for i, j, c in comp.second)
        assert (F1, F2) == pytest.approx(f.step(z, w), rel=1e-10, abs=1e-10)


def test_compose_and_json(tmp_path, horseshoe):
    g = HenonMap.single(0.5j, (0.1, 0, 1))
    fg = horseshoe.compose(g)
    x = (0.7, -0.2j)
    assert fg.step(*x) == pytest.approx(horseshoe.step(*g.step(*x)))
    path = tmp_path / "map.json"
    fg.save(path)
    assert HenonMap.load(path) == fg


def test_degenerate_limit_reduces_to_polynomial(degenerate_limit, p_escape):
    assert degenerate_limit.is_degenerate_limit
    assert degenerate_limit.base_polynomial() == p_escape
    for z in (2 + 1j, 0.5j, -3.0 + 0.01j):
        assert green(degenerate_limit, (z, 5.0)) == pytest.approx(green_1d(p_escape, z), rel=1e-12)


def test_green_plus_matches_deep_iteration(horseshoe):
    for x in [(1 + 1j, 0.5), (20.0, 1.0), (0.1, 4j)]:
        assert green(horseshoe, x) == pytest.approx(_green_deep(horseshoe, x), abs=1e-8)
    x = (1 + 1j, 0.5)
    assert green(horseshoe, horseshoe.step(*x)) == pytest.approx(2 * green(horseshoe, x), rel=1e-10)
    assert green(horseshoe, x, opts=GreenOptions(precision=100)) == pytest.approx(green(horseshoe, x), rel=1e-12)


def test_green_minus_matches_deep_backward_iteration(horseshoe):
    x = (0.5, 3 + 1j)
    assert green(horseshoe, x, "minus") == pytest.approx(_green_deep(horseshoe, x, backward=True), abs=1e-8)
    back = horseshoe.step_back(*x)
    assert green(horseshoe, back, "minus") == pytest.approx(2 * green(horseshoe, x, "minus"), rel=1e-10)
    with pytest.raises(ValueError):
        green(HenonMap.single(0, (-6, 0, 1)), x, "minus")


def test_bottcher_coordinate_semiconjugates(horseshoe):
    x = (20.0, 1.0)
    assert bool(horseshoe.in_vplus(*x))
    phi = bottcher_plus(horseshoe, x)
    assert bottcher_plus(horseshoe, horseshoe.step(*x)) == pytest.approx(phi**2, rel=1e-12)
    assert math.log(abs(phi)) == pytest.approx(green(horseshoe, x), rel=1e-12)
    with pytest.raises(ValueError):
        bottcher_plus(horseshoe, (1.0, 1.0))


def test_fiber_projection_lands_on_same_fibre(horseshoe):
    x = (20.0 + 3j, 4.0)
    zeta = fiber_projection(horseshoe, x)
    assert bottcher_plus(horseshoe, (zeta, 0j)) == pytest.approx(bottcher_plus(horseshoe, x), rel=1e-10)


def test_pushforward_scales_and_differentiates(horseshoe):
    x = np.array([20.0 + 1j]), np.array([2.0 - 1j])
    v = np.array([1.0 + 0.5j]), np.array([-0.3j])
    base = bottcher_pushforward(horseshoe, *x, *v, steps=0)
    pushed = bottcher_pushforward(horseshoe, *x, *v, steps=1)
    assert bool(base.valid[0]) and bool(pushed.valid[0])
    assert pushed.green[0] == pytest.approx(2 * base.green[0], rel=1e-12)
    assert pushed.log_phi[0] == pytest.approx(2 * base.log_phi[0], rel=1e-12)
    h = 1e-6
    plus = bottcher_pushforward(horseshoe, x[0] + h * v[0], x[1] + h * v[1]).log_phi[0]
    minus = bottcher_pushforward(horseshoe, x[0] - h * v[0], x[1] - h * v[1]).log_phi[0]
    assert base.dlog_phi[0] == pytest.approx((plus - minus) / (2 * h), rel=1e-6)


def test_fundamental_level_is_positive(horseshoe):
    A0 = fundamental_level(horseshoe)
    assert 0 < A0 < 2 * math.log(horseshoe.escape_radius)


def test_induced_polynomial_of_composed_degenerate_map():
    q = Poly1D.monomial(2)
    r = Poly1D.monomial(2)
    a = 0.4
    f = HenonMap((HenonFactor(a, q), HenonFactor(0, r)))
    g = rotate_degenerate_first(f)
    assert g.factors[0].a == 0
    ind = induced_polynomial(g)
    assert ind.q.degree == 4
    assert np.allclose(ind.q.coefficients, [0, 0, 0, 0, 1])
    assert ind.degree_M == 2
    assert ind.regular
    t = np.array([0.3 + 0.1j, -1.2, 0.7j])
    X, Y = ind.curve(t)
    fz, fw = g.step(X, Y)
    qX, qY = ind.curve(ind.q(t))
    assert np.allclose(fz, qX) and np.allclose(fw, qY)
    with pytest.raises(ValueError):
        induced_polynomial(f)


def test_family_from_json():
    fam = HenonFamily.from_json({"parameter": "a", "factor_dependencies": [SINGLE_B]})
    f = fam.at(0.2)
    assert f.factors[0].a == pytest.approx(0.2)
    assert HenonFamily.from_json(fam.to_json()) == fam
    with pytest.raises(ValueError, match="monic"):
        HenonFamily.from_json({"factor_dependencies": [{"a": [0.2, 0], "p": [[-6, 0], [0, 0], [[1, 0], [1, 0]]]}]})


def test_degenerating_family_needs_degenerate_limit(p_escape):
    fam = DegeneratingFamily.from_json({"parameter": "b", "factor_dependencies": [SINGLE_B]})
    assert fam.base_poly == p_escape
    with pytest.raises(ValueError):
        DegeneratingFamily.from_json({"factor_dependencies": [{"a": [1, 0], "p": [[-6, 0], [0, 0], [1, 0]]}]})


@pytest.mark.parametrize(
    "f",
    [
        HenonMap.single(0.3, (0, 0, 1)),
        HenonMap.single(0.2, (-6, 0, 1)),
        HenonMap((HenonFactor(0.3, Poly1D((-1, 0, 1))), HenonFactor(0.5 + 0.1j, Poly1D((0.2, 0, 1))))),
    ],
)
def test_escape_radius_inequalities_on_the_boundary(f):
    R = f.escape_radius
    ring = np.exp(2j * np.pi * np.arange(100) / 100)
    for scale in (1 + 1e-9, 2.0):
        z = (scale * R * ring)[:, None]
        w = np.abs(z) * np.linspace(0.0, 0.999, 100)[None, :] * ring[::-1][None, :]
        z1, w1 = f.step(z, w)
        assert np.all(np.abs(z1) >= np.abs(z) ** f.degree / 2)
        assert np.all(np.abs(z1) >= 2 * np.abs(z))
        assert np.all(f.in_vplus(z1, w1))


def test_escape_radius_grows_with_the_coefficients():
    assert HenonMap.single(0, (0, 0, 1)).escape_radius == 2.0
    assert HenonMap.single(0.3, (0, 0, 1)).escape_radius <= 2.3 + 1e-12
    radii = [HenonMap.single(a, (-6, 0, 1)).escape_radius for a in (0.0, 0.2, 1.0, 3.0)]
    assert radii == sorted(radii)


@pytest.mark.parametrize("f", [HenonMap.single(0.2, (-6, 0, 1)), HenonMap.single(0, (-6, 0, 1))])
def test_bottcher_stays_within_constant_of_z(f):
    C = bottcher_constant(f)
    R = f.escape_radius
    rng = np.random.default_rng(3)
    for _ in range(40):
        z = R * rng.uniform(1.01, 4.0) * np.exp(2j * np.pi * rng.uniform())
        w = abs(z) * rng.uniform(0.0, 0.99) * np.exp(2j * np.pi * rng.uniform())
        assert abs(bottcher_plus(f, (z, w)) - z) <= C


def test_induced_map_has_d_preimages_on_the_image_curve():
    f = HenonMap((HenonFactor(0, Poly1D((-6, 0, 1))), HenonFactor(0.3, Poly1D((-1, 0, 1)))))
    ind = induced_polynomial(f)
    assert ind.q.degree == f.degree == 4
    assert ind.regular
    y = 0.37 + 1.91j
    roots = npoly.polyroots(npoly.polysub(ind.q.as_array(), [y]))
    assert len(roots) == 4
    X, Y = ind.curve(roots)
    pts = np.stack([X, Y], axis=1)
    gaps = [np.linalg.norm(pts[i] - pts[j]) for i in range(4) for j in range(i + 1, 4)]
    assert min(gaps) > 1e-6
    (tz,), (tw,) = ind.curve(np.array([y]))
    fz, fw = f.step(X, Y)
    assert np.allclose(fz, tz) and np.allclose(fw, tw)
