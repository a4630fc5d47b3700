from __future__ import annotations

import cmath
import json
import logging
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Literal, NamedTuple, Sequence

import mpmath
import numpy as np
import sympy
from numpy.polynomial import polynomial as npoly

from poly1d import ConvergenceError, GreenOptions, Poly1D
from utils import parse_complex

logger = logging.getLogger("henon_lab.henon")

Point = tuple[complex, complex]
Direction = Literal["forward", "backward"]
Sign = Literal["plus", "minus"]

# coefficients below this are treated as exact zeros of the composite
_COEFF_EPS = 1e-13

__all__ = [
    "ConvergenceError",
    "HenonFactor",
    "HenonMap",
    "HenonFamily",
    "DegeneratingFamily",
    "InducedPolynomial",
    "PushedBottcher",
    "apply",
    "differential",
    "escape_radius",
    "green",
    "green_array",
    "bottcher_plus",
    "bottcher_pushforward",
    "fiber_projection",
    "induced_polynomial",
    "inverse_conjugate",
    "rotate_degenerate_first",
    "fundamental_level",
    "bottcher_constant",
]


@lru_cache(maxsize=None)
def _factor_jacobian_identity(d: int) -> bool:
    """det D(aw + p(z), az) == −a² for a generic monic p of degree d."""
    z, w, a = sympy.symbols("z w a")
    cs = sympy.symbols(f"c0:{d}")
    p = z**d + sum(c * z**j for j, c in enumerate(cs))
    F = sympy.Matrix([a * w + p, a * z])
    det = F.jacobian([z, w]).det()
    return sympy.expand(det + a**2) == 0


@dataclass(frozen=True)
class HenonFactor:
    """(z, w) ↦ (a·w + p(z), a·z)."""

    a: complex
    p: Poly1D

    def __post_init__(self) -> None:
        object.__setattr__(self, "a", complex(self.a))
        if not cmath.isfinite(self.a):
            raise ValueError("factor parameter a must be finite")
        if not _factor_jacobian_identity(self.p.degree):
            raise ValueError("factor Jacobian identity failed")

    @property
    def degree(self) -> int:
        return self.p.degree

    @property
    def jacobian(self) -> complex:
        return -self.a * self.a

    def forward(self, z, w):
        return self.a * w + self.p(z), self.a * z

    def backward(self, z, w):
        u = w / self.a
        return u, (z - self.p(u)) / self.a

    def forward_with_tangent(self, z, w, dz, dw):
        return (
            self.a * w + self.p(z),
            self.a * z,
            self.p.derivative(z) * dz + self.a * dw,
            self.a * dz,
        )

    def matrix(self, z: complex) -> np.ndarray:
        return np.array([[self.p.derivative(z), self.a], [self.a, 0.0]], dtype=complex)

    def to_json(self) -> dict:
        return {"a": [self.a.real, self.a.imag], "p": self.p.to_json()}

    @classmethod
    def from_json(cls, raw: dict) -> "HenonFactor":
        if "a" not in raw or "p" not in raw:
            raise ValueError("factor needs fields 'a' and 'p'")
        return cls(parse_complex(raw["a"], "a"), Poly1D.from_json(raw["p"]))


@dataclass(frozen=True)
class Composite:
    """
    Symbolic composite F = (F1, F2) with F1 = z^d + Σ c_ij z^i w^j.
    Terms are (i, j, coefficient) triples.
    """

    d: int
    lower: tuple[tuple[int, int, complex], ...]
    second: tuple[tuple[int, int, complex], ...]

    @property
    def second_degree(self) -> int:
        return max((i + j for i, j, _ in self.second), default=0)

    def depends_on_w(self) -> bool:
        return any(j > 0 for _, j, _ in self.lower)

    def _eval(self, terms, u, v, want_grad: bool):
        val = np.zeros_like(u) if isinstance(u, np.ndarray) else 0j
        gu = np.zeros_like(val) if want_grad else None
        gv = np.zeros_like(val) if want_grad else None
        for i, j, c in terms:
            pu = self.d - i - j
            mono_u = u**pu
            mono_v = v**j if j else 1.0
            val = val + c * mono_u * mono_v
            if want_grad:
                gu = gu + c * pu * u ** (pu - 1) * mono_v
                if j:
                    gv = gv + c * j * mono_u * (v ** (j - 1) if j > 1 else 1.0)
        return val, gu, gv

    def rho(self, u, v, want_grad: bool = False):
        val, gu, gv = self._eval(self.lower, u, v, want_grad)
        return 1 + val, gu, gv

    def ratio(self, u, v, want_grad: bool = False):
        """E(u, v) = F2 / z^d."""
        return self._eval(self.second, u, v, want_grad)


@lru_cache(maxsize=256)
def _compose_symbolic(factors: tuple[HenonFactor, ...]) -> Composite:
    z, w = sympy.symbols("z w")
    X, Y = z, w
    for fac in factors:
        a = sympy.Float(fac.a.real, 30) + sympy.I * sympy.Float(fac.a.imag, 30)
        pX = sympy.Integer(0)
        for c in reversed(fac.p.coefficients):
            pX = sympy.expand(pX * X + (sympy.Float(c.real, 30) + sympy.I * sympy.Float(c.imag, 30)))
        X, Y = sympy.expand(a * Y + pX), sympy.expand(a * X)
    d = math.prod(f.degree for f in factors)
    F1 = sympy.Poly(X, z, w).as_dict()
    F2 = sympy.Poly(Y, z, w).as_dict() if Y != 0 else {}
    lower = []
    lead = complex(F1.get((d, 0), 0))
    if abs(lead - 1) > 1e-9:
        raise ValueError(f"composite is not monic in z^{d} (leading coefficient {lead})")
    for (i, j), c in sorted(F1.items()):
        if (i, j) == (d, 0):
            continue
        c = complex(c)
        if abs(c) <= _COEFF_EPS:
            continue
        if i + j >= d:
            raise ValueError(f"composite first coordinate has a top-degree term z^{i} w^{j}")
        lower.append((i, j, c))
    second = []
    for (i, j), c in sorted(F2.items()):
        c = complex(c)
        if abs(c) <= _COEFF_EPS:
            continue
        if i + j >= d:
            raise ValueError("composite second coordinate has degree >= d")
        second.append((i, j, c))
    return Composite(d, tuple(lower), tuple(second))


@dataclass(frozen=True)
class HenonMap:
    """Composition of Hénon factors, applied first-to-last."""

    factors: tuple[HenonFactor, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise ValueError("a Hénon map needs at least one factor")
        # normal form check (raises on violation)
        _ = self.composite

    @classmethod
    def single(cls, a: complex, p: Poly1D | Sequence[complex]) -> "HenonMap":
        poly = p if isinstance(p, Poly1D) else Poly1D(tuple(p))
        return cls((HenonFactor(a, poly),))

    @classmethod
    def from_json(cls, raw: dict) -> "HenonMap":
        if not isinstance(raw, dict) or "factors" not in raw:
            raise ValueError("map description needs a 'factors' list")
        return cls(tuple(HenonFactor.from_json(f) for f in raw["factors"]))

    def to_json(self) -> dict:
        return {"factors": [f.to_json() for f in self.factors]}

    @classmethod
    def load(cls, path: str | Path) -> "HenonMap":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), ensure_ascii=False, indent=2), encoding="utf-8")

    def compose(self, other: "HenonMap") -> "HenonMap":
        """self ∘ other: other's factors are applied first."""
        return HenonMap(other.factors + self.factors)

    @property
    def degree(self) -> int:
        return math.prod(f.degree for f in self.factors)

    @property
    def jacobian(self) -> complex:
        out = 1 + 0j
        for f in self.factors:
            out *= f.jacobian
        return out

    @property
    def is_degenerate(self) -> bool:
        return any(f.a == 0 for f in self.factors)

    @cached_property
    def composite(self) -> Composite:
        return _compose_symbolic(self.factors)

    @property
    def is_degenerate_limit(self) -> bool:
        """(P(z), 0): first coordinate free of w and second coordinate zero."""
        c = self.composite
        return not c.depends_on_w() and not c.second

    def base_polynomial(self) -> Poly1D:
        """P with f = (P(z), 0); only for degenerate-limit maps."""
        if not self.is_degenerate_limit:
            raise ValueError("map is not of the form (P(z), 0)")
        coeffs = [0j] * (self.degree + 1)
        coeffs[-1] = 1 + 0j
        for i, _, c in self.composite.lower:
            coeffs[i] = c
        return Poly1D(tuple(coeffs))

    @cached_property
    def escape_radius(self) -> float:
        c = self.composite
        S = sum(abs(v) for _, _, v in c.lower)
        T = sum(abs(v) for _, _, v in c.second)
        R = max(2.0, 2.0 * S, S + 2.0)
        if T > 0:
            R = max(R, (2.0 * T) ** (1.0 / (c.d - c.second_degree)))
        return R

    def step(self, z, w):
        for f in self.factors:
            z, w = f.forward(z, w)
        return z, w

    def step_back(self, z, w):
        for f in reversed(self.factors):
            z, w = f.backward(z, w)
        return z, w

    def step_with_tangent(self, z, w, dz, dw):
        for f in self.factors:
            z, w, dz, dw = f.forward_with_tangent(z, w, dz, dw)
        return z, w, dz, dw

    def iterate(self, z, w, n: int):
        for _ in range(n):
            z, w = self.step(z, w)
        return z, w

    def in_vplus(self, z, w):
        az = np.abs(z)
        return (az > self.escape_radius) & (np.abs(w) < az)


def apply(f: HenonMap, x: Point, direction: Direction = "forward") -> Point:
    z, w = complex(x[0]), complex(x[1])
    if direction == "forward":
        return f.step(z, w)
    if direction == "backward":
        if f.jacobian == 0:
            raise ValueError("backward iteration of a degenerate map")
        return f.step_back(z, w)
    raise ValueError(f"unknown direction {direction!r}")


def differential(f: HenonMap, x: Point) -> np.ndarray:
    z, w = complex(x[0]), complex(x[1])
    M = np.eye(2, dtype=complex)
    for fac in f.factors:
        M = fac.matrix(z) @ M
        z, w = fac.forward(z, w)
    return M


def escape_radius(f: HenonMap) -> float:
    return f.escape_radius


def bottcher_constant(f: HenonMap) -> float:
    """C with |φ⁺(x) − z| ≤ C on V_R⁺."""
    return 3.0 * sum(abs(v) for _, _, v in f.composite.lower)


def _tail(comp: Composite, z: np.ndarray, w: np.ndarray, dz=None, dw=None, max_terms: int = 80):
    """
    log φ⁺ (and d log φ⁺ along (dz, dw)) for points of V_R⁺, in the
    scaled coordinates u = 1/z, v = w/z.  The tangent is carried as
    d^{-k} dz_k / z_k, d^{-k} dw_k / z_k so nothing overflows.
    """
    d = comp.d
    u = 1.0 / z
    v = w / z
    log_phi = np.log(z)
    tangent = dz is not None
    if tangent:
        al = dz / z
        be = dw / z
    scale = 1.0 / d
    with np.errstate(under="ignore", invalid="ignore", over="ignore"):
        for _ in range(max_terms):
            rho, ru, rv = comp.rho(u, v, tangent)
            E, Eu, Ev = comp.ratio(u, v, tangent)
            log_phi = log_phi + scale * np.log(rho)
            done = np.all(np.abs(rho - 1) < 1e-17)
            if tangent:
                du = -u * al
                dv = be - v * al
                drho = ru * du + rv * dv
                dE = Eu * du + Ev * dv
                al, be = al + drho / (d * rho), (d * al * E + dE) / (d * rho)
                done = done and np.all(np.abs(drho) <= 1e-17 * (1.0 + np.abs(al)))
            if done:
                break
            u, v = u**d / rho, E / rho
            scale /= d
    return log_phi, (al if tangent else None)


class PushedBottcher(NamedTuple):
    green: np.ndarray
    log_phi: np.ndarray
    dlog_phi: np.ndarray
    valid: np.ndarray


def bottcher_pushforward(
    f: HenonMap,
    z,
    w,
    dz=None,
    dw=None,
    steps=0,
    extra_iter: int = 64,
) -> PushedBottcher:
    """
    G⁺, log φ⁺ and d log φ⁺ at f^steps(x) for a batch of points x with
    tangents (dz, dw).  Each point is iterated only until it enters V_R⁺;
    the rest of the push-forward uses φ⁺∘f = (φ⁺)^d, so log φ⁺ comes out
    as d^r · log φ⁺(entry point) and never overflows.

    `valid` marks points whose image lies in V_R⁺ (log φ⁺ is single valued
    there).  Points that enter later still get their Green value; points
    that never enter within steps + extra_iter get G⁺ = 0.
    """
    z = np.array(z, dtype=complex, copy=True).ravel()
    w = np.array(w, dtype=complex, copy=True).ravel()
    n = z.size
    if dz is None:
        dz = np.zeros(n, dtype=complex)
        dw = np.zeros(n, dtype=complex)
    dz = np.array(np.broadcast_to(dz, (n,)), dtype=complex)
    dw = np.array(np.broadcast_to(dw, (n,)), dtype=complex)
    steps = np.broadcast_to(np.asarray(steps, dtype=int), (n,))
    d = f.degree

    entry = np.full(n, -1, dtype=int)
    ez, ew, edz, edw = z.copy(), w.copy(), dz.copy(), dw.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        inside = f.in_vplus(z, w)
    entry[inside] = 0
    active = ~inside & np.isfinite(z) & np.isfinite(w)
    limit = int(steps.max(initial=0)) + extra_iter
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(1, limit + 1):
            if not active.any():
                break
            idx = np.nonzero(active)[0]
            zz, ww, tz, tw = f.step_with_tangent(z[idx], w[idx], dz[idx], dw[idx])
            z[idx], w[idx], dz[idx], dw[idx] = zz, ww, tz, tw
            fin = np.isfinite(zz) & np.isfinite(ww)
            new = fin & f.in_vplus(zz, ww)
            hit = idx[new]
            entry[hit] = j
            ez[hit], ew[hit], edz[hit], edw[hit] = zz[new], ww[new], tz[new], tw[new]
            active[idx[new | ~fin]] = False

    green = np.zeros(n, dtype=float)
    log_phi = np.full(n, np.nan + 0j)
    dlog = np.full(n, np.nan + 0j)
    valid = np.zeros(n, dtype=bool)
    ent = entry >= 0
    if ent.any():
        lp, dl = _tail(f.composite, ez[ent], ew[ent], edz[ent], edw[ent])
        r = steps[ent] - entry[ent]
        with np.errstate(over="ignore", invalid="ignore"):
            scale = np.power(float(d), r.astype(float))
            green[ent] = scale * lp.real
            ok = (r >= 0) & np.isfinite(scale)
            lpv = np.where(ok, scale * lp, np.nan)
            dlv = np.where(np.isfinite(scale), scale * dl, np.nan)
        log_phi[ent] = lpv
        dlog[ent] = dlv
        valid[ent] = ok & np.isfinite(lpv) & np.isfinite(dlv)
    return PushedBottcher(np.maximum(green, 0.0), log_phi, dlog, valid)


def green_array(f: HenonMap, z, w, max_iter: int = 2000) -> np.ndarray:
    return bottcher_pushforward(f, z, w, steps=0, extra_iter=max_iter).green


def _tail_scalar_mp(comp: Composite, z, w, prec: int):
    d = comp.d
    u = 1 / z
    v = w / z
    total = mpmath.log(z)
    scale = mpmath.mpf(1) / d
    tiny = mpmath.mpf(2) ** (-prec)
    for _ in range(4 * prec):
        rho = 1 + sum(c * u ** (d - i - j) * v**j for i, j, c in comp.lower)
        E = sum((c * u ** (d - i - j) * v**j for i, j, c in comp.second), mpmath.mpc(0))
        total += scale * mpmath.log(rho)
        if abs(rho - 1) < tiny:
            break
        u, v = u**d / rho, E / rho
        scale /= d
    return total


def green(f: HenonMap, x: Point, sign: Sign = "plus", opts: GreenOptions | None = None) -> float:
    opts = opts or GreenOptions()
    z, w = complex(x[0]), complex(x[1])
    if not (cmath.isfinite(z) and cmath.isfinite(w)):
        raise ValueError("non-finite point")
    if sign == "minus":
        if f.jacobian == 0:
            raise ValueError("G⁻ is undefined for a degenerate map")
        g, s = inverse_conjugate(f)
        return green(g, (w / s, z / s), "plus", opts)
    if sign != "plus":
        raise ValueError(f"unknown sign {sign!r}")
    if opts.precision is None:
        return float(green_array(f, [z], [w], max_iter=opts.max_iter)[0])
    with mpmath.workprec(opts.precision):
        R = mpmath.mpf(f.escape_radius)
        zz, ww = mpmath.mpc(z), mpmath.mpc(w)
        n = 0
        while not (abs(zz) > R and abs(ww) < abs(zz)):
            if n >= opts.max_iter:
                return 0.0
            zz, ww = f.step(zz, ww)
            n += 1
        val = _tail_scalar_mp(f.composite, zz, ww, opts.precision).real / mpmath.mpf(f.degree) ** n
        return max(float(val), 0.0)


def _require_vplus(f: HenonMap, z: complex, w: complex) -> None:
    if not bool(f.in_vplus(z, w)):
        raise ValueError(f"point ({z}, {w}) is outside V_R⁺ for R = {f.escape_radius:g}")


def bottcher_plus(f: HenonMap, x: Point) -> complex:
    z, w = complex(x[0]), complex(x[1])
    _require_vplus(f, z, w)
    lp, _ = _tail(f.composite, np.array([z]), np.array([w]))
    return complex(np.exp(lp[0]))


def fiber_projection(f: HenonMap, x: Point, *, max_steps: int = 50, tol: float = 1e-14) -> complex:
    """ζ with φ⁺(ζ, 0) = φ⁺(x)."""
    z, w = complex(x[0]), complex(x[1])
    _require_vplus(f, z, w)
    if f.is_degenerate_limit:
        return z
    comp = f.composite
    target, _ = _tail(comp, np.array([z]), np.array([w]))
    target = complex(target[0])
    zeta = cmath.exp(target)
    R = f.escape_radius
    for _ in range(max_steps):
        if abs(zeta) <= R:
            break
        lp, dl = _tail(comp, np.array([zeta]), np.array([0j]), np.array([1 + 0j]), np.array([0j]))
        diff = complex(lp[0]) - target
        diff = complex(diff.real, math.remainder(diff.imag, 2 * math.pi))
        step = diff / complex(dl[0])
        zeta -= step
        if abs(step) <= tol * max(1.0, abs(zeta)):
            if abs(zeta) > R:
                return zeta
            break
    raise ConvergenceError(f"fiber projection of ({z}, {w}) left the injectivity region")


def inverse_conjugate(f: HenonMap) -> tuple[HenonMap, complex]:
    """
    g and s with G⁻_f(z, w) = G⁺_g(w/s, z/s): the inverse conjugated by the
    coordinate swap, rescaled so every factor polynomial is monic.
    """
    if f.jacobian == 0:
        raise ValueError("a degenerate map has no inverse")
    raw = []
    for fac in reversed(f.factors):
        a = fac.a
        q = [-c * a ** (-j - 1) for j, c in enumerate(fac.p.coefficients)]
        raw.append((1 / a, q, fac.degree))
    d = f.degree
    # log s_{k+1} = log c_k + d_k log s_k, cyclic
    logs_c = [cmath.log(q[-1]) for _, q, _ in raw]
    Dc = 0j
    for k, (_, _, dk) in enumerate(raw):
        later = math.prod(dj for _, _, dj in raw[k + 1 :])
        Dc += later * logs_c[k]
    L = [-Dc / (d - 1)]
    for k, (_, _, dk) in enumerate(raw):
        L.append(logs_c[k] + dk * L[k])
    s = [cmath.exp(x) for x in L]
    s[-1] = s[0]
    factors = []
    for k, (b, q, dk) in enumerate(raw):
        beta = b * s[k] / s[k + 1]
        qt = [c * s[k] ** j / s[k + 1] for j, c in enumerate(q)]
        qt[-1] = 1 + 0j
        factors.append(HenonFactor(beta, Poly1D(tuple(qt))))
    return HenonMap(tuple(factors)), s[0]


def rotate_degenerate_first(f: HenonMap) -> HenonMap:
    """Cyclic conjugate whose first applied factor is the degenerate one."""
    zeros = [i for i, fac in enumerate(f.factors) if fac.a == 0]
    if len(zeros) != 1:
        raise ValueError(f"expected exactly one degenerate factor, found {len(zeros)}")
    i0 = zeros[0]
    return HenonMap(f.factors[i0:] + f.factors[:i0])


@dataclass(frozen=True)
class InducedPolynomial:
    # t ↦ (X(t), Y(t)), coefficient arrays lowest degree first
    parametrization: tuple[np.ndarray, np.ndarray]
    q: Poly1D
    degree_M: int
    regular: bool

    def curve(self, t):
        X, Y = self.parametrization
        return npoly.polyval(t, X), npoly.polyval(t, Y)

    def to_json(self) -> dict:
        X, Y = self.parametrization
        return {
            "x": [[c.real, c.imag] for c in X],
            "y": [[c.real, c.imag] for c in Y],
            "q": self.q.to_json(),
            "degree_M": self.degree_M,
            "regular": self.regular,
        }


def induced_polynomial(f: HenonMap, *, base_value: complex = 0.3719 + 0.6133j) -> InducedPolynomial:
    """
    For f = g ∘ (p₁(z), 0): M = f(ℂ²) = {g(t, 0)} and f∘φ_M = φ_M∘q with
    q(t) = p₁(π₁ g(t, 0)).
    """
    zeros = [i for i, fac in enumerate(f.factors) if fac.a == 0]
    if len(zeros) != 1:
        raise ValueError(f"expected exactly one degenerate factor, found {len(zeros)}")
    if zeros[0] != 0:
        raise ValueError("the degenerate factor must be applied first; use rotate_degenerate_first")
    p1 = f.factors[0].p
    X = np.array([0j, 1 + 0j])
    Y = np.array([0j])
    for fac in f.factors[1:]:
        pX = np.array([1 + 0j])
        for c in reversed(fac.p.coefficients[:-1]):
            pX = npoly.polyadd(npoly.polymul(pX, X), [c])
        X, Y = npoly.polyadd(fac.a * Y, pX), fac.a * X
    qc = np.array([1 + 0j])
    for c in reversed(p1.coefficients[:-1]):
        qc = npoly.polyadd(npoly.polymul(qc, X), [c])
    q = Poly1D(tuple(np.trim_zeros(qc, "b")))
    degree_M = f.degree // p1.degree

    # generic fibre of q must have d points with d distinct images on M
    y = base_value * (1.0 + max(abs(c) for c in q.coefficients))
    roots = npoly.polyroots(npoly.polysub(q.as_array(), [y]))
    pts = np.stack([npoly.polyval(roots, X), npoly.polyval(roots, Y)], axis=1)
    regular = len(roots) == f.degree
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if np.linalg.norm(pts[i] - pts[j]) < 1e-8 * (1 + np.linalg.norm(pts[i])):
                regular = False
    if not regular:
        logger.warning("Image curve looks singular: fibre of q over %s has coincident points", y)
    return InducedPolynomial((X, Y), q, degree_M, regular)


def fundamental_level(f: HenonMap, n: int = 64) -> float:
    """A₀ = max G⁺ on an n×n grid of the torus |z| = |w| = R."""
    R = f.escape_radius
    th = np.arange(n) * (2 * math.pi / n)
    zz = R * np.exp(1j * th)
    Z, W = np.meshgrid(zz, zz, indexing="ij")
    return float(np.max(green_array(f, Z.ravel(), W.ravel(), max_iter=200)))


def _coef_poly(raw, field: str) -> tuple[complex, ...]:
    """A coefficient given as [re, im] (constant) or a list of them (polynomial in b)."""
    if isinstance(raw, (int, float, str)):
        return (parse_complex(raw, field),)
    if isinstance(raw, (list, tuple)) and raw and isinstance(raw[0], (int, float)):
        return (parse_complex(raw, field),)
    if isinstance(raw, (list, tuple)) and raw:
        return tuple(parse_complex(c, f"{field}[{k}]") for k, c in enumerate(raw))
    raise ValueError(f"{field}: empty coefficient")


def _polyval_b(coeffs: tuple[complex, ...], b: complex) -> complex:
    acc = 0j
    for c in reversed(coeffs):
        acc = acc * b + c
    return acc


@dataclass(frozen=True)
class FactorDependence:
    a: tuple[complex, ...]
    p: tuple[tuple[complex, ...], ...]

    def at(self, b: complex) -> HenonFactor:
        return HenonFactor(_polyval_b(self.a, b), Poly1D(tuple(_polyval_b(c, b) for c in self.p)))

    @classmethod
    def from_json(cls, raw: dict, idx: int) -> "FactorDependence":
        if "a" not in raw or "p" not in raw:
            raise ValueError(f"factor_dependencies[{idx}] needs fields 'a' and 'p'")
        a = _coef_poly(raw["a"], f"factor_dependencies[{idx}].a")
        p = tuple(_coef_poly(c, f"factor_dependencies[{idx}].p[{j}]") for j, c in enumerate(raw["p"]))
        if len(p) < 3 or abs(p[-1][0] - 1) > 1e-12 or any(c != 0 for c in p[-1][1:]):
            raise ValueError(f"factor_dependencies[{idx}].p must be monic for every parameter value")
        return cls(a, p)

    def to_json(self) -> dict:
        return {
            "a": [[c.real, c.imag] for c in self.a],
            "p": [[[c.real, c.imag] for c in cp] for cp in self.p],
        }


@dataclass(frozen=True)
class HenonFamily:
    """b ↦ f_b with factor data polynomial in b."""

    parameter: str
    factors: tuple[FactorDependence, ...]

    def at(self, b: complex) -> HenonMap:
        return HenonMap(tuple(fd.at(complex(b)) for fd in self.factors))

    @classmethod
    def from_json(cls, raw: dict) -> "HenonFamily":
        if not isinstance(raw, dict):
            raise ValueError("family description must be an object")
        if "factor_dependencies" not in raw:
            raise ValueError("family description needs 'factor_dependencies'")
        deps = tuple(FactorDependence.from_json(fd, i) for i, fd in enumerate(raw["factor_dependencies"]))
        if not deps:
            raise ValueError("factor_dependencies is empty")
        return cls(str(raw.get("parameter", "b")), deps)

    def to_json(self) -> dict:
        return {"parameter": self.parameter, "factor_dependencies": [fd.to_json() for fd in self.factors]}


@dataclass(frozen=True)
class DegeneratingFamily(HenonFamily):
    """A family with f_0 = (p(z), 0); base_poly is that p."""

    @cached_property
    def base_poly(self) -> Poly1D:
        f0 = self.at(0)
        if not f0.is_degenerate_limit:
            raise ValueError("family at b = 0 is not of the form (p(z), 0)")
        return f0.base_polynomial()

    def __post_init__(self) -> None:
        p = self.base_poly
        # R_b = F_b − (p(z), 0) has degree ≤ d − 1 for every b
        for b in (0.5, 0.1 + 0.2j):
            c = self.at(b).composite
            if c.d != p.degree:
                raise ValueError("family degree changes with the parameter")
