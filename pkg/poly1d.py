from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import mpmath
import numpy as np
from numpy.polynomial import polynomial as npoly

from contour import Disk
from utils import parse_complex

logger = logging.getLogger("henon_lab.poly1d")

# G_p(c) above this counts as escaping
ESCAPE_THRESHOLD = 1e-10
# regions must stay above this Green level; round-off escape from a repelling cycle gives G near 1e-8
REGION_GREEN_FLOOR = 1e-6


class ConvergenceError(RuntimeError):
    """A numerical procedure (Newton, root polish, series, subdivision) failed."""


@dataclass(frozen=True)
class GreenOptions:
    max_iter: int = 2000
    # the Böttcher tail stops once |ρ − 1| < tol
    tol: float = 1e-12
    # bits of mantissa; None keeps hardware doubles
    precision: int | None = None

    def __post_init__(self) -> None:
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.precision is not None and self.precision < 64:
            raise ValueError("extended precision needs at least 64 bits")

    def to_json(self) -> dict:
        return {"max_iter": self.max_iter, "tol": self.tol, "precision": self.precision}


@dataclass(frozen=True)
class Poly1D:
    """Monic complex polynomial, coefficients lowest degree first."""

    coefficients: tuple[complex, ...]

    def __post_init__(self) -> None:
        coeffs = [complex(c) for c in self.coefficients]
        while len(coeffs) > 1 and coeffs[-1] == 0:
            coeffs.pop()
        if len(coeffs) < 3:
            raise ValueError(f"degree must be >= 2, got {len(coeffs) - 1}")
        if not all(cmath.isfinite(c) for c in coeffs):
            raise ValueError("coefficients must be finite")
        if abs(coeffs[-1] - 1) > 1e-12:
            raise ValueError(f"polynomial must be monic, leading coefficient is {coeffs[-1]}")
        coeffs[-1] = 1 + 0j
        object.__setattr__(self, "coefficients", tuple(coeffs))

    @classmethod
    def monomial(cls, d: int, constant: complex = 0) -> "Poly1D":
        return cls((complex(constant),) + (0j,) * (d - 1) + (1 + 0j,))

    @classmethod
    def from_json(cls, raw: Sequence) -> "Poly1D":
        return cls(tuple(parse_complex(c, f"p[{i}]") for i, c in enumerate(raw)))

    def to_json(self) -> list[list[float]]:
        return [[c.real, c.imag] for c in self.coefficients]

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def lower(self) -> tuple[complex, ...]:
        """Coefficients of p − z^d."""
        return self.coefficients[:-1]

    @property
    def escape_radius(self) -> float:
        return escape_radius_1d(self)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.coefficients, dtype=complex)

    def __call__(self, z):
        acc = 1 + 0j
        for c in reversed(self.coefficients[:-1]):
            acc = acc * z + c
        return acc

    def derivative(self, z):
        d = self.degree
        acc = complex(d)
        for j in range(d - 1, 0, -1):
            acc = acc * z + j * self.coefficients[j]
        return acc

    def second_derivative(self, z):
        d = self.degree
        acc = complex(d * (d - 1))
        for j in range(d - 1, 1, -1):
            acc = acc * z + j * (j - 1) * self.coefficients[j]
        return acc

    def compose(self, inner: "Poly1D") -> "Poly1D":
        """self ∘ inner."""
        out = np.array([self.coefficients[-1]])
        base = inner.as_array()
        for c in reversed(self.coefficients[:-1]):
            out = npoly.polyadd(npoly.polymul(out, base), [c])
        return Poly1D(tuple(out))

    def iterate(self, n: int) -> "Poly1D":
        out = self
        for _ in range(n - 1):
            out = self.compose(out)
        return out

    def __str__(self) -> str:
        terms = []
        for j, c in enumerate(self.coefficients):
            if c == 0:
                continue
            terms.append(f"({c:g})z^{j}" if j else f"({c:g})")
        return " + ".join(reversed(terms))


@dataclass(frozen=True)
class CriticalAtom1D:
    location: complex
    weight: float
    green_value: float
    source_critical_point: complex
    iterate_index: int
    # the A actually used and its offset from the requested one
    window_base: float = math.nan
    window_shift: float = 0.0

    def to_json(self) -> dict:
        return {
            "location": [self.location.real, self.location.imag],
            "weight": self.weight,
            "green_value": self.green_value,
            "source_critical_point": [self.source_critical_point.real, self.source_critical_point.imag],
            "iterate_index": self.iterate_index,
            "window_base": self.window_base,
            "window_shift": self.window_shift,
        }


def escape_radius_1d(p: Poly1D) -> float:
    return max(2.0, 1.0 + sum(abs(c) for c in p.lower))


def _rho(p: Poly1D, u):
    # ρ(u) = p(z)/z^d with u = 1/z
    acc = 0j
    for c in p.lower:
        acc = acc * u + c
    return 1 + u * acc


def _tail_log(p: Poly1D, z, *, log=cmath.log, tiny: float = 1e-17, max_terms: int = 64):
    """Σ_k d^{-(k+1)} Log ρ_k along the orbit of z, |z| > R, in u = 1/z."""
    d = p.degree
    u = 1 / z
    total = 0
    scale = 1.0 / d
    for _ in range(max_terms):
        r = _rho(p, u)
        if r.real <= 0:
            raise ConvergenceError("Böttcher ratio left the right half-plane")
        total = total + scale * log(r)
        if abs(r - 1) < tiny:
            break
        u = u**d / r
        scale /= d
    return total


def green_1d(p: Poly1D, z: complex, opts: GreenOptions | None = None) -> float:
    opts = opts or GreenOptions()
    z = complex(z)
    if not cmath.isfinite(z):
        raise ValueError(f"non-finite point {z}")
    if opts.precision is not None:
        return _green_1d_mp(p, z, opts)
    R = p.escape_radius
    n = 0
    while abs(z) <= R:
        if n >= opts.max_iter:
            return 0.0
        z = p(z)
        n += 1
    tail = _tail_log(p, z, tiny=opts.tol)
    val = (math.log(abs(z)) + tail.real) * math.exp(-n * math.log(p.degree))
    return max(val, 0.0)


def _green_1d_mp(p: Poly1D, z: complex, opts: GreenOptions) -> float:
    with mpmath.workprec(opts.precision):
        R = mpmath.mpf(p.escape_radius)
        zz = mpmath.mpc(z)
        n = 0
        while abs(zz) <= R:
            if n >= opts.max_iter:
                return 0.0
            zz = p(zz)
            n += 1
        tail = _tail_log(p, zz, log=mpmath.log, tiny=min(opts.tol, 2.0 ** -opts.precision), max_terms=128)
        val = (mpmath.log(abs(zz)) + tail.real) / mpmath.mpf(p.degree) ** n
        return max(float(val), 0.0)


def green_1d_array(p: Poly1D, z: Iterable[complex] | np.ndarray, max_iter: int = 2000) -> np.ndarray:
    z = np.array(z, dtype=complex, copy=True).ravel()
    R = p.escape_radius
    d = p.degree
    steps = np.zeros(z.shape, dtype=int)
    active = np.abs(z) <= R
    for _ in range(max_iter):
        if not active.any():
            break
        z[active] = p(z[active])
        steps[active] += 1
        active &= np.abs(z) <= R
    out = np.zeros(z.shape, dtype=float)
    esc = ~active
    if esc.any():
        ze = z[esc]
        u = 1 / ze
        total = np.zeros(ze.shape, dtype=float)
        scale = 1.0 / d
        for _ in range(64):
            r = _rho(p, u)
            total += scale * np.log(np.abs(r))
            if np.max(np.abs(r - 1)) < 1e-17:
                break
            u = u**d / r
            scale /= d
        out[esc] = (np.log(np.abs(ze)) + total) * np.exp(-steps[esc] * math.log(d))
    return np.maximum(out, 0.0)


def bottcher_1d(p: Poly1D, z: complex) -> complex:
    z = complex(z)
    if not cmath.isfinite(z):
        raise ValueError(f"non-finite point {z}")
    R = p.escape_radius
    if abs(z) <= R:
        raise ValueError(f"|z| = {abs(z):g} is inside the escape radius {R:g}")
    return z * cmath.exp(_tail_log(p, z))


def critical_points(p: Poly1D, cluster: float = 1e-5) -> list[tuple[complex, int]]:
    """Roots of p′ merged into (point, multiplicity)."""
    dcoef = npoly.polyder(p.as_array())
    roots = npoly.polyroots(dcoef) if len(dcoef) > 1 else np.array([], dtype=complex)
    groups: list[list[complex]] = []
    for r in sorted(roots, key=lambda c: (round(c.real, 6), round(c.imag, 6))):
        for g in groups:
            if abs(r - np.mean(g)) <= cluster * max(1.0, abs(r)):
                g.append(complex(r))
                break
        else:
            groups.append([complex(r)])
    out: list[tuple[complex, int]] = []
    for g in groups:
        c = complex(np.mean(g))
        # polish the cluster centre on the lowest non-vanishing derivative
        if len(g) == 1:
            for _ in range(3):
                d2 = p.second_derivative(c)
                if d2 == 0:
                    break
                c = c - p.derivative(c) / d2
        out.append((c, len(g)))
    return out


def escaping_critical_points(p: Poly1D, opts: GreenOptions | None = None) -> list[tuple[complex, int, float]]:
    out = []
    for c, mult in critical_points(p):
        g = green_1d(p, c, opts)
        if g > ESCAPE_THRESHOLD:
            out.append((c, mult, g))
    return out


def g_max(p: Poly1D, opts: GreenOptions | None = None) -> float:
    return max((g for _, _, g in escaping_critical_points(p, opts)), default=0.0)


def adjust_window_base(p: Poly1D, A: float, *, rel: float = 1e-9, opts: GreenOptions | None = None) -> float:
    """Nudges A up until no postcritical Green value sits on a window edge."""
    if A <= 0:
        raise ValueError("A must be positive")
    esc = escaping_critical_points(p, opts)
    d = p.degree
    A0 = A
    for _ in range(64):
        hit = False
        for _, _, g in esc:
            k = round(math.log(A / g, d))
            for kk in (k - 1, k, k + 1):
                if kk >= 0 and abs(g * d**kk / A - 1) < rel:
                    hit = True
        if not hit:
            break
        A *= 1 + 1e-6
    else:
        raise ConvergenceError(f"could not move A={A0} off the postcritical levels")
    if A != A0:
        logger.warning("Window base moved from %.17g to %.17g (postcritical level on the edge)", A0, A)
    return A


def critical_atoms_window(p: Poly1D, A: float, opts: GreenOptions | None = None) -> list[CriticalAtom1D]:
    esc = escaping_critical_points(p, opts)
    gm = max((g for _, _, g in esc), default=0.0)
    if A < gm * (1 - 1e-12):
        raise ValueError(f"A={A:g} is below G_max={gm:g}")
    requested = A
    A = adjust_window_base(p, A, opts=opts)
    d = p.degree
    atoms: list[CriticalAtom1D] = []
    for c, mult, g in esc:
        k = 0
        while g * d**k < A:
            k += 1
        z = c
        for _ in range(k):
            z = p(z)
        atoms.append(
            CriticalAtom1D(
                location=complex(z),
                weight=mult * float(d) ** (-k),
                green_value=g * float(d) ** k,
                source_critical_point=c,
                iterate_index=k,
                window_base=A,
                window_shift=A - requested,
            )
        )
    atoms.sort(key=lambda a: (a.green_value, a.location.real, a.location.imag))
    return atoms


def chi_manning_przytycki(p: Poly1D, opts: GreenOptions | None = None) -> float:
    return math.log(p.degree) + sum(mult * g for _, mult, g in escaping_critical_points(p, opts))


def mane_dimension(p: Poly1D) -> float:
    return math.log(p.degree) / chi_manning_przytycki(p)


def preimages(p: Poly1D, y: np.ndarray | Sequence[complex], *, polish: int = 3) -> np.ndarray:
    """
    All solutions of p(z) = y for a batch of y, shape (len(y), d).
    Companion-matrix eigenvalues, then a few Newton steps.
    """
    y = np.asarray(y, dtype=complex).ravel()
    d = p.degree
    comp = np.zeros((y.size, d, d), dtype=complex)
    if d > 1:
        idx = np.arange(d - 1)
        comp[:, idx + 1, idx] = 1.0
    low = np.broadcast_to(np.asarray(p.lower, dtype=complex), (y.size, d)).copy()
    low[:, 0] -= y
    comp[:, :, -1] = -low
    roots = np.linalg.eigvals(comp)
    target = y[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(polish):
            dp = p.derivative(roots)
            step = (p(roots) - target) / dp
            ok = np.isfinite(step) & (np.abs(dp) > 1e-12)
            roots = np.where(ok, roots - step, roots)
    resid = np.abs(p(roots) - target)
    bad = resid > 1e-8 * (1.0 + np.abs(target))
    if np.any(bad):
        raise ConvergenceError(f"preimage solve failed, max residual {float(np.max(resid)):.3e}")
    return roots


def _tree_depths(count: int, d: int, depth: int) -> list[int]:
    """Depths k of full preimage trees, d^k chains each, adding up to count."""
    out = []
    rest = count
    k = depth
    while rest:
        while d**k > rest:
            k -= 1
        out.append(k)
        rest -= d**k
    return out


def equilibrium_sample(p: Poly1D, depth: int, count: int, seed: int) -> np.ndarray:
    """
    Samples of the measure of maximal entropy by backward iteration.

    Chains start at the escape radius.  count is split into blocks of d^k
    chains (its base-d digits); the last k steps of a block enumerate the
    whole preimage tree of one random point, the earlier steps are random
    branch choices from a seeded generator, shared inside the block.
    """
    if depth < 20:
        raise ValueError("depth must be >= 20")
    if count < 1:
        raise ValueError("count must be >= 1")
    d = p.degree
    ks = _tree_depths(count, d, depth)
    sizes = [d**k for k in ks]
    k_chain = np.repeat(np.asarray(ks), sizes)
    tree = np.repeat(np.arange(len(ks)), sizes)
    local = np.concatenate([np.arange(s) for s in sizes])
    rng = np.random.default_rng(seed)
    z = np.full(count, complex(p.escape_radius))
    rows = np.arange(count)
    for step in range(depth):
        roots = preimages(p, z)
        tree_choice = rng.integers(0, d, size=len(ks))
        digit = depth - 1 - step
        enumerated = digit < k_chain
        choice = np.where(enumerated, (local // d ** np.minimum(digit, k_chain)) % d, tree_choice[tree])
        z = roots[rows, choice]
    return z


def chi_birkhoff_1d(p: Poly1D, sample: Sequence[complex] | np.ndarray) -> float:
    pts = np.asarray(sample, dtype=complex).ravel()
    if pts.size == 0:
        raise ValueError("sample is empty")
    dp = np.abs(p.derivative(pts))
    if np.any(dp == 0):
        raise ValueError("sample contains a critical point of p")
    return float(np.mean(np.log(dp)))


def count_ramification(p: Poly1D, Q: Disk, n: int, *, grid: int = 33) -> int:
    """
    Critical points of p^n over Q, with multiplicity, from the critical orbits.
    Q must stay above REGION_GREEN_FLOOR in G_p (boundary and an interior grid)
    and meet every orbit at most once.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    pts = np.concatenate([Q.boundary(256), Q.grid(grid)])
    if float(green_1d_array(p, pts).min()) <= REGION_GREEN_FLOOR:
        raise ValueError("Q meets the filled Julia set")
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(1, n + 1):
            pts = p(pts)
            if np.any(Q.contains(pts)):
                raise ValueError(f"Q meets its own {j}-th image; the orbit-once check failed")
    d = p.degree
    total = 0
    for c, mult in critical_points(p):
        z = c
        for j in range(1, n + 1):
            z = p(z)
            if not cmath.isfinite(z):
                break
            if Q.contains(z):
                total += mult * d ** (n - j)
    return int(total)
