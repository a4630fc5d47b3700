from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from contour import Box
from henon import ConvergenceError, HenonMap, Point, differential
from poly1d import preimages
from reports import ExponentEstimate

logger = logging.getLogger("henon_lab.saddle")

ORBIT_CAP = 4096
OVERFLOW_GUARD = 1e250
# kinds
SADDLE, ATTRACTING, REPELLING, NEUTRAL = "saddle", "attracting", "repelling", "neutral"


@dataclass(frozen=True)
class NewtonOptions:
    tol: float = 1e-12
    max_iter: int = 60
    dedupe: float = 1e-6
    # backward sweeps before polishing an itinerary seed
    sweeps: int = 40


@dataclass(frozen=True)
class PeriodicOrbit:
    period: int
    points: tuple[Point, ...]
    # (λ_u, λ_s): eigenvalues of Df^n at points[0], |λ_u| ≥ |λ_s|
    multipliers: tuple[complex, complex]
    kind: str

    @property
    def is_saddle(self) -> bool:
        return self.kind == SADDLE

    @property
    def unstable(self) -> complex:
        return self.multipliers[0]

    @property
    def stable(self) -> complex:
        return self.multipliers[1]

    def to_json(self) -> dict:
        return {
            "period": self.period,
            "points": [[[z.real, z.imag], [w.real, w.imag]] for z, w in self.points],
            "multipliers": [[m.real, m.imag] for m in self.multipliers],
            "type": self.kind,
        }

    @classmethod
    def from_json(cls, raw: dict) -> "PeriodicOrbit":
        pts = tuple((complex(*z), complex(*w)) for z, w in raw["points"])
        mu = tuple(complex(*m) for m in raw["multipliers"])
        return cls(int(raw["period"]), pts, (mu[0], mu[1]), str(raw["type"]))


def classify(lu: complex, ls: complex, tol: float = 1e-9) -> str:
    au, as_ = abs(lu), abs(ls)
    if as_ < 1 - tol and au > 1 + tol:
        return SADDLE
    if au < 1 - tol:
        return ATTRACTING
    if as_ > 1 + tol:
        return REPELLING
    return NEUTRAL


def orbit_multipliers(f: HenonMap, points: Sequence[Point]) -> tuple[complex, complex]:
    M = np.eye(2, dtype=complex)
    for x in points:
        M = differential(f, x) @ M
    eig = np.linalg.eigvals(M)
    lu = complex(eig[np.argmax(np.abs(eig))])
    det = f.jacobian ** len(points)
    # the product is the Jacobian exactly
    ls = det / lu if lu != 0 else complex(eig[np.argmin(np.abs(eig))])
    return lu, ls


@dataclass
class OrbitSearch:
    """Periodic orbits of exact period n plus completeness diagnostics."""

    period: int
    orbits: list[PeriodicOrbit]
    # distinct fixed points of f^n found, all periods dividing n
    found_points: int
    expected_points: int
    failed_seeds: int
    seeds: int

    @property
    def saturation(self) -> float:
        return self.found_points / self.expected_points

    def saddles(self) -> list[PeriodicOrbit]:
        return [o for o in self.orbits if o.is_saddle]

    def __iter__(self) -> Iterator[PeriodicOrbit]:
        return iter(self.orbits)

    def __len__(self) -> int:
        return len(self.orbits)

    def __getitem__(self, i: int) -> PeriodicOrbit:
        return self.orbits[i]

    def to_json(self) -> dict:
        return {
            "period": self.period,
            "orbits": [o.to_json() for o in self.orbits],
            "found_points": self.found_points,
            "expected_points": self.expected_points,
            "saturation": self.saturation,
            "failed_seeds": self.failed_seeds,
            "seeds": self.seeds,
        }


def _iterate_with_jacobian(f: HenonMap, z, w, n: int):
    """f^n and Df^n for arrays of points; the matrix as four arrays."""
    m11 = np.ones_like(z)
    m12 = np.zeros_like(z)
    m21 = np.zeros_like(z)
    m22 = np.ones_like(z)
    for _ in range(n):
        for fac in f.factors:
            dp = fac.p.derivative(z)
            # [[p', a], [a, 0]] @ M
            m11, m12, m21, m22 = dp * m11 + fac.a * m21, dp * m12 + fac.a * m22, fac.a * m11, fac.a * m12
            z, w = fac.forward(z, w)
    return z, w, m11, m12, m21, m22


def _newton_grid(f: HenonMap, n: int, seeds_z, seeds_w, opts: NewtonOptions):
    z = np.asarray(seeds_z, dtype=complex).copy()
    w = np.asarray(seeds_w, dtype=complex).copy()
    done = np.zeros(z.size, dtype=bool)
    alive = np.ones(z.size, dtype=bool)
    big = 1e3 * max(1.0, f.escape_radius)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for _ in range(opts.max_iter):
            act = alive & ~done
            if not act.any():
                break
            zi, wi = z[act], w[act]
            fz, fw, a, b, c, e = _iterate_with_jacobian(f, zi, wi, n)
            rz, rw = fz - zi, fw - wi
            a = a - 1
            e = e - 1
            det = a * e - b * c
            sz = (e * rz - b * rw) / det
            sw = (a * rw - c * rz) / det
            zi, wi = zi - sz, wi - sw
            z[act], w[act] = zi, wi
            scale = 1.0 + np.abs(zi) + np.abs(wi)
            conv = np.abs(sz) + np.abs(sw) <= opts.tol * scale
            lost = ~np.isfinite(zi) | ~np.isfinite(wi) | (np.abs(zi) > big) | (np.abs(wi) > big)
            idx = np.nonzero(act)[0]
            done[idx[conv & ~lost]] = True
            alive[idx[lost]] = False
    return z[done], w[done], int(np.count_nonzero(~done))


def _factor_sequence(f: HenonMap, n: int):
    return [fac for _ in range(n) for fac in f.factors]


def _shooting_residual(seq, z):
    N = len(seq)
    out = np.empty_like(z)
    for k, fac in enumerate(seq):
        prev = seq[k - 1]
        out[..., k] = z[..., (k + 1) % N] - fac.a * prev.a * z[..., k - 1] - fac.p(z[..., k])
    return out


def _shooting_newton(seq, z, opts: NewtonOptions):
    """
    Multiple shooting on z_{k+1} = a_k a_{k-1} z_{k-1} + p_k(z_k), cyclic,
    for a batch of candidate orbits (rows of z).
    """
    N = len(seq)
    K = z.shape[0]
    ok = np.zeros(K, dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(opts.max_iter):
            F = _shooting_residual(seq, z)
            J = np.zeros((K, N, N), dtype=complex)
            for k, fac in enumerate(seq):
                J[:, k, (k + 1) % N] += 1.0
                J[:, k, k] -= fac.p.derivative(z[:, k])
                J[:, k, (k - 1) % N] -= fac.a * seq[k - 1].a
            finite = np.all(np.isfinite(F), axis=1)
            cond_ok = finite & (np.abs(np.linalg.det(J)) > 1e-300) if N > 0 else finite
            step = np.zeros_like(z)
            if cond_ok.any():
                step[cond_ok] = np.linalg.solve(J[cond_ok], F[cond_ok][..., None])[..., 0]
            z = np.where(cond_ok[:, None], z - step, z)
            size = np.max(np.abs(step), axis=1)
            ok = cond_ok & (size <= opts.tol * (1.0 + np.max(np.abs(z), axis=1)))
            if ok.all():
                break
    return z, ok


def _itinerary_seeds(f: HenonMap, n: int, opts: NewtonOptions, limit: int) -> np.ndarray:
    """
    Inverse-branch sweeps along every symbolic itinerary.  Branch s of the
    k-th factor is the preimage nearest the s-th root of p_k.
    """
    seq = _factor_sequence(f, n)
    N = len(seq)
    degrees = [fac.degree for fac in seq]
    count = math.prod(degrees)
    if count > limit:
        return np.zeros((0, N), dtype=complex)
    words = np.array(list(itertools.product(*[range(dk) for dk in degrees])), dtype=int).reshape(count, N)
    anchors = [preimages(fac.p, [0j])[0] for fac in seq]
    z = np.stack([anchors[k][words[:, k]] for k in range(N)], axis=1)
    rows = np.arange(count)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(opts.sweeps):
            for k in range(N - 1, -1, -1):
                fac = seq[k]
                y = z[:, (k + 1) % N] - fac.a * seq[k - 1].a * z[:, k - 1]
                if not np.all(np.isfinite(y)):
                    return z
                try:
                    roots = preimages(fac.p, y)
                except ConvergenceError:
                    return z
                dist = np.abs(roots - anchors[k][words[:, k]][:, None])
                z[:, k] = roots[rows, np.argmin(dist, axis=1)]
    return z


def _points_from_shooting(f: HenonMap, n: int, zrow: np.ndarray) -> list[Point]:
    m = len(f.factors)
    N = len(zrow)
    last = f.factors[-1]
    pts = []
    for i in range(n):
        k = i * m
        pts.append((complex(zrow[k]), complex(last.a * zrow[(k - 1) % N])))
    return pts


def _close(x: Point, y: Point, tol: float) -> bool:
    return abs(x[0] - y[0]) + abs(x[1] - y[1]) < tol


def _orbit_of(f: HenonMap, x: Point, n: int) -> list[Point]:
    pts = [x]
    for _ in range(n - 1):
        pts.append(f.step(*pts[-1]))
    return pts


def find_periodic_orbits(
    f: HenonMap,
    n: int,
    box: Box | None = None,
    grid: int = 32,
    opts: NewtonOptions | None = None,
    *,
    cap: int = ORBIT_CAP,
    itineraries: bool = True,
) -> OrbitSearch:
    """
    Orbits of exact period n.  Seeds: a grid² sweep of Newton on f^n − x
    over `box` (z-plane, with w = a·z) and, when the count allows it, every
    inverse-branch itinerary polished by multiple shooting.
    """
    if n < 1:
        raise ValueError("period must be >= 1")
    opts = opts or NewtonOptions()
    expected = f.degree**n
    if expected > cap:
        raise ValueError(f"d^n = {expected} exceeds the orbit cap {cap}")
    R = f.escape_radius
    if box is None:
        box = Box(complex(-R, -R), complex(R, R))

    xs = np.linspace(box.lo.real, box.hi.real, grid)
    ys = np.linspace(box.lo.imag, box.hi.imag, grid)
    zs = (xs[:, None] + 1j * ys[None, :]).ravel()
    a_last = f.factors[-1].a
    gz, gw, failed = _newton_grid(f, n, zs, a_last * zs, opts)
    candidates: list[Point] = [(complex(z), complex(w)) for z, w in zip(gz, gw)]
    seeds = zs.size

    if itineraries:
        seq = _factor_sequence(f, n)
        zrows = _itinerary_seeds(f, n, opts, cap)
        if zrows.shape[0]:
            zrows, ok = _shooting_newton(seq, zrows, opts)
            seeds += zrows.shape[0]
            failed += int(np.count_nonzero(~ok))
            for row in zrows[ok]:
                candidates.append(_points_from_shooting(f, n, row)[0])

    # distinct fixed points of f^n, any period dividing n
    fixed: list[Point] = []
    orbits: list[PeriodicOrbit] = []
    for x in candidates:
        if any(_close(x, y, opts.dedupe) for y in fixed):
            continue
        pts = _orbit_of(f, x, n)
        back = f.step(*pts[-1])
        scale = 1.0 + abs(x[0]) + abs(x[1])
        if not _close(back, x, 1e-8 * scale):
            failed += 1
            continue
        q = next(q for q in range(1, n + 1) if n % q == 0 and (q == n or _close(pts[q], x, opts.dedupe)))
        cycle = pts[:q]
        for y in cycle:
            if not any(_close(y, u, opts.dedupe) for u in fixed):
                fixed.append(y)
        if q != n:
            continue
        start = min(range(n), key=lambda i: (round(cycle[i][0].real, 9), round(cycle[i][0].imag, 9)))
        cycle = cycle[start:] + cycle[:start]
        lu, ls = orbit_multipliers(f, cycle)
        orbits.append(PeriodicOrbit(n, tuple(cycle), (lu, ls), classify(lu, ls)))

    orbits.sort(key=lambda o: (o.points[0][0].real, o.points[0][0].imag))
    out = OrbitSearch(n, orbits, len(fixed), expected, failed, seeds)
    if out.found_points < expected:
        logger.info("Period %d: found %d of %d fixed points of f^n", n, out.found_points, expected)
    return out


def seed_saddle(f: HenonMap, opts: NewtonOptions | None = None) -> PeriodicOrbit:
    """The fixed saddle with the strongest expansion."""
    saddles = find_periodic_orbits(f, 1, opts=opts).saddles()
    if not saddles:
        raise ValueError("map has no saddle fixed point")
    return max(saddles, key=lambda o: abs(o.unstable))


def chi_from_saddles(f: HenonMap, orbits: Sequence[PeriodicOrbit]) -> tuple[ExponentEstimate, ExponentEstimate]:
    orbits = list(orbits)
    if not orbits:
        raise ValueError("no orbits given")
    periods = {o.period for o in orbits}
    if len(periods) != 1:
        raise ValueError(f"mixed periods {sorted(periods)}")
    if not all(o.is_saddle for o in orbits):
        raise ValueError("all orbits must be saddles")
    n = periods.pop()
    plus = np.array([math.log(abs(o.unstable)) / n for o in orbits])
    with np.errstate(divide="ignore"):
        minus = np.array([np.log(abs(o.stable)) / n for o in orbits])
    params = {"period": n, "orbits": len(orbits)}
    cp = ExponentEstimate(float(plus.mean()), "saddle", params, float(plus.std()), "plus", f.degree)
    if f.jacobian == 0:
        cm = ExponentEstimate(float("-inf"), "saddle", params, 0.0, "minus", f.degree)
    else:
        # per orbit χ⁻ = log|Jac| − χ⁺ exactly
        cm_vals = math.log(abs(f.jacobian)) - plus
        cm = ExponentEstimate(float(cm_vals.mean()), "saddle", params, float(minus.std()), "minus", f.degree)
    if cp.below_floor:
        logger.warning("Saddle estimate %.6f is below log d", cp.value)
        cp = cp.with_flag("below_log_d")
    return cp, cm


# ---- unstable manifolds ------------------------------------------------------


@dataclass(eq=False)
class UnstableCurve:
    """
    ψ(t) = Σ c_k t^k with f^n∘ψ = ψ(Λ·), Λ the unstable multiplier of the
    orbit.  coefficients has shape (M + 1, 2).
    """

    f: HenonMap
    orbit: PeriodicOrbit
    coefficients: np.ndarray
    truncation_order: int
    convergence_radius_estimate: float
    residual: float = field(default=float("nan"))

    @property
    def multiplier(self) -> complex:
        return self.orbit.unstable

    @property
    def period(self) -> int:
        return self.orbit.period

    def series(self, t):
        t = np.asarray(t, dtype=complex)
        z = np.zeros_like(t)
        w = np.zeros_like(t)
        for cz, cw in self.coefficients[::-1]:
            z = z * t + cz
            w = w * t + cw
        return z, w

    def series_derivative(self, t):
        t = np.asarray(t, dtype=complex)
        k = np.arange(1, self.coefficients.shape[0])
        dc = self.coefficients[1:] * k[:, None]
        dz = np.zeros_like(t)
        dw = np.zeros_like(t)
        for cz, cw in dc[::-1]:
            dz = dz * t + cz
            dw = dw * t + cw
        return dz, dw

    def to_json(self) -> dict:
        return {
            "orbit": self.orbit.to_json(),
            "truncation_order": self.truncation_order,
            "convergence_radius_estimate": self.convergence_radius_estimate,
            "residual": self.residual,
            "coefficients": [[[c.real, c.imag] for c in row] for row in self.coefficients],
        }


def _trunc_mul(x: np.ndarray, y: np.ndarray, K: int) -> np.ndarray:
    return np.convolve(x, y)[: K + 1]


def _compose_series(f: HenonMap, n: int, cz: np.ndarray, cw: np.ndarray, K: int):
    """Coefficients of f^n(ψ(t)) up to t^K."""
    for _ in range(n):
        for fac in f.factors:
            pz = np.zeros(K + 1, dtype=complex)
            pz[0] = fac.p.coefficients[-1]
            for c in reversed(fac.p.coefficients[:-1]):
                pz = _trunc_mul(pz, cz, K)
                pz[0] += c
            cz, cw = fac.a * cw + pz, fac.a * cz
    return cz, cw


def _unit_eigenvector(M: np.ndarray, lam: complex) -> np.ndarray:
    # null vector of M − λI
    A = M - lam * np.eye(2)
    v = np.array([-A[0, 1], A[0, 0]]) if np.abs(A[0]).max() >= np.abs(A[1]).max() else np.array([-A[1, 1], A[1, 0]])
    if np.linalg.norm(v) == 0:
        v = np.array([1.0 + 0j, 0j])
    v = v / np.linalg.norm(v)
    first = v[0] if abs(v[0]) > 1e-14 else v[1]
    return v * (abs(first) / first)


def _solve_series(f: HenonMap, orbit: PeriodicOrbit, M: int) -> np.ndarray:
    n = orbit.period
    x0 = orbit.points[0]
    A = np.eye(2, dtype=complex)
    for x in orbit.points:
        A = differential(f, x) @ A
    lam = orbit.unstable
    c = np.zeros((M + 1, 2), dtype=complex)
    c[0] = x0
    if M >= 1:
        c[1] = _unit_eigenvector(A, lam)
    lam_k = lam
    for k in range(2, M + 1):
        lam_k = lam_k * lam
        Fz, Fw = _compose_series(f, n, c[: k + 1, 0].copy(), c[: k + 1, 1].copy(), k)
        N_k = np.array([Fz[k], Fw[k]])
        c[k] = np.linalg.solve(lam_k * np.eye(2) - A, N_k)
        size = np.abs(c[k]).max()
        if not np.isfinite(size) or size > OVERFLOW_GUARD:
            raise ConvergenceError(f"unstable series blew up at order {k}")
    return c


def _radius(c: np.ndarray, cap: float) -> float:
    M = c.shape[0] - 1
    norms = np.linalg.norm(c, axis=1)
    best = cap
    for k in range(max(1, M // 2), M + 1):
        if norms[k] > 0:
            best = min(best, norms[k] ** (-1.0 / k))
    return float(best)


def unstable_series(
    f: HenonMap,
    orbit: PeriodicOrbit,
    order: int | None = None,
    *,
    max_order: int = 640,
    radius_cap: float = 1e6,
    residual_tol: float = 1e-8,
) -> UnstableCurve:
    """
    ψ solved order by order from (Λ^k − A) c_k = N_k.  With order=None the
    order starts at 40 and doubles until consecutive truncations agree on
    |t| ≤ r/4.  Every returned series, explicit order or not, passes the
    functional equation check on |Λt| ≤ r/2 within residual_tol.
    """
    if not orbit.is_saddle:
        raise ValueError(f"orbit is {orbit.kind}, not a saddle")
    if order is not None:
        if order < 1:
            raise ValueError("order must be >= 1")
        c = _solve_series(f, orbit, order)
        curve = UnstableCurve(f, orbit, c, order, _radius(c, radius_cap))
    else:
        curve = _converged_series(f, orbit, max_order, radius_cap)
    curve.residual = _functional_residual(curve)
    if not curve.residual <= residual_tol:
        raise ConvergenceError(f"functional equation residual {curve.residual:.3e} at order {curve.truncation_order}")
    return curve


def _converged_series(f: HenonMap, orbit: PeriodicOrbit, max_order: int, radius_cap: float) -> UnstableCurve:
    M = 40
    c = _solve_series(f, orbit, M)
    while True:
        r = _radius(c, radius_cap)
        M2 = 2 * M
        c2 = _solve_series(f, orbit, M2)
        t = (r / 4) * np.exp(2j * np.pi * np.arange(64) / 64)
        a = UnstableCurve(f, orbit, c, M, r).series(t)
        b = UnstableCurve(f, orbit, c2, M2, r).series(t)
        gap = max(np.abs(a[0] - b[0]).max(), np.abs(a[1] - b[1]).max())
        scale = 1.0 + np.abs(c[0]).max()
        c, M = c2, M2
        if gap <= 1e-9 * scale:
            break
        if M >= max_order:
            raise ConvergenceError(f"truncations still differ by {gap:.3e} at order {M}")
    return UnstableCurve(f, orbit, c, M, _radius(c, radius_cap))


def _functional_residual(curve: UnstableCurve, samples: int = 50) -> float:
    lam = curve.multiplier
    r = curve.convergence_radius_estimate
    t = (r / (2 * abs(lam))) * np.exp(2j * np.pi * (np.arange(samples) + 0.5) / samples)
    z, w = curve.series(t)
    z, w = curve.f.iterate(z, w, curve.period)
    z2, w2 = curve.series(lam * t)
    scale = np.maximum(1.0, np.abs(z2) + np.abs(w2))
    return float(np.max((np.abs(z - z2) + np.abs(w - w2)) / scale))


def _levels(curve: UnstableCurve, t: np.ndarray) -> np.ndarray:
    """Minimal m ≥ 0 with |t/Λ^m| ≤ r/2."""
    lam = abs(curve.multiplier)
    half = curve.convergence_radius_estimate / 2
    with np.errstate(divide="ignore"):
        m = np.ceil(np.log(np.abs(t) / half) / math.log(lam))
    return np.maximum(np.nan_to_num(m, neginf=0.0), 0).astype(int)


def unstable_jet(curve: UnstableCurve, t):
    """
    (z, w, dz/dt, dw/dt, steps): ψ and ψ′ evaluated inside the series
    domain at t/Λ^m, with steps = n·m applications of f still to go.
    """
    t = np.asarray(t, dtype=complex).ravel()
    m = _levels(curve, t)
    lam = curve.multiplier
    scale = lam ** (-m.astype(float))
    s = t * scale
    z, w = curve.series(s)
    dz, dw = curve.series_derivative(s)
    return z, w, dz * scale, dw * scale, curve.period * m


def curve_sample(curve: UnstableCurve, t) -> tuple[np.ndarray, np.ndarray]:
    """ψ(t) for an array of t, pushing forward from the series domain."""
    z, w, _, _, steps = unstable_jet(curve, t)
    out_z, out_w = z.copy(), w.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(int(steps.max(initial=0))):
            sel = steps > k
            out_z[sel], out_w[sel] = curve.f.step(out_z[sel], out_w[sel])
    if not (np.all(np.isfinite(out_z)) and np.all(np.isfinite(out_w))):
        raise ConvergenceError("unstable curve evaluation overflowed")
    return out_z, out_w


def unstable_eval(curve: UnstableCurve, t: complex) -> Point:
    z, w = curve_sample(curve, np.array([complex(t)]))
    return complex(z[0]), complex(w[0])
