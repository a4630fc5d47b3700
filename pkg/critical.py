from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Literal, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

from contour import TWO_PI, AnnulusSector, Box, Disk, Square, circle, expm1_direction, grid_boxes, winding_number
from henon import ConvergenceError, HenonMap, PushedBottcher, bottcher_pushforward, fiber_projection, green_array
from poly1d import REGION_GREEN_FLOOR
from saddle import UnstableCurve, unstable_eval, unstable_jet

logger = logging.getLogger("henon_lab.critical")

Region = Disk | Square | AnnulusSector
Evaluator = Callable[[np.ndarray], PushedBottcher]
Mode = Literal["critical", "slice"]


@dataclass(frozen=True)
class BoxOptions:
    per_side: int = 16
    max_per_side: int = 1024
    initial_grid: int = 8
    # relative slack on the Green-value window when discarding boxes
    margin: float = 0.02
    floor: float = 1e-10
    max_retries: int = 12
    cluster_side: float = 1e-7
    extra_iter: int = 64
    newton_tol: float = 1e-13
    newton_steps: int = 40
    max_boxes: int = 4_000_000


@dataclass(frozen=True)
class CriticalDatum:
    t: complex
    location: tuple[complex, complex]
    green_value: float
    multiplicity: int
    fiber_value: complex

    def to_json(self) -> dict:
        return {
            "t": [self.t.real, self.t.imag],
            "location": [[self.location[0].real, self.location[0].imag], [self.location[1].real, self.location[1].imag]],
            "green_value": self.green_value,
            "multiplicity": self.multiplicity,
            "fiber_value": [self.fiber_value.real, self.fiber_value.imag],
        }


@dataclass(frozen=True)
class _Zero:
    t: complex
    multiplicity: int
    log_value: complex


class _GridRetry(Exception):
    pass


def region_window(region: Region) -> tuple[float, float]:
    """Range of log|ζ| over the region."""
    if isinstance(region, AnnulusSector):
        return region.g_lo, region.g_hi
    lo, hi = region.modulus_range()
    if lo <= 0:
        raise ValueError("region must stay away from ζ = 0")
    return math.log(lo), math.log(hi)


def region_contains_log(region: Region, L: complex) -> bool:
    if not cmath.isfinite(L):
        return False
    if isinstance(region, AnnulusSector):
        return bool(region.contains_log(L))
    return bool(region.contains(cmath.exp(L)))


def generic_point(region: Region) -> complex:
    """A deterministic point of the region away from its boundary and axes."""
    if isinstance(region, AnnulusSector):
        g = region.g_lo + 0.4137 * (region.g_hi - region.g_lo)
        return cmath.exp(complex(g, region.theta0 + 0.3719 * region.width))
    if isinstance(region, Disk):
        return region.center + 0.3137 * region.radius * cmath.exp(0.7193j)
    return region.center + region.half * complex(0.2173, 0.1391)


def curve_evaluator(curve: UnstableCurve, extra_iter: int = 64) -> Evaluator:
    """t ↦ φ⁺(ψ(t)) in log form, with d/dt."""

    def evaluate(t: np.ndarray) -> PushedBottcher:
        z, w, dz, dw, steps = unstable_jet(curve, t)
        return bottcher_pushforward(curve.f, z, w, dz, dw, steps, extra_iter=extra_iter)

    return evaluate


def line_evaluator(f: HenonMap, w0: complex, N: int, extra_iter: int = 64) -> Evaluator:
    """t ↦ φ⁺(f^N(t, w0))."""

    def evaluate(t: np.ndarray) -> PushedBottcher:
        t = np.asarray(t, dtype=complex).ravel()
        one = np.ones_like(t)
        return bottcher_pushforward(f, t, w0 * one, one, 0 * one, N, extra_iter=extra_iter)

    return evaluate


# ---- adaptive boxes ----------------------------------------------------------

DROP, SPLIT, ACCEPT, CLUSTER, REFINE = "drop", "split", "accept", "cluster", "refine"


def _classify(box: Box, t: np.ndarray, ev: PushedBottcher, mode: Mode, log_zeta: complex, g_lo, g_hi, opts):
    G = ev.green
    D = ev.dlog_phi
    lo_cut = g_lo * (1 - opts.margin)
    hi_cut = g_hi * (1 + opts.margin)
    usable = (G > 0) & np.isfinite(D)
    if mode == "slice":
        usable &= ev.valid
    if not usable.all():
        return (DROP, 0) if G.max() < lo_cut else (SPLIT, 0)

    dt = np.roll(t, -1) - t
    if np.max(np.abs(D * dt)) > 0.5:
        return SPLIT, 0
    # ∮ D dt vanishes unless the box surrounds points of K⁺
    hole = np.sum(0.5 * (D + np.roll(D, -1)) * dt) / (TWO_PI * 1j)
    if abs(hole) > 0.5:
        return SPLIT, 0
    if G.max() < lo_cut or G.min() > hi_cut:
        return DROP, 0

    if mode == "critical":
        values = D
    else:
        E = ev.log_phi - log_zeta
        values = expm1_direction(E.real + 1j * np.angle(np.exp(1j * E.imag)))
    wind, step = winding_number(values)
    wind = float(wind)
    if not (math.isfinite(wind) and float(step) < 1.0 and abs(wind - round(wind)) < 0.1):
        return REFINE, 0
    k = int(round(wind))
    if k == 0:
        return DROP, 0
    if k < 0:
        return REFINE, 0
    if k == 1:
        return ACCEPT, 1
    if box.side <= opts.cluster_side * (1.0 + abs(box.center)):
        return CLUSTER, k
    return SPLIT, 0


# grid offset per attempt, in units of half a grid cell
GRID_SHIFT = 0.0311 + 0.0173j


def _perturbed_ratio(retries: int) -> float:
    return 0.5 + 0.07 * ((retries % 5) + 1) * (-1) ** retries


def _newton(evaluate: Evaluator, t0: np.ndarray, mult: np.ndarray, side: np.ndarray, mode: Mode, log_zeta, opts):
    t = t0.astype(complex).copy()
    done = np.zeros(t.size, dtype=bool)
    with np.errstate(all="ignore"):
        for _ in range(opts.newton_steps):
            act = ~done
            if not act.any():
                break
            ta = t[act]
            ev = evaluate(ta)
            if mode == "critical":
                eps = np.maximum(1e-4 * side[act], 1e-9 * (1.0 + np.abs(ta)))
                dp = evaluate(ta + eps).dlog_phi
                dm = evaluate(ta - eps).dlog_phi
                deriv = (dp - dm) / (2 * eps)
                step = mult[act] * ev.dlog_phi / deriv
            else:
                E = ev.log_phi - log_zeta
                E = E - TWO_PI * 1j * np.round(E.imag / TWO_PI)
                step = E / ev.dlog_phi
            step = np.where(np.isfinite(step), step, 0.0)
            ta = ta - step
            t[act] = ta
            idx = np.nonzero(act)[0]
            done[idx[np.abs(step) <= opts.newton_tol * (1.0 + np.abs(ta))]] = True
    return t, done


def _isolate(
    evaluate: Evaluator,
    radius: float,
    g_lo: float,
    g_hi: float,
    mode: Mode,
    opts: BoxOptions,
    log_zeta: complex = 0j,
    *,
    disk: bool = True,
) -> list[_Zero]:
    """
    Zeros of D = h'/h (mode "critical") or of h/ζ − 1 (mode "slice") in
    |t| ≤ radius (or the square of that half-side when disk=False), among
    boxes whose Green values can reach [g_lo, g_hi].
    """
    k = max(opts.initial_grid, 1)
    for attempt in range(opts.max_retries + 1):
        # no grid line on either axis: zeros of real maps sit on Im t = 0
        shift = GRID_SHIFT * (attempt + 1) * radius / k
        half = radius + max(abs(shift.real), abs(shift.imag))
        boxes = [b for b in grid_boxes(half, k, shift) if not disk or b.min_modulus() <= radius]
        try:
            zeros = _isolate_boxes(evaluate, boxes, radius, g_lo, g_hi, mode, opts, log_zeta, disk)
        except _GridRetry:
            logger.warning("Zero stuck on a box edge, shifting the grid (attempt %d)", attempt + 1)
            continue
        return zeros
    raise ConvergenceError("initial grid keeps hitting zeros")


def _isolate_boxes(evaluate, boxes, radius, g_lo, g_hi, mode, opts, log_zeta, disk) -> list[_Zero]:
    pending: list[tuple[Box, Box | None]] = [(b, None) for b in boxes]
    zeros: list[_Zero] = []
    processed = 0
    while pending:
        processed += len(pending)
        if processed > opts.max_boxes:
            raise ConvergenceError(f"box budget exhausted after {processed} boxes")
        n = opts.per_side
        t_all = np.concatenate([b.boundary(n) for b, _ in pending])
        ev_all = evaluate(t_all)
        outcome: list[tuple[str, int]] = []
        for i, (box, _) in enumerate(pending):
            sl = slice(4 * n * i, 4 * n * (i + 1))
            t = t_all[sl]
            ev = PushedBottcher(*(a[sl] for a in ev_all))
            res = _classify(box, t, ev, mode, log_zeta, g_lo, g_hi, opts)
            per = n
            while res[0] == REFINE and per < opts.max_per_side:
                per *= 2
                t = box.boundary(per)
                res = _classify(box, t, evaluate(t), mode, log_zeta, g_lo, g_hi, opts)
            outcome.append(res)

        bad_parents = {id(parent) for (box, parent), res in zip(pending, outcome) if res[0] == REFINE}
        if any(parent is None for (box, parent), res in zip(pending, outcome) if res[0] == REFINE):
            raise _GridRetry()

        nxt: list[tuple[Box, Box | None]] = []
        resplit: dict[int, Box] = {}
        accepted: list[tuple[Box, int]] = []
        for (box, parent), (kind, k) in zip(pending, outcome):
            if parent is not None and id(parent) in bad_parents:
                resplit[id(parent)] = parent
                continue
            if kind == SPLIT:
                if box.side / 2 < opts.floor:
                    raise ConvergenceError(f"box {box.to_json()} reached the size floor")
                for child in box.split():
                    if not disk or child.min_modulus() <= radius:
                        nxt.append((child, box))
            elif kind in (ACCEPT, CLUSTER):
                accepted.append((box, k))
        for parent in resplit.values():
            if parent.retries >= opts.max_retries:
                logger.debug("Box %s still has a zero on its edge after %d re-splits", parent.to_json(), parent.retries)
                raise _GridRetry()
            again = replace(parent, retries=parent.retries + 1)
            for child in again.split(_perturbed_ratio(again.retries)):
                if not disk or child.min_modulus() <= radius:
                    nxt.append((child, again))

        if accepted:
            centers = np.array([b.center for b, _ in accepted])
            mult = np.array([k for _, k in accepted], dtype=float)
            sides = np.array([b.side for b, _ in accepted])
            t, ok = _newton(evaluate, centers, mult, sides, mode, log_zeta, opts)
            final = evaluate(t)
            for i, (box, k) in enumerate(accepted):
                inside = bool(box.contains(t[i], pad=1e-6 * box.side))
                if ok[i] and inside:
                    zeros.append(_Zero(complex(t[i]), k, complex(final.log_phi[i])))
                elif k > 1:
                    zeros.append(_Zero(complex(box.center), k, complex(evaluate(np.array([box.center])).log_phi[0])))
                else:
                    if box.side / 2 < opts.floor:
                        raise ConvergenceError(f"Newton failed in box {box.to_json()}")
                    nxt.extend((child, box) for child in box.split())
        pending = nxt
    if disk:
        zeros = [z for z in zeros if abs(z.t) <= radius]
    else:
        zeros = [z for z in zeros if max(abs(z.t.real), abs(z.t.imag)) <= radius]
    zeros.sort(key=lambda z: (round(z.t.real, 12), round(z.t.imag, 12)))
    return zeros


def critical_multiplicity(evaluate: Evaluator, t: complex, radius: float, n: int = 256) -> int:
    """Winding number of h'/h on a small circle around t."""
    pts = circle(t, radius, n)
    wind, step = winding_number(evaluate(pts).dlog_phi)
    return int(round(float(wind)))


# ---- truncation radius --------------------------------------------------------


@dataclass(frozen=True)
class TruncationRadius:
    rho: float
    admissible: bool
    # min of G⁺∘ψ on the base circle and that circle's radius
    min_green: float
    base_radius: float
    k: int

    def to_json(self) -> dict:
        return {
            "rho": self.rho,
            "admissible": self.admissible,
            "min_green": self.min_green,
            "base_radius": self.base_radius,
            "k": self.k,
        }


def _circle_min_green(evaluate: Evaluator, radius: float, n: int = 256, zoom: int = 3, center: complex = 0j) -> float:
    """min G on |t − center| = radius: a coarse scan, then zooms around the minimum."""
    theta = np.arange(n) * (TWO_PI / n)
    g = evaluate(center + radius * np.exp(1j * theta)).green
    best = float(g.min())
    phase = float(theta[int(np.argmin(g))])
    width = TWO_PI / n
    for _ in range(zoom):
        th = phase + np.linspace(-width, width, 33)
        gz = evaluate(center + radius * np.exp(1j * th)).green
        j = int(np.argmin(gz))
        best = min(best, float(gz[j]))
        phase = float(th[j])
        width /= 8
    return best


def truncation_radius(
    f: HenonMap, curve: UnstableCurve, level: float, *, margin: float = 0.02, scans: int = 32
) -> TruncationRadius:
    """
    A radius rho with G⁺∘ψ ≥ level·(1 + margin) on |t| = rho, obtained from a
    circle inside the series domain that misses K⁺, scaled by |Λ|^k.
    Without such a circle, the covering radius is returned, flagged
    non-admissible.
    """
    evaluate = curve_evaluator(curve)
    lam = abs(curve.multiplier)
    d_n = float(f.degree) ** curve.period
    r_a = curve.convergence_radius_estimate / (2 * lam)
    radii = r_a * lam ** (np.arange(scans) / scans)
    mins = [_circle_min_green(evaluate, float(r)) for r in radii]
    j = int(np.argmax(mins))
    g0 = mins[j]
    target = level * (1 + margin)
    if g0 > 1e-8:
        k = max(0, math.ceil(math.log(target / g0) / math.log(d_n)))
        return TruncationRadius(float(radii[j]) * lam**k, True, g0, float(radii[j]), k)
    gmax = float(evaluate(circle(0j, r_a, 256)).green.max())
    k = 0
    if gmax > 0:
        k = max(0, math.ceil(math.log(target / gmax) / math.log(d_n)))
    logger.warning("No circle around the saddle avoids K⁺; truncation radius is not admissible")
    return TruncationRadius(r_a * lam**k, False, g0, r_a, k)


# ---- tangencies and slices --------------------------------------------------------


def find_tangencies(
    f: HenonMap, curve: UnstableCurve, region: Region, rho: float, opts: BoxOptions | None = None
) -> list[CriticalDatum]:
    """Critical points of t ↦ φ⁺(ψ(t)) in |t| ≤ rho with φ⁺ value in region."""
    opts = opts or BoxOptions()
    g_lo, g_hi = region_window(region)
    zeros = _isolate(curve_evaluator(curve, opts.extra_iter), rho, g_lo, g_hi, "critical", opts)
    out = []
    for zr in zeros:
        if not region_contains_log(region, zr.log_value):
            continue
        out.append(
            CriticalDatum(
                zr.t, unstable_eval(curve, zr.t), float(zr.log_value.real), zr.multiplicity, cmath.exp(zr.log_value)
            )
        )
    return out


def _slice_zeros(evaluate: Evaluator, zeta: complex, rho: float, opts: BoxOptions, *, disk: bool = True):
    g = math.log(abs(zeta))
    return _isolate(evaluate, rho, g, g, "slice", opts, cmath.log(zeta), disk=disk)


def slice_count(
    f: HenonMap, curve: UnstableCurve, zeta: complex, rho: float, opts: BoxOptions | None = None, *, attempts: int = 8
) -> int:
    """Solutions of φ⁺(ψ(t)) = ζ in |t| ≤ rho."""
    opts = opts or BoxOptions()
    if abs(zeta) <= f.escape_radius:
        raise ValueError(f"|ζ| = {abs(zeta):g} is inside the escape radius")
    evaluate = curve_evaluator(curve, opts.extra_iter)
    z = complex(zeta)
    for attempt in range(attempts):
        try:
            zeros = _slice_zeros(evaluate, z, rho, opts)
            D = evaluate(np.array([zr.t for zr in zeros], dtype=complex)).dlog_phi if zeros else np.array([])
            if np.all(np.abs(D) > 1e-6) and all(zr.multiplicity == 1 for zr in zeros):
                return len(zeros)
        except ConvergenceError as e:
            logger.warning("Slice at ζ = %s failed: %s", z, e)
        z = zeta * cmath.exp(complex(0.0031 * (attempt + 1), 0.0173 * (attempt + 1)))
        logger.warning("Re-sampling the fibre value: ζ = %s", z)
    raise ConvergenceError(f"no transverse fibre near ζ = {zeta} after {attempts} attempts")


@dataclass(frozen=True)
class MassEstimate:
    region: Region
    rho: float
    value: float
    value_scaled: float
    tangencies: int
    slices: int
    tangencies_scaled: int
    slices_scaled: int

    @property
    def spread(self) -> float:
        return abs(self.value - self.value_scaled)

    def to_json(self) -> dict:
        return {
            "region": self.region.to_json(),
            "rho": self.rho,
            "value": self.value,
            "value_scaled": self.value_scaled,
            "tangencies": self.tangencies,
            "slices": self.slices,
            "tangencies_scaled": self.tangencies_scaled,
            "slices_scaled": self.slices_scaled,
        }


def critical_mass_estimate(
    f: HenonMap, curve: UnstableCurve, Q: Region, rho: float, opts: BoxOptions | None = None
) -> MassEstimate:
    """Tangencies over Q per fibre point, at rho and at |Λ|·rho."""
    zeta = generic_point(Q)
    res = []
    for r in (rho, rho * abs(curve.multiplier)):
        tang = find_tangencies(f, curve, Q, r, opts)
        m = sum(c.multiplicity for c in tang)
        n = slice_count(f, curve, zeta, r, opts)
        res.append((m, n))
    (m0, n0), (m1, n1) = res
    return MassEstimate(Q, rho, m0 / n0 if n0 else 0.0, m1 / n1 if n1 else 0.0, m0, n0, m1, n1)


# ---- degree decomposition ------------------------------------------------------------


@dataclass(frozen=True)
class Component:
    degree: int
    slice_weight: float
    clipped: bool = False

    def to_json(self) -> dict:
        return {"degree": self.degree, "slice_weight": self.slice_weight, "clipped": self.clipped}


@dataclass(frozen=True)
class DecompositionReport:
    square: Region
    requested: Region
    rho: float
    components: tuple[Component, ...]
    tangency_mass: float
    slice_total: float
    fibre_points: int

    def to_json(self) -> dict:
        return {
            "square": self.square.to_json(),
            "requested": self.requested.to_json(),
            "rho": self.rho,
            "components": [c.to_json() for c in self.components],
            "tangency_mass": self.tangency_mass,
            "slice_total": self.slice_total,
            "fibre_points": self.fibre_points,
        }


def _lift(evaluate: Evaluator, ts: np.ndarray, path: np.ndarray, opts: BoxOptions):
    """Continue every fibre point t (h(t) = path[0]) along the path of values."""
    t = ts.astype(complex).copy()
    logs = np.log(path[0]) + np.concatenate([[0], np.cumsum(np.log(path[1:] / path[:-1]))])
    for ell in logs[1:]:
        for _ in range(opts.newton_steps):
            ev = evaluate(t)
            E = ev.log_phi - ell
            E = E - TWO_PI * 1j * np.round(E.imag / TWO_PI)
            step = E / ev.dlog_phi
            if not np.all(np.isfinite(step)):
                raise ConvergenceError("path lifting left the domain of φ⁺")
            t = t - step
            if np.all(np.abs(step) <= 1e-12 * (1.0 + np.abs(t))):
                break
        else:
            raise ConvergenceError("path lifting did not converge")
    return t


def _rays_clear(base: complex, values: list[complex], gap: float) -> bool:
    """No critical value sits near the base point or on another's ray."""
    for i, v in enumerate(values):
        if abs(base - v) <= 2 * gap:
            return False
        for j, u in enumerate(values):
            if i == j or u == v:
                continue
            s = ((u - base) * (v - base).conjugate()).real / abs(v - base) ** 2
            if 0 <= s <= 1 and abs(base + s * (v - base) - u) <= gap:
                return False
    return True


def _segment(a: complex, b: complex, step: float) -> np.ndarray:
    n = max(2, int(math.ceil(abs(b - a) / step)) + 1)
    return a + (b - a) * np.linspace(0.0, 1.0, n)


def degree_decomposition(
    f: HenonMap,
    curve: UnstableCurve,
    Q: Region,
    rho: float,
    *,
    delta: float | None = None,
    opts: BoxOptions | None = None,
) -> DecompositionReport:
    """
    Components of {|t| ≤ rho : φ⁺(ψ(t)) ∈ Q^δ} with their degrees, from the
    monodromy of the fibre over a generic ζ₀ around the critical values
    inside Q^δ.
    """
    opts = opts or BoxOptions()
    if isinstance(Q, AnnulusSector):
        raise ValueError("degree decomposition needs a square or a disk")
    size = Q.side if isinstance(Q, Square) else 2 * Q.radius
    Qd = Q.shrink(0.02 * size if delta is None else delta)
    evaluate = curve_evaluator(curve, opts.extra_iter)

    tang = find_tangencies(f, curve, Qd, rho, opts)
    crit_values = [c.fiber_value for c in tang]
    eps = 1e-3 * size
    for i, u in enumerate(crit_values):
        for v in crit_values[i + 1 :]:
            if abs(u - v) > 0:
                eps = min(eps, 0.25 * abs(u - v))
    zeta0 = generic_point(Qd)
    for k in range(8):
        if _rays_clear(zeta0, crit_values, 2 * eps):
            break
        zeta0 = generic_point(Qd) + 0.05 * size * cmath.exp(1j * (k + 1))
    else:
        raise ConvergenceError("no base point with clear paths to the critical values")
    fibre = np.array([zr.t for zr in _slice_zeros(evaluate, zeta0, rho, opts)], dtype=complex)
    N = fibre.size
    if N == 0:
        return DecompositionReport(Qd, Q, rho, (), 0.0, 0.0, 0)

    clipped = np.zeros(N, dtype=bool)
    edges_from: list[int] = []
    edges_to: list[int] = []
    step = 0.01 * size
    for v in crit_values:
        direction = (zeta0 - v) / abs(zeta0 - v)
        near = v + eps * direction
        out = _segment(zeta0, near, step)
        loop = v + eps * direction * np.exp(1j * np.linspace(0.0, TWO_PI, 65))
        path = np.concatenate([out, loop[1:], out[::-1][1:]])
        ends = _lift_tracked(evaluate, fibre, path, rho, opts, clipped)
        dist = cdist(np.column_stack([ends.real, ends.imag]), np.column_stack([fibre.real, fibre.imag]))
        for i, e in enumerate(ends):
            j = int(np.argmin(dist[i]))
            if dist[i, j] > 1e-6 * (1.0 + abs(e)):
                clipped[i] = True
                continue
            edges_from.append(i)
            edges_to.append(j)

    rows = np.array(edges_from, dtype=np.int64)
    cols = np.array(edges_to, dtype=np.int64)
    graph = coo_matrix((np.ones(rows.size), (rows, cols)), shape=(N, N))
    _, labels = connected_components(graph, directed=False)
    groups: dict[int, list[int]] = {}
    for i, label in enumerate(labels):
        groups.setdefault(int(label), []).append(i)
    comps = []
    for members in sorted(groups.values(), key=lambda m: (len(m), min(m))):
        is_clipped = bool(clipped[members].any())
        comps.append(Component(len(members), len(members) / N, is_clipped))
    exact = [c for c in comps if not c.clipped]
    slice_total = sum(c.slice_weight for c in exact)
    tangency_mass = sum((c.degree - 1) / N for c in exact)
    if len(exact) < len(comps):
        logger.warning("%d of %d components reach |t| = rho and are excluded", len(comps) - len(exact), len(comps))
    return DecompositionReport(Qd, Q, rho, tuple(comps), tangency_mass, slice_total, N)


def _lift_tracked(evaluate, fibre, path, rho, opts, clipped):
    chunk = 8
    t = fibre
    for s in range(0, len(path) - 1, chunk):
        piece = path[s : s + chunk + 1]
        t = _lift(evaluate, t, piece, opts)
        clipped |= np.abs(t) > rho
    return t


def mass_formula_check(report: DecompositionReport, direct: MassEstimate) -> float:
    """|Σ_k (k−1)/k · sm_k − direct mass|."""
    if direct.region not in (report.square, report.requested):
        raise ValueError("decomposition and mass estimate use different regions")
    if not math.isclose(direct.rho, report.rho, rel_tol=1e-12):
        raise ValueError("decomposition and mass estimate use different truncation radii")
    sm: dict[int, float] = {}
    for c in report.components:
        if not c.clipped:
            sm[c.degree] = sm.get(c.degree, 0.0) + c.slice_weight
    formula = sum((k - 1) / k * w for k, w in sm.items())
    return abs(formula - direct.value)


# ---- unstable disconnectedness -------------------------------------------------------


@dataclass(frozen=True)
class Certificate:
    disk: Disk
    boundary_min_green: float
    interior_zero: complex

    def to_json(self) -> dict:
        return {
            "disk": self.disk.to_json(),
            "boundary_min_green": self.boundary_min_green,
            "interior_zero": [self.interior_zero.real, self.interior_zero.imag],
        }


def disconnectivity_certificate(
    f: HenonMap,
    curve: UnstableCurve,
    rho: float,
    *,
    scans: int = 32,
    floor: float = 1e-8,
    centers: Sequence[complex] | None = None,
    grid: int = 64,
    max_centers: int = 16,
) -> Certificate | None:
    """
    A disk around a zero of G⁺∘ψ whose boundary circle keeps G⁺∘ψ > 0 under
    zoomed sampling: W^u ∩ K⁺ then has a compact component.  The saddle
    t = 0 is tried first, then `centers` (by default the non-escaping points
    of a grid×grid scan of |t| < rho, nearest first).  None means inconclusive.
    """
    evaluate = curve_evaluator(curve)
    lam = abs(curve.multiplier)
    r_a = curve.convergence_radius_estimate / (2 * lam)
    radii = [r for r in r_a * lam ** (np.arange(scans) / scans) if r < rho]
    r = r_a * lam
    while r < rho and len(radii) < 4 * scans:
        radii.append(r)
        r *= lam
    if float(evaluate(np.array([0j])).green[0]) <= 0:
        cert = _enclosing_disk(evaluate, 0j, radii, floor)
        if cert is not None:
            return cert
    if centers is None:
        centers = _non_escaping_points(evaluate, rho, grid)
    tried = 0
    for c in centers:
        c = complex(c)
        if c == 0 or abs(c) >= rho or float(evaluate(np.array([c])).green[0]) > 0:
            continue
        if tried >= max_centers:
            break
        tried += 1
        room = rho - abs(c)
        cert = _enclosing_disk(evaluate, c, [room * 0.5**j for j in range(12, 0, -1)], floor)
        if cert is not None:
            return cert
    logger.info("No disconnectivity certificate below rho=%.6g (%d extra centres tried)", rho, tried)
    return None


def _enclosing_disk(evaluate: Evaluator, center: complex, radii, floor: float) -> Certificate | None:
    for radius in radii:
        coarse = float(evaluate(circle(center, radius, 256)).green.min())
        if coarse <= floor:
            continue
        fine = _circle_min_green(evaluate, radius, 256, zoom=4, center=center)
        if fine > floor and fine >= 0.5 * coarse:
            return Certificate(Disk(center, radius), fine, center)
    return None


def _non_escaping_points(evaluate: Evaluator, rho: float, grid: int) -> np.ndarray:
    xs = np.linspace(-rho, rho, grid)
    t = (xs[:, None] + 1j * xs[None, :]).ravel()
    t = t[np.abs(t) < rho]
    t = t[evaluate(t).green <= 0]
    return t[np.argsort(np.abs(t), kind="stable")]


# ---- horizontal lines ------------------------------------------------------------------


@dataclass(frozen=True)
class LineTangency:
    t: complex
    location: tuple[complex, complex]
    projection: complex
    green_value: float
    multiplicity: int

    def to_json(self) -> dict:
        return {
            "t": [self.t.real, self.t.imag],
            "projection": [self.projection.real, self.projection.imag],
            "green_value": self.green_value,
            "multiplicity": self.multiplicity,
        }


def line_tangencies(
    f: HenonMap,
    N: int,
    w0: complex,
    region: Disk | Square,
    delta: float = 0.0,
    opts: BoxOptions | None = None,
) -> list[LineTangency]:
    """
    Tangencies of f^N({w = w0}) with the fibres of the projection ζ,
    φ⁺(ζ, 0) = φ⁺(x), whose projection lies in region^δ.  Critical points
    of t ↦ φ⁺(f^N(t, w0)) are exactly those tangencies.
    """
    opts = opts or BoxOptions()
    Qd = region.shrink(delta) if delta > 0 else region
    R = f.escape_radius
    if abs(w0) >= R:
        raise ValueError("|w0| must be below the escape radius")
    pts = np.concatenate([Qd.boundary(256), Qd.grid(33)])
    g = green_array(f, pts, np.zeros_like(pts))
    g_lo, g_hi = float(g.min()), float(g.max())
    if g_lo <= REGION_GREEN_FLOOR:
        raise ValueError("region meets K⁺ ∩ {w = 0}")
    evaluate = line_evaluator(f, w0, N, opts.extra_iter)
    zeros = _isolate(evaluate, R, g_lo, g_hi, "critical", opts, disk=False)
    out = []
    for zr in zeros:
        x = f.iterate(complex(zr.t), complex(w0), N)
        if not bool(f.in_vplus(*x)):
            continue
        zeta = fiber_projection(f, x)
        if not bool(Qd.contains(zeta)):
            continue
        gval = float(green_array(f, [x[0]], [x[1]])[0])
        out.append(LineTangency(zr.t, x, zeta, gval, zr.multiplicity))
    return out
