from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from contour import AnnulusSector
from critical import BoxOptions, CriticalDatum, curve_evaluator, find_tangencies, generic_point, slice_count, truncation_radius
from henon import HenonMap, fundamental_level, induced_polynomial, rotate_degenerate_first
from poly1d import Poly1D, chi_manning_przytycki, escaping_critical_points, g_max
from reports import ExponentEstimate
from saddle import UnstableCurve

logger = logging.getLogger("henon_lab.exponents")

BOUND_SLACK = 0.05
STABILITY_SPREAD = 0.1
# relative distance of a tangency level to a window edge that triggers a nudge
EDGE_TOL = 1e-4


def _window_sum(tang: list[CriticalDatum], A: float, d: int) -> tuple[float, int]:
    total = 0.0
    count = 0
    for c in tang:
        if A <= c.green_value < d * A:
            total += c.multiplicity * c.green_value
            count += c.multiplicity
    return total, count


def _near_edge(tang: list[CriticalDatum], A: float, d: int) -> bool:
    return any(abs(c.green_value - A) <= EDGE_TOL * A or abs(c.green_value - d * A) <= EDGE_TOL * d * A for c in tang)


def chi_bedford_smillie(
    f: HenonMap,
    curve: UnstableCurve,
    A: float | None = None,
    rho: float | None = None,
    opts: BoxOptions | None = None,
) -> ExponentEstimate:
    """
    log d + Σ multiplicity·G⁺ over tangencies in {A ≤ G⁺ < dA}, divided by
    the number of fibre points, at rho and at |Λ|·rho.
    """
    d = f.degree
    log_d = math.log(d)
    A0 = fundamental_level(f)
    A = 1.1 * A0 if A is None else A
    if A <= 0:
        raise ValueError("A must be positive")
    wide = AnnulusSector(0.97 * A, 1.03 * d * A)
    admissible = True
    if rho is None:
        tr = truncation_radius(f, curve, wide.g_hi)
        rho, admissible = tr.rho, tr.admissible

    radii = (rho, rho * abs(curve.multiplier))
    found = [find_tangencies(f, curve, wide, r, opts) for r in radii]
    base = A
    for cand in (A, 1.02 * A, 0.98 * A):
        if not _near_edge(found[0], cand, d):
            base = cand
            break
    if base != A:
        logger.warning("Annulus base moved from %.6g to %.6g (tangency level on the edge)", A, base)

    values = []
    counts = []
    for r, tang in zip(radii, found):
        total, count = _window_sum(tang, base, d)
        if count == 0:
            values.append(log_d)
            counts.append((0, None))
            continue
        zeta = generic_point(AnnulusSector(base, d * base))
        n_slice = slice_count(f, curve, zeta, r, opts)
        values.append(log_d + total / n_slice)
        counts.append((count, n_slice))

    spread = abs(values[0] - values[1])
    params = {
        "A": base,
        "A0": A0,
        "rho": rho,
        "rho_admissible": admissible,
        "period": curve.period,
        "tangencies": counts[0][0],
        "slices": counts[0][1],
        "tangencies_scaled": counts[1][0],
        "slices_scaled": counts[1][1],
    }
    est = ExponentEstimate(values[0], "bedford_smillie", params, spread, "plus", d)
    if spread > STABILITY_SPREAD:
        logger.warning("Critical-measure estimate not stabilized: spread %.4f", spread)
        est = est.with_flag("not_stabilized")
    if not admissible:
        est = est.with_flag("rho_not_admissible")
    if est.below_floor:
        est = est.with_flag("below_log_d")
    return est


def chi_minus_from_jacobian(f: HenonMap, chi_plus: ExponentEstimate) -> ExponentEstimate:
    """χ⁻ = log|Jac| − χ⁺."""
    jac = abs(f.jacobian)
    if jac == 0:
        raise ValueError("χ⁻ is −∞ for a degenerate map")
    if chi_plus.side != "plus":
        raise ValueError("expected a χ⁺ estimate")
    params = dict(chi_plus.parameters)
    params["from_jacobian"] = True
    return ExponentEstimate(
        math.log(jac) - chi_plus.value, chi_plus.method, params, chi_plus.spread, "minus", f.degree, chi_plus.flags
    )


def young_dimension(chi_plus: float, chi_minus: float | None, d: int) -> float:
    """log d·(1/χ⁺ − 1/χ⁻); without χ⁻ this is the one-dimensional log d/χ⁺."""
    if d < 2:
        raise ValueError("degree must be >= 2")
    if not chi_plus > 0:
        raise ValueError("χ⁺ must be positive")
    if chi_minus is None or chi_minus == float("-inf"):
        return math.log(d) / chi_plus
    if not chi_minus < 0:
        raise ValueError("χ⁻ must be negative")
    return math.log(d) * (1.0 / chi_plus - 1.0 / chi_minus)


def chi_finite_time(f: HenonMap, n: int, sample) -> float:
    """(1/n)·mean of log‖Df^n‖ over the sample, operator 2-norm."""
    if n < 1:
        raise ValueError("n must be >= 1")
    pts = np.asarray(sample, dtype=complex).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise ValueError("sample is empty")
    z, w = pts[:, 0].copy(), pts[:, 1].copy()
    K = z.size
    M = np.broadcast_to(np.eye(2, dtype=complex), (K, 2, 2)).copy()
    log_scale = np.zeros(K)
    for _ in range(n):
        for fac in f.factors:
            step = np.zeros((K, 2, 2), dtype=complex)
            step[:, 0, 0] = fac.p.derivative(z)
            step[:, 0, 1] = fac.a
            step[:, 1, 0] = fac.a
            M = step @ M
            z, w = fac.forward(z, w)
        s = np.linalg.norm(M, axis=(1, 2))
        s = np.where(s > 0, s, 1.0)
        M = M / s[:, None, None]
        log_scale += np.log(s)
    with np.errstate(divide="ignore"):
        top = np.log(np.linalg.svd(M, compute_uv=False)[:, 0])
    return float(np.mean(log_scale + top) / n)


@dataclass(frozen=True)
class GPlusMax:
    value: float
    upper_bound: bool
    tangency_orbits: int

    def to_json(self) -> dict:
        return {"value": self.value, "upper_bound": self.upper_bound, "tangency_orbits": self.tangency_orbits}


def _degenerate_polynomial(f: HenonMap) -> Poly1D:
    if f.is_degenerate_limit:
        return f.base_polynomial()
    return induced_polynomial(rotate_degenerate_first(f)).q


def estimate_g_plus_max(
    f: HenonMap, curve: UnstableCurve | None, rho: float | None = None, opts: BoxOptions | None = None
) -> GPlusMax:
    """
    Tangency orbits t ~ Λt are followed backwards while φ⁺ is still defined
    along the curve; the largest of the lowest levels reached is returned.
    Zero when three consecutive fundamental annuli carry no tangency.
    """
    if f.is_degenerate:
        return GPlusMax(g_max(_degenerate_polynomial(f)), False, 0)
    if curve is None:
        raise ValueError("a non-degenerate map needs its unstable curve")
    d = f.degree
    A = 1.1 * fundamental_level(f)
    three = AnnulusSector(A, d**3 * A)
    if rho is None:
        rho = truncation_radius(f, curve, three.g_hi).rho
    tang = find_tangencies(f, curve, three, rho, opts)
    if not tang:
        return GPlusMax(0.0, False, 0)

    lam = curve.multiplier
    reps: list[CriticalDatum] = []
    for c in sorted(tang, key=lambda c: c.green_value):
        same = False
        for r in reps:
            k = round(math.log(c.green_value / r.green_value, float(d) ** curve.period))
            if k >= 0 and abs(c.t - r.t * lam**k) < 1e-6 * (1.0 + abs(c.t)):
                same = True
                break
        if not same:
            reps.append(c)

    evaluate = curve_evaluator(curve)
    dn = float(d) ** curve.period
    best = 0.0
    for r in reps:
        t, g = r.t, r.green_value
        for _ in range(200):
            prev = t / lam
            ev = evaluate(np.array([prev]))
            if not bool(ev.valid[0]) or abs(prev) < 1e-300:
                break
            t, g = prev, g / dn
        best = max(best, g)
    return GPlusMax(best, True, len(reps))


@dataclass(frozen=True)
class BoundCheck:
    holds: bool
    margin: float

    def to_json(self) -> dict:
        return {"holds": self.holds, "margin": self.margin}


def exponent_bound_check(f: HenonMap, chi_plus: ExponentEstimate, gmax: float | GPlusMax) -> BoundCheck:
    """χ⁺ ≤ log d + d·G⁺max, with 0.05 slack."""
    g = gmax.value if isinstance(gmax, GPlusMax) else float(gmax)
    d = f.degree
    margin = math.log(d) + d * g + BOUND_SLACK - chi_plus.value
    return BoundCheck(margin >= 0, margin)


def chi_plus_1d_bound_check(p: Poly1D) -> BoundCheck:
    """χ(p) ≤ log d + (d − 1)·G_max."""
    d = p.degree
    margin = math.log(d) + (d - 1) * g_max(p) - chi_manning_przytycki(p)
    return BoundCheck(margin >= -1e-12, margin)


@dataclass(frozen=True)
class DepthChoice:
    N: int
    min_escaping_green: float
    escape_condition: bool
    floor_condition: bool

    def to_json(self) -> dict:
        return {
            "N": self.N,
            "min_escaping_green": self.min_escaping_green,
            "escape_condition": self.escape_condition,
            "floor_condition": self.floor_condition,
        }


def choose_depth(p: Poly1D, A: float, g_floor: float, *, max_depth: int = 64) -> DepthChoice:
    """
    Smallest N with A/d^{N−1} < min escaping G_p(c) and d^{N−1}·g_floor > A.
    """
    if A <= 0 or g_floor <= 0:
        raise ValueError("A and g_floor must be positive")
    d = p.degree
    esc = [g for _, _, g in escaping_critical_points(p)]
    gmin = min(esc) if esc else math.inf
    for N in range(1, max_depth + 1):
        scale = float(d) ** (N - 1)
        first = A / scale < gmin
        second = scale * g_floor > A
        if first and second:
            return DepthChoice(N, gmin, True, True)
    raise ValueError(f"no depth up to {max_depth} satisfies both conditions")
