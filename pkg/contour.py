from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from utils import parse_complex

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Disk:
    center: complex
    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError("disk radius must be positive")
        object.__setattr__(self, "center", complex(self.center))
        object.__setattr__(self, "radius", float(self.radius))

    def contains(self, z):
        return np.abs(np.asarray(z) - self.center) <= self.radius

    def boundary(self, n: int) -> np.ndarray:
        theta = np.arange(n) * (TWO_PI / n)
        return self.center + self.radius * np.exp(1j * theta)

    def grid(self, k: int) -> np.ndarray:
        xs = np.linspace(-self.radius, self.radius, k)
        pts = (xs[:, None] + 1j * xs[None, :]).ravel() + self.center
        return pts[self.contains(pts)]

    def shrink(self, delta: float) -> "Disk":
        return Disk(self.center, self.radius - delta)

    def modulus_range(self) -> tuple[float, float]:
        r = abs(self.center)
        return max(r - self.radius, 0.0), r + self.radius

    def to_json(self) -> dict:
        return {"kind": "disk", "center": [self.center.real, self.center.imag], "radius": self.radius}


@dataclass(frozen=True)
class Square:
    """Axis-aligned square Q(center, side)."""

    center: complex
    side: float

    def __post_init__(self) -> None:
        if not self.side > 0:
            raise ValueError("square side must be positive")
        object.__setattr__(self, "center", complex(self.center))
        object.__setattr__(self, "side", float(self.side))

    @property
    def half(self) -> float:
        return 0.5 * self.side

    def contains(self, z):
        w = np.asarray(z) - self.center
        return (np.abs(w.real) <= self.half) & (np.abs(w.imag) <= self.half)

    def grid(self, k: int) -> np.ndarray:
        xs = np.linspace(-self.half, self.half, k)
        return (xs[:, None] + 1j * xs[None, :]).ravel() + self.center

    def boundary(self, n: int) -> np.ndarray:
        box = Box(self.center - self.half * (1 + 1j), self.center + self.half * (1 + 1j))
        return box.boundary(max(1, n // 4))

    def shrink(self, delta: float) -> "Square":
        return Square(self.center, self.side - 2.0 * delta)

    def modulus_range(self) -> tuple[float, float]:
        corners = self.center + self.half * np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j])
        lo = 0.0 if bool(self.contains(0j)) else _dist_to_square(self.center, self.half)
        return lo, float(np.max(np.abs(corners)))

    def to_json(self) -> dict:
        return {"kind": "square", "center": [self.center.real, self.center.imag], "side": self.side}


def _dist_to_square(center: complex, half: float) -> float:
    dx = max(abs(center.real) - half, 0.0)
    dy = max(abs(center.imag) - half, 0.0)
    return math.hypot(dx, dy)


@dataclass(frozen=True)
class AnnulusSector:
    """
    {ζ : g_lo ≤ log|ζ| < g_hi, θ0 ≤ arg ζ < θ0 + width}.
    Width 2π gives the full fundamental annulus.
    """

    g_lo: float
    g_hi: float
    theta0: float = 0.0
    width: float = TWO_PI

    def __post_init__(self) -> None:
        if not self.g_hi > self.g_lo:
            raise ValueError("annulus levels must satisfy g_lo < g_hi")
        if not 0 < self.width <= TWO_PI:
            raise ValueError("sector width must lie in (0, 2π]")

    @classmethod
    def fundamental(cls, A: float, d: int) -> "AnnulusSector":
        return cls(A, d * A)

    def quadrants(self) -> list["AnnulusSector"]:
        w = self.width / 4
        return [AnnulusSector(self.g_lo, self.g_hi, self.theta0 + k * w, w) for k in range(4)]

    @property
    def full(self) -> bool:
        return self.width >= TWO_PI

    def _angle(self, z):
        return np.mod(np.angle(z) - self.theta0, TWO_PI)

    def contains(self, z):
        z = np.asarray(z)
        with np.errstate(divide="ignore"):
            g = np.log(np.abs(z))
        ok = (g >= self.g_lo) & (g < self.g_hi)
        if not self.full:
            ok &= self._angle(z) < self.width
        return ok

    def contains_log(self, L):
        """Membership from log ζ (imaginary part taken mod 2π)."""
        L = np.asarray(L)
        ok = (L.real >= self.g_lo) & (L.real < self.g_hi)
        if not self.full:
            ok &= np.mod(L.imag - self.theta0, TWO_PI) < self.width
        return ok

    def boundary(self, n: int) -> np.ndarray:
        m = max(1, n // 4)
        box = Box(complex(self.g_lo, self.theta0), complex(self.g_hi, self.theta0 + self.width))
        return np.exp(box.boundary(m))

    def shrink(self, delta: float) -> "AnnulusSector":
        # delta is measured in the log chart
        if self.full:
            return AnnulusSector(self.g_lo + delta, self.g_hi - delta, self.theta0, self.width)
        return AnnulusSector(self.g_lo + delta, self.g_hi - delta, self.theta0 + delta, self.width - 2 * delta)

    def modulus_range(self) -> tuple[float, float]:
        return math.exp(self.g_lo), math.exp(self.g_hi)

    def to_json(self) -> dict:
        return {"kind": "sector", "g_lo": self.g_lo, "g_hi": self.g_hi, "theta0": self.theta0, "width": self.width}


def region_from_json(raw: dict) -> Disk | Square | AnnulusSector:
    kind = raw.get("kind")
    if kind == "disk":
        return Disk(parse_complex(raw["center"], "center"), float(raw["radius"]))
    if kind == "square":
        return Square(parse_complex(raw["center"], "center"), float(raw["side"]))
    if kind == "sector":
        return AnnulusSector(
            float(raw["g_lo"]), float(raw["g_hi"]), float(raw.get("theta0", 0.0)), float(raw.get("width", TWO_PI))
        )
    raise ValueError(f"unknown region kind {kind!r}")


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle [lo.real, hi.real] × [lo.imag, hi.imag] in a parameter plane."""

    lo: complex
    hi: complex
    depth: int = 0
    # re-subdivisions forced by a zero sitting on the boundary
    retries: int = 0

    @property
    def width(self) -> float:
        return self.hi.real - self.lo.real

    @property
    def height(self) -> float:
        return self.hi.imag - self.lo.imag

    @property
    def side(self) -> float:
        return max(self.width, self.height)

    @property
    def center(self) -> complex:
        return 0.5 * (self.lo + self.hi)

    def contains(self, z, pad: float = 0.0):
        z = np.asarray(z)
        return (
            (z.real >= self.lo.real - pad)
            & (z.real <= self.hi.real + pad)
            & (z.imag >= self.lo.imag - pad)
            & (z.imag <= self.hi.imag + pad)
        )

    def min_modulus(self) -> float:
        x = min(max(0.0, self.lo.real), self.hi.real)
        y = min(max(0.0, self.lo.imag), self.hi.imag)
        return abs(complex(x, y))

    def boundary(self, per_side: int) -> np.ndarray:
        """Counter-clockwise, 4·per_side points, loop not repeated."""
        s = np.arange(per_side) / per_side
        lo, hi = self.lo, self.hi
        c1 = complex(hi.real, lo.imag)
        c3 = complex(lo.real, hi.imag)
        return np.concatenate(
            [
                lo + s * (c1 - lo),
                c1 + s * (hi - c1),
                hi + s * (c3 - hi),
                c3 + s * (lo - c3),
            ]
        )

    def split(self, ratio: float = 0.5) -> tuple["Box", "Box"]:
        """Cuts across the longest side. Children start with a clean retry count."""
        if self.width >= self.height:
            x = self.lo.real + ratio * self.width
            a = Box(self.lo, complex(x, self.hi.imag), self.depth + 1)
            b = Box(complex(x, self.lo.imag), self.hi, self.depth + 1)
        else:
            y = self.lo.imag + ratio * self.height
            a = Box(self.lo, complex(self.hi.real, y), self.depth + 1)
            b = Box(complex(self.lo.real, y), self.hi, self.depth + 1)
        return a, b

    def to_json(self) -> dict:
        return {"lo": [self.lo.real, self.lo.imag], "hi": [self.hi.real, self.hi.imag], "depth": self.depth}


def grid_boxes(radius: float, k: int, center: complex = 0j) -> list[Box]:
    """k×k boxes covering the square center + [−radius, radius]²."""
    xs = center.real + np.linspace(-radius, radius, k + 1)
    ys = center.imag + np.linspace(-radius, radius, k + 1)
    out = []
    for i in range(k):
        for j in range(k):
            out.append(Box(complex(xs[i], ys[j]), complex(xs[i + 1], ys[j + 1])))
    return out


def phase_steps(values: np.ndarray) -> np.ndarray:
    """Wrapped phase increments around closed loops along the last axis."""
    v = np.asarray(values)
    nxt = np.roll(v, -1, axis=-1)
    return np.angle(nxt / v)


def winding_number(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    (winding, largest |phase step|) of closed sampled loops, last axis.
    The winding is reliable when the largest step stays well below π.
    """
    steps = phase_steps(values)
    return steps.sum(axis=-1) / TWO_PI, np.max(np.abs(steps), axis=-1)


def expm1_direction(E: np.ndarray) -> np.ndarray:
    """A complex number with the argument of e^E − 1, safe for large |E|."""
    E = np.asarray(E, dtype=complex)
    out = np.empty_like(E)
    big = E.real > 30.0
    low = E.real < -30.0
    small = np.abs(E) < 1e-5
    mid = ~(big | low | small)
    out[big] = np.exp(1j * E.imag[big])
    out[low] = -1.0
    out[small] = E[small] * (1 + E[small] / 2 + E[small] ** 2 / 6)
    out[mid] = np.exp(E[mid]) - 1.0
    return out


def circle(center: complex, radius: float, n: int) -> np.ndarray:
    return center + radius * np.exp(1j * np.arange(n) * (TWO_PI / n))


def wrap_2pi(x):
    """Reduce to (−π, π]."""
    return np.angle(np.exp(1j * np.asarray(x)))
