"""Area occupied by an axis-aligned square object on the polar BEV map.

A square with corner D = (d, h) and side 2a in the first quadrant is mapped to
the (rho, phi) parameter plane, with phi measured from the lateral axis
towards the forward axis.  Its image is bounded above by the curves traced by
the left and top edges and below by the right and bottom edges; the area is
the difference of the corresponding integrals over rho.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_STEPS = 10_000
AREA_GUARD = 1e-12


@dataclass(frozen=True)
class FootprintQuery:
    d: float
    h: float
    a: float

    def __post_init__(self):
        if not (self.d >= 1 and self.h >= 1 and self.a > 0):
            raise ValueError(f"need d >= 1, h >= 1, a > 0; got {self}")


def simpson(f, lo: float, hi: float, steps: int) -> float:
    """Composite Simpson rule with ``steps`` (rounded up to even) intervals."""
    steps += steps % 2
    if hi == lo:
        return 0.0
    x = np.linspace(lo, hi, steps + 1)
    y = f(x)
    dx = (hi - lo) / steps
    return float(dx / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum()))


def _sqrt_pos(v):
    return np.sqrt(np.maximum(v, 0.0))


def boundary_integrals(q: FootprintQuery, steps: int = DEFAULT_STEPS) -> dict[str, float]:
    """The four edge integrals of the square's polar image."""
    d, h, a = q.d, q.h, q.a
    d2, h2 = d + 2 * a, h + 2 * a
    r_da = (math.hypot(d, h), math.hypot(d, h2))
    r_ab = (math.hypot(d, h2), math.hypot(d2, h2))
    r_bc = (math.hypot(d2, h), math.hypot(d2, h2))
    r_cd = (math.hypot(d, h), math.hypot(d2, h))
    return {
        # left edge x = d
        "DA": simpson(lambda r: np.arctan(_sqrt_pos(r * r - d * d) / d), *r_da, steps),
        # top edge y = h + 2a
        "AB": simpson(lambda r: np.arctan(h2 / _sqrt_pos(r * r - h2 * h2)), *r_ab, steps),
        # right edge x = d + 2a
        "BC": simpson(lambda r: np.arctan(_sqrt_pos(r * r - d2 * d2) / d2), *r_bc, steps),
        # bottom edge y = h
        "CD": simpson(lambda r: np.arctan(h / _sqrt_pos(r * r - h * h)), *r_cd, steps),
    }


def polar_footprint_area(q: FootprintQuery, steps: int = DEFAULT_STEPS) -> float:
    if steps < 100:
        raise ValueError(f"steps must be >= 100, got {steps}")
    parts = boundary_integrals(q, steps)
    return (parts["DA"] + parts["AB"]) - (parts["BC"] + parts["CD"])


def polar_bounding_box(q: FootprintQuery) -> tuple[tuple[float, float], tuple[float, float]]:
    """Tightest (rho, phi) rectangle containing the square's polar image."""
    d, h, a = q.d, q.h, q.a
    rho = (math.hypot(d, h), math.hypot(d + 2 * a, h + 2 * a))
    phi = (math.atan2(h, d + 2 * a), math.atan2(h + 2 * a, d))
    return rho, phi


def loose_bounding_box(q: FootprintQuery) -> tuple[tuple[float, float], tuple[float, float]]:
    """Padded first-quadrant rectangle: 1 m radial margin, phi over [0, pi/2]."""
    d, h, a = q.d, q.h, q.a
    return (math.hypot(d, h) - 1.0, math.hypot(d + 2 * a, h + 2 * a) + 1.0), (0.0, math.pi / 2)


def polar_footprint_area_mc(
    q: FootprintQuery,
    samples: int = 1_000_000,
    seed: int = 0,
    rho_range: tuple[float, float] | None = None,
    phi_range: tuple[float, float] | None = None,
) -> float:
    """Hit-or-miss estimate of the polar area over a sampling rectangle.

    Defaults to the tight bounding rectangle from ``polar_bounding_box``.
    """
    if samples < 10_000:
        raise ValueError(f"samples must be >= 1e4, got {samples}")
    tight_rho, tight_phi = polar_bounding_box(q)
    r_lo, r_hi = rho_range if rho_range is not None else tight_rho
    p_lo, p_hi = phi_range if phi_range is not None else tight_phi
    rng = np.random.default_rng(seed)
    rho = rng.uniform(r_lo, r_hi, samples)
    phi = rng.uniform(p_lo, p_hi, samples)
    x = rho * np.cos(phi)
    y = rho * np.sin(phi)
    inside = (x >= q.d) & (x <= q.d + 2 * q.a) & (y >= q.h) & (y <= q.h + 2 * q.a)
    return float(inside.mean() * (r_hi - r_lo) * (p_hi - p_lo))


@dataclass(frozen=True)
class Violation:
    query: FootprintQuery
    axis: str
    area: float
    area_moved: float


def verify_monotonic_decrease(grid, delta: float = 1.0, steps: int = DEFAULT_STEPS) -> list[Violation]:
    """Check S(d+delta) < S(d) and S(h+delta) < S(h) at every grid point.

    Pairs where both areas fall below ``AREA_GUARD`` are treated as equal-zero
    and never reported.
    """
    violations = []
    for d, h, a in grid:
        q = FootprintQuery(d, h, a)
        base = polar_footprint_area(q, steps)
        for axis, moved in (("d", FootprintQuery(d + delta, h, a)), ("h", FootprintQuery(d, h + delta, a))):
            s = polar_footprint_area(moved, steps)
            if max(base, s) < AREA_GUARD:
                continue
            if not s < base:
                violations.append(Violation(q, axis, base, s))
    return violations


def default_grid(values=(1, 5, 10, 20, 40), sides=(0.5, 1, 2)):
    return [(float(d), float(h), float(a)) for d in values for h in values for a in sides]


def analysis_table(grid, samples: int = 1_000_000, seed: int = 0, steps: int = DEFAULT_STEPS) -> list[dict]:
    rows = []
    for d, h, a in grid:
        q = FootprintQuery(d, h, a)
        s_quad = polar_footprint_area(q, steps)
        s_mc = polar_footprint_area_mc(q, samples, seed)
        rows.append(
            {"d": d, "h": h, "a": a, "S_quadrature": s_quad, "S_montecarlo": s_mc,
             "rel_diff": abs(s_mc - s_quad) / s_quad}
        )
    return rows
