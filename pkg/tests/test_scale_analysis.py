import math

import numpy as np
import pytest
from scipy import integrate

from polarformer.scale_analysis import (
    FootprintQuery,
    analysis_table,
    boundary_integrals,
    default_grid,
    loose_bounding_box,
    polar_bounding_box,
    polar_footprint_area,
    polar_footprint_area_mc,
    simpson,
    verify_monotonic_decrease,
)


def area_oracle(d, h, a):
    """Parameter-plane area via the change of variables d(rho, phi) = dx dy / rho."""
    val, _ = integrate.dblquad(lambda y, x: 1.0 / math.hypot(x, y), d, d + 2 * a, h, h + 2 * a, epsabs=1e-14, epsrel=1e-13)
    return val


def test_query_validation():
    for bad in [(0.5, 1, 1), (1, 0.9, 1), (1, 1, 0)]:
        with pytest.raises(ValueError):
            FootprintQuery(*bad)


def test_simpson_exact_on_cubics():
    assert simpson(lambda x: x**3 - 2 * x + 1, 0.0, 2.0, 2) == pytest.approx(4 - 4 + 2, abs=1e-14)
    assert simpson(np.sin, 0.0, math.pi, 101) == pytest.approx(2.0, abs=2e-8)
    assert simpson(np.sin, 1.0, 1.0, 10) == 0.0


@pytest.mark.parametrize("q", [(1, 1, 0.5), (10, 10, 1), (5, 20, 2), (40, 1, 0.5), (3, 7, 1.5)])
def test_quadrature_matches_double_integral(q):
    assert polar_footprint_area(FootprintQuery(*q)) == pytest.approx(area_oracle(*q), rel=1e-9)


def test_boundary_integrals_signs():
    parts = boundary_integrals(FootprintQuery(10, 10, 1))
    assert all(v > 0 for v in parts.values())
    assert parts["DA"] + parts["AB"] > parts["BC"] + parts["CD"]


def test_degenerate_side():
    assert polar_footprint_area(FootprintQuery(10, 10, 1e-6)) < 1e-9


def test_steps_minimum():
    with pytest.raises(ValueError):
        polar_footprint_area(FootprintQuery(10, 10, 1), steps=50)


def test_quadrature_vs_monte_carlo_examples():
    for q in [(10, 10, 1), (5, 5, 0.5)]:
        fq = FootprintQuery(*q)
        s = polar_footprint_area(fq)
        assert abs(polar_footprint_area_mc(fq, 1_000_000, seed=0) - s) / s < 0.01


def test_monte_carlo_loose_rectangle():
    fq = FootprintQuery(10, 10, 1)
    rho, phi = loose_bounding_box(fq)
    assert rho == (pytest.approx(math.hypot(10, 10) - 1), pytest.approx(math.hypot(12, 12) + 1))
    assert phi == (0.0, math.pi / 2)
    est = polar_footprint_area_mc(fq, 1_000_000, seed=0, rho_range=rho, phi_range=phi)
    assert abs(est - polar_footprint_area(fq)) / polar_footprint_area(fq) < 0.01


def test_monte_carlo_outside_and_deterministic():
    fq = FootprintQuery(10, 10, 1)
    assert polar_footprint_area_mc(fq, 20_000, rho_range=(30.0, 40.0), phi_range=(0.0, 1.0)) == 0.0
    assert polar_footprint_area_mc(fq, 20_000, seed=4) == polar_footprint_area_mc(fq, 20_000, seed=4)
    with pytest.raises(ValueError):
        polar_footprint_area_mc(fq, 5_000)


def test_tight_box_contains_footprint(rng):
    fq = FootprintQuery(4, 9, 1.5)
    (r0, r1), (p0, p1) = polar_bounding_box(fq)
    x = rng.uniform(4, 7, 10_000)
    y = rng.uniform(9, 12, 10_000)
    rho, phi = np.hypot(x, y), np.arctan2(y, x)
    assert np.all((rho >= r0 - 1e-12) & (rho <= r1 + 1e-12) & (phi >= p0 - 1e-12) & (phi <= p1 + 1e-12))


def test_single_step_decrease():
    assert polar_footprint_area(FootprintQuery(2, 1, 1)) < polar_footprint_area(FootprintQuery(1, 1, 1))
    assert polar_footprint_area(FootprintQuery(20, 10, 1)) < polar_footprint_area(FootprintQuery(10, 10, 1))


def test_full_grid_no_violations():
    assert verify_monotonic_decrease(default_grid(), delta=1.0) == []


def test_degenerate_grid_no_violations():
    assert verify_monotonic_decrease(default_grid(sides=(1e-6,)), delta=1.0) == []


def test_positive_and_convergent():
    for d, h, a in default_grid():
        q = FootprintQuery(d, h, a)
        s = polar_footprint_area(q, 10_000)
        assert s > 0
        assert abs(polar_footprint_area(q, 20_000) - s) / s < 1e-3


def test_analysis_table_rows():
    rows = analysis_table([(10.0, 10.0, 1.0)], samples=20_000)
    assert set(rows[0]) == {"d", "h", "a", "S_quadrature", "S_montecarlo", "rel_diff"}
    assert rows[0]["rel_diff"] == pytest.approx(abs(rows[0]["S_montecarlo"] - rows[0]["S_quadrature"]) / rows[0]["S_quadrature"])
