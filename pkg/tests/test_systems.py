import cmath
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hitpoisson.core import SystemSpec, sample_states
from hitpoisson.errors import DomainError, ParameterError
from hitpoisson.rng import RngStream
from hitpoisson.systems import (lsv_map, lsv_sup_deriv, solenoid_iterate_closed_form, solenoid_map,
                                stadium_boundary_point, stadium_map)

SOL = SystemSpec.solenoid(0.5, 0.2)
ELL = 2.0
PER = 2 * (math.pi + ELL)


# -- LSV ------------------------------------------------------------------------------

@pytest.mark.parametrize("gamma", [0.1, 0.5, 0.9])
def test_lsv_fixed_point_and_right_branch(gamma):
    assert lsv_map(0.0, gamma) == 0.0
    assert lsv_map(0.75, gamma) == 0.5
    assert lsv_map(1.0, gamma) == 1.0


def test_lsv_left_branch_value():
    assert lsv_map(0.25, 0.5) == pytest.approx(0.25 * (1 + math.sqrt(2) * 0.5), abs=1e-15)
    assert lsv_map(0.25, 0.5) == pytest.approx(0.426777, abs=1e-6)


def test_lsv_errors():
    with pytest.raises(DomainError):
        lsv_map(1.5, 0.5)
    with pytest.raises(DomainError):
        lsv_map(-0.1, 0.5)
    with pytest.raises(ParameterError, match="SRB measure requires gamma<1"):
        lsv_map(0.3, 1.0)


def test_lsv_sup_deriv():
    assert lsv_sup_deriv(0.5) == 2.5
    assert lsv_sup_deriv(0.25) == 2.25
    assert lsv_sup_deriv(1e-12) == pytest.approx(2.0)


@pytest.mark.parametrize("gamma", [0.2, 0.5, 0.8])
def test_lsv_left_branch_increasing_and_escaping(gamma):
    xs = np.linspace(0, 0.5, 10**4, endpoint=False)
    ys = np.array([lsv_map(x, gamma) for x in xs])
    assert np.all(np.diff(ys) > 0)
    assert np.all(ys[1:] > xs[1:])
    assert ys[-1] < 1.0


@given(st.floats(0.0, 0.5, exclude_max=True), st.floats(0.05, 0.95))
def test_lsv_derivative_bounded_by_sup(x, gamma):
    h = 1e-7
    if x + h < 0.5:
        slope = (lsv_map(x + h, gamma) - lsv_map(x, gamma)) / h
        assert slope <= lsv_sup_deriv(gamma) + 1e-5


# -- solenoid ----------------------------------------------------------------------

def test_solenoid_examples():
    assert solenoid_map(0.0, 0.625 + 0j, SOL) == (0.0, 0.625 + 0j)
    x, z = solenoid_map(0.5, 0j, SOL)
    assert x == 0.0
    assert z == pytest.approx(-0.5, abs=1e-15)
    x, z = solenoid_map(0.25, 0j, SOL)
    assert x == pytest.approx(0.426777, abs=1e-6)
    assert z == pytest.approx(0.5j, abs=1e-15)


def test_solenoid_errors():
    with pytest.raises(DomainError):
        solenoid_map(0.1, 1.1 + 0j, SOL)
    with pytest.raises(ParameterError):
        solenoid_map(0.1, 0j, SystemSpec.lsv(0.5))


def test_closed_form_small_n():
    assert solenoid_iterate_closed_form(0.0, 0j, 3, SOL) == pytest.approx((0.0, 0.62 + 0j), abs=1e-15)


def test_closed_form_n1_identical():
    gen = np.random.default_rng(0)
    for _ in range(100):
        x = gen.random()
        z = cmath.rect(gen.random(), 2 * math.pi * gen.random())
        assert solenoid_iterate_closed_form(x, z, 1, SOL) == solenoid_map(x, z, SOL)


def test_closed_form_ten_steps():
    x, z = 0.3, 0.1 + 0.2j
    for _ in range(10):
        x, z = solenoid_map(x, z, SOL)
    cx, cz = solenoid_iterate_closed_form(0.3, 0.1 + 0.2j, 10, SOL)
    assert abs(cx - x) <= 1e-10 and abs(cz - z) <= 1e-10


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 2 * math.pi), st.integers(1, 30))
def test_closed_form_matches_iteration(x, rad, ang, n):
    z = cmath.rect(rad, ang)
    a, b = x, z
    for _ in range(n):
        a, b = solenoid_map(a, b, SOL)
    cx, cz = solenoid_iterate_closed_form(x, z, n, SOL)
    assert abs(cx - a) <= 1e-9 and abs(cz - b) <= 1e-9


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 2 * math.pi))
def test_solenoid_invariant_disk(x, frac, ang):
    rho = 1 / (2 * (1 - SOL.theta))
    _, z2 = solenoid_map(x, cmath.rect(frac * rho, ang), SOL)
    assert abs(z2) <= rho + 1e-15


# -- stadium geometry --------------------------------------------------------------

def test_boundary_examples():
    b = stadium_boundary_point(0.0, ELL)
    assert b.position == pytest.approx((1.0, -1.0)) and b.inward_normal == pytest.approx((0.0, 1.0))
    b = stadium_boundary_point(math.pi / 2, ELL)
    assert b.position == pytest.approx((2.0, 0.0)) and b.inward_normal == pytest.approx((-1.0, 0.0))
    assert b.segment_kind == "right_arc"
    b = stadium_boundary_point(math.pi + 1, ELL)
    assert b.position == pytest.approx((0.0, 1.0)) and b.inward_normal == pytest.approx((0.0, -1.0))
    assert b.segment_kind == "top"


def test_boundary_segments_in_order():
    kinds = [stadium_boundary_point(r, ELL).segment_kind for r in (1.0, math.pi + 1, 2 * math.pi + 1, PER - 1)]
    assert kinds == ["right_arc", "top", "left_arc", "bottom"]


def _on_boundary(px, py, ell):
    half = ell / 2
    if abs(px) <= half:
        return min(abs(py - 1), abs(py + 1))
    cx = half if px > 0 else -half
    return abs(math.hypot(px - cx, py) - 1)


@given(st.floats(0, PER, exclude_max=True), st.floats(0.1, 5))
def test_boundary_point_properties(r, ell):
    b = stadium_boundary_point(r, ell)
    (px, py), (nx, ny) = b.position, b.inward_normal
    assert _on_boundary(px, py, ell) <= 1e-12
    assert math.hypot(nx, ny) == pytest.approx(1.0, abs=1e-12)
    # a short step along the normal lands strictly inside
    qx, qy = px + 1e-3 * nx, py + 1e-3 * ny
    half = ell / 2
    inside = abs(qy) < 1 if abs(qx) <= half else math.hypot(abs(qx) - half, qy) < 1
    assert inside


def test_chart_is_injective_and_wraps():
    rs = np.linspace(0, PER, 10**4, endpoint=False)
    pts = np.array([stadium_boundary_point(r, ELL).position for r in rs])
    gaps = np.hypot(*(pts[:, None, :] - pts[None, :, :]).transpose(2, 0, 1))
    np.fill_diagonal(gaps, np.inf)
    assert gaps.min() > 0
    assert stadium_boundary_point(PER, ELL).position == pytest.approx(stadium_boundary_point(0.0, ELL).position)
    # consecutive chart points are one arclength step apart, so the total length is 2 pi + 2 ell
    steps = np.hypot(*np.diff(np.vstack([pts, pts[:1]]), axis=0).T)
    assert steps.sum() == pytest.approx(PER, rel=1e-6)


def test_map_examples():
    r2, p2 = stadium_map(2 * math.pi + 3, 0.0, ELL)
    assert r2 == pytest.approx(math.pi + 1, abs=1e-12) and p2 == pytest.approx(0.0, abs=1e-12)
    r2, p2 = stadium_map(math.pi / 2, 0.0, ELL)
    assert r2 == pytest.approx(1.5 * math.pi + 2, abs=1e-12) and p2 == pytest.approx(0.0, abs=1e-12)


def test_map_rejects_grazing():
    with pytest.raises(DomainError):
        stadium_map(1.0, math.pi / 2, ELL)


def _circ(a, b):
    d = abs(a - b) % PER
    return min(d, PER - d)


def test_reversibility_1000():
    s = sample_states(SystemSpec.stadium(ELL), RngStream(77), 1000, 0)
    worst = 0.0
    for r, phi, _ in s:
        r2, p2 = stadium_map(r, phi, ELL)
        r3, p3 = stadium_map(r2, -p2, ELL)
        worst = max(worst, _circ(r3, r), abs(p3 + phi))
    assert worst <= 1e-9


@given(st.floats(0, PER, exclude_max=True), st.floats(-1.55, 1.55))
def test_map_arrival_on_ray(r, phi):
    r2, p2 = stadium_map(r, phi, ELL)
    assert abs(p2) < math.pi / 2
    b0 = stadium_boundary_point(r, ELL)
    b1 = stadium_boundary_point(r2, ELL)
    (px, py), (nx, ny) = b0.position, b0.inward_normal
    # outgoing direction: normal rotated by phi toward increasing arclength
    tx, ty = ny, -nx
    vx, vy = math.cos(phi) * nx + math.sin(phi) * tx, math.cos(phi) * ny + math.sin(phi) * ty
    dx, dy = b1.position[0] - px, b1.position[1] - py
    assert abs(dx * vy - dy * vx) <= 1e-10 * max(1.0, math.hypot(dx, dy))
    assert dx * vx + dy * vy > 0
    assert _on_boundary(*b1.position, ELL) <= 1e-10


def test_positive_phi_moves_forward_on_flat_side():
    # from the middle of the bottom, positive phi tilts the ray toward larger arclength (to the right)
    r0 = 2 * math.pi + 3
    r_plus, _ = stadium_map(r0, 0.3, ELL)
    r_zero, _ = stadium_map(r0, 0.0, ELL)
    assert stadium_boundary_point(r_plus, ELL).position[0] > stadium_boundary_point(r_zero, ELL).position[0]
