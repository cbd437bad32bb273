"""Concrete map evaluations.

The LSV branch formula, the solenoid fiber map and the stadium bounce
are compiled in ``_kernels``; the functions here validate arguments and
unpack results.  ``solenoid_iterate_closed_form`` deliberately does not
use the solenoid step: it sums the fiber series directly so it can serve
as an independent check of iteration.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

from . import _kernels as K
from .core import SystemSpec, lsv_sup_deriv, _check_gamma
from .errors import DomainError, GeometryError, ParameterError

__all__ = [
    "BoundaryPoint",
    "lsv_map",
    "lsv_sup_deriv",
    "solenoid_map",
    "solenoid_iterate_closed_form",
    "stadium_boundary_point",
    "stadium_map",
]

_SEGMENTS = {K.SEG_BOTTOM: "bottom", K.SEG_TOP: "top", K.SEG_RIGHT_ARC: "right_arc",
             K.SEG_LEFT_ARC: "left_arc"}


def lsv_map(x: float, gamma: float) -> float:
    """``x(1 + 2^g x^g)`` on [0, 1/2), ``2x - 1`` on [1/2, 1]."""
    _check_gamma(gamma)
    if not 0.0 <= x <= 1.0:
        raise DomainError("x must lie in [0, 1]")
    if x < 0.5:
        return x * (1.0 + 2.0**gamma * x**gamma)
    return 2.0 * x - 1.0


def _solenoid_args(x, z, spec):
    if spec.kind != "solenoid":
        raise ParameterError("solenoid map needs a solenoid SystemSpec")
    if abs(z) > 1.0:
        raise DomainError("|z| must be <= 1")
    if not 0.0 <= x <= 1.0:
        raise DomainError("x must lie in [0, 1]")


def solenoid_map(x: float, z: complex, spec: SystemSpec) -> tuple[float, complex]:
    _solenoid_args(x, z, spec)
    # the base is the circle, so x = 1 is the point x = 0
    x2, re, im = K.step(K.SOLENOID, float(x) % 1.0, z.real, z.imag, spec.params)
    return x2, complex(re, im)


def solenoid_iterate_closed_form(x: float, z: complex, n: int, spec: SystemSpec) -> tuple[float, complex]:
    """``f^n(x, z) = (g^n x, theta^n z + 1/2 sum_j theta^(n-1-j) e^(2 pi i g^j x))``."""
    _solenoid_args(x, z, spec)
    if n < 1:
        raise DomainError("n must be a positive integer")
    theta = spec.theta
    acc = 0j
    g = float(x)
    for j in range(n):
        acc += theta ** (n - 1 - j) * cmath.exp(2j * math.pi * g)
        g = lsv_map(g, spec.gamma) % 1.0
    return g, theta**n * z + 0.5 * acc


@dataclass(frozen=True)
class BoundaryPoint:
    position: tuple[float, float]
    inward_normal: tuple[float, float]
    segment_kind: str


def stadium_boundary_point(r: float, ell: float) -> BoundaryPoint:
    """Point of the stadium boundary at counterclockwise arclength ``r``.

    ``r = 0`` is ``(ell/2, -1)``; the chart runs up the right arc, right
    to left along the top, down the left arc and back along the bottom.
    """
    if not ell > 0.0:
        raise ParameterError("ell must be positive")
    px, py, nx, ny, seg = K.boundary(r % (2.0 * (math.pi + ell)), ell)
    return BoundaryPoint((px, py), (nx, ny), _SEGMENTS[seg])


def stadium_map(r: float, phi: float, ell: float) -> tuple[float, float]:
    """Next reflection ``(r', phi')`` of the billiard in the stadium.

    ``phi`` is the angle between the outgoing velocity and the inward
    normal, positive toward increasing arclength.
    """
    if not abs(phi) < math.pi / 2:
        raise DomainError("|phi| must be < pi/2")
    if not ell > 0.0:
        raise ParameterError("ell must be positive")
    r2, phi2 = K.stadium_step(r % (2.0 * (math.pi + ell)), float(phi), float(ell))
    if math.isnan(r2):
        raise GeometryError(f"no boundary intersection from r={r!r}, phi={phi!r}")
    return r2, phi2
