"""Radii with controlled corona mass, chosen by nested-interval dichotomy.

Between ``theta^(n+1)`` and ``theta^n`` the radius is parametrised by
``t`` in [0, 1] and the annulus measure ``m((t1, t2])`` is compared on two
candidate subintervals per level; the lighter one is kept.  Interval
geometry is done in exact rationals so traces are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

from .core import DEFAULT_BURN_IN, PhasePoint, SystemSpec, check_point
from .errors import ParameterError, Undersampled
from .measure import DistanceSample, exact_ball_measure
from .rng import RngStream

MIN_CANDIDATE_SAMPLES = 100
EXACT_TIE_RTOL = 1e-9


def effective_theta(theta: float) -> tuple[float, int]:
    """Smallest integer root ``theta^(1/m) >= 1/2`` and its index ``m``."""
    if not 0 < theta < 1:
        raise ParameterError("theta must lie in (0, 1)")
    m = 1
    while theta ** (1.0 / m) < 0.5:
        m += 1
    return theta ** (1.0 / m), m


def corona_exponent(lam: float) -> float:
    """Exponent ``a = -ln 2 / ln lambda`` delivered by the dichotomy."""
    if not 0 < lam < 0.5:
        raise ParameterError("lambda must lie in (0, 1/2)")
    return -math.log(2.0) / math.log(lam)


class _Measure:
    """μ of annuli around x, exact or from one shared sample."""

    def __init__(self, spec, x, r_max, budget, rng, burn_in, exact):
        self.spec, self.x = spec, x
        self.exact = exact and exact_ball_measure(spec, x, r_max) is not None
        self.sample = None if self.exact else DistanceSample(spec, x, budget, rng, r_max, burn_in)

    def annulus(self, lo: float, hi: float) -> tuple[float, float, int | None]:
        if self.exact:
            if hi <= lo:
                return 0.0, 0.0, None
            m = exact_ball_measure(self.spec, self.x, hi) - exact_ball_measure(self.spec, self.x, lo)
            return m, 0.0, None
        if hi <= lo:
            return 0.0, 0.0, 0
        est, se = self.sample.mass(lo, hi)
        return est, se, self.sample.count(lo, hi)


def _radius(theta: float, n: int, t: float) -> float:
    return theta ** (n + 1) + t * (theta**n - theta ** (n + 1))


def corona_mass(spec: SystemSpec, x: PhasePoint, n: int, theta: float, t1: float, t2: float, budget: int,
                rng: RngStream, burn_in: int = DEFAULT_BURN_IN, exact: bool = True) -> float:
    """m((t1, t2]) = μ(B(x, R(t2))) - μ(B(x, R(t1))), R(t) = theta^(n+1) + t (theta^n - theta^(n+1))."""
    check_point(spec, x)
    if not 0 <= t1 <= t2 <= 1:
        raise ParameterError("need 0 <= t1 <= t2 <= 1")
    if t1 == t2:
        return 0.0
    meas = _Measure(spec, x, _radius(theta, n, t2), budget, rng, burn_in, exact)
    if not meas.exact and meas.sample.count(0.0, _radius(theta, n, t2)) == 0:
        raise Undersampled("no sample in the outer ball")
    return meas.annulus(_radius(theta, n, t1), _radius(theta, n, t2))[0]


@dataclass
class DichotomyTrace:
    theta: float
    n: int
    lam: float
    rho: float
    intervals: list[tuple[float, float]]
    chosen_sides: list[str]
    masses: list[float]
    mass_errors: list[float]
    t_star: float
    radius: float
    theta_input: float
    n_input: int
    candidates: list[tuple[tuple[float, float], tuple[float, float]]] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        d["intervals"] = [list(i) for i in self.intervals]
        d["candidates"] = [[list(a), list(b)] for a, b in self.candidates]
        return d


def dichotomy_radius(spec: SystemSpec, x: PhasePoint, n: int, theta: float, lam: float, depth: int = 8,
                     budget: int = 10**6, rng: RngStream | None = None, burn_in: int = DEFAULT_BURN_IN,
                     exact: bool = True) -> DichotomyTrace:
    """Radius in (theta^(n+1), theta^n) from ``depth`` levels of dichotomy.

    Thetas below 1/2 are replaced by their smallest integer root above
    1/2, with ``n`` scaled so the interval stays inside the original one.
    Near-equal candidates (within one combined standard error, or 1e-9
    relative for exact measures) go to the left.
    """
    check_point(spec, x)
    if not 0 < lam < 0.5:
        raise ParameterError("lambda must lie in (0, 1/2)")
    if depth < 1:
        raise ParameterError("depth must be >= 1")
    th, root = effective_theta(theta)
    ne = n * root
    outer = th**ne
    meas = _Measure(spec, x, outer, budget, rng if rng is not None else RngStream(0), burn_in, exact)

    def mass(iv):
        return meas.annulus(_radius(th, ne, float(iv[0])), _radius(th, ne, float(iv[1])))

    lam_q = Fraction(lam)
    rho_q = (1 - 2 * lam_q) / 3
    a, b = Fraction(0), Fraction(1)
    m0, se0, _ = mass((a, b))
    intervals = [(0.0, 1.0)]
    masses, errors, sides, cands = [m0], [se0], [], []
    for k in range(depth):
        width = b - a
        left = (a + rho_q * width, a + (rho_q + lam_q) * width)
        right = (b - (rho_q + lam_q) * width, b - rho_q * width)
        ml, sel, nl = mass(left)
        mr, ser, nr = mass(right)
        if nl is not None and min(nl, nr) < MIN_CANDIDATE_SAMPLES:
            raise Undersampled(f"undersampled at level {k}")
        tol = math.hypot(sel, ser) if nl is not None else EXACT_TIE_RTOL * max(ml, mr)
        if ml <= mr or abs(ml - mr) <= tol:
            (a, b), m, se, side = left, ml, sel, "left"
        else:
            (a, b), m, se, side = right, mr, ser, "right"
        cands.append(((float(left[0]), float(left[1])), (float(right[0]), float(right[1]))))
        intervals.append((float(a), float(b)))
        masses.append(m)
        errors.append(se)
        sides.append(side)
    t_star = float((a + b) / 2)
    return DichotomyTrace(th, ne, float(lam_q), float(rho_q), intervals, sides, masses, errors, t_star,
                          _radius(th, ne, t_star), theta, n, cands)


@dataclass
class CoronaRow:
    s: float
    corona: float
    corona_std_error: float
    ball_2r: float
    rhs: float
    margin: float
    passed: bool
    c0_needed: float


@dataclass
class CoronaCheck:
    radius: float
    a: float
    c0: float
    rows: list[CoronaRow]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def smallest_c0(self) -> float:
        """Smallest constant for which every schedule entry passes."""
        return max(r.c0_needed for r in self.rows)

    def to_dict(self) -> dict:
        return {"radius": self.radius, "a": self.a, "c0": self.c0, "passed": self.passed,
                "smallest_c0": self.smallest_c0, "rows": [asdict(r) for r in self.rows]}


def verify_corona_bound(spec: SystemSpec, x: PhasePoint, radius: float, a: float, c0: float,
                        s_schedule: Sequence[float], budget: int = 10**6, rng: RngStream | None = None,
                        burn_in: int = DEFAULT_BURN_IN, exact: bool = True,
                        lam: float | None = None) -> CoronaCheck:
    """Check μ(B(x, r+s) minus B(x, r)) <= C0 s^a r^-a μ(B(x, 2r)) for each s."""
    check_point(spec, x)
    if lam is not None and not math.isclose(a, corona_exponent(lam), rel_tol=1e-12):
        raise ParameterError("a must equal -ln 2 / ln lambda")
    if not s_schedule or any(not 0 < s < radius for s in s_schedule):
        raise ParameterError("every s must satisfy 0 < s < radius")
    meas = _Measure(spec, x, 2 * radius, budget, rng if rng is not None else RngStream(0), burn_in, exact)
    ball2, _, n2 = meas.annulus(0.0, 2 * radius)
    if ball2 <= 0 or n2 == 0:
        raise Undersampled("no sample in B(x, 2r)")
    rows = []
    for s in s_schedule:
        corona, se, _ = meas.annulus(radius, radius + s)
        scale = s**a * radius ** (-a) * ball2
        rhs = c0 * scale
        rows.append(CoronaRow(s, corona, se, ball2, rhs, rhs - corona, corona <= rhs, corona / scale))
    return CoronaCheck(radius, a, c0, rows)
