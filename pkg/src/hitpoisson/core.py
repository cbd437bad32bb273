"""Phase points, system parameters, orbits and invariant sampling.

Four systems share one interface: the doubling map and the LSV
intermittent map on the circle, the intermittent solenoid on the solid
torus, and the stadium billiard map.  Points are immutable records; all
iteration goes through the compiled kernels in ``_kernels``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from . import _kernels as K
from .errors import DomainError, GeometryError, ParameterError, PhaseSpaceMismatch, RangeError
from .rng import RngStream

KINDS = ("doubling", "lsv", "solenoid", "stadium")

DEFAULT_BURN_IN = 1000
DEFAULT_PRECISION_BITS = 4096
BLOCK = 1024

_CODES = {"doubling": K.DOUBLING_FLOAT, "lsv": K.LSV, "solenoid": K.SOLENOID, "stadium": K.STADIUM}
_MASK64 = (1 << 64) - 1
_PHI_MAX = float(np.nextafter(math.pi / 2, 0.0))


def lsv_sup_deriv(gamma: float) -> float:
    """Sup norm of the derivative of the LSV map, ``2 + gamma``.

    The left branch derivative ``1 + 2**gamma (1 + gamma) x**gamma`` is
    increasing and reaches ``2 + gamma`` at ``x = 1/2``; the right branch
    has slope 2.
    """
    _check_gamma(gamma)
    return 2.0 + gamma


def _check_gamma(gamma):
    if gamma is None or not 0.0 < gamma < 1.0:
        raise ParameterError("SRB measure requires gamma<1 (and gamma>0)")


@dataclass(frozen=True)
class SystemSpec:
    """Parameters of one dynamical system, validated on construction."""

    kind: str
    gamma: float | None = None
    theta: float | None = None
    ell: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown system kind {self.kind!r}")
        if self.kind in ("lsv", "solenoid"):
            _check_gamma(self.gamma)
        if self.kind == "solenoid":
            if self.theta is None or not self.theta > 0.0:
                raise ParameterError("theta must be positive")
            bound = self.theta * (1.0 + lsv_sup_deriv(self.gamma))
            if not bound < 1.0:
                raise ParameterError(f"theta*(1+sup_deriv) must be < 1 (got {bound!r})")
        if self.kind == "stadium" and (self.ell is None or not self.ell > 0.0):
            raise ParameterError("stadium requires ell > 0")

    @classmethod
    def doubling(cls) -> "SystemSpec":
        return cls("doubling")

    @classmethod
    def lsv(cls, gamma: float) -> "SystemSpec":
        return cls("lsv", gamma=gamma)

    @classmethod
    def solenoid(cls, gamma: float, theta: float) -> "SystemSpec":
        return cls("solenoid", gamma=gamma, theta=theta)

    @classmethod
    def stadium(cls, ell: float) -> "SystemSpec":
        return cls("stadium", ell=ell)

    @property
    def sup_deriv(self) -> float | None:
        if self.kind == "doubling":
            return 2.0
        if self.kind in ("lsv", "solenoid"):
            return lsv_sup_deriv(self.gamma)
        return None

    @property
    def zeta(self) -> float | None:
        """Polynomial tail exponent of the tower return time."""
        if self.kind in ("lsv", "solenoid"):
            return 1.0 / self.gamma
        if self.kind == "stadium":
            return 2.0
        return None

    @property
    def alpha(self) -> float | None:
        """Contraction exponent along stable/unstable leaves."""
        if self.kind == "solenoid":
            return 1.0 + 1.0 / self.gamma
        if self.kind == "stadium":
            return 1.0
        return None

    @property
    def perimeter(self) -> float | None:
        return 2.0 * (math.pi + self.ell) if self.kind == "stadium" else None

    @property
    def code(self) -> int:
        return _CODES[self.kind]

    @property
    def params(self) -> np.ndarray:
        gamma = self.gamma if self.gamma is not None else 0.0
        return np.array(
            [
                gamma,
                self.theta if self.theta is not None else 0.0,
                self.ell if self.ell is not None else 0.0,
                2.0**gamma,
                self.perimeter or 0.0,
            ]
        )

    def to_dict(self) -> dict:
        return {"kind": self.kind, "gamma": self.gamma, "theta": self.theta, "ell": self.ell}


# -- points -----------------------------------------------------------------


@dataclass(frozen=True)
class Circle:
    """A point of T^1 = [0, 1).

    Doubling-map points may carry ``digits``, the leading words of their
    binary expansion; ``x`` is then the expansion truncated to 53 bits.
    """

    x: float
    digits: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        x = float(self.x) % 1.0
        if x == 1.0:
            x = 0.0
        object.__setattr__(self, "x", x)

    @classmethod
    def from_digits(cls, words) -> "Circle":
        words = np.ascontiguousarray(words, dtype=np.uint64)
        lead = K.window_value(words[0]) if len(words) else 0.0
        return cls(lead, words)


@dataclass(frozen=True)
class TorusDisk:
    x: float
    z_re: float
    z_im: float

    def __post_init__(self):
        x = float(self.x) % 1.0
        object.__setattr__(self, "x", 0.0 if x == 1.0 else x)
        if self.z_re**2 + self.z_im**2 > 1.0:
            raise DomainError("z must lie in the closed unit disk")

    @property
    def z(self) -> complex:
        return complex(self.z_re, self.z_im)


@dataclass(frozen=True)
class Billiard:
    r: float
    phi: float

    def __post_init__(self):
        if not abs(self.phi) < math.pi / 2:
            raise DomainError("|phi| must be < pi/2")


PhasePoint = Union[Circle, TorusDisk, Billiard]


def check_point(spec: SystemSpec, p) -> None:
    expected = {"doubling": Circle, "lsv": Circle, "solenoid": TorusDisk, "stadium": Billiard}[spec.kind]
    if not isinstance(p, expected):
        raise PhaseSpaceMismatch(f"{type(p).__name__} is not a {spec.kind} point")


def to_state(spec: SystemSpec, p) -> np.ndarray:
    check_point(spec, p)
    if isinstance(p, Circle):
        return np.array([p.x, 0.0, 0.0])
    if isinstance(p, TorusDisk):
        return np.array([p.x, p.z_re, p.z_im])
    return np.array([p.r % spec.perimeter, p.phi, 0.0])


def from_state(spec: SystemSpec, s) -> PhasePoint:
    if spec.kind in ("doubling", "lsv"):
        return Circle(float(s[0]))
    if spec.kind == "solenoid":
        return TorusDisk(float(s[0]), float(s[1]), float(s[2]))
    return Billiard(float(s[0]), float(s[1]))


def float_words(x: float) -> np.ndarray:
    """Exact binary expansion of a double in [0, 1) as uint64 words."""
    num, den = float(x).as_integer_ratio()
    k = den.bit_length() - 1
    n = max(1, -(-k // 64))
    val = num << (64 * n - k)
    return np.array([(val >> (64 * (n - 1 - i))) & _MASK64 for i in range(n)], dtype=np.uint64)


def expansion(p: Circle) -> np.ndarray:
    """Binary expansion words of a circle point (exact for plain floats)."""
    return p.digits if p.digits is not None else float_words(p.x)


# -- map and metric -----------------------------------------------------------


def iterate(spec: SystemSpec, p: PhasePoint, n: int) -> PhasePoint:
    """``f^n(p)`` by n-fold application of the system map."""
    check_point(spec, p)
    if n < 0:
        raise RangeError("n must be nonnegative")
    if n == 0:
        return p
    if spec.kind == "doubling":
        if p.digits is not None:
            return Circle.from_digits(K.words_shift(p.digits, n))
        # a double has at most 1074 fractional bits
        if n > 1100:
            return Circle(0.0)
        return Circle(math.fmod(math.ldexp(p.x, n), 1.0))
    state = to_state(spec, p)[None, :]
    K.push(spec.code, spec.params, state, n)
    if np.isnan(state).any():
        raise GeometryError("no boundary intersection found")
    return from_state(spec, state[0])


def distance(spec: SystemSpec, p: PhasePoint, q: PhasePoint) -> float:
    """Max-metric distance; circle coordinates use the shortest arc."""
    a = to_state(spec, p)
    b = to_state(spec, q)
    return float(K.dist(spec.code, a[0], a[1], a[2], b[0], b[1], b[2], spec.params))


# -- invariant sampling ---------------------------------------------------------


def _initial_state(spec: SystemSpec, gen: np.random.Generator) -> tuple[float, float, float]:
    u, v = gen.random(2)
    if spec.kind == "stadium":
        phi = math.asin(2.0 * v - 1.0)
        return u * spec.perimeter, max(phi, -_PHI_MAX), 0.0
    return u, 0.0, 0.0


def sample_states(spec: SystemSpec, rng: RngStream, count: int, burn_in: int = DEFAULT_BURN_IN,
                  start: int = 0) -> np.ndarray:
    """Rows ``start .. start+count-1`` of an ensemble of μ-samples.

    Row ``i`` is drawn from ``rng.child(i)`` and is identical to
    ``sample_invariant(spec, rng.child(i), burn_in)``.
    """
    states = np.empty((count, 3))
    for i in range(count):
        states[i] = _initial_state(spec, rng.child(start + i).generator())
    if spec.kind in ("lsv", "solenoid") and burn_in > 0:
        K.push(spec.code, spec.params, states, burn_in)
    return states


def sample_words(rng: RngStream, count: int, nwords: int, start: int = 0) -> np.ndarray:
    """Binary expansions of uniform points, one child stream per row."""
    words = np.empty((count, nwords), dtype=np.uint64)
    for i in range(count):
        words[i] = rng.child(start + i).words(nwords)
    return words


def words_for_bits(bits: int) -> int:
    return -(-int(bits) // 64) + 1


def sample_invariant(spec: SystemSpec, rng: RngStream, burn_in: int = DEFAULT_BURN_IN,
                     precision_bits: int = DEFAULT_PRECISION_BITS) -> PhasePoint:
    """One point distributed according to the invariant measure.

    Doubling points are uniform with ``precision_bits`` exact binary
    digits; stadium points are exact draws from cos(phi)/(4(pi+ell));
    LSV and solenoid points are uniform (resp. uniform x, z=0) starts
    pushed forward ``burn_in`` steps.
    """
    if burn_in < 0:
        raise RangeError("burn_in must be nonnegative")
    if spec.kind == "doubling":
        return Circle.from_digits(rng.words(words_for_bits(precision_bits)))
    state = np.array([_initial_state(spec, rng.generator())])
    if spec.kind in ("lsv", "solenoid") and burn_in > 0:
        K.push(spec.code, spec.params, state, burn_in)
    return from_state(spec, state[0])


# -- ensemble execution -------------------------------------------------------------

_threads = 1


def set_threads(n: int) -> None:
    """Number of worker threads used by ensemble computations."""
    global _threads
    _threads = max(1, int(n))


def get_threads() -> int:
    return _threads


def run_blocks(fn: Callable[[int, int], object], count: int, block: int = BLOCK) -> list:
    """Apply ``fn(start, stop)`` to fixed contiguous blocks, results in block order.

    Block boundaries never depend on the thread count, so integer
    reductions over the results are scheduling independent.
    """
    bounds = [(a, min(a + block, count)) for a in range(0, count, block)]
    if _threads <= 1 or len(bounds) <= 1:
        return [fn(a, b) for a, b in bounds]
    with ThreadPoolExecutor(max_workers=_threads) as pool:
        return list(pool.map(lambda ab: fn(*ab), bounds))
