"""Ball measures: analytic where available, Monte Carlo otherwise.

Monte Carlo samples of μ come in two flavours.  Doubling and stadium
points are drawn exactly and independently, one child stream per block
of ``IID_BLOCK`` points.  LSV and solenoid points come from stationary
chain segments: each chain starts from an independent burned-in sample
and contributes ``CHAIN_LEN`` consecutive orbit points; standard errors
are computed from the spread of the per-chain frequencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import _kernels as K
from .core import (DEFAULT_BURN_IN, PhasePoint, SystemSpec, run_blocks, sample_states, to_state,
                   words_for_bits)
from .errors import ParameterError, Undersampled
from .rng import RngStream

IID_BLOCK = 1 << 16
CHAIN_LEN = 256
_MASK64 = (1 << 64) - 1
MAX_WORDS = 1 << 27


def exact_ball_measure(spec: SystemSpec, x: PhasePoint, r: float) -> float | None:
    """μ(B(x, r)) in closed form, or None when only sampling is possible."""
    if spec.kind == "doubling":
        return min(2.0 * r, 1.0)
    if spec.kind == "stadium":
        width = min(2.0 * r, spec.perimeter)
        lo = max(x.phi - r, -math.pi / 2)
        hi = min(x.phi + r, math.pi / 2)
        return width * (math.sin(hi) - math.sin(lo)) / (4.0 * (math.pi + spec.ell))
    return None


@dataclass
class BallMeasure:
    estimate: float
    std_error: float
    hits: int
    budget: int
    exact: float | None = None
    warning: str | None = None

    @property
    def value(self) -> float:
        """The analytic value when flagged, else the estimate."""
        return self.exact if self.exact is not None else self.estimate

    @property
    def rel_error(self) -> float:
        if self.exact is not None:
            return 0.0
        return self.std_error / self.estimate if self.estimate > 0 else math.inf


def _iid_states(spec: SystemSpec, gen: np.random.Generator, n: int) -> np.ndarray:
    u = gen.random((n, 2))
    states = np.zeros((n, 3))
    if spec.kind == "stadium":
        states[:, 0] = u[:, 0] * spec.perimeter
        states[:, 1] = np.arcsin(2.0 * u[:, 1] - 1.0)
    else:
        states[:, 0] = u[:, 0]
    return states


class DistanceSample:
    """Distances from a fixed center to one shared Monte Carlo sample of μ.

    Only distances below ``r_max`` are kept.  Every mass query reuses the
    same sample, so comparisons between nearby annuli are consistent.
    """

    def __init__(self, spec: SystemSpec, x: PhasePoint, budget: int, rng: RngStream, r_max: float,
                 burn_in: int = DEFAULT_BURN_IN):
        self.spec = spec
        self.r_max = r_max
        center = to_state(spec, x)
        self.iid = spec.kind in ("doubling", "stadium")
        code, params = spec.code, spec.params
        if self.iid:
            self.groups = -(-budget // IID_BLOCK)

            def work(a, b):
                out = []
                for g in range(a, b):
                    d = K.distances_to(code, params, _iid_states(spec, rng.child(g).generator(), IID_BLOCK),
                                       center)
                    d = d[d < r_max]
                    out.append((np.full(d.size, g, dtype=np.int64), d))
                return out

            chunk = 1
            self.size = self.groups * IID_BLOCK
        else:
            self.groups = -(-budget // CHAIN_LEN)

            def work(a, b):
                states = sample_states(spec, rng, b - a, burn_in, start=a)
                d = K.chain_distances(code, params, states, center, CHAIN_LEN)
                rows, cols = np.nonzero(d < r_max)
                return [(rows + a, d[rows, cols])]

            chunk = 512
            self.size = self.groups * CHAIN_LEN
        parts = [p for block in run_blocks(work, self.groups, block=chunk) for p in block]
        group = np.concatenate([p[0] for p in parts]) if parts else np.empty(0, np.int64)
        dist = np.concatenate([p[1] for p in parts]) if parts else np.empty(0)
        order = np.argsort(dist, kind="stable")
        self.dist = dist[order]
        self.group = group[order]
        self.per_group = IID_BLOCK if self.iid else CHAIN_LEN

    def count(self, lo: float, hi: float) -> int:
        """Number of sample points with lo <= d < hi."""
        a, b = np.searchsorted(self.dist, [lo, hi], side="left")
        return int(b - a)

    def mass(self, lo: float, hi: float) -> tuple[float, float]:
        """Estimate and standard error of μ({lo <= d < hi})."""
        if hi > self.r_max * (1 + 1e-15):
            raise ValueError("query radius exceeds the retained sample")
        n = self.size
        if self.iid:
            p = self.count(lo, hi) / n
            return p, math.sqrt(p * (1.0 - p) / n)
        a, b = np.searchsorted(self.dist, [lo, hi], side="left")
        freq = np.bincount(self.group[a:b], minlength=self.groups) / self.per_group
        mean = float(freq.mean())
        se = float(freq.std(ddof=1) / math.sqrt(self.groups)) if self.groups > 1 else math.inf
        return mean, se

    def ball(self, r: float) -> tuple[float, float]:
        return self.mass(0.0, r)


def ball_measure(spec: SystemSpec, x: PhasePoint, r: float, budget: int, rng: RngStream,
                 burn_in: int = DEFAULT_BURN_IN, monte_carlo: bool = True) -> BallMeasure:
    exact = exact_ball_measure(spec, x, r)
    if not monte_carlo and exact is not None:
        return BallMeasure(exact, 0.0, 0, 0, exact)
    sample = DistanceSample(spec, x, budget, rng, r, burn_in)
    est, se = sample.ball(r)
    hits = sample.count(0.0, r)
    warning = "zero hits" if hits == 0 else None
    return BallMeasure(est, se, hits, sample.size, exact, warning)


# -- sampling μ conditioned on a ball ---------------------------------------------


def _doubling_in_ball(x: float, r: float, stream: RngStream, nwords: int) -> np.ndarray:
    """Expansion of a uniform point of (x - r, x + r) mod 1.

    The first 128 bits are ``floor((x - r + 2r k / 2^128) 2^128)`` for a
    uniform 128-bit ``k``, computed exactly; later bits are fresh random
    words, so the point is uniform on the ball up to 2^-128.
    """
    words = stream.words(nwords + 2)
    out = words[2:].copy()
    if 2.0 * r >= 1.0:
        return out
    k = (int(words[0]) << 64) | int(words[1])
    lo = Fraction(x) - Fraction(r)
    top = math.floor((lo + 2 * Fraction(r) * Fraction(k, 1 << 128)) * (1 << 128)) % (1 << 128)
    out[0] = np.uint64(top >> 64)
    if nwords > 1:
        out[1] = np.uint64(top & _MASK64)
    return out


def _stadium_in_ball(spec: SystemSpec, x, r: float, gen: np.random.Generator) -> tuple[float, float, float]:
    u, w = gen.random(2)
    per = spec.perimeter
    width = min(2.0 * r, per)
    rr = (x.r - 0.5 * width + width * u) % per
    lo = math.sin(max(x.phi - r, -math.pi / 2))
    hi = math.sin(min(x.phi + r, math.pi / 2))
    phi = math.asin(lo + w * (hi - lo))
    lim = float(np.nextafter(math.pi / 2, 0.0))
    return rr, min(max(phi, -lim), lim), 0.0


def sample_in_ball(spec: SystemSpec, x: PhasePoint, r: float, count: int, rng: RngStream,
                   horizon: int = 0, burn_in: int = DEFAULT_BURN_IN, budget_steps: int = 10**8):
    """``count`` points of μ restricted to B(x, r).

    Returns uint64 expansion rows (doubling, valid for ``horizon`` steps)
    or state rows.  Doubling and stadium draws are exact and independent;
    LSV and solenoid points are the successive ball visits of stationary
    chains, which are μ|B distributed but not independent.
    """
    if count <= 0:
        raise Undersampled("empty ensemble")
    if spec.kind == "doubling":
        nwords = words_for_bits(horizon + 64)
        if count * nwords > MAX_WORDS:
            raise ParameterError(f"{count} expansions of {horizon} steps exceed the memory limit; lower the horizon")
        out = np.empty((count, nwords), dtype=np.uint64)
        for i in range(count):
            out[i] = _doubling_in_ball(x.x, r, rng.child(i), nwords)
        return out
    if spec.kind == "stadium":
        return np.array([_stadium_in_ball(spec, x, r, rng.child(i).generator()) for i in range(count)])
    center = to_state(spec, x)
    found = []
    n_found = 0
    start = 0
    chains = 256
    length = 4096
    spent = 0
    while n_found < count:
        if spent > budget_steps:
            raise Undersampled(f"only {n_found} of {count} points found in B(x, {r})")
        states = sample_states(spec, rng, chains, burn_in, start=start)
        hits = K.chain_collect(spec.code, spec.params, states, center, r, length, count - n_found)
        found.append(hits)
        n_found += len(hits)
        start += chains
        spent += chains * (length + burn_in)
    return np.concatenate(found)[:count]
