"""Visit counts, return times, and the estimators built on them.

All ball tests use the open ball ``d(f^n y, x) < r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import _kernels as K
from .core import (DEFAULT_BURN_IN, PhasePoint, SystemSpec, check_point, distance, expansion, iterate,
                   run_blocks, sample_states, sample_words, to_state, words_for_bits)
from .errors import InsufficientData, ParameterError, RangeError, Undersampled
from .measure import BallMeasure, DistanceSample, ball_measure, exact_ball_measure, sample_in_ball
from .rng import RngStream

LOW_R2 = 0.5


@dataclass(frozen=True)
class Exceeded:
    """No return within ``cap`` steps."""

    cap: int


@dataclass
class EmpiricalPMF:
    counts: dict[int, int]
    total: int

    def __post_init__(self):
        if self.total <= 0 or sum(self.counts.values()) != self.total:
            raise ValueError("counts must be nonnegative and sum to total > 0")
        if any(k < 0 or c < 0 for k, c in self.counts.items()):
            raise ValueError("counts must be nonnegative")

    @classmethod
    def from_values(cls, values) -> "EmpiricalPMF":
        values = np.asarray(values, dtype=np.int64)
        binned = np.bincount(values)
        return cls({int(k): int(c) for k, c in enumerate(binned) if c}, int(values.size))

    def frequency(self, k: int) -> Fraction:
        return Fraction(self.counts.get(k, 0), self.total)

    def pmf(self, k: int) -> float:
        return self.counts.get(k, 0) / self.total

    @property
    def max_k(self) -> int:
        return max(self.counts)

    def tail(self, k: int) -> float:
        """Mass strictly above ``k``."""
        return sum(c for j, c in self.counts.items() if j > k) / self.total

    def mean(self) -> float:
        return sum(k * c for k, c in self.counts.items()) / self.total


@dataclass
class SlopeEstimate:
    """Least-squares line through ``points`` (abscissa, ordinate).

    Recurrence fits use ``(-log r, log tau)``; dimension fits use
    ``(log r, log mu)``.  ``dropped`` lists radii left out of the fit.
    """

    points: list[tuple[float, float]]
    slope: float
    intercept: float
    r2: float
    dropped: list[float] = field(default_factory=list)

    @property
    def low_r2(self) -> bool:
        return self.r2 < LOW_R2


def fit_line(xs: Sequence[float], ys: Sequence[float], dropped=()) -> SlopeEstimate:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 3:
        raise InsufficientData(f"{xs.size} usable radii, need at least 3")
    xm, ym = xs.mean(), ys.mean()
    sxx = float(((xs - xm) ** 2).sum())
    sxy = float(((xs - xm) * (ys - ym)).sum())
    syy = float(((ys - ym) ** 2).sum())
    slope = sxy / sxx
    intercept = float(ym - slope * xm)
    # a flat response carries no information about the fit quality
    r2 = sxy * sxy / (sxx * syy) if syy > 0 else 0.0
    return SlopeEstimate([(float(a), float(b)) for a, b in zip(xs, ys)], slope, intercept, r2, list(dropped))


def _check_radii(radii) -> np.ndarray:
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or np.any(radii <= 0) or np.any(np.diff(radii) >= 0):
        raise ParameterError("radii must be positive and strictly decreasing")
    return radii


# -- visit counts ----------------------------------------------------------------


def _check_resolution(p, steps: int) -> None:
    """Sampled doubling points know only their stored digits; past them the orbit would read zeros."""
    if p.digits is not None and 64 * (len(p.digits) - 1) < steps:
        raise ParameterError(f"point resolves {64 * (len(p.digits) - 1)} steps < {steps}; "
                             "sample it with precision_bits >= steps + 64")


def count_visits(spec: SystemSpec, x: PhasePoint, r: float, y: PhasePoint, p: int, q: int) -> int:
    """#{p <= l <= q : d(f^l y, x) < r}."""
    check_point(spec, x)
    check_point(spec, y)
    if not r > 0:
        raise ParameterError("r must be positive")
    if q < p:
        raise RangeError(f"q={q} < p={p}")
    if p < 1:
        raise RangeError("p must be >= 1")
    checkpoints = np.array([p - 1, q], dtype=np.int64)
    if spec.kind == "doubling":
        _check_resolution(y, q)
        _, out = K.words_cumulative_hits(expansion(y)[None, :], x.x, r, checkpoints)
    else:
        _, out = K.cumulative_hits(spec.code, spec.params, to_state(spec, y)[None, :], to_state(spec, x), r,
                                   checkpoints)
    return int(out[0, 1] - out[0, 0])


def ensemble_hits(spec: SystemSpec, x: PhasePoint, r: float, checkpoints, ensemble_size: int, rng: RngStream,
                  burn_in: int = DEFAULT_BURN_IN) -> tuple[np.ndarray, np.ndarray]:
    """Visit counts of an ensemble of independent μ-samples y_i.

    Returns ``(hit0, counts)`` where ``hit0[i]`` says whether y_i is in
    B(x, r) and ``counts[i, j]`` counts visits at times 1..checkpoints[j].
    Member ``i`` uses stream ``rng.child(i)``.
    """
    checkpoints = np.asarray(checkpoints, dtype=np.int64)
    if np.any(np.diff(checkpoints) < 0):
        raise ParameterError("checkpoints must be nondecreasing")
    horizon = int(checkpoints[-1]) if checkpoints.size else 0
    center = to_state(spec, x)

    if spec.kind == "doubling":
        nwords = words_for_bits(horizon + 64)

        def work(a, b):
            return K.words_cumulative_hits(sample_words(rng, b - a, nwords, start=a), x.x, r, checkpoints)
    else:
        def work(a, b):
            states = sample_states(spec, rng, b - a, burn_in, start=a)
            return K.cumulative_hits(spec.code, spec.params, states, center, r, checkpoints)

    parts = run_blocks(work, ensemble_size)
    if not parts:
        return np.zeros(0, dtype=bool), np.zeros((0, checkpoints.size), dtype=np.int64)
    return np.concatenate([h for h, _ in parts]), np.concatenate([c for _, c in parts])


def horizon_for(spec: SystemSpec, x: PhasePoint, r: float, t: float, budget: int, rng: RngStream,
                burn_in: int = DEFAULT_BURN_IN) -> tuple[int, BallMeasure]:
    """``floor(t / μ(B(x, r)))`` using the exact measure when available."""
    if not t > 0:
        raise ParameterError("t must be positive")
    bm = ball_measure(spec, x, r, budget, rng, burn_in, monte_carlo=False)
    if bm.value <= 0:
        raise Undersampled(f"no sample in B(x, {r}) out of {bm.budget}")
    return int(math.floor(t / bm.value)), bm


def visit_count_distribution(spec: SystemSpec, x: PhasePoint, r: float, t: float, ensemble_size: int,
                             rng: RngStream, budget: int = 10**6, burn_in: int = DEFAULT_BURN_IN) -> EmpiricalPMF:
    """Distribution of N(x, r)(y) = S_1^N(y), N = floor(t / μ(B(x, r))).

    The ball measure is estimated from ``rng.child(0)``; ensemble member
    ``i`` is drawn from ``rng.child(1).child(i)``.
    """
    n, _ = horizon_for(spec, x, r, t, budget, rng.child(0), burn_in)
    _, counts = ensemble_hits(spec, x, r, [n], ensemble_size, rng.child(1), burn_in)
    return EmpiricalPMF.from_values(counts[:, 0])


# -- return times --------------------------------------------------------------------


def _return_times(spec: SystemSpec, x: PhasePoint, radii: np.ndarray, cap: int) -> np.ndarray:
    if spec.kind == "doubling":
        _check_resolution(x, cap)
        return K.words_return_times(expansion(x), x.x, radii, cap)
    s = to_state(spec, x)
    return K.return_times(spec.code, spec.params, s, s, radii, cap)


def first_return_time(spec: SystemSpec, x: PhasePoint, r: float, cap: int) -> int | Exceeded:
    """Least n in [1, cap] with d(f^n x, x) < r."""
    check_point(spec, x)
    if not r > 0:
        raise ParameterError("r must be positive")
    if cap < 1:
        raise ParameterError("cap must be >= 1")
    tau = int(_return_times(spec, x, np.array([float(r)]), cap)[0])
    return tau if tau > 0 else Exceeded(cap)


def return_time_table(spec: SystemSpec, x: PhasePoint, radii, cap: int) -> list[int | Exceeded]:
    """First return times for every radius of a decreasing schedule, one orbit pass."""
    check_point(spec, x)
    radii = _check_radii(radii)
    return [int(t) if t > 0 else Exceeded(cap) for t in _return_times(spec, x, radii, cap)]


def recurrence_rate(spec: SystemSpec, x: PhasePoint, radii, cap: int) -> SlopeEstimate:
    """Slope of log tau_r(x) against -log r."""
    radii = _check_radii(radii)
    if distance(spec, iterate(spec, x, 1), x) == 0.0:
        raise ParameterError("center is an exact fixed point")
    taus = return_time_table(spec, x, radii, cap)
    xs, ys, dropped = [], [], []
    for r, tau in zip(radii, taus):
        if isinstance(tau, Exceeded):
            dropped.append(float(r))
        else:
            xs.append(-math.log(r))
            ys.append(math.log(tau))
    return fit_line(xs, ys, dropped)


def local_dimension(spec: SystemSpec, x: PhasePoint, radii, budget: int, rng: RngStream,
                    burn_in: int = DEFAULT_BURN_IN, exact: bool = True) -> SlopeEstimate:
    """Slope of log μ(B(x, r)) against log r.

    With ``exact`` the closed-form ball measure is used where one exists;
    otherwise every radius is read from one shared Monte Carlo sample.
    """
    radii = _check_radii(radii)
    check_point(spec, x)
    if exact and exact_ball_measure(spec, x, radii[0]) is not None:
        masses = [exact_ball_measure(spec, x, r) for r in radii]
    else:
        sample = DistanceSample(spec, x, budget, rng, float(radii[0]), burn_in)
        masses = [sample.ball(r)[0] for r in radii]
    xs, ys, dropped = [], [], []
    for r, m in zip(radii, masses):
        if m > 0:
            xs.append(math.log(r))
            ys.append(math.log(m))
        else:
            dropped.append(float(r))
    return fit_line(xs, ys, dropped)


def mean_loglog_slope(estimates: Sequence[SlopeEstimate]) -> SlopeEstimate:
    """Fit through the center-averaged points of several same-schedule fits.

    Only abscissae present in every estimate are kept.
    """
    common = set.intersection(*(set(a for a, _ in e.points) for e in estimates))
    xs = sorted(common)
    ys = [float(np.mean([dict(e.points)[a] for e in estimates])) for a in xs]
    return fit_line(xs, ys)


def estimate_ball_measure(spec: SystemSpec, x: PhasePoint, r: float, budget: int, rng: RngStream,
                          burn_in: int = DEFAULT_BURN_IN) -> BallMeasure:
    """Monte Carlo frequency of μ-samples in B(x, r), with its standard error.

    ``exact`` is also set when the measure is known in closed form.
    """
    check_point(spec, x)
    if not r > 0:
        raise ParameterError("r must be positive")
    if budget < 1000:
        raise ParameterError("budget must be >= 1000")
    return ball_measure(spec, x, r, budget, rng, burn_in)


def corona_ratio(spec: SystemSpec, x: PhasePoint, r: float, delta: float, budget: int, rng: RngStream,
                 burn_in: int = DEFAULT_BURN_IN, exact: bool = True) -> float:
    """μ(B(x, r + r^delta) minus B(x, r)) / μ(B(x, r))."""
    check_point(spec, x)
    if not 0 < r < 1:
        raise ParameterError("r must lie in (0, 1)")
    if not delta > 1:
        raise ParameterError("delta must exceed 1")
    outer = r + r**delta
    if exact and exact_ball_measure(spec, x, r) is not None:
        inner_m = exact_ball_measure(spec, x, r)
        return (exact_ball_measure(spec, x, outer) - inner_m) / inner_m
    sample = DistanceSample(spec, x, budget, rng, outer, burn_in)
    inner = sample.count(0.0, r)
    if inner == 0:
        raise Undersampled(f"no sample in B(x, {r})")
    return sample.count(r, outer) / inner


@dataclass
class MeanReturn:
    mean: float
    std_error: float
    size: int
    exceeded: int


def mean_return_time(spec: SystemSpec, x: PhasePoint, r: float, ensemble_size: int, cap: int, rng: RngStream,
                     burn_in: int = DEFAULT_BURN_IN) -> MeanReturn:
    """Average first return time to B(x, r) of μ|B-distributed starts.

    Samples exceeding ``cap`` are counted at ``cap`` and reported.
    """
    check_point(spec, x)
    if ensemble_size <= 0:
        raise Undersampled("empty ensemble")
    starts = sample_in_ball(spec, x, r, ensemble_size, rng, horizon=cap, burn_in=burn_in)
    if spec.kind == "doubling":
        taus = K.words_first_entrances(starts, x.x, r, cap)
    else:
        taus = K.first_entrances(spec.code, spec.params, starts, to_state(spec, x), r, cap)
    exceeded = int((taus < 0).sum())
    taus = np.where(taus < 0, cap, taus).astype(float)
    se = float(taus.std(ddof=1) / math.sqrt(taus.size)) if taus.size > 1 else math.inf
    return MeanReturn(float(taus.mean()), se, int(taus.size), exceeded)
