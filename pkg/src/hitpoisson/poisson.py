"""Poisson utilities, total variation, and a Chen-Stein type error bound.

For a stationary 0/1 process with ``eps = P(X_1 = 1)``::

    d_TV(X_1 + ... + X_N, Poisson(N eps)) <= 2 N M (R1 + R2) + R3

with ``R3 = 4 (M p eps (1 + N eps) + (eps N)^M / M! e^{-N eps} + N eps^2)``.
R1 and R2 are only estimated here: R2 from points sampled in the ball,
R1 by probing a finite grid of the (j, q) pairs in its supremum, which
gives a lower bound on the true R1.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import pdtrc

from . import _kernels as K
from .core import DEFAULT_BURN_IN, PhasePoint, SystemSpec, check_point, to_state
from .errors import ParameterError, Undersampled
from .hitstats import EmpiricalPMF, ensemble_hits
from .measure import ball_measure, sample_in_ball
from .rng import RngStream

BATCHES = 30


def poisson_pmf(lam: float, k: int) -> float:
    """``lam^k e^-lam / k!``, in log space for k > 20."""
    if lam < 0:
        raise ParameterError("lambda must be >= 0")
    if k < 0:
        return 0.0
    if lam == 0:
        return 1.0 if k == 0 else 0.0
    if k <= 20:
        return lam**k * math.exp(-lam) / math.factorial(k)
    return math.exp(k * math.log(lam) - lam - math.lgamma(k + 1))


@dataclass(frozen=True)
class Poisson:
    lam: float

    def __post_init__(self):
        if self.lam < 0:
            raise ParameterError("lambda must be >= 0")

    def pmf(self, k: int) -> float:
        return poisson_pmf(self.lam, k)

    @property
    def max_k(self) -> int:
        """Support cut past which the remaining mass is below 1e-12."""
        return int(math.ceil(self.lam + 40.0 * math.sqrt(self.lam) + 40.0))

    def tail(self, k: int) -> float:
        return float(pdtrc(k, self.lam)) if self.lam > 0 else 0.0


def tv_distance(a, b) -> float:
    """Half the l1 distance between two pmfs on the nonnegative integers.

    Mass of either distribution beyond the common truncation point is
    added in full as a worst case, except for equal laws, whose
    distance is exactly zero.
    """
    if a is b or (isinstance(a, Poisson) and isinstance(b, Poisson) and a.lam == b.lam):
        return 0.0
    top = max(a.max_k, b.max_k)
    s = sum(abs(a.pmf(k) - b.pmf(k)) for k in range(top + 1))
    return 0.5 * (s + a.tail(top) + b.tail(top))


def tv_std_error(pmf: EmpiricalPMF) -> float:
    """Rough standard error of an empirical TV distance to a fixed law."""
    n = pmf.total
    return 0.5 * sum(math.sqrt(c / n * (1 - c / n) / n) for c in pmf.counts.values())


def _check_bound_args(epsilon, n, p, m):
    if not 0.0 <= epsilon <= 1.0:
        raise ParameterError("epsilon must lie in [0, 1]")
    if not 2 <= p < n:
        raise ParameterError(f"need 2 <= p < N (p={p}, N={n})")
    if not 1 <= m <= n - 1:
        raise ParameterError(f"need 1 <= M <= N-1 (M={m}, N={n})")


def r3_bound(epsilon: float, n: int, p: int, m: int) -> float:
    _check_bound_args(epsilon, n, p, m)
    ne = n * epsilon
    if ne == 0:
        tail_term = 0.0
    elif m <= 20:
        tail_term = ne**m / math.factorial(m) * math.exp(-ne)
    else:
        tail_term = math.exp(m * math.log(ne) - math.lgamma(m + 1) - ne)
    return 4.0 * (m * p * epsilon * (1.0 + ne) + tail_term + n * epsilon**2)


@dataclass
class BoundReport:
    epsilon: float
    n: int
    p: int
    m: int
    r1: float
    r2: float
    r3: float
    total: float
    r1_std_err: float = 0.0
    r2_std_err: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def total_std_err(self) -> float:
        return 2 * self.n * self.m * (self.r1_std_err + self.r2_std_err)


def total_bound(epsilon: float, n: int, p: int, m: int, r1: float, r2: float,
                r1_std_err: float = 0.0, r2_std_err: float = 0.0) -> BoundReport:
    if r1 < 0 or r2 < 0:
        raise ParameterError("error terms must be nonnegative")
    r3 = r3_bound(epsilon, n, p, m)
    total = 2 * n * m * (r1 + r2) + r3
    return BoundReport(epsilon, n, p, m, r1, r2, r3, total, r1_std_err, r2_std_err)


# -- Monte Carlo error terms ------------------------------------------------------------


def covariance_probe(first, event, batches: int = BATCHES) -> tuple[float, float]:
    """Cov(1{first}, 1{event}) over a shared ensemble, with a batch-means error."""
    first = np.asarray(first, dtype=float)
    event = np.asarray(event, dtype=float)
    cov = float((first * event).mean() - first.mean() * event.mean())
    n = first.size
    if n < 2 * batches:
        return cov, math.inf
    edges = np.linspace(0, n, batches + 1).astype(int)
    covs = [
        (first[a:b] * event[a:b]).mean() - first[a:b].mean() * event[a:b].mean()
        for a, b in zip(edges[:-1], edges[1:])
    ]
    return cov, float(np.std(covs, ddof=1) / math.sqrt(batches))


@dataclass
class R1Estimate:
    """Largest |covariance| over the probed grid.

    A lower-bound probe of R1: the supremum runs over all legal (j, q).
    """

    value: float
    std_error: float
    grid: list[dict] = field(default_factory=list)
    label: str = "lower-bound probe"


def estimate_r1(spec: SystemSpec, x: PhasePoint, r: float, n: int, p: int, j_grid: Sequence[int],
                q_grid: Sequence[int], ensemble_size: int, rng: RngStream,
                burn_in: int = DEFAULT_BURN_IN) -> R1Estimate:
    """Probe sup |Cov(1_B, 1{S_{p+1}^{N-j} = q})| on ``j_grid`` x ``q_grid``."""
    check_point(spec, x)
    if not j_grid or not q_grid:
        raise ParameterError("j_grid and q_grid must be nonempty")
    if not 2 <= p < n:
        raise ParameterError(f"need 2 <= p < N (p={p}, N={n})")
    js = sorted(set(int(j) for j in j_grid))
    if js[0] < 0 or js[-1] > n - p:
        raise ParameterError("j must lie in [0, N-p]")
    if min(q_grid) < 0:
        raise ParameterError("q must be nonnegative")
    ends = sorted(set(n - j for j in js))
    checkpoints = [p] + ends
    hit0, cum = ensemble_hits(spec, x, r, checkpoints, ensemble_size, rng, burn_in)
    base = cum[:, 0]
    grid = []
    best = (-1.0, 0.0)
    for j in js:
        s = cum[:, 1 + ends.index(n - j)] - base
        for q in q_grid:
            cov, se = covariance_probe(hit0, s == q)
            grid.append({"j": j, "q": int(q), "covariance": cov, "std_error": se})
            if abs(cov) > best[0]:
                best = (abs(cov), se)
    return R1Estimate(best[0], best[1], grid)


def estimate_r2(spec: SystemSpec, x: PhasePoint, r: float, p: int, ensemble_size: int, rng: RngStream,
                budget: int = 10**6, burn_in: int = DEFAULT_BURN_IN) -> tuple[float, float]:
    """μ({y in B(x, r) : S_2^p(y) >= 1}) and its standard error.

    Computed as μ(B) times the fraction of μ|B samples that come back
    within steps 2..p.  μ(B) is exact when available, else estimated
    from ``rng.child(0)``; ball samples use ``rng.child(1)``.
    """
    check_point(spec, x)
    if p < 2:
        raise ParameterError("p must be >= 2")
    bm = ball_measure(spec, x, r, budget, rng.child(0), burn_in, monte_carlo=False)
    if bm.value <= 0:
        raise Undersampled(f"no sample in B(x, {r})")
    starts = sample_in_ball(spec, x, r, ensemble_size, rng.child(1), horizon=p, burn_in=burn_in)
    checkpoints = np.array([1, p], dtype=np.int64)
    if spec.kind == "doubling":
        _, cum = K.words_cumulative_hits(starts, x.x, r, checkpoints)
    else:
        _, cum = K.cumulative_hits(spec.code, spec.params, starts, to_state(spec, x), r, checkpoints)
    frac = float(((cum[:, 1] - cum[:, 0]) >= 1).mean())
    frac_se = math.sqrt(frac * (1 - frac) / ensemble_size)
    mu = bm.value
    se = math.hypot(mu * frac_se, frac * bm.std_error if bm.exact is None else 0.0)
    return mu * frac, se
