import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import poisson as sp_poisson

from hitpoisson.core import (Billiard, Circle, SystemSpec, TorusDisk, distance, iterate, sample_invariant,
                             sample_words, words_for_bits)
from hitpoisson.errors import InsufficientData, ParameterError, RangeError, Undersampled
from hitpoisson.hitstats import (EmpiricalPMF, Exceeded, corona_ratio, count_visits, ensemble_hits, fit_line,
                                 first_return_time, local_dimension, mean_loglog_slope, mean_return_time,
                                 recurrence_rate, return_time_table, visit_count_distribution)
from hitpoisson.poisson import Poisson, tv_distance
from hitpoisson.rng import RngStream

DOUBLING = SystemSpec.doubling()
STADIUM = SystemSpec.stadium(2.0)
SOLENOID = SystemSpec.solenoid(0.5, 0.2)


def _doubling_orbit_oracle(bits: int, nbits: int, center: Fraction, r: Fraction, q: int) -> list[int]:
    """Visit indicators for l = 1..q from an exact integer orbit."""
    mod = 1 << nbits
    out = []
    for l in range(1, q + 1):
        v = Fraction((bits << l) % mod, mod)
        gap = abs(v - center)
        out.append(int(min(gap, 1 - gap) < r))
    return out


# -- count_visits ----------------------------------------------------------------------

def test_count_visits_period_two():
    assert count_visits(DOUBLING, Circle(1 / 3), 0.01, Circle(1 / 3), 1, 10) == 5


def test_count_visits_empty_and_fixed_point():
    assert count_visits(DOUBLING, Circle(0.9), 0.01, Circle(0.1), 1, 1) == 0
    assert count_visits(DOUBLING, Circle(0.0), 0.1, Circle(0.0), 1, 7) == 7


def test_count_visits_range_error():
    with pytest.raises(RangeError, match="range error"):
        count_visits(DOUBLING, Circle(0.0), 0.1, Circle(0.0), 5, 4)


def test_count_visits_matches_integer_orbit():
    for seed in range(20):
        y = sample_invariant(DOUBLING, RngStream(seed), precision_bits=512)
        bits = int("".join(format(int(w), "064b") for w in y.digits), 2)
        nbits = 64 * len(y.digits)
        got = [count_visits(DOUBLING, Circle(0.3), 0.05, y, l, l) for l in range(1, 201)]
        assert got == _doubling_orbit_oracle(bits, nbits, Fraction(0.3), Fraction(0.05), 200)


def test_count_visits_needs_enough_digits():
    y = sample_invariant(DOUBLING, RngStream(1), precision_bits=256)
    with pytest.raises(ParameterError):
        count_visits(DOUBLING, Circle(0.3), 0.05, y, 1, 10**4)


def test_count_visits_solenoid_matches_iterate():
    x = sample_invariant(SOLENOID, RngStream(4))
    y = sample_invariant(SOLENOID, RngStream(5))
    direct = sum(distance(SOLENOID, iterate(SOLENOID, y, l), x) < 0.3 for l in range(1, 41))
    assert count_visits(SOLENOID, x, 0.3, y, 1, 40) == direct


@given(st.integers(0, 2**20), st.integers(1, 30), st.integers(0, 30), st.integers(0, 30))
def test_count_visits_additive(seed, p, a, b):
    m, q = p + a, p + a + b + 1
    for spec in (DOUBLING, STADIUM):
        x = sample_invariant(spec, RngStream(seed, 0))
        y = sample_invariant(spec, RngStream(seed, 1))
        r = 0.3
        whole = count_visits(spec, x, r, y, p, q)
        assert whole == count_visits(spec, x, r, y, p, m) + count_visits(spec, x, r, y, m + 1, q)


@given(st.integers(0, 2**20), st.integers(1, 40), st.integers(0, 40))
def test_count_visits_whole_space(seed, p, extra):
    q = p + extra
    for spec, r in ((DOUBLING, 0.51), (SOLENOID, 2.5), (STADIUM, 11.0)):
        x = sample_invariant(spec, RngStream(seed, 0), burn_in=5)
        y = sample_invariant(spec, RngStream(seed, 1), burn_in=5)
        assert count_visits(spec, x, r, y, p, q) == q - p + 1


def test_ensemble_hits_matches_per_member_counts():
    x = sample_invariant(STADIUM, RngStream(2))
    hit0, counts = ensemble_hits(STADIUM, x, 0.3, [5, 50], 40, RngStream(3))
    for i in range(40):
        y = sample_invariant(STADIUM, RngStream(3).child(i))
        assert counts[i, 0] == count_visits(STADIUM, x, 0.3, y, 1, 5)
        assert counts[i, 1] == count_visits(STADIUM, x, 0.3, y, 1, 50)
        assert hit0[i] == (distance(STADIUM, x, y) < 0.3)


def test_ensemble_hits_doubling_matches_words():
    x = Circle(0.7)
    _, counts = ensemble_hits(DOUBLING, x, 0.02, [300], 25, RngStream(4))
    words = sample_words(RngStream(4), 25, words_for_bits(364))
    for i in range(25):
        assert counts[i, 0] == count_visits(DOUBLING, x, 0.02, Circle.from_digits(words[i]), 1, 300)


# -- EmpiricalPMF --------------------------------------------------------------------

@given(st.lists(st.integers(0, 50), min_size=1, max_size=200))
def test_pmf_frequencies_sum_to_one_exactly(values):
    pmf = EmpiricalPMF.from_values(values)
    assert sum(pmf.frequency(k) for k in pmf.counts) == Fraction(1)
    assert sum(pmf.counts.values()) == pmf.total == len(values)
    assert all(0 <= pmf.frequency(k) <= 1 for k in pmf.counts)


def test_pmf_rejects_inconsistent_total():
    with pytest.raises(ValueError):
        EmpiricalPMF({0: 3}, 4)


# -- visit-count distribution -----------------------------------------------------------

def test_visit_distribution_doubling_pilot():
    x = sample_invariant(DOUBLING, RngStream(42, 0))
    pmf = visit_count_distribution(DOUBLING, x, 2.0**-12, 1.0, 20000, RngStream(42, 100))
    assert tv_distance(pmf, Poisson(1.0)) <= 0.05


def test_visit_distribution_empty_horizon():
    x = sample_invariant(DOUBLING, RngStream(1))
    pmf = visit_count_distribution(DOUBLING, x, 0.01, 1e-6, 100, RngStream(2))
    assert pmf.counts == {0: 100}


def _compound_poisson_fixed_point(kmax=80):
    """Limit law at a fixed point with derivative 2: Poisson(1/2) clusters of geometric(1/2) size."""
    geo = np.array([0.0] + [0.5**j for j in range(1, kmax)])
    out = np.zeros(kmax)
    term = np.zeros(kmax)
    term[0] = 1.0
    for c in range(60):
        out += math.exp(-0.5) * 0.5**c / math.factorial(c) * term
        term = np.convolve(term, geo)[:kmax]
    return out


def _integer_orbit_negative_control(n_samples, r, n, seed):
    """Visit-count law at x = 0 from exact integer orbits, independent of the package kernels."""
    gen = np.random.default_rng(seed)
    nbits = n + 80
    mod = 1 << nbits
    lo = int(r * mod)
    counts = np.zeros(n + 1, dtype=int)
    for _ in range(n_samples):
        y = int.from_bytes(gen.bytes(nbits // 8 + 1), "big") % mod
        c = 0
        for l in range(1, n + 1):
            v = (y << l) % mod
            c += v < lo or v > mod - lo
        counts[c] += 1
    return counts / n_samples


def test_negative_control_matches_integer_oracle():
    pmf = visit_count_distribution(DOUBLING, Circle(0.0), 0.01, 1.0, 20000, RngStream(3))
    oracle = _integer_orbit_negative_control(20000, 0.01, 50, seed=1)
    for k in range(6):
        se = math.sqrt(oracle[k] * (1 - oracle[k]) / 20000)
        assert abs(pmf.pmf(k) - oracle[k]) <= 5 * math.sqrt(2) * se
    assert tv_distance(pmf, Poisson(1.0)) >= 0.25


def test_negative_control_limit_law():
    limit = _compound_poisson_fixed_point()
    assert 0.5 * np.abs(limit - sp_poisson.pmf(np.arange(limit.size), 1.0)).sum() == pytest.approx(0.3083, abs=1e-4)
    pmf = visit_count_distribution(DOUBLING, Circle(0.0), 1e-4, 1.0, 40000, RngStream(3))
    emp = np.array([pmf.pmf(k) for k in range(limit.size)])
    assert 0.5 * np.abs(emp - limit).sum() <= 0.02
    assert tv_distance(pmf, Poisson(1.0)) == pytest.approx(0.3083, abs=0.02)


@pytest.mark.xfail(strict=True, reason="at r=0.01 (N=50) the exact law sits at d_TV about 0.28; "
                                       "0.3 is only reached as r shrinks, see the integer-orbit oracle test")
def test_negative_control_literal():
    pmf = visit_count_distribution(DOUBLING, Circle(0.0), 0.01, 1.0, 20000, RngStream(3))
    assert tv_distance(pmf, Poisson(1.0)) >= 0.3


def test_visit_distribution_reproducible():
    x = sample_invariant(STADIUM, RngStream(1))
    a = visit_count_distribution(STADIUM, x, 0.2, 1.0, 300, RngStream(2))
    b = visit_count_distribution(STADIUM, x, 0.2, 1.0, 300, RngStream(2))
    assert a == b


# -- return times ----------------------------------------------------------------------

def test_first_return_examples():
    assert first_return_time(DOUBLING, Circle(0.0), 0.01, 10) == 1
    assert first_return_time(DOUBLING, Circle(1 / 3), 0.1, 10) == 2
    assert first_return_time(DOUBLING, Circle(1 / 3), 0.4, 10) == 1


def test_first_return_exceeded():
    assert first_return_time(DOUBLING, Circle(0.3), 1e-9, 5) == Exceeded(5)


def test_return_times_match_integer_orbit():
    for seed in range(10):
        y = sample_invariant(DOUBLING, RngStream(seed), precision_bits=4096)
        nbits = 64 * len(y.digits)
        bits = int("".join(format(int(w), "064b") for w in y.digits), 2)
        center = Fraction(y.x)
        for r in (0.05, 0.01, 0.002):
            expect = None
            for n in range(1, 3000):
                v = Fraction((bits << n) % (1 << nbits), 1 << nbits)
                gap = abs(v - center)
                if min(gap, 1 - gap) < r:
                    expect = n
                    break
            got = first_return_time(DOUBLING, y, r, 3000)
            assert got == (expect if expect is not None else Exceeded(3000))


@given(st.integers(0, 2**20))
def test_return_time_monotone(seed):
    for spec in (DOUBLING, STADIUM):
        x = sample_invariant(spec, RngStream(seed), precision_bits=10**5 + 128)
        radii = [0.3, 0.1, 0.03, 0.01]
        taus = return_time_table(spec, x, radii, 10**5)
        finite = [t for t in taus if not isinstance(t, Exceeded)]
        assert finite == sorted(finite)
        for r, t in zip(radii, taus):
            assert t == first_return_time(spec, x, r, 10**5)


def test_return_time_needs_enough_digits():
    x = sample_invariant(DOUBLING, RngStream(1))
    with pytest.raises(ParameterError):
        first_return_time(DOUBLING, x, 1e-3, 10**6)


def test_recurrence_periodic_point_degenerate():
    est = recurrence_rate(DOUBLING, Circle(1 / 3), [2.0**-k for k in range(4, 12)], 100)
    assert abs(est.slope) < 1e-12
    assert est.low_r2


def test_recurrence_rejects_fixed_point():
    with pytest.raises(ParameterError):
        recurrence_rate(DOUBLING, Circle(0.0), [0.1, 0.01, 0.001], 100)


def test_recurrence_insufficient():
    x = sample_invariant(DOUBLING, RngStream(2), precision_bits=256)
    with pytest.raises(InsufficientData, match="insufficient data"):
        recurrence_rate(DOUBLING, x, [0.1, 1e-6, 1e-7, 1e-8], 100)


def test_recurrence_drops_exceeded():
    x = sample_invariant(DOUBLING, RngStream(2), precision_bits=1024)
    est = recurrence_rate(DOUBLING, x, [0.25, 0.1, 0.05, 0.02, 1e-12], 500)
    assert est.dropped == [1e-12]
    assert len(est.points) == 4


def _center_averaged_slope(spec, radii, n_centers, seed, cap):
    fits = []
    for i in range(n_centers):
        x = sample_invariant(spec, RngStream(seed).child(i), precision_bits=cap + 128)
        fits.append(recurrence_rate(spec, x, radii, cap))
    return mean_loglog_slope(fits)


def test_recurrence_doubling_slope():
    est = _center_averaged_slope(DOUBLING, [2.0**-k for k in range(4, 15)], 32, 21, 10**6)
    assert 0.85 <= est.slope <= 1.15


def test_recurrence_stadium_slope():
    est = _center_averaged_slope(STADIUM, [2.0**-k for k in range(3, 10)], 32, 22, 10**7)
    assert 1.6 <= est.slope <= 2.4


def test_slope_recomputable_from_points():
    est = fit_line([1, 2, 3, 4], [2.0, 4.1, 5.9, 8.2])
    xs, ys = zip(*est.points)
    assert est.slope == pytest.approx(np.polyfit(xs, ys, 1)[0], rel=1e-12)
    assert 0 <= est.r2 <= 1


# -- dimension, coronas, Kac --------------------------------------------------------------

def test_local_dimension_doubling_exact():
    est = local_dimension(DOUBLING, Circle(0.4), [2.0**-k for k in range(2, 11)], 10**4, RngStream(0))
    assert est.slope == pytest.approx(1.0, abs=1e-9)


@given(st.floats(0.0, 1.0, exclude_max=True), st.integers(4, 12))
def test_local_dimension_doubling_exact_property(x, kmax):
    est = local_dimension(DOUBLING, Circle(x), [2.0**-k for k in range(2, kmax + 1)], 10**4, RngStream(0))
    assert abs(est.slope - 1.0) <= 1e-9


def test_local_dimension_stadium():
    x = sample_invariant(STADIUM, RngStream(31))
    radii = [2.0**-k for k in range(2, 8)]
    est = local_dimension(STADIUM, x, radii, 10**6, RngStream(32), exact=False)
    assert 1.8 <= est.slope <= 2.2


def test_local_dimension_solenoid_range():
    x = sample_invariant(SOLENOID, RngStream(33))
    est = local_dimension(SOLENOID, x, [2.0**-k for k in range(2, 8)], 10**6, RngStream(34))
    assert 1.0 < est.slope < 2.0


def test_corona_ratio_doubling_exact():
    assert corona_ratio(DOUBLING, Circle(0.2), 2.0**-8, 1.5, 1000, RngStream(0)) == pytest.approx(0.0625)


def _stadium_box_mass(x, r):
    from scipy import integrate
    lo, hi = max(x.phi - r, -math.pi / 2), min(x.phi + r, math.pi / 2)
    return 2 * r * integrate.quad(math.cos, lo, hi)[0] / (4 * (math.pi + 2))


def test_corona_ratio_stadium_matches_quadrature():
    x = sample_invariant(STADIUM, RngStream(35))
    r, outer = 0.05, 0.05 + 0.05**1.5
    inner_m = _stadium_box_mass(x, r)
    oracle = (_stadium_box_mass(x, outer) - inner_m) / inner_m
    # a two-dimensional box: the ratio is close to (1 + r^(delta-1))^2 - 1, not r^(delta-1)
    assert oracle == pytest.approx((1 + 0.05**0.5) ** 2 - 1, rel=0.01)
    est = corona_ratio(STADIUM, x, r, 1.5, 10**7, RngStream(36), exact=False)
    n_inner = 10**7 * inner_m
    assert abs(est - oracle) <= 4 * math.sqrt(oracle * (1 + oracle) / n_inner)
    assert corona_ratio(STADIUM, x, r, 1.5, 10**7, RngStream(36)) == pytest.approx(oracle, rel=1e-12)


@pytest.mark.xfail(strict=True, reason="the box ball is two-dimensional, so the ratio is about "
                                       "2 r^(delta-1) = 0.45 at r = 0.05, above 0.15")
def test_corona_ratio_stadium_literal():
    x = sample_invariant(STADIUM, RngStream(35))
    assert corona_ratio(STADIUM, x, 0.05, 1.5, 10**7, RngStream(36), exact=False) <= 0.15


def test_corona_ratio_rejects_delta_one():
    with pytest.raises(ParameterError):
        corona_ratio(DOUBLING, Circle(0.2), 0.1, 1.0, 1000, RngStream(0))


def test_kac_doubling_dyadic():
    k = 6
    mr = mean_return_time(DOUBLING, Circle(2.0 ** (-k - 1)), 2.0 ** (-k - 1), 10000, 4096, RngStream(40))
    assert 0.9 <= mr.mean * 2.0**-k <= 1.1
    assert mr.exceeded == 0


def test_kac_stadium():
    from hitpoisson.measure import exact_ball_measure
    x = sample_invariant(STADIUM, RngStream(41))
    mr = mean_return_time(STADIUM, x, 0.05, 10000, 10**7, RngStream(42))
    assert 0.8 <= mr.mean * exact_ball_measure(STADIUM, x, 0.05) <= 1.2


def test_kac_empty_ensemble():
    with pytest.raises(Undersampled, match="undersampled"):
        mean_return_time(DOUBLING, Circle(0.1), 0.1, 0, 10, RngStream(0))
