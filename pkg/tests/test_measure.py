import math

import numpy as np
import pytest
from scipy import integrate

from hitpoisson.core import Billiard, Circle, SystemSpec, TorusDisk, distance, sample_invariant, sample_states
from hitpoisson.errors import ParameterError, Undersampled
from hitpoisson.hitstats import estimate_ball_measure
from hitpoisson.measure import DistanceSample, exact_ball_measure, sample_in_ball
from hitpoisson.rng import RngStream

DOUBLING = SystemSpec.doubling()
STADIUM = SystemSpec.stadium(2.0)
SOLENOID = SystemSpec.solenoid(0.5, 0.2)


def _stadium_box_oracle(x, r, ell=2.0):
    """Integrate the density cos(phi)/(4(pi+ell)) over the max-metric box numerically."""
    per = 2 * (math.pi + ell)
    lo, hi = max(x.phi - r, -math.pi / 2), min(x.phi + r, math.pi / 2)
    phi_mass, _ = integrate.quad(math.cos, lo, hi)
    return min(2 * r, per) * phi_mass / (4 * (math.pi + ell))


def test_doubling_exact_measure():
    bm = estimate_ball_measure(DOUBLING, Circle(0.3), 0.05, 1000, RngStream(0))
    assert bm.exact == pytest.approx(0.1)
    assert abs(bm.estimate - 0.1) <= 4 * bm.std_error + 1e-12


@pytest.mark.parametrize("center", [Billiard(math.pi + 1, 0.0), Billiard(3.0, 1.5), Billiard(0.1, -1.2)])
@pytest.mark.parametrize("r", [0.01, 0.1, 0.5])
def test_stadium_exact_measure_matches_quadrature(center, r):
    assert exact_ball_measure(STADIUM, center, r) == pytest.approx(_stadium_box_oracle(center, r), rel=1e-12)


def test_stadium_monte_carlo_example():
    x = Billiard(math.pi + 1, 0.0)
    analytic = 0.2 * 2 * math.sin(0.1) / (4 * (math.pi + 2))
    assert analytic == pytest.approx(0.0019417, abs=1e-7)
    bm = estimate_ball_measure(STADIUM, x, 0.1, 10**6, RngStream(11))
    assert abs(bm.estimate - analytic) <= 4 * bm.std_error


def test_solenoid_zero_hits_warning():
    x = sample_invariant(SOLENOID, RngStream(1))
    bm = estimate_ball_measure(SOLENOID, x, 1e-9, 10**4, RngStream(2))
    assert bm.estimate == 0.0 and bm.hits == 0
    assert bm.warning == "zero hits"


def test_budget_floor():
    with pytest.raises(ParameterError):
        estimate_ball_measure(DOUBLING, Circle(0.1), 0.1, 999, RngStream(0))


def test_solenoid_monte_carlo_consistent_with_fresh_samples():
    x = sample_invariant(SOLENOID, RngStream(3))
    bm = estimate_ball_measure(SOLENOID, x, 0.1, 2 * 10**5, RngStream(4))
    # independent check: fresh burned-in samples counted directly
    states = sample_states(SOLENOID, RngStream(5), 20000)
    pts = [TorusDisk(*s) for s in states]
    freq = np.mean([distance(SOLENOID, p, x) < 0.1 for p in pts])
    se = math.sqrt(freq * (1 - freq) / len(pts))
    assert abs(freq - bm.estimate) <= 4 * math.hypot(se, bm.std_error)


def test_distance_sample_queries_agree_with_direct_counts():
    x = Billiard(2.0, 0.3)
    sample = DistanceSample(STADIUM, x, 70000, RngStream(8), 0.4)
    est, se = sample.mass(0.1, 0.3)
    assert est == pytest.approx(sample.count(0.1, 0.3) / sample.size)
    assert sample.count(0.0, 0.4) == sample.count(0.0, 0.1) + sample.count(0.1, 0.4)
    exact = exact_ball_measure(STADIUM, x, 0.3) - exact_ball_measure(STADIUM, x, 0.1)
    assert abs(est - exact) <= 4 * se
    with pytest.raises(ValueError):
        sample.mass(0.0, 0.5)


def test_sample_in_ball_doubling_uniform():
    from scipy.stats import kstest
    x, r = 0.3, 0.01
    rows = sample_in_ball(DOUBLING, Circle(x), r, 4000, RngStream(6), horizon=10)
    vals = np.array([Circle.from_digits(w).x for w in rows])
    assert np.all(np.abs(vals - x) < r)
    assert kstest((vals - (x - r)) / (2 * r), "uniform").pvalue > 1e-3


def test_sample_in_ball_doubling_wraps():
    rows = sample_in_ball(DOUBLING, Circle(0.0), 0.01, 500, RngStream(6), horizon=10)
    vals = np.array([Circle.from_digits(w).x for w in rows])
    assert np.all(np.minimum(vals, 1 - vals) < 0.01)
    assert 0.35 < np.mean(vals < 0.5) < 0.65


def test_sample_in_ball_doubling_bits_unbiased():
    # the digits just past the float resolution of the ball center must stay fair coins
    rows = sample_in_ball(DOUBLING, Circle(2**-7), 2**-7, 20000, RngStream(7), horizon=64)
    bits = np.array([[(int(w[0]) >> (63 - k)) & 1 for k in range(40, 64)] for w in rows])
    assert np.all(np.abs(bits.mean(axis=0) - 0.5) < 4 * 0.5 / math.sqrt(len(rows)))


def test_sample_in_ball_stadium_density():
    x, r = Billiard(4.0, 0.5), 0.2
    s = sample_in_ball(STADIUM, x, r, 20000, RngStream(9))
    assert np.all(np.abs(s[:, 0] - 4.0) < r) and np.all(np.abs(s[:, 1] - 0.5) < r)
    # conditional law of sin(phi) is uniform on the box
    lo, hi = math.sin(0.3), math.sin(0.7)
    u = (np.sin(s[:, 1]) - lo) / (hi - lo)
    assert abs(u.mean() - 0.5) < 4 * math.sqrt(1 / 12 / len(u))


def test_sample_in_ball_solenoid_inside():
    x = sample_invariant(SOLENOID, RngStream(12))
    s = sample_in_ball(SOLENOID, x, 0.1, 300, RngStream(13))
    assert len(s) == 300
    assert max(distance(SOLENOID, TorusDisk(*row), x) for row in s) < 0.1


def test_sample_in_ball_empty():
    with pytest.raises(Undersampled):
        sample_in_ball(DOUBLING, Circle(0.1), 0.1, 0, RngStream(0))


def test_sample_in_ball_memory_guard():
    with pytest.raises(ParameterError):
        sample_in_ball(DOUBLING, Circle(0.1), 0.1, 10**5, RngStream(0), horizon=10**6)
