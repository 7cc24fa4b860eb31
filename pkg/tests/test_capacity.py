import math

import numpy as np
import pytest
from scipy import integrate

from cswm.capacity import (
    CSV_COLUMNS, capacity_model, capacity_rows, carrier_count, compression_rate,
    eligibility_probability, empirical_capacity, estimate_sigma, monte_carlo_capacity,
    q_approximation_valid, relative_capacity, remaining_measurements, t_max,
)
from cswm.keystream import KeySpec
from cswm.rdh import EmbedParams, embed_stream
from cswm.sensing import OperatorDescriptor, build_operator, project

KEY = KeySpec(b"capacity-test-key-0")


def gaussian_mass(T, sigma):
    pdf = lambda t: math.exp(-t * t / (2 * sigma * sigma)) / (sigma * math.sqrt(2 * math.pi))
    return integrate.quad(pdf, -T, T, epsabs=1e-13)[0]


def test_eligibility_probability():
    assert eligibility_probability(1.0, 1.0) == pytest.approx(0.6827, abs=1e-4)
    assert eligibility_probability(10.0, 1.0) == pytest.approx(1.0, abs=1e-7)
    assert eligibility_probability(2.0, 1.0) == pytest.approx(0.9545, abs=1e-4)
    assert eligibility_probability(None, 3.0) == 1.0
    assert eligibility_probability(0, 3.0) == 0.0
    for T, sigma in [(1, 1), (2, 1), (3, 7.5), (40, 100), (0.3, 2)]:
        assert eligibility_probability(T, sigma) == pytest.approx(gaussian_mass(T, sigma), abs=1e-9)
    with pytest.raises(ValueError):
        eligibility_probability(1, 0)
    with pytest.raises(ValueError):
        eligibility_probability(-1, 1)


def test_carrier_count():
    assert carrier_count(1000, 1, 10) == pytest.approx(615.38, abs=0.01)
    assert carrier_count(1000, 1, 16) == 500
    assert carrier_count(1000, 0, 10) == 0


def test_relative_capacity():
    assert relative_capacity(1, 1) == pytest.approx(0.941, abs=1e-3)
    assert relative_capacity(1, 14) == pytest.approx(7.467, abs=1e-3)
    assert relative_capacity(1, 10) == pytest.approx(6.154, abs=1e-3)
    with pytest.raises(ValueError):
        relative_capacity(1, 0)


def test_t_max_values():
    assert t_max(13) == 3
    assert t_max(1) == 32766
    assert t_max(16) == 0


@pytest.mark.parametrize("n", range(1, 17))
def test_t_max_is_largest_safe_threshold(n):
    bn_max = 2**n - 1
    T = t_max(n)
    safe = lambda t: 2**15 + bn_max * t + bn_max <= 2**16 - 1
    if n < 16:
        assert safe(T) and not safe(T + 1)
    else:
        assert T == 0


def test_remaining_measurements():
    S = 65536
    R = remaining_measurements(26214, relative_capacity(1, 10))
    assert R == pytest.approx(16132, abs=1)
    assert R / S == pytest.approx(0.246, abs=1e-3)
    assert R / S < 0.25
    assert remaining_measurements(1000, 0) == 1000
    R = remaining_measurements(11796, relative_capacity(1, 10))
    assert R / S == pytest.approx(0.111, abs=1e-3)
    assert R / S < 0.125
    with pytest.raises(ValueError):
        remaining_measurements(10, 17)


def test_compression_rate():
    assert compression_rate(10) == pytest.approx(1.2308, abs=1e-4)
    assert compression_rate(7) == pytest.approx(1.3913, abs=1e-4)
    assert compression_rate(14) == pytest.approx(1.0667, abs=1e-4)
    assert compression_rate(16) == 1.0
    assert all(compression_rate(n) > 1 for n in range(1, 16))


def test_monotonicity_and_consistency():
    crs = [relative_capacity(0.8, n) for n in range(1, 17)]
    assert all(a < b for a, b in zip(crs, crs[1:]))
    ps = [eligibility_probability(T, 5.0) for T in range(0, 30)]
    assert all(a < b for a, b in zip(ps, ps[1:]))
    for n in (1, 7, 12):
        m = capacity_model(26214, n, 50, 40.0)
        assert m.C == pytest.approx(m.x * n)
        assert m.R_p == pytest.approx(m.L - m.x * n / 16)
        assert m.q == pytest.approx(m.P**2)
        assert m.x_floor == math.floor(m.x)


def test_capacity_model_requires_sigma():
    with pytest.raises(ValueError):
        capacity_model(100, 7, 5)
    assert capacity_model(100, 7).P == 1.0


def test_q_validity_flag():
    assert [q_approximation_valid(n) for n in (7, 8, 16)] == [False, True, True]


def test_estimate_sigma():
    assert estimate_sigma([1, 2, 3, 4]) == pytest.approx(np.std([1, 2, 3, 4], ddof=1))


def test_empirical_capacity_counts():
    y = np.arange(-500, 500)
    m = embed_stream(y, EmbedParams(16, None), KEY)
    x, C_r, R_p, r = empirical_capacity(m)
    assert x == 500 and R_p == 500 and C_r == 8.0 and r == 1.0


def test_monte_carlo_loose_n16_exact():
    image = np.random.default_rng(0).random(4096)
    mc = monte_carlo_capacity(OperatorDescriptor(0, 4096, 1000, 3), image, EmbedParams(16, None), 3,
                              key=KEY)
    assert mc.x == 500 and mc.x_se == 0


def test_monte_carlo_loose_n10():
    image = np.random.default_rng(1).random(16384)
    mc = monte_carlo_capacity(OperatorDescriptor(0, 16384, 10000, 11), image,
                              EmbedParams(10, None), 3, key=KEY)
    assert abs(mc.C_r - relative_capacity(1, 10)) / relative_capacity(1, 10) < 0.01


def test_monte_carlo_two_sigma():
    image = np.random.default_rng(2).random(16384)
    op = build_operator(0, 16384, 10000, 21)
    sigma = estimate_sigma(project(op, image).values)
    T = int(round(2 * sigma))
    mc = monte_carlo_capacity(op.descriptor, image, EmbedParams(10, T), 5, key=KEY)
    predicted = carrier_count(10000, eligibility_probability(T, sigma), 10)
    assert abs(mc.x - predicted) / predicted < 0.05


def test_monte_carlo_needs_trials():
    with pytest.raises(ValueError):
        monte_carlo_capacity(OperatorDescriptor(0, 16, 4, 0), np.zeros(16), EmbedParams(7), 0)


def test_capacity_rows():
    rows = capacity_rows(26214, range(1, 15))
    assert [r["n"] for r in rows] == list(range(1, 15))
    assert set(rows[0]) == set(CSV_COLUMNS)
    assert rows[0]["C_r"] == pytest.approx(0.941, abs=1e-3)
    assert rows[-1]["C_r"] == pytest.approx(7.467, abs=1e-3)
    assert rows[0]["T"] == "loose"
    rp = [r["R_p"] for r in rows]
    assert all(a > b for a, b in zip(rp, rp[1:]))
    tight = capacity_rows(26214, [13], "tmax", 2000.0)
    assert tight[0]["T"] == 3
