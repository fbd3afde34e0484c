import math

import mpmath as mp
import numpy as np
import pytest
from scipy.special import gammainc

from rpoutlier.special import Q3, chi2_quantile, gammln, gammp, gammq, std_normal_quantile

mp.mp.dps = 40


def _normal_quantile_oracle(p: float) -> float:
    return float(mp.sqrt(2) * mp.erfinv(2 * mp.mpf(p) - 1))


def test_quantile_at_zero_probability():
    assert chi2_quantile(0.0, 7) == 0.0


def test_exponential_median():
    # chi-squared with 2 dof is exponential with mean 2
    assert chi2_quantile(0.5, 2) == pytest.approx(2.0 * math.log(2.0), abs=1e-9)


def test_one_dof_is_squared_normal_quantile():
    oracle = _normal_quantile_oracle(0.975) ** 2
    assert chi2_quantile(0.95, 1) == pytest.approx(oracle, abs=1e-7)
    assert chi2_quantile(0.95, 1) == pytest.approx(3.841459, abs=1e-6)


@pytest.mark.parametrize("p", [-0.1, 1.0, 1.5])
def test_probability_domain(p):
    with pytest.raises(ValueError):
        chi2_quantile(p, 3)


def test_dof_domain():
    with pytest.raises(ValueError):
        chi2_quantile(0.5, 0)


def test_quantile_monotone_in_p_and_d():
    ps = np.linspace(0.01, 0.99, 21)
    for d in (1, 2, 5, 40):
        qs = [chi2_quantile(float(p), d) for p in ps]
        assert all(x < y for x, y in zip(qs, qs[1:]))
    for p in (0.1, 0.5, 0.95):
        qs = [chi2_quantile(p, d) for d in range(1, 40)]
        assert all(x < y for x, y in zip(qs, qs[1:]))


def test_gammp_matches_scipy():
    worst = 0.0
    for d in (1, 2, 7, 31, 100, 999):
        a = d / 2
        for x in np.linspace(0.01, 3 * d, 40):
            worst = max(worst, abs(gammp(a, x / 2) - gammainc(a, x / 2)))
    assert worst < 1e-11


def test_gammp_gammq_complementary():
    for a in (0.5, 3.0, 25.0):
        for x in (0.1, 1.0, 10.0, 80.0):
            assert gammp(a, x) + gammq(a, x) == pytest.approx(1.0, abs=1e-13)


def test_inversion_property_grid():
    worst = 0.0
    for d in (1, 2, 3, 5, 10, 50, 200, 1000):
        for p in np.linspace(0.001, 0.9995, 25):
            q = chi2_quantile(float(p), d)
            worst = max(worst, abs(gammp(d / 2, q / 2) - p))
    assert worst < 1e-9


def test_gammln_against_mpmath():
    for x in (0.1, 0.5, 1.0, 2.5, 10.0, 250.5):
        assert gammln(x) == pytest.approx(float(mp.loggamma(x)), rel=1e-12)


def test_q3_constant():
    assert Q3 == pytest.approx(_normal_quantile_oracle(0.75), abs=1e-12)


def test_std_normal_quantile_symmetry():
    assert std_normal_quantile(0.5) == 0.0
    for p in (0.6, 0.9, 0.975):
        assert std_normal_quantile(p) == pytest.approx(-std_normal_quantile(1 - p), abs=1e-12)
        assert std_normal_quantile(p) == pytest.approx(_normal_quantile_oracle(p), abs=1e-9)
