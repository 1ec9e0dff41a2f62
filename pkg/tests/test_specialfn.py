"""Log-space Bessel I, its ratio and derivative, and log-gamma."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vmfvae import specialfn as S
from vmfvae.errors import DomainError

import oracles

# log I_v(kappa) from a 50-digit direct series sum (tests/oracles.py), frozen.
SERIES_ORACLE = [
    (0.0, 1e-3, 2.4999998437500173611e-7),
    (0.5, 1e-3, -3.6796688254691348473),
    (1.0, 1e-3, -7.6009023345420849656),
    (11.5, 1e-3, -106.14472577667039287),
    (24.0, 1e-3, -237.20638841712229587),
    (99.0, 1e-3, -1111.6235488617415526),
    (0.0, 0.1, 0.0024984392338762433813),
    (0.5, 0.1, -1.3754177876781698139),
    (1.0, 0.1, -2.9944825338622049398),
    (11.5, 0.1, -53.185068659288796363),
    (24.0, 0.1, -126.68220396360040978),
    (99.0, 0.1, -655.71167545142360118),
    (0.0, 1.0, 0.23591435850717864869),
    (0.5, 1.0, -0.064351991073531798753),
    (1.0, 1.0, -0.57064798749083128142),
    (11.5, 1.0, -26.68555487601170067),
    (24.0, 1.0, -71.410263653678902402),
    (99.0, 1.0, -427.75327627594956738),
    (0.0, 10.0, 7.9429720831186955545),
    (0.5, 10.0, 7.9297689182371507916),
    (1.0, 10.0, 7.8902038341042122935),
    (11.5, 10.0, 1.648045451792034343),
    (24.0, 10.0, -15.176560036018125158),
    (99.0, 10.0, -199.55016043799546431),
    (0.0, 80.0, 76.891620544785599163),
    (0.5, 80.0, 76.890048149458386452),
    (1.0, 80.0, 76.885331026882449018),
    (11.5, 80.0, 76.061289821911475797),
    (24.0, 80.0, 73.296098143026225278),
    (99.0, 80.0, 21.00470738836725462),
    (0.0, 150.0, 146.57657995035185909),
    (0.5, 150.0, 146.57574381974719938),
    (1.0, 150.0, 146.57323543738112852),
    (11.5, 150.0, 146.13448637655758633),
    (24.0, 150.0, 144.65428022410888364),
    (99.0, 150.0, 114.87111199484930934),
    (0.0, 500.0, 495.97400766810669646),
    (0.5, 500.0, 495.97375741758423139),
    (1.0, 500.0, 495.97300666626834446),
    (11.5, 500.0, 495.84163099490123113),
    (24.0, 500.0, 495.39754159805828427),
    (99.0, 500.0, 486.19502339502821814),
]
# 60-term series at 50 digits, the pinned (v=1, kappa=1) example.
LOG_I1_AT_1 = -0.57064798749083128142


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def log_i_minus_half(kappa):
    """``I_{-1/2}(k) = sqrt(2/(pi k)) cosh k`` (negative order, outside the library domain)."""
    return 0.5 * math.log(2.0 / (math.pi * kappa)) + kappa + math.log1p(math.exp(-2.0 * kappa)) - math.log(2.0)


class TestLogBesselI:
    def test_zero_argument(self):
        assert S.log_bessel_i(0.0, 0.0) == 0.0
        assert S.log_bessel_i(2.0, 0.0) == -math.inf

    def test_pinned_order_one(self):
        assert rel(S.log_bessel_i(1.0, 1.0), LOG_I1_AT_1) <= 1e-12

    def test_frozen_values_match_live_oracle(self):
        for v, k, expected in SERIES_ORACLE[::7]:
            assert rel(float(oracles.log_bessel_i(v, k)), expected) < 1e-15

    @pytest.mark.parametrize("v,kappa,expected", SERIES_ORACLE)
    def test_series_oracle_grid(self, v, kappa, expected):
        assert rel(S.log_bessel_i(v, kappa), expected) <= 1e-8

    @pytest.mark.parametrize("v", [0.5, 1.0, 5.5, 24.0, 99.0])
    @pytest.mark.parametrize("kappa", [0.1, 1.0, 10.0, 100.0, 500.0])
    def test_recurrence(self, v, kappa):
        lo = log_i_minus_half(kappa) if v == 0.5 else S.log_bessel_i(v - 1.0, kappa)
        hi = S.log_bessel_i(v + 1.0, kappa)
        lhs = lo + math.log(-math.expm1(hi - lo))
        rhs = math.log(2.0 * v / kappa) + S.log_bessel_i(v, kappa)
        assert abs(lhs - rhs) <= 1e-8 * max(1.0, abs(rhs))

    @pytest.mark.parametrize("v", [0.0, 0.5, 1.0, 11.5, 24.0, 99.0])
    def test_branch_overlap(self, v):
        for kappa in np.linspace(0.9 * S.SERIES_CUTOFF, 1.1 * S.SERIES_CUTOFF, 9):
            assert rel(S.log_bessel_i_series(v, kappa), S.log_bessel_i_asymptotic(v, kappa)) <= 1e-7

    def test_continuous_across_cutoff(self):
        below = S.log_bessel_i(3.5, np.nextafter(S.SERIES_CUTOFF, 0.0))
        above = S.log_bessel_i(3.5, np.nextafter(S.SERIES_CUTOFF, np.inf))
        assert rel(above, below) < 1e-12

    def test_large_kappa_finite(self):
        assert math.isfinite(S.log_bessel_i(10.0, 1e5))
        assert rel(S.log_bessel_i(0.0, 1e4), 1e4 - 0.5 * math.log(2 * math.pi * 1e4) + math.log1p(1 / 8e4)) < 1e-12

    @pytest.mark.parametrize("v", [0.0, 0.5, 2.0, 11.5, 49.0])
    def test_strictly_increasing_in_kappa(self, v):
        grid = np.concatenate([np.geomspace(1e-3, 1.0, 30), np.linspace(1.5, 1500.0, 200)])
        values = [S.log_bessel_i(v, k) for k in grid]
        assert np.all(np.diff(values) > 0)

    @pytest.mark.parametrize("bad", [(-1.0, 1.0), (1.0, -0.5), (math.nan, 1.0), (1.0, math.nan), (1.0, math.inf)])
    def test_domain_errors(self, bad):
        with pytest.raises(DomainError):
            S.log_bessel_i(*bad)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.0, 150.0), st.floats(1e-3, 2000.0))
    def test_never_nan(self, v, kappa):
        value = S.log_bessel_i(v, kappa)
        assert not math.isnan(value) and value < math.inf


class TestBesselRatio:
    def test_closed_form_d3(self):
        assert S.bessel_ratio(3, 2.0) == pytest.approx(1.0 / math.tanh(2.0) - 0.5, rel=1e-13)
        assert S.bessel_ratio(3, 2.0) == pytest.approx(0.537315, abs=1e-6)

    def test_large_kappa_limit(self):
        assert S.bessel_ratio(3, 500.0) == pytest.approx(1.0 - 2.0 / 1000.0, abs=1e-5)

    def test_monotone_in_kappa_and_d(self):
        kappas = np.geomspace(0.01, 1000.0, 60)
        dims = [2, 3, 5, 10, 25, 50, 100, 200]
        table = np.array([[S.bessel_ratio(d, k) for k in kappas] for d in dims])
        assert np.all(np.diff(table, axis=1) > 0)
        assert np.all(np.diff(table, axis=0) < 0)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(2, 300), st.floats(1e-6, 5000.0))
    def test_open_unit_interval(self, d, kappa):
        assert 0.0 < S.bessel_ratio(d, kappa) < 1.0

    def test_rejects_zero_kappa(self):
        with pytest.raises(DomainError):
            S.bessel_ratio(5, 0.0)
        with pytest.raises(DomainError):
            S.bessel_ratio(1, 1.0)


class TestBesselDerivative:
    def test_at_zero(self):
        assert S.bessel_i_derivative(1.0, 0.0) == 0.5
        assert S.bessel_i_derivative(2.0, 0.0) == 0.0

    def test_finite_difference(self):
        h = 1e-6
        fd = (math.exp(S.log_bessel_i(1.0, 1.0 + h)) - math.exp(S.log_bessel_i(1.0, 1.0 - h))) / (2 * h)
        assert S.bessel_i_derivative(1.0, 1.0) == pytest.approx(fd, rel=1e-5)

    def test_saturates_instead_of_overflowing(self):
        assert S.bessel_i_derivative(5.0, 2000.0) == np.finfo(float).max

    def test_domain(self):
        with pytest.raises(DomainError):
            S.bessel_i_derivative(0.5, 1.0)


class TestLogGamma:
    @pytest.mark.parametrize("x,expected", [(1.0, 0.0), (0.5, 0.5723649429247001), (6.0, math.log(120.0))])
    def test_known_values(self, x, expected):
        assert S.log_gamma(x) == pytest.approx(expected, rel=1e-12, abs=1e-15)

    def test_relative_accuracy_range(self):
        xs = np.concatenate([np.linspace(0.5, 200.0, 4001), np.arange(1, 201) + 0.5])
        errs = []
        for x in xs:
            ref = math.lgamma(x)
            if abs(ref) > 1e-3:
                errs.append(abs(S.log_gamma(x) - ref) / abs(ref))
            else:
                assert abs(S.log_gamma(x) - ref) < 1e-14
        assert max(errs) <= 1e-12

    @pytest.mark.parametrize("x", [0.0, -1.0, math.nan])
    def test_domain(self, x):
        with pytest.raises(DomainError):
            S.log_gamma(x)
