"""Modified Bessel function of the first kind and log-gamma, in log space.

Every vMF quantity reduces to ``log I_v(kappa)`` at a (possibly half-integer)
order ``v = d/2 - 1``. ``I_v(500)`` is about ``1e215`` and ``I_v(800)``
overflows a double, so values are produced and combined as logarithms; only
ratios and derivatives are exponentiated.

For ``kappa <= 600`` the power series

    I_v(x) = sum_m (x/2)^(2m+v) / (m! Gamma(m+v+1))

is summed in scaled form until a term drops 36 log-units below the largest
term; above that the uniform (Debye) asymptotic expansion is used.
"""
import math
import sys

from . import _backend
from .errors import DomainError

SERIES_CUTOFF = 600.0
_MAX_LOG = math.log(sys.float_info.max)


def _check_real(name, value, allow_zero=True):
    value = float(value)
    if math.isnan(value):
        raise DomainError(f"{name} is NaN")
    if math.isinf(value):
        raise DomainError(f"{name} must be finite, got {value}")
    if value < 0.0 or (value == 0.0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise DomainError(f"{name} must be {bound}, got {value}")
    return value


def _check_dim(d):
    if isinstance(d, bool) or int(d) != d or d < 2:
        raise DomainError(f"dimension must be an integer >= 2, got {d!r}")
    return int(d)


def _logaddexp(a, b):
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    hi, lo = (a, b) if a >= b else (b, a)
    return hi + math.log1p(math.exp(lo - hi))


def log_gamma(x):
    """``log Gamma(x)`` for ``x > 0`` (13-term Lanczos approximation)."""
    x = _check_real("x", x, allow_zero=False)
    return _backend.kernels.log_gamma(x)


def log_bessel_i(v, kappa):
    """``log I_v(kappa)``; ``-inf`` encodes ``I_v(0) = 0`` for ``v > 0``."""
    v = _check_real("order v", v)
    kappa = _check_real("kappa", kappa)
    return _backend.kernels.log_bessel_i(v, kappa)


def log_bessel_i_series(v, kappa):
    """Series branch only (exposed for branch-agreement checks)."""
    v = _check_real("order v", v)
    kappa = _check_real("kappa", kappa)
    return _backend.kernels.log_bessel_i_series(v, kappa)


def log_bessel_i_asymptotic(v, kappa):
    """Asymptotic branch only; accurate for ``kappa`` in the hundreds and up."""
    v = _check_real("order v", v)
    kappa = _check_real("kappa", kappa, allow_zero=False)
    return _backend.kernels.log_bessel_i_asymptotic(v, kappa)


def log_bessel_series_scaled(v, kappa):
    """``log(I_v(kappa) * Gamma(v+1) * (2/kappa)^v)``, the normalised series.

    Equals 0 at ``kappa = 0`` and grows like ``kappa^2 / (4(v+1))`` near it,
    which lets small-``kappa`` callers avoid cancelling large logarithms.
    Only meaningful on the series branch (``kappa <= 600``).
    """
    v = _check_real("order v", v)
    kappa = _check_real("kappa", kappa)
    if kappa == 0.0:
        return 0.0
    return _backend.kernels.log_series_scaled(v, kappa)


def bessel_ratio(d, kappa):
    """Mean resultant length ``A_d(kappa) = I_{d/2}(kappa) / I_{d/2-1}(kappa)``.

    This is ``E[mu^T z]`` under ``vMF_d(mu, kappa)`` and lies in (0, 1).
    """
    d = _check_dim(d)
    kappa = _check_real("kappa", kappa, allow_zero=False)
    k = _backend.kernels
    nu = 0.5 * d - 1.0
    return math.exp(k.log_bessel_i(nu + 1.0, kappa) - k.log_bessel_i(nu, kappa))


def log_bessel_i_derivative(v, kappa):
    """``log(d/dkappa I_v(kappa))`` via ``(I_{v-1} + I_{v+1}) / 2``; needs ``v >= 1``."""
    v = _check_real("order v", v)
    if v < 1.0:
        raise DomainError(f"derivative identity needs order >= 1, got {v}")
    kappa = _check_real("kappa", kappa)
    k = _backend.kernels
    return _logaddexp(k.log_bessel_i(v - 1.0, kappa), k.log_bessel_i(v + 1.0, kappa)) - math.log(2.0)


def bessel_i_derivative(v, kappa):
    """``d/dkappa I_v(kappa)``, saturating at the largest finite double."""
    log_value = log_bessel_i_derivative(v, kappa)
    if log_value >= _MAX_LOG:
        return sys.float_info.max
    return math.exp(log_value)
