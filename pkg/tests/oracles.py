"""Extended-precision reference implementations used to pin test constants.

These are deliberately naive: direct power-series summation in mpmath at 50
significant digits, with no log-space tricks and no asymptotic branch.
"""
import mpmath as mp

mp.mp.dps = 50


def series_bessel_i(v, kappa, terms=None):
    """``I_v(kappa)`` by summing ``sum_m (kappa/2)^(2m+v) / (m! Gamma(m+v+1))``."""
    v, kappa = mp.mpf(v), mp.mpf(kappa)
    if kappa == 0:
        return mp.mpf(1) if v == 0 else mp.mpf(0)
    half = kappa / 2
    total, m = mp.mpf(0), 0
    while True:
        term = half ** (2 * m + v) / (mp.factorial(m) * mp.gamma(m + v + 1))
        total += term
        m += 1
        if terms is not None:
            if m >= terms:
                return total
        elif m > kappa and term < total * mp.mpf(10) ** (-45):
            return total


def log_bessel_i(v, kappa, terms=None):
    return mp.log(series_bessel_i(v, kappa, terms))


def vmf_kl(d, kappa):
    d, kappa = mp.mpf(d), mp.mpf(kappa)
    nu = d / 2 - 1
    ratio = series_bessel_i(d / 2, kappa) / series_bessel_i(nu, kappa)
    return (kappa * ratio + nu * mp.log(kappa) - (d / 2) * mp.log(2 * mp.pi) - log_bessel_i(nu, kappa)
            + (d / 2) * mp.log(mp.pi) + mp.log(2) - mp.loggamma(d / 2))
