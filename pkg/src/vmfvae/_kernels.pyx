# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled scalar kernels; operation-for-operation mirror of ``_kernels_py``."""
import numpy as np

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport cos, exp, log, log1p, pow, sqrt, INFINITY, NAN
from libc.stdint cimport int64_t
from numpy.random cimport bitgen_t

cdef double SERIES_CUTOFF = 600.0
cdef double RESCALE_AT = 1e280
cdef double LANCZOS_G = 6.024680040776729583740234375
cdef double PI = 3.141592653589793

cdef double DROP_FACTOR = exp(-36.0)

cdef double[13] LANCZOS_NUM = [
    0.006061842346248906525783753964555936883222,
    0.5098416655656676188125178644804694509993,
    19.51992788247617482847860966235652136208,
    449.9445569063168119446858607650988409623,
    6955.999602515376140356310115515198987526,
    75999.29304014542649875303443598909137092,
    601859.6171681098786670226533699352302507,
    3481712.15498064590882071018964774556468,
    14605578.08768506808414169982791359218571,
    43338889.32467613834773723740590533316085,
    86363131.28813859145546927288977868422342,
    103794043.1163445451906271053616070238554,
    56906521.91347156388090791033559122686859,
]
cdef double[13] LANCZOS_DEN = [
    1.0, 66.0, 1925.0, 32670.0, 357423.0, 2637558.0, 13339535.0,
    45995730.0, 105258076.0, 150917976.0, 120543840.0, 39916800.0, 0.0,
]


cdef double _lanczos_sum(double x) noexcept nogil:
    cdef double num = 0.0, den = 0.0, y
    cdef int i
    if x <= 1.0:
        for i in range(13):
            num = num * x + LANCZOS_NUM[i]
            den = den * x + LANCZOS_DEN[i]
    else:
        y = 1.0 / x
        for i in range(12, -1, -1):
            num = num * y + LANCZOS_NUM[i]
            den = den * y + LANCZOS_DEN[i]
    return num / den


cdef double _log_gamma(double x) noexcept nogil:
    if x == 1.0 or x == 2.0:
        return 0.0
    if x < 0.5:
        return _log_gamma(x + 1.0) - log(x)
    return (x - 0.5) * (log(x + LANCZOS_G - 0.5) - 1.0) + log(_lanczos_sum(x))


cdef double _log_series_scaled(double v, double x) noexcept nogil:
    cdef double q = 0.25 * x * x
    cdef double term = 1.0, lead = 1.0, tail = 0.0, peak = 1.0, log_scale = 0.0
    cdef double m = 0.0, s
    while True:
        m += 1.0
        term = term * (q / (m * (m + v)))
        tail = tail + term
        if term > peak:
            peak = term
        elif term < peak * DROP_FACTOR:
            break
        if tail > RESCALE_AT:
            s = lead + tail
            log_scale = log_scale + log(s)
            term = term / s
            peak = peak / s
            lead = lead / s
            tail = tail / s
    if log_scale == 0.0:
        return log1p(tail)
    return log_scale + log(lead + tail)


cdef double _log_bessel_i_series(double v, double x) noexcept nogil:
    if x == 0.0:
        return 0.0 if v == 0.0 else -INFINITY
    return v * log(0.5 * x) - _log_gamma(v + 1.0) + _log_series_scaled(v, x)


cdef double _log_bessel_i_asymptotic(double v, double x) noexcept nogil:
    cdef double s = sqrt(v * v + x * x)
    cdef double p = 1.0 / s
    cdef double t = v * p
    cdef double t2 = t * t
    cdef double c1 = p * (3.0 - 5.0 * t2) / 24.0
    cdef double c2 = p * p * (81.0 + t2 * (-462.0 + t2 * 385.0)) / 1152.0
    cdef double c3 = p * p * p * (30375.0 + t2 * (-369603.0 + t2 * (765765.0 + t2 * -425425.0))) / 414720.0
    cdef double c4 = p * p * p * p * (
        4465125.0 + t2 * (-94121676.0 + t2 * (349922430.0 + t2 * (-446185740.0 + t2 * 185910725.0)))
    ) / 39813120.0
    cdef double corr = 1.0 + c1 + c2 + c3 + c4
    cdef double head = s - 0.5 * log(2.0 * PI * s)
    if v != 0.0:
        head = head + v * (log(x) - log(v + s))
    return head + log(corr)


cdef double _log_bessel_i(double v, double x) noexcept nogil:
    if x <= SERIES_CUTOFF:
        return _log_bessel_i_series(v, x)
    return _log_bessel_i_asymptotic(v, x)


def log_gamma(double x):
    return _log_gamma(x)


def log_series_scaled(double v, double x):
    return _log_series_scaled(v, x)


def log_bessel_i_series(double v, double x):
    return _log_bessel_i_series(v, x)


def log_bessel_i_asymptotic(double v, double x):
    return _log_bessel_i_asymptotic(v, x)


def log_bessel_i(double v, double x):
    return _log_bessel_i(v, x)


# -- random variates -------------------------------------------------------

cdef inline double _next(bitgen_t *bg) noexcept nogil:
    return bg.next_double(bg.state)


cdef double _normal(bitgen_t *bg) noexcept nogil:
    cdef double u1 = 1.0 - _next(bg)
    cdef double u2 = _next(bg)
    return sqrt(-2.0 * log(u1)) * cos(2.0 * PI * u2)


cdef double _standard_gamma(double alpha, bitgen_t *bg) noexcept nogil:
    cdef double g, u, dd, cc, x, v
    if alpha < 1.0:
        g = _standard_gamma(alpha + 1.0, bg)
        u = 1.0 - _next(bg)
        return g * pow(u, 1.0 / alpha)
    dd = alpha - 1.0 / 3.0
    cc = 1.0 / sqrt(9.0 * dd)
    while True:
        x = _normal(bg)
        v = 1.0 + cc * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = 1.0 - _next(bg)
        if u < 1.0 - 0.0331 * (x * x) * (x * x):
            return dd * v
        if log(u) < 0.5 * x * x + dd * (1.0 - v + log(v)):
            return dd * v


cdef double _wood_one(double kappa, double d, bitgen_t *bg, int64_t max_proposals,
                      int64_t *used) noexcept nogil:
    cdef double dm1 = d - 1.0
    cdef double b = dm1 / (2.0 * kappa + sqrt(4.0 * kappa * kappa + dm1 * dm1))
    cdef double x0 = (1.0 - b) / (1.0 + b)
    cdef double c = kappa * x0 + dm1 * log(1.0 - x0 * x0)
    cdef double alpha = 0.5 * dm1
    cdef double g1, g2, z, w, u
    cdef int64_t n = 0
    while n < max_proposals:
        n += 1
        g1 = _standard_gamma(alpha, bg)
        g2 = _standard_gamma(alpha, bg)
        z = g1 / (g1 + g2)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = 1.0 - _next(bg)
        if kappa * w + dm1 * log(1.0 - x0 * w) - c >= log(u):
            used[0] = n
            return w
    used[0] = -1
    return NAN


def standard_gamma(double alpha, rng):
    cdef bitgen_t *bg = <bitgen_t *> PyCapsule_GetPointer(rng.bit_generator.capsule, "BitGenerator")
    cdef double out
    with rng.bit_generator.lock, nogil:
        out = _standard_gamma(alpha, bg)
    return out


def wood_one(double kappa, double d, rng, int64_t max_proposals):
    cdef bitgen_t *bg = <bitgen_t *> PyCapsule_GetPointer(rng.bit_generator.capsule, "BitGenerator")
    cdef int64_t used = 0
    cdef double w
    with rng.bit_generator.lock, nogil:
        w = _wood_one(kappa, d, bg, max_proposals, &used)
    return w, used


def sample_wood(kappas, d, rng, int64_t max_proposals):
    cdef double[::1] ks = np.ascontiguousarray(kappas, dtype=np.float64)
    cdef Py_ssize_t n = ks.shape[0], i
    w_arr = np.empty(n, dtype=np.float64)
    used_arr = np.empty(n, dtype=np.int64)
    cdef double[::1] w = w_arr
    cdef int64_t[::1] used = used_arr
    cdef double dd = d
    cdef bitgen_t *bg = <bitgen_t *> PyCapsule_GetPointer(rng.bit_generator.capsule, "BitGenerator")
    with rng.bit_generator.lock, nogil:
        for i in range(n):
            w[i] = _wood_one(ks[i], dd, bg, max_proposals, &used[i])
    return w_arr, used_arr
