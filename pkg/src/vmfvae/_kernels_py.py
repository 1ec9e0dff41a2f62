"""Pure-Python scalar kernels.

Reference implementation of the hot loops. ``_kernels.pyx`` mirrors every
function here operation-for-operation so both backends return bit-identical
floats and consume identical random streams.
"""
import math

import numpy as np

SERIES_CUTOFF = 600.0
# Stop summing once a term is this many log-units below the largest term.
SERIES_DROP = 36.0
_DROP_FACTOR = math.exp(-SERIES_DROP)
_RESCALE_AT = 1e280

# Lanczos approximation (g, 13 terms), coefficients highest power first.
LANCZOS_G = 6.024680040776729583740234375
_LANCZOS_NUM = (
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
)
_LANCZOS_DEN = (
    1.0, 66.0, 1925.0, 32670.0, 357423.0, 2637558.0, 13339535.0,
    45995730.0, 105258076.0, 150917976.0, 120543840.0, 39916800.0, 0.0,
)


def _lanczos_sum(x):
    num = 0.0
    den = 0.0
    if x <= 1.0:
        for i in range(13):
            num = num * x + _LANCZOS_NUM[i]
            den = den * x + _LANCZOS_DEN[i]
    else:
        y = 1.0 / x
        for i in range(12, -1, -1):
            num = num * y + _LANCZOS_NUM[i]
            den = den * y + _LANCZOS_DEN[i]
    return num / den


def log_gamma(x):
    if x == 1.0 or x == 2.0:
        return 0.0
    if x < 0.5:
        return log_gamma(x + 1.0) - math.log(x)
    return (x - 0.5) * (math.log(x + LANCZOS_G - 0.5) - 1.0) + math.log(_lanczos_sum(x))


def log_series_scaled(v, x):
    """log of sum_m (x^2/4)^m G(v+1) / (m! G(m+v+1)), i.e. I_v(x) / leading term."""
    q = 0.25 * x * x
    term = 1.0
    lead = 1.0
    tail = 0.0
    peak = 1.0
    log_scale = 0.0
    m = 0
    while True:
        m += 1
        term = term * (q / (m * (m + v)))
        tail = tail + term
        if term > peak:
            peak = term
        elif term < peak * _DROP_FACTOR:
            break
        if tail > _RESCALE_AT:
            s = lead + tail
            log_scale = log_scale + math.log(s)
            term = term / s
            peak = peak / s
            lead = lead / s
            tail = tail / s
    if log_scale == 0.0:
        # Leading term kept apart so tiny tails survive.
        return math.log1p(tail)
    return log_scale + math.log(lead + tail)


def log_bessel_i_series(v, x):
    if x == 0.0:
        return 0.0 if v == 0.0 else -math.inf
    return v * math.log(0.5 * x) - log_gamma(v + 1.0) + log_series_scaled(v, x)


def log_bessel_i_asymptotic(v, x):
    s = math.sqrt(v * v + x * x)
    p = 1.0 / s
    t = v * p
    t2 = t * t
    c1 = p * (3.0 - 5.0 * t2) / 24.0
    c2 = p * p * (81.0 + t2 * (-462.0 + t2 * 385.0)) / 1152.0
    c3 = p * p * p * (30375.0 + t2 * (-369603.0 + t2 * (765765.0 + t2 * -425425.0))) / 414720.0
    c4 = p * p * p * p * (
        4465125.0 + t2 * (-94121676.0 + t2 * (349922430.0 + t2 * (-446185740.0 + t2 * 185910725.0)))
    ) / 39813120.0
    corr = 1.0 + c1 + c2 + c3 + c4
    head = s - 0.5 * math.log(2.0 * math.pi * s)
    if v != 0.0:
        head = head + v * (math.log(x) - math.log(v + s))
    return head + math.log(corr)


def log_bessel_i(v, x):
    if x <= SERIES_CUTOFF:
        return log_bessel_i_series(v, x)
    return log_bessel_i_asymptotic(v, x)


# -- random variates -------------------------------------------------------

def _normal(rng):
    # Box-Muller, one output per call so no hidden cached state.
    u1 = 1.0 - rng.random()
    u2 = rng.random()
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def standard_gamma(alpha, rng):
    """Marsaglia-Tsang; alpha < 1 is boosted through alpha + 1."""
    if alpha < 1.0:
        g = standard_gamma(alpha + 1.0, rng)
        u = 1.0 - rng.random()
        return g * math.pow(u, 1.0 / alpha)
    dd = alpha - 1.0 / 3.0
    cc = 1.0 / math.sqrt(9.0 * dd)
    while True:
        x = _normal(rng)
        v = 1.0 + cc * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = 1.0 - rng.random()
        if u < 1.0 - 0.0331 * (x * x) * (x * x):
            return dd * v
        if math.log(u) < 0.5 * x * x + dd * (1.0 - v + math.log(v)):
            return dd * v


def wood_one(kappa, d, rng, max_proposals):
    """One change-magnitude draw. Returns (w, proposals) or (nan, -1) on exhaustion."""
    dm1 = d - 1.0
    b = dm1 / (2.0 * kappa + math.sqrt(4.0 * kappa * kappa + dm1 * dm1))
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + dm1 * math.log(1.0 - x0 * x0)
    alpha = 0.5 * dm1
    n = 0
    while n < max_proposals:
        n += 1
        g1 = standard_gamma(alpha, rng)
        g2 = standard_gamma(alpha, rng)
        z = g1 / (g1 + g2)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = 1.0 - rng.random()
        if kappa * w + dm1 * math.log(1.0 - x0 * w) - c >= math.log(u):
            return w, n
    return math.nan, -1


def sample_wood(kappas, d, rng, max_proposals):
    kappas = np.ascontiguousarray(kappas, dtype=np.float64)
    n = kappas.shape[0]
    w = np.empty(n, dtype=np.float64)
    used = np.empty(n, dtype=np.int64)
    for i in range(n):
        w[i], used[i] = wood_one(float(kappas[i]), float(d), rng, max_proposals)
    return w, used

