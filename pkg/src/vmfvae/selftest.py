"""Built-in consistency suites: gradients, sampler distribution, Bessel identities.

Each check returns a :class:`CheckResult`; :func:`run_all` runs every suite.
The oracles here are independent of the code under test: finite differences
for gradients, adaptive quadrature of the ``w`` density for the sampler, and
the three-term recurrence plus branch overlap for the Bessel function.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from . import distributions as D
from . import specialfn as S
from . import tensor as T
from .corpus import Document
from .gradcheck import check_gradients
from .models.config import NvdmConfig, NvrnnConfig
from .models.nvdm import Nvdm
from .models.nvrnn import Nvrnn


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


# -- sampler oracle ------------------------------------------------------------

def w_log_density(w, kappa, d):
    """Unnormalised ``log f(w) = kappa (w - 1) + (d - 3)/2 log(1 - w^2)``."""
    w = np.asarray(w, dtype=np.float64)
    if d == 3:
        return kappa * (w - 1.0)
    with np.errstate(divide="ignore"):
        return kappa * (w - 1.0) + 0.5 * (d - 3) * np.log1p(-w * w)


class WMarginalCdf:
    """CDF of ``w = mu^T z`` under ``vMF_d(mu, kappa)`` by piecewise quadrature.

    The density is integrated with ``scipy.integrate.quad`` over a grid that
    is uniform on ``[-1, 1]`` and geometrically refined towards ``w = 1``
    where the mass concentrates for large ``kappa``; the CDF between knots is
    linearly interpolated.
    """

    def __init__(self, kappa, d, n_uniform=2001, n_geometric=400):
        grid = np.union1d(np.linspace(-1.0, 1.0, n_uniform), 1.0 - np.geomspace(1e-12, 1.0, n_geometric))
        grid = grid[(grid >= -1.0) & (grid <= 1.0)]

        def f(w):
            return math.exp(float(w_log_density(w, kappa, d)))

        pieces = [integrate.quad(f, a, b, limit=100)[0] for a, b in zip(grid[:-1], grid[1:])]
        cdf = np.concatenate([[0.0], np.cumsum(pieces)])
        self.grid = grid
        self.values = cdf / cdf[-1]

    def __call__(self, w):
        return np.interp(w, self.grid, self.values)


def check_sampler(d, kappa, n, seed, alpha=0.01):
    rng = np.random.default_rng([seed, d, int(kappa * 1000)])
    mu = np.zeros(d)
    mu[0] = 1.0
    z, w = D.sample_vmf_many(mu, kappa, n, rng)
    ks = stats.kstest(w, WMarginalCdf(kappa, d))
    mean_ok = abs(float(np.mean(w)) - S.bessel_ratio(d, kappa)) <= 3.0 * float(np.std(w, ddof=1)) / math.sqrt(n)
    norm_ok = float(np.max(np.abs(np.linalg.norm(z, axis=1) - 1.0))) <= 1e-9
    ok = ks.pvalue >= alpha and mean_ok and norm_ok
    return CheckResult(f"sampler d={d} kappa={kappa}", ok,
                       f"KS p={ks.pvalue:.3g}, mean within 3se={mean_ok}, unit-norm={norm_ok}")


# -- Bessel identities -----------------------------------------------------------

def check_bessel_recurrence(orders=(0.0, 0.5, 1.0, 11.5, 24.0, 99.0),
                            kappas=(1e-3, 0.1, 1.0, 10.0, 80.0, 150.0, 500.0, 700.0, 1500.0), tol=1e-10):
    """``I_{v-1}(k) - I_{v+1}(k) = (2v/k) I_v(k)`` in log space, for ``v >= 1``."""
    worst = 0.0
    for v in orders:
        if v < 1.0:
            continue
        for k in kappas:
            lhs_hi = S.log_bessel_i(v - 1.0, k)
            lhs_lo = S.log_bessel_i(v + 1.0, k)
            lhs = lhs_hi + math.log(-math.expm1(lhs_lo - lhs_hi))
            rhs = math.log(2.0 * v / k) + S.log_bessel_i(v, k)
            worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    return CheckResult("bessel recurrence", worst <= tol, f"max scaled error {worst:.2e}")


def check_bessel_overlap(orders=(0.0, 0.5, 1.0, 11.5, 24.0, 99.0), kappas=(400.0, 500.0, 600.0, 700.0),
                         tol=1e-10):
    """Series and asymptotic branches agree where both are accurate."""
    worst = 0.0
    for v in orders:
        for k in kappas:
            a = S.log_bessel_i_series(v, k)
            b = S.log_bessel_i_asymptotic(v, k)
            worst = max(worst, abs(a - b) / abs(a))
    return CheckResult("bessel branch overlap", worst <= tol, f"max relative gap {worst:.2e}")


# -- gradients -------------------------------------------------------------------

def _primitive_cases(rng):
    def t(*shape, positive=False):
        v = rng.standard_normal(shape)
        return T.parameter(np.abs(v) + 0.5 if positive else v)

    a, b, m = t(3, 4), t(3, 4), t(4, 2)
    ids = rng.integers(0, 5, size=(3,))
    tab = t(5, 4)
    pos = t(3, 4, positive=True)
    targets = rng.integers(0, 4, size=(3,))
    mask = np.array([1.0, 0.0, 1.0])
    w = rng.standard_normal((3, 4))
    return {
        "add": ([a, b], lambda: T.sum(T.multiply(T.add(a, b), w))),
        "sub": ([a, b], lambda: T.sum(T.multiply(T.sub(a, b), w))),
        "multiply": ([a, b], lambda: T.sum(T.multiply(a, b))),
        "matmul": ([a, m], lambda: T.sum(T.multiply(T.matmul(a, m), w[:, :2]))),
        "tanh": ([a], lambda: T.sum(T.multiply(T.tanh(a), w))),
        "sigmoid": ([a], lambda: T.sum(T.multiply(T.sigmoid(a), w))),
        "softplus": ([a], lambda: T.sum(T.multiply(T.softplus(a), w))),
        "exp": ([a], lambda: T.sum(T.multiply(T.exp(a), w))),
        "log": ([pos], lambda: T.sum(T.multiply(T.log(pos), w))),
        "negate": ([a], lambda: T.sum(T.multiply(T.negate(a), w))),
        "concat": ([a, b], lambda: T.sum(T.multiply(T.concat([a, b]), np.concatenate([w, w], axis=1)))),
        "embedding_lookup": ([tab], lambda: T.sum(T.multiply(T.embedding_lookup(tab, ids), w))),
        "l2_normalize": ([a], lambda: T.sum(T.multiply(T.l2_normalize(a), w))),
        "sum": ([a], lambda: T.sum(T.multiply(T.sum(a, axis=1), w[:, 0]))),
        "mean": ([a], lambda: T.sum(T.multiply(T.mean(a, axis=0), w[0]))),
        "log_softmax": ([a], lambda: T.sum(T.multiply(T.log_softmax(a), w))),
        "masked_nll": ([a], lambda: T.masked_nll(a, targets, mask)),
    }


def check_primitive_gradients(instances=20, seed=0, tol=1e-4):
    failures = []
    for i in range(instances):
        for name, (tensors, fn) in _primitive_cases(np.random.default_rng([seed, i])).items():
            if check_gradients(fn, tensors, tol):
                failures.append(f"{name}#{i}")
    return CheckResult("primitive gradients", not failures,
                       "all ops pass" if not failures else "failed: " + ", ".join(failures[:10]))


TOY_DOCS = (Document((4, 5, 6), 3), Document((7, 4), 2), Document((8, 5, 6, 7), 4))


def toy_models(seed=1):
    """Small NVDM / NVRNN instances over a 5-word vocabulary (ids 4..8)."""
    out = []
    for family in ("vmf", "gaussian"):
        out.append((f"nvdm-{family}", Nvdm(NvdmConfig(9, hidden=4, latent_dim=3, family=family, kappa=10.0), seed)))
        for setting in ("standard", "inputless"):
            cfg = NvrnnConfig(9, embed_dim=3, hidden=4, latent_dim=3, family=family, kappa=10.0, setting=setting)
            out.append((f"nvrnn-{setting}-{family}", Nvrnn(cfg, seed)))
    return out


def check_model_gradients(tol=1e-3, kl_weight=0.7):
    failures = []
    for name, model in toy_models():
        batch = model.prepare(list(TOY_DOCS))

        def loss_fn(model=model, batch=batch):
            return model.forward(batch, np.random.default_rng(0), kl_weight)[0]

        bad = check_gradients(loss_fn, model.parameters(), tol)
        if bad:
            failures.append(f"{name} ({len(bad)} entries, worst {max(b.rel_error for b in bad):.2e})")
    return CheckResult("model gradients", not failures,
                       "all models pass" if not failures else "failed: " + "; ".join(failures))


def run_all(quick=False):
    """Run every suite; ``quick`` uses 10^4 rather than 10^5 sampler draws."""
    n = 10 ** 4 if quick else 10 ** 5
    results = [check_bessel_recurrence(), check_bessel_overlap(), check_primitive_gradients(),
               check_model_gradients()]
    for d in (3, 10, 50):
        for kappa in (0.5, 10.0, 100.0):
            results.append(check_sampler(d, kappa, n, seed=0))
    return results
