"""von Mises-Fisher and diagonal-Gaussian variational families.

The vMF prior is the uniform distribution on the sphere (``kappa = 0``), so
the KL term depends on ``(d, kappa)`` only and is a constant for a fixed
concentration. Sampling uses Wood's rejection scheme for the change magnitude
``w = mu^T z`` and a projected Gaussian for the tangent direction; the
reparameterised samplers build ``z`` from tape ops so gradients reach ``mu``
through both the ``w * mu`` term and the tangent projection.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from . import tensor as T
from .errors import DomainError, SamplerError, ShapeError
from .specialfn import (
    SERIES_CUTOFF,
    _check_dim,
    _check_real,
    bessel_ratio,
    log_bessel_i,
    log_bessel_i_derivative,
    log_bessel_series_scaled,
    log_gamma,
)

MAX_PROPOSALS = 10 ** 6
LOG_VAR_RANGE = (-10.0, 10.0)
_UNIT_TOL = 1e-9
_MIN_TANGENT_NORM = 1e-12


def check_unit_vector(x, name="vector"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < 2:
        raise ShapeError(f"{name} must be a 1-D vector of length >= 2, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{name} has non-finite components")
    norm = float(np.linalg.norm(x))
    if abs(norm - 1.0) > _UNIT_TOL:
        raise DomainError(f"{name} must have unit norm, got {norm!r}")
    return x


@dataclass(frozen=True)
class VmfParams:
    mu: np.ndarray
    kappa: float

    def __post_init__(self):
        object.__setattr__(self, "mu", check_unit_vector(self.mu, "mu"))
        object.__setattr__(self, "kappa", _check_real("kappa", self.kappa))

    @property
    def dim(self):
        return self.mu.shape[0]


@dataclass(frozen=True)
class GaussianParams:
    mu: np.ndarray
    log_var: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        log_var = np.asarray(self.log_var, dtype=np.float64)
        if mu.shape != log_var.shape or mu.ndim != 1:
            raise ShapeError(f"mu {mu.shape} and log_var {log_var.shape} must be matching vectors")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(log_var))):
            raise DomainError("Gaussian parameters must be finite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "log_var", log_var)

    @property
    def clamped_log_var(self):
        return np.clip(self.log_var, *LOG_VAR_RANGE)


@dataclass(frozen=True)
class RejectionSampleTrace:
    w: float
    epsilon: np.ndarray
    proposals_used: int


# -- vMF density and KL -------------------------------------------------------

def log_sphere_area(d):
    """``log`` of the surface area of the unit sphere in ``R^d``."""
    d = _check_dim(d)
    return math.log(2.0) + 0.5 * d * math.log(math.pi) - log_gamma(0.5 * d)


def vmf_log_normalizer(d, kappa):
    """``log C_d(kappa)``; at ``kappa = 0`` the uniform density ``-log area``."""
    d = _check_dim(d)
    kappa = _check_real("kappa", kappa)
    if kappa == 0.0:
        return -log_sphere_area(d)
    nu = 0.5 * d - 1.0
    return nu * math.log(kappa) - 0.5 * d * math.log(2.0 * math.pi) - log_bessel_i(nu, kappa)


def vmf_log_pdf(params, x):
    x = check_unit_vector(x, "x")
    if x.shape != params.mu.shape:
        raise ShapeError(f"x has dimension {x.shape[0]}, mu has {params.dim}")
    log_c = vmf_log_normalizer(params.dim, params.kappa)
    if params.kappa == 0.0:
        return log_c
    return log_c + params.kappa * float(params.mu @ x)


def vmf_kl_uniform(d, kappa):
    """``KL(vMF_d(mu, kappa) || uniform on the sphere)``; independent of ``mu``.

    Equal to ``kappa A_d + log C_d(kappa) + log area(S^{d-1})``. On the series
    range the ``log kappa``, ``log Gamma`` and ``log 2`` pieces of that sum
    cancel exactly against the leading series term, leaving
    ``kappa A_d - log S`` with ``S`` the normalised series; evaluating it that
    way keeps full relative precision as ``kappa -> 0``.
    """
    d = _check_dim(d)
    kappa = _check_real("kappa", kappa)
    if kappa == 0.0:
        return 0.0
    nu = 0.5 * d - 1.0
    ratio = bessel_ratio(d, kappa)
    if kappa <= SERIES_CUTOFF:
        value = kappa * ratio - log_bessel_series_scaled(nu, kappa)
    else:
        value = kappa * ratio + vmf_log_normalizer(d, kappa) + log_sphere_area(d)
    return max(value, 0.0)


def vmf_kl_kappa_gradient(d, kappa):
    """``d KL / d kappa``.

    With ``A = I_{nu+1} / I_nu`` the derivative collapses to ``kappa * A'``;
    ``A'`` comes from the Bessel derivatives
    ``I'_{nu+1} / I_nu - A * I'_nu / I_nu``. For ``nu < 1`` (d = 2, 3) the
    neighbour-order identity has no valid lower order, so ``I'_nu / I_nu`` is
    taken from ``I'_nu = I_{nu+1} + (nu / kappa) I_nu`` instead.
    """
    d = _check_dim(d)
    kappa = _check_real("kappa", kappa, allow_zero=False)
    nu = 0.5 * d - 1.0
    log_i = log_bessel_i(nu, kappa)
    ratio = bessel_ratio(d, kappa)
    upper = math.exp(log_bessel_i_derivative(nu + 1.0, kappa) - log_i)
    if nu >= 1.0:
        lower = math.exp(log_bessel_i_derivative(nu, kappa) - log_i)
    else:
        lower = ratio + nu / kappa
    return kappa * (upper - ratio * lower)


# -- sampling -------------------------------------------------------------------

def sample_w(kappa, d, rng, size=None):
    """Change magnitudes ``w`` by Wood's rejection scheme.

    ``kappa`` may be a scalar (with ``size``) or an array of per-draw
    concentrations. Returns ``(w, proposals_used)`` arrays.
    """
    d = _check_dim(d)
    kappas = np.asarray(kappa, dtype=np.float64)
    if kappas.ndim == 0:
        kappas = np.full(1 if size is None else int(size), float(kappas))
    if np.any(~np.isfinite(kappas)) or np.any(kappas < 0.0):
        raise DomainError("kappa must be finite and >= 0")
    w, used = _backend.kernels.sample_wood(kappas, d, rng, MAX_PROPOSALS)
    if np.any(used < 0):
        raise SamplerError(f"no acceptance after {MAX_PROPOSALS} proposals (kappa={kappas[used < 0][0]!r})")
    return w, used


def tangent_noise(mu, rng):
    """Standard-normal ``eps`` per row, redrawn where its projection off ``mu`` is ~0."""
    mu = np.asarray(mu, dtype=np.float64)
    eps = rng.standard_normal(mu.shape)
    rows = eps.reshape(-1, mu.shape[-1])
    mus = mu.reshape(-1, mu.shape[-1])
    proj = rows - np.sum(mus * rows, axis=1, keepdims=True) * mus
    for i in np.flatnonzero(np.linalg.norm(proj, axis=1) < _MIN_TANGENT_NORM):
        while np.linalg.norm(rows[i] - (mus[i] @ rows[i]) * mus[i]) < _MIN_TANGENT_NORM:
            rows[i] = rng.standard_normal(mu.shape[-1])
    return rows.reshape(mu.shape)


def _uniform_sphere(d, rng):
    while True:
        g = rng.standard_normal(d)
        n = np.linalg.norm(g)
        if n >= _MIN_TANGENT_NORM:
            return g / n, g


def sample_vmf(params, rng):
    """One draw from ``vMF(mu, kappa)``; returns ``(z, trace)``."""
    d = params.dim
    if params.kappa == 0.0:
        z, raw = _uniform_sphere(d, rng)
        return z, RejectionSampleTrace(min(max(float(params.mu @ z), -1.0), 1.0), raw, 1)
    w, used = sample_w(params.kappa, d, rng)
    w = float(w[0])
    eps = tangent_noise(params.mu, rng)
    v = eps - (params.mu @ eps) * params.mu
    v /= np.linalg.norm(v)
    z = w * params.mu + math.sqrt(max(1.0 - w * w, 0.0)) * v
    return z, RejectionSampleTrace(w, eps, int(used[0]))


def sample_vmf_many(mu, kappa, n, rng):
    """``n`` draws around one ``mu``; returns ``(z (n, d), w (n,))``."""
    mu = check_unit_vector(mu, "mu")
    d = mu.shape[0]
    kappa = _check_real("kappa", kappa)
    if kappa == 0.0:
        g = rng.standard_normal((n, d))
        norms = np.linalg.norm(g, axis=1, keepdims=True)
        for i in np.flatnonzero(norms[:, 0] < _MIN_TANGENT_NORM):
            g[i], norms[i, 0] = _uniform_sphere(d, rng)[0], 1.0
        z = g / norms
        return z, np.clip(z @ mu, -1.0, 1.0)
    w, _ = sample_w(kappa, d, rng, size=n)
    eps = tangent_noise(np.broadcast_to(mu, (n, d)), rng)
    v = eps - (eps @ mu)[:, None] * mu[None, :]
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    z = w[:, None] * mu[None, :] + np.sqrt(np.maximum(1.0 - w * w, 0.0))[:, None] * v
    return z, w


def vmf_reparameterize(mu_node, w, eps):
    """``z = w mu + sqrt(1 - w^2) normalize(eps - (mu^T eps) mu)`` on the tape.

    ``w`` and ``eps`` are constants (scalar/``(d,)`` for a single ``mu`` of
    shape ``(d,)``; ``(B,)``/``(B, d)`` for a batch).
    """
    mu_node = T.as_tensor(mu_node)
    w = np.asarray(w, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != mu_node.shape:
        raise ShapeError(f"eps {eps.shape} must match mu {mu_node.shape}")
    scale = np.sqrt(np.maximum(1.0 - w * w, 0.0))
    if mu_node.values.ndim == 2:
        w = w.reshape(-1, 1)
        scale = scale.reshape(-1, 1)
    dot = T.sum(T.multiply(mu_node, eps), axis=-1, keepdims=True)
    tangent = T.l2_normalize(T.sub(eps, T.multiply(dot, mu_node)))
    return T.add(T.multiply(mu_node, w), T.multiply(tangent, scale))


def sample_vmf_reparameterized(mu_node, kappa, rng):
    """Draw ``(w, eps)`` as constants and build a differentiable sample.

    ``kappa`` is a float or a per-row array; it is treated as a constant (no
    gradient flows to it through the sample). Returns ``(z, w, eps)``.
    """
    mu_node = T.as_tensor(mu_node)
    d = mu_node.shape[-1]
    batch = mu_node.values.ndim == 2
    kappas = np.broadcast_to(np.asarray(kappa, dtype=np.float64),
                             (mu_node.shape[0],) if batch else ()).copy()
    if np.all(kappas == 0.0):
        g = tangent_noise(mu_node.values, rng)
        z = g / np.linalg.norm(g, axis=-1, keepdims=True)
        return T.Tensor(z), np.clip((z * mu_node.values).sum(axis=-1), -1.0, 1.0), g
    w, _ = sample_w(kappas.reshape(-1), d, rng)
    if not batch:
        w = w[0]
    eps = tangent_noise(mu_node.values, rng)
    return vmf_reparameterize(mu_node, w, eps), w, eps


def vmf_kl_node(kappa_node, d):
    """Per-row vMF KL as a tape op whose gradient is ``vmf_kl_kappa_gradient``."""
    kappa_node = T.as_tensor(kappa_node)
    ks = kappa_node.values.reshape(-1)
    values = np.array([vmf_kl_uniform(d, k) for k in ks]).reshape(kappa_node.shape)

    def rule(g):
        grads = np.array([vmf_kl_kappa_gradient(d, k) for k in ks]).reshape(kappa_node.shape)
        return (g * grads,)

    return T.custom([kappa_node], values, rule)


# -- Gaussian -------------------------------------------------------------------

def gaussian_kl_standard(params):
    """``KL(N(mu, diag exp(log_var)) || N(0, I))``."""
    lv = params.clamped_log_var
    return 0.5 * float(np.sum(np.exp(lv) + params.mu ** 2 - 1.0 - lv))


def gaussian_kl_node(mu_node, log_var_node):
    """Per-row Gaussian KL on the tape (sums the last axis)."""
    lv = T.clamp(log_var_node, *LOG_VAR_RANGE)
    inner = T.sub(T.add(T.exp(lv), T.multiply(mu_node, mu_node)), T.add(lv, 1.0))
    return T.multiply(T.sum(inner, axis=-1), 0.5)


def sample_gaussian_reparameterized(mu_node, log_var_node, rng, eps=None):
    """``z = mu + exp(log_var / 2) * eps``; returns ``(z, eps)``."""
    mu_node = T.as_tensor(mu_node)
    log_var_node = T.as_tensor(log_var_node)
    if mu_node.shape != log_var_node.shape:
        raise ShapeError(f"mu {mu_node.shape} and log_var {log_var_node.shape} differ")
    if eps is None:
        eps = rng.standard_normal(mu_node.shape)
    std = T.exp(T.multiply(T.clamp(log_var_node, *LOG_VAR_RANGE), 0.5))
    return T.add(mu_node, T.multiply(std, eps)), eps


# -- family objects -------------------------------------------------------------

class VonMisesFisherFamily:
    """Posterior contract for ``vMF(mu, kappa)`` against the uniform prior."""

    name = "vmf"
    is_kl_constant = True

    def sample(self, params, rng):
        return sample_vmf(params, rng)

    def kl(self, params):
        return vmf_kl_uniform(params.dim, params.kappa)


class GaussianFamily:
    """Posterior contract for a diagonal Gaussian against ``N(0, I)``."""

    name = "gaussian"
    is_kl_constant = False

    def sample(self, params, rng):
        eps = rng.standard_normal(params.mu.shape)
        z = params.mu + np.exp(0.5 * params.clamped_log_var) * eps
        return z, eps

    def kl(self, params):
        return gaussian_kl_standard(params)
