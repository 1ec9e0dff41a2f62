"""Posterior heads shared by the document and sequence models."""
import numpy as np

from .. import distributions as D
from .. import tensor as T
from ..errors import ShapeError


def row_generators(rng, n):
    """``None`` for a single shared Generator, else the list of per-row Generators."""
    if isinstance(rng, np.random.Generator):
        return None
    rngs = list(rng)
    if len(rngs) != n:
        raise ShapeError(f"expected {n} per-row generators, got {len(rngs)}")
    return rngs


def vmf_sample(mu_node, kappas, rng):
    """Reparameterised vMF draw for a ``(B, d)`` batch of unit means."""
    batch, dim = mu_node.shape
    rngs = row_generators(rng, batch)
    if rngs is None:
        return D.sample_vmf_reparameterized(mu_node, kappas, rng)[0]
    kappas = np.broadcast_to(np.asarray(kappas, dtype=np.float64), (batch,))
    w = np.empty(batch)
    eps = np.empty((batch, dim))
    for i, g in enumerate(rngs):
        w[i] = D.sample_w(kappas[i], dim, g)[0][0]
        eps[i] = D.tangent_noise(mu_node.values[i], g)
    return D.vmf_reparameterize(mu_node, w, eps)


def gaussian_sample(mu_node, log_var_node, rng):
    rngs = row_generators(rng, mu_node.shape[0])
    eps = None
    if rngs is not None:
        eps = np.stack([g.standard_normal(mu_node.shape[1]) for g in rngs])
    return D.sample_gaussian_reparameterized(mu_node, log_var_node, rng, eps=eps)[0]


class PosteriorHead:
    """Maps an encoder feature ``h`` (B, H) to a sampled code and per-row KL.

    ``vmf``: ``mu = normalize(h W + b)`` with a fixed ``kappa`` or, when
    ``learn_kappa`` is set, ``kappa = lo + (hi - lo) sigmoid(h w_k + b_k)``.
    ``gaussian``: ``mu`` and ``log_var`` from two affine maps.
    """

    def __init__(self, prefix, seed, in_dim, latent_dim, family, kappa=None,
                 learn_kappa=False, kappa_clip=None):
        self.family = family
        self.latent_dim = latent_dim
        self.kappa = kappa
        self.learn_kappa = learn_kappa
        self.kappa_clip = kappa_clip
        self.params = {
            f"{prefix}.mu.W": T.init_weight(seed, f"{prefix}.mu.W", in_dim, (in_dim, latent_dim)),
            f"{prefix}.mu.b": T.init_bias(f"{prefix}.mu.b", (latent_dim,)),
        }
        if family == "gaussian":
            self.params[f"{prefix}.logvar.W"] = T.init_weight(seed, f"{prefix}.logvar.W", in_dim,
                                                              (in_dim, latent_dim))
            self.params[f"{prefix}.logvar.b"] = T.init_bias(f"{prefix}.logvar.b", (latent_dim,))
        if learn_kappa:
            self.params[f"{prefix}.kappa.W"] = T.init_weight(seed, f"{prefix}.kappa.W", in_dim, (in_dim, 1))
            self.params[f"{prefix}.kappa.b"] = T.init_bias(f"{prefix}.kappa.b", (1,))
        self.prefix = prefix
        if family == "vmf" and not learn_kappa:
            self.fixed_kl = D.vmf_kl_uniform(latent_dim, kappa)

    def _p(self, name):
        return self.params[f"{self.prefix}.{name}"]

    def mean(self, h):
        """Posterior mean direction (vMF) or mean vector (Gaussian), as a tensor."""
        raw = T.add(T.matmul(h, self._p("mu.W")), self._p("mu.b"))
        return T.l2_normalize(raw) if self.family == "vmf" else raw

    def kappa_node(self, h):
        lo, hi = self.kappa_clip
        gate = T.sigmoid(T.add(T.matmul(h, self._p("kappa.W")), self._p("kappa.b")))
        return T.sum(T.add(T.multiply(gate, hi - lo), lo), axis=-1)

    def __call__(self, h, rng):
        """Returns ``(z, kl, extras)``; ``kl`` is a (B,) tensor, ``extras`` a dict of arrays."""
        batch = h.shape[0]
        mu = self.mean(h)
        if self.family == "gaussian":
            log_var = T.add(T.matmul(h, self._p("logvar.W")), self._p("logvar.b"))
            z = gaussian_sample(mu, log_var, rng)
            return z, D.gaussian_kl_node(mu, log_var), {}
        if self.learn_kappa:
            kappa = self.kappa_node(h)
            z = vmf_sample(mu, kappa.values, rng)
            return z, D.vmf_kl_node(kappa, self.latent_dim), {"kappa": kappa.values.copy()}
        z = vmf_sample(mu, self.kappa, rng)
        return z, T.Tensor(np.full(batch, self.fixed_kl)), {"kappa": np.full(batch, float(self.kappa))}
