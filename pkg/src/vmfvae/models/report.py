"""ELBO bookkeeping: per-example statistics and their aggregates."""
import math
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class ElboReport:
    """Aggregate KL / reconstruction NLL in nats per example.

    ``nll_bound`` is ``kl + recon_nll`` of the aggregated values, so the
    identity holds exactly for the reported numbers.
    """

    kl: float
    recon_nll: float
    nll_bound: float
    perplexity: float
    tokens: int
    n_examples: int

    def to_dict(self):
        return asdict(self)


@dataclass
class ExampleStats:
    """Per-example arrays: ``kl``, ``recon`` (mean over samples) and token counts."""

    kl: np.ndarray
    recon: np.ndarray
    tokens: np.ndarray

    @classmethod
    def concat(cls, parts):
        return cls(np.concatenate([p.kl for p in parts]),
                   np.concatenate([p.recon for p in parts]),
                   np.concatenate([p.tokens for p in parts]))

    @property
    def nll(self):
        return self.kl + self.recon

    def __len__(self):
        return self.kl.shape[0]


def _exact_mean(values):
    """Mean computed around the first value so a constant column is returned exactly."""
    values = np.asarray(values, dtype=np.float64)
    x0 = values[0]
    return float(x0 + np.sum(values - x0) / values.shape[0])


def aggregate(stats, perplexity_mode):
    """Reduce :class:`ExampleStats` to an :class:`ElboReport`.

    ``perplexity_mode`` is ``"sequence"`` (``exp(total NLL / total tokens)``)
    or ``"document"`` (``exp(mean over documents of NLL_d / N_d)``).
    """
    if len(stats) == 0:
        raise ValueError("cannot aggregate an empty set of examples")
    kl = _exact_mean(stats.kl)
    recon = _exact_mean(stats.recon)
    tokens = int(np.sum(stats.tokens))
    nll = stats.kl + stats.recon
    if perplexity_mode == "sequence":
        log_ppl = float(np.sum(nll)) / tokens
    elif perplexity_mode == "document":
        log_ppl = float(np.mean(nll / stats.tokens))
    else:
        raise ValueError(f"unknown perplexity mode {perplexity_mode!r}")
    ppl = math.exp(log_ppl) if log_ppl < 709.0 else math.inf
    return ElboReport(kl=kl, recon_nll=recon, nll_bound=kl + recon, perplexity=ppl,
                      tokens=tokens, n_examples=len(stats))
