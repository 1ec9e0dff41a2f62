"""Common parameter handling and loss assembly."""
import numpy as np

from .. import tensor as T
from ..errors import ShapeError
from .report import ExampleStats, aggregate


class Model:
    """Parameters live in an insertion-ordered ``{name: Tensor}`` dict."""

    kind = None
    perplexity_mode = "sequence"
    has_latent = True

    def __init__(self, config, seed):
        self.config = config
        self.seed = int(seed)
        self.params = {}

    def _add(self, params):
        for name, p in params.items():
            if name in self.params:
                raise ValueError(f"duplicate parameter {name}")
            self.params[name] = p

    def parameters(self):
        return list(self.params.values())

    def state_dict(self):
        return {name: p.values.copy() for name, p in self.params.items()}

    def load_state_dict(self, state):
        if list(state) != list(self.params):
            missing = sorted(set(self.params) - set(state))
            extra = sorted(set(state) - set(self.params))
            raise ShapeError(f"checkpoint parameters differ: missing {missing}, unexpected {extra}")
        for name, p in self.params.items():
            values = np.asarray(state[name], dtype=np.float64)
            if values.shape != p.shape:
                raise ShapeError(f"{name}: checkpoint shape {values.shape} != model shape {p.shape}")
            p.values = values.copy()
            p.grad = None

    @staticmethod
    def _assemble(kl, recon, kl_weight):
        """``loss = sum_i (kl_weight * kl_i + recon_i) / B``."""
        per_row = T.add(T.multiply(kl, float(kl_weight)), recon)
        return T.multiply(T.sum(per_row), 1.0 / recon.shape[0])

    def prepare(self, docs):
        raise NotImplementedError

    def forward(self, batch, rng, kl_weight=1.0):
        """Returns ``(loss, ExampleStats, extras)`` for a prepared batch."""
        raise NotImplementedError

    def forward_docs(self, docs, rng, kl_weight=1.0):
        return self.forward(self.prepare(docs), rng, kl_weight)

    def report(self, stats):
        return aggregate(stats, self.perplexity_mode)

    @staticmethod
    def _stats(kl, recon, tokens):
        return ExampleStats(np.array(kl.values, dtype=np.float64).reshape(-1),
                            np.array(recon.values, dtype=np.float64).reshape(-1),
                            np.asarray(tokens, dtype=np.int64))
