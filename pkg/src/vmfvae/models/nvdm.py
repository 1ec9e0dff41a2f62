"""Neural variational document model over bag-of-words vectors."""
import numpy as np

from .. import tensor as T
from ..corpus import RESERVED, to_bow
from ..errors import ShapeError
from .base import Model
from .latent import PosteriorHead


def count_vector(doc, vocab_size):
    counts = np.zeros(int(vocab_size))
    for i in doc.ids:
        if i >= len(RESERVED):
            counts[i] += 1.0
    return counts


class Nvdm(Model):
    """Encoder ``bow -> tanh(affine) -> posterior``; decoder ``softmax(affine(z))``.

    With presence scoring each distinct word of a document is scored once;
    ``score="counts"`` scores every occurrence instead.
    """

    kind = "nvdm"
    perplexity_mode = "document"

    def __init__(self, config, seed=0):
        super().__init__(config, seed)
        c = config
        self._add({
            "enc.W": T.init_weight(seed, "enc.W", c.vocab_size, (c.vocab_size, c.hidden)),
            "enc.b": T.init_bias("enc.b", (c.hidden,)),
        })
        self.head = PosteriorHead("enc", seed, c.hidden, c.latent_dim, c.family, kappa=c.kappa)
        self._add(self.head.params)
        self._add({
            "dec.W": T.init_weight(seed, "dec.W", c.latent_dim, (c.latent_dim, c.vocab_size)),
            "dec.b": T.init_bias("dec.b", (c.vocab_size,)),
        })

    def prepare(self, docs):
        V = self.config.vocab_size
        rows = [to_bow(d, V) for d in docs]  # rejects all-UNK documents
        if self.config.score == "counts":
            rows = [count_vector(d, V) for d in docs]
        return np.stack(rows)

    def _features(self, bow):
        return T.tanh(T.add(T.matmul(bow, self.params["enc.W"]), self.params["enc.b"]))

    def forward(self, batch, rng, kl_weight=1.0):
        bow = np.asarray(batch, dtype=np.float64)
        if bow.ndim != 2 or bow.shape[1] != self.config.vocab_size:
            raise ShapeError(f"bow batch must be (B, {self.config.vocab_size}), got {bow.shape}")
        z, kl, extras = self.head(self._features(bow), rng)
        logits = T.add(T.matmul(z, self.params["dec.W"]), self.params["dec.b"])
        recon = T.negate(T.sum(T.multiply(T.log_softmax(logits), bow), axis=-1))
        loss = self._assemble(kl, recon, kl_weight)
        return loss, self._stats(kl, recon, bow.sum(axis=1)), extras

    def encode_mean(self, docs):
        with T.no_grad():
            return self.head.mean(self._features(self.prepare(docs))).values.copy()


def nvdm_forward(model, bow, rng, kl_weight=1.0):
    """Single-document forward pass: ``(loss, ElboReport)``."""
    loss, stats, _ = model.forward(np.asarray(bow, dtype=np.float64)[None, :], rng, kl_weight)
    return loss, model.report(stats)


def unigram_baseline(train_docs, eval_docs, vocab_size, score="presence"):
    """Perplexity of a context-free word distribution fitted on ``train_docs``.

    Under presence scoring the maximum-likelihood distribution is proportional
    to document frequency; under count scoring to raw frequency. Perplexity is
    normalised per document as for the NVDM.
    """
    vec = to_bow if score == "presence" else count_vector
    freq = np.zeros(int(vocab_size))
    for d in train_docs:
        freq += vec(d, vocab_size)
    logp = np.full(freq.shape, -np.inf)
    seen = freq > 0
    logp[seen] = np.log(freq[seen] / freq.sum())
    per_doc = []
    for d in eval_docs:
        x = vec(d, vocab_size)
        nz = x > 0
        per_doc.append(-float(np.sum(x[nz] * logp[nz])) / float(x.sum()))
    return float(np.exp(np.mean(per_doc)))
