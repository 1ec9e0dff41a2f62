"""Recurrent sequence VAE (NVRNN) and the plain recurrent language model.

Both use a gated recurrent unit unrolled on the tape. Each decoder step
predicts the next token, so a sentence of ``n`` tokens contributes ``n + 1``
predictions (the last one is the end marker).
"""
import numpy as np

from .. import tensor as T
from ..corpus import BOS, EOS, PAD, Document
from ..errors import ShapeError
from .base import Model
from .latent import PosteriorHead


class Gru:
    """``r, u = sigmoid(x W_{r,u} + h U_{r,u})``, ``n = tanh(x W_n + r * (h U_n + b_n))``,
    ``h' = (1 - u) n + u h``.

    Input weights are held per named input stream (``W_<name>``) so that a
    stream can be dropped without touching the others.
    """

    def __init__(self, prefix, seed, inputs, hidden):
        H3 = 3 * hidden
        self.hidden = hidden
        self.prefix = prefix
        self.params = {}
        for name, dim in inputs.items():
            key = f"{prefix}.W_{name}"
            self.params[key] = T.init_weight(seed, key, dim, (dim, H3))
        self.params[f"{prefix}.U"] = T.init_weight(seed, f"{prefix}.U", hidden, (hidden, H3))
        self.params[f"{prefix}.b"] = T.init_bias(f"{prefix}.b", (H3,))
        self.params[f"{prefix}.b_h"] = T.init_bias(f"{prefix}.b_h", (H3,))

    def weight(self, name):
        return self.params[f"{self.prefix}.W_{name}"]

    @property
    def bias(self):
        return self.params[f"{self.prefix}.b"]

    def step(self, gx, h):
        H = self.hidden
        gh = T.add(T.matmul(h, self.params[f"{self.prefix}.U"]), self.params[f"{self.prefix}.b_h"])
        gates = T.sigmoid(T.add(T.slice_last(gx, 0, 2 * H), T.slice_last(gh, 0, 2 * H)))
        r = T.slice_last(gates, 0, H)
        u = T.slice_last(gates, H, 2 * H)
        n = T.tanh(T.add(T.slice_last(gx, 2 * H, 3 * H), T.multiply(r, T.slice_last(gh, 2 * H, 3 * H))))
        return T.add(n, T.multiply(u, T.sub(h, n)))


class SequenceBatch:
    """Right-padded id matrices for a list of documents."""

    def __init__(self, docs):
        if not docs:
            raise ShapeError("empty batch")
        self.lengths = np.array([len(d) for d in docs], dtype=np.int64)
        B, L = len(docs), int(self.lengths.max())
        self.ids = np.full((B, L), PAD, dtype=np.int64)
        self.inputs = np.full((B, L + 1), PAD, dtype=np.int64)
        self.targets = np.full((B, L + 1), PAD, dtype=np.int64)
        self.mask = np.zeros((B, L + 1))
        for i, d in enumerate(docs):
            n = len(d)
            self.ids[i, :n] = d.ids
            self.inputs[i, 0] = BOS
            self.inputs[i, 1:n + 1] = d.ids
            self.targets[i, :n] = d.ids
            self.targets[i, n] = EOS
            self.mask[i, :n + 1] = 1.0
        self.tokens = self.lengths + 1

    def __len__(self):
        return self.ids.shape[0]


class _Decoder:
    """Token/latent-conditioned GRU decoder with a softmax output layer."""

    def __init__(self, seed, vocab_size, embed_dim, hidden, streams):
        self.hidden = hidden
        self.params = {}
        if "x" in streams or "bow" in streams:
            self.params["dec.embed"] = T.init_weight(seed, "dec.embed", embed_dim, (vocab_size, embed_dim))
        self.gru = Gru("dec.gru", seed, streams, hidden)
        self.params.update(self.gru.params)
        self.params["out.W"] = T.init_weight(seed, "out.W", hidden, (hidden, vocab_size))
        self.params["out.b"] = T.init_bias("out.b", (vocab_size,))

    def recon(self, batch, const, use_tokens):
        """Per-example NLL; ``const`` (B, 3H) is the step-invariant input part incl. bias."""
        B, steps = batch.inputs.shape
        token_table = None
        if use_tokens:
            token_table = T.matmul(self.params["dec.embed"], self.gru.weight("x"))
        h = T.Tensor(np.zeros((B, self.hidden)))
        states = []
        for t in range(steps):
            gx = const
            if token_table is not None:
                gx = T.add(T.embedding_lookup(token_table, batch.inputs[:, t]), const)
            h = self.gru.step(gx, h)
            states.append(h)
        logits = T.add(T.matmul(T.stack(states, axis=1), self.params["out.W"]), self.params["out.b"])
        return T.masked_nll(logits, batch.targets, batch.mask, per_example=True)

    def bow_vectors(self, batch):
        """Mean decoder embedding of each sentence, as a constant (no gradient)."""
        table = self.params["dec.embed"].values
        out = np.zeros((len(batch), table.shape[1]))
        for i, n in enumerate(batch.lengths):
            out[i] = table[batch.ids[i, :n]].mean(axis=0)
        return out


class Nvrnn(Model):
    """GRU encoder -> posterior head -> GRU decoder conditioned on ``z`` at every step.

    Settings: ``standard`` feeds ``[embed(prev token); z]``, ``inputless``
    feeds ``[z]``; the ``*_bow`` variants also feed the sentence's mean
    decoder embedding. Each input stream has its own weight block, so the
    step input is ``embed W_x + z W_z (+ bow W_bow) + b``.
    """

    kind = "nvrnn"

    def __init__(self, config, seed=0):
        super().__init__(config, seed)
        c = config
        self._add({"enc.embed": T.init_weight(seed, "enc.embed", c.embed_dim, (c.vocab_size, c.embed_dim))})
        self.encoder = Gru("enc.gru", seed, {"x": c.embed_dim}, c.hidden)
        self._add(self.encoder.params)
        self.head = PosteriorHead("enc", seed, c.hidden, c.latent_dim, c.family, kappa=c.kappa,
                                  learn_kappa=c.learn_kappa, kappa_clip=c.kappa_clip)
        self._add(self.head.params)
        streams = {}
        if c.uses_tokens:
            streams["x"] = c.embed_dim
        streams["z"] = c.latent_dim
        if c.uses_bow:
            streams["bow"] = c.embed_dim
        self.decoder = _Decoder(seed, c.vocab_size, c.embed_dim, c.hidden, streams)
        self._add(self.decoder.params)
        self.force_zero_z = False

    def prepare(self, docs):
        return SequenceBatch(docs)

    def encode(self, batch):
        """Final encoder state (B, H) for each sequence."""
        table = T.matmul(self.params["enc.embed"], self.encoder.weight("x"))
        B, L = batch.ids.shape
        h = T.Tensor(np.zeros((B, self.config.hidden)))
        states = []
        for t in range(L):
            h = self.encoder.step(T.add(T.embedding_lookup(table, batch.ids[:, t]), self.encoder.bias), h)
            states.append(h)
        if L == 1:
            return states[0]
        last = np.zeros((B, L, 1))
        last[np.arange(B), batch.lengths - 1, 0] = 1.0
        return T.sum(T.multiply(T.stack(states, axis=1), last), axis=1)

    def forward(self, batch, rng, kl_weight=1.0):
        z, kl, extras = self.head(self.encode(batch), rng)
        if self.force_zero_z:
            z = T.Tensor(np.zeros(z.shape))
        dec = self.decoder
        const = T.matmul(z, dec.gru.weight("z"))
        if self.config.uses_bow:
            const = T.add(const, T.matmul(dec.bow_vectors(batch), dec.gru.weight("bow")))
        const = T.add(const, dec.gru.bias)
        recon = dec.recon(batch, const, self.config.uses_tokens)
        loss = self._assemble(kl, recon, kl_weight)
        return loss, self._stats(kl, recon, batch.tokens), extras

    def encode_mean(self, docs):
        with T.no_grad():
            return self.head.mean(self.encode(self.prepare(docs))).values.copy()

    def kappa_values(self, docs):
        """Per-example concentration (learned or the fixed value)."""
        if not self.config.learn_kappa:
            return np.full(len(docs), float(self.config.kappa))
        with T.no_grad():
            return self.head.kappa_node(self.encode(self.prepare(docs))).values.copy()


class Rnnlm(Model):
    """The NVRNN decoder with token inputs only: no encoder, no latent, KL = 0."""

    kind = "rnnlm"
    has_latent = False

    def __init__(self, config, seed=0):
        super().__init__(config, seed)
        c = config
        self.decoder = _Decoder(seed, c.vocab_size, c.embed_dim, c.hidden, {"x": c.embed_dim})
        self._add(self.decoder.params)

    def prepare(self, docs):
        return SequenceBatch(docs)

    def forward(self, batch, rng=None, kl_weight=1.0):
        recon = self.decoder.recon(batch, self.decoder.gru.bias, True)
        kl = T.Tensor(np.zeros(len(batch)))
        loss = self._assemble(kl, recon, kl_weight)
        return loss, self._stats(kl, recon, batch.tokens), {}


def nvrnn_forward(model, ids, rng, kl_weight=1.0):
    """Single-sentence forward pass on token ids (no markers): ``(loss, ElboReport)``."""
    loss, stats, _ = model.forward(model.prepare([Document(ids, len(ids))]), rng, kl_weight)
    return loss, model.report(stats)


rnnlm_forward = nvrnn_forward
