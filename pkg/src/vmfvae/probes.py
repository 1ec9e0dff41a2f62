"""Analysis probes: vMF dispersion tables, BoW <-> code regression, word-swap sensitivity."""
import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .corpus import RESERVED, swap_perturb
from .distributions import sample_vmf_many, vmf_kl_uniform
from .errors import CorpusError, DomainError
from .models.training import build_model, default_threads
from .specialfn import _check_dim, _check_real

MIN_KAPPA_SAMPLES = 10 ** 4
KAPPA_HEADER = ("d", "kappa", "kl", "mean_cos", "stderr")
SWAP_HEADER = ("p", "mean_cos", "stderr")
PROBE_HEADER = ("direction", "mode", "mean_cosine", "n_examples", "skipped", "epochs_run")
DIRECTIONS = ("code_to_bow", "bow_to_code")
PROBE_MODES = ("model", "identity", "shuffled")


def format_csv(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


# -- dispersion table ----------------------------------------------------------

@dataclass(frozen=True)
class KappaStatRow:
    d: int
    kappa: float
    kl: float
    mean_cos: float
    stderr: float

    @property
    def error_bar(self):
        """Three standard errors."""
        return 3.0 * self.stderr

    def as_tuple(self):
        return (self.d, self.kappa, self.kl, self.mean_cos, self.stderr)


def kappa_stats(dims, kappas, n_samples, seed):
    """KL and Monte Carlo ``E[mu^T z]`` for every ``(d, kappa)`` pair.

    Rows are grouped by ``d`` and sorted by ``kappa``. Row ``(i, j)`` draws
    from ``default_rng([seed, i, j])`` with ``i, j`` the positions of ``d``
    and ``kappa`` in the sorted grids, so the table is fixed by ``seed``.
    """
    if n_samples < MIN_KAPPA_SAMPLES:
        raise DomainError(f"n_samples must be >= {MIN_KAPPA_SAMPLES}, got {n_samples}")
    dims = sorted({_check_dim(d) for d in dims})
    kappas = sorted({_check_real("kappa", k) for k in kappas})
    rows = []
    for i, d in enumerate(dims):
        mu = np.zeros(d)
        mu[0] = 1.0
        for j, kappa in enumerate(kappas):
            rng = np.random.default_rng([int(seed), i, j])
            z, _ = sample_vmf_many(mu, kappa, n_samples, rng)
            cos = z @ mu
            rows.append(KappaStatRow(d, kappa, vmf_kl_uniform(d, kappa), float(np.mean(cos)),
                                     float(np.std(cos, ddof=1) / math.sqrt(n_samples))))
    return rows


# -- BoW <-> code regression ---------------------------------------------------

@dataclass(frozen=True)
class ProbeResult:
    direction: str
    mean_cosine: float
    n_examples: int
    skipped: int = 0
    mode: str = "model"
    epochs_run: int = 0

    def as_tuple(self):
        return (self.direction, self.mode, self.mean_cosine, self.n_examples, self.skipped, self.epochs_run)


def bow_matrix(docs, vocab_size):
    """Presence indicators; all-UNK documents give zero rows (no rejection here)."""
    out = np.zeros((len(docs), int(vocab_size)))
    for r, doc in enumerate(docs):
        for i in doc.ids:
            if i >= len(RESERVED):
                out[r, i] = 1.0
    return out


def _row_cosines(a, b):
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    denom = na * nb
    ok = denom > 0
    cos = np.zeros(a.shape[0])
    cos[ok] = np.sum(a[ok] * b[ok], axis=1) / denom[ok]
    return cos, ok


class ProbeMlp:
    """``y = tanh(x W1 + b1) W2 + b2`` with hidden width ``2 * in_dim``."""

    def __init__(self, in_dim, out_dim, seed):
        hidden = 2 * in_dim
        self.params = [
            T.init_weight(seed, "probe.W1", in_dim, (in_dim, hidden)),
            T.init_bias("probe.b1", (hidden,)),
            T.init_weight(seed, "probe.W2", hidden, (hidden, out_dim)),
            T.init_bias("probe.b2", (out_dim,)),
        ]

    def __call__(self, x):
        W1, b1, W2, b2 = self.params
        return T.add(T.matmul(T.tanh(T.add(T.matmul(x, W1), b1)), W2), b2)

    def predict(self, x):
        with T.no_grad():
            return self(x).values.copy()

    def snapshot(self):
        return [p.values.copy() for p in self.params]

    def restore(self, values):
        for p, v in zip(self.params, values):
            p.values = v.copy()


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params, self.lr, self.b1, self.b2, self.eps = params, lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.values) for p in params]
        self.v = [np.zeros_like(p.values) for p in params]
        self.t = 0

    def step(self):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad if p.grad is not None else np.zeros_like(p.values)
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.values = p.values - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.grad = None


def fit_probe(x, y, seed, epochs=200, batch_size=32, lr=1e-2, patience=20, val_fraction=0.125):
    """Train a :class:`ProbeMlp` on ``(x, y)`` under squared error.

    A ``val_fraction`` slice of the given rows is held back for early
    stopping on mean centred cosine; the best-validation weights are kept.
    Returns ``(mlp, centre, epochs_run)`` where ``centre`` is the mean of the
    training targets.
    """
    rng = np.random.default_rng([int(seed), 7])
    order = rng.permutation(x.shape[0])
    n_val = max(1, int(round(val_fraction * x.shape[0])))
    val, fit = order[:n_val], order[n_val:]
    centre = y[fit].mean(axis=0)
    mlp = ProbeMlp(x.shape[1], y.shape[1], seed)
    opt = _Adam(mlp.params, lr)
    best, best_state, stale, ran = -math.inf, mlp.snapshot(), 0, 0
    for _ in range(epochs):
        ran += 1
        perm = rng.permutation(fit)
        for start in range(0, perm.shape[0], batch_size):
            idx = perm[start:start + batch_size]
            T.reset_tape()
            diff = T.sub(mlp(x[idx]), y[idx])
            loss = T.multiply(T.sum(T.multiply(diff, diff)), 1.0 / idx.shape[0])
            T.backward(loss)
            opt.step()
        cos, ok = _row_cosines(mlp.predict(x[val]) - centre, y[val] - centre)
        score = float(np.mean(cos[ok])) if ok.any() else -math.inf
        if score > best:
            best, best_state, stale = score, mlp.snapshot(), 0
        else:
            stale += 1
            if stale >= patience:
                break
    mlp.restore(best_state)
    return mlp, centre, ran


def probe_vectors(source, target, seed, mode="model", epochs=200, train_fraction=0.8):
    """Fit ``source -> target`` on 80% of rows and score mean cosine on the rest.

    Rows whose target is the zero vector are dropped first (counted in
    ``skipped``). ``mode='identity'`` uses the source as its own target,
    ``mode='shuffled'`` permutes targets across rows (a chance-level control).
    Cosines are taken after subtracting the training-target mean from both
    prediction and target, so a predictor that ignores its input scores ~0.
    """
    if mode not in PROBE_MODES:
        raise ValueError(f"mode must be one of {PROBE_MODES}, got {mode!r}")
    source = np.asarray(source, dtype=np.float64)
    target = source.copy() if mode == "identity" else np.asarray(target, dtype=np.float64)
    keep = np.linalg.norm(target, axis=1) > 0
    skipped = int(np.sum(~keep))
    source, target = source[keep], target[keep]
    if source.shape[0] < 10:
        raise CorpusError("probe needs at least 10 usable examples")
    rng = np.random.default_rng([int(seed), 11])
    if mode == "shuffled":
        target = target[rng.permutation(target.shape[0])]
    order = rng.permutation(source.shape[0])
    n_train = int(round(train_fraction * source.shape[0]))
    tr, te = order[:n_train], order[n_train:]
    mlp, centre, ran = fit_probe(source[tr], target[tr], seed, epochs=epochs)
    cos, ok = _row_cosines(mlp.predict(source[te]) - centre, target[te] - centre)
    return float(np.mean(cos[ok])), int(ok.sum()), skipped + int(np.sum(~ok)), ran


def bow_code_probe(model, docs, direction, epochs=200, seed=0, mode="model"):
    """Regress between posterior means and bag-of-words vectors of ``docs``.

    ``code_to_bow`` predicts the BoW indicator vector from the mean code,
    ``bow_to_code`` the reverse. Scored on a held-out 20% of ``docs``.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    codes = model.encode_mean(list(docs))
    bows = bow_matrix(docs, model.config.vocab_size)
    src, tgt = (codes, bows) if direction == "code_to_bow" else (bows, codes)
    mean_cos, n, skipped, ran = probe_vectors(src, tgt, seed, mode=mode, epochs=epochs)
    return ProbeResult(direction, mean_cos, n, skipped, mode, ran)


# -- word-order sensitivity ----------------------------------------------------

@dataclass(frozen=True)
class SwapPoint:
    p: float
    mean_cos: float
    stderr: float
    n_examples: int

    def as_tuple(self):
        return (self.p, self.mean_cos, self.stderr)


def _unit_rows(x):
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def swap_sensitivity(model, docs, p_grid, n_repeats=5, seed=0, threads=None, chunk_size=64):
    """Cosine between posterior means of original and word-swapped documents.

    For each ``p`` every document is perturbed ``n_repeats`` times with
    :func:`~vmfvae.corpus.swap_perturb`; repeat ``r`` of document ``i`` at
    grid position ``k`` uses ``default_rng([seed, k, i, r])``. Per-document
    cosines are averaged over repeats and ``stderr`` is the standard error
    across documents. ``p = 0`` returns exactly 1 without perturbing.
    Single-token documents are skipped.
    """
    docs = [d for d in docs if len(d) >= 2]
    if not docs:
        raise CorpusError("no documents with at least two tokens")
    if n_repeats < 1:
        raise ValueError("n_repeats must be >= 1")
    threads = default_threads() if threads is None else int(threads)
    base = _unit_rows(model.encode_mean(docs))
    starts = list(range(0, len(docs), chunk_size))
    curve = []
    for k, p in enumerate(p_grid):
        p = float(p)
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"swap probability must be in [0, 1], got {p}")
        if p == 0.0:
            curve.append(SwapPoint(0.0, 1.0, 0.0, len(docs)))
            continue

        def run(start, k=k, p=p):
            chunk = docs[start:start + chunk_size]
            perturbed = []
            for i, doc in enumerate(chunk, start):
                for r in range(n_repeats):
                    perturbed.append(swap_perturb(doc, p, np.random.default_rng([int(seed), k, i, r])))
            codes = _unit_rows(model.encode_mean(perturbed)).reshape(len(chunk), n_repeats, -1)
            return np.einsum("nrd,nd->nr", codes, base[start:start + len(chunk)]).mean(axis=1)

        if threads > 1 and len(starts) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                per_doc = np.concatenate(list(pool.map(run, starts)))
        else:
            per_doc = np.concatenate([run(s) for s in starts])
        stderr = float(np.std(per_doc, ddof=1) / math.sqrt(len(per_doc))) if len(per_doc) > 1 else 0.0
        curve.append(SwapPoint(p, float(np.mean(per_doc)), stderr, len(per_doc)))
    return curve


def untrained_copy(model, seed=None):
    """Same architecture with fresh random weights (control runs)."""
    return build_model(model.kind, model.config, model.seed if seed is None else seed)
