"""Training loop, sharded evaluation and checkpoints."""
import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import tensor as T
from .._io import atomic_write_bytes, atomic_write_text
from ..corpus import RESERVED
from ..errors import CorpusError, NumericalError
from .config import AnnealSchedule, TrainConfig, anneal_weight, config_from_dict, config_to_dict
from .nvdm import Nvdm
from .nvrnn import Nvrnn, Rnnlm
from .report import ExampleStats, aggregate

log = logging.getLogger(__name__)

MODEL_TYPES = {"nvdm": Nvdm, "nvrnn": Nvrnn, "rnnlm": Rnnlm}
LOG_HEADER = ("epoch", "split", "kl", "recon", "nll_bound", "ppl", "kl_weight", "lr")
EVAL_CHUNK = 64
THREADS_ENV = "HVAE_THREADS"


def build_model(kind, config, seed=0):
    try:
        cls = MODEL_TYPES[kind]
    except KeyError:
        raise ValueError(f"unknown model type {kind!r}") from None
    return cls(config, seed)


def usable_documents(model, docs):
    """Drop documents the model cannot score (all-UNK documents for the NVDM)."""
    if model.kind != "nvdm":
        return list(docs)
    kept = [d for d in docs if any(i >= len(RESERVED) for i in d.ids)]
    if len(kept) != len(docs):
        log.warning("skipped %d document(s) with no in-vocabulary tokens", len(docs) - len(kept))
    return kept


def default_threads():
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        threads = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if threads < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return threads


# -- evaluation -----------------------------------------------------------------

@dataclass
class EvalResult:
    report: object
    stats: ExampleStats


def _eval_chunk(model, docs, start, samples, seed):
    """Examples ``start..start+len(docs)``; example ``i`` draws from ``default_rng([seed, i])``."""
    rows, rngs = [], []
    for offset, doc in enumerate(docs):
        g = np.random.default_rng([seed, start + offset])
        rows.extend([doc] * samples)
        rngs.extend([g] * samples)
    with T.no_grad():
        _, stats, _ = model.forward(model.prepare(rows), rngs, 1.0)
    n = len(docs)
    return ExampleStats(stats.kl.reshape(n, samples)[:, 0].copy(),
                        stats.recon.reshape(n, samples).mean(axis=1),
                        stats.tokens[::samples].copy())


def evaluate(model, docs, samples_per_example=1, seed=0, threads=None, chunk_size=EVAL_CHUNK):
    """ELBO-based NLL bound over ``docs``.

    Per example the bound is KL plus the mean reconstruction NLL over
    ``samples_per_example`` draws of ``z``. Examples are processed in fixed
    chunks, each with its own per-example generators, so sharding the chunks
    over ``threads`` workers gives exactly the single-threaded result.
    """
    docs = usable_documents(model, docs)
    if not docs:
        raise CorpusError("cannot evaluate an empty split")
    if samples_per_example < 1:
        raise ValueError("samples_per_example must be >= 1")
    threads = default_threads() if threads is None else int(threads)
    starts = list(range(0, len(docs), chunk_size))

    def run(start):
        return _eval_chunk(model, docs[start:start + chunk_size], start, samples_per_example, seed)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    stats = ExampleStats.concat(parts)
    return EvalResult(aggregate(stats, model.perplexity_mode), stats)


# -- training ---------------------------------------------------------------------

@dataclass
class TrainResult:
    rows: list
    best_epoch: int
    best_dev: object
    kappa_trace: list = field(default_factory=list)

    def log_csv(self):
        return format_log(self.rows)


def format_log(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LOG_HEADER)
    for row in rows:
        writer.writerow([row["epoch"], row["split"]] + [repr(float(row[k])) for k in LOG_HEADER[2:]])
    return buf.getvalue()


def _log_row(epoch, split, report, kl_weight, lr):
    return {"epoch": epoch, "split": split, "kl": report.kl, "recon": report.recon_nll,
            "nll_bound": report.nll_bound, "ppl": report.perplexity, "kl_weight": kl_weight, "lr": lr}


def train(model, corpus, train_config=None, schedule=None, log_path=None, checkpoint_path=None,
          checkpoint_extra=None, dev_split="dev"):
    """Seeded SGD over ``corpus['train']`` with per-epoch held-out evaluation.

    Each epoch shuffles the training set, takes one sampled-``z`` SGD step per
    batch with global-norm clipping, then evaluates ``dev_split``. The learning
    rate is multiplied by ``lr_decay`` after every epoch whose held-out bound
    does not improve on the best so far. The best-epoch parameters are
    restored into ``model`` at the end and written to ``checkpoint_path``.
    """
    cfg = train_config or TrainConfig()
    schedule = schedule or AnnealSchedule()
    train_docs = usable_documents(model, corpus["train"])
    dev_docs = usable_documents(model, corpus[dev_split])
    if not train_docs or not dev_docs:
        raise CorpusError("training and held-out splits must be nonempty")
    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    noise_rng = np.random.default_rng([cfg.seed, 2])
    params = model.parameters()
    lr = cfg.lr
    rows, kappa_trace = [], []
    best = (math.inf, -1, None, None)
    for epoch in range(cfg.epochs):
        kl_weight = anneal_weight(schedule, epoch)
        order = shuffle_rng.permutation(len(train_docs))
        parts, kappas = [], []
        for b, start in enumerate(range(0, len(order), cfg.batch_size)):
            batch_docs = [train_docs[i] for i in order[start:start + cfg.batch_size]]
            T.reset_tape()
            loss, stats, extras = model.forward(model.prepare(batch_docs), noise_rng, kl_weight)
            if not math.isfinite(loss.item()):
                T.reset_tape()
                raise NumericalError(
                    f"non-finite loss at epoch {epoch} batch {b}: loss={loss.item()!r} "
                    f"kl={float(np.mean(stats.kl))!r} recon={float(np.mean(stats.recon))!r}")
            T.backward(loss)
            T.sgd_step(params, lr, cfg.clip_norm)
            parts.append(stats)
            if "kappa" in extras:
                kappas.append(extras["kappa"])
        train_report = aggregate(ExampleStats.concat(parts), model.perplexity_mode)
        dev_report = evaluate(model, dev_docs, cfg.eval_samples, seed=cfg.seed, threads=1).report
        rows.append(_log_row(epoch, "train", train_report, kl_weight, lr))
        rows.append(_log_row(epoch, dev_split, dev_report, kl_weight, lr))
        if kappas:
            kappa_trace.append(float(np.mean(np.concatenate(kappas))))
        log.info("epoch %d: train %.4f dev %.4f (kl %.4f) lr %.4g", epoch, train_report.nll_bound,
                 dev_report.nll_bound, dev_report.kl, lr)
        if dev_report.nll_bound < best[0]:
            best = (dev_report.nll_bound, epoch, dev_report, model.state_dict())
            if checkpoint_path is not None:
                save_checkpoint(model, checkpoint_path, checkpoint_extra)
        else:
            lr *= cfg.lr_decay
    model.load_state_dict(best[3])
    if log_path is not None:
        atomic_write_text(log_path, format_log(rows))
    return TrainResult(rows, best[1], best[2], kappa_trace)


# -- checkpoints ------------------------------------------------------------------

def sidecar_path(path):
    return f"{path}.json"


def save_checkpoint(model, path, extra=None):
    """Tensor file at ``path`` plus a JSON config sidecar at ``path + '.json'``."""
    meta = {"format_version": T.FORMAT_VERSION, "model": model.kind,
            "config": config_to_dict(model.config), "seed": model.seed}
    meta.update(extra or {})
    atomic_write_bytes(path, T.encode_tensors(model.state_dict()))
    atomic_write_text(sidecar_path(path), json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path):
    """Rebuild the model from the sidecar and load its tensors; returns ``(model, meta)``."""
    with open(sidecar_path(path), encoding="utf-8") as fh:
        meta = json.load(fh)
    config = config_from_dict(meta["model"], meta["config"])
    model = build_model(meta["model"], config, meta.get("seed", 0))
    with open(path, "rb") as fh:
        model.load_state_dict(T.decode_tensors(fh.read()))
    return model, meta
