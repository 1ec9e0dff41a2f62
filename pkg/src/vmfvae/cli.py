"""Command-line entry point: ``vmfvae <subcommand> ...``.

Every failure ends the process with a nonzero exit code and a single JSON
line ``{"error": <kind>, "code": <exit code>, "message": ...}`` on stderr.
Exit codes: 0 success, 1 selftest check failure or internal error, 2 configuration or
validation error, 3 numerical failure, 4 I/O error.
"""
import argparse
import json
import logging
import os
import sys

from . import corpus as C
from . import probes as P
from ._io import RunDirLocked, atomic_write_text, run_lock
from .errors import ConfigError, CorpusError, DomainError, NumericalError, VmfVaeError
from .models import build_model, evaluate, load_checkpoint, train
from .runconfig import REPORT_SCHEMA, load_run_config, validate

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3, 4
SWEEP_HEADER = ("setting", "kappa", "kl", "recon", "nll_bound", "ppl", "best_epoch")
VOCAB_FILE = "vocab.txt"
CHECKPOINT_FILE = "model.ckpt"
LOG_FILE = "train_log.csv"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _float_list(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _int_list(text):
    values = _float_list(text)
    if any(v != int(v) for v in values):
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    return [int(v) for v in values]


def _param(text):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        raise argparse.ArgumentTypeError(f"value of {key} must be a number") from None


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(out, text)


# -- subcommands -----------------------------------------------------------------

def cmd_synth(args):
    with run_lock(args.out):
        prefix = C.synth_corpus(args.kind, args.seed, args.out, prefix=args.prefix, **dict(args.param))
    print(json.dumps({"corpus": os.path.abspath(prefix)}))


def _train_run(cfg, out_dir):
    """Train one run config into ``out_dir``; returns ``(model, result, corpus)``."""
    opts = cfg.corpus_options
    corpus = C.load_corpus(cfg.corpus_path, opts["vocab_size_cap"], opts["max_len"])
    model = build_model(cfg.model_type, cfg.model_config(len(corpus.vocab)), cfg.seed)
    extra = {"corpus": {"path": cfg.corpus_path, **opts}, "vocab_file": VOCAB_FILE}
    os.makedirs(out_dir, exist_ok=True)
    corpus.vocab.save(os.path.join(out_dir, VOCAB_FILE))
    atomic_write_text(os.path.join(out_dir, "config.json"),
                      json.dumps(cfg.echo(len(corpus.vocab)), indent=2, sort_keys=True) + "\n")
    result = train(model, corpus, cfg.train_config(), cfg.anneal(),
                   log_path=os.path.join(out_dir, LOG_FILE),
                   checkpoint_path=os.path.join(out_dir, CHECKPOINT_FILE), checkpoint_extra=extra)
    summary = {"best_epoch": result.best_epoch, "best_dev": result.best_dev.to_dict(),
               "kappa_trace": result.kappa_trace}
    atomic_write_text(os.path.join(out_dir, "summary.json"), json.dumps(summary, indent=2) + "\n")
    return model, result, corpus


def _run_config(args):
    cfg = load_run_config(args.config)
    return cfg if args.corpus is None else cfg.with_corpus(args.corpus)


def cmd_train(args):
    cfg = _run_config(args)
    with run_lock(args.out):
        _, result, _ = _train_run(cfg, args.out)
    out = {"checkpoint": os.path.abspath(os.path.join(args.out, CHECKPOINT_FILE)),
           "best_epoch": result.best_epoch, "best_dev_nll_bound": result.best_dev.nll_bound}
    if result.kappa_trace:
        out["final_mean_kappa"] = result.kappa_trace[-1]
    print(json.dumps(out))


def _load_run(checkpoint, split):
    """Checkpoint plus the ``split`` documents encoded with the run's vocabulary."""
    model, meta = load_checkpoint(checkpoint)
    if "corpus" not in meta:
        raise ConfigError(f"{checkpoint}: sidecar has no corpus section")
    vocab = C.Vocab.load(os.path.join(os.path.dirname(os.path.abspath(checkpoint)),
                                      meta.get("vocab_file", VOCAB_FILE)))
    info = meta["corpus"]
    corpus = C.load_corpus(info["path"], info["vocab_size_cap"], info["max_len"], vocab=vocab, splits=(split,))
    return model, meta, corpus[split]


def elbo_document(model, report, split, samples, seed):
    doc = {"version": 1, "split": split, "samples": samples, "seed": seed, "model": model.kind,
           **report.to_dict()}
    validate(doc, REPORT_SCHEMA)
    return doc


def cmd_eval(args):
    model, _, docs = _load_run(args.checkpoint, args.split)
    report = evaluate(model, docs, args.samples, seed=args.seed).report
    print(json.dumps(elbo_document(model, report, args.split, args.samples, args.seed), sort_keys=True))


def cmd_kl_table(args):
    rows = P.kappa_stats(args.dims, args.kappas, args.samples, args.seed)
    _emit(P.format_csv(P.KAPPA_HEADER, [r.as_tuple() for r in rows]), args.out)


def cmd_sweep(args):
    base = _run_config(args)
    settings = args.settings or [None]
    rows = []
    with run_lock(args.out):
        for setting in settings:
            for kappa in args.kappas:
                cfg = base.with_kappa(kappa)
                name = f"kappa_{kappa:g}"
                if setting is not None:
                    cfg = cfg.with_setting(setting)
                    name = f"{setting}_{name}"
                model, result, corpus = _train_run(cfg, os.path.join(args.out, name))
                report = evaluate(model, corpus[args.split], args.samples, seed=args.seed).report
                rows.append((cfg.raw["model"].get("setting", ""), kappa, report.kl, report.recon_nll,
                             report.nll_bound, report.perplexity, result.best_epoch))
        atomic_write_text(os.path.join(args.out, "sweep.csv"), P.format_csv(SWEEP_HEADER, rows))
    best = min(rows, key=lambda r: r[4])
    print(json.dumps({"sweep": os.path.abspath(os.path.join(args.out, "sweep.csv")),
                      "best_setting": best[0], "best_kappa": best[1], "best_nll_bound": best[4]}))


def cmd_probe(args):
    model, _, docs = _load_run(args.checkpoint, args.split)
    if args.control:
        model = P.untrained_copy(model, args.seed)
    if args.probe == "swap":
        points = P.swap_sensitivity(model, docs, args.p_grid, args.repeats, args.seed)
        text = P.format_csv(P.SWAP_HEADER, [p.as_tuple() for p in points])
    else:
        directions = P.DIRECTIONS if args.direction == "both" else (args.direction,)
        results = [P.bow_code_probe(model, docs, d, epochs=args.epochs, seed=args.seed, mode=args.mode)
                   for d in directions]
        text = P.format_csv(P.PROBE_HEADER, [r.as_tuple() for r in results])
    _emit(text, args.out)


def cmd_selftest(args):
    from .selftest import run_all
    results = run_all(quick=args.quick)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        _fail(EXIT_CHECKS, "SelftestFailure", f"{len(failed)} check(s) failed: " + ", ".join(failed))
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="vmfvae", description="vMF / Gaussian text VAEs: training, evaluation and probes. "
                     "HVAE_THREADS sets the evaluation worker count (default 1).")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a seeded synthetic corpus")
    p.add_argument("--kind", choices=("collapse", "topic"), required=True, help="generator family")
    p.add_argument("--seed", type=int, required=True, help="generator seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--prefix", default="corpus", help="file prefix inside --out (default: corpus)")
    p.add_argument("--param", type=_param, action="append", default=[], metavar="KEY=VALUE",
                   help="override a generator parameter (repeatable), e.g. n_themes=8")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one model from a JSON run config")
    p.add_argument("--config", required=True, help="run config JSON (see docs/run_config.schema.json)")
    p.add_argument("--out", required=True, help="run directory for log, checkpoint and config echo")
    p.add_argument("--corpus", default=None, help="corpus prefix overriding corpus.path of the config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="print the held-out ELBO report of a checkpoint as JSON")
    p.add_argument("--checkpoint", required=True, help="checkpoint file written by train")
    p.add_argument("--split", choices=("dev", "test"), default="test", help="held-out split (default: test)")
    p.add_argument("--samples", type=int, default=1, help="latent samples per example (default: 1)")
    p.add_argument("--seed", type=int, default=0, help="sampling seed (default: 0)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("kl-table", help="vMF KL and mean cosine table over dimensions and kappas")
    p.add_argument("--dims", type=_int_list, required=True, help="comma-separated dimensions, e.g. 25,50,100")
    p.add_argument("--kappas", type=_float_list, required=True, help="comma-separated concentrations")
    p.add_argument("--samples", type=int, default=100000, help="samples per cell, at least 10000 (default: 100000)")
    p.add_argument("--seed", type=int, default=0, help="sampling seed (default: 0)")
    p.add_argument("--out", default=None, help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_kl_table)

    p = sub.add_parser("sweep", help="train and evaluate one vMF run per kappa")
    p.add_argument("--config", required=True, help="base run config with a vmf model")
    p.add_argument("--kappas", type=_float_list, required=True, help="comma-separated concentrations")
    p.add_argument("--settings", type=lambda s: [v for v in s.split(",") if v], default=None,
                   help="optional comma-separated nvrnn settings to cross with the kappas")
    p.add_argument("--out", required=True, help="sweep directory; one run directory per point plus sweep.csv")
    p.add_argument("--corpus", default=None, help="corpus prefix overriding corpus.path of the config")
    p.add_argument("--split", choices=("dev", "test"), default="test", help="evaluation split (default: test)")
    p.add_argument("--samples", type=int, default=1, help="latent samples per example (default: 1)")
    p.add_argument("--seed", type=int, default=0, help="evaluation seed (default: 0)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("probe", help="latent-code probes on a trained checkpoint")
    probe_sub = p.add_subparsers(dest="probe", required=True, parser_class=_Parser)
    for name, help_text in (("swap", "cosine between codes of original and word-swapped documents"),
                            ("bow", "MLP regression between codes and bag-of-words vectors")):
        q = probe_sub.add_parser(name, help=help_text)
        q.add_argument("--checkpoint", required=True, help="checkpoint file written by train")
        q.add_argument("--split", choices=C.SPLITS, default="test", help="documents to probe (default: test)")
        q.add_argument("--seed", type=int, default=0, help="probe seed (default: 0)")
        q.add_argument("--control", action="store_true", help="use a freshly initialised copy of the model")
        q.add_argument("--out", default=None, help="output CSV (default: stdout)")
        if name == "swap":
            q.add_argument("--p-grid", type=_float_list, default=[i / 10 for i in range(11)],
                           help="comma-separated swap probabilities (default: 0,0.1,...,1)")
            q.add_argument("--repeats", type=int, default=5, help="perturbations per document (default: 5)")
        else:
            q.add_argument("--direction", choices=P.DIRECTIONS + ("both",), default="both",
                           help="regression direction (default: both)")
            q.add_argument("--mode", choices=P.PROBE_MODES, default="model",
                           help="model, identity sanity target, or shuffled-target control (default: model)")
            q.add_argument("--epochs", type=int, default=200, help="maximum probe epochs (default: 200)")
        q.set_defaults(func=cmd_probe)

    p = sub.add_parser("selftest", help="gradient, sampler and Bessel consistency suites")
    p.add_argument("--quick", action="store_true", help="10^4 instead of 10^5 sampler draws")
    p.set_defaults(func=cmd_selftest)
    return parser


class _Exit(Exception):
    def __init__(self, code, kind, message):
        super().__init__(message)
        self.code, self.kind = code, kind


def _fail(code, kind, message):
    raise _Exit(code, kind, message)


def _classify(exc):
    if isinstance(exc, _Exit):
        return exc.code, exc.kind
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL, "NumericalError"
    if isinstance(exc, ArithmeticError):
        return EXIT_NUMERICAL, type(exc).__name__
    if isinstance(exc, (CorpusError, RunDirLocked, OSError)):
        return EXIT_IO, type(exc).__name__
    if isinstance(exc, (ConfigError, DomainError, VmfVaeError, ValueError, KeyError)):
        return EXIT_CONFIG, type(exc).__name__
    return EXIT_CHECKS, type(exc).__name__


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
        return EXIT_OK
    except Exception as exc:  # every failure becomes one machine-readable line
        code, kind = _classify(exc)
        message = " ".join(str(exc).split()) or kind
        sys.stderr.write(json.dumps({"error": kind, "code": code, "message": message}) + "\n")
        return code


if __name__ == "__main__":
    sys.exit(main())
