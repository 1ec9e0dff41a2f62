"""Corpus ingestion, vocabularies, bag-of-words vectors and synthetic corpora.

Corpus files hold one whitespace-tokenised example per line and come in
``<prefix>.train``, ``<prefix>.dev`` and ``<prefix>.test`` splits. The
vocabulary is built from the training split only.
"""
import collections
import csv
import io
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from ._io import atomic_write_text
from .errors import CorpusError

log = logging.getLogger(__name__)

PAD, UNK, BOS, EOS = 0, 1, 2, 3
RESERVED = ("<pad>", "<unk>", "<s>", "</s>")
SPLITS = ("train", "dev", "test")


class Vocab:
    """Token <-> id map with four reserved ids followed by corpus tokens."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if len(set(tokens)) != len(tokens) or set(tokens) & set(RESERVED):
            raise CorpusError("vocabulary tokens must be unique and not reserved")
        self.itos = list(RESERVED) + tokens
        self.stoi = {t: i for i, t in enumerate(self.itos)}

    @classmethod
    def build(cls, lines, cap):
        """Most frequent ``cap`` tokens of ``lines``; ties keep first occurrence."""
        counts = collections.Counter()
        first = {}
        for line in lines:
            for tok in line.split():
                counts[tok] += 1
                first.setdefault(tok, len(first))
        ranked = sorted(counts, key=lambda t: (-counts[t], first[t]))
        return cls(ranked[:cap])

    def __len__(self):
        return len(self.itos)

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.itos == other.itos

    def encode(self, tokens):
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids, skip_unk=True):
        return [self.itos[i] for i in ids if not (skip_unk and i == UNK)]

    def save(self, path):
        atomic_write_text(path, "".join(t + "\n" for t in self.itos[len(RESERVED):]))

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls(line.rstrip("\n") for line in fh if line.strip())


@dataclass(frozen=True)
class Document:
    ids: tuple
    raw_len: int

    def __post_init__(self):
        ids = tuple(int(i) for i in self.ids)
        if not ids:
            raise CorpusError("document has no tokens")
        if any(i < len(RESERVED) and i != UNK for i in ids):
            raise CorpusError("document contains reserved ids other than UNK")
        object.__setattr__(self, "ids", ids)

    def __len__(self):
        return len(self.ids)


@dataclass
class Corpus:
    vocab: Vocab
    splits: dict
    skipped_lines: dict = field(default_factory=dict)

    def __getitem__(self, split):
        return self.splits[split]


def read_lines(path):
    """Non-empty stripped lines and the number of blank lines skipped."""
    if not os.path.exists(path):
        raise CorpusError(f"missing corpus file {path}")
    with open(path, encoding="utf-8") as fh:
        raw = fh.read().splitlines()
    lines = [ln.strip() for ln in raw if ln.strip()]
    skipped = len(raw) - len(lines)
    if not lines:
        raise CorpusError(f"corpus file {path} is empty")
    if skipped:
        log.warning("%s: skipped %d empty line(s)", path, skipped)
    return lines, skipped


def documents_from_lines(lines, vocab, max_len):
    return [Document(vocab.encode(ln.split()[:max_len]), min(len(ln.split()), max_len)) for ln in lines]


def load_corpus(path, vocab_size_cap, max_len, vocab=None, splits=SPLITS):
    """Load ``path.<split>`` files; the vocabulary comes from train unless given."""
    if vocab_size_cap < 1 or max_len < 1:
        raise CorpusError("vocab_size_cap and max_len must be positive")
    texts, skipped = {}, {}
    for split in splits:
        texts[split], skipped[split] = read_lines(f"{path}.{split}")
    if vocab is None:
        if "train" not in texts:
            texts["train"], skipped["train"] = read_lines(f"{path}.train")
        vocab = Vocab.build(texts["train"], vocab_size_cap)
    docs = {s: documents_from_lines(texts[s], vocab, max_len) for s in splits}
    return Corpus(vocab, docs, skipped)


def to_bow(doc, vocab_size):
    """Presence indicator over the vocabulary; UNK and reserved ids stay 0."""
    bow = np.zeros(int(vocab_size))
    for i in doc.ids:
        if i >= len(RESERVED):
            bow[i] = 1.0
    if not bow.any():
        raise CorpusError("document has no in-vocabulary tokens")
    return bow


def swap_perturb(doc, p, rng):
    """Swap disjoint adjacent pairs (0,1), (2,3), ... each with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"swap probability must be in [0, 1], got {p}")
    ids = list(doc.ids)
    for i in range(0, len(ids) - 1, 2):
        if rng.random() < p:
            ids[i], ids[i + 1] = ids[i + 1], ids[i]
    return Document(ids, doc.raw_len)


# -- synthetic corpora -----------------------------------------------------------

COLLAPSE_DEFAULTS = dict(n_templates=4, n_themes=4, skeleton_len=6, n_slots=4,
                         theme_words=6, shared_words=4, theme_prob=0.8,
                         train=2000, dev=300, test=300)
TOPIC_DEFAULTS = dict(n_topics=8, vocab=160, words_per_topic=20, topic_mass=0.85,
                      doc_len_min=15, doc_len_max=40, concentration=0.1,
                      train=2000, dev=300, test=300)


@dataclass
class CollapseGrammar:
    """Sentences = template (token order) x theme (noise-word distribution).

    Every template is a permutation of the same skeleton tokens plus slot
    positions, so the template is invisible to a bag of words and only
    recoverable from word order. Slots are filled from a theme-specific pool
    mixed with a shared pool.
    """

    templates: list
    slot_probs: np.ndarray  # (n_themes, n_noise_words)
    noise_words: list

    @classmethod
    def generate(cls, rng, n_templates, n_themes, skeleton_len, n_slots, theme_words,
                 shared_words, theme_prob):
        skeleton = [f"w{i}" for i in range(skeleton_len)]
        items = skeleton + [None] * n_slots
        templates, seen = [], set()
        while len(templates) < n_templates:
            order = tuple(items[i] for i in rng.permutation(len(items)))
            if order not in seen:
                seen.add(order)
                templates.append(list(order))
        n_noise = n_themes * theme_words + shared_words
        noise = [f"n{i}" for i in range(n_noise)]
        probs = np.zeros((n_themes, n_noise))
        for j in range(n_themes):
            probs[j, j * theme_words:(j + 1) * theme_words] = theme_prob / theme_words
            if shared_words:
                probs[j, n_themes * theme_words:] = (1.0 - theme_prob) / shared_words
            else:
                probs[j, j * theme_words:(j + 1) * theme_words] = 1.0 / theme_words
        return cls(templates, probs, noise)

    @property
    def n_latent(self):
        return len(self.templates) * self.slot_probs.shape[0]

    def sample(self, rng):
        k = int(rng.integers(len(self.templates)))
        j = int(rng.integers(self.slot_probs.shape[0]))
        words = []
        for item in self.templates[k]:
            if item is None:
                item = self.noise_words[int(rng.choice(len(self.noise_words), p=self.slot_probs[j]))]
            words.append(item)
        return words, k * self.slot_probs.shape[0] + j

    def entropies(self):
        """``(unigram entropy per token, entropy per token given the latent id)`` in nats.

        The conditional figure is the entropy of a whole sentence given its
        (template, theme) id divided by its length; the unigram figure is the
        entropy of the marginal token distribution.
        """
        length = len(self.templates[0])
        n_slots = sum(item is None for item in self.templates[0])
        skeleton = [t for t in self.templates[0] if t is not None]
        marginal = collections.Counter()
        for t in skeleton:
            marginal[t] += 1.0 / length
        slot_marginal = self.slot_probs.mean(axis=0)
        for w, p in zip(self.noise_words, slot_marginal):
            marginal[w] += p * n_slots / length
        unigram = -sum(p * math.log(p) for p in marginal.values() if p > 0)
        slot_h = [-sum(p * math.log(p) for p in row if p > 0) for row in self.slot_probs]
        conditional = n_slots * float(np.mean(slot_h)) / length
        return unigram, conditional


@dataclass
class TopicModel:
    topics: np.ndarray  # (n_topics, vocab)
    concentration: float
    doc_len: tuple

    @classmethod
    def generate(cls, rng, n_topics, vocab, words_per_topic, topic_mass, doc_len_min,
                 doc_len_max, concentration):
        topics = np.full((n_topics, vocab), (1.0 - topic_mass) / vocab)
        for k in range(n_topics):
            own = rng.choice(vocab, size=words_per_topic, replace=False)
            topics[k, own] += topic_mass * rng.dirichlet(np.ones(words_per_topic))
        topics /= topics.sum(axis=1, keepdims=True)
        return cls(topics, concentration, (doc_len_min, doc_len_max))

    def sample(self, rng):
        n_topics = self.topics.shape[0]
        if n_topics == 1:
            mix = np.ones(1)
        else:
            mix = rng.dirichlet(np.full(n_topics, self.concentration))
        length = int(rng.integers(self.doc_len[0], self.doc_len[1] + 1))
        dist = mix @ self.topics
        ids = rng.choice(dist.shape[0], size=length, p=dist / dist.sum())
        return [f"t{i}" for i in ids], int(np.argmax(mix))


def synth_corpus(kind, seed, out_dir, prefix="corpus", **params):
    """Write a seeded synthetic corpus plus ``<split>.latent.csv`` sidecars.

    Returns the path prefix accepted by :func:`load_corpus`.
    """
    defaults = {"collapse": COLLAPSE_DEFAULTS, "topic": TOPIC_DEFAULTS}.get(kind)
    if defaults is None:
        raise ValueError(f"unknown synthetic corpus kind {kind!r}")
    unknown = set(params) - set(defaults)
    if unknown:
        raise ValueError(f"unknown parameters for {kind}: {sorted(unknown)}")
    opts = {**defaults, **params}
    rng = np.random.default_rng(seed)
    if kind == "collapse":
        gen = CollapseGrammar.generate(rng, opts["n_templates"], opts["n_themes"],
                                       opts["skeleton_len"], opts["n_slots"], opts["theme_words"],
                                       opts["shared_words"], opts["theme_prob"])
    else:
        gen = TopicModel.generate(rng, opts["n_topics"], opts["vocab"], opts["words_per_topic"],
                                  opts["topic_mass"], opts["doc_len_min"], opts["doc_len_max"],
                                  opts["concentration"])
    os.makedirs(out_dir, exist_ok=True)
    base = os.path.join(out_dir, prefix)
    for split in SPLITS:
        lines, latents = [], []
        for _ in range(int(opts[split])):
            words, latent = gen.sample(rng)
            lines.append(" ".join(words))
            latents.append(latent)
        atomic_write_text(f"{base}.{split}", "".join(ln + "\n" for ln in lines))
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["example_index", "latent_id"])
        writer.writerows(enumerate(latents))
        atomic_write_text(f"{base}.{split}.latent.csv", buf.getvalue())
    return base


def read_latent_ids(path):
    with open(path, encoding="utf-8") as fh:
        return [int(row["latent_id"]) for row in csv.DictReader(fh)]
