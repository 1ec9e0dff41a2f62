"""Dispersion table, BoW <-> code probes and swap sensitivity."""
import math

import numpy as np
import pytest

from vmfvae import corpus as C
from vmfvae import probes as P
from vmfvae.distributions import vmf_kl_uniform
from vmfvae.errors import CorpusError, DomainError
from vmfvae.models import Nvrnn, NvrnnConfig
from vmfvae.specialfn import bessel_ratio


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    path = C.synth_corpus("collapse", 2, str(tmp_path_factory.mktemp("c")), train=20, dev=10, test=120)
    return C.load_corpus(path, 200, 50)


@pytest.fixture(scope="module")
def model(corpus):
    return Nvrnn(NvrnnConfig(len(corpus.vocab), embed_dim=4, hidden=8, latent_dim=4, kappa=20.0), 3)


class TestKappaStats:
    def test_rows_sorted_and_monotone(self):
        rows = P.kappa_stats([10, 3], [100.0, 0.0, 10.0, 1.0], 10 ** 4, seed=0)
        assert [(r.d, r.kappa) for r in rows] == [(d, k) for d in (3, 10) for k in (0.0, 1.0, 10.0, 100.0)]
        for d in (3, 10):
            sub = [r for r in rows if r.d == d]
            assert sub[0].kl == 0.0
            assert all(a.kl <= b.kl and a.mean_cos <= b.mean_cos for a, b in zip(sub, sub[1:]))

    def test_kl_column_is_library_kl(self):
        for r in P.kappa_stats([5], [0.5, 20.0], 10 ** 4, seed=1):
            assert r.kl == vmf_kl_uniform(5, r.kappa)
            assert -1.0 <= r.mean_cos <= 1.0

    def test_mean_cos_matches_ratio(self):
        for r in P.kappa_stats([3, 16], [2.0, 50.0], 10 ** 4, seed=2):
            assert abs(r.mean_cos - bessel_ratio(r.d, r.kappa)) <= 3.0 * r.stderr + 1e-12
            assert r.error_bar == 3.0 * r.stderr

    def test_deterministic(self):
        a = P.kappa_stats([4], [1.0, 9.0], 10 ** 4, seed=5)
        b = P.kappa_stats([4], [9.0, 1.0], 10 ** 4, seed=5)
        assert a == b

    def test_min_samples(self):
        with pytest.raises(DomainError):
            P.kappa_stats([3], [1.0], 100, seed=0)

    def test_csv(self):
        text = P.format_csv(P.KAPPA_HEADER, [r.as_tuple() for r in P.kappa_stats([3], [0.0], 10 ** 4, 0)])
        header, row = text.splitlines()
        assert header == "d,kappa,kl,mean_cos,stderr"
        assert row.split(",")[:3] == ["3", "0.0", "0.0"]


class TestProbeVectors:
    def data(self, n=160, d=4, v=12, seed=0):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((n, d))
        y = (x @ rng.standard_normal((d, v)) > 0).astype(float)
        return x, y

    def test_identity_mode(self):
        x, _ = self.data()
        cos, n, skipped, _ = P.probe_vectors(x, None, seed=0, mode="identity")
        assert cos >= 0.99 and n == 32 and skipped == 0

    def test_shuffled_control(self):
        x, y = self.data()
        cos, _, _, _ = P.probe_vectors(x, y, seed=0, mode="shuffled")
        assert cos < 0.2

    def test_learnable_map_beats_shuffled(self):
        x, y = self.data()
        real = P.probe_vectors(x, y, seed=0)[0]
        assert real > P.probe_vectors(x, y, seed=0, mode="shuffled")[0] + 0.3

    def test_zero_targets_skipped(self):
        x, y = self.data()
        y[:5] = 0.0
        _, n, skipped, _ = P.probe_vectors(x, y, seed=0, epochs=3)
        assert skipped >= 5 and n + skipped - 5 <= 155

    def test_deterministic(self):
        x, y = self.data()
        assert P.probe_vectors(x, y, seed=4, epochs=20) == P.probe_vectors(x, y, seed=4, epochs=20)

    def test_errors(self):
        x, y = self.data(n=8)
        with pytest.raises(CorpusError):
            P.probe_vectors(x, y, seed=0)
        with pytest.raises(ValueError):
            P.probe_vectors(x, y, seed=0, mode="oracle")

    def test_bow_code_probe_fields(self, model, corpus):
        res = P.bow_code_probe(model, corpus["test"], "code_to_bow", epochs=5)
        assert res.direction == "code_to_bow" and res.mode == "model"
        assert res.n_examples == 24 and res.epochs_run <= 5
        assert -1.0 <= res.mean_cosine <= 1.0
        with pytest.raises(ValueError):
            P.bow_code_probe(model, corpus["test"], "sideways")


class TestSwapSensitivity:
    def test_p_zero_exactly_one(self, model, corpus):
        point = P.swap_sensitivity(model, corpus["test"], [0.0])[0]
        assert point.mean_cos == 1.0 and point.stderr == 0.0

    def test_curve_nonincreasing_within_noise(self, model, corpus):
        curve = P.swap_sensitivity(model, corpus["test"], np.linspace(0, 1, 6), n_repeats=3)
        assert curve[-1].mean_cos < 1.0
        for a, b in zip(curve, curve[1:]):
            assert b.mean_cos <= a.mean_cos + 3.0 * math.hypot(a.stderr, b.stderr)

    def test_threads_match(self, model, corpus):
        grid = [0.0, 0.5, 1.0]
        one = P.swap_sensitivity(model, corpus["test"], grid, n_repeats=2, seed=3, threads=1, chunk_size=16)
        four = P.swap_sensitivity(model, corpus["test"], grid, n_repeats=2, seed=3, threads=4, chunk_size=16)
        assert one == four

    def test_single_token_documents_skipped(self, model):
        docs = [C.Document((4,), 1), C.Document((4, 5, 6), 3), C.Document((5, 4), 2)]
        assert P.swap_sensitivity(model, docs, [0.5])[0].n_examples == 2
        with pytest.raises(CorpusError):
            P.swap_sensitivity(model, docs[:1], [0.5])

    def test_bad_probability(self, model, corpus):
        with pytest.raises(ValueError):
            P.swap_sensitivity(model, corpus["test"], [1.5])

    def test_untrained_copy(self, model):
        fresh = P.untrained_copy(model, seed=99)
        assert fresh.config == model.config
        assert not np.array_equal(fresh.params["enc.mu.W"].values, model.params["enc.mu.W"].values)
        same = P.untrained_copy(model)
        assert np.array_equal(same.params["enc.mu.W"].values, model.params["enc.mu.W"].values)
