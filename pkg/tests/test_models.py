"""NVDM, NVRNN and RNNLM: ELBO bookkeeping, gradients, training and evaluation."""
import math

import numpy as np
import pytest

from vmfvae import corpus as C
from vmfvae import tensor as T
from vmfvae.distributions import vmf_kl_kappa_gradient, vmf_kl_uniform
from vmfvae.errors import ConfigError, CorpusError, NumericalError, ShapeError
from vmfvae.gradcheck import check_gradients
from vmfvae.models import (
    AnnealSchedule,
    Nvdm,
    NvdmConfig,
    Nvrnn,
    NvrnnConfig,
    Rnnlm,
    RnnlmConfig,
    TrainConfig,
    anneal_weight,
    evaluate,
    load_checkpoint,
    nvdm_forward,
    nvrnn_forward,
    save_checkpoint,
    train,
)
from vmfvae.selftest import TOY_DOCS, check_model_gradients

V = 9


def zero(model, *names):
    for name in names:
        model.params[name].values[...] = 0.0


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    path = C.synth_corpus("collapse", 3, str(out), train=48, dev=40, test=40)
    return C.load_corpus(path, 200, 50)


def small_nvrnn(corpus, **kw):
    cfg = dict(embed_dim=4, hidden=6, latent_dim=3, kappa=10.0, setting="inputless")
    cfg.update(kw)
    return Nvrnn(NvrnnConfig(len(corpus.vocab), **cfg), seed=0)


class TestElbo:
    @pytest.mark.parametrize("family", ["vmf", "gaussian"])
    @pytest.mark.parametrize("kind", ["nvdm", "nvrnn"])
    def test_loss_decomposition(self, family, kind):
        if kind == "nvdm":
            model = Nvdm(NvdmConfig(V, hidden=5, latent_dim=3, family=family, kappa=7.0), 2)
        else:
            model = Nvrnn(NvrnnConfig(V, embed_dim=3, hidden=5, latent_dim=3, family=family, kappa=7.0), 2)
        for w in (0.0, 0.3, 1.0):
            loss, stats, _ = model.forward_docs(list(TOY_DOCS), np.random.default_rng(1), w)
            expected = float(np.mean(w * stats.kl + stats.recon))
            assert loss.item() == pytest.approx(expected, rel=1e-9)
            report = model.report(stats)
            assert report.nll_bound == report.kl + report.recon_nll

    @pytest.mark.parametrize("kind", ["nvdm", "nvrnn"])
    def test_vmf_kl_constant_per_example(self, kind):
        if kind == "nvdm":
            model = Nvdm(NvdmConfig(V, hidden=5, latent_dim=4, kappa=12.0), 0)
        else:
            model = Nvrnn(NvrnnConfig(V, embed_dim=3, hidden=5, latent_dim=4, kappa=12.0), 0)
        _, stats, _ = model.forward_docs(list(TOY_DOCS), np.random.default_rng(0))
        np.testing.assert_allclose(stats.kl, vmf_kl_uniform(4, 12.0), rtol=0, atol=1e-9)

    def test_kl_invariant_to_rotating_mu(self):
        model = Nvrnn(NvrnnConfig(V, embed_dim=3, hidden=5, latent_dim=4, kappa=12.0), 0)
        _, before, _ = model.forward_docs(list(TOY_DOCS), np.random.default_rng(0))
        q, _ = np.linalg.qr(np.random.default_rng(4).standard_normal((4, 4)))
        model.params["enc.mu.W"].values = model.params["enc.mu.W"].values @ q
        model.params["enc.mu.b"].values = model.params["enc.mu.b"].values @ q
        _, after, _ = model.forward_docs(list(TOY_DOCS), np.random.default_rng(0))
        assert np.array_equal(before.kl, after.kl)

    def test_gaussian_kl_zero_with_zeroed_head(self):
        model = Nvdm(NvdmConfig(V, hidden=5, latent_dim=3, family="gaussian"), 0)
        zero(model, "enc.mu.W", "enc.mu.b", "enc.logvar.W", "enc.logvar.b")
        _, stats, _ = model.forward_docs(list(TOY_DOCS), np.random.default_rng(0))
        assert np.all(stats.kl == 0.0)
        model.params["enc.mu.b"].values[0] = 0.1
        _, stats, _ = model.forward_docs(list(TOY_DOCS), np.random.default_rng(0))
        assert np.all(stats.kl > 0.0)


class TestNvdm:
    def test_zero_decoder_gives_uniform_recon(self):
        model = Nvdm(NvdmConfig(V, hidden=5, latent_dim=3), 0)
        zero(model, "dec.W", "dec.b")
        doc = C.Document((4, 5, 4, 6, 1), 5)
        _, report = nvdm_forward(model, C.to_bow(doc, V), np.random.default_rng(0))
        assert report.recon_nll == pytest.approx(3 * math.log(V), rel=1e-14)
        assert report.kl == pytest.approx(vmf_kl_uniform(3, 50.0), abs=1e-9)

    def test_counts_scoring(self):
        model = Nvdm(NvdmConfig(V, hidden=5, latent_dim=3, score="counts"), 0)
        zero(model, "dec.W", "dec.b")
        doc = C.Document((4, 5, 4, 6, 1), 5)
        _, stats, _ = model.forward_docs([doc], np.random.default_rng(0))
        assert stats.recon[0] == pytest.approx(4 * math.log(V), rel=1e-14)

    def test_rejects_all_unk(self):
        model = Nvdm(NvdmConfig(V, hidden=5, latent_dim=3), 0)
        with pytest.raises(CorpusError):
            model.prepare([C.Document((1, 1), 2)])

    def test_encoder_weight_finite_difference(self):
        model = Nvdm(NvdmConfig(V, hidden=5, latent_dim=3, kappa=10.0), 1)
        bow = C.to_bow(TOY_DOCS[0], V)

        def loss_fn():
            return nvdm_forward(model, bow, np.random.default_rng(0), 0.5)[0]

        bad = check_gradients(loss_fn, [model.params["enc.W"]], 1e-4, max_entries=6,
                              rng=np.random.default_rng(2))
        assert not bad

    def test_shape_check(self):
        model = Nvdm(NvdmConfig(V, hidden=5, latent_dim=3), 0)
        with pytest.raises(ShapeError):
            model.forward(np.ones((2, V + 1)), np.random.default_rng(0))


class TestNvrnn:
    def test_inputless_zero_output_layer(self):
        model = Nvrnn(NvrnnConfig(V, embed_dim=3, hidden=5, latent_dim=3, setting="inputless"), 0)
        zero(model, "out.W", "out.b")
        ids = (4, 5, 6, 7)
        _, report = nvrnn_forward(model, ids, np.random.default_rng(0))
        # n tokens plus the end marker
        assert report.recon_nll == pytest.approx((len(ids) + 1) * math.log(V), rel=1e-14)
        assert report.tokens == len(ids) + 1

    @pytest.mark.parametrize("setting", ["standard", "inputless", "standard_bow", "inputless_bow"])
    def test_settings_run_and_differ_in_streams(self, setting):
        model = Nvrnn(NvrnnConfig(V, embed_dim=3, hidden=5, latent_dim=3, setting=setting), 0)
        names = set(model.params)
        assert ("dec.gru.W_x" in names) == setting.startswith("standard")
        assert ("dec.gru.W_bow" in names) == setting.endswith("_bow")
        loss, _, _ = model.forward_docs(list(TOY_DOCS), np.random.default_rng(0))
        assert math.isfinite(loss.item())

    def test_padding_does_not_leak(self):
        model = Nvrnn(NvrnnConfig(V, embed_dim=3, hidden=5, latent_dim=3, family="gaussian"), 0)
        single = [model.forward_docs([d], [np.random.default_rng(i)])[1].recon[0]
                  for i, d in enumerate(TOY_DOCS)]
        rngs = [np.random.default_rng(i) for i in range(len(TOY_DOCS))]
        _, batched, _ = model.forward_docs(list(TOY_DOCS), rngs)
        np.testing.assert_allclose(batched.recon, single, rtol=1e-12)

    def test_rnnlm_equals_nvrnn_with_zeroed_z(self):
        cfg = NvrnnConfig(V, embed_dim=3, hidden=5, latent_dim=3, setting="standard")
        nvrnn = Nvrnn(cfg, 5)
        nvrnn.force_zero_z = True
        lm = Rnnlm(RnnlmConfig(V, embed_dim=3, hidden=5), 5)
        for name, p in lm.params.items():
            assert np.array_equal(p.values, nvrnn.params[name].values), name
        a, _, _ = nvrnn.forward_docs(list(TOY_DOCS), np.random.default_rng(0), 0.0)
        b, _, _ = lm.forward_docs(list(TOY_DOCS), None, 0.0)
        assert a.item() == b.item()

    def test_rnnlm_report(self):
        lm = Rnnlm(RnnlmConfig(V, embed_dim=3, hidden=5), 0)
        _, stats, _ = lm.forward_docs(list(TOY_DOCS), None)
        report = lm.report(stats)
        assert report.kl == 0.0 and report.nll_bound == report.recon_nll
        assert report.perplexity == pytest.approx(math.exp(stats.recon.sum() / stats.tokens.sum()), rel=1e-15)

    def test_toy_model_gradients(self):
        result = check_model_gradients()
        assert result.passed, result.detail


class TestLearnedKappa:
    def make(self):
        cfg = NvrnnConfig(V, embed_dim=3, hidden=5, latent_dim=4, learn_kappa=True, kappa_clip=(5.0, 105.0))
        return Nvrnn(cfg, 0)

    def test_zeroed_head_gives_midpoint(self):
        model = self.make()
        zero(model, "enc.kappa.W", "enc.kappa.b")
        np.testing.assert_allclose(model.kappa_values(list(TOY_DOCS)), 55.0, rtol=1e-15)

    def test_kappa_gradient_is_kl_gradient_only(self):
        model = self.make()
        zero(model, "enc.kappa.W")
        model.params["enc.kappa.b"].values[0] = 0.4
        w = 0.6
        loss, _, _ = model.forward_docs(list(TOY_DOCS), np.random.default_rng(0), w)
        T.backward(loss)
        s = 1.0 / (1.0 + math.exp(-0.4))
        kappa = 5.0 + 100.0 * s
        expected = w * vmf_kl_kappa_gradient(4, kappa) * 100.0 * s * (1 - s)
        assert model.params["enc.kappa.b"].grad[0] == pytest.approx(expected, rel=1e-9)

    def test_requires_vmf(self):
        with pytest.raises(ConfigError):
            NvrnnConfig(V, family="gaussian", learn_kappa=True)
        with pytest.raises(ConfigError):
            NvrnnConfig(V, kappa_clip=(1e-3, 10.0))


class TestAnneal:
    def test_none_and_constant(self):
        assert anneal_weight(AnnealSchedule("none"), 13) == 1.0
        assert anneal_weight(AnnealSchedule("constant", weight=0.2), 7) == 0.2

    def test_sigmoid_shape(self):
        s = AnnealSchedule("sigmoid", warm_epochs=20)
        values = [anneal_weight(s, e) for e in range(40)]
        assert values[10] == 0.5
        assert values[0] <= 0.01 and values[20] >= 0.99
        assert all(v == 1.0 for v in values[21:])
        assert np.all(np.diff(values) >= 0)

    def test_validation(self):
        with pytest.raises(ConfigError):
            AnnealSchedule("constant", weight=0.0)
        with pytest.raises(ValueError):
            anneal_weight(AnnealSchedule(), -1)


class TestTraining:
    def test_bit_identical_logs_and_anneal_column(self, small_corpus, tmp_path):
        logs = []
        schedule = AnnealSchedule("sigmoid", warm_epochs=2)
        for i in range(2):
            model = small_nvrnn(small_corpus, family="gaussian")
            path = tmp_path / f"log{i}.csv"
            result = train(model, small_corpus, TrainConfig(epochs=3, batch_size=16, seed=4), schedule,
                           log_path=str(path))
            logs.append(path.read_bytes())
        assert logs[0] == logs[1]
        assert [r["kl_weight"] for r in result.rows] == [anneal_weight(schedule, e) for e in range(3) for _ in "td"]

    def test_vmf_kl_column_constant(self, small_corpus):
        model = small_nvrnn(small_corpus, kappa=20.0)
        result = train(model, small_corpus, TrainConfig(epochs=3, batch_size=16))
        expected = vmf_kl_uniform(3, 20.0)
        assert all(abs(r["kl"] - expected) <= 1e-9 for r in result.rows)

    def test_best_epoch_restored(self, small_corpus, tmp_path):
        model = small_nvrnn(small_corpus)
        ckpt = tmp_path / "m.ckpt"
        result = train(model, small_corpus, TrainConfig(epochs=3, batch_size=16), checkpoint_path=str(ckpt))
        dev = [r["nll_bound"] for r in result.rows if r["split"] == "dev"]
        assert result.best_epoch == int(np.argmin(dev))
        reloaded, meta = load_checkpoint(str(ckpt))
        assert meta["model"] == "nvrnn"
        again = evaluate(reloaded, small_corpus["dev"], seed=0).report
        assert again.nll_bound == result.best_dev.nll_bound

    def test_lr_decays_after_no_improvement(self, small_corpus):
        model = small_nvrnn(small_corpus)
        result = train(model, small_corpus, TrainConfig(epochs=4, batch_size=16, lr=5.0, lr_decay=0.5))
        dev = [r for r in result.rows if r["split"] == "dev"]
        best = math.inf
        for prev, cur in zip(dev, dev[1:]):
            improved = prev["nll_bound"] < best
            best = min(best, prev["nll_bound"])
            assert cur["lr"] == (prev["lr"] if improved else prev["lr"] * 0.5)

    def test_non_finite_loss_aborts(self, small_corpus):
        model = small_nvrnn(small_corpus)
        model.params["out.b"].values[4] = math.nan
        with pytest.raises(NumericalError, match="epoch 0 batch 0"):
            train(model, small_corpus, TrainConfig(epochs=1))

    def test_single_token_language(self, tmp_path):
        for split in C.SPLITS:
            (tmp_path / f"a.{split}").write_text("a a a\n" * 200)
        corpus = C.load_corpus(str(tmp_path / "a"), 10, 50)
        lm = Rnnlm(RnnlmConfig(len(corpus.vocab), embed_dim=4, hidden=8), 0)
        result = train(lm, corpus, TrainConfig(epochs=20, batch_size=20, lr=0.3))
        assert result.best_dev.perplexity < 1.01
        assert result.best_dev.kl == 0.0


class TestEvaluate:
    def test_sharded_equals_single_threaded(self, small_corpus):
        model = small_nvrnn(small_corpus, family="gaussian")
        docs = small_corpus["test"]
        one = evaluate(model, docs, samples_per_example=2, seed=9, threads=1, chunk_size=7)
        many = evaluate(model, docs, samples_per_example=2, seed=9, threads=4, chunk_size=7)
        assert one.report == many.report
        assert np.array_equal(one.stats.recon, many.stats.recon)

    def test_chunking_does_not_change_result(self, small_corpus):
        model = small_nvrnn(small_corpus)
        a = evaluate(model, small_corpus["test"], seed=1, chunk_size=64).report
        b = evaluate(model, small_corpus["test"], seed=1, chunk_size=5).report
        assert a.kl == b.kl
        assert a.recon_nll == pytest.approx(b.recon_nll, rel=1e-14)

    def test_more_samples_not_worse_beyond_noise(self, small_corpus):
        model = small_nvrnn(small_corpus, family="gaussian")
        docs = small_corpus["test"]
        assert len(docs) >= 30
        one = evaluate(model, docs, 1, seed=2).stats
        many = evaluate(model, docs, 16, seed=3).stats
        diff = many.nll - one.nll
        se = diff.std(ddof=1) / math.sqrt(len(diff))
        assert diff.mean() <= 3 * se

    def test_zero_kl_model(self, small_corpus):
        lm = Rnnlm(RnnlmConfig(len(small_corpus.vocab), embed_dim=4, hidden=6), 0)
        report = evaluate(lm, small_corpus["dev"]).report
        assert report.kl == 0.0 and report.nll_bound == report.recon_nll

    def test_empty_split(self, small_corpus):
        with pytest.raises(CorpusError):
            evaluate(small_nvrnn(small_corpus), [])


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        model = Nvdm(NvdmConfig(V, hidden=5, latent_dim=3, family="gaussian"), 3)
        path = str(tmp_path / "m.ckpt")
        save_checkpoint(model, path, {"note": 1})
        loaded, meta = load_checkpoint(path)
        assert meta["note"] == 1 and loaded.config == model.config
        for name, p in model.params.items():
            assert loaded.params[name].values.tobytes() == p.values.tobytes()

    def test_mismatched_state_rejected(self):
        a = Nvdm(NvdmConfig(V, hidden=5, latent_dim=3), 0)
        b = Nvdm(NvdmConfig(V, hidden=6, latent_dim=3), 0)
        with pytest.raises(ShapeError):
            a.load_state_dict(b.state_dict())
