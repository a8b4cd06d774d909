"""Smoke tests for the python bindings, cross-checked against numpy."""

import json
import math

import numpy as np
import pytest

import threadsdesk as thd


def test_stable_softmax():
    out = thd.stable_softmax([0.0, math.log(3.0)])
    assert out[0] == pytest.approx(0.25, abs=1e-12)
    assert out[1] == pytest.approx(0.75, abs=1e-12)
    big = thd.stable_softmax([1000.0, 1000.0])
    assert big[0] == pytest.approx(0.5)


def test_singular_values_and_rankme_match_numpy():
    rng = np.random.default_rng(1)
    h = rng.normal(size=(12, 5))
    got = np.array(thd.singular_values(h))
    want = np.linalg.svd(h, compute_uv=False)
    assert np.allclose(got, want, atol=1e-8)

    sv = want
    p = sv / sv.sum() + 1e-7
    want_rank = math.exp(-(p * np.log(p)).sum())
    assert thd.rankme(h) == pytest.approx(want_rank, abs=1e-6)

    assert thd.rankme(np.eye(4)) == pytest.approx(4.0, abs=1e-3)


def test_infonce_identical_rows_is_log_b():
    u = np.ones((4, 3))
    loss, gu, gv = thd.infonce_loss(u, u, 0.07)
    assert loss == pytest.approx(math.log(4.0), abs=1e-12)
    assert gu.shape == (4, 3)
    assert gv.shape == (4, 3)


def test_metrics_against_reference_values():
    assert thd.auc_binary([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75)
    assert thd.balanced_accuracy([0, 1, 1], [0, 0, 1]) == pytest.approx(0.75)
    assert thd.quadratic_weighted_kappa([2, 1, 0], [0, 1, 2], 3) == pytest.approx(-1.0)
    assert thd.concordance_index([2, 1, 2], [1, 2, 3], [1, 0, 1]) == pytest.approx(0.75)

    refs = np.array([[1.0], [2.0], [3.0]])
    assert thd.map_at_k(np.array([[0.0]]), [7], refs, [7, 8, 7], 3) == pytest.approx(5 / 9)


def test_clustering():
    x = np.concatenate([np.random.default_rng(2).normal(size=(20, 2)),
                        np.random.default_rng(3).normal(size=(20, 2)) + 25.0])
    truth = [0] * 20 + [1] * 20
    assign = thd.kmeans(x, 2, seed=4)
    ari, mi = thd.clustering_agreement(assign, truth)
    assert ari == pytest.approx(1.0)
    assert mi == pytest.approx(math.log(2.0), abs=1e-9)


def test_encoders_shapes_and_permutation_invariance():
    model = thd.init_model(mode="genomic", patch_dim=16, hidden_dim=8, heads=2,
                           output_dim=8, gene_count=4, seed=3)
    rng = np.random.default_rng(5)
    bag = rng.normal(size=(6, 16))
    emb = thd.Model.encode_slide(model, bag)
    assert emb.shape == (1, 8)
    shuffled = bag[rng.permutation(6)]
    emb2 = model.encode_slide(shuffled)
    assert np.allclose(emb, emb2, atol=1e-9)

    multi_hot = (rng.uniform(size=28) < 0.3).astype(float)
    mol = model.encode_genomic(multi_hot)
    assert mol.shape == (1, 8)


def test_model_checkpoint_roundtrip(tmp_path):
    model = thd.init_model(mode="genomic", patch_dim=10, hidden_dim=6, heads=1,
                           output_dim=6, gene_count=3, seed=8)
    path = str(tmp_path / "model.thck")
    model.save(path)
    loaded = thd.load_model(path)
    bag = np.random.default_rng(9).normal(size=(4, 10))
    a = model.encode_slide(bag)
    b = loaded.encode_slide(bag)
    assert np.allclose(a, b, atol=1e-6)  # f32 storage boundary


def test_generate_dataset_and_probe():
    cfg = thd.GeneratorConfig()
    cfg.n_samples = 40
    cfg.n_classes = 2
    cfg.latent_dim = 4
    cfg.patch_dim = 8
    cfg.bag_min = 2
    cfg.bag_max = 4
    cfg.gene_count = 6
    cfg.noise = 0.3
    cfg.seed = 11
    samples = thd.generate_dataset(cfg)
    assert len(samples) == 40
    labels = [s["label"] for s in samples]
    assert sorted(set(labels)) == [0, 1]

    means = np.stack([s["patches"].mean(axis=0) for s in samples])
    w, b = thd.fit_logistic_probe(means, labels, cost=0.5, max_iter=10000)
    proba = thd.probe_predict_proba(w, b, means)
    pred = proba.argmax(axis=1).tolist()
    assert thd.balanced_accuracy(pred, labels) >= 0.95


def test_coxnet_recovers_negative_time_feature():
    rng = np.random.default_rng(12)
    times = 0.1 + 5.0 * rng.uniform(size=50)
    x = -times.reshape(-1, 1)
    beta = thd.fit_coxnet(x, times.tolist(), [1] * 50, alpha=0.07)
    assert beta[0] > 0.0


def test_defaults_json_carries_protocol_constants():
    defaults = json.loads(thd.default_hyperparameters_json())
    assert defaults["pretrain"]["temperature"] == 0.07
    assert defaults["pretrain"]["patches_per_slide"] == 512
    assert defaults["probe"]["cost"] == 0.5
    assert defaults["finetune"]["lr"] == 2.5e-5
    assert defaults["bootstrap"]["replicates"] == 100


def test_validation_errors_surface_as_value_error():
    with pytest.raises(ValueError):
        thd.stable_softmax([])
    with pytest.raises(ValueError):
        thd.log2_tpm_normalize(-1.0)
