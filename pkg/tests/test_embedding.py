#!/usr/bin/env python3
"""Test embedding export, PCA and exact t-SNE"""

import logging
import tempfile
from pathlib import Path

import numpy as np
import pytest
from scipy.spatial.distance import pdist

from config.color_scheme import class_order
from core.imagecore import encode_png
from core.models import (
    ArchConfig, EmbeddingSet, ManifestRecord, ModelCheckpoint, PixelImage, PreprocPolicy,
    TsneConfig,
)
from core.network import build
from services.embedding_service import (
    calibrate_affinities, cap_records, extract_embeddings, joint_probabilities, kl_divergence,
    pca_reduce, plot_embedding, save_embeddings, save_layout, squared_distances, tsne,
)


def _embedding(vectors, label="real"):
    n = len(vectors)
    return EmbeddingSet(vectors=vectors, labels=[label] * n, source_ids=[str(i) for i in range(n)])


def _blobs(per_blob=25, width=10, spacing=20.0, seed=0):
    rng = np.random.default_rng(seed)
    vectors, labels = [], []
    for k in range(4):
        center = np.zeros(width)
        center[k] = spacing
        vectors.append(center + rng.normal(size=(per_blob, width)))
        labels += [f"class{k}"] * per_blob
    vectors = np.concatenate(vectors)
    return EmbeddingSet(vectors=vectors, labels=labels,
                        source_ids=[str(i) for i in range(len(labels))])


def test_pca_components_orthonormal():
    """Test component columns are orthonormal and explained variance is sorted"""
    rng = np.random.default_rng(0)
    reduced = pca_reduce(_embedding(rng.normal(size=(200, 20)) * np.arange(1, 21)), out_dim=5)
    C = reduced.components
    assert C.shape == (20, 5)
    assert np.allclose(C.T @ C, np.eye(5), atol=1e-6)
    assert np.all(np.diff(reduced.explained_variance) <= 0)
    assert reduced.vectors.shape == (200, 5)

    print("✓ PCA orthonormality test passed")


def test_pca_preserves_plane_distances():
    """Test data on a 2-D plane keeps its pairwise distances and warns on low rank"""
    rng = np.random.default_rng(1)
    basis, _ = np.linalg.qr(rng.normal(size=(10, 2)))
    plane = rng.normal(size=(60, 2)) * [5.0, 2.0]
    X = plane @ basis.T + rng.normal(size=10)

    reduced = pca_reduce(_embedding(X), out_dim=2)
    assert np.allclose(pdist(reduced.vectors), pdist(X), atol=1e-8)

    class _Capture(logging.Handler):
        def __init__(self):
            super().__init__()
            self.messages = []

        def emit(self, record):
            self.messages.append(record.getMessage())

    capture = _Capture()
    logger = logging.getLogger("services.embedding_service")
    logger.addHandler(capture)
    try:
        low_rank = pca_reduce(_embedding(X), out_dim=50)
    finally:
        logger.removeHandler(capture)
    assert low_rank.vectors.shape == (60, 2)
    assert any("rank 2" in m for m in capture.messages)

    print("✓ PCA plane distance test passed")


def test_pca_full_rank_keeps_total_variance():
    """Test keeping every component preserves the total variance"""
    rng = np.random.default_rng(2)
    X = rng.normal(size=(80, 6))
    reduced = pca_reduce(_embedding(X), out_dim=6)
    assert reduced.explained_variance.sum() == pytest.approx(np.var(X, axis=0, ddof=1).sum())
    assert np.allclose(pdist(reduced.vectors), pdist(X), atol=1e-8)

    with pytest.raises(ValueError):
        pca_reduce(_embedding(X[:1]))

    print("✓ PCA total variance test passed")


def test_calibration_hits_perplexity():
    """Test every row entropy matches log(perplexity) within 1e-4"""
    rng = np.random.default_rng(3)
    D = squared_distances(rng.normal(size=(40, 5)))
    P, entropies = calibrate_affinities(D, perplexity=5.0, threads=2)

    assert np.allclose(P.sum(axis=1), 1.0)
    assert not np.diag(P).any()
    assert np.all(np.abs(entropies - np.log(5.0)) < 1e-4)
    off = P[~np.eye(40, dtype=bool)].reshape(40, 39)
    direct = -np.sum(off * np.log(np.maximum(off, 1e-300)), axis=1)
    assert np.all(np.abs(direct - np.log(5.0)) < 1e-4)

    print("✓ Perplexity calibration test passed")


def test_tsne_separates_blobs():
    """Test four well-separated blobs come out as four clusters and KL decreases"""
    blobs = _blobs()
    cfg = TsneConfig(perplexity=10.0, iterations=500, seed=0)
    result = tsne(blobs, cfg)

    assert result.layout.shape == (100, 2)
    assert len(result.kl_history) == 500
    assert result.kl_history[-1] < result.kl_history[cfg.exaggeration_iterations - 1]

    labels = np.asarray(blobs.labels)
    names = sorted(set(blobs.labels))
    centroids = np.stack([result.layout[labels == name].mean(axis=0) for name in names])
    nearest = np.argmin(((result.layout[:, None, :] - centroids[None]) ** 2).sum(axis=2), axis=1)
    assert [names[i] for i in nearest] == list(labels)

    print("✓ t-SNE blob recovery test passed")


def test_kl_ignores_layout_translation():
    """Test shifting or recentering a layout leaves the KL cost unchanged"""
    blobs = _blobs(per_blob=10)
    P = joint_probabilities(squared_distances(blobs.vectors), perplexity=5.0)
    layout = np.random.default_rng(1).normal(size=(40, 2))
    cost = kl_divergence(P, layout)

    assert cost > 0.0
    assert kl_divergence(P, layout + np.array([250.0, -75.0])) == pytest.approx(cost, rel=1e-9)
    assert kl_divergence(P, layout - layout.mean(axis=0)) == pytest.approx(cost, rel=1e-9)
    assert kl_divergence(P, layout * 3.0) != pytest.approx(cost, rel=1e-9)

    print("✓ KL translation test passed")


def test_kl_history_after_momentum_switch():
    """Test the recorded KL matches the final layout and keeps falling after the switch"""
    blobs = _blobs(per_blob=15)
    cfg = TsneConfig(perplexity=8.0, iterations=500, seed=2)
    result = tsne(blobs, cfg)

    P = joint_probabilities(squared_distances(blobs.vectors), cfg.perplexity)
    assert result.kl_history[-1] == pytest.approx(kl_divergence(P, result.layout), rel=1e-9)

    # momentum makes single steps noisy; every 50th iteration must not go up
    switch = cfg.exaggeration_iterations - 1
    checkpoints = [result.kl_history[i] for i in range(switch, cfg.iterations, 50)]
    checkpoints.append(result.kl_history[-1])
    assert all(later <= earlier + 1e-4 for earlier, later in zip(checkpoints, checkpoints[1:]))

    print("✓ KL history test passed")


def test_tsne_identical_points():
    """Test three identical points with perplexity 0.5 give a finite layout"""
    result = tsne(np.ones((3, 4)), TsneConfig(perplexity=0.5, iterations=50))
    assert np.isfinite(result.layout).all()
    assert np.isfinite(result.kl_history).all()

    print("✓ Identical points test passed")


def test_tsne_infeasible_perplexity():
    """Test perplexity at or above (N - 1) / 3 is rejected"""
    with pytest.raises(ValueError):
        tsne(np.random.default_rng(0).normal(size=(10, 3)), TsneConfig(perplexity=3.0))
    with pytest.raises(ValueError):
        TsneConfig(perplexity=0.0).check_feasible(100)

    print("✓ Infeasible perplexity test passed")


def test_cap_records():
    """Test 1500 records of a class are capped to a deterministic 1000"""
    records = [ManifestRecord(path=f"g{i}.png", label="stylegan", group_id=f"g{i}")
               for i in range(1500)]
    records += [ManifestRecord(path=f"r{i}.png", label="real", group_id=f"r{i}") for i in range(10)]

    first = cap_records(records, 1000, seed=4)
    assert sum(r.label == "stylegan" for r in first) == 1000
    assert sum(r.label == "real" for r in first) == 10
    assert first == cap_records(records, 1000, seed=4)
    assert first != cap_records(records, 1000, seed=5)

    order = [records.index(r) for r in first]
    assert order == sorted(order)

    print("✓ Per-class cap test passed")


def test_extract_embeddings():
    """Test exported vectors have the pooled feature width and follow the records"""
    rng = np.random.default_rng(5)
    arch = ArchConfig.preset("micro", 6, "attribution", 3)
    model = build(arch, seed=1)
    ckpt = ModelCheckpoint(arch, ["real", "a", "b"], PreprocPolicy.from_dict({"subset": "hv"}),
                           model.state_dict())
    with tempfile.TemporaryDirectory() as tmp:
        records = []
        for i, label in enumerate(["real", "a", "b", "a"]):
            path = encode_png(PixelImage.from_array(
                rng.integers(0, 256, size=(24, 24, 3), dtype=np.uint8)), Path(tmp) / f"{i}.png")
            records.append(ManifestRecord(path=str(path), label=label, group_id=str(i)))

        emb = extract_embeddings(ckpt, records, batch_size=3, model=model)
        assert emb.vectors.shape == (4, arch.feature_width)
        assert emb.labels == ["real", "a", "b", "a"]
        assert emb.source_ids == [r.path for r in records]

        capped = extract_embeddings(ckpt, records, cap_per_class=1)
        assert sorted(capped.labels) == ["a", "b", "real"]

        rows = save_embeddings(emb, Path(tmp) / "emb.jsonl").read_text().splitlines()
        assert len(rows) == 4
        table = save_layout(np.zeros((4, 2)), emb, Path(tmp) / "layout.csv").read_text()
        assert table.splitlines()[0] == "id,label,x,y"

    print("✓ Embedding export test passed")


def test_plot_embedding():
    """Test the legend lists each class once with real first"""
    layout = np.random.default_rng(6).normal(size=(6, 2))
    labels = ["stylegan", "real", "stylegan", "progan", "real", "progan"]
    assert class_order(labels) == ["real", "stylegan", "progan"]

    with tempfile.TemporaryDirectory() as tmp:
        path, legend = plot_embedding(layout, labels, Path(tmp) / "plot" / "tsne.png")
        assert path.exists() and path.stat().st_size > 0
        assert legend == ["real", "stylegan", "progan"]

        with pytest.raises(ValueError):
            plot_embedding(np.zeros((0, 2)), [], Path(tmp) / "empty.png")
        with pytest.raises(ValueError):
            plot_embedding(layout, labels[:3], Path(tmp) / "short.png")

    print("✓ Plot legend test passed")


if __name__ == "__main__":
    print("Testing embedding_service.py...")
    test_pca_components_orthonormal()
    test_pca_preserves_plane_distances()
    test_pca_full_rank_keeps_total_variance()
    test_calibration_hits_perplexity()
    test_tsne_separates_blobs()
    test_kl_ignores_layout_translation()
    test_kl_history_after_momentum_switch()
    test_tsne_identical_points()
    test_tsne_infeasible_perplexity()
    test_cap_records()
    test_extract_embeddings()
    test_plot_embedding()
    print("\n✅ All embedding tests passed!")
