#!/usr/bin/env python3
"""
Embedding Service - Penultimate features, PCA and exact t-SNE

Features are the global-average-pool output feeding the final dense layer.
They are reduced with PCA (eigendecomposition of the sample covariance) and
laid out in 2-D with exact O(N^2) t-SNE: per-point Gaussian bandwidths by
bisection on entropy, symmetrized affinities, a Student-t (1 d.o.f.) kernel
and gradient descent with momentum and per-coordinate gains.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from matplotlib.figure import Figure
from scipy.spatial.distance import pdist, squareform
from tqdm import tqdm

from config.color_scheme import COLORS, class_order
from controllers.file_handler import FileHandler
from core.models import EmbeddingSet, ManifestRecord, ModelCheckpoint, PreprocPolicy, TsneConfig
from core.network import MiniXception
from services.dataset_service import prepare_batch

logger = logging.getLogger(__name__)

DEFAULT_PCA_DIM = 50
DEFAULT_CAP_PER_CLASS = 1000
ENTROPY_TOLERANCE = 1e-4
MIN_GAIN = 0.01
_TINY = 1e-12


# ============================================================================
# FEATURE EXPORT
# ============================================================================

def cap_records(records: Sequence[ManifestRecord], cap_per_class: int,
                seed: int = 0) -> List[ManifestRecord]:
    """At most cap_per_class records of each label, a seeded subset in manifest order"""
    keep = set()
    by_label: Dict[str, List[int]] = {}
    for index, record in enumerate(records):
        by_label.setdefault(record.label, []).append(index)
    for k, label in enumerate(sorted(by_label)):
        members = by_label[label]
        if len(members) > cap_per_class:
            rng = np.random.default_rng([seed, k])
            members = [members[i] for i in rng.choice(len(members), cap_per_class, replace=False)]
        keep.update(members)
    return [r for i, r in enumerate(records) if i in keep]


def extract_embeddings(ckpt: ModelCheckpoint, records: Sequence[ManifestRecord],
                       cap_per_class: int = DEFAULT_CAP_PER_CLASS,
                       policy: Optional[PreprocPolicy] = None, seed: int = 0,
                       batch_size: int = 32, threads: int = 1,
                       model: Optional[MiniXception] = None) -> EmbeddingSet:
    """
    Penultimate-layer vectors for up to cap_per_class records per class

    Args:
        ckpt: Detection or attribution checkpoint
        records: Source records
        cap_per_class: Maximum vectors per label
        policy: Preprocessing (defaults to the checkpoint's)
        seed: Subset seed when a class exceeds the cap
        batch_size: Records per forward pass
        threads: Feature workers
        model: Prebuilt model for the checkpoint

    Returns:
        EmbeddingSet of width equal to the model's last exit width
    """
    if model is None:
        model = MiniXception(ckpt.arch, seed=0)
        model.load_state_dict(ckpt.params)
    policy = policy or ckpt.policy
    chosen = cap_records(records, cap_per_class, seed)

    vectors = []
    for start in tqdm(range(0, len(chosen), batch_size), desc="Embedding", unit="batch",
                      disable=len(chosen) <= batch_size):
        features = prepare_batch(chosen[start:start + batch_size], policy, threads)
        _, pooled = model.forward(features, record=False, return_features=True)
        vectors.append(pooled.astype(np.float64))

    width = ckpt.arch.feature_width
    matrix = np.concatenate(vectors, axis=0) if vectors else np.zeros((0, width))
    logger.info("Extracted %d embeddings of width %d", matrix.shape[0], width)
    return EmbeddingSet(vectors=matrix, labels=[r.label for r in chosen],
                        source_ids=[r.path for r in chosen])


# ============================================================================
# PCA
# ============================================================================

def pca_reduce(embeddings: EmbeddingSet, out_dim: int = DEFAULT_PCA_DIM,
               rank_tolerance: float = 1e-10) -> EmbeddingSet:
    """
    Project mean-centered vectors onto the top principal components

    When the data has fewer than out_dim non-negligible components, the
    projection keeps only the available rank and logs a warning.

    Returns:
        EmbeddingSet with components (P x k) and explained_variance (k)
    """
    X = embeddings.vectors
    n, width = X.shape
    if n < 2:
        raise ValueError(f"PCA needs at least 2 vectors, got {n}")
    if out_dim < 1:
        raise ValueError(f"out_dim must be >= 1, got {out_dim}")

    centered = X - X.mean(axis=0)
    covariance = centered.T @ centered / (n - 1)
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    eigenvectors = eigenvectors[:, order]

    rank = int(np.sum(eigenvalues > rank_tolerance * max(eigenvalues[0], _TINY)))
    k = min(out_dim, width)
    if rank < k:
        logger.warning("PCA input has rank %d; reducing to %d dimensions instead of %d",
                       rank, max(rank, 1), out_dim)
        k = max(rank, 1)

    components = eigenvectors[:, :k]
    # Sign convention: largest-magnitude loading of each component is positive
    flip = np.sign(components[np.argmax(np.abs(components), axis=0), np.arange(k)])
    components = components * np.where(flip == 0, 1.0, flip)

    return EmbeddingSet(vectors=centered @ components, labels=list(embeddings.labels),
                        source_ids=list(embeddings.source_ids),
                        explained_variance=eigenvalues[:k].copy(), components=components)


# ============================================================================
# t-SNE
# ============================================================================

def squared_distances(X: np.ndarray) -> np.ndarray:
    return squareform(pdist(np.asarray(X, dtype=np.float64), "sqeuclidean"))


def _calibrate_row(distances: np.ndarray, target: float, tolerance: float,
                   max_steps: int = 200) -> Tuple[np.ndarray, float, float]:
    """Bisection on the precision beta so that the row entropy (nats) hits target"""
    shifted = distances - distances.min()
    beta, low, high = 1.0, 0.0, np.inf
    for _ in range(max_steps):
        weights = np.exp(-shifted * beta)
        total = weights.sum()
        if total <= 0 or not np.isfinite(total):
            weights = np.ones_like(shifted)
            total = weights.sum()
        p = weights / total
        entropy = np.log(total) + beta * float(np.sum(shifted * p))
        diff = entropy - target
        if abs(diff) <= tolerance:
            break
        if diff > 0:
            low = beta
            beta = beta * 2.0 if high == np.inf else 0.5 * (beta + high)
        else:
            high = beta
            beta = 0.5 * (beta + low)
    return p, beta, entropy


def calibrate_affinities(D: np.ndarray, perplexity: float,
                         tolerance: float = ENTROPY_TOLERANCE,
                         threads: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """
    Conditional affinities p(j | i) matching a perplexity

    Args:
        D: (N, N) squared distances
        perplexity: Target perplexity (entropy = log(perplexity))

    Returns:
        (conditional P with zero diagonal, achieved entropy per row)
    """
    n = D.shape[0]
    target = np.log(perplexity)

    def _row(i: int):
        others = np.delete(D[i], i)
        return _calibrate_row(others, target, tolerance)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_row, range(n)))
    else:
        rows = [_row(i) for i in range(n)]

    P = np.zeros((n, n))
    entropies = np.zeros(n)
    for i, (p, _, entropy) in enumerate(rows):
        P[i, np.arange(n) != i] = p
        entropies[i] = entropy
    return P, entropies


def joint_probabilities(D: np.ndarray, perplexity: float, threads: int = 1) -> np.ndarray:
    """Symmetrized affinities (P + P^T) / 2N, floored at a tiny positive value"""
    conditional, _ = calibrate_affinities(D, perplexity, threads=threads)
    P = (conditional + conditional.T) / (2.0 * D.shape[0])
    np.fill_diagonal(P, 0.0)
    return np.maximum(P, _TINY)


def _student_t(Y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Unnormalized kernel 1 / (1 + |yi - yj|^2) with zero diagonal, and normalized Q"""
    kernel = 1.0 / (1.0 + squared_distances(Y))
    np.fill_diagonal(kernel, 0.0)
    Q = np.maximum(kernel / max(kernel.sum(), _TINY), _TINY)
    return kernel, Q


def kl_divergence(P: np.ndarray, Y: np.ndarray) -> float:
    """KL(P || Q) of a layout; depends only on pairwise distances in Y"""
    _, Q = _student_t(Y)
    mask = ~np.eye(P.shape[0], dtype=bool)
    return float(np.sum(P[mask] * np.log(P[mask] / Q[mask])))


@dataclass
class TsneResult:
    """2-D layout with the KL divergence after every iteration"""
    layout: np.ndarray
    kl_history: List[float]


def tsne(embeddings: Union[EmbeddingSet, np.ndarray], cfg: Optional[TsneConfig] = None,
         threads: int = 1, show_progress: bool = False) -> TsneResult:
    """
    Exact t-SNE to two dimensions

    Raises:
        ValueError: perplexity >= (N - 1) / 3
    """
    cfg = cfg or TsneConfig()
    X = embeddings.vectors if isinstance(embeddings, EmbeddingSet) else np.asarray(embeddings)
    n = X.shape[0]
    cfg.check_feasible(n)

    P = joint_probabilities(squared_distances(X), cfg.perplexity, threads)
    rng = np.random.default_rng(cfg.seed)
    Y = rng.normal(0.0, 1e-4, size=(n, 2))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)

    history = []
    for it in tqdm(range(cfg.iterations), desc="t-SNE", unit="it", disable=not show_progress):
        exaggeration = cfg.early_exaggeration if it < cfg.exaggeration_iterations else 1.0
        momentum = cfg.initial_momentum if it < cfg.exaggeration_iterations else cfg.final_momentum

        kernel, Q = _student_t(Y)
        weights = (exaggeration * P - Q) * kernel
        gradient = 4.0 * (weights.sum(axis=1)[:, None] * Y - weights @ Y)

        same_sign = (gradient > 0) == (update > 0)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.maximum(gains, MIN_GAIN, out=gains)
        update = momentum * update - cfg.learning_rate * gains * gradient
        Y = Y + update
        Y = Y - Y.mean(axis=0)

        history.append(kl_divergence(P, Y))

    if history:
        logger.info("t-SNE on %d points: final KL %.5f", n, history[-1])
    return TsneResult(layout=Y, kl_history=history)


# ============================================================================
# OUTPUTS
# ============================================================================

def plot_embedding(layout: np.ndarray, labels: Sequence[str], out_path: Union[str, Path],
                   title: str = "t-SNE") -> Tuple[Path, List[str]]:
    """
    Scatter plot with one fixed color per class and a legend

    Returns:
        (path written, legend labels)

    Raises:
        ValueError: empty layout, or labels do not match the layout
    """
    layout = np.asarray(layout)
    if layout.size == 0 or len(labels) == 0:
        raise ValueError("Cannot plot an empty layout")
    if layout.shape != (len(labels), 2):
        raise ValueError(f"Layout shape {layout.shape} does not match {len(labels)} labels")

    classes = class_order(labels)
    colors = COLORS.class_colors(classes)
    labels = np.asarray(labels)

    fig = Figure(figsize=(6, 6))
    ax = fig.add_subplot(1, 1, 1)
    for name in classes:
        points = layout[labels == name]
        ax.scatter(points[:, 0], points[:, 1], s=6, color=colors[name], label=name)
    ax.set_title(title)
    ax.set_xticks([])
    ax.set_yticks([])
    legend = ax.legend(loc="best", markerscale=2, frameon=False)

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=150, bbox_inches="tight")
    return out_path, [text.get_text() for text in legend.get_texts()]


def save_embeddings(embeddings: EmbeddingSet, path: Union[str, Path]) -> Path:
    """JSON lines of (id, label, vector)"""
    return FileHandler.write_jsonl(path, (
        {"id": sid, "label": label, "vector": [float(v) for v in vector]}
        for sid, label, vector in zip(embeddings.source_ids, embeddings.labels, embeddings.vectors)
    ))


def save_layout(layout: np.ndarray, embeddings: EmbeddingSet, path: Union[str, Path]) -> Path:
    """CSV of (id, label, x, y)"""
    return FileHandler.write_csv(path, ("id", "label", "x", "y"), (
        (sid, label, repr(float(x)), repr(float(y)))
        for sid, label, (x, y) in zip(embeddings.source_ids, embeddings.labels, layout)
    ))
