from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.stats import gaussian_kde
from sklearn.cluster import KMeans
from sklearn.metrics import (
    adjusted_rand_score,
    normalized_mutual_info_score,
    silhouette_samples,
)
from sklearn.metrics.cluster import contingency_matrix

from segfair.cohort.sampling import seeded_rng
from segfair.embedding.tsne import TsneParams, tsne
from segfair.exception.exceptions import EmbeddingParameterError
from segfair.model.reports import ClusterEval, FoldClusterSummary
from segfair.stats.engine import mean_std

logger = logging.getLogger(__name__)

KMEANS_MAX_ITER = 300


def _check_lengths(pred: Sequence, truth: Sequence, minimum: int = 1) -> None:
    if len(pred) != len(truth):
        raise EmbeddingParameterError(f"Longueurs différentes: {len(pred)} vs {len(truth)}")
    if len(pred) < minimum:
        raise EmbeddingParameterError(f"Au moins {minimum} éléments requis")


def silhouette(points: np.ndarray, labels: Sequence) -> float:
    """Silhouette moyenne (euclidienne) ; les points seuls dans leur groupe valent 0."""
    labels = np.asarray(labels)
    _check_lengths(points, labels)
    n_labels = len(np.unique(labels))
    if n_labels < 2:
        raise EmbeddingParameterError("Silhouette indéfinie pour un seul groupe")
    if n_labels == len(labels):
        return 0.0
    return float(np.mean(silhouette_samples(points, labels, metric="euclidean")))


def _farthest_point_init(points: np.ndarray, k: int, seed: int) -> np.ndarray:
    rng = seeded_rng(seed, "kmeans:init")
    chosen = [int(rng.integers(points.shape[0]))]
    nearest = np.linalg.norm(points - points[chosen[0]], axis=1)
    while len(chosen) < k:
        candidates = nearest.copy()
        candidates[chosen] = -1.0
        # égalité -> plus petit indice
        nxt = int(np.argmax(candidates))
        chosen.append(nxt)
        nearest = np.minimum(nearest, np.linalg.norm(points - points[nxt], axis=1))
    return points[chosen]


def kmeans(points: np.ndarray, k: int, seed: int = 0) -> np.ndarray:
    """Lloyd depuis une initialisation par point le plus éloigné (premier point tiré)."""
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if not 1 <= k <= n:
        raise EmbeddingParameterError(f"k={k} hors de [1, {n}]")
    init = _farthest_point_init(points, k, seed)
    model = KMeans(
        n_clusters=k,
        init=init,
        n_init=1,
        max_iter=KMEANS_MAX_ITER,
        tol=0.0,
        algorithm="lloyd",
        random_state=0,
    ).fit(points)
    return model.labels_.astype(int)


def purity(pred: Sequence, truth: Sequence) -> float:
    """Σ_clusters (effectif de la classe majoritaire) / n."""
    _check_lengths(pred, truth)
    table = contingency_matrix(truth, pred)
    return float(table.max(axis=0).sum() / len(pred))


def ari(pred: Sequence, truth: Sequence) -> float:
    _check_lengths(pred, truth, minimum=2)
    return float(adjusted_rand_score(truth, pred))


def nmi(pred: Sequence, truth: Sequence) -> float:
    """I / √(H_pred·H_truth) ; entropie nulle -> 1 si partitions identiques, sinon 0."""
    _check_lengths(pred, truth)
    single_pred = len(np.unique(pred)) == 1
    single_truth = len(np.unique(truth)) == 1
    if single_pred or single_truth:
        return 1.0 if single_pred and single_truth else 0.0
    return float(normalized_mutual_info_score(truth, pred, average_method="geometric"))


@dataclass(frozen=True)
class Density:
    """Histogramme normalisé et KDE gaussienne sur une grille régulière ;
    pas de KDE (None) pour une densité dégénérée."""

    edges: np.ndarray
    density: np.ndarray
    degenerate: bool = False
    kde_grid: Optional[np.ndarray] = None
    kde: Optional[np.ndarray] = None


def density_1d(
    values: Sequence[float], bins: int = 30, kde_points: int = 200
) -> Density:
    """Histogramme normalisé (aire 1) sur [min, max], classes de largeur égale,
    et KDE gaussienne (règle de Scott) sur `kde_points` points de [min, max]."""
    values = np.asarray(values, dtype=float)
    if bins < 1:
        raise EmbeddingParameterError(f"bins doit être ≥ 1: {bins}")
    if kde_points < 2:
        raise EmbeddingParameterError(f"kde_points doit être ≥ 2: {kde_points}")
    if values.size == 0:
        raise EmbeddingParameterError("Densité d'une liste vide")
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        # pic d'une seule classe de largeur 1 centrée sur la valeur
        return Density(np.array([lo - 0.5, hi + 0.5]), np.array([1.0]), degenerate=True)
    density, edges = np.histogram(values, bins=bins, range=(lo, hi), density=True)
    grid = np.linspace(lo, hi, kde_points)
    return Density(edges, density, kde_grid=grid, kde=gaussian_kde(values)(grid))


def evaluate_embedding(
    points: np.ndarray, labels: Sequence, seed: int = 0, k: Optional[int] = None
) -> ClusterEval:
    """Silhouette contre les groupes d'âge ; pureté/ARI/NMI contre un k-means
    à k = nombre de groupes."""
    labels = np.asarray(labels)
    k = k or len(np.unique(labels))
    pred = kmeans(points, k, seed)
    return ClusterEval(
        silhouette=silhouette(points, labels),
        purity=purity(pred, labels),
        ari=ari(pred, labels),
        nmi=nmi(pred, labels),
    )


def evaluate_folds(
    X: np.ndarray,
    labels: Sequence,
    folds: Sequence[int],
    params: Optional[TsneParams] = None,
) -> FoldClusterSummary:
    """t-SNE + métriques sur la validation de chaque pli, puis moyenne ± écart-type."""
    params = params or TsneParams()
    labels = np.asarray(labels)
    folds = np.asarray(folds)
    results = []
    for f in sorted(set(folds.tolist())):
        rows = folds == f
        emb = tsne(X[rows], params).embedding
        results.append(evaluate_embedding(emb, labels[rows], params.seed))
        logger.info("Pli %d: %s", f, results[-1])

    def _summary(pick) -> ClusterEval:
        fields = {}
        for name in ClusterEval.model_fields:
            mean, std = mean_std([getattr(r, name) for r in results])
            fields[name] = mean if pick == "mean" else (std or 0.0)
        return ClusterEval(**fields)

    return FoldClusterSummary(folds=results, mean=_summary("mean"), std=_summary("std"))


def folds_from_manifest(case_ids: Sequence[str], val_folds: Mapping[str, int]) -> np.ndarray:
    missing = [c for c in case_ids if c not in val_folds]
    if missing:
        raise EmbeddingParameterError(f"Cas absents du manifeste: {missing[:10]}")
    return np.array([val_folds[c] for c in case_ids])
