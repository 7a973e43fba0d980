from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.spatial.distance import pdist, squareform
from sklearn.decomposition import PCA

from segfair.cohort.sampling import seeded_rng
from segfair.exception.exceptions import EmbeddingParameterError

logger = logging.getLogger(__name__)

MACHINE_EPSILON = np.finfo(np.double).eps
MIN_POINTS = 5

# Calibrage de la perplexité
ENTROPY_TOL = 1e-5
MAX_BISECTION_STEPS = 50

INIT_STD = 1e-4
KL_TRACE_EVERY = 50


class TsneParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    perplexity: Optional[float] = Field(default=None, gt=0)
    learning_rate: float = Field(default=200.0, gt=0)
    iters: int = Field(default=1500, ge=1)
    init: str = "pca"
    early_exaggeration: float = Field(default=12.0, ge=1.0)
    exaggeration_iters: int = Field(default=250, ge=0)
    momentum_start: float = 0.5
    momentum_final: float = 0.8
    min_gain: float = 0.01
    seed: int = Field(default=0, ge=0, lt=2**64)

    def resolved_perplexity(self, n: int) -> float:
        """Perplexité explicite, sinon n/10 bornée à [5, 50] ; doit rester < (n−1)/3."""
        if n < MIN_POINTS:
            raise EmbeddingParameterError(f"Au moins {MIN_POINTS} points requis, reçu {n}")
        perp = self.perplexity
        if perp is None:
            perp = min(50.0, max(5.0, n / 10.0))
        if not 0.0 < perp < (n - 1) / 3.0:
            raise EmbeddingParameterError(
                f"Perplexité {perp:g} infaisable pour n={n} (doit être < {(n - 1) / 3:.3g})"
            )
        return float(perp)


def check_features(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise EmbeddingParameterError(f"Matrice n×d attendue, forme {X.shape}")
    if not np.all(np.isfinite(X)):
        raise EmbeddingParameterError("Valeurs non finies dans les caractéristiques")
    return X


# -----------------------------
# ACP
@dataclass(frozen=True)
class PcaResult:
    projection: np.ndarray
    components: np.ndarray = field(repr=False)
    mean: np.ndarray = field(repr=False)
    explained_variance: np.ndarray = field(repr=False)
    degenerate: bool = False


def pca(X: np.ndarray, ncomp: int) -> PcaResult:
    """Projection centrée sur les `ncomp` premières directions principales.

    Signe fixé : la composante de plus grand module de chaque direction est
    positive. Données de variance nulle -> projection nulle, `degenerate`.
    """
    X = check_features(X)
    n, d = X.shape
    if not 1 <= ncomp <= min(n, d):
        raise EmbeddingParameterError(f"ncomp={ncomp} hors de [1, {min(n, d)}]")
    mean = X.mean(axis=0)
    if np.all(X == X[0]):
        logger.warning("ACP: variance nulle, projection nulle")
        return PcaResult(
            projection=np.zeros((n, ncomp)),
            components=np.eye(ncomp, d),
            mean=mean,
            explained_variance=np.zeros(ncomp),
            degenerate=True,
        )
    model = PCA(n_components=ncomp, svd_solver="full").fit(X)
    components = model.components_.copy()
    signs = np.sign(components[np.arange(ncomp), np.argmax(np.abs(components), axis=1)])
    signs[signs == 0] = 1.0
    components *= signs[:, None]
    projection = (X - model.mean_) @ components.T
    return PcaResult(
        projection=projection,
        components=components,
        mean=model.mean_,
        explained_variance=model.explained_variance_,
    )


# -----------------------------
# Probabilités jointes
def _row_entropy(dist_row: np.ndarray, beta: float) -> Tuple[float, np.ndarray]:
    # décalage par la distance minimale : H est invariant, exp ne sous-déborde pas
    shifted = dist_row - dist_row.min()
    p = np.exp(-shifted * beta)
    sum_p = p.sum()
    h = math.log(sum_p) + beta * float(np.dot(shifted, p)) / sum_p
    return h, p / sum_p


def conditional_probabilities(
    sq_dist: np.ndarray, perplexity: float
) -> Tuple[np.ndarray, np.ndarray]:
    """P(j|i) par bissection sur la précision β de chaque noyau gaussien."""
    n = sq_dist.shape[0]
    target = math.log(perplexity)
    cond = np.zeros((n, n))
    betas = np.ones(n)
    for i in range(n):
        row = np.delete(sq_dist[i], i)
        beta, lo, hi = 1.0, -math.inf, math.inf
        h, p = _row_entropy(row, beta)
        for _ in range(MAX_BISECTION_STEPS):
            diff = h - target
            if abs(diff) < ENTROPY_TOL:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2.0 if hi == math.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = beta / 2.0 if lo == -math.inf else (beta + lo) / 2.0
            h, p = _row_entropy(row, beta)
        cond[i, np.arange(n) != i] = p
        betas[i] = beta
    return cond, betas


def joint_probabilities(X: np.ndarray, perplexity: float) -> np.ndarray:
    """Matrice P symétrique n×n, diagonale nulle, de somme 1."""
    X = check_features(X)
    sq_dist = squareform(pdist(X, "sqeuclidean"))
    cond, _ = conditional_probabilities(sq_dist, perplexity)
    P = cond + cond.T
    return P / P.sum()


# -----------------------------
# Objectif
def kl_divergence_and_gradient(Y: np.ndarray, P: np.ndarray) -> Tuple[float, np.ndarray]:
    """KL(P‖Q) et son gradient 4 Σ_j (p_ij − q_ij)(y_i − y_j)/(1 + |y_i − y_j|²)."""
    num = 1.0 / (1.0 + pdist(Y, "sqeuclidean"))
    Q = np.maximum(num / (2.0 * num.sum()), MACHINE_EPSILON)
    p = squareform(P, checks=False)
    mask = p > 0
    kl = 2.0 * float(np.dot(p[mask], np.log(p[mask] / Q[mask])))
    PQd = squareform((p - Q) * num)
    grad = 4.0 * (PQd.sum(axis=1)[:, None] * Y - PQd @ Y)
    return kl, grad


@dataclass(frozen=True)
class TsneResult:
    embedding: np.ndarray
    kl_trace: List[Tuple[int, float]]
    perplexity: float


def _initial_embedding(X: np.ndarray, params: TsneParams) -> np.ndarray:
    n = X.shape[0]
    if params.init == "pca" and min(X.shape) >= 2:
        Y = pca(X, 2).projection
        std = Y.std(axis=0)
        if np.all(std > 0):
            return Y / std * INIT_STD
        logger.warning("t-SNE: initialisation ACP dégénérée, tirage gaussien")
    rng = seeded_rng(params.seed, "tsne:init")
    return rng.normal(0.0, INIT_STD, size=(n, 2))


def tsne(X: np.ndarray, params: Optional[TsneParams] = None) -> TsneResult:
    """t-SNE exact O(n²) : exagération initiale, moment 0.5 puis 0.8, gains."""
    params = params or TsneParams()
    X = check_features(X)
    n = X.shape[0]
    perplexity = params.resolved_perplexity(n)
    P = joint_probabilities(X, perplexity)

    Y = _initial_embedding(X, params)
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    trace: List[Tuple[int, float]] = [(0, kl_divergence_and_gradient(Y, P)[0])]

    for it in range(params.iters):
        exaggerated = it < params.exaggeration_iters
        momentum = params.momentum_start if exaggerated else params.momentum_final
        target = P * params.early_exaggeration if exaggerated else P
        _, grad = kl_divergence_and_gradient(Y, target)

        inc = update * grad < 0.0
        gains[inc] += 0.2
        gains[~inc] *= 0.8
        np.clip(gains, params.min_gain, None, out=gains)
        update = momentum * update - params.learning_rate * gains * grad
        Y = Y + update
        Y -= Y.mean(axis=0)

        if (it + 1) % KL_TRACE_EVERY == 0 or it + 1 == params.iters:
            trace.append((it + 1, kl_divergence_and_gradient(Y, P)[0]))

    logger.info("t-SNE: KL %.4f -> %.4f", trace[0][1], trace[-1][1])
    return TsneResult(embedding=Y, kl_trace=trace, perplexity=perplexity)
