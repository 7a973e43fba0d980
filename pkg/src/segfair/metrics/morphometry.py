from __future__ import annotations

import math
from typing import Optional

import numpy as np

from segfair.exception.exceptions import GeometryError
from segfair.metrics.segmentation import measure_pair
from segfair.model.models import VoxelMask
from segfair.model.reports import CaseMetrics, ShapeMetrics

FLAG_EMPTY = "empty_mask"
FLAG_ELONGATION_UNDEFINED = "elongation_undefined"


def tumor_volume(m: VoxelMask) -> float:
    return m.occupied_count * m.voxel_volume


def surface_area(m: VoxelMask) -> float:
    """Somme des aires des faces exposées (6-voisin vide ou hors grille), mm²."""
    if m.is_empty:
        raise GeometryError("Surface d'un masque vide")
    sx, sy, sz = m.spacing
    face_area = (sy * sz, sx * sz, sx * sy)
    padded = np.pad(m.data, 1).astype(np.int8)
    area = 0.0
    for axis in range(3):
        # chaque transition 0/1 le long de l'axe est une face exposée
        faces = np.count_nonzero(np.diff(padded, axis=axis))
        area += faces * face_area[axis]
    return area


def sphericity(m: VoxelMask) -> float:
    """π^(1/3)·(6V)^(2/3) / A."""
    if m.is_empty:
        raise GeometryError("Sphéricité d'un masque vide")
    v = tumor_volume(m)
    return math.pi ** (1.0 / 3.0) * (6.0 * v) ** (2.0 / 3.0) / surface_area(m)


def principal_moments(m: VoxelMask) -> np.ndarray:
    """Valeurs propres décroissantes de la covariance des centres occupés (mm)."""
    pts = np.argwhere(m.data) * np.asarray(m.spacing)
    if pts.shape[0] < 2:
        return np.zeros(3)
    eig = np.linalg.eigvalsh(np.cov(pts, rowvar=False))
    return np.clip(eig[::-1], 0.0, None)


def elongation(m: VoxelMask) -> Optional[float]:
    """√(λ₂/λ₁) ; None si moins de deux voxels (dégénéré)."""
    if m.occupied_count < 2:
        return None
    lam = principal_moments(m)
    if lam[0] <= 0.0:
        return None
    return float(math.sqrt(lam[1] / lam[0]))


def measure_shape(m: VoxelMask) -> ShapeMetrics:
    if m.is_empty:
        return ShapeMetrics(volume_mm3=0.0, flags=[FLAG_EMPTY])
    flags = []
    elong = elongation(m)
    if elong is None:
        flags.append(FLAG_ELONGATION_UNDEFINED)
    return ShapeMetrics(
        volume_mm3=tumor_volume(m),
        surface_area_mm2=surface_area(m),
        sphericity=sphericity(m),
        elongation=elong,
        flags=flags,
    )


def case_metrics(pred: VoxelMask, ref: VoxelMask) -> CaseMetrics:
    """Qualité (pred vs ref) et morphométrie de la référence."""
    pair = measure_pair(pred, ref)
    shape = measure_shape(ref)
    return CaseMetrics(
        dice=pair.dice,
        hd95_mm=pair.hd95_mm,
        volume_mm3=shape.volume_mm3,
        sphericity=shape.sphericity,
        elongation=shape.elongation,
        flags=pair.flags + shape.flags,
    )
