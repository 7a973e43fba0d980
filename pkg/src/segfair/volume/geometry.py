from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy import ndimage

from segfair.exception.exceptions import GeometryError
from segfair.model.models import DistanceField, SurfaceSet, VoxelMask

# 6-connexité (faces)
SIX_CONNECTIVITY = ndimage.generate_binary_structure(3, 1)

# Tolérance sur ceil(dims·spacing/target) : 3 × 0.7 / 0.7 ne doit pas donner 4.
_CEIL_EPS = 1e-9


def _nearest_indices(n_in: int, s_in: float, n_out: int, s_out: float) -> np.ndarray:
    # centres : (i + 0.5)·s ; égalité de distance -> indice inférieur
    u = (np.arange(n_out) + 0.5) * (s_out / s_in) - 0.5
    return np.clip(np.ceil(u - 0.5), 0, n_in - 1).astype(np.intp)


def resample_nearest(mask: VoxelMask, target_spacing: Sequence[float]) -> VoxelMask:
    """Rééchantillonnage au plus proche voisin vers `target_spacing` (mm)."""
    target = tuple(float(t) for t in target_spacing)
    if len(target) != 3 or not all(t > 0 and math.isfinite(t) for t in target):
        raise GeometryError(f"Espacement cible non positif: {target_spacing!r}")

    out_dims = tuple(
        int(math.ceil(d * s / t - _CEIL_EPS))
        for d, s, t in zip(mask.dims, mask.spacing, target)
    )
    if any(d <= 0 for d in out_dims):
        raise GeometryError(f"Dimensions de sortie nulles: {out_dims}")

    if out_dims == mask.dims and target == mask.spacing:
        return mask

    ix, iy, iz = (
        _nearest_indices(n_in, s_in, n_out, t)
        for n_in, s_in, n_out, t in zip(mask.dims, mask.spacing, out_dims, target)
    )
    return VoxelMask(out_dims, target, mask.data[np.ix_(ix, iy, iz)])


def surface_array(mask: VoxelMask) -> np.ndarray:
    # border_value=0 : le bord de la grille compte comme vide
    interior = ndimage.binary_erosion(
        mask.data, structure=SIX_CONNECTIVITY, border_value=0
    )
    return mask.data & ~interior


def surface_voxels(mask: VoxelMask) -> SurfaceSet:
    coords = np.argwhere(surface_array(mask))
    return SurfaceSet(mask.dims, coords)


def edt_array(occupied: np.ndarray, spacing: Sequence[float]) -> np.ndarray:
    """Distance exacte (mm) de chaque centre au centre occupé le plus proche."""
    # distance_transform_edt mesure la distance aux zéros : on inverse.
    return ndimage.distance_transform_edt(~occupied, sampling=tuple(spacing))


def edt(mask: VoxelMask) -> DistanceField:
    if mask.is_empty:
        raise GeometryError("EDT of empty mask undefined")
    values = edt_array(mask.data, mask.spacing)
    values.setflags(write=False)
    return DistanceField(mask.dims, values)
