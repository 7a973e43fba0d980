from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from segfair.exception.exceptions import GeometryError
from segfair.model.models import VoxelMask
from segfair.model.reports import PairMetrics
from segfair.stats.engine import percentile_linear
from segfair.volume.geometry import edt_array, surface_array


FLAG_BOTH_EMPTY = "dice_both_empty"
FLAG_HD95_UNDEFINED = "hd95_undefined"


def _check_same_grid(a: VoxelMask, b: VoxelMask) -> None:
    if not a.same_grid(b):
        raise GeometryError(
            f"Grilles incompatibles: {a.dims}/{a.spacing} vs {b.dims}/{b.spacing}"
        )


def dice(a: VoxelMask, b: VoxelMask) -> float:
    """2|A∩B| / (|A|+|B|) ; deux masques vides -> 1.0, un seul vide -> 0.0."""
    _check_same_grid(a, b)
    na, nb = a.occupied_count, b.occupied_count
    if na == 0 and nb == 0:
        return 1.0
    if na == 0 or nb == 0:
        return 0.0
    inter = int(np.count_nonzero(a.data & b.data))
    return 2.0 * inter / (na + nb)


def surface_distances(a: VoxelMask, b: VoxelMask) -> Tuple[np.ndarray, np.ndarray]:
    """Distances dirigées surf(A) -> surf(B) et surf(B) -> surf(A), en mm.

    Les surfaces sont extraites sur la grille complète puis la transformée de
    distance est calculée sur leur boîte englobante commune.
    """
    _check_same_grid(a, b)
    if a.is_empty or b.is_empty:
        raise GeometryError("Distances de surface indéfinies pour un masque vide")
    sa, sb = surface_array(a), surface_array(b)
    idx = np.argwhere(sa | sb)
    lo, hi = idx.min(axis=0), idx.max(axis=0) + 1
    box = tuple(slice(int(l), int(h)) for l, h in zip(lo, hi))
    sa, sb = sa[box], sb[box]
    a_to_b = edt_array(sb, a.spacing)[sa]
    b_to_a = edt_array(sa, a.spacing)[sb]
    return a_to_b, b_to_a


def hd95(a: VoxelMask, b: VoxelMask) -> Optional[float]:
    """Max des deux 95e percentiles dirigés ; None si un masque est vide."""
    _check_same_grid(a, b)
    if a.is_empty or b.is_empty:
        return None
    a_to_b, b_to_a = surface_distances(a, b)
    return max(percentile_linear(a_to_b, 95.0), percentile_linear(b_to_a, 95.0))


def hausdorff(a: VoxelMask, b: VoxelMask) -> Optional[float]:
    """Distance de Hausdorff exacte (surface à surface)."""
    _check_same_grid(a, b)
    if a.is_empty or b.is_empty:
        return None
    a_to_b, b_to_a = surface_distances(a, b)
    return float(max(a_to_b.max(), b_to_a.max()))


def measure_pair(pred: VoxelMask, ref: VoxelMask) -> PairMetrics:
    flags = []
    if pred.is_empty and ref.is_empty:
        flags.append(FLAG_BOTH_EMPTY)
    value = hd95(pred, ref)
    if value is None:
        flags.append(FLAG_HD95_UNDEFINED)
    return PairMetrics(dice=dice(pred, ref), hd95_mm=value, flags=flags)
