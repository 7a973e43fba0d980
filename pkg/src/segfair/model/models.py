from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Iterable, Optional, Tuple

import numpy as np

from segfair.exception.exceptions import GeometryError

Dims = Tuple[int, int, int]
Spacing = Tuple[float, float, float]


# -----------------------------
# Grille voxel binaire
@dataclass(frozen=True, eq=False)
class VoxelMask:
    """Masque binaire 3D avec espacement physique (mm par voxel).

    `data` est indexé `[x, y, z]`. Un tableau plat est interprété dans l'ordre
    x-le-plus-rapide (ordre Fortran), celui des fichiers raw-v1 et NIfTI.
    Toute valeur > 0 est occupée. Le tableau stocké est en lecture seule.
    """

    dims: Dims
    spacing: Spacing
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        if len(dims) != 3 or any(d <= 0 for d in dims):
            raise GeometryError(f"Dimensions invalides: {self.dims!r}")
        if len(spacing) != 3 or not all(s > 0 and math.isfinite(s) for s in spacing):
            raise GeometryError(f"Espacement non positif: {self.spacing!r}")

        raw = np.asarray(self.data)
        if raw.size != math.prod(dims):
            raise GeometryError(
                f"Taille des données {raw.size} != produit des dimensions {dims}"
            )
        if raw.ndim == 1:
            raw = raw.reshape(dims, order="F")
        elif raw.shape != dims:
            raise GeometryError(f"Forme {raw.shape} != dimensions {dims}")

        occ = np.array(raw > 0, dtype=bool, copy=True)
        occ.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "data", occ)

    @classmethod
    def empty(cls, dims: Dims, spacing: Spacing = (1.0, 1.0, 1.0)) -> "VoxelMask":
        return cls(dims, spacing, np.zeros(dims, dtype=bool))

    @classmethod
    def from_coords(
        cls, dims: Dims, spacing: Spacing, coords: Iterable[Tuple[int, int, int]]
    ) -> "VoxelMask":
        data = np.zeros(dims, dtype=bool)
        for x, y, z in coords:
            data[x, y, z] = True
        return cls(dims, spacing, data)

    @property
    def occupied_count(self) -> int:
        return int(np.count_nonzero(self.data))

    @property
    def is_empty(self) -> bool:
        return not self.data.any()

    @property
    def voxel_volume(self) -> float:
        return self.spacing[0] * self.spacing[1] * self.spacing[2]

    def same_grid(self, other: "VoxelMask", rtol: float = 1e-9) -> bool:
        return self.dims == other.dims and np.allclose(
            self.spacing, other.spacing, rtol=rtol, atol=0.0
        )

    def same_as(self, other: "VoxelMask") -> bool:
        """Égalité bit à bit (occupation et espacement)."""
        return (
            self.dims == other.dims
            and self.spacing == other.spacing
            and np.array_equal(self.data, other.data)
        )

    def bounding_box(self) -> Optional[Tuple[slice, slice, slice]]:
        """Boîte englobante des voxels occupés, None si le masque est vide."""
        if self.is_empty:
            return None
        idx = np.argwhere(self.data)
        lo, hi = idx.min(axis=0), idx.max(axis=0) + 1
        return tuple(slice(int(a), int(b)) for a, b in zip(lo, hi))


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Distance euclidienne (mm) de chaque centre de voxel au voxel occupé le
    plus proche du masque source."""

    dims: Dims
    values: np.ndarray = field(repr=False)

    def at(self, x: int, y: int, z: int) -> float:
        return float(self.values[x, y, z])


@dataclass(frozen=True, eq=False)
class SurfaceSet:
    """Voxels occupés ayant un 6-voisin vide ou touchant le bord de la grille.

    `coords` est un tableau (k, 3) d'indices uniques triés lexicographiquement.
    """

    dims: Dims
    coords: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return int(self.coords.shape[0])

    def as_tuples(self) -> list[Tuple[int, int, int]]:
        return [tuple(int(v) for v in c) for c in self.coords]

    def to_array(self) -> np.ndarray:
        out = np.zeros(self.dims, dtype=bool)
        if len(self):
            out[tuple(self.coords.T)] = True
        return out


# -----------------------------
# Vocabulaire de la cohorte
class AgeGroup(StrEnum):
    YOUNG = "Young"
    MIDDLE = "Middle"
    OLDER = "Older"


AGE_GROUP_ORDER = [AgeGroup.YOUNG, AgeGroup.MIDDLE, AgeGroup.OLDER]


class Rating(StrEnum):
    GOOD = "Good"
    ACCEPTABLE = "Acceptable"
    POOR = "Poor"
    MISSED = "Missed"


class Difficulty(StrEnum):
    EASY = "Easy"
    HARD = "Hard"


class Tier(StrEnum):
    T1 = "T1"
    T1_5 = "T1_5"
    T2 = "T2"
    T3 = "T3"

    @property
    def difficulty(self) -> Difficulty:
        if self in (Tier.T1, Tier.T1_5):
            return Difficulty.EASY
        return Difficulty.HARD


class LabelSource(StrEnum):
    GOLD = "gold"
    SILVER = "silver"


class Role(StrEnum):
    TRAIN = "train"
    VAL = "val"


class MaskFormat(StrEnum):
    NIFTI = "nifti-subset"
    RAW_V1 = "raw-v1"


def group_sort_key(label: str) -> tuple[int, str]:
    """Ordre d'agrégation : groupes d'âge canoniques d'abord, puis alphabétique."""
    try:
        return AGE_GROUP_ORDER.index(AgeGroup(label)), str(label)
    except ValueError:
        return len(AGE_GROUP_ORDER), str(label)
