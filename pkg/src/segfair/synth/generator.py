from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import ndimage

from segfair.cohort.records import CaseRecord
from segfair.cohort.sampling import seeded_rng
from segfair.exception.exceptions import GeometryError, PerturbationError
from segfair.metrics.segmentation import dice, hd95
from segfair.model.models import AGE_GROUP_ORDER, AgeGroup, Rating, VoxelMask
from segfair.parser.metadata import write_metadata
from segfair.volume.geometry import SIX_CONNECTIVITY
from segfair.volume.io import save_mask

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

AGE_RANGES: Dict[str, Tuple[int, int]] = {
    AgeGroup.YOUNG: (25, 40),
    AgeGroup.MIDDLE: (41, 54),
    AgeGroup.OLDER: (55, 80),
}

# Bandes de notation sur le Dice silver : (seuil, note), ordre décroissant.
RATING_BANDS: List[Tuple[float, Rating]] = [
    (0.75, Rating.GOOD),
    (0.50, Rating.ACCEPTABLE),
    (0.10, Rating.POOR),
]
BAND_ORDER = [Rating.GOOD, Rating.ACCEPTABLE, Rating.POOR, Rating.MISSED]
EXPERT2_MARGIN = 0.02

MASK_SUFFIX = ".sfm"


# -----------------------------
# Configuration
class SynthConfig(BaseModel):
    """Cohorte synthétique : lois de volume par groupe et biais injectés.

    Les lois portent sur le rayon de la sphère équivalente (mm). Les défauts
    donnent aux Young un volume moyen ≈ 1,66 × celui des Older et une variance
    ≈ 1,70 × plus grande.
    """

    model_config = ConfigDict(frozen=True)

    n_per_group: int = Field(default=60, ge=1)
    grid: Tuple[int, int, int] = (48, 48, 48)
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    radius_mean: Dict[str, float] = Field(
        default_factory=lambda: {"Young": 7.124, "Middle": 6.6, "Older": 6.0}
    )
    radius_std: Dict[str, float] = Field(
        default_factory=lambda: {"Young": 0.463, "Middle": 0.48, "Older": 0.5}
    )
    label_bias: Dict[str, float] = Field(
        default_factory=lambda: {"Young": 0.0, "Middle": 0.0, "Older": 0.0}
    )
    pred_bias: Dict[str, float] = Field(
        default_factory=lambda: {"Young": 0.0, "Middle": 0.0, "Older": 0.0}
    )
    flip_rate: float = Field(default=0.0, ge=0.0, le=1.0)
    axis_sigma: float = Field(default=0.1, ge=0.0)
    center_jitter_mm: float = Field(default=2.0, ge=0.0)
    seed: int = Field(default=0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _check(self) -> "SynthConfig":
        groups = set(self.radius_mean)
        valid = {str(g) for g in AgeGroup}
        if not groups or not groups <= valid:
            raise ValueError(f"Groupes invalides: {sorted(groups)}")
        for name in ("radius_std", "label_bias", "pred_bias"):
            extra = set(getattr(self, name)) - groups
            if extra:
                raise ValueError(f"{name}: groupes inconnus {sorted(extra)}")
        for g in groups:
            if self.radius_mean[g] <= 0 or self.radius_std.get(g, 0.0) < 0:
                raise ValueError(f"Loi de rayon invalide pour {g}")
            if self.label_bias.get(g, 0.0) < 0 or self.pred_bias.get(g, 0.0) < 0:
                raise ValueError(f"Magnitude de biais négative pour {g}")
        half_extent = min(d * s for d, s in zip(self.grid, self.spacing)) / 2.0
        largest = max(
            self.radius_mean[g] + 4.0 * self.radius_std.get(g, 0.0) for g in groups
        )
        if largest * math.exp(3.0 * self.axis_sigma) + self.center_jitter_mm >= half_extent:
            raise ValueError("Les tumeurs ne tiennent pas dans la grille")
        return self

    def groups(self) -> List[str]:
        return [str(g) for g in AGE_GROUP_ORDER if str(g) in self.radius_mean]


# -----------------------------
# Géométrie
def ellipsoid_mask(
    center: Sequence[float],
    radii: Sequence[float],
    grid: Sequence[int],
    spacing: Sequence[float] = (1.0, 1.0, 1.0),
) -> VoxelMask:
    """Voxel occupé ssi son centre (i·s, mm) vérifie Σ((x − c)/r)² ≤ 1."""
    if any(r <= 0 for r in radii):
        raise GeometryError(f"Rayons non positifs: {radii}")
    axes = np.ogrid[tuple(slice(0, int(d)) for d in grid)]
    q = sum(
        ((ax * s - c) / r) ** 2 for ax, s, c, r in zip(axes, spacing, center, radii)
    )
    data = q <= 1.0
    if not data.any():
        raise GeometryError("Ellipsoïde hors de la grille")
    return VoxelMask(tuple(grid), tuple(spacing), data)


def perturb_mask(
    m: VoxelMask, layers: float, flip_rate: float = 0.0, seed: int = 0, label: str = ""
) -> VoxelMask:
    """⌊|layers|⌋ érosions 6-connexes (dilatations si layers < 0), couche
    fractionnaire retirée voxel par voxel avec probabilité |layers| − ⌊|layers|⌋,
    puis bascules de Bernoulli(flip_rate) dans la bande de surface."""
    if m.is_empty:
        raise PerturbationError("Perturbation d'un masque vide")
    if not 0.0 <= flip_rate <= 1.0:
        raise PerturbationError(f"flip_rate hors de [0, 1]: {flip_rate}")
    data = m.data.copy()
    if layers == 0 and flip_rate == 0:
        return m

    rng = seeded_rng(seed, f"perturb:{label}")
    whole = int(math.floor(abs(layers)))
    frac = abs(layers) - whole
    shrink = layers > 0
    morph = ndimage.binary_erosion if shrink else ndimage.binary_dilation
    if whole > 0:
        data = morph(data, structure=SIX_CONNECTIVITY, iterations=whole, border_value=0)
    if frac > 0 and data.any():
        if shrink:
            layer = data & ~ndimage.binary_erosion(
                data, structure=SIX_CONNECTIVITY, border_value=0
            )
        else:
            layer = ndimage.binary_dilation(data, structure=SIX_CONNECTIVITY) & ~data
        hit = layer & (rng.random(data.shape) < frac)
        data = data ^ hit

    if flip_rate > 0 and data.any():
        inner = data & ~ndimage.binary_erosion(
            data, structure=SIX_CONNECTIVITY, border_value=0
        )
        outer = ndimage.binary_dilation(data, structure=SIX_CONNECTIVITY) & ~data
        data = data ^ ((inner | outer) & (rng.random(data.shape) < flip_rate))

    if not data.any():
        raise PerturbationError(f"La perturbation ({layers} couches) a vidé le masque")
    return VoxelMask(m.dims, m.spacing, data)


# -----------------------------
# Notes d'experts synthétiques
def synthetic_ratings(dice_value: float, hd95_value: Optional[float]) -> Tuple[Rating, Rating]:
    """Note par bandes de Dice silver ; l'expert 2 descend d'une bande juste
    au-dessus d'un seuil."""
    if hd95_value is None:
        return Rating.MISSED, Rating.MISSED
    first = Rating.MISSED
    near = False
    for threshold, rating in RATING_BANDS:
        if dice_value >= threshold:
            first = rating
            near = dice_value - threshold < EXPERT2_MARGIN
            break
    second = first
    if near:
        second = BAND_ORDER[min(BAND_ORDER.index(first) + 1, len(BAND_ORDER) - 1)]
    return first, second


# -----------------------------
# Génération
@dataclass(frozen=True)
class SynthCase:
    record: CaseRecord
    gold: VoxelMask
    silver: VoxelMask
    pred: VoxelMask
    label_bias: float
    pred_bias: float


def _gold_for(cfg: SynthConfig, group: str, rng: np.random.Generator) -> VoxelMask:
    r = max(rng.normal(cfg.radius_mean[group], cfg.radius_std.get(group, 0.0)), 1.0)
    factors = np.exp(rng.normal(0.0, cfg.axis_sigma, size=3))
    factors /= np.prod(factors) ** (1.0 / 3.0)
    center = (np.asarray(cfg.grid) - 1) / 2.0 * np.asarray(cfg.spacing)
    center = center + rng.uniform(-cfg.center_jitter_mm, cfg.center_jitter_mm, size=3)
    return ellipsoid_mask(center, r * factors, cfg.grid, cfg.spacing)


def gen_cohort(cfg: SynthConfig) -> List[SynthCase]:
    """Par groupe, `n_per_group` cas : gold ellipsoïde, silver et pred perturbés."""
    cases: List[SynthCase] = []
    index = 0
    for group in cfg.groups():
        lo, hi = AGE_RANGES[group]
        lb = cfg.label_bias.get(group, 0.0)
        pb = cfg.pred_bias.get(group, 0.0)
        for k in range(cfg.n_per_group):
            index += 1
            case_id = f"SYN{index:04d}"
            rng = seeded_rng(cfg.seed, f"case:{group}:{k}")
            age = int(rng.integers(lo, hi + 1))
            gold = _gold_for(cfg, group, rng)
            silver = perturb_mask(gold, lb, cfg.flip_rate, cfg.seed, f"silver:{group}:{k}")
            pred = perturb_mask(gold, pb, cfg.flip_rate, cfg.seed, f"pred:{group}:{k}")

            d, h = dice(silver, gold), hd95(silver, gold)
            e1, e2 = synthetic_ratings(d, h)
            record = CaseRecord(
                case_id=case_id,
                age=age,
                age_group=AgeGroup(group),
                expert1=e1,
                expert2=e2,
                gold_path=f"gold/{case_id}{MASK_SUFFIX}",
                silver_path=f"silver/{case_id}{MASK_SUFFIX}",
                pred_path=f"pred/{case_id}{MASK_SUFFIX}",
            ).with_silver_metrics(d, h)
            cases.append(SynthCase(record, gold, silver, pred, lb, pb))
    logger.info("Cohorte synthétique: %d cas", len(cases))
    return cases


def truth_summary(cfg: SynthConfig) -> Dict[str, object]:
    return {
        "seed": cfg.seed,
        "n_per_group": cfg.n_per_group,
        "label_bias": {g: cfg.label_bias.get(g, 0.0) for g in cfg.groups()},
        "pred_bias": {g: cfg.pred_bias.get(g, 0.0) for g in cfg.groups()},
        "flip_rate": cfg.flip_rate,
        "radius_mean": {g: cfg.radius_mean[g] for g in cfg.groups()},
        "radius_std": {g: cfg.radius_std.get(g, 0.0) for g in cfg.groups()},
    }


def write_cohort(cases: Sequence[SynthCase], cfg: SynthConfig, out: PathLike) -> Path:
    """Écrit masques raw-v1, metadata.csv et truth.json ; retourne le CSV."""
    out = Path(out)
    for sub in ("gold", "silver", "pred"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    for c in cases:
        save_mask(c.gold, out / c.record.gold_path)
        save_mask(c.silver, out / c.record.silver_path)
        save_mask(c.pred, out / c.record.pred_path)
    metadata = out / "metadata.csv"
    write_metadata([c.record for c in cases], metadata)
    (out / "truth.json").write_text(
        json.dumps(truth_summary(cfg), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return metadata
