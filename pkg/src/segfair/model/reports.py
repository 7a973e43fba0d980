from __future__ import annotations

from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from segfair.model.models import LabelSource, Role

SCHEMA_VERSION = "1.0"


class _Report(BaseModel):
    # F infini et autres limites sont sérialisés "Infinity" plutôt que null.
    model_config = ConfigDict(ser_json_inf_nan="strings", frozen=True)


# -----------------------------
# Métriques par cas
class PairMetrics(_Report):
    """Qualité de segmentation d'une paire (prédiction, référence)."""

    dice: float
    hd95_mm: Optional[float] = None  # None = indéfini (masque vide)
    flags: List[str] = Field(default_factory=list)


class ShapeMetrics(_Report):
    """Morphométrie d'un masque."""

    volume_mm3: float
    surface_area_mm2: Optional[float] = None
    sphericity: Optional[float] = None
    elongation: Optional[float] = None
    flags: List[str] = Field(default_factory=list)


class CaseMetrics(_Report):
    dice: float
    hd95_mm: Optional[float] = None
    volume_mm3: float
    sphericity: Optional[float] = None
    elongation: Optional[float] = None
    flags: List[str] = Field(default_factory=list)


# -----------------------------
# Statistiques
class RegressionResult(_Report):
    slope: float
    intercept: float
    r2: float
    p_slope: float
    n: int


class AnovaResult(_Report):
    f_stat: float
    df_between: int
    df_within: int
    p: float
    degenerate: bool = False  # variance intra-groupe nulle


class TTestResult(_Report):
    t_stat: float
    df: float
    p: float
    degenerate: bool = False


# -----------------------------
# Équité
class GroupOutcome(_Report):
    group: str
    n: int
    mean_dice: float
    std_dice: Optional[float] = None
    beneficial_rate: float


class FairnessReport(_Report):
    schema_version: str = SCHEMA_VERSION
    label: str = "audit"
    metric: str = "dice"
    groups: List[GroupOutcome]
    overall: Optional[GroupOutcome] = None
    dpd: float
    dir: float
    dir_degenerate: bool = False
    fairness_gap: float
    best_group: str
    worst_group: str
    adverse_impact: bool
    anova: Optional[AnovaResult] = None
    ols: Optional[RegressionResult] = None
    threshold: float = 0.8
    comparison_pair: Tuple[str, str]
    flags: List[str] = Field(default_factory=list)


class BiasComparison(_Report):
    label: str = ""
    gap_ref: float
    gap_new: float
    relative_change: Optional[float] = None  # None = gap_ref nul

    @property
    def undefined(self) -> bool:
        return self.relative_change is None


# -----------------------------
# Plans d'expérience
class ManifestEntry(_Report):
    case_id: str
    label_source: LabelSource
    fold: int
    role: Role


class DesignParams(_Report):
    """Paramètres d'échantillonnage d'un plan (défaut: plus petit groupe)."""

    n_per_group: Optional[int] = Field(default=None, ge=0)
    n_easy: int = Field(default=143, ge=0)
    n_hard: int = Field(default=206, ge=0)
    k: int = Field(default=5, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)


class SplitManifest(_Report):
    """Composition d'un plan : une entrée par (cas, pli), rôle val sur son pli."""

    schema_version: str = SCHEMA_VERSION
    design: str
    design_name: str
    seed: int
    k: int
    params: DesignParams
    entries: List[ManifestEntry]

    def case_ids(self) -> list[str]:
        return sorted({e.case_id for e in self.entries})

    def sources(self) -> dict[str, LabelSource]:
        return {e.case_id: e.label_source for e in self.entries}

    def val_folds(self) -> dict[str, int]:
        return {e.case_id: e.fold for e in self.entries if e.role == Role.VAL}


# -----------------------------
# Plongements
class ClusterEval(_Report):
    silhouette: float
    purity: float
    ari: float
    nmi: float


class FoldClusterSummary(_Report):
    schema_version: str = SCHEMA_VERSION
    folds: List[ClusterEval]
    mean: ClusterEval
    std: ClusterEval
