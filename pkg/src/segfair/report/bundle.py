from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Optional, Union

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from segfair import __version__
from segfair.crypto.digest import file_fingerprint
from segfair.model.reports import (
    SCHEMA_VERSION,
    AnovaResult,
    BiasComparison,
    FairnessReport,
    RegressionResult,
    TTestResult,
)

PathLike = Union[str, Path]

TOOL_NAME = "segfair"


class Provenance(BaseModel):
    """Bloc de provenance : jamais d'horodatage, pour des sorties reproductibles."""

    model_config = ConfigDict(frozen=True)

    tool: str = TOOL_NAME
    version: str = __version__
    seed: int
    config_hash: str
    inputs: Dict[str, str] = Field(default_factory=dict)


def provenance(seed: int, config_hash: str, inputs: Dict[str, PathLike]) -> Provenance:
    return Provenance(
        seed=seed,
        config_hash=config_hash,
        inputs={name: file_fingerprint(p) for name, p in sorted(inputs.items())},
    )


class ExcludedCase(BaseModel):
    case_id: str
    reason: str


class ComparisonStats(BaseModel):
    """Régressions et ANOVA d'une comparaison (true, observed, label)."""

    model_config = ConfigDict(ser_json_inf_nan="strings")

    label: str
    ols_dice: Optional[RegressionResult] = None
    ols_hd95: Optional[RegressionResult] = None
    anova_dice: Optional[AnovaResult] = None
    anova_hd95: Optional[AnovaResult] = None


class AuditBundle(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="strings")

    schema_version: str = SCHEMA_VERSION
    provenance: Provenance
    n_cases: int
    excluded: List[ExcludedCase] = Field(default_factory=list)
    reports: Dict[str, FairnessReport] = Field(default_factory=dict)
    stats: Dict[str, ComparisonStats] = Field(default_factory=dict)
    comparisons: List[BiasComparison] = Field(default_factory=list)
    files: List[str] = Field(default_factory=list)


class GroupSummary(BaseModel):
    group: str
    n: int
    mean: float
    std: Optional[float] = None
    median: float
    q1: float
    q3: float
    minimum: float
    maximum: float


class PairTest(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="strings")

    metric: str
    group_a: str
    group_b: str
    test: TTestResult


class MorphReport(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="strings")

    schema_version: str = SCHEMA_VERSION
    provenance: Provenance
    summaries: Dict[str, List[GroupSummary]]
    tests: List[PairTest] = Field(default_factory=list)
    volume_ratio_young_older: Optional[float] = None
    flags: List[str] = Field(default_factory=list)
    files: List[str] = Field(default_factory=list)


# -----------------------------
# Écriture
def write_json(model: BaseModel, path: PathLike) -> Path:
    path = Path(path)
    path.write_text(model.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def write_csv(frame: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    frame.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
    return path
