from __future__ import annotations

from typing import Dict, Mapping, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from segfair.cohort.grouping import age_group, assign_tier
from segfair.exception.exceptions import CohortInputError
from segfair.model.models import AgeGroup, Difficulty, Rating, Tier
from segfair.parser.helper import to_float, to_int

REQUIRED_COLUMNS = (
    "case_id",
    "age",
    "expert1",
    "expert2",
    "gold_path",
    "silver_path",
    "pred_path",
)
OPTIONAL_COLUMNS = ("silver_dice", "silver_hd95")


# -----------------------------
# Cas patient
class CaseRecord(BaseModel):
    """Un cas de la cohorte : âge, notes des deux experts, chemins des masques.

    `tier` et `difficulty` sont dérivés de (expert1, expert2, silver_dice,
    silver_hd95) dès que le Dice silver est connu.
    """

    model_config = ConfigDict(frozen=True)

    case_id: str
    age: int = Field(ge=0)
    age_group: AgeGroup
    expert1: Rating
    expert2: Rating
    silver_dice: Optional[float] = None
    silver_hd95: Optional[float] = None
    tier: Optional[Tier] = None
    difficulty: Optional[Difficulty] = None
    gold_path: Optional[str] = None
    silver_path: Optional[str] = None
    pred_path: Optional[str] = None

    # Colonnes supplémentaires non cartographiées
    extras: Dict[str, str] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_rules(self) -> "CaseRecord":
        if age_group(self.age) != self.age_group:
            raise ValueError(
                f"{self.case_id}: groupe {self.age_group} incohérent avec l'âge {self.age}"
            )
        if self.tier is not None and self.difficulty != self.tier.difficulty:
            raise ValueError(
                f"{self.case_id}: difficulté {self.difficulty} incohérente avec {self.tier}"
            )
        if self.silver_dice is not None and not 0.0 <= self.silver_dice <= 1.0:
            raise ValueError(f"{self.case_id}: silver_dice hors de [0, 1]")
        if self.silver_hd95 is not None and self.silver_hd95 < 0.0:
            raise ValueError(f"{self.case_id}: silver_hd95 négatif")
        return self

    # -------------------------
    # Construction depuis une ligne CSV
    @classmethod
    def from_row(cls, row: Mapping[str, Optional[str]]) -> "CaseRecord":
        case_id = (row.get("case_id") or "").strip()
        if not case_id:
            raise CohortInputError("case_id vide")
        age = to_int(row.get("age"))
        if age is None or age < 0:
            raise CohortInputError(f"{case_id}: âge invalide {row.get('age')!r}")
        try:
            e1 = Rating((row.get("expert1") or "").strip())
            e2 = Rating((row.get("expert2") or "").strip())
        except ValueError as e:
            raise CohortInputError(f"{case_id}: note d'expert invalide ({e})") from e

        known = set(REQUIRED_COLUMNS) | set(OPTIONAL_COLUMNS)
        extras = {k: str(v) for k, v in row.items() if k not in known and v is not None}
        record = cls(
            case_id=case_id,
            age=age,
            age_group=age_group(age),
            expert1=e1,
            expert2=e2,
            gold_path=(row.get("gold_path") or None),
            silver_path=(row.get("silver_path") or None),
            pred_path=(row.get("pred_path") or None),
            extras=extras,
        )
        dice = to_float(row.get("silver_dice"))
        if dice is not None:
            record = record.with_silver_metrics(dice, to_float(row.get("silver_hd95")))
        return record

    def with_silver_metrics(self, dice: float, hd95: Optional[float]) -> "CaseRecord":
        """Copie avec Dice/HD95 silver vs gold, tier et difficulté calculés."""
        tier = assign_tier(self.expert1, self.expert2, dice, hd95)
        try:
            return self.model_validate(
                {
                    **self.model_dump(),
                    "silver_dice": dice,
                    "silver_hd95": hd95,
                    "tier": tier,
                    "difficulty": tier.difficulty,
                }
            )
        except ValidationError as e:
            raise CohortInputError(str(e)) from e

    def to_row(self) -> Dict[str, object]:
        row: Dict[str, object] = {
            "case_id": self.case_id,
            "age": self.age,
            "expert1": str(self.expert1),
            "expert2": str(self.expert2),
            "gold_path": self.gold_path or "",
            "silver_path": self.silver_path or "",
            "pred_path": self.pred_path or "",
            "silver_dice": self.silver_dice,
            "silver_hd95": self.silver_hd95,
        }
        row.update(self.extras)
        return row
