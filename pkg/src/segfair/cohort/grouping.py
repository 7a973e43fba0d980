from __future__ import annotations

import logging
from typing import Iterable, Optional

import pandas as pd

from segfair.exception.exceptions import CohortInputError
from segfair.model.models import AGE_GROUP_ORDER, AgeGroup, Difficulty, Rating, Tier

logger = logging.getLogger(__name__)

YOUNG_MAX_AGE = 40
OLDER_MIN_AGE = 55

# Conditions métriques du Tier 1, comparaisons non strictes.
T1_MIN_DICE = 0.80
T1_MAX_HD95 = 10.0


def age_group(age: int) -> AgeGroup:
    """Young ≤ 40, Older ≥ 55, Middle entre les deux (41–54)."""
    if age < 0:
        raise CohortInputError(f"Âge négatif: {age}")
    if age <= YOUNG_MAX_AGE:
        return AgeGroup.YOUNG
    if age >= OLDER_MIN_AGE:
        return AgeGroup.OLDER
    return AgeGroup.MIDDLE


def assign_tier(
    expert1: Rating, expert2: Rating, dice: float, hd95: Optional[float]
) -> Tier:
    """Table de stratification à double expert.

    Missed est traité comme pire que Poor : deux Missed -> T3, un Missed
    avec une autre note -> T2. Un HD95 indéfini fait échouer la condition
    métrique du T1.
    """
    e1, e2 = Rating(expert1), Rating(expert2)
    pair = {e1, e2}
    if pair == {Rating.GOOD}:
        metric_ok = dice >= T1_MIN_DICE and hd95 is not None and hd95 <= T1_MAX_HD95
        return Tier.T1 if metric_ok else Tier.T1_5
    if pair == {Rating.POOR} or pair == {Rating.MISSED}:
        return Tier.T3
    if Rating.MISSED in pair:
        logger.warning("Note Missed avec %s: classé T2", (pair - {Rating.MISSED}).pop())
    return Tier.T2


def difficulty(tier: Tier) -> Difficulty:
    return Tier(tier).difficulty


def tier_table(cases: Iterable) -> pd.DataFrame:
    """Effectifs groupe × tier et groupe × difficulté (+ total)."""
    rows = []
    for c in cases:
        if c.tier is None:
            raise CohortInputError(f"Cas sans tier: {c.case_id}")
        rows.append({"age_group": str(c.age_group), "tier": str(c.tier)})
    frame = pd.DataFrame(rows, columns=["age_group", "tier"])
    counts = pd.crosstab(frame["age_group"], frame["tier"])
    counts = counts.reindex(
        index=[str(g) for g in AGE_GROUP_ORDER],
        columns=[str(t) for t in Tier],
        fill_value=0,
    )
    counts[str(Difficulty.EASY)] = counts[str(Tier.T1)] + counts[str(Tier.T1_5)]
    counts[str(Difficulty.HARD)] = counts[str(Tier.T2)] + counts[str(Tier.T3)]
    counts["Total"] = counts[str(Difficulty.EASY)] + counts[str(Difficulty.HARD)]
    counts.index.name = "age_group"
    counts.columns.name = None
    return counts.astype(int)
