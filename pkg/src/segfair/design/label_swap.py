from __future__ import annotations

from typing import Dict, Sequence

from segfair.cohort.records import CaseRecord
from segfair.cohort.sampling import balanced_sample
from segfair.exception.exceptions import CohortInputError
from segfair.model.models import AgeGroup, LabelSource, Tier
from segfair.model.reports import DesignParams
from segfair.registry.registry import register


def _swap_tier1(
    cases: Sequence[CaseRecord], params: DesignParams, target: AgeGroup
) -> Dict[str, LabelSource]:
    """Même échantillon que la référence ; les cas T1 du groupe cible passent en
    silver, tous les autres restent gold."""
    ids = set(balanced_sample(cases, params.n_per_group, params.seed))
    sources: Dict[str, LabelSource] = {}
    for c in sorted(cases, key=lambda c: c.case_id):
        if c.case_id not in ids:
            continue
        if c.tier is None:
            raise CohortInputError(f"{c.case_id}: tier non calculé")
        swap = c.age_group == target and c.tier == Tier.T1
        sources[c.case_id] = LabelSource.SILVER if swap else LabelSource.GOLD
    return sources


@register("swap-young", "M-Swap-Young", needs_tiers=True)
def swap_young(cases: Sequence[CaseRecord], params: DesignParams) -> Dict[str, LabelSource]:
    return _swap_tier1(cases, params, AgeGroup.YOUNG)


@register("swap-older", "M-Swap-Older", needs_tiers=True)
def swap_older(cases: Sequence[CaseRecord], params: DesignParams) -> Dict[str, LabelSource]:
    return _swap_tier1(cases, params, AgeGroup.OLDER)
