from __future__ import annotations

from typing import Dict, Sequence

from segfair.cohort.records import CaseRecord
from segfair.cohort.sampling import difficulty_balanced_sample
from segfair.model.models import LabelSource
from segfair.model.reports import DesignParams
from segfair.registry.registry import register


# -----------------------------
# Même répartition Easy/Hard dans chaque groupe, étiquettes gold
@register("diff-bal", "M-Diff-Bal", needs_tiers=True)
def difficulty_balanced(
    cases: Sequence[CaseRecord], params: DesignParams
) -> Dict[str, LabelSource]:
    ids = difficulty_balanced_sample(cases, params.n_easy, params.n_hard, params.seed)
    return {cid: LabelSource.GOLD for cid in ids}
