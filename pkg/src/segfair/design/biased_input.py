from __future__ import annotations

from typing import Dict, Sequence

from segfair.cohort.records import CaseRecord
from segfair.cohort.sampling import balanced_sample
from segfair.model.models import LabelSource
from segfair.model.reports import DesignParams
from segfair.registry.registry import register


# -----------------------------
# Échantillon équilibré par âge entraîné sur les étiquettes silver
@register("biased-input", "M-Biased-Input")
def biased_input(
    cases: Sequence[CaseRecord], params: DesignParams
) -> Dict[str, LabelSource]:
    ids = balanced_sample(cases, params.n_per_group, params.seed)
    return {cid: LabelSource.SILVER for cid in ids}
