from __future__ import annotations

import logging
from typing import Dict, List, Optional, Sequence, Tuple

from segfair.exception.exceptions import FairnessError, StatisticsError
from segfair.model.models import group_sort_key
from segfair.model.reports import (
    AnovaResult,
    BiasComparison,
    FairnessReport,
    GroupOutcome,
    RegressionResult,
)
from segfair.stats.engine import anova_oneway, mean_std

logger = logging.getLogger(__name__)

FOUR_FIFTHS = 0.8
DEFAULT_PAIR = ("Young", "Older")

FLAG_DIR_DEGENERATE = "dir_both_rates_zero"
FLAG_ANOVA_SKIPPED = "anova_skipped"
FLAG_ANOVA_DEGENERATE = "anova_degenerate"


def beneficial_rate(scores: Sequence[float], threshold: float = FOUR_FIFTHS) -> float:
    """Part des cas dont le score dépasse strictement le seuil."""
    if len(scores) == 0:
        raise FairnessError("Taux bénéfique d'une liste vide")
    return sum(1 for s in scores if s > threshold) / len(scores)


def _check_rate(rate: float) -> None:
    if not 0.0 <= rate <= 1.0:
        raise FairnessError(f"Taux hors de [0, 1]: {rate}")


def demographic_parity_difference(rate_a: float, rate_b: float) -> float:
    """DPD = |P(ŷ=1|a) − P(ŷ=1|b)|, 0 = parité."""
    _check_rate(rate_a)
    _check_rate(rate_b)
    return abs(rate_a - rate_b)


def disparate_impact_ratio(rate_a: float, rate_b: float) -> Tuple[float, bool]:
    """DIR = min/max. Retourne (valeur, dégénéré) ; deux taux nuls -> (1.0, True)."""
    _check_rate(rate_a)
    _check_rate(rate_b)
    hi = max(rate_a, rate_b)
    if hi == 0.0:
        return 1.0, True
    return min(rate_a, rate_b) / hi, False


def fairness_gap(group_means: Sequence[Tuple[str, float]]) -> float:
    """Écart entre la meilleure et la pire moyenne de groupe."""
    if len(group_means) < 2:
        raise FairnessError("Au moins deux groupes requis pour l'écart d'équité")
    values = [m for _, m in group_means]
    return max(values) - min(values)


def relative_change(gap_new: float, gap_ref: float, label: str = "") -> BiasComparison:
    """Variation relative signée (gap_new − gap_ref)/gap_ref ; indéfinie si gap_ref = 0."""
    if gap_ref == 0.0:
        logger.warning("Variation relative indéfinie: écart de référence nul (%s)", label)
        return BiasComparison(label=label, gap_ref=gap_ref, gap_new=gap_new)
    return BiasComparison(
        label=label,
        gap_ref=gap_ref,
        gap_new=gap_new,
        relative_change=(gap_new - gap_ref) / gap_ref,
    )


# -----------------------------
# Audit par groupe
def _group_outcome(group: str, dice: List[float], threshold: float) -> GroupOutcome:
    mean, std = mean_std(dice)
    return GroupOutcome(
        group=group,
        n=len(dice),
        mean_dice=mean,
        std_dice=std,
        beneficial_rate=beneficial_rate(dice, threshold),
    )


def audit_groups(
    cases: Sequence[Tuple[str, float]],
    threshold: float = FOUR_FIFTHS,
    comparison_pair: Tuple[str, str] = DEFAULT_PAIR,
    *,
    label: str = "audit",
    gap_values: Optional[Sequence[Tuple[str, float]]] = None,
    gap_metric: str = "dice",
    ols: Optional[RegressionResult] = None,
) -> FairnessReport:
    """Assemble taux bénéfiques, DPD/DIR de la paire, écart d'équité et ANOVA.

    `cases` : (groupe, dice). Si `gap_values` est fourni (ex. HD95 par cas),
    l'écart et l'ANOVA portent sur ces valeurs ; pour HD95 la polarité est
    inversée (le pire groupe a la plus grande moyenne). Les taux bénéfiques
    restent définis sur le Dice.
    """
    if not 0.0 < threshold < 1.0:
        raise FairnessError(f"Seuil hors de (0, 1): {threshold}")

    by_group: Dict[str, List[float]] = {}
    for group, score in cases:
        by_group.setdefault(str(group), []).append(float(score))
    for g in comparison_pair:
        if g not in by_group:
            raise FairnessError(f"Groupe absent de la cohorte: {g}")
    if len(by_group) < 2:
        raise FairnessError("Au moins deux groupes requis")

    order = sorted(by_group, key=group_sort_key)
    outcomes = [_group_outcome(g, by_group[g], threshold) for g in order]
    rates = {o.group: o.beneficial_rate for o in outcomes}
    overall = _group_outcome(
        "Average", [s for g in order for s in by_group[g]], threshold
    )

    a, b = comparison_pair
    dpd = demographic_parity_difference(rates[a], rates[b])
    dir_value, dir_degenerate = disparate_impact_ratio(rates[a], rates[b])
    flags: List[str] = []
    if dir_degenerate:
        flags.append(FLAG_DIR_DEGENERATE)

    if gap_values is None:
        metric_groups = by_group
        higher_is_better = True
    else:
        metric_groups = {}
        for group, value in gap_values:
            metric_groups.setdefault(str(group), []).append(float(value))
        higher_is_better = gap_metric != "hd95"
    metric_order = sorted(metric_groups, key=group_sort_key)
    means = [(g, mean_std(metric_groups[g])[0]) for g in metric_order]
    gap = fairness_gap(means)
    ranked = sorted(means, key=lambda gm: gm[1], reverse=higher_is_better)
    best, worst = ranked[0][0], ranked[-1][0]

    anova: Optional[AnovaResult] = None
    try:
        anova = anova_oneway([metric_groups[g] for g in metric_order])
        if anova.degenerate:
            flags.append(FLAG_ANOVA_DEGENERATE)
    except StatisticsError as e:
        logger.warning("ANOVA impossible: %s", e)
        flags.append(FLAG_ANOVA_SKIPPED)

    return FairnessReport(
        label=label,
        metric=gap_metric,
        groups=outcomes,
        overall=overall,
        dpd=dpd,
        dir=dir_value,
        dir_degenerate=dir_degenerate,
        fairness_gap=gap,
        best_group=best,
        worst_group=worst,
        adverse_impact=dir_value < FOUR_FIFTHS,
        anova=anova,
        ols=ols,
        threshold=threshold,
        comparison_pair=(a, b),
        flags=flags,
    )


def compare_reports(
    reference: FairnessReport, others: Sequence[FairnessReport]
) -> List[BiasComparison]:
    """Variation relative de l'écart de chaque rapport par rapport à la référence."""
    return [
        relative_change(r.fairness_gap, reference.fairness_gap, label=r.label)
        for r in others
    ]
