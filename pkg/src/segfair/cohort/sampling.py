from __future__ import annotations

from typing import Dict, List, Optional, Sequence

import numpy as np

from segfair.cohort.records import CaseRecord
from segfair.crypto.digest import hash64
from segfair.exception.exceptions import CohortInputError, DesignInfeasibleError
from segfair.model.models import Difficulty, group_sort_key

MAX_SEED = 2**64


def seeded_rng(seed: int, label: str) -> np.random.Generator:
    """Générateur MT19937 initialisé par SeedSequence([graine, hash64(libellé)]).

    hash64 : 8 premiers octets du SHA-256 du libellé, petit-boutiste. Le
    libellé (ex. "kfold:Young") est haché de façon stable : l'ordre de
    tirage d'un groupe ne dépend pas de l'ordre d'itération des groupes.
    """
    if not 0 <= int(seed) < MAX_SEED:
        raise CohortInputError(f"Graine hors de [0, 2^64): {seed}")
    seq = np.random.SeedSequence([int(seed), hash64(label)])
    return np.random.Generator(np.random.MT19937(seq))


def group_cases(cases: Sequence[CaseRecord]) -> Dict[str, List[CaseRecord]]:
    """Cas par groupe d'âge, triés par case_id, groupes dans l'ordre canonique."""
    groups: Dict[str, List[CaseRecord]] = {}
    for c in sorted(cases, key=lambda c: c.case_id):
        groups.setdefault(str(c.age_group), []).append(c)
    return {g: groups[g] for g in sorted(groups, key=group_sort_key)}


def _draw(ids: List[str], n: int, rng: np.random.Generator) -> List[str]:
    picked = rng.choice(len(ids), size=n, replace=False)
    return [ids[i] for i in sorted(picked)]


def balanced_sample(
    cases: Sequence[CaseRecord], n_per_group: Optional[int] = None, seed: int = 0
) -> List[str]:
    """Exactement `n_per_group` cas par groupe, tirés sans remise."""
    groups = group_cases(cases)
    if not groups:
        raise DesignInfeasibleError("Cohorte vide")
    n = min(len(v) for v in groups.values()) if n_per_group is None else n_per_group
    if n < 0:
        raise DesignInfeasibleError(f"Effectif négatif: {n}")
    selected: List[str] = []
    for g, members in groups.items():
        if len(members) < n:
            raise DesignInfeasibleError(
                f"Groupe {g}: {len(members)} cas disponibles < {n} demandés"
            )
        ids = [c.case_id for c in members]
        selected.extend(_draw(ids, n, seeded_rng(seed, f"balanced:{g}")))
    return sorted(selected)


def difficulty_balanced_sample(
    cases: Sequence[CaseRecord], n_easy: int = 143, n_hard: int = 206, seed: int = 0
) -> List[str]:
    """Par groupe, `n_easy` cas Easy et `n_hard` cas Hard."""
    groups = group_cases(cases)
    if not groups:
        raise DesignInfeasibleError("Cohorte vide")
    selected: List[str] = []
    shortfalls: List[str] = []
    for g, members in groups.items():
        for diff, n in ((Difficulty.EASY, n_easy), (Difficulty.HARD, n_hard)):
            if any(c.difficulty is None for c in members):
                raise CohortInputError(f"Groupe {g}: difficulté non calculée")
            ids = [c.case_id for c in members if c.difficulty == diff]
            if len(ids) < n:
                shortfalls.append(f"groupe {g}, strate {diff}: {len(ids)} < {n}")
                continue
            selected.extend(_draw(ids, n, seeded_rng(seed, f"diffbal:{g}:{diff}")))
    if shortfalls:
        raise DesignInfeasibleError("Strates insuffisantes: " + "; ".join(shortfalls))
    return sorted(selected)


def stratified_kfold(
    cases: Sequence[CaseRecord], k: int = 5, seed: int = 0
) -> Dict[str, int]:
    """Plis stratifiés par âge : mélange par groupe puis distribution circulaire."""
    if k < 1:
        raise DesignInfeasibleError(f"k doit être ≥ 1: {k}")
    folds: Dict[str, int] = {}
    for g, members in group_cases(cases).items():
        if len(members) < k:
            raise DesignInfeasibleError(f"Groupe {g}: {len(members)} cas < k={k}")
        order = seeded_rng(seed, f"kfold:{g}").permutation(len(members))
        for position, idx in enumerate(order):
            folds[members[idx].case_id] = position % k
    return dict(sorted(folds.items()))
