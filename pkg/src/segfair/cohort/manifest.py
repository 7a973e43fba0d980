from __future__ import annotations

import importlib
import logging
import pkgutil
from collections import Counter
from typing import Dict, Optional, Sequence

from segfair.cohort.records import CaseRecord
from segfair.cohort.sampling import group_cases, stratified_kfold
from segfair.exception.exceptions import CohortInputError, InvariantViolation
from segfair.model.models import LabelSource, Role
from segfair.model.reports import DesignParams, ManifestEntry, SplitManifest
from segfair.registry.registry import DesignInfo, design_codes, get_design
import segfair.design as _designs_pkg

logger = logging.getLogger(__name__)

_designs_loaded = False


def _ensure_designs_loaded():
    """Importe tous les modules de segfair.design pour exécuter les
    décorateurs @register(...) et remplir le registre."""
    global _designs_loaded
    if _designs_loaded:
        return
    for mod in pkgutil.iter_modules(_designs_pkg.__path__):
        importlib.import_module(f"{_designs_pkg.__name__}.{mod.name}")
    _designs_loaded = True


def available_designs() -> list[str]:
    _ensure_designs_loaded()
    return design_codes()


def resolve_design(code: str) -> DesignInfo:
    _ensure_designs_loaded()
    info = get_design(code)
    if info is None:
        raise CohortInputError(
            f"Plan inconnu: {code!r} (disponibles: {', '.join(design_codes())})"
        )
    return info


def build_manifest(
    design: str,
    cases: Sequence[CaseRecord],
    seed: int = 0,
    params: Optional[DesignParams] = None,
) -> SplitManifest:
    """Sélection + sources d'étiquettes du plan, puis plis stratifiés par âge.

    Chaque cas retenu reçoit k entrées (une par pli), de rôle `val` sur son
    pli d'affectation et `train` sur les autres.
    """
    info = resolve_design(design)
    params = (params or DesignParams()).model_copy(update={"seed": seed})
    sources = info.handler(cases, params)
    selected = [c for c in cases if c.case_id in sources]
    folds = stratified_kfold(selected, params.k, params.seed)

    entries = [
        ManifestEntry(
            case_id=cid,
            label_source=sources[cid],
            fold=f,
            role=Role.VAL if f == folds[cid] else Role.TRAIN,
        )
        for cid in sorted(sources)
        for f in range(params.k)
    ]
    logger.info(
        "Plan %s: %d cas, %d silver",
        info.code,
        len(sources),
        sum(1 for s in sources.values() if s == LabelSource.SILVER),
    )
    return SplitManifest(
        design=info.code,
        design_name=info.name,
        seed=params.seed,
        k=params.k,
        params=params,
        entries=entries,
    )


def validate_manifest(
    manifest: SplitManifest, cases: Optional[Sequence[CaseRecord]] = None
) -> None:
    """Vérifie partition des plis, validation unique et règles de sources.

    Avec la cohorte, recalcule aussi la sélection et les sources du plan et
    contrôle l'équilibre des plis (±1 cas par groupe).
    """
    k = manifest.k
    by_case: Dict[str, list[ManifestEntry]] = {}
    for e in manifest.entries:
        by_case.setdefault(e.case_id, []).append(e)

    for cid, entries in by_case.items():
        if sorted(e.fold for e in entries) != list(range(k)):
            raise InvariantViolation(f"{cid}: plis {sorted(e.fold for e in entries)}")
        if sum(1 for e in entries if e.role == Role.VAL) != 1:
            raise InvariantViolation(f"{cid}: doit être validation sur un seul pli")
        if len({e.label_source for e in entries}) != 1:
            raise InvariantViolation(f"{cid}: source d'étiquette variable selon le pli")

    if cases is None:
        return

    info = resolve_design(manifest.design)
    expected = info.handler(cases, manifest.params)
    if manifest.sources() != expected:
        raise InvariantViolation(f"Sources du plan {manifest.design} non conformes")

    val = manifest.val_folds()
    selected = [c for c in cases if c.case_id in expected]
    for g, members in group_cases(selected).items():
        sizes = Counter(val[c.case_id] for c in members)
        counts = [sizes.get(f, 0) for f in range(k)]
        if max(counts) - min(counts) > 1:
            raise InvariantViolation(f"Groupe {g}: plis déséquilibrés {counts}")
