from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from segfair.cohort.records import OPTIONAL_COLUMNS, REQUIRED_COLUMNS, CaseRecord
from segfair.exception.exceptions import CohortInputError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _read_csv(path: PathLike) -> pd.DataFrame:
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise CohortInputError(f"CSV illisible {path}: {e}") from e


def load_metadata(path: PathLike) -> List[CaseRecord]:
    """Lit le CSV `case_id,age,expert1,expert2,gold_path,silver_path,pred_path`
    (colonnes optionnelles `silver_dice`, `silver_hd95`)."""
    frame = _read_csv(path)
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise CohortInputError(f"Colonnes manquantes dans {path}: {', '.join(missing)}")

    records: List[CaseRecord] = []
    seen: set[str] = set()
    for i, row in enumerate(frame.to_dict(orient="records"), start=2):
        try:
            record = CaseRecord.from_row(row)
        except CohortInputError as e:
            raise CohortInputError(f"{path}, ligne {i}: {e}") from e
        if record.case_id in seen:
            raise CohortInputError(f"{path}, ligne {i}: case_id dupliqué {record.case_id}")
        seen.add(record.case_id)
        records.append(record)
    return sorted(records, key=lambda r: r.case_id)


def write_metadata(records: Sequence[CaseRecord], path: PathLike) -> None:
    columns = list(REQUIRED_COLUMNS) + list(OPTIONAL_COLUMNS)
    rows = [r.to_row() for r in sorted(records, key=lambda r: r.case_id)]
    frame = pd.DataFrame(rows)
    extra = sorted(c for c in frame.columns if c not in columns)
    frame = frame.reindex(columns=columns + extra)
    frame.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")


def resolve_mask_path(
    ref: Optional[str], base_dir: Optional[PathLike], csv_dir: Path
) -> Optional[Path]:
    """Chemin absolu d'un masque : relatif au répertoire fourni, sinon au CSV."""
    if not ref:
        return None
    p = Path(ref)
    if p.is_absolute():
        return p
    if base_dir is not None:
        candidate = Path(base_dir) / p.name
        if candidate.exists():
            return candidate
        return Path(base_dir) / p
    return csv_dir / p


# -----------------------------
# Caractéristiques (plongements)
def load_features(path: PathLike) -> Tuple[List[str], np.ndarray]:
    """CSV `case_id,f0,f1,...` -> (identifiants, matrice n×d)."""
    frame = _read_csv(path)
    if "case_id" not in frame.columns:
        raise CohortInputError(f"{path}: colonne case_id manquante")
    feature_cols = [c for c in frame.columns if c != "case_id"]
    if not feature_cols:
        raise CohortInputError(f"{path}: aucune colonne de caractéristique")
    if frame["case_id"].duplicated().any():
        dupes = sorted(frame.loc[frame["case_id"].duplicated(), "case_id"])
        raise CohortInputError(f"{path}: case_id dupliqués {dupes}")
    try:
        values = frame[feature_cols].apply(pd.to_numeric).to_numpy(dtype=float)
    except ValueError as e:
        raise CohortInputError(f"{path}: valeur non numérique ({e})") from e
    if not np.all(np.isfinite(values)):
        raise CohortInputError(f"{path}: valeurs non finies")
    return list(frame["case_id"]), values


def join_features(
    ids: Sequence[str], values: np.ndarray, records: Sequence[CaseRecord]
) -> Tuple[List[CaseRecord], np.ndarray]:
    """Jointure sur case_id ; toute ligne orpheline est une erreur listée."""
    by_id = {r.case_id: r for r in records}
    orphans = sorted(set(ids) - set(by_id))
    if orphans:
        raise CohortInputError(
            f"Jointure impossible: {len(orphans)} case_id absents des métadonnées: "
            + ", ".join(orphans[:20])
        )
    order = sorted(range(len(ids)), key=lambda i: ids[i])
    return [by_id[ids[i]] for i in order], values[order]
