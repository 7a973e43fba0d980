from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from segfair.crypto.digest import canonical_hash
from segfair.exception.exceptions import CohortInputError
from segfair.parser.helper import (
    to_bool,
    to_dims,
    to_float,
    to_group_map,
    to_int,
    to_pair,
    to_triple,
)
from segfair.parser.spec import CONFIG_KEYS, CONFIG_SPEC, ConfigKey

logger = logging.getLogger(__name__)

# Sans effet sur les résultats : exclues du hachage.
UNHASHED_KEYS = {"jobs"}

_CONVERTERS = {
    "int": to_int,
    "float": to_float,
    "bool": to_bool,
    "str": lambda s: s.strip() or None,
    "triple": to_triple,
    "dims": to_dims,
    "pair": to_pair,
    "group_map": to_group_map,
}


def _coerce(key: ConfigKey, raw: Optional[str]) -> Any:
    if raw is None:
        return None
    value = _CONVERTERS[key.kind](raw)
    if value is None:
        raise CohortInputError(
            f"Valeur invalide pour {key.identifier} ({key.kind}): {raw!r}"
        )
    return value


def _canonical(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, dict):
        return ",".join(f"{k}:{_canonical(float(v))}" for k, v in sorted(value.items()))
    if isinstance(value, (tuple, list)):
        return ",".join(_canonical(v) for v in value)
    return str(value)


def parse_config_text(text: str) -> Dict[str, str]:
    """Lit un fichier plat clé=valeur (commentaires #, lignes vides ignorées)."""
    pairs: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise CohortInputError(f"Ligne {lineno}: '=' attendu: {line!r}")
        key, value = (p.strip() for p in stripped.split("=", 1))
        if key not in CONFIG_KEYS:
            raise CohortInputError(f"Ligne {lineno}: clé inconnue {key!r}")
        if key in pairs:
            logger.warning("Clé %s redéfinie ligne %d", key, lineno)
        pairs[key] = value
    return pairs


@dataclass(frozen=True)
class RunConfig:
    """Configuration résolue : défauts, puis fichier, puis options CLI."""

    values: Dict[str, Any]

    def get(self, key: str) -> Any:
        if key not in CONFIG_KEYS:
            raise KeyError(key)
        return self.values.get(key)

    def canonical_pairs(self) -> list[tuple[str, str]]:
        return sorted(
            (k, _canonical(v)) for k, v in self.values.items() if k not in UNHASHED_KEYS
        )

    @property
    def config_hash(self) -> str:
        return canonical_hash(self.canonical_pairs())


def build_config(
    file_pairs: Optional[Mapping[str, str]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    values: Dict[str, Any] = {k.identifier: _coerce(k, k.default) for k in CONFIG_SPEC}
    for key, raw in (file_pairs or {}).items():
        values[key] = _coerce(CONFIG_KEYS[key], raw)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in CONFIG_KEYS:
            raise CohortInputError(f"Option inconnue: {key}")
        values[key] = _coerce(CONFIG_KEYS[key], value) if isinstance(value, str) else value
    return RunConfig(values)


def load_config(
    path: Optional[Union[str, Path]], overrides: Optional[Mapping[str, Any]] = None
) -> RunConfig:
    pairs = parse_config_text(Path(path).read_text(encoding="utf-8")) if path else {}
    return build_config(pairs, overrides)
