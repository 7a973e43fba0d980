from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence

from segfair.cohort.records import CaseRecord
from segfair.model.models import LabelSource
from segfair.model.reports import DesignParams

# Un 'design handler' : sélectionne les cas et fixe la source d'étiquette de
# chacun. Les cas absents du dictionnaire ne font pas partie du plan.
DesignHandler = Callable[[Sequence[CaseRecord], DesignParams], Dict[str, LabelSource]]


@dataclass(frozen=True)
class DesignInfo:
    code: str
    name: str
    handler: DesignHandler
    needs_tiers: bool = False


class DesignRegistry:
    def __init__(self):
        self._designs: Dict[str, DesignInfo] = {}

    def register(
        self, code: str, handler: DesignHandler, name: str, needs_tiers: bool = False
    ):
        self._designs[code.lower()] = DesignInfo(code.lower(), name, handler, needs_tiers)

    def get(self, code: str) -> Optional[DesignInfo]:
        return self._designs.get(code.lower())

    def codes(self) -> list[str]:
        return sorted(self._designs)


# Registre global simple
_registry = DesignRegistry()


def register(code: str, name: str, needs_tiers: bool = False):
    def deco(fn: DesignHandler):
        _registry.register(code, fn, name, needs_tiers)
        return fn

    return deco


def get_design(code: str) -> Optional[DesignInfo]:
    return _registry.get(code)


def design_codes() -> list[str]:
    return _registry.codes()
