from __future__ import annotations

from typing import Optional


class SegFairError(Exception):
    """Erreur générique segfair."""

    exit_code: int = 2


class MaskFormatError(SegFairError):
    """Fichier de masque mal formé (en-tête, type de données, charge utile)."""

    def __init__(self, message: str, offset: Optional[int] = None):
        if offset is not None:
            message = f"{message} (octet {offset})"
        super().__init__(message)
        self.offset = offset


class GeometryError(SegFairError):
    """Grilles incompatibles, masque vide ou rééchantillonnage dégénéré."""


class PerturbationError(GeometryError):
    """La perturbation a annihilé le masque."""


class StatisticsError(SegFairError):
    """Entrées statistiques dégénérées."""


class FairnessError(SegFairError):
    """Groupe manquant ou nombre de groupes insuffisant."""


class CohortInputError(SegFairError):
    """Métadonnées, jointures ou configuration invalides."""


class DesignInfeasibleError(SegFairError):
    """Effectifs insuffisants pour construire le plan demandé."""

    exit_code = 3


class EmbeddingParameterError(SegFairError):
    """Paramètres de plongement infaisables pour la taille de l'échantillon."""


class InvariantViolation(SegFairError):
    """Invariant interne violé."""

    exit_code = 4
