from __future__ import annotations

from pathlib import Path
from typing import Iterable, Tuple, Union

from cryptography.hazmat.primitives import hashes


def sha256(data: bytes) -> bytes:
    h = hashes.Hash(hashes.SHA256())
    h.update(data)
    return h.finalize()


def sha256_hex(data: bytes) -> str:
    return sha256(data).hex()


def file_fingerprint(path: Union[str, Path]) -> str:
    """Empreinte SHA-256 d'un fichier (bloc de provenance)."""
    h = hashes.Hash(hashes.SHA256())
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.finalize().hex()


def canonical_hash(pairs: Iterable[Tuple[str, str]]) -> str:
    """Hachage de paires clé=valeur triées, une par ligne."""
    text = "\n".join(f"{k}={v}" for k, v in sorted(pairs))
    return sha256_hex(text.encode("utf-8"))


def hash64(label: str) -> int:
    """Entier 64 bits stable dérivé d'un libellé (indépendant de PYTHONHASHSEED)."""
    return int.from_bytes(sha256(label.encode("utf-8"))[:8], "little")
