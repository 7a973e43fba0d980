# -----------------------------
# Helpers de conversion (CSV de métadonnées, fichiers de configuration)
import math
from typing import Dict, Optional, Tuple


def to_int(s: Optional[str]) -> Optional[int]:
    if s is None:
        return None
    t = str(s).strip().replace(" ", "").replace("\u00a0", "")
    if not t:
        return None
    try:
        return int(t)
    except ValueError:
        # "47.0" issu d'un tableur
        try:
            f = float(t)
        except ValueError:
            return None
        return int(f) if f.is_integer() else None


def to_float(s: Optional[str]) -> Optional[float]:
    if s is None:
        return None
    t = str(s).strip().replace(",", ".")
    if not t:
        return None
    try:
        f = float(t)
    except ValueError:
        return None
    return f if math.isfinite(f) else None


def to_bool(s: Optional[str]) -> Optional[bool]:
    if s is None:
        return None
    t = str(s).strip().lower()
    if t in ("1", "true", "yes", "oui", "on"):
        return True
    if t in ("0", "false", "no", "non", "off"):
        return False
    return None


def to_triple(s: Optional[str]) -> Optional[Tuple[float, float, float]]:
    """ "1" -> (1,1,1) ; "0.7,0.7,1.2" -> (0.7,0.7,1.2)."""
    if s is None or not str(s).strip():
        return None
    parts = [to_float(p) for p in str(s).replace("x", ",").split(",")]
    if any(p is None for p in parts):
        return None
    if len(parts) == 1:
        return (parts[0],) * 3
    if len(parts) == 3:
        return tuple(parts)
    return None


def to_dims(s: Optional[str]) -> Optional[Tuple[int, int, int]]:
    if s is None or not str(s).strip():
        return None
    parts = [to_int(p) for p in str(s).replace("x", ",").split(",")]
    if any(p is None for p in parts):
        return None
    if len(parts) == 1:
        return (parts[0],) * 3
    if len(parts) == 3:
        return tuple(parts)
    return None


def to_pair(s: Optional[str]) -> Optional[Tuple[str, str]]:
    """ "Young/Older" ou "Young,Older"."""
    if s is None:
        return None
    parts = [p.strip() for p in str(s).replace("/", ",").split(",") if p.strip()]
    return (parts[0], parts[1]) if len(parts) == 2 else None


def to_group_map(s: Optional[str]) -> Optional[Dict[str, float]]:
    """ "Young:1.5,Older:0" -> {"Young": 1.5, "Older": 0.0}."""
    if s is None or not str(s).strip():
        return None
    out: Dict[str, float] = {}
    for item in str(s).split(","):
        if ":" not in item:
            return None
        k, v = item.split(":", 1)
        value = to_float(v)
        if value is None or not k.strip():
            return None
        out[k.strip()] = value
    return out
