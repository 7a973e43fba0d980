from __future__ import annotations

import io
import logging
import math
from pathlib import Path
from typing import Optional, Union

import nibabel as nib
import numpy as np

from segfair.exception.exceptions import MaskFormatError
from segfair.model.models import MaskFormat, VoxelMask

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# ---------------------------------------------------------------------------
# raw-v1 : little-endian, "SFM1", 3 x u32 dims, 3 x f64 espacement (mm),
# puis un octet par voxel, x le plus rapide.
RAW_MAGIC = b"SFM1"
RAW_HEADER = np.dtype(
    [("magic", "S4"), ("dims", "<u4", (3,)), ("spacing", "<f8", (3,))]
)
RAW_DIMS_OFFSET = 4
RAW_SPACING_OFFSET = 16

# ---------------------------------------------------------------------------
# Sous-ensemble NIfTI-1 (lecture seule) : en-tête de 348 octets, fichier unique
# "n+1\0", types uint8 / int16 / float32.
NIFTI_HEADER_SIZE = 348
NIFTI_MAGIC = b"n+1\x00"
NIFTI_MAGIC_OFFSET = 344
NIFTI_DIM_OFFSET = 40
NIFTI_DATATYPE_OFFSET = 70
NIFTI_PIXDIM_OFFSET = 76
NIFTI_VOX_OFFSET_OFFSET = 108
NIFTI_DATATYPES = {2: "uint8", 4: "int16", 16: "float32"}

GZIP_MAGIC = b"\x1f\x8b"


def detect_format(path: PathLike) -> MaskFormat:
    name = Path(path).name.lower()
    if name.endswith(".gz"):
        name = name[:-3]
    if name.endswith(".nii"):
        return MaskFormat.NIFTI
    if name.endswith((".sfm", ".raw")):
        return MaskFormat.RAW_V1
    raise MaskFormatError(f"Format de masque non reconnu: {path}")


# ---------------------------------------------------------------------------
# raw-v1
def _decode_raw_v1(buf: bytes) -> VoxelMask:
    if len(buf) < RAW_HEADER.itemsize:
        raise MaskFormatError("En-tête raw-v1 tronqué", offset=len(buf))
    if buf[:4] != RAW_MAGIC:
        raise MaskFormatError("bad magic", offset=0)

    header = np.frombuffer(buf, dtype=RAW_HEADER, count=1)[0]
    dims = tuple(int(d) for d in header["dims"])
    spacing = tuple(float(s) for s in header["spacing"])
    for i, d in enumerate(dims):
        if d == 0:
            raise MaskFormatError("Dimension nulle", offset=RAW_DIMS_OFFSET + 4 * i)
    for i, s in enumerate(spacing):
        if not (s > 0 and math.isfinite(s)):
            raise MaskFormatError(
                f"Espacement non positif: {s}", offset=RAW_SPACING_OFFSET + 8 * i
            )

    n = math.prod(dims)
    start = RAW_HEADER.itemsize
    payload = buf[start : start + n]
    if len(payload) < n:
        raise MaskFormatError(
            f"Charge utile tronquée: {len(payload)}/{n} octets",
            offset=start + len(payload),
        )
    if len(buf) > start + n:
        logger.warning("raw-v1: %d octets excédentaires ignorés", len(buf) - start - n)

    data = np.frombuffer(payload, dtype=np.uint8).reshape(dims, order="F")
    return VoxelMask(dims, spacing, data)


def _encode_raw_v1(mask: VoxelMask) -> bytes:
    header = np.zeros(1, dtype=RAW_HEADER)
    header["magic"] = RAW_MAGIC
    header["dims"] = mask.dims
    header["spacing"] = mask.spacing
    payload = mask.data.ravel(order="F").astype(np.uint8)
    return header.tobytes() + payload.tobytes()


# ---------------------------------------------------------------------------
# NIfTI-1
def _decode_nifti(buf: bytes) -> VoxelMask:
    if len(buf) < NIFTI_HEADER_SIZE:
        raise MaskFormatError("En-tête NIfTI tronqué", offset=len(buf))
    sizeof_le = int.from_bytes(buf[:4], "little")
    sizeof_be = int.from_bytes(buf[:4], "big")
    if NIFTI_HEADER_SIZE not in (sizeof_le, sizeof_be):
        raise MaskFormatError("sizeof_hdr invalide", offset=0)
    if buf[NIFTI_MAGIC_OFFSET : NIFTI_MAGIC_OFFSET + 4] != NIFTI_MAGIC:
        raise MaskFormatError("bad magic", offset=NIFTI_MAGIC_OFFSET)

    hdr = nib.Nifti1Header.from_fileobj(
        io.BytesIO(buf[:NIFTI_HEADER_SIZE]), check=False
    )

    code = int(hdr["datatype"])
    if code not in NIFTI_DATATYPES:
        raise MaskFormatError(
            f"Type de données non supporté: {code}", offset=NIFTI_DATATYPE_OFFSET
        )

    dim = [int(d) for d in hdr["dim"]]
    ndim = dim[0]
    if not 3 <= ndim <= 7 or any(d != 1 for d in dim[4 : ndim + 1]):
        raise MaskFormatError(
            f"Volume 3D attendu, dim={dim[: ndim + 1]}", offset=NIFTI_DIM_OFFSET
        )
    dims = tuple(dim[1:4])
    for i, d in enumerate(dims):
        if d <= 0:
            raise MaskFormatError(
                f"Dimension non positive: {d}", offset=NIFTI_DIM_OFFSET + 2 * (i + 1)
            )

    pixdim = [float(p) for p in hdr["pixdim"][1:4]]
    for i, p in enumerate(pixdim):
        if not (p > 0 and math.isfinite(p)):
            raise MaskFormatError(
                f"Espacement non positif: {p}",
                offset=NIFTI_PIXDIM_OFFSET + 4 * (i + 1),
            )

    vox_offset = int(hdr["vox_offset"])
    if vox_offset < NIFTI_HEADER_SIZE:
        raise MaskFormatError(
            f"vox_offset invalide: {vox_offset}", offset=NIFTI_VOX_OFFSET_OFFSET
        )

    dtype = hdr.get_data_dtype()
    count = math.prod(dims)
    needed = vox_offset + count * dtype.itemsize
    if len(buf) < needed:
        raise MaskFormatError(
            f"Charge utile tronquée: {len(buf) - vox_offset}/{count * dtype.itemsize}"
            " octets",
            offset=len(buf),
        )

    if int(hdr["qform_code"]) > 0 or int(hdr["sform_code"]) > 0:
        logger.warning("NIfTI: orientation (qform/sform) lue et ignorée")

    data = np.frombuffer(buf, dtype=dtype, count=count, offset=vox_offset)
    return VoxelMask(dims, tuple(pixdim), data.reshape(dims, order="F") > 0)


# ---------------------------------------------------------------------------
# Points d'entrée
def decode_mask(buf: bytes, fmt: MaskFormat) -> VoxelMask:
    if buf[:2] == GZIP_MAGIC:
        raise MaskFormatError("Flux compressé: décompresser avant lecture", offset=0)
    if fmt == MaskFormat.RAW_V1:
        return _decode_raw_v1(buf)
    if fmt == MaskFormat.NIFTI:
        return _decode_nifti(buf)
    raise MaskFormatError(f"Format non supporté: {fmt!r}")


def load_mask(path: PathLike, fmt: Optional[MaskFormat] = None) -> VoxelMask:
    """Charge un masque binarisé (occupé ssi valeur stockée > 0)."""
    fmt = MaskFormat(fmt) if fmt is not None else detect_format(path)
    return decode_mask(Path(path).read_bytes(), fmt)


def save_mask(
    mask: VoxelMask, path: PathLike, fmt: MaskFormat = MaskFormat.RAW_V1
) -> None:
    if MaskFormat(fmt) != MaskFormat.RAW_V1:
        raise MaskFormatError("Écriture limitée au format raw-v1")
    Path(path).write_bytes(_encode_raw_v1(mask))
