"""Writers for the interchange formats the training side consumes.

Implemented from the documented byte layout so the toolkit stays
decoupled from the training package: matrix container with magic
"LGDM", u16 version, u16 dtype bits, u64 rows/cols, row-major
little-endian payload; plus UTF-8 one-name-per-line sidecars. Writes
are atomic.
"""

from __future__ import annotations

import hashlib
import os
import re
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"LGDM"
VERSION = 1
_HEADER = struct.Struct("<4sHHQQ")


def _atomic_write(path: str | Path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_matrix(path: str | Path, m: np.ndarray) -> None:
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValueError(f"matrix must be 2-d, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("refusing to write non-finite values")
    bits = 64 if m.dtype == np.float64 else 32
    dtype = np.dtype("<f8") if bits == 64 else np.dtype("<f4")
    header = _HEADER.pack(MAGIC, VERSION, bits, m.shape[0], m.shape[1])
    _atomic_write(path, header + np.ascontiguousarray(m, dtype=dtype).tobytes())


def write_names(path: str | Path, names: list[str]) -> None:
    _atomic_write(path, ("\n".join(names) + "\n").encode("utf-8"))


def write_labels(path: str | Path, labels) -> None:
    _atomic_write(path, ("\n".join(str(int(v)) for v in labels) + "\n").encode("utf-8"))


_INDEX_PREFIX = re.compile(r"^\d+[._\-\s]+")


def clean_name(name: str) -> str:
    """Match the loader-side cleanup: strip index prefixes, underscores
    become spaces ("027.Shiny_Cowbird" -> "Shiny Cowbird")."""
    return _INDEX_PREFIX.sub("", name.strip()).replace("_", " ").strip()


def sha256_of(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
