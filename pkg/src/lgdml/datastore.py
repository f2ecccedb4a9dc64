"""Interchange file formats.

Binary matrix container (magic "LGDM"), class-name sidecar files,
language tables, dataset bundle directories, training checkpoints and
history tables. All writes are atomic (temp file + rename) and all reads
validate magic, payload length and finiteness.
"""

from __future__ import annotations

import json
import os
import re
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import simcore
from .errors import (BadMagic, CountMismatch, DuplicateName, NonFiniteValue,
                     ShapeMismatch, TruncatedPayload)
from .pseudolabels import PosteriorMatrix

MATRIX_MAGIC = b"LGDM"
MATRIX_VERSION = 1
CHECKPOINT_MAGIC = b"LGCK"
_HEADER = struct.Struct("<4sHHQQ")  # magic, version, dtype bits, rows, cols
_DTYPES = {32: np.dtype("<f4"), 64: np.dtype("<f8")}


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


def matrix_bytes(m: np.ndarray) -> bytes:
    m = np.asarray(m)
    if m.ndim != 2:
        raise ShapeMismatch(f"matrix must be 2-d, got {m.shape}")
    bad = np.flatnonzero(~np.isfinite(m))
    if bad.size:
        raise NonFiniteValue(int(bad[0]))
    bits = 64 if m.dtype == np.float64 else 32
    payload = np.ascontiguousarray(m, dtype=_DTYPES[bits])
    header = _HEADER.pack(MATRIX_MAGIC, MATRIX_VERSION, bits, m.shape[0], m.shape[1])
    return header + payload.tobytes()


def write_matrix(path: str | Path, m: np.ndarray) -> None:
    _atomic_write(path, matrix_bytes(m))


def matrix_from_bytes(blob: bytes) -> np.ndarray:
    if len(blob) < _HEADER.size:
        raise TruncatedPayload(f"file shorter than header ({len(blob)} bytes)")
    magic, version, bits, rows, cols = _HEADER.unpack_from(blob)
    if magic != MATRIX_MAGIC:
        raise BadMagic(f"expected {MATRIX_MAGIC!r}, got {magic!r}")
    if version != MATRIX_VERSION or bits not in _DTYPES:
        raise BadMagic(f"unsupported version/dtype ({version}, {bits})")
    dtype = _DTYPES[bits]
    expected = _HEADER.size + rows * cols * dtype.itemsize
    if len(blob) != expected:
        raise TruncatedPayload(f"expected {expected} bytes, got {len(blob)}")
    m = np.frombuffer(blob, dtype=dtype, offset=_HEADER.size).reshape(rows, cols)
    bad = np.flatnonzero(~np.isfinite(m))
    if bad.size:
        raise NonFiniteValue(int(bad[0]))
    return m.copy()


def read_matrix(path: str | Path) -> np.ndarray:
    return matrix_from_bytes(Path(path).read_bytes())


# ----------------------------------------------------------------- sidecars


def write_names(path: str | Path, names: list[str]) -> None:
    _atomic_write(path, ("\n".join(names) + "\n").encode("utf-8"))


def read_names(path: str | Path) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    return [line for line in text.splitlines() if line.strip()]


_INDEX_PREFIX = re.compile(r"^\d+[._\-\s]+")


def clean_class_name(name: str) -> str:
    """Dataset-artifact cleanup: drop leading index prefixes and turn
    underscores into spaces ("027.Shiny_Cowbird" -> "Shiny Cowbird")."""
    return _INDEX_PREFIX.sub("", name.strip()).replace("_", " ").strip()


@dataclass
class LanguageTable:
    """Unit-norm language embedding per class name (or sample id)."""
    names: list[str]
    embeddings: np.ndarray
    primer: str | None = None  # recorded for provenance only

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings)
        if len(self.names) != self.embeddings.shape[0]:
            raise CountMismatch(
                f"{len(self.names)} names vs {self.embeddings.shape[0]} rows")
        if len(set(self.names)) != len(self.names):
            seen = set()
            dup = next(n for n in self.names if n in seen or seen.add(n))
            raise DuplicateName(f"duplicate name {dup!r}")

    def row(self, name: str) -> np.ndarray:
        return self.embeddings[self.names.index(name)]


def load_language_table(matrix_path, names_path, primer: str | None = None) -> LanguageTable:
    """Load a table; names are cleaned and rows unit-normalized on ingest."""
    emb = read_matrix(matrix_path)
    names = [clean_class_name(n) for n in read_names(names_path)]
    if len(names) != emb.shape[0]:
        raise CountMismatch(f"{len(names)} names vs {emb.shape[0]} rows")
    return LanguageTable(names, simcore.normalize_rows(emb), primer=primer)


def save_language_table(matrix_path, names_path, table: LanguageTable) -> None:
    write_matrix(matrix_path, table.embeddings)
    write_names(names_path, table.names)


def load_external_targets(matrix_path, names_path) -> tuple[np.ndarray, list[str]]:
    """Class-by-class target matrix with [0, 1] entries rescaled to [-1, 1]
    on load so it shares the cosine scale of language similarities."""
    m = read_matrix(matrix_path)
    names = [clean_class_name(n) for n in read_names(names_path)]
    if m.shape[0] != m.shape[1]:
        raise ShapeMismatch("external target matrix must be square")
    if len(names) != m.shape[0]:
        raise CountMismatch(f"{len(names)} names vs {m.shape[0]} rows")
    if m.min() < -1e-9 or m.max() > 1 + 1e-9:
        raise ValueError("external target entries must lie in [0, 1]")
    return 2.0 * m - 1.0, names


# ------------------------------------------------------------------ bundles


@dataclass
class DatasetBundle:
    features: np.ndarray
    labels: np.ndarray
    class_names: list[str]
    train_classes: list[int]
    test_classes: list[int]
    posteriors: PosteriorMatrix | None = None
    lang_class: LanguageTable | None = None
    lang_sample: LanguageTable | None = None
    lang_pseudo: LanguageTable | None = None
    external_targets: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features)
        self.labels = np.asarray(self.labels)
        if self.features.shape[0] != self.labels.shape[0]:
            raise CountMismatch("features and labels disagree on sample count")
        if self.labels.size and self.labels.max() >= len(self.class_names):
            raise CountMismatch("label outside class_names range")

    def subset(self, classes: list[int]) -> tuple[np.ndarray, np.ndarray]:
        mask = np.isin(self.labels, classes)
        return self.features[mask], self.labels[mask]

    def sample_ids(self) -> np.ndarray:
        return np.arange(self.features.shape[0])


def save_bundle(directory: str | Path, bundle: DatasetBundle) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_matrix(d / "features.lgdm", bundle.features)
    _atomic_write(d / "labels.txt", ("\n".join(str(int(v)) for v in bundle.labels) + "\n").encode())
    write_names(d / "class_names.txt", bundle.class_names)
    split = {"train_classes": [int(c) for c in bundle.train_classes],
             "test_classes": [int(c) for c in bundle.test_classes]}
    _atomic_write(d / "split.json", (json.dumps(split, indent=2, sort_keys=True) + "\n").encode())
    _atomic_write(d / "meta.json", (json.dumps(bundle.meta, indent=2, sort_keys=True) + "\n").encode())
    if bundle.posteriors is not None:
        write_matrix(d / "posteriors.lgdm", bundle.posteriors.data)
        write_names(d / "pretrain_names.txt", bundle.posteriors.class_names)
    for tag, table in [("lang_class", bundle.lang_class),
                       ("lang_sample", bundle.lang_sample),
                       ("lang_pseudo", bundle.lang_pseudo)]:
        if table is not None:
            save_language_table(d / f"{tag}.lgdm", d / f"{tag}_names.txt", table)
    if bundle.external_targets is not None:
        # stored on the [0, 1] hierarchy scale; rescaled to [-1, 1] on load
        write_matrix(d / "external_targets.lgdm", (bundle.external_targets + 1.0) / 2.0)
        write_names(d / "external_names.txt", bundle.class_names)


def load_bundle(directory: str | Path) -> DatasetBundle:
    d = Path(directory)
    features = read_matrix(d / "features.lgdm")
    labels = np.array([int(v) for v in read_names(d / "labels.txt")], dtype=np.int64)
    class_names = read_names(d / "class_names.txt")
    split = json.loads((d / "split.json").read_text())
    meta = json.loads((d / "meta.json").read_text()) if (d / "meta.json").exists() else {}
    posteriors = None
    if (d / "posteriors.lgdm").exists():
        posteriors = PosteriorMatrix(read_matrix(d / "posteriors.lgdm"),
                                     read_names(d / "pretrain_names.txt"))
    tables = {}
    for tag in ("lang_class", "lang_sample", "lang_pseudo"):
        if (d / f"{tag}.lgdm").exists():
            tables[tag] = load_language_table(d / f"{tag}.lgdm", d / f"{tag}_names.txt")
    external = None
    if (d / "external_targets.lgdm").exists():
        external, _ = load_external_targets(d / "external_targets.lgdm", d / "external_names.txt")
    return DatasetBundle(features=features, labels=labels, class_names=class_names,
                         train_classes=split["train_classes"],
                         test_classes=split["test_classes"],
                         posteriors=posteriors,
                         lang_class=tables.get("lang_class"),
                         lang_sample=tables.get("lang_sample"),
                         lang_pseudo=tables.get("lang_pseudo"),
                         external_targets=external, meta=meta)


# --------------------------------------------------------------- checkpoints


def save_checkpoint(path: str | Path, config_text: str, arrays: dict[str, np.ndarray]) -> None:
    """Header + config echo + named matrices, each in the matrix format."""
    parts = [CHECKPOINT_MAGIC, struct.pack("<H", MATRIX_VERSION)]
    blob = config_text.encode("utf-8")
    parts.append(struct.pack("<Q", len(blob)))
    parts.append(blob)
    parts.append(struct.pack("<H", len(arrays)))
    for name, arr in arrays.items():
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        mb = matrix_bytes(np.atleast_2d(arr))
        parts.append(struct.pack("<Q", len(mb)))
        parts.append(mb)
    _atomic_write(path, b"".join(parts))


def load_checkpoint(path: str | Path) -> tuple[str, dict[str, np.ndarray]]:
    blob = Path(path).read_bytes()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise BadMagic(f"expected {CHECKPOINT_MAGIC!r}")
    off = 4 + 2
    (clen,) = struct.unpack_from("<Q", blob, off)
    off += 8
    config_text = blob[off : off + clen].decode("utf-8")
    off += clen
    (count,) = struct.unpack_from("<H", blob, off)
    off += 2
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off : off + nlen].decode("utf-8")
        off += nlen
        (mlen,) = struct.unpack_from("<Q", blob, off)
        off += 8
        arrays[name] = matrix_from_bytes(blob[off : off + mlen])
        off += mlen
    return config_text, arrays


def write_history_csv(path: str | Path, history) -> None:
    lines = ["epoch,total_loss,dml_loss,match_loss,val_recall1,lr"]
    for i in range(len(history.total_loss)):
        lines.append(",".join([
            str(i),
            repr(history.total_loss[i]),
            repr(history.dml_loss[i]),
            repr(history.match_loss[i]),
            repr(history.val_recall1[i]),
            repr(history.lr[i]),
        ]))
    _atomic_write(path, ("\n".join(lines) + "\n").encode())
