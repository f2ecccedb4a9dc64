"""Extraction manifest: what was run, what was written, with checksums."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .formats import sha256_of


@dataclass
class ExtractionManifest:
    vision_model_id: str | None = None
    text_model_ids: list[str] = field(default_factory=list)
    captioner_id: str | None = None
    primer: str | None = None
    dataset: str | None = None
    outputs: dict[str, str] = field(default_factory=dict)  # path -> sha256

    def record(self, path) -> None:
        self.outputs[str(path)] = sha256_of(path)

    def validate(self) -> None:
        """Every declared output must exist and match its checksum."""
        for path, digest in self.outputs.items():
            if not Path(path).exists():
                raise FileNotFoundError(f"manifest output missing: {path}")
            actual = sha256_of(path)
            if actual != digest:
                raise ValueError(f"checksum mismatch for {path}: "
                                 f"{actual} != {digest}")

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ExtractionManifest":
        return cls(**json.loads(Path(path).read_text()))
