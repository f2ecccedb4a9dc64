"""Offline export of model artifacts into the lgdml interchange formats."""

from .manifest import ExtractionManifest
from .text import DEFAULT_PRIMER, export_language_embeddings
from .vision import export_features, export_posteriors

__version__ = "0.1.0"
