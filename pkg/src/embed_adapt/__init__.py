"""Toolkit for adapting word embeddings across domains.

Provides embedding file I/O, exact cosine nearest-neighbor analysis,
pivot dictionaries, linear (Procrustes / least-squares) and nonlinear
(MLP ensemble) cross-space mappings, a small skip-gram negative-sampling
trainer with preinitialization and frequency-weighted regularization,
and a pipeline layer tying the adaptation methods together.
"""

__version__ = "0.1.0"

from embed_adapt.embeddings import EmbeddingSet, load, save
from embed_adapt.errors import DataError, FormatError, NumericalError, UsageError

__all__ = [
    "EmbeddingSet",
    "load",
    "save",
    "DataError",
    "FormatError",
    "NumericalError",
    "UsageError",
    "__version__",
]
