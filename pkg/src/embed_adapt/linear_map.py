"""Linear source-to-target mappings learned over a pivot dictionary.

Two modes:

* ``least_squares`` minimizes sum_i ||x_i W - z_i||^2 (minimum-norm solution
  when the problem is rank deficient).
* ``orthogonal`` solves the orthogonal Procrustes problem: with the
  cross-covariance M = X^T Z = U S V^T, the optimum is W = U V^T.

Preprocessing (applied to dictionary rows during fit and replayed exactly
on apply): optional unit length normalization of each row, then optional
centering with the dictionary means.  The means are stored on the map, so
apply never recomputes statistics from the full vocabulary.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from embed_adapt.dictionary import TrainingDictionary
from embed_adapt.embeddings import EmbeddingSet
from embed_adapt.errors import DataError, FormatError, NumericalError

logger = logging.getLogger(__name__)

MODES = ("least_squares", "orthogonal")

_MAGIC = b"EALM"
_VERSION = 1


@dataclass(frozen=True)
class LinearMap:
    W: np.ndarray  # (d_src, d_tgt)
    mode: str
    unit_normalize: bool
    mean_center: bool
    source_mean: np.ndarray | None = None
    target_mean: np.ndarray | None = None

    @property
    def d_src(self) -> int:
        return self.W.shape[0]

    @property
    def d_tgt(self) -> int:
        return self.W.shape[1]


def _preprocess(rows: np.ndarray, unit_normalize: bool,
                mean: np.ndarray | None) -> np.ndarray:
    out = np.array(rows, dtype=np.float64)
    if unit_normalize:
        norms = np.linalg.norm(out, axis=1)
        nz = norms > 0.0
        out[nz] = out[nz] / norms[nz, None]
    if mean is not None:
        out = out - mean
    return out


def fit_linear(source: EmbeddingSet, target: EmbeddingSet,
               dictionary: TrainingDictionary, mode: str = "orthogonal",
               unit_normalize: bool = True, mean_center: bool = True) -> LinearMap:
    """Learn the mapping over the dictionary pairs."""
    if mode not in MODES:
        raise DataError(f"unknown mode: {mode!r}")
    if mode == "orthogonal" and source.dim != target.dim:
        raise DataError(
            f"orthogonal mode needs equal dims, got {source.dim} vs {target.dim}")
    if len(dictionary) < source.dim:
        logger.warning("dictionary has %d pairs for %d source dims; "
                       "the fit may be underdetermined", len(dictionary), source.dim)
    src_rows, tgt_rows = dictionary.row_arrays()
    X = source.matrix[src_rows]
    Z = target.matrix[tgt_rows]
    src_mean = tgt_mean = None
    if unit_normalize:
        X = _preprocess(X, True, None)
        Z = _preprocess(Z, True, None)
    if mean_center:
        src_mean = X.mean(axis=0)
        tgt_mean = Z.mean(axis=0)
        X = X - src_mean
        Z = Z - tgt_mean

    if mode == "orthogonal":
        try:
            u, _, vt = np.linalg.svd(X.T @ Z)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"SVD did not converge: {exc}") from None
        W = u @ vt
    else:
        W, _, rank, _ = np.linalg.lstsq(X, Z, rcond=None)
        if rank < source.dim:
            logger.warning("rank-deficient system (rank %d < %d); "
                           "using the minimum-norm solution", rank, source.dim)
    if not np.isfinite(W).all():
        raise NumericalError("non-finite mapping matrix")
    return LinearMap(W=W, mode=mode, unit_normalize=unit_normalize,
                     mean_center=mean_center,
                     source_mean=src_mean, target_mean=tgt_mean)


def apply_linear(linmap: LinearMap, source: EmbeddingSet) -> EmbeddingSet:
    """Map every source word: x -> preprocess(x) @ W, full vocabulary."""
    if source.dim != linmap.d_src:
        raise DataError(
            f"dimension mismatch: map expects {linmap.d_src}, set has {source.dim}")
    X = _preprocess(source.matrix, linmap.unit_normalize,
                    linmap.source_mean if linmap.mean_center else None)
    return EmbeddingSet(source.vocab, X @ linmap.W)


def save_map(linmap: LinearMap, path: str | Path) -> None:
    mode_byte = MODES.index(linmap.mode)
    flags = (1 if linmap.unit_normalize else 0) | (2 if linmap.mean_center else 0)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<BBBII", _VERSION, mode_byte, flags,
                             linmap.d_src, linmap.d_tgt))
        fh.write(np.ascontiguousarray(linmap.W, dtype="<f8").tobytes())
        if linmap.mean_center:
            fh.write(np.ascontiguousarray(linmap.source_mean, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(linmap.target_mean, dtype="<f8").tobytes())


def load_map(path: str | Path) -> LinearMap:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"no such file: {path}")
    data = path.read_bytes()
    if data[:4] != _MAGIC:
        raise FormatError(f"{path}: not a linear map file")
    try:
        version, mode_byte, flags, d_src, d_tgt = struct.unpack_from("<BBBII", data, 4)
    except struct.error:
        raise FormatError(f"{path}: truncated header") from None
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if mode_byte >= len(MODES):
        raise FormatError(f"{path}: bad mode byte {mode_byte}")
    unit_normalize = bool(flags & 1)
    mean_center = bool(flags & 2)
    pos = 4 + struct.calcsize("<BBBII")
    need = d_src * d_tgt * 8
    if mean_center:
        need += (d_src + d_tgt) * 8
    if len(data) - pos != need:
        raise FormatError(f"{path}: payload size mismatch")
    W = np.frombuffer(data, dtype="<f8", count=d_src * d_tgt,
                      offset=pos).reshape(d_src, d_tgt).copy()
    pos += d_src * d_tgt * 8
    src_mean = tgt_mean = None
    if mean_center:
        src_mean = np.frombuffer(data, dtype="<f8", count=d_src, offset=pos).copy()
        pos += d_src * 8
        tgt_mean = np.frombuffer(data, dtype="<f8", count=d_tgt, offset=pos).copy()
    return LinearMap(W=W, mode=MODES[mode_byte], unit_normalize=unit_normalize,
                     mean_center=mean_center,
                     source_mean=src_mean, target_mean=tgt_mean)
