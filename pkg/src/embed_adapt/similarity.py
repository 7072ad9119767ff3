"""Exact cosine similarity, top-k neighbors, and neighborhood-change reports.

Search is exact brute force over normalized rows.  Ordering is fully
deterministic: ties in cosine are broken by ascending vocabulary index of
the parent embedding set, so results do not depend on query order or on
the order of a restriction vocabulary.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from embed_adapt.embeddings import EmbeddingSet
from embed_adapt.errors import DataError


@dataclass(frozen=True)
class NeighborList:
    query: str
    neighbors: list[tuple[str, float]]  # (word, cosine), cosine non-increasing

    def words(self) -> list[str]:
        return [w for w, _ in self.neighbors]


@dataclass(frozen=True)
class NeighborReport:
    k: int
    vocab: list[str]
    per_word: dict[str, tuple[NeighborList, NeighborList, bool]]

    @property
    def changed_count(self) -> int:
        return sum(changed for _, _, changed in self.per_word.values())


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine of the angle between two vectors, clamped to [-1, 1]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DataError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise DataError("undefined cosine: zero vector")
    return float(np.clip(float(u @ v) / (nu * nv), -1.0, 1.0))


def _unit_rows(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Normalize rows; returns (unit matrix, boolean mask of nonzero rows)."""
    norms = np.linalg.norm(matrix, axis=1)
    ok = norms > 0.0
    unit = np.zeros_like(matrix)
    unit[ok] = matrix[ok] / norms[ok, None]
    return unit, ok


def _rank(sims: np.ndarray, tiebreak: np.ndarray, exclude: int,
          valid: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k best candidates: by cosine desc, then tiebreak asc."""
    sims = sims.copy()
    sims[exclude] = -np.inf
    sims[~valid] = -np.inf
    order = np.lexsort((tiebreak, -sims))
    picked = order[:k]
    if np.isinf(sims[picked]).any():
        raise DataError(f"fewer than {k} valid neighbor candidates")
    return picked


def top_k_neighbors(emb: EmbeddingSet, query: str, k: int) -> NeighborList:
    """The k vocabulary words closest to ``query`` by cosine, exactly."""
    qi = emb.row(query)
    if k < 1:
        raise DataError("k must be positive")
    if k >= len(emb):
        raise DataError(f"k={k} must be smaller than the vocabulary ({len(emb)})")
    unit, ok = _unit_rows(emb.matrix)
    if not ok[qi]:
        raise DataError(f"undefined cosine: zero vector for query {query!r}")
    sims = np.clip(unit @ unit[qi], -1.0, 1.0)
    picked = _rank(sims, np.arange(len(emb)), qi, ok, k)
    return NeighborList(query, [(emb.vocab[i], float(sims[i])) for i in picked])


def _restricted_lists(emb: EmbeddingSet, vocab: list[str], k: int
                      ) -> dict[str, NeighborList]:
    """Top-k lists for every word of ``vocab``, searched within ``vocab`` only.

    Ties are broken by index in ``emb.vocab``, which makes the result
    independent of the order of ``vocab``.
    """
    parent = np.array([emb.row(w) for w in vocab], dtype=np.intp)
    unit, ok = _unit_rows(emb.matrix[parent])
    sims = np.clip(unit @ unit.T, -1.0, 1.0)
    out: dict[str, NeighborList] = {}
    for i, word in enumerate(vocab):
        if not ok[i]:
            raise DataError(f"undefined cosine: zero vector for {word!r}")
        picked = _rank(sims[i], parent, i, ok, k)
        out[word] = NeighborList(word, [(vocab[j], float(sims[i, j])) for j in picked])
    return out


def neighbor_change_report(before: EmbeddingSet, after: EmbeddingSet,
                           vocab: list[str], k: int = 1) -> NeighborReport:
    """Compare top-k neighbor sets before and after adaptation.

    Neighbors are computed inside the restricted ``vocab`` only.  A word
    counts as changed when its before/after neighbor sets differ
    (order-insensitive).
    """
    if len(vocab) != len(set(vocab)):
        raise DataError("restriction vocabulary contains duplicates")
    if len(vocab) < k + 1:
        raise DataError(f"vocabulary of {len(vocab)} words is too small for k={k}")
    for w in vocab:
        if w not in before or w not in after:
            raise DataError(f"word {w!r} missing from one of the embedding sets")
    lists_before = _restricted_lists(before, vocab, k)
    lists_after = _restricted_lists(after, vocab, k)
    per_word = {}
    for w in vocab:
        b, a = lists_before[w], lists_after[w]
        per_word[w] = (b, a, set(b.words()) != set(a.words()))
    return NeighborReport(k=k, vocab=list(vocab), per_word=per_word)


def neighbor_table(sets: list[tuple[str, EmbeddingSet]], queries: list[str],
                   k: int) -> list[tuple[str, str, NeighborList | None]]:
    """One row per (query, set): the top-k neighbors, or None when absent."""
    rows: list[tuple[str, str, NeighborList | None]] = []
    for query in queries:
        for name, emb in sets:
            if query in emb:
                rows.append((query, name, top_k_neighbors(emb, query, k)))
            else:
                rows.append((query, name, None))
    return rows


def mean_pairwise_cosine(matrix: np.ndarray) -> float:
    """Mean cosine over all distinct row pairs, computed in O(n*d).

    Uses sum_{i != j} u_i . u_j = |sum_i u_i|^2 - n over unit rows.  Zero
    rows are ignored; a matrix with fewer than two nonzero rows is treated
    as fully collapsed (returns 1.0).
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    unit, ok = _unit_rows(matrix)
    n = int(ok.sum())
    if n < 2:
        return 1.0
    total = unit[ok].sum(axis=0)
    return float((total @ total - n) / (n * (n - 1)))


COLLAPSE_THRESHOLD = 0.95


def collapse_report(emb: EmbeddingSet) -> tuple[float, bool]:
    """Mean pairwise cosine of the set plus a degenerate-collapse flag."""
    mean = mean_pairwise_cosine(emb.matrix)
    return mean, mean > COLLAPSE_THRESHOLD


def report_to_dict(report: NeighborReport) -> dict:
    return {
        "k": report.k,
        "vocab_size": len(report.vocab),
        "changed_count": report.changed_count,
        "per_word": [
            {
                "word": w,
                "before": [{"word": n, "cosine": c} for n, c in b.neighbors],
                "after": [{"word": n, "cosine": c} for n, c in a.neighbors],
                "changed": changed,
            }
            for w, (b, a, changed) in report.per_word.items()
        ],
    }


def write_report(report: NeighborReport, path: str | Path) -> None:
    """Write a NeighborReport as JSON or CSV depending on the extension."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["word", "changed", "before", "after"])
            for w, (b, a, changed) in report.per_word.items():
                writer.writerow([w, int(changed),
                                 " ".join(b.words()), " ".join(a.words())])
    else:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report_to_dict(report), fh, indent=2)
            fh.write("\n")
