"""Pivot dictionaries built from the vocabulary shared by two embedding sets."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from embed_adapt.embeddings import EmbeddingSet
from embed_adapt.errors import DataError, FormatError

FrequencyTable = dict[str, int]


@dataclass(frozen=True)
class TrainingDictionary:
    """Word pivots linking rows of a source and a target embedding set.

    Pairs are kept in target vocabulary order, which fixes a reproducible
    base order for frequency truncation and fold splitting.
    """

    pairs: list[tuple[str, int, int]]  # (word, src_row, tgt_row)
    source_dim: int
    target_dim: int

    def __len__(self) -> int:
        return len(self.pairs)

    def words(self) -> list[str]:
        return [w for w, _, _ in self.pairs]

    def row_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        src = np.array([s for _, s, _ in self.pairs], dtype=np.intp)
        tgt = np.array([t for _, _, t in self.pairs], dtype=np.intp)
        return src, tgt


def build_dictionary(source: EmbeddingSet, target: EmbeddingSet) -> TrainingDictionary:
    """All words common to both vocabularies, in target vocab order."""
    pairs = [(w, source.row(w), i)
             for i, w in enumerate(target.vocab) if w in source]
    if not pairs:
        raise DataError("empty intersection: no shared words between the sets")
    return TrainingDictionary(pairs, source.dim, target.dim)


def truncate_by_frequency(dictionary: TrainingDictionary, freq: FrequencyTable,
                          n: int) -> TrainingDictionary:
    """Keep the min(n, |pairs|) most frequent pairs; ties by target order."""
    if n < 1:
        raise DataError("n must be positive")
    if n >= len(dictionary):
        return dictionary
    # sorted() is stable, so equal counts stay in target vocab order
    ranked = sorted(range(len(dictionary)),
                    key=lambda i: -freq.get(dictionary.pairs[i][0], 0))
    pairs = [dictionary.pairs[i] for i in sorted(ranked[:n])]
    return TrainingDictionary(pairs, dictionary.source_dim, dictionary.target_dim)


def split_folds(dictionary: TrainingDictionary, k: int, seed: int
                ) -> list[list[tuple[str, int, int]]]:
    """Partition the pairs into k folds whose sizes differ by at most one.

    The partition is a deterministic function of (pairs, k, seed).
    """
    n = len(dictionary)
    if k < 1 or k > n:
        raise DataError(f"cannot split {n} pairs into {k} folds")
    order = np.random.default_rng(seed).permutation(n)
    base, extra = divmod(n, k)
    folds = []
    pos = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        folds.append([dictionary.pairs[j] for j in order[pos:pos + size]])
        pos += size
    return folds


def save_dictionary(dictionary: TrainingDictionary, path: str | Path) -> None:
    """Write the pivot words, one per line; indexes are recomputed on load."""
    with open(path, "w", encoding="utf-8") as fh:
        for word in dictionary.words():
            fh.write(word + "\n")


def load_dictionary(path: str | Path, source: EmbeddingSet,
                    target: EmbeddingSet) -> TrainingDictionary:
    """Rebuild a dictionary from a word list against two embedding sets."""
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"no such file: {path}")
    pairs = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            word = line.strip()
            if not word:
                continue
            if word in seen:
                raise FormatError(f"{path}:{lineno}: duplicate word: {word!r}")
            seen.add(word)
            if word not in source or word not in target:
                raise DataError(f"{path}:{lineno}: word {word!r} not in both sets")
            pairs.append((word, source.row(word), target.row(word)))
    if not pairs:
        raise DataError(f"{path}: empty dictionary")
    pairs.sort(key=lambda p: p[2])  # canonical target vocab order
    return TrainingDictionary(pairs, source.dim, target.dim)


def load_counts(path: str | Path) -> FrequencyTable:
    """Read a ``word<TAB>count`` table."""
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"no such file: {path}")
    table: FrequencyTable = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno}: expected 'word<TAB>count'")
            word, raw = parts
            try:
                count = int(raw)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: bad count {raw!r}") from None
            if count < 0:
                raise FormatError(f"{path}:{lineno}: negative count")
            table[word] = count
    return table


def save_counts(table: FrequencyTable, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for word, count in table.items():
            fh.write(f"{word}\t{count}\n")
