"""Embedding sets and the word2vec-style text / binary interchange formats.

Text format (FastText ``.vec`` files are this format)::

    <vocab_size> <dim>\n
    <word> <v1> <v2> ... <vdim>\n
    ...

Floats are written with Python's shortest round-trip decimal representation,
so text round-trips are value-exact.

Binary format::

    ASCII header b"<vocab_size> <dim>\\n", then per word: the UTF-8 word
    bytes, a single space (0x20), ``dim`` little-endian IEEE-754 float32
    values, and a single newline (0x0A).

The trailing per-record newline varies between word2vec builds; the reader
tolerates records with or without it.  Vectors are held as float64
internally; float32 applies only at the binary file boundary.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from embed_adapt.errors import DataError, FormatError

logger = logging.getLogger(__name__)

FORMATS = ("text", "binary")


class EmbeddingSet:
    """An ordered vocabulary with one dense float64 row vector per word.

    Immutable after construction: the matrix is marked read-only and is
    safe to share across threads.
    """

    def __init__(self, vocab: list[str], matrix: np.ndarray):
        matrix = np.ascontiguousarray(matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise DataError(f"matrix must be 2-D, got shape {matrix.shape}")
        if len(vocab) != matrix.shape[0]:
            raise DataError(
                f"count mismatch: {len(vocab)} words but {matrix.shape[0]} rows")
        if len(vocab) == 0:
            raise DataError("empty embedding set")
        if not np.isfinite(matrix).all():
            raise DataError("non-finite value in embedding matrix")
        self._index: dict[str, int] = {}
        for i, word in enumerate(vocab):
            if word in self._index:
                raise DataError(f"duplicate word: {word!r}")
            self._index[word] = i
        self.vocab = list(vocab)
        self.matrix = matrix
        self.matrix.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.vocab)

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def __eq__(self, other) -> bool:
        return (isinstance(other, EmbeddingSet)
                and self.vocab == other.vocab
                and self.matrix.shape == other.matrix.shape
                and bool(np.array_equal(self.matrix, other.matrix)))

    def row(self, word: str) -> int:
        try:
            return self._index[word]
        except KeyError:
            raise DataError(f"unknown word: {word!r}") from None

    def vector(self, word: str) -> np.ndarray:
        return self.matrix[self.row(word)]

    def subset(self, words: list[str]) -> "EmbeddingSet":
        """Restrict to ``words`` (in their order); missing words are dropped.

        Duplicate requests keep the first occurrence.  The number of dropped
        words is reported via logging.
        """
        seen: set[str] = set()
        kept: list[str] = []
        dropped = 0
        for w in words:
            if w in seen:
                continue
            seen.add(w)
            if w in self._index:
                kept.append(w)
            else:
                dropped += 1
        if dropped:
            logger.info("subset: dropped %d word(s) not in vocabulary", dropped)
        if not kept:
            raise DataError("subset selects no words")
        rows = np.array([self._index[w] for w in kept], dtype=np.intp)
        return EmbeddingSet(kept, self.matrix[rows])


def load(path: str | Path, kind: str) -> EmbeddingSet:
    """Read an embedding set from ``path`` in the given format."""
    if kind not in FORMATS:
        raise DataError(f"unknown format: {kind!r}")
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"no such file: {path}")
    if kind == "text":
        return _load_text(path)
    return _load_binary(path)


def save(emb: EmbeddingSet, path: str | Path, kind: str) -> None:
    """Write ``emb`` to ``path`` in the given format."""
    if kind not in FORMATS:
        raise DataError(f"unknown format: {kind!r}")
    for word in emb.vocab:
        if not word or any(ch.isspace() for ch in word):
            raise DataError(f"word not representable in format: {word!r}")
    if kind == "text":
        _save_text(emb, path)
    else:
        _save_binary(emb, path)


def _parse_header(line: str, where: str) -> tuple[int, int]:
    parts = line.split()
    try:
        n, d = (int(p) for p in parts)
    except ValueError:
        raise FormatError(f"{where}: malformed header: {line!r}") from None
    if len(parts) != 2 or n <= 0 or d <= 0:
        raise FormatError(f"{where}: malformed header: {line!r}")
    return n, d


def _load_text(path: Path) -> EmbeddingSet:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header:
            raise FormatError(f"{path}: empty file")
        n, d = _parse_header(header, str(path))
        vocab: list[str] = []
        rows = np.empty((n, d), dtype=np.float64)
        count = 0
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue  # tolerate blank trailing lines
            if count >= n:
                raise FormatError(f"{path}: count mismatch: header says {n} words")
            if len(parts) != d + 1:
                raise FormatError(
                    f"{path}:{lineno}: dimension mismatch: expected {d} values, "
                    f"got {len(parts) - 1}")
            try:
                rows[count] = np.array(parts[1:], dtype=np.float64)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: unparseable value") from None
            vocab.append(parts[0])
            count += 1
        if count != n:
            raise FormatError(
                f"{path}: count mismatch: header says {n} words, found {count}")
    return _checked_set(vocab, rows, str(path))


def _save_text(emb: EmbeddingSet, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(emb)} {emb.dim}\n")
        for word, row in zip(emb.vocab, emb.matrix):
            fh.write(word)
            fh.write(" ")
            fh.write(" ".join(repr(v) for v in row.tolist()))
            fh.write("\n")


def _load_binary(path: Path) -> EmbeddingSet:
    data = path.read_bytes()
    eol = data.find(b"\n")
    if eol < 0:
        raise FormatError(f"{path}: malformed header: no newline")
    try:
        header = data[:eol].decode("ascii")
    except UnicodeDecodeError:
        raise FormatError(f"{path}: malformed header: not ASCII") from None
    n, d = _parse_header(header, str(path))
    vocab: list[str] = []
    rows = np.empty((n, d), dtype=np.float64)
    rec = 4 * d
    pos = eol + 1
    end = len(data)
    for i in range(n):
        if pos >= end:
            raise FormatError(
                f"{path}: count mismatch: header says {n} words, found {i}")
        sep = data.find(b" ", pos)
        if sep < 0 or sep + rec > end:
            raise FormatError(f"{path}: truncated record {i}")
        try:
            word = data[pos:sep].decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"{path}: record {i}: word is not UTF-8") from None
        vec = np.frombuffer(data, dtype="<f4", count=d, offset=sep + 1)
        rows[i] = vec
        vocab.append(word)
        pos = sep + 1 + rec
        # per-record trailing newline is optional on read
        if pos < end and data[pos] == 0x0A:
            pos += 1
    if data[pos:].strip(b"\n"):
        raise FormatError(
            f"{path}: count mismatch: trailing data after {n} records")
    return _checked_set(vocab, rows, str(path))


def _save_binary(emb: EmbeddingSet, path: str | Path) -> None:
    as32 = emb.matrix.astype("<f4")
    if not np.isfinite(as32).all():
        raise DataError("value not representable as float32")
    chunks = [f"{len(emb)} {emb.dim}\n".encode("ascii")]
    for word, row in zip(emb.vocab, as32):
        chunks.append(word.encode("utf-8"))
        chunks.append(b" ")
        chunks.append(row.tobytes())
        chunks.append(b"\n")
    Path(path).write_bytes(b"".join(chunks))


def _checked_set(vocab: list[str], rows: np.ndarray, where: str) -> EmbeddingSet:
    try:
        return EmbeddingSet(vocab, rows)
    except DataError as exc:
        raise FormatError(f"{where}: {exc}") from None
