"""Sparse symmetric patterns and their file formats.

Patterns are purely structural: values in MatrixMarket files are parsed for
validation and then dropped, because fill analysis only needs the nonzero
positions. General (unsymmetric) inputs are symmetrized as the union of the
pattern with its transpose.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np


class ParseError(ValueError):
    """Malformed input file; carries the 1-based offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class SparseSymmetricPattern:
    """Structural nonzero set of a symmetric matrix.

    ``entries`` is a (k, 2) int64 array of folded index pairs with
    ``i <= j``, sorted lexicographically and duplicate-free. Diagonal
    entries are kept: they count toward ``nnz_full``.
    """

    n: int
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= self.n):
            raise ValueError("pattern index out of range")
        lo = np.minimum(e[:, 0], e[:, 1])
        hi = np.maximum(e[:, 0], e[:, 1])
        folded = np.unique(np.column_stack([lo, hi]), axis=0) if e.size else e
        object.__setattr__(self, "entries", folded)

    @property
    def nnz_stored(self) -> int:
        return len(self.entries)

    def nnz_full(self) -> int:
        """Nonzero count of the full (unfolded) symmetric matrix."""
        if not len(self.entries):
            return 0
        diag = int(np.sum(self.entries[:, 0] == self.entries[:, 1]))
        return diag + 2 * (len(self.entries) - diag)

    def offdiagonal(self) -> np.ndarray:
        """Folded off-diagonal entries, i.e. the undirected edge list."""
        e = self.entries
        return e[e[:, 0] != e[:, 1]]

    def has_entry(self, i: int, j: int) -> bool:
        lo, hi = (i, j) if i <= j else (j, i)
        e = self.entries
        pos = np.searchsorted(e[:, 0] * (self.n + 1) + e[:, 1], lo * (self.n + 1) + hi)
        return pos < len(e) and e[pos, 0] == lo and e[pos, 1] == hi

    def entry_set(self) -> frozenset:
        return frozenset((int(i), int(j)) for i, j in self.entries)

    def with_full_diagonal(self) -> tuple["SparseSymmetricPattern", int]:
        """Return a pattern with every diagonal entry present plus the number
        of diagonal entries that had to be added."""
        present = set(int(i) for i, j in self.entries if i == j)
        missing = [v for v in range(self.n) if v not in present]
        if not missing:
            return self, 0
        extra = np.array([[v, v] for v in missing], dtype=np.int64)
        merged = np.vstack([self.entries, extra]) if len(self.entries) else extra
        return SparseSymmetricPattern(self.n, merged), len(missing)


def symmetrize(n: int, pairs: Iterable[tuple[int, int]]) -> SparseSymmetricPattern:
    """Fold an arbitrary (i, j) list into a symmetric pattern: pattern(A) ∪
    pattern(Aᵀ). Idempotent."""
    arr = np.array(list(pairs), dtype=np.int64).reshape(-1, 2)
    return SparseSymmetricPattern(n, arr)


_FIELDS = {"real", "integer", "pattern"}
_SYMMETRIES = {"symmetric", "general"}


def parse_matrix_market(source: str | IO[str]) -> SparseSymmetricPattern:
    """Parse a MatrixMarket coordinate file into a symmetric pattern.

    Accepts real/integer/pattern fields with symmetric or general symmetry.
    General matrices are symmetrized; 1-based indices become 0-based; values
    (including explicit zeros) are kept as structural nonzeros and then
    discarded. The pattern is returned exactly as read; the numeric
    factorization path completes missing diagonal entries itself (it divides
    by them) via :meth:`SparseSymmetricPattern.with_full_diagonal`.
    """
    stream = io.StringIO(source) if isinstance(source, str) else source
    lineno = 0

    banner = stream.readline()
    lineno += 1
    if not banner:
        raise ParseError("empty input", lineno)
    parts = banner.strip().split()
    if len(parts) != 5 or parts[0] != "%%MatrixMarket" or parts[1].lower() != "matrix":
        raise ParseError("expected '%%MatrixMarket matrix coordinate <field> <symmetry>' banner", lineno)
    fmt, fieldkind, symmetry = parts[2].lower(), parts[3].lower(), parts[4].lower()
    if fmt != "coordinate":
        raise ParseError(f"unsupported format {fmt!r} (only coordinate)", lineno)
    if fieldkind == "complex":
        raise ParseError("complex matrices are not supported", lineno)
    if fieldkind not in _FIELDS:
        raise ParseError(f"unsupported field {fieldkind!r}", lineno)
    if symmetry not in _SYMMETRIES:
        raise ParseError(f"unsupported symmetry {symmetry!r}", lineno)

    # size line: first non-comment, non-blank line
    while True:
        line = stream.readline()
        lineno += 1
        if not line:
            raise ParseError("missing size line", lineno)
        stripped = line.strip()
        if stripped and not stripped.startswith("%"):
            break
    tokens = stripped.split()
    if len(tokens) != 3:
        raise ParseError("size line must be 'rows cols nnz'", lineno)
    try:
        rows, cols, nnz = (int(t) for t in tokens)
    except ValueError:
        raise ParseError("size line must hold three integers", lineno) from None
    if rows != cols:
        raise ParseError(f"matrix is not square ({rows}x{cols})", lineno)
    if rows < 0 or nnz < 0:
        raise ParseError("negative dimension or entry count", lineno)

    want_value = fieldkind != "pattern"
    pairs = []
    seen = 0
    while True:
        line = stream.readline()
        lineno += 1
        if not line:
            break
        stripped = line.strip()
        if not stripped or stripped.startswith("%"):
            continue
        tokens = stripped.split()
        expected = 3 if want_value else 2
        if len(tokens) < expected:
            raise ParseError(f"entry needs {expected} tokens, got {len(tokens)}", lineno)
        try:
            i = int(tokens[0])
            j = int(tokens[1])
        except ValueError:
            raise ParseError("entry indices must be integers", lineno) from None
        if want_value:
            try:
                float(tokens[2])
            except ValueError:
                raise ParseError(f"bad numeric value {tokens[2]!r}", lineno) from None
        if not (1 <= i <= rows and 1 <= j <= cols):
            raise ParseError(f"index ({i}, {j}) outside 1..{rows}", lineno)
        pairs.append((i - 1, j - 1))
        seen += 1
    if seen != nnz:
        raise ParseError(f"header declared {nnz} entries but file holds {seen}", lineno)

    return symmetrize(rows, pairs)


def write_matrix_market(pattern: SparseSymmetricPattern, sink: IO[str]) -> None:
    """Emit the folded pattern as a symmetric MatrixMarket pattern file."""
    sink.write("%%MatrixMarket matrix coordinate pattern symmetric\n")
    sink.write(f"{pattern.n} {pattern.n} {pattern.nnz_stored}\n")
    for i, j in pattern.entries:
        # store the lower triangle, as is conventional for symmetric files
        sink.write(f"{int(j) + 1} {int(i) + 1}\n")


def write_permutation(ordering, sink: IO[str]) -> None:
    """One 0-based vertex id per line; line t holds the vertex eliminated at
    step t."""
    sink.write("# elimination order: line t holds the vertex eliminated at step t (0-based)\n")
    for v in ordering.elim_seq:
        sink.write(f"{int(v)}\n")


def parse_permutation(source: str | IO[str]):
    """Read a permutation file written by :func:`write_permutation`.

    Lines starting with '#' are comments. Returns an Ordering.
    """
    from .graph import Ordering

    stream = io.StringIO(source) if isinstance(source, str) else source
    seq = []
    for lineno, line in enumerate(stream, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            seq.append(int(stripped))
        except ValueError:
            raise ParseError(f"bad vertex id {stripped!r}", lineno) from None
    return Ordering(np.asarray(seq, dtype=np.int64))
