"""Sparse parity-check matrices, PEG construction, syndromes and alist I/O."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numba
import numpy as np

from .errors import AlistParseError, ParameterError

COLUMN_DEGREE = 3


def _frozen(a) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.int64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class ParityCheckMatrix:
    """Binary ``m x n`` parity-check matrix kept as a Tanner graph.

    Rows (checks) are stored CSR-style: the variables of check ``j`` are
    ``indices[indptr[j]:indptr[j + 1]]``, sorted ascending. The column
    view is derived once and cached.
    """

    n_cols: int
    n_rows: int
    indptr: np.ndarray
    indices: np.ndarray
    _col_indptr: np.ndarray = field(init=False, repr=False)
    _col_indices: np.ndarray = field(init=False, repr=False)
    _hash: int = field(init=False, repr=False)

    def __post_init__(self):
        indptr = _frozen(self.indptr)
        indices = _frozen(self.indices)
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        _validate(self.n_rows, self.n_cols, indptr, indices)
        rows = np.repeat(np.arange(self.n_rows), np.diff(indptr))
        order = np.lexsort((rows, indices))
        col_counts = np.bincount(indices, minlength=self.n_cols)
        col_indptr = np.concatenate(([0], np.cumsum(col_counts)))
        object.__setattr__(self, "_col_indptr", _frozen(col_indptr))
        object.__setattr__(self, "_col_indices", _frozen(rows[order]))
        object.__setattr__(
            self, "_hash", hash((self.n_cols, self.n_rows, indptr.tobytes(), indices.tobytes()))
        )

    @classmethod
    def from_rows(cls, rows: Sequence[Iterable[int]], n_cols: int) -> "ParityCheckMatrix":
        adj = [sorted(int(i) for i in r) for r in rows]
        indptr = np.concatenate(([0], np.cumsum([len(r) for r in adj]))).astype(np.int64)
        indices = np.fromiter((i for r in adj for i in r), dtype=np.int64, count=int(indptr[-1]))
        return cls(n_cols, len(adj), indptr, indices)

    @classmethod
    def from_dense(cls, h) -> "ParityCheckMatrix":
        h = np.asarray(h)
        return cls.from_rows([np.flatnonzero(row) for row in h], h.shape[1])

    @property
    def n_edges(self) -> int:
        return int(self.indptr[-1])

    @property
    def rate(self) -> float:
        return 1.0 - self.n_rows / self.n_cols

    @property
    def row_adj(self) -> list[list[int]]:
        p, ix = self.indptr, self.indices
        return [ix[p[j]:p[j + 1]].tolist() for j in range(self.n_rows)]

    @property
    def col_adj(self) -> list[list[int]]:
        p, ix = self._col_indptr, self._col_indices
        return [ix[p[i]:p[i + 1]].tolist() for i in range(self.n_cols)]

    @property
    def col_indptr(self) -> np.ndarray:
        return self._col_indptr

    @property
    def col_indices(self) -> np.ndarray:
        return self._col_indices

    def row_degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def col_degrees(self) -> np.ndarray:
        return np.diff(self._col_indptr)

    def edges(self) -> frozenset[tuple[int, int]]:
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.indptr))
        return frozenset(zip(rows.tolist(), self.indices.tolist()))

    def to_dense(self) -> np.ndarray:
        h = np.zeros((self.n_rows, self.n_cols), dtype=np.uint8)
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.indptr))
        h[rows, self.indices] = 1
        return h

    def __eq__(self, other):
        if not isinstance(other, ParityCheckMatrix):
            return NotImplemented
        return (
            self._hash == other._hash
            and self.n_cols == other.n_cols
            and self.n_rows == other.n_rows
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )

    def __hash__(self):
        return self._hash


def _validate(m: int, n: int, indptr: np.ndarray, indices: np.ndarray) -> None:
    if m < 1 or n < 1:
        raise ParameterError(f"matrix must be non-empty, got {m}x{n}")
    if indptr.shape != (m + 1,) or indptr[0] != 0 or indptr[-1] != indices.size:
        raise ParameterError("inconsistent row pointer array")
    deg = np.diff(indptr)
    if np.any(deg < 1):
        raise ParameterError(f"check {int(np.argmin(deg))} has no neighbours")
    if indices.size and (indices.min() < 0 or indices.max() >= n):
        raise ParameterError("variable index out of range")
    rows = np.repeat(np.arange(m), deg)
    same_row = rows[1:] == rows[:-1]
    if np.any(same_row & (indices[1:] <= indices[:-1])):
        raise ParameterError("row adjacency must be strictly increasing (no duplicates)")
    if np.any(np.bincount(indices, minlength=n) < 1):
        raise ParameterError("every variable must belong to at least one check")


@dataclass(frozen=True)
class MatrixSet:
    """N parity-check matrices sharing ``n`` and ``m`` (hence one rate)."""

    matrices: tuple[ParityCheckMatrix, ...]
    seed: int | None = None

    def __post_init__(self):
        mats = tuple(self.matrices)
        object.__setattr__(self, "matrices", mats)
        if not mats:
            raise ParameterError("a matrix set needs at least one matrix")
        shapes = {(h.n_rows, h.n_cols) for h in mats}
        if len(shapes) != 1:
            raise ParameterError(f"matrices disagree on shape: {sorted(shapes)}")

    def __len__(self):
        return len(self.matrices)

    def __iter__(self):
        return iter(self.matrices)

    def __getitem__(self, k):
        return self.matrices[k]

    @property
    def n(self) -> int:
        return self.matrices[0].n_cols

    @property
    def m(self) -> int:
        return self.matrices[0].n_rows

    @property
    def rate(self) -> float:
        return self.matrices[0].rate


def check_count(n: int, rate: float) -> int:
    """Number of checks ``m = n (1 - rate)``; must be a positive integer below n."""
    if not 0.0 < rate < 1.0:
        raise ParameterError(f"rate must lie in (0, 1), got {rate}")
    exact = n * (1.0 - rate)
    m = int(round(exact))
    if abs(exact - m) > 1e-6:
        raise ParameterError(f"n*(1-rate) = {exact} is not an integer")
    if not 0 < m < n:
        raise ParameterError(f"check count {m} must lie in (0, {n})")
    return m


@numba.njit(cache=True)
def _peg_kernel(n, m, dv, ties, cap):
    # var_adj: checks of each variable; chk_adj/chk_deg: variables of each check
    var_adj = np.full((n, dv), -1, np.int64)
    chk_adj = np.full((m, cap), -1, np.int64)
    chk_deg = np.zeros(m, np.int64)
    seen = np.full(m, -1, np.int64)  # stamp of the BFS that reached a check
    vseen = np.full(n, -1, np.int64)
    frontier = np.empty(m, np.int64)
    nxt = np.empty(m, np.int64)
    cand = np.empty(m, np.int64)
    stamp = 0
    t = 0
    for v in range(n):
        for k in range(dv):
            stamp += 1
            ncand = 0
            if k == 0:
                for c in range(m):
                    cand[ncand] = c
                    ncand += 1
            else:
                # breadth-first expansion over the current graph rooted at v
                nf = 0
                vseen[v] = stamp
                for q in range(k):
                    c = var_adj[v, q]
                    seen[c] = stamp
                    frontier[nf] = c
                    nf += 1
                reached = nf
                while True:
                    nn = 0
                    for a in range(nf):
                        c = frontier[a]
                        for b in range(chk_deg[c]):
                            u = chk_adj[c, b]
                            if vseen[u] == stamp:
                                continue
                            vseen[u] = stamp
                            for q in range(dv):
                                c2 = var_adj[u, q]
                                if c2 < 0:
                                    break
                                if seen[c2] < stamp:
                                    seen[c2] = stamp + 1  # provisional: next level
                                    nxt[nn] = c2
                                    nn += 1
                    if nn == 0 or reached + nn >= m:
                        # tree stopped growing, or the next level would cover every
                        # check: pick among checks outside the current tree
                        for c in range(m):
                            if seen[c] != stamp:
                                cand[ncand] = c
                                ncand += 1
                        break
                    for a in range(nn):
                        seen[nxt[a]] = stamp
                        frontier[a] = nxt[a]
                    nf = nn
                    reached += nn
                stamp += 1  # provisional marks above must not leak into the next BFS
            best = 1 << 60
            nbest = 0
            for a in range(ncand):
                d = chk_deg[cand[a]]
                if d < best:
                    best = d
                    nbest = 0
                if d == best:
                    cand[nbest] = cand[a]
                    nbest += 1
            pick = cand[int(ties[t] * nbest)]
            t += 1
            if chk_deg[pick] >= cap:
                return var_adj, chk_adj, chk_deg, False
            var_adj[v, k] = pick
            chk_adj[pick, chk_deg[pick]] = v
            chk_deg[pick] += 1
    return var_adj, chk_adj, chk_deg, True


def peg(n: int, m: int, column_degree: int = COLUMN_DEGREE, seed: int = 0) -> ParityCheckMatrix:
    """Progressive-edge-growth matrix with a fixed column degree.

    Each new edge of a variable goes to a minimum-degree check among those
    farthest from it in the graph built so far, which avoids short cycles
    whenever the greedy placement allows. Ties are broken uniformly at
    random from ``seed``.
    """
    dv = min(column_degree, m)
    rng = np.random.default_rng(seed)
    ties = rng.random(n * dv)
    cap = max(2 * (-(-n * dv // m)), dv + 4)
    while True:
        var_adj, chk_adj, chk_deg, ok = _peg_kernel(n, m, dv, ties, cap)
        if ok:
            break
        cap *= 2
    rows = [np.sort(chk_adj[j, :chk_deg[j]]) for j in range(m)]
    indptr = np.concatenate(([0], np.cumsum(chk_deg)))
    return ParityCheckMatrix(n, m, indptr, np.concatenate(rows))


def construct_set(n: int, rate: float, count: int, seed: int) -> MatrixSet:
    """Build ``count`` pairwise-distinct PEG matrices of the given rate."""
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    m = check_count(n, rate)
    children = np.random.SeedSequence(seed).spawn(count)
    mats: list[ParityCheckMatrix] = []
    for child in children:
        while True:
            h = peg(n, m, COLUMN_DEGREE, int(child.generate_state(1, np.uint64)[0]))
            if all(h != other for other in mats):
                break
            child = child.spawn(1)[0]
        mats.append(h)
    return MatrixSet(tuple(mats), seed)


def syndrome(h: ParityCheckMatrix, x) -> np.ndarray:
    """Parity of ``x`` over every check of ``h``."""
    x = np.asarray(x, dtype=np.uint8)
    if x.shape != (h.n_cols,):
        raise ParameterError(f"word length {x.shape} does not match n={h.n_cols}")
    return np.bitwise_xor.reduceat(x[h.indices], h.indptr[:-1]).astype(np.uint8)


def to_alist(h: ParityCheckMatrix) -> str:
    col_deg = h.col_degrees()
    row_deg = h.row_degrees()
    dvmax, dcmax = int(col_deg.max()), int(row_deg.max())
    lines = [
        f"{h.n_cols} {h.n_rows}",
        f"{dvmax} {dcmax}",
        " ".join(map(str, col_deg.tolist())),
        " ".join(map(str, row_deg.tolist())),
    ]
    for adj in h.col_adj:
        lines.append(" ".join(str(c + 1) for c in adj + [-1] * (dvmax - len(adj))))
    for adj in h.row_adj:
        lines.append(" ".join(str(v + 1) for v in adj + [-1] * (dcmax - len(adj))))
    return "\n".join(lines) + "\n"


def from_alist(text: str) -> ParityCheckMatrix:
    """Parse alist text; zero entries are padding and are ignored."""
    lines = [(no, ln.split()) for no, ln in enumerate(text.splitlines(), 1) if ln.strip()]
    pos = 0

    def take(what: str, count: int | None = None) -> list[int]:
        nonlocal pos
        if pos >= len(lines):
            last = lines[-1][0] if lines else 0
            raise AlistParseError(f"unexpected end of file, expected {what}", last + 1)
        no, toks = lines[pos]
        pos += 1
        try:
            vals = [int(t) for t in toks]
        except ValueError:
            raise AlistParseError(f"non-integer token in {what}", no) from None
        if count is not None and len(vals) != count:
            raise AlistParseError(f"expected {count} values for {what}, got {len(vals)}", no)
        return vals

    n, m = take("header 'n m'", 2)
    if n < 1 or m < 1:
        raise AlistParseError("dimensions must be positive", lines[0][0])
    take("maximum degrees", 2)
    col_deg = take("column degrees", n)
    row_deg = take("row degrees", m)
    cols = []
    for i in range(n):
        no = lines[pos][0] if pos < len(lines) else None
        adj = [c for c in take(f"column {i + 1} adjacency") if c != 0]
        if len(adj) != col_deg[i] or any(not 1 <= c <= m for c in adj):
            raise AlistParseError(f"bad adjacency for column {i + 1}", no)
        cols.append(adj)
    rows = []
    for j in range(m):
        no = lines[pos][0] if pos < len(lines) else None
        adj = [v for v in take(f"row {j + 1} adjacency") if v != 0]
        if len(adj) != row_deg[j] or any(not 1 <= v <= n for v in adj):
            raise AlistParseError(f"bad adjacency for row {j + 1}", no)
        rows.append([v - 1 for v in adj])
    try:
        h = ParityCheckMatrix.from_rows(rows, n)
    except ParameterError as exc:
        raise AlistParseError(str(exc), None) from exc
    if h.col_adj != [sorted(c - 1 for c in adj) for adj in cols]:
        raise AlistParseError("column and row adjacency lists disagree", None)
    return h


def save_alist(h: ParityCheckMatrix, path) -> None:
    Path(path).write_text(to_alist(h))


def load_alist(path) -> ParityCheckMatrix:
    return from_alist(Path(path).read_text())
