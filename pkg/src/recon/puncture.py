"""Puncturing and shortening plans.

Punctured positions are chosen so that as few checks as possible see two
or more punctured neighbours ("dead" checks). Over one matrix this is the
untainted selection; over several matrices the selection proceeds in tiers
of increasing conflict. Shortened bits are always taken from the punctured
set, so ``|P| + |S| == p0`` holds for the life of a plan.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ParameterError, PuncturesExhausted, RateInadmissible
from .ldpc import MatrixSet, ParityCheckMatrix
from .metrics import binary_entropy


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def initial_budget(m: int, n: int, e: float, f_d: float) -> int:
    """Number of bits to puncture so that a first-round success lands at ``f_d``."""
    if not 0.0 < e < 0.5:
        raise ParameterError(f"error rate must lie in (0, 0.5), got {e}")
    hf = binary_entropy(e) * f_d
    if hf >= 1.0:
        raise RateInadmissible(f"h(e)*f_d = {hf:.4f} >= 1")
    num = m - n * hf
    # a numerator that is zero up to rounding still admits p0 = 0
    if num < -1e-9 * max(m, 1):
        raise RateInadmissible(
            f"m={m} checks cannot reach f_d={f_d} at e={e} (needs at least {n * hf:.1f})"
        )
    return max(0, int(math.floor(num / (1.0 - hf))))


@dataclass
class PuncturePlan:
    """Punctured/shortened bookkeeping shared (by derivation) by both parties."""

    p0: int
    order: tuple[int, ...]
    punctured: set[int] = field(default_factory=set)
    shortened: list[int] = field(default_factory=list)
    tiers: tuple[int, ...] = ()

    def __post_init__(self):
        self.order = tuple(int(v) for v in self.order)
        if len(self.order) != self.p0 or len(set(self.order)) != self.p0:
            raise ParameterError("order must list p0 distinct positions")
        if not self.punctured and not self.shortened:
            self.punctured = set(self.order)

    @property
    def s(self) -> int:
        return len(self.shortened)

    @property
    def p(self) -> int:
        return len(self.punctured)

    def check(self) -> None:
        s = set(self.shortened)
        assert len(s) == len(self.shortened)
        assert not (self.punctured & s)
        assert self.punctured | s == set(self.order)
        assert len(self.punctured) + len(s) == self.p0

    def to_json(self) -> str:
        return json.dumps(
            {
                "p0": self.p0,
                "order": list(self.order),
                "punctured": sorted(self.punctured),
                "shortened": list(self.shortened),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "PuncturePlan":
        d = json.loads(text)
        plan = cls(d["p0"], tuple(d["order"]), set(d["punctured"]), list(d["shortened"]))
        plan.check()
        return plan


def two_hop(matrices) -> tuple[np.ndarray, np.ndarray]:
    """Union over ``matrices`` of each variable's 2-hop variable neighbourhood.

    Returned CSR-style as ``(indptr, indices)``; a variable is not its own
    neighbour.
    """
    if isinstance(matrices, ParityCheckMatrix):
        matrices = [matrices]
    return _two_hop(tuple(matrices))


@lru_cache(maxsize=64)
def _two_hop(matrices: tuple[ParityCheckMatrix, ...]) -> tuple[np.ndarray, np.ndarray]:
    n = matrices[0].n_cols
    codes = []
    for h in matrices:
        deg = h.row_degrees()
        rows = np.repeat(np.arange(h.n_rows), deg)
        reps = deg[rows]
        left = np.repeat(h.indices, reps)
        base = np.repeat(h.indptr[rows], reps)
        offs = np.arange(reps.sum()) - np.repeat(np.cumsum(reps) - reps, reps)
        right = h.indices[base + offs]
        keep = left != right
        codes.append(left[keep] * n + right[keep])
    codes = np.unique(np.concatenate(codes))
    left, right = np.divmod(codes, n)
    indptr = np.concatenate(([0], np.cumsum(np.bincount(left, minlength=n))))
    indptr.flags.writeable = False
    right.flags.writeable = False
    return indptr, right


def _tiers(matrices, counts) -> np.ndarray:
    """Per variable: max over matrices and adjacent checks of punctured-neighbour counts."""
    out = np.zeros(matrices[0].n_cols, dtype=np.int64)
    for h, cnt in zip(matrices, counts):
        per_edge = cnt[h.col_indices]
        out = np.maximum(out, np.maximum.reduceat(per_edge, h.col_indptr[:-1]))
    return out


def _greedy(matrices, p0: int | None, rng, tiered: bool) -> tuple[list[int], list[int]]:
    n = matrices[0].n_cols
    nb_ptr, nb_idx = two_hop(matrices)
    size = np.diff(nb_ptr)
    counts = [np.zeros(h.n_rows, dtype=np.int64) for h in matrices]
    selected = np.zeros(n, dtype=bool)
    order: list[int] = []
    tiers: list[int] = []
    target = n if p0 is None else p0
    k = 0
    while len(order) < target:
        pool = ~selected
        if tiered:
            # nodes dropped as neighbours can keep their tier, so restart from the lowest one
            tier = _tiers(matrices, counts)
            k = int(tier[pool].min())
            pool &= tier == k
        while pool.any() and len(order) < target:
            smallest = size[pool].min()
            cand = np.flatnonzero(pool & (size == smallest))
            v = int(cand[rng.integers(cand.size)])
            order.append(v)
            tiers.append(k)
            selected[v] = True
            pool[v] = False
            pool[nb_idx[nb_ptr[v]:nb_ptr[v + 1]]] = False
            for h, cnt in zip(matrices, counts):
                cnt[h.col_indices[h.col_indptr[v]:h.col_indptr[v + 1]]] += 1
        if not tiered:
            break
    return order, tiers


def upa(h: ParityCheckMatrix, seed) -> list[int]:
    """Untainted puncturing: every check ends up with at most one selected neighbour."""
    order, _ = _greedy([h], None, _rng(seed), tiered=False)
    return order


def mupa_with_tiers(mset: MatrixSet, p0: int, seed) -> tuple[list[int], list[int]]:
    if not 0 <= p0 <= mset.n:
        raise ParameterError(f"p0={p0} must lie in [0, {mset.n}]")
    if p0 == 0:
        return [], []
    return _greedy(list(mset), p0, _rng(seed), tiered=True)


def mupa(mset: MatrixSet, p0: int, seed) -> list[int]:
    """Tiered multi-matrix untainted puncturing; returns ``p0`` positions in pick order."""
    return mupa_with_tiers(mset, p0, seed)[0]


def make_plan(mset: MatrixSet, p0: int, seed) -> PuncturePlan:
    """Initial plan: untainted picks for one matrix, tiered picks for several.

    With a single matrix the untainted list is truncated to ``p0``; if it is
    shorter, the rest is drawn uniformly from the unselected positions.
    """
    if not 0 <= p0 <= mset.n:
        raise ParameterError(f"p0={p0} must lie in [0, {mset.n}]")
    rng = _rng(seed)
    if len(mset) > 1:
        order, tiers = mupa_with_tiers(mset, p0, rng)
        return PuncturePlan(p0, tuple(order), tiers=tuple(tiers))
    order = upa(mset[0], rng)[:p0]
    if len(order) < p0:
        rest = np.setdiff1d(np.arange(mset.n), order)
        order += rng.choice(rest, size=p0 - len(order), replace=False).tolist()
    return PuncturePlan(p0, tuple(order))


def p2s_count(p0: int, delta: float, remaining: int) -> int:
    """How many punctured bits to shorten after a failed round."""
    if remaining <= 0:
        raise PuncturesExhausted("no punctured bits left to shorten")
    step = p0 * delta
    if step < 1:
        return 1
    if step <= remaining:
        return int(math.floor(step))
    return remaining


def convert_p2s(plan: PuncturePlan, delta: float, seed) -> list[int]:
    """Move a uniformly chosen batch of punctured bits into the shortened set."""
    if not 0.0 < delta < 1.0:
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")
    count = p2s_count(plan.p0, delta, len(plan.punctured))
    pool = np.array(sorted(plan.punctured), dtype=np.int64)
    moved = _rng(seed).choice(pool, size=count, replace=False).tolist()
    plan.punctured.difference_update(moved)
    plan.shortened.extend(moved)
    return moved
