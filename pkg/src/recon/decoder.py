"""LLR belief propagation against one or several parity-check matrices.

Each matrix runs its own flooding BP (its V2C messages only see its own
C2V messages); the soft decision of a bit adds the C2V messages of every
matrix to the bit's prior. Shortened bits carry a saturated prior and
their hard decisions are never touched.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numba
import numpy as np

from .errors import ParameterError
from .ldpc import MatrixSet, ParityCheckMatrix
from .puncture import PuncturePlan

LLR_MAX = 30.0


class Outcome(enum.Enum):
    SUCCESS = "success"
    ERROR_RATE_ROSE = "error_rate_rose"
    ITERATION_CAP = "iteration_cap"


@dataclass(frozen=True)
class DecoderConfig:
    e: float
    max_iters: int = 100
    llr_max: float = LLR_MAX

    def __post_init__(self):
        if not 0.0 < self.e < 0.5:
            raise ParameterError(f"error rate must lie in (0, 0.5), got {self.e}")
        if self.max_iters < 1:
            raise ParameterError("max_iters must be >= 1")
        if not self.llr_max > 0:
            raise ParameterError("llr_max must be positive")


@dataclass(frozen=True)
class Graph:
    """Edge-indexed view of one matrix, as consumed by the kernels."""

    n: int
    m: int
    indptr: np.ndarray  # check -> edge range (edges are row-major)
    var_of_edge: np.ndarray
    col_indptr: np.ndarray  # variable -> range into col_edge
    col_edge: np.ndarray  # edge ids grouped by variable, ascending check order
    mean_check_degree: float

    @classmethod
    def from_matrix(cls, h: ParityCheckMatrix) -> "Graph":
        col_edge = np.argsort(h.indices, kind="stable").astype(np.int64)
        return cls(
            h.n_cols,
            h.n_rows,
            np.asarray(h.indptr),
            np.asarray(h.indices),
            np.asarray(h.col_indptr),
            col_edge,
            h.n_edges / h.n_rows,
        )


@lru_cache(maxsize=32)
def graphs(mset: MatrixSet) -> tuple[Graph, ...]:
    return tuple(Graph.from_matrix(h) for h in mset)


# ---------------------------------------------------------------- kernels


@numba.njit(cache=True)
def _half_tanh(x):
    # tanh(x/2) through exp: libm tanh is ~3x slower; small |x| keeps libm for accuracy
    ax = abs(x)
    if ax < 0.01:
        t = math.tanh(0.5 * ax)
    else:
        z = math.exp(-ax)
        t = (1.0 - z) / (1.0 + z)
    return -t if x < 0.0 else t


@numba.njit(cache=True)
def _twice_atanh(p):
    ap = abs(p)
    if ap < 0.005:
        r = 2.0 * math.atanh(ap)
    else:
        r = math.log((1.0 + ap) / (1.0 - ap))
    return -r if p < 0.0 else r


@numba.njit(cache=True)
def _check_update(indptr, v2c, sign, c2v, llr_max):
    tmax = _half_tanh(llr_max)
    m = indptr.size - 1
    maxdeg = 0
    for j in range(m):
        maxdeg = max(maxdeg, indptr[j + 1] - indptr[j])
    t = np.empty(maxdeg)
    for j in range(m):
        a = indptr[j]
        d = indptr[j + 1] - a
        for q in range(d):
            t[q] = _half_tanh(v2c[a + q])
        # exclusive products: prefix pass stores left products, suffix pass folds right
        left = 1.0
        for q in range(d):
            c2v[a + q] = left
            left *= t[q]
        right = 1.0
        for q in range(d - 1, -1, -1):
            p = c2v[a + q] * right
            right *= t[q]
            # saturate before inverting: tanh(llr_max/2) can round to 1
            if p >= tmax:
                r = llr_max
            elif p <= -tmax:
                r = -llr_max
            else:
                r = min(max(_twice_atanh(p), -llr_max), llr_max)
            c2v[a + q] = sign[j] * r


@numba.njit(cache=True)
def _variable_update(col_indptr, col_edge, log_prior, c2v, v2c, total, llr_max):
    n = col_indptr.size - 1
    for i in range(n):
        a = col_indptr[i]
        b = col_indptr[i + 1]
        s = 0.0
        for q in range(a, b):
            s += c2v[col_edge[q]]
        total[i] = s
        for q in range(a, b):
            x = log_prior[i]
            for r in range(a, b):
                if r != q:
                    x += c2v[col_edge[r]]
            if x > llr_max:
                x = llr_max
            elif x < -llr_max:
                x = -llr_max
            v2c[col_edge[q]] = x


@numba.njit(cache=True)
def _unsatisfied(indptr, var_of_edge, word, syn):
    m = indptr.size - 1
    bad = 0
    for j in range(m):
        par = syn[j]
        for e in range(indptr[j], indptr[j + 1]):
            par ^= word[var_of_edge[e]]
        bad += par
    return bad


@numba.njit(cache=True)
def _decide(soft, shortened, word):
    for i in range(soft.size):
        if not shortened[i]:
            word[i] = 1 if soft[i] < 0.0 else 0


# ---------------------------------------------------------------- state


@dataclass
class DecoderState:
    word: np.ndarray
    log_prior: np.ndarray
    shortened: np.ndarray
    v2c: list[np.ndarray]
    c2v: list[np.ndarray]
    soft: np.ndarray
    error_estimate: float
    iterations: int = 0
    total_iterations: int = 0
    history: list[float] = field(default_factory=list)


def _signs(syndromes: Sequence[np.ndarray], gs: Sequence[Graph]) -> list[np.ndarray]:
    if len(syndromes) != len(gs):
        raise ParameterError(f"expected {len(gs)} syndromes, got {len(syndromes)}")
    out = []
    for z, g in zip(syndromes, gs):
        z = np.asarray(z)
        if z.shape != (g.m,):
            raise ParameterError(f"syndrome length {z.shape} does not match m={g.m}")
        out.append(1.0 - 2.0 * z.astype(np.float64))
    return out


def channel_llr(e: float, llr_max: float = LLR_MAX) -> float:
    return min(math.log((1.0 - e) / e), llr_max)


def init(word, plan: PuncturePlan | None, cfg: DecoderConfig, mset: MatrixSet) -> DecoderState:
    """Fresh state for one communication round, priors taken from ``word``."""
    word = np.array(word, dtype=np.uint8)
    if word.shape != (mset.n,):
        raise ParameterError(f"word length {word.shape} does not match n={mset.n}")
    sign = 1.0 - 2.0 * word.astype(np.float64)
    log_prior = channel_llr(cfg.e, cfg.llr_max) * sign
    shortened = np.zeros(mset.n, dtype=np.bool_)
    if plan is not None:
        if plan.punctured:
            log_prior[np.fromiter(plan.punctured, np.int64)] = 0.0
        if plan.shortened:
            s = np.asarray(plan.shortened, dtype=np.int64)
            shortened[s] = True
            log_prior[s] = cfg.llr_max * sign[s]
    gs = graphs(mset)
    return DecoderState(
        word=word,
        log_prior=log_prior,
        shortened=shortened,
        v2c=[log_prior[g.var_of_edge] for g in gs],
        c2v=[np.zeros(g.var_of_edge.size) for g in gs],
        soft=log_prior.copy(),
        error_estimate=cfg.e,
    )


def iterate(state: DecoderState, mset: MatrixSet, syndromes, llr_max: float = LLR_MAX) -> DecoderState:
    """One flooding sweep in every matrix followed by the joint hard decision."""
    gs = graphs(mset)
    signs = _signs(syndromes, gs)
    soft = state.log_prior.copy()
    total = np.empty(mset.n)
    for k, g in enumerate(gs):
        _check_update(g.indptr, state.v2c[k], signs[k], state.c2v[k], llr_max)
        _variable_update(g.col_indptr, g.col_edge, state.log_prior, state.c2v[k], state.v2c[k], total, llr_max)
        soft += total
    _decide(soft, state.shortened, state.word)
    state.soft = soft
    state.iterations += 1
    state.total_iterations += 1
    return state


def iterate_single(state: DecoderState, h: ParityCheckMatrix, z, llr_max: float = LLR_MAX) -> DecoderState:
    """Plain single-matrix LLR-BP sweep (reference path for the N=1 case)."""
    g = Graph.from_matrix(h)
    sign = 1.0 - 2.0 * np.asarray(z, dtype=np.float64)
    total = np.empty(g.n)
    _check_update(g.indptr, state.v2c[0], sign, state.c2v[0], llr_max)
    _variable_update(g.col_indptr, g.col_edge, state.log_prior, state.c2v[0], state.v2c[0], total, llr_max)
    state.soft = state.log_prior + total
    _decide(state.soft, state.shortened, state.word)
    state.iterations += 1
    state.total_iterations += 1
    return state


def unsatisfied_counts(word, mset: MatrixSet, syndromes) -> list[int]:
    word = np.asarray(word, dtype=np.uint8)
    return [
        int(_unsatisfied(g.indptr, g.var_of_edge, word, np.asarray(z, dtype=np.uint8)))
        for g, z in zip(graphs(mset), syndromes)
    ]


def check_syndromes(state: DecoderState, mset: MatrixSet, syndromes) -> bool:
    return not any(unsatisfied_counts(state.word, mset, syndromes))


def error_rate_from_unsatisfied(u: float, mean_degree: float) -> float:
    """Invert ``E[unsatisfied fraction] = (1 - (1 - 2e)^d) / 2`` for ``e``."""
    u = min(max(u, 0.0), 0.5 - np.finfo(float).eps)
    return (1.0 - (1.0 - 2.0 * u) ** (1.0 / mean_degree)) / 2.0


def estimate_error_rate(state: DecoderState, mset: MatrixSet, syndromes) -> float:
    """Residual error rate of the current word, averaged over the matrices."""
    counts = unsatisfied_counts(state.word, mset, syndromes)
    est = [
        error_rate_from_unsatisfied(c / g.m, g.mean_check_degree)
        for c, g in zip(counts, graphs(mset))
    ]
    return float(np.mean(est))


def decode_round(
    state: DecoderState,
    mset: MatrixSet,
    syndromes,
    cfg: DecoderConfig,
    trace: Callable[[str], object] | None = None,
    round_index: int = 1,
) -> Outcome:
    """Iterate until every syndrome matches, the estimated error rate rises, or the cap.

    On a rise the word is put back to the previous iteration's value.
    ``trace`` receives one JSON line per iteration when given, tagged with
    ``round_index``.
    """
    state.iterations = 0
    previous = state.word.copy()
    while True:
        iterate(state, mset, syndromes, cfg.llr_max)
        counts = unsatisfied_counts(state.word, mset, syndromes)
        ebar = float(
            np.mean(
                [
                    error_rate_from_unsatisfied(c / g.m, g.mean_check_degree)
                    for c, g in zip(counts, graphs(mset))
                ]
            )
        )
        if trace is not None:
            trace(
                json.dumps(
                    {
                        "round": round_index,
                        "iteration": state.iterations,
                        "error_estimate": ebar,
                        "unsatisfied": counts,
                    }
                )
            )
        if not any(counts):
            return Outcome.SUCCESS
        if state.iterations >= cfg.max_iters:
            return Outcome.ITERATION_CAP
        if ebar > state.error_estimate:
            state.word[:] = previous
            return Outcome.ERROR_RATE_ROSE
        state.error_estimate = ebar
        state.history.append(ebar)
        previous[:] = state.word


def warmup() -> None:
    """Load/compile the kernels so the first timed decode does not pay for it."""
    h = ParityCheckMatrix.from_rows([[0, 1], [1, 2]], 3)
    mset = MatrixSet((h,), 0)
    state = init(np.zeros(3, dtype=np.uint8), None, DecoderConfig(0.1, 2), mset)
    decode_round(state, mset, [np.array([1, 0], dtype=np.uint8)], DecoderConfig(0.1, 2))
