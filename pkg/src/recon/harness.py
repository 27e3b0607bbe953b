"""Monte Carlo sweeps over SNR, scheme, code length, f_d and delta.

Every trial draws its key pair and session seeds from the master seed and
the trial's coordinates (n, SNR index, trial index) only, so all schemes,
f_d and delta values at one SNR reconcile the same keys. Results come back
ordered by (point, trial) however the work was scheduled.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from . import __version__, decoder
from .errors import ParameterError, ReconError
from .ldpc import MatrixSet, check_count, construct_set, load_alist, save_alist
from .metrics import binary_entropy, snr_to_ber, throughput
from .protocol import Scheme, SessionConfig, choose_rate, run_session
from .puncture import initial_budget

log = logging.getLogger(__name__)

GRID_SNRS = tuple(float(v) for v in np.round(np.linspace(3.51, 7.48, 19), 2))
GRID_RATES = (0.6, 0.7, 0.8)


@dataclass(frozen=True)
class SweepConfig:
    schemes: tuple[str, ...] = ("SRCR", "MRCR")
    ns: tuple[int, ...] = (5000,)
    rates: tuple[float, ...] = GRID_RATES
    snrs: tuple[float, ...] = GRID_SNRS
    fds: tuple[float, ...] = (1.1,)
    deltas: tuple[float, ...] = (0.02,)
    trials: int = 100
    ul: int = 100
    seed: int = 0
    workers: int = 1
    n_matrices: int = 3
    matrix_seed: int | None = None  # None: derive matrices from ``seed``
    cache_dir: str | None = None

    def __post_init__(self):
        for name in ("schemes", "ns", "rates", "snrs", "fds", "deltas"):
            value = getattr(self, name)
            if isinstance(value, (str, int, float)):
                value = (value,)
            object.__setattr__(self, name, tuple(value))
        object.__setattr__(self, "schemes", tuple(Scheme(s).value for s in self.schemes))
        object.__setattr__(self, "ns", tuple(int(v) for v in self.ns))
        object.__setattr__(self, "rates", tuple(float(v) for v in self.rates))
        object.__setattr__(self, "snrs", tuple(float(v) for v in self.snrs))
        object.__setattr__(self, "fds", tuple(float(v) for v in self.fds))
        object.__setattr__(self, "deltas", tuple(float(v) for v in self.deltas))
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        for name in ("schemes", "ns", "rates", "snrs", "fds", "deltas"):
            if not getattr(self, name):
                raise ParameterError(f"{name} must not be empty")
        if not all(math.isfinite(s) for s in self.snrs):
            raise ParameterError("SNR values must be finite")
        if self.ul < 1:
            raise ParameterError("ul must be >= 1")
        if self.workers < 1:
            raise ParameterError("workers must be >= 1")
        if self.n_matrices < 2 and any(Scheme(s).multi for s in self.schemes):
            raise ParameterError("multi-matrix schemes need n_matrices >= 2")
        for n in self.ns:
            for r in self.rates:
                check_count(n, r)

    @property
    def matrices_seed(self) -> int:
        return self.seed if self.matrix_seed is None else self.matrix_seed

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ParameterError(f"unknown sweep config key(s): {', '.join(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class Point:
    index: int
    scheme: str
    n: int
    snr: float
    snr_index: int
    f_d: float
    delta: float


@dataclass
class TrialRecord:
    point: int
    trial: int
    scheme: str
    n: int
    rate: float
    snr: float
    e: float
    f_d: float
    delta: float
    p0: int
    success: bool
    rounds: int
    iterations: int
    s_final: int
    f: float | None
    flips: int
    keys_match: bool | None
    wall: float = 0.0


TRIAL_COLUMNS = [f.name for f in dataclasses.fields(TrialRecord)]
POINT_COLUMNS = [
    "point", "scheme", "n", "rate", "snr", "e", "f_d", "delta", "p0", "trials",
    "successes", "fer", "mean_f", "sr_f", "mean_rounds", "mean_iterations",
    "mismatches", "busy_time", "t", "throughput", "skipped",
]
# columns left out of the deterministic digest
TIMING_COLUMNS = {"wall", "busy_time", "t", "throughput"}


def gen_key_pair(n: int, e: float, seed) -> tuple[np.ndarray, np.ndarray, int]:
    """Uniform ``X`` and ``Y = X`` with each bit flipped with probability ``e``."""
    if not 0.0 < e < 0.5:
        raise ParameterError(f"error rate must lie in (0, 0.5), got {e}")
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 2, n, dtype=np.uint8)
    flips = rng.random(n) < e
    y = x ^ flips.astype(np.uint8)
    return x, y, int(flips.sum())


def sr_efficiency(rate: float, e: float) -> float:
    """Efficiency of a plain fixed-rate success, ``(1 - R0) / h(e)``."""
    return (1.0 - rate) / binary_entropy(e)


# ---------------------------------------------------------------- matrices


def _cache_name(n: int, rate: float, count: int, seed: int, k: int) -> str:
    return f"n{n}_r{rate:g}_N{count}_s{seed}_{k}.alist"


def load_or_build(n: int, rate: float, count: int, seed: int, cache_dir=None) -> MatrixSet:
    """Matrix set for ``(n, rate, count, seed)``, read from / written to ``cache_dir`` as alist."""
    if cache_dir is None:
        return construct_set(n, rate, count, seed)
    cache = Path(cache_dir)
    paths = [cache / _cache_name(n, rate, count, seed, k) for k in range(count)]
    if all(p.exists() for p in paths):
        mats = tuple(load_alist(p) for p in paths)
        if all(h.n_cols == n and h.n_rows == check_count(n, rate) for h in mats):
            return MatrixSet(mats, seed)
        log.warning("cached matrices for n=%d rate=%g do not match, rebuilding", n, rate)
    mset = construct_set(n, rate, count, seed)
    cache.mkdir(parents=True, exist_ok=True)
    for h, p in zip(mset, paths):
        tmp = p.with_suffix(".tmp")
        save_alist(h, tmp)
        os.replace(tmp, p)
    return mset


class _Tables:
    """Lazily built rate tables for one sweep (multi and single-matrix views)."""

    def __init__(self, cfg: SweepConfig):
        self.cfg = cfg
        self._sets: dict[tuple[int, float], MatrixSet] = {}

    def mset(self, n: int, rate: float) -> MatrixSet:
        key = (n, rate)
        if key not in self._sets:
            t0 = time.perf_counter()
            self._sets[key] = load_or_build(
                n, rate, self.cfg.n_matrices, self.cfg.matrices_seed, self.cfg.cache_dir
            )
            log.info("matrices n=%d rate=%g ready in %.1fs", n, rate, time.perf_counter() - t0)
        return self._sets[key]

    def table(self, n: int, rate: float, scheme: Scheme, pick: int) -> dict[float, MatrixSet]:
        # only the selected rate is needed: choose_rate is applied by the caller
        mset = self.mset(n, rate)
        if scheme.multi:
            return {rate: mset}
        return {rate: MatrixSet((mset[pick % len(mset)],), mset.seed)}


# ---------------------------------------------------------------- trials


def grid(cfg: SweepConfig) -> list[Point]:
    points = []
    for n, (si, snr), f_d, delta, scheme in product(
        cfg.ns, enumerate(cfg.snrs), cfg.fds, cfg.deltas, cfg.schemes
    ):
        points.append(Point(len(points), scheme, n, snr, si, f_d, delta))
    return points


def _trial_seeds(master: int, n: int, snr_index: int, trial: int) -> dict[str, int]:
    ss = np.random.SeedSequence([master, n, snr_index, trial])
    keys, shared, alice, bob, pick = ss.spawn(5)
    return {
        "key": int(keys.generate_state(1, np.uint64)[0]),
        "shared": int(shared.generate_state(1, np.uint64)[0]),
        "alice": int(alice.generate_state(1, np.uint64)[0]),
        "bob": int(bob.generate_state(1, np.uint64)[0]),
        "pick": int(pick.generate_state(1, np.uint32)[0]),
    }


def point_setup(cfg: SweepConfig, pt: Point) -> tuple[float, float, int]:
    """``(e, rate, p0)`` for a point; raises :class:`ReconError` if it is inadmissible."""
    e = snr_to_ber(pt.snr)
    rate = choose_rate(e, pt.f_d, cfg.rates)
    scheme = Scheme(pt.scheme)
    p0 = 0
    if scheme.rate_compatible:
        m = check_count(pt.n, rate)
        p0 = initial_budget(m, pt.n, e, pt.f_d)
    return e, rate, p0


def run_trial(cfg: SweepConfig, tables: _Tables, pt: Point, trial: int) -> TrialRecord:
    e, rate, p0 = point_setup(cfg, pt)
    seeds = _trial_seeds(cfg.seed, pt.n, pt.snr_index, trial)
    scheme = Scheme(pt.scheme)
    x, y, flips = gen_key_pair(pt.n, e, seeds["key"])
    table = tables.table(pt.n, rate, scheme, seeds["pick"])
    scfg = SessionConfig(
        scheme, table, f_d=pt.f_d, delta=pt.delta, max_iters=cfg.ul,
        shared_seed=seeds["shared"], local_seed=seeds["alice"],
    )
    bcfg = dataclasses.replace(scfg, local_seed=seeds["bob"])
    t0 = time.perf_counter()
    ra, rb, _, _ = run_session(x, y, e, scfg, bcfg)
    wall = time.perf_counter() - t0
    match = None
    if ra.success and rb.success:
        match = bool(np.array_equal(ra.key, rb.key))
    return TrialRecord(
        point=pt.index, trial=trial, scheme=pt.scheme, n=pt.n, rate=rate, snr=pt.snr,
        e=e, f_d=pt.f_d, delta=pt.delta, p0=p0, success=bool(rb.success), rounds=rb.rounds,
        iterations=rb.iterations, s_final=rb.s_final, f=rb.f, flips=flips, keys_match=match,
        wall=wall,
    )


_worker: dict = {}


def _init_worker(cfg: SweepConfig) -> None:
    decoder.warmup()
    _worker["cfg"] = cfg
    _worker["tables"] = _Tables(cfg)


def _run_chunk(tasks: list[tuple[Point, int]]) -> list[TrialRecord]:
    cfg, tables = _worker["cfg"], _worker["tables"]
    return [run_trial(cfg, tables, pt, t) for pt, t in tasks]


# ---------------------------------------------------------------- aggregation


def aggregate(records: Iterable[TrialRecord], points: list[Point], skipped: dict[int, str], workers: int = 1) -> list[dict]:
    """Per-point summary; a pure function of the trial records."""
    by_point: dict[int, list[TrialRecord]] = {}
    for r in records:
        by_point.setdefault(r.point, []).append(r)
    rows = []
    for pt in points:
        recs = by_point.get(pt.index, [])
        row = {c: None for c in POINT_COLUMNS}
        row.update(point=pt.index, scheme=pt.scheme, n=pt.n, snr=pt.snr, f_d=pt.f_d, delta=pt.delta)
        row["e"] = snr_to_ber(pt.snr)
        if pt.index in skipped:
            row.update(trials=0, successes=0, skipped=skipped[pt.index])
            rows.append(row)
            continue
        if not recs:
            row.update(trials=0, successes=0, skipped="no trials")
            rows.append(row)
            continue
        first = recs[0]
        ok = [r for r in recs if r.success]
        busy = float(sum(r.wall for r in recs))
        t = busy / workers
        row.update(
            rate=first.rate,
            e=first.e,
            p0=first.p0,
            trials=len(recs),
            successes=len(ok),
            fer=1.0 - len(ok) / len(recs),
            mean_f=float(np.mean([r.f for r in ok])) if ok else None,
            sr_f=sr_efficiency(first.rate, first.e),
            mean_rounds=float(np.mean([r.rounds for r in recs])),
            mean_iterations=float(np.mean([r.iterations for r in recs])),
            mismatches=sum(1 for r in ok if r.keys_match is False),
            busy_time=busy,
            t=t,
            throughput=throughput(len(ok), pt.n, first.p0, t) if t > 0 else None,
            skipped="",
        )
        rows.append(row)
    return rows


@dataclass
class SweepResult:
    config: SweepConfig
    records: list[TrialRecord]
    points: list[dict]
    elapsed: float
    meta: dict = field(default_factory=dict)

    def trials_csv(self, deterministic: bool = False) -> str:
        cols = [c for c in TRIAL_COLUMNS if not (deterministic and c in TIMING_COLUMNS)]
        return _csv(cols, (dataclasses.asdict(r) for r in self.records))

    def points_csv(self, deterministic: bool = False) -> str:
        cols = [c for c in POINT_COLUMNS if not (deterministic and c in TIMING_COLUMNS)]
        return _csv(cols, self.points)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.trials_csv(deterministic=True).encode())
        h.update(self.points_csv(deterministic=True).encode())
        return h.hexdigest()

    def summary(self) -> dict:
        return {
            "version": __version__,
            "config": self.config.to_dict(),
            "seed": self.config.seed,
            "digest": self.digest(),
            "digest_excludes": sorted(TIMING_COLUMNS),
            "timing": "t = summed per-trial session wall time / workers; matrix construction excluded",
            "elapsed": self.elapsed,
            "points": self.points,
            **self.meta,
        }

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "trials.csv").write_text(self.trials_csv())
        (out / "points.csv").write_text(self.points_csv())
        (out / "summary.json").write_text(json.dumps(self.summary(), indent=2) + "\n")
        return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv(cols: list[str], rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in cols])
    return buf.getvalue()


def run_sweep(cfg: SweepConfig, progress: Callable[[str], object] | None = None) -> SweepResult:
    """Run every admissible grid point for ``cfg.trials`` trials."""
    started = time.perf_counter()
    points = grid(cfg)
    skipped: dict[int, str] = {}
    tasks: list[tuple[Point, int]] = []
    tables = _Tables(cfg)
    for pt in points:
        try:
            _, rate, _ = point_setup(cfg, pt)
        except ReconError as exc:
            skipped[pt.index] = str(exc)
            log.info("point %d skipped: %s", pt.index, exc)
            continue
        if cfg.workers == 1:
            tables.mset(pt.n, rate)
        tasks.extend((pt, t) for t in range(cfg.trials))

    records: list[TrialRecord] = []
    done_points = 0
    if cfg.workers == 1:
        decoder.warmup()
        for pt, t in tasks:
            records.append(run_trial(cfg, tables, pt, t))
            if t == cfg.trials - 1:
                done_points += 1
                if progress is not None:
                    ok = sum(r.success for r in records[-cfg.trials:])
                    progress(
                        f"[{done_points}/{len(points) - len(skipped)}] {pt.scheme} n={pt.n} "
                        f"snr={pt.snr} fd={pt.f_d} delta={pt.delta}: {ok}/{cfg.trials} ok"
                    )
    else:
        size = max(1, cfg.trials // 4)
        chunks = [tasks[i:i + size] for i in range(0, len(tasks), size)]
        with ProcessPoolExecutor(cfg.workers, initializer=_init_worker, initargs=(cfg,)) as pool:
            for k, chunk in enumerate(pool.map(_run_chunk, chunks)):
                records.extend(chunk)
                if progress is not None:
                    progress(f"[{k + 1}/{len(chunks)}] chunks done")
        records.sort(key=lambda r: (r.point, r.trial))

    rows = aggregate(records, points, skipped, cfg.workers)
    return SweepResult(cfg, records, rows, time.perf_counter() - started)


def read_trials_csv(path) -> list[TrialRecord]:
    """Load a trials CSV written by :meth:`SweepResult.write`."""
    types = {f.name: f.type for f in dataclasses.fields(TrialRecord)}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for k, v in row.items():
                t = types[k]
                if v == "":
                    kw[k] = None
                elif t in ("int",):
                    kw[k] = int(v)
                elif t in ("float", "float | None"):
                    kw[k] = float(v)
                elif t in ("bool", "bool | None"):
                    kw[k] = v == "1"
                else:
                    kw[k] = v
            out.append(TrialRecord(**kw))
    return out
