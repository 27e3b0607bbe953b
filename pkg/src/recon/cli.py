"""Command-line front end: ``recon construct | reconcile | sweep | plan | inspect``.

Results go to stdout as JSON; progress and diagnostics go to stderr.
Exit codes: 0 success, 2 decode failure, 3 configuration error,
4 transport error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ParameterError, ReconError, TransportError
from .harness import SweepConfig, gen_key_pair, load_or_build, run_sweep
from .ldpc import MatrixSet, construct_set, load_alist, save_alist
from .metrics import snr_to_ber
from .protocol import Alice, Bob, Scheme, SessionConfig, choose_rate, run_party, run_session
from .puncture import initial_budget, make_plan
from .transport import connect, listen

EXIT_OK = 0
EXIT_DECODE_FAILED = 2
EXIT_CONFIG = 3
EXIT_TRANSPORT = 4

log = logging.getLogger("recon")


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, default=_json_default) + "\n")
    sys.stdout.flush()


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _error_rate(args) -> float:
    if args.e is not None:
        return args.e
    if args.snr is not None:
        return snr_to_ber(args.snr)
    raise ParameterError("one of --e or --snr is required")


# ---------------------------------------------------------------- construct


def cmd_construct(args) -> int:
    mset = construct_set(args.n, args.rate, args.N, args.seed)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ParameterError(f"cannot create {out}: {exc}") from exc
    files = []
    for k, h in enumerate(mset):
        path = out / f"H_n{args.n}_r{args.rate:g}_s{args.seed}_{k}.alist"
        try:
            save_alist(h, path)
        except OSError as exc:
            raise ParameterError(f"cannot write {path}: {exc}") from exc
        files.append({"file": path.name, "sha256": _sha256(path), "n": h.n_cols, "m": h.n_rows})
    manifest = {
        "n": args.n,
        "rate": args.rate,
        "N": args.N,
        "seed": args.seed,
        "column_degree": 3,
        "version": __version__,
        "files": files,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    _emit(manifest)
    return EXIT_OK


# ---------------------------------------------------------------- reconcile


def _load_set(paths: list[str], seed: int) -> MatrixSet:
    mats = []
    for p in paths:
        try:
            mats.append(load_alist(p))
        except OSError as exc:
            raise ParameterError(f"cannot read {p}: {exc}") from exc
    return MatrixSet(tuple(mats), seed)


def _rate_table(args, scheme: Scheme) -> dict[float, MatrixSet]:
    count = args.N if scheme.multi else 1
    if args.matrices:
        mset = _load_set(args.matrices, args.matrix_seed)
        if len(mset) != count:
            raise ParameterError(f"{scheme.value} needs {count} matrix file(s), got {len(mset)}")
        if args.n is not None and mset.n != args.n:
            raise ParameterError(f"matrix files have n={mset.n}, --n says {args.n}")
        return {round(mset.rate, 12): mset}
    n = args.n or 5000
    rates = args.rate or [0.6, 0.7, 0.8]
    table = {}
    for r in rates:
        mset = load_or_build(n, r, max(count, 1), args.matrix_seed, args.cache)
        table[r] = mset
    return table


def _session_config(args, e: float) -> SessionConfig:
    scheme = Scheme(args.scheme)
    table = _rate_table(args, scheme)
    return SessionConfig(
        scheme,
        table,
        f_d=args.fd,
        delta=args.delta,
        max_iters=args.ul,
        shared_seed=args.seed,
        local_seed=args.local_seed if args.local_seed is not None else args.seed + 1,
    )


def cmd_reconcile(args) -> int:
    e = _error_rate(args)
    cfg = _session_config(args, e)
    n = next(iter(cfg.rate_table.values())).n
    key_e = args.key_e if args.key_e is not None else e
    x, y, flips = gen_key_pair(n, key_e, args.key_seed)
    if args.identical:
        y, flips = x.copy(), 0
    trace = None
    if args.trace:
        fh = open(args.trace, "w")
        trace = lambda line: fh.write(line + "\n")  # noqa: E731

    stanza = {
        "version": __version__,
        "scheme": cfg.scheme.value,
        "e": e,
        "snr": args.snr,
        "key_e": key_e,
        "f_d": cfg.f_d,
        "delta": cfg.delta,
        "ul": cfg.max_iters,
        "seed": args.seed,
        "key_seed": args.key_seed,
        "matrix_seed": args.matrix_seed,
        "n": n,
        "flips": flips,
    }
    try:
        if args.listen or args.connect:
            role = args.role or ("bob" if args.listen else "alice")
            endpoint = listen(args.listen, args.timeout) if args.listen else connect(args.connect, args.timeout)
            try:
                party = Alice(x, e, cfg) if role == "alice" else Bob(y, e, dataclasses.replace(cfg, local_seed=cfg.local_seed + 1), trace)
                result = run_party(party, endpoint)
            finally:
                endpoint.close()
            out = {"role": role, **result.to_dict()}
            if result.key is not None:
                out["key_sha256"] = hashlib.sha256(np.packbits(result.key).tobytes()).hexdigest()
            if args.transcript:
                Path(args.transcript).write_text(party.transcript_jsonl())
        else:
            ra, rb, alice, bob = run_session(x, y, e, cfg, trace=trace)
            out = rb.to_dict()
            out["keys_match"] = bool(ra.success and rb.success and np.array_equal(ra.key, rb.key))
            if rb.key is not None:
                out["key_sha256"] = hashlib.sha256(np.packbits(rb.key).tobytes()).hexdigest()
            if args.transcript:
                Path(args.transcript).write_text(alice.transcript_jsonl() + bob.transcript_jsonl())
            result = rb
    finally:
        if args.trace:
            fh.close()
    out["config"] = stanza
    _emit(out)
    if result.reason.startswith("rate inadmissible"):
        return EXIT_CONFIG
    return EXIT_OK if result.success else EXIT_DECODE_FAILED


# ---------------------------------------------------------------- sweep


SWEEP_FLAGS = {
    "scheme": "schemes",
    "n": "ns",
    "rate": "rates",
    "snr": "snrs",
    "fd": "fds",
    "delta": "deltas",
    "trials": "trials",
    "ul": "ul",
    "seed": "seed",
    "workers": "workers",
    "N": "n_matrices",
    "matrix_seed": "matrix_seed",
    "cache": "cache_dir",
}


def sweep_config(args) -> SweepConfig:
    data: dict = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ParameterError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ParameterError("config file must hold a JSON object")
    for flag, key in SWEEP_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            data[key] = value
    try:
        return SweepConfig.from_dict(data)
    except TypeError as exc:
        raise ParameterError(str(exc)) from exc


def cmd_sweep(args) -> int:
    cfg = sweep_config(args)
    progress = None if args.quiet else (lambda s: print(s, file=sys.stderr, flush=True))
    result = run_sweep(cfg, progress)
    summary = result.summary()
    if args.out:
        summary["out"] = str(result.write(args.out))
    _emit(summary)
    return EXIT_OK


# ---------------------------------------------------------------- plan / inspect


def cmd_plan(args) -> int:
    e = _error_rate(args)
    mset = _load_set(args.matrices, args.matrix_seed)
    rate = choose_rate(e, args.fd, [round(mset.rate, 12)])
    p0 = initial_budget(mset.m, mset.n, e, args.fd)
    plan = make_plan(mset, p0, np.random.SeedSequence([args.seed, 1]))
    _emit({"rate": rate, "e": e, "p0": p0, "order": list(plan.order), "tiers": list(plan.tiers)})
    return EXIT_OK


def cmd_inspect(args) -> int:
    h = load_alist(args.file)
    cd, rd = h.col_degrees(), h.row_degrees()
    _emit(
        {
            "n": h.n_cols,
            "m": h.n_rows,
            "rate": h.rate,
            "edges": h.n_edges,
            "column_degree": {"min": int(cd.min()), "max": int(cd.max()), "mean": float(cd.mean())},
            "row_degree": {"min": int(rd.min()), "max": int(rd.max()), "mean": float(rd.mean())},
        }
    )
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def _strs(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="recon", description="Multi-matrix rate-compatible LDPC reconciliation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("construct", help="build N PEG matrices and write them as alist files")
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--rate", type=float, required=True)
    c.add_argument("--N", type=int, default=3)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_construct)

    r = sub.add_parser("reconcile", help="run one reconciliation session")
    r.add_argument("--scheme", default="MRCR", choices=[s.value for s in Scheme])
    r.add_argument("--matrices", nargs="+", help="alist files; default builds PEG matrices")
    r.add_argument("--n", type=int)
    r.add_argument("--rate", type=_floats, help="comma-separated rate table (auto mode)")
    r.add_argument("--N", type=int, default=3)
    g = r.add_mutually_exclusive_group()
    g.add_argument("--e", type=float)
    g.add_argument("--snr", type=float)
    r.add_argument("--key-e", type=float, help="flip rate used to draw the keys (defaults to --e)")
    r.add_argument("--identical", action="store_true", help="give Bob Alice's key")
    r.add_argument("--fd", type=float, default=1.1)
    r.add_argument("--delta", type=float, default=0.02)
    r.add_argument("--ul", type=int, default=100)
    r.add_argument("--seed", type=int, default=0, help="shared session seed")
    r.add_argument("--local-seed", type=int)
    r.add_argument("--key-seed", type=int, default=0)
    r.add_argument("--matrix-seed", type=int, default=0)
    r.add_argument("--cache")
    r.add_argument("--trace", help="write per-iteration decoder JSON lines here")
    r.add_argument("--transcript", help="write the framed message transcript (JSON lines) here")
    net = r.add_mutually_exclusive_group()
    net.add_argument("--listen", metavar="ADDR")
    net.add_argument("--connect", metavar="ADDR")
    r.add_argument("--role", choices=["alice", "bob"])
    r.add_argument("--timeout", type=float, default=60.0)
    r.set_defaults(func=cmd_reconcile)

    s = sub.add_parser("sweep", help="Monte Carlo sweep, CSV/JSON output")
    s.add_argument("--config")
    s.add_argument("--scheme", type=_strs)
    s.add_argument("--n", type=_ints)
    s.add_argument("--rate", type=_floats)
    s.add_argument("--snr", type=_floats)
    s.add_argument("--fd", type=_floats)
    s.add_argument("--delta", type=_floats)
    s.add_argument("--trials", type=int)
    s.add_argument("--ul", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--N", type=int)
    s.add_argument("--matrix-seed", type=int)
    s.add_argument("--cache")
    s.add_argument("--out")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_sweep)

    pl = sub.add_parser("plan", help="print the initial puncturing plan for a matrix set")
    pl.add_argument("--matrices", nargs="+", required=True)
    g = pl.add_mutually_exclusive_group()
    g.add_argument("--e", type=float)
    g.add_argument("--snr", type=float)
    pl.add_argument("--fd", type=float, default=1.1)
    pl.add_argument("--seed", type=int, default=0)
    pl.add_argument("--matrix-seed", type=int, default=0)
    pl.set_defaults(func=cmd_plan)

    i = sub.add_parser("inspect", help="summarize an alist file")
    i.add_argument("file")
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    level = os.environ.get("RECON_LOG", "WARNING").upper()
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TransportError as exc:
        print(f"recon: transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (ParameterError, ReconError, ValueError) as exc:
        print(f"recon: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
