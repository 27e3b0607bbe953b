"""Acceptance criteria, one test per criterion.

Every test records a verdict in ``conftest.ACCEPTANCE`` before asserting, so
the terminal summary lists a pass/fail line for each criterion even when the
assertion fails. Criteria 5 to 8 share one desk-scale sweep (about ten
minutes on one core).
"""

import itertools
import json
import math
import os
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recon.cli import main as cli_main
from recon.decoder import DecoderConfig, Outcome, check_syndromes, decode_round, init, iterate, iterate_single
from recon.harness import SweepConfig, gen_key_pair, run_sweep
from recon.ldpc import MatrixSet, ParityCheckMatrix, check_count, construct_set, syndrome
from recon.metrics import binary_entropy, efficiency, throughput
from recon.protocol import Alice, Bob, SessionConfig
from recon.puncture import PuncturePlan, convert_p2s, initial_budget, make_plan, mupa_with_tiers, p2s_count, upa
from recon.transport import decode, encode

from conftest import ACCEPTANCE, random_matrix

pytestmark = pytest.mark.acceptance

REL = 1e-12
# 30-digit mpmath references
H_0067 = 0.35462716719672540241
EFF_161_50 = 1.10587943186344698204
P0_EXACT = 162.48486165859316

SNRS = (3.95, 4.39, 5.05, 5.50, 6.60, 7.26)  # two points in each rate interval
SEEDS = (11, 12, 13)
TRIALS = 100
F_D = 1.1


def record(k: int, ok: bool, detail: str, extra=()):
    ACCEPTANCE[k] = (bool(ok), detail, list(extra))


def close(a, b, rel=REL):
    return math.isclose(a, b, rel_tol=rel, abs_tol=0.0 if b else rel)


# ---------------------------------------------------------------- criterion 1

def test_criterion_1_formula_fidelity():
    checks = {
        "h(0.5)=1": binary_entropy(0.5) == 1.0,
        "h(0)=0": binary_entropy(0.0) == 0.0,
        "h(0.067)": close(binary_entropy(0.067), H_0067),
        "f(e=0.5)=0.4": close(efficiency(4000, 10000, 0, 0, 0.5), 0.4),
        "f(161,50,0.067)": close(efficiency(4000, 10000, 161, 50, 0.067), EFF_161_50),
        "p0 floor of exact root": initial_budget(4000, 10000, 0.067, F_D) == math.floor(P0_EXACT),
        "p2s(161,0.02,|P|=161)=3": p2s_count(161, 0.02, 161) == 3,
        "p2s(161,0.02,|P|=2)=2": p2s_count(161, 0.02, 2) == 2,
        "T(500,5000,161,10)": close(throughput(500, 5000, 161, 10.0), 241950.0),
        "T(0)=0": throughput(0, 5000, 161, 10.0) == 0.0,
        "T(t/2)=2T": close(throughput(500, 5000, 161, 5.0), 2 * 241950.0),
    }
    plan = PuncturePlan(161, tuple(range(161)))
    checks["convert_p2s moves 3"] = len(convert_p2s(plan, 0.02, 0)) == 3 and plan.s == 3
    small = PuncturePlan(161, tuple(range(161)), punctured={7, 9}, shortened=[v for v in range(161) if v not in (7, 9)])
    checks["convert_p2s moves 2"] = sorted(convert_p2s(small, 0.02, 0)) == [7, 9]
    # literal expectation of the stated worked example
    got = initial_budget(4000, 10000, 0.067, F_D)
    checks["p0 == 161 (stated example)"] = got == 161
    bad = [k for k, v in checks.items() if not v]
    detail = f"{len(checks) - len(bad)}/{len(checks)} checks"
    if bad:
        detail += f"; failing: {', '.join(bad)} (initial_budget gives {got}, exact root {P0_EXACT:.4f})"
    record(1, not bad, detail)
    assert not bad, detail


# ---------------------------------------------------------------- criterion 2

def _all_small_matrices():
    """Every 3x6 matrix with column degree 1 or 2 and no empty row."""
    cols = [c for d in (1, 2) for c in itertools.combinations(range(3), d)]
    for pick in itertools.product(range(len(cols)), repeat=6):
        dense = np.zeros((3, 6), dtype=np.uint8)
        for i, c in enumerate(pick):
            dense[list(cols[c]), i] = 1
        if dense.sum(axis=1).min() > 0:
            yield dense


def test_criterion_2_oracle_equivalence():
    rng = np.random.default_rng(2)
    cfg = DecoderConfig(0.2, 8)
    n_mats = syndrome_bad = check_bad = unsound = successes = 0
    for dense in _all_small_matrices():
        n_mats += 1
        h = ParityCheckMatrix.from_dense(dense)
        mset = MatrixSet((h,), 0)
        words = rng.integers(0, 2, (3, 6), dtype=np.uint8)
        for x in words:
            z_ref = (dense.astype(int) @ x) % 2
            if not np.array_equal(syndrome(h, x), z_ref):
                syndrome_bad += 1
        x, y = words[0], words[1]
        z = syndrome(h, x)
        state = init(y, None, cfg, mset)
        if check_syndromes(state, mset, [z]) != np.array_equal((dense.astype(int) @ y) % 2, z):
            check_bad += 1
        if n_mats % 4 == 0:
            if decode_round(state, mset, [z], cfg) is Outcome.SUCCESS:
                successes += 1
                if not np.array_equal((dense.astype(int) @ state.word) % 2, z):
                    unsound += 1
    ok = syndrome_bad == check_bad == unsound == 0
    detail = (
        f"{n_mats} matrices: syndrome mismatches {syndrome_bad}, check_syndromes mismatches {check_bad}, "
        f"unsound successes {unsound} of {successes}"
    )
    record(2, ok, detail)
    assert ok, detail


# ---------------------------------------------------------------- criterion 3

def test_criterion_3_single_matrix_equivalence():
    n, rate, iters = 1000, 0.7, 40
    mats = [construct_set(n, rate, 1, seed=s)[0] for s in range(10)]
    trials = diverged = 0
    for t in range(100):
        h = mats[t % len(mats)]
        mset = MatrixSet((h,), 0)
        rng = np.random.default_rng(1000 + t)
        e = float(rng.uniform(0.02, 0.07))
        x, y, _ = gen_key_pair(n, e, 2000 + t)
        z = syndrome(h, x)
        plan = make_plan(mset, int(rng.integers(0, 60)), t)
        if plan.p0 and t % 2:
            convert_p2s(plan, 0.3, t)
            y[plan.shortened] = x[plan.shortened]
        cfg = DecoderConfig(e)
        a, b = init(y, plan, cfg, mset), init(y, plan, cfg, mset)
        trials += 1
        for _ in range(iters):
            iterate(a, mset, [z])
            iterate_single(b, h, z)
            if not np.array_equal(a.word, b.word):
                diverged += 1
                break
    detail = f"{trials} trials x {iters} iterations, {diverged} with differing hard decisions"
    record(3, diverged == 0 and trials >= 100, detail)
    assert diverged == 0


# ---------------------------------------------------------------- criterion 4

def _counts(h: ParityCheckMatrix, chosen) -> np.ndarray:
    x = np.zeros(h.n_cols, dtype=int)
    x[list(chosen)] = 1
    return h.to_dense().astype(int) @ x


@st.composite
def matrix_sets(draw):
    n = draw(st.integers(10, 48))
    m = draw(st.integers(3, n // 2))
    count = draw(st.integers(1, 4))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    return MatrixSet(tuple(random_matrix(rng, m, n) for _ in range(count)), seed)


_c4 = {"sets": 0, "violations": []}


@settings(max_examples=80, derandomize=True, database=None)
@given(matrix_sets(), st.floats(0.05, 0.6))
def _check_puncture_invariants(mset, delta):
    _c4["sets"] += 1
    bad = _c4["violations"]
    for h in mset:
        if _counts(h, upa(h, mset.seed)).max(initial=0) > 1:
            bad.append("UPA dead check")
    p0 = max(1, mset.n // 2)
    order, tiers = mupa_with_tiers(mset, p0, mset.seed)
    if any(a > b for a, b in zip(tiers, tiers[1:])):
        bad.append("MUPA tiers decrease")
    prefix = [v for v, k in zip(order, tiers) if k == 0]
    if any(_counts(h, prefix).max(initial=0) > 1 for h in mset):
        bad.append("tainted tier-0 prefix")
    plan = make_plan(mset, p0, mset.seed)
    while plan.punctured:
        convert_p2s(plan, delta, 0)
        if plan.p + plan.s != p0:
            bad.append("|P|+|S| drift in plan")


def _pump_rounds(alice, bob) -> tuple[int, int]:
    rounds = drift = 0
    msg = alice.start()
    sender, receiver = alice, bob
    while msg is not None:
        msg = receiver.handle(decode(encode(msg)))
        if receiver is bob:
            rounds += 1
        for party in (alice, bob):
            if party.plan.p + party.plan.s != party.plan.p0:
                drift += 1
        sender, receiver = receiver, sender
    return rounds, drift


def test_criterion_4_puncture_invariants():
    _c4["sets"], _c4["violations"] = 0, []
    _check_puncture_invariants()
    n = 1000
    sets = {r: construct_set(n, r, 3, seed=40) for r in (0.6, 0.7, 0.8)}
    sessions = rounds = drift = 0
    for t in range(12):
        for scheme in ("SRCR", "MRCR"):
            table = sets if scheme == "MRCR" else {r: MatrixSet((s[0],), s.seed) for r, s in sets.items()}
            e = (0.03, 0.05, 0.065)[t % 3]
            x, y, _ = gen_key_pair(n, e, 400 + t)
            cfg = SessionConfig(scheme, table, delta=0.05, shared_seed=t, local_seed=1)
            r, d = _pump_rounds(Alice(x, e, cfg), Bob(y, e, replace(cfg, local_seed=2)))
            sessions, rounds, drift = sessions + 1, rounds + r, drift + d
    bad = sorted(set(_c4["violations"]))
    ok = not bad and drift == 0 and _c4["sets"] >= 50
    detail = (
        f"{_c4['sets']} random matrix sets, violations: {bad or 'none'}; "
        f"{sessions} sessions / {rounds} rounds with |P|+|S| drift {drift}"
    )
    record(4, ok, detail)
    assert ok, detail


# ------------------------------------------------------------ criteria 5 to 8

@pytest.fixture(scope="module")
def sweeps(tmp_path_factory):
    cache = os.environ.get("RECON_MATRIX_CACHE") or str(tmp_path_factory.mktemp("matrices"))
    out = {}
    for seed in SEEDS:
        base = SweepConfig(
            schemes=("SRCR", "MRCR"), ns=(5000,), snrs=SNRS, fds=(F_D,), deltas=(0.02,),
            trials=TRIALS, ul=100, seed=seed, cache_dir=cache,
        )
        out[seed, "base"] = run_sweep(base)
        out[seed, "d2"] = run_sweep(replace(base, schemes=("MRCR",), deltas=(0.2,)))
    return out


def _pooled(sweeps, kind, scheme):
    """Per-SNR successful-trial f values and per-seed throughput."""
    f = {s: [] for s in SNRS}
    t = {s: [] for s in SNRS}
    sr = {}
    for seed in SEEDS:
        res = sweeps[seed, kind]
        for p in res.points:
            if p["scheme"] != scheme:
                continue
            t[p["snr"]].append(p["throughput"])
            sr[p["snr"]] = p["sr_f"]
        for r in res.records:
            if r.scheme == scheme and r.success:
                f[r.snr].append(r.f)
    return f, t, sr


def _mean(v):
    return float(np.mean(v)) if v else float("nan")


def test_criterion_5_efficiency_ordering(sweeps):
    f_mr, _, sr = _pooled(sweeps, "base", "MRCR")
    f_sr, _, _ = _pooled(sweeps, "base", "SRCR")
    lines, ok = [], True
    for s in SNRS:
        a, b = _mean(f_mr[s]), _mean(f_sr[s])
        # a scheme with no successful trial has no defined mean f, so the
        # ordering cannot hold at that point
        good = bool(f_mr[s]) and bool(f_sr[s]) and a <= b + 0.005 and a <= sr[s] and b <= sr[s]
        ok &= good
        lines.append(
            f"snr {s:.2f}: f MRCR {a:.4f} ({len(f_mr[s])} ok), SRCR {b:.4f} ({len(f_sr[s])} ok), "
            f"SR {sr[s]:.4f} -> {'pass' if good else 'fail'}"
        )
    passed = sum(line.endswith("pass") for line in lines)
    record(5, ok, f"{passed}/{len(SNRS)} SNR points ordered (seeds {SEEDS}, {TRIALS} trials each)", lines)
    assert ok


def test_criterion_6_throughput_ordering(sweeps):
    _, t_mr, _ = _pooled(sweeps, "base", "MRCR")
    _, t_sr, _ = _pooled(sweeps, "base", "SRCR")
    _, t_d2, _ = _pooled(sweeps, "d2", "MRCR")
    lines, ok = [], True
    for s in SNRS:
        mr, sr_, d2 = (np.asarray(v) for v in (t_mr[s], t_sr[s], t_d2[s]))
        vs_sr = mr.mean() > sr_.mean()
        vs_delta = d2.mean() > mr.mean()
        ok &= vs_sr and vs_delta
        lines.append(
            f"snr {s:.2f}: T MRCR {mr.mean():.0f}±{mr.std():.0f}, SRCR {sr_.mean():.0f}±{sr_.std():.0f}, "
            f"MRCR d=0.2 {d2.mean():.0f}±{d2.std():.0f} -> MRCR>SRCR {'pass' if vs_sr else 'fail'}, "
            f"d=0.2>d=0.02 {'pass' if vs_delta else 'fail'}"
        )
    both = sum("SRCR pass" in line and line.endswith("pass") for line in lines)
    record(6, ok, f"{both}/{len(SNRS)} SNR points with both orderings (mean over {len(SEEDS)} seeds)", lines)
    assert ok


def test_criterion_7_first_round_efficiency(sweeps):
    mrcr = [r for seed in SEEDS for r in sweeps[seed, "base"].records if r.scheme == "MRCR"]
    fs = [r.f for r in mrcr if r.success and r.s_final == 0]
    inside = [f for f in fs if F_D - 0.01 <= f <= F_D]
    ok = bool(fs) and len(inside) == len(fs)
    detail = (
        f"{len(inside)}/{len(fs)} first-round MRCR successes with f in [{F_D - 0.01:.2f}, {F_D:.2f}]"
        f" ({len(mrcr)} MRCR trials, {sum(r.success for r in mrcr)} successes)"
    )
    # the efficiency a first-round success would report, one value per point
    lines = []
    for snr in SNRS:
        r = next(r for r in mrcr if r.snr == snr)
        f1 = efficiency(check_count(r.n, r.rate), r.n, r.p0, 0, r.e)
        lines.append(f"snr {snr:.2f}: rate {r.rate}, p0 {r.p0}, first-round f would be {f1:.5f}")
    record(7, ok, detail, lines)
    assert ok, detail


def test_criterion_8_end_to_end_correctness(sweeps):
    records = [r for res in sweeps.values() for r in res.records]
    ok_trials = [r for r in records if r.success]
    mismatches = sum(not r.keys_match for r in ok_trials)
    ok = len(records) >= 1000 and mismatches == 0
    detail = f"{len(records)} trials, {len(ok_trials)} successful, {mismatches} key mismatches"
    record(8, ok, detail)
    assert ok, detail


# ---------------------------------------------------------------- criterion 9

def test_criterion_9_determinism(tmp_path, capsys):
    cfg = tmp_path / "sweep.json"
    cfg.write_text(json.dumps({
        "schemes": ["SR", "SRCR", "MRCR"], "ns": [1000], "snrs": [4.0, 6.5], "trials": 10, "seed": 5,
        "cache_dir": str(tmp_path / "cache"),
    }))
    digests = []
    for run in ("a", "b"):
        code = cli_main(["sweep", "--config", str(cfg), "--out", str(tmp_path / run), "--quiet"])
        assert code == 0
        digests.append(json.loads(capsys.readouterr().out)["digest"])
    ok = digests[0] == digests[1]
    record(9, ok, f"digests {digests[0][:12]} / {digests[1][:12]}")
    assert ok
