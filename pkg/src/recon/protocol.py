"""Alice/Bob reconciliation sessions for SR, MR, SRCR and MRCR.

Both parties derive the code rate, puncture budget and punctured positions
from the shared seed, so only syndromes, shortened-bit reveals, Bob's
verdicts and aborts go over the wire. Parties are message driven: feed a
received message to :meth:`handle` and send back whatever it returns.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from . import decoder
from .errors import BerOutOfRange, ParameterError, ReconError, TransportError
from .ldpc import MatrixSet, syndrome
from .metrics import binary_entropy, efficiency
from .puncture import PuncturePlan, convert_p2s, initial_budget, make_plan
from .transport import Abort, Message, ShortenReveal, SyndromeBundle, Verdict, decode, encode

log = logging.getLogger(__name__)


class Scheme(str, enum.Enum):
    SR = "SR"
    MR = "MR"
    SRCR = "SRCR"
    MRCR = "MRCR"

    @property
    def multi(self) -> bool:
        return self in (Scheme.MR, Scheme.MRCR)

    @property
    def rate_compatible(self) -> bool:
        return self in (Scheme.SRCR, Scheme.MRCR)


@dataclass(frozen=True)
class SessionConfig:
    scheme: Scheme
    rate_table: Mapping[float, MatrixSet]
    f_d: float = 1.1
    delta: float = 0.02
    max_iters: int = 100
    shared_seed: int = 0
    local_seed: int = 0
    n_matrices: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not self.rate_table:
            raise ParameterError("rate table is empty")
        sizes = {len(s) for s in self.rate_table.values()}
        n_mat = self.n_matrices if self.n_matrices is not None else max(sizes)
        object.__setattr__(self, "n_matrices", n_mat)
        if sizes != {n_mat}:
            raise ParameterError(f"every matrix set must hold N={n_mat} matrices, got {sorted(sizes)}")
        if self.scheme.multi and n_mat < 2:
            raise ParameterError(f"{self.scheme.value} needs N >= 2 matrices")
        if not self.scheme.multi and n_mat != 1:
            raise ParameterError(f"{self.scheme.value} needs exactly one matrix")
        if not 0.0 < self.delta < 1.0:
            raise ParameterError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.f_d > 1.0:
            raise ParameterError(f"f_d must exceed 1, got {self.f_d}")
        if self.max_iters < 1:
            raise ParameterError("max_iters must be >= 1")

    @property
    def rates(self) -> list[float]:
        return sorted(self.rate_table)


def choose_rate(e: float, f_d: float, rates) -> float:
    """Largest rate whose redundancy ``1 - R0`` still covers ``h(e) f_d``."""
    rates = sorted(rates)
    if not rates:
        raise ParameterError("rate table is empty")
    need = binary_entropy(e) * f_d
    admissible = [r for r in rates if 1.0 - r >= need]
    if not admissible:
        raise BerOutOfRange(f"e={e} needs redundancy {need:.4f}, lowest rate offers {1 - rates[0]:.4f}")
    return admissible[-1]


@dataclass
class SessionResult:
    success: bool
    key: np.ndarray | None
    rounds: int
    rate: float | None
    p0: int
    s_final: int
    disclosed_bits: int
    f: float | None
    iterations: int = 0
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "rounds": self.rounds,
            "rate": self.rate,
            "p0": self.p0,
            "s_final": self.s_final,
            "disclosed_bits": self.disclosed_bits,
            "f": self.f,
            "iterations": self.iterations,
            "key_length": None if self.key is None else int(self.key.size),
            "reason": self.reason,
        }


@dataclass
class _Setup:
    rate: float
    mset: MatrixSet
    p0: int
    plan: PuncturePlan


def _derive(e: float, cfg: SessionConfig) -> _Setup:
    rate = choose_rate(e, cfg.f_d, cfg.rates)
    mset = cfg.rate_table[rate]
    p0 = initial_budget(mset.m, mset.n, e, cfg.f_d) if cfg.scheme.rate_compatible else 0
    plan = make_plan(mset, p0, np.random.SeedSequence([cfg.shared_seed, 1]))
    return _Setup(rate, mset, p0, plan)


class Party:
    """State common to both roles."""

    role = "?"

    def __init__(self, key, e: float, cfg: SessionConfig):
        self.cfg = cfg
        self.e = e
        key = np.asarray(key, dtype=np.uint8)
        self.rounds = 0
        self.iterations = 0
        self.result: SessionResult | None = None
        self.transcript: list[tuple[str, bytes]] = []
        self._rng = np.random.default_rng(np.random.SeedSequence([cfg.local_seed, 2]))
        try:
            self.setup = _derive(e, cfg)
        except (BerOutOfRange, ParameterError) as exc:
            self.setup = None
            self.word = key.copy()
            self._finish(False, f"rate inadmissible: {exc}")
            return
        if key.shape != (self.setup.mset.n,):
            raise ParameterError(f"key length {key.shape} does not match n={self.setup.mset.n}")
        self.word = key.copy()
        order = np.asarray(self.setup.plan.order, dtype=np.int64)
        # local randomness stands in for each party's own TRNG
        self.word[order] = self._rng.integers(0, 2, order.size, dtype=np.uint8)

    @property
    def done(self) -> bool:
        return self.result is not None

    @property
    def plan(self) -> PuncturePlan:
        return self.setup.plan

    def _finish(self, success: bool, reason: str = "") -> None:
        st = self.setup
        if st is None:
            self.result = SessionResult(False, None, 0, None, 0, 0, 0, None, 0, reason)
            return
        m, n = st.mset.m, st.mset.n
        s = st.plan.s
        key = f = None
        if success:
            keep = np.ones(n, dtype=bool)
            keep[list(st.plan.order)] = False
            key = self.word[keep].copy()
            f = efficiency(m, n, st.p0, s, self.e)
        self.result = SessionResult(
            success=success,
            key=key,
            rounds=self.rounds,
            rate=st.rate,
            p0=st.p0,
            s_final=s,
            disclosed_bits=len(st.mset) * m + s,
            f=f,
            iterations=self.iterations,
            reason=reason,
        )

    def start(self) -> Message | None:
        return None

    def handle(self, msg: Message) -> Message | None:
        raise NotImplementedError

    def transcript_jsonl(self) -> str:
        return "".join(
            json.dumps({"party": self.role, "dir": d, "frame": frame.hex()}) + "\n"
            for d, frame in self.transcript
        )


class Alice(Party):
    role = "alice"

    def __init__(self, key, e, cfg):
        super().__init__(key, e, cfg)
        self.syndromes = None
        if self.setup is not None:
            self.syndromes = tuple(syndrome(h, self.word) for h in self.setup.mset)

    def start(self) -> Message | None:
        if self.done:
            return None
        return SyndromeBundle(self.syndromes)

    def handle(self, msg: Message) -> Message | None:
        if isinstance(msg, Abort):
            self._finish(False, f"peer aborted: {msg.reason}")
            return None
        if not isinstance(msg, Verdict):
            raise TransportError(f"alice cannot handle {type(msg).__name__}")
        self.rounds += 1
        if msg.success:
            self._finish(True)
            return None
        if not self.cfg.scheme.rate_compatible:
            self._finish(False, "decoding failed")
            return None
        if not self.plan.punctured:
            self._finish(False, "punctured bits exhausted")
            return Abort("punctured bits exhausted")
        moved = convert_p2s(self.plan, self.cfg.delta, self._rng)
        return ShortenReveal(tuple((p, int(self.word[p])) for p in moved))


class Bob(Party):
    role = "bob"

    def __init__(self, key, e, cfg, trace=None):
        super().__init__(key, e, cfg)
        self.syndromes = None
        self.trace = trace
        self.dcfg = decoder.DecoderConfig(e, cfg.max_iters) if self.setup is not None else None

    def _decode(self, error_estimate: float) -> Verdict:
        st = self.setup
        state = decoder.init(self.word, st.plan, self.dcfg, st.mset)
        state.error_estimate = error_estimate
        outcome = decoder.decode_round(
            state, st.mset, self.syndromes, self.dcfg, self.trace, round_index=self.rounds + 1
        )
        self.word = state.word
        self.iterations += state.iterations
        self.rounds += 1
        log.debug("round %d: %s after %d iterations", self.rounds, outcome.value, state.iterations)
        if outcome is decoder.Outcome.SUCCESS:
            self._finish(True)
            return Verdict(True)
        if not self.cfg.scheme.rate_compatible:
            self._finish(False, "decoding failed")
        return Verdict(False)

    def handle(self, msg: Message) -> Message | None:
        if isinstance(msg, Abort):
            self._finish(False, msg.reason)
            return None
        st = self.setup
        if isinstance(msg, SyndromeBundle):
            if self.syndromes is not None:
                raise TransportError("syndromes received twice")
            if len(msg.syndromes) != len(st.mset) or any(z.size != st.mset.m for z in msg.syndromes):
                raise TransportError("syndrome bundle does not match the agreed matrices")
            self.syndromes = msg.syndromes
            return self._decode(self.e)
        if isinstance(msg, ShortenReveal):
            if self.syndromes is None:
                raise TransportError("reveal before syndromes")
            positions = [p for p, _ in msg.pairs]
            if not set(positions) <= st.plan.punctured or len(set(positions)) != len(positions):
                raise TransportError("revealed positions are not currently punctured")
            st.plan.punctured.difference_update(positions)
            st.plan.shortened.extend(positions)
            for p, b in msg.pairs:
                self.word[p] = b
            probe = decoder.init(self.word, st.plan, self.dcfg, st.mset)
            return self._decode(decoder.estimate_error_rate(probe, st.mset, self.syndromes))
        raise TransportError(f"bob cannot handle {type(msg).__name__}")


def run_party(party: Party, endpoint) -> SessionResult:
    """Drive one party over a transport endpoint until it finishes."""
    first = party.start()
    if first is not None:
        party.transcript.append(("send", endpoint.send(first)))
    while not party.done:
        msg, frame = endpoint.recv()
        party.transcript.append(("recv", frame))
        reply = party.handle(msg)
        if reply is not None:
            party.transcript.append(("send", endpoint.send(reply)))
    return party.result


def run_session(
    x, y, e: float, cfg: SessionConfig, bob_cfg: SessionConfig | None = None, trace=None
) -> tuple[SessionResult, SessionResult, Alice, Bob]:
    """Run both parties in this thread, passing every message through its byte framing.

    ``bob_cfg`` defaults to ``cfg`` with a different private seed.
    """
    if bob_cfg is None:
        bob_cfg = replace(cfg, local_seed=int(np.random.SeedSequence([cfg.local_seed, 3]).generate_state(1)[0]))
    alice = Alice(x, e, cfg)
    bob = Bob(y, e, bob_cfg, trace)
    msg = alice.start()
    sender, receiver = alice, bob
    while msg is not None:
        frame = encode(msg)
        sender.transcript.append(("send", frame))
        receiver.transcript.append(("recv", frame))
        msg = receiver.handle(decode(frame))
        sender, receiver = receiver, sender
    if not (alice.done and bob.done):
        raise ReconError("session stalled before both parties finished")
    return alice.result, bob.result, alice, bob
